use proptest::test_runner::{Config, RngSeed};

/// Fixed-seed configuration, so every run checks the same cases.
pub fn cases(n: u32, seed: u64) -> Config {
    Config { cases: n, rng_seed: RngSeed::Fixed(seed), failure_persistence: None, ..Config::default() }
}
