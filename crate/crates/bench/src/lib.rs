pub mod appendix_a;
pub mod appendix_b;
pub mod config;
pub mod record;
pub mod suite;
pub mod sweeps;
