//! Shared fixtures for the pipeline benchmarks.

use botscan::sample::{sample_null, Density, ModelParams, SampleOutput};

/// Null sample at the scale the power studies run at, with a fixed seed.
pub fn null_fixture(n: usize, d: u32, avg_degree: f64) -> SampleOutput {
    let params = ModelParams::new(n, d, Density::AverageDegree(avg_degree), 0);
    sample_null(&params, 0xB0B).expect("feasible fixture parameters")
}
