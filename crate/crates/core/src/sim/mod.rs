//! Seeded simulation settings and a Monte Carlo driver.

mod campaign;
mod config;
mod generate;

pub use campaign::{
    evaluate, run_campaign, Method, MethodMetrics, MethodOutcome, Metric, MetricsReport,
};
pub use config::{
    AllNullParams, GroupParams, GroupSpec, KnockoffParams, NormalParams, Setting, SettingParams,
    SimulationConfig, StructParams,
};
pub use generate::{generate, replicate_rng, toy_example, Instance};

/// Sizes the global worker pool from `EVMT_THREADS`, if set.
///
/// Returns the thread count in effect. Calling it after the pool exists
/// leaves the pool unchanged.
pub fn configure_threads() -> usize {
    if let Some(k) = std::env::var("EVMT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&k| k > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    rayon::current_num_threads()
}
