pub mod engine;
pub mod error;
pub mod quantum;
pub mod resources;
pub mod workload;
pub mod scheduler;
pub mod config;
pub mod metrics;
pub mod sim;
pub mod par;
pub mod experiments;
