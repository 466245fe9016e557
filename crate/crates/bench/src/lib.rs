//! Load generation and measurement for the query gateway.
//!
//! A [`Testbed`] runs a gateway, a client identity and any number of peers
//! in one process, connected through the in-memory transport. [`run`]
//! drives one open-loop [`LoadScenario`] against it and returns a
//! [`RunReport`] with latency quartiles, successful throughput, drop
//! counts and queue-depth samples; [`sweep`] repeats that over a list of
//! offered rates. [`output`] turns reports into JSON, CSV and SVG charts.

pub mod load;
pub mod output;
pub mod plot;
pub mod report;
pub mod testbed;

pub use load::{calibrate, launch_for, run, run_scenario, sweep, wait_idle, LoadScenario, Protocol, RunError, SweepError};
pub use report::{quantile, RunReport};
pub use testbed::{listing_query, LaunchError, Seeded, Testbed, TestbedConfig};
