//! Metrics, synthetic pairs, volume and config I/O, and the registration
//! driver behind the command-line tool.

pub mod config;
pub mod derivcheck;
pub mod metrics;
pub mod run;
pub mod synth;
pub mod volume;

pub use config::RunConfig;
pub use metrics::{dice, mse_rel, Labels};
pub use run::{register, run, RegistrationReport};
pub use synth::{synthesize, synthesize_pair, PairKind, SynthConfig};
