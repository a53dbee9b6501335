//! Post-selection bias correction for A/B test readouts.

pub mod cmle;
pub mod error;
pub mod evalreport;
pub mod fitting;
pub mod io;
pub mod kv;
pub mod localh1;
pub mod methods;
pub mod normal;
pub mod optimize;
pub mod posterior;
pub mod prior;
pub mod quadrature;
pub mod readout;
pub mod simlab;
pub mod splitreg;

pub use error::{Error, Result};
pub use posterior::PosteriorSummary;
pub use prior::{PriorFamily, PriorModel};
pub use readout::{ExperimentReadout, SelectionRule};
