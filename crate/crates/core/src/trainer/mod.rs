//! Desk-scale training harness: synthetic data, a linear classifier with a
//! spectral head, per-step conditioning traces and the two-step simulator.

mod data;
mod gradcheck;
mod model;
mod trace;
mod train;
mod twostep;

pub use data::{synth_data, synth_maps, Dataset, Split};
pub use gradcheck::{analytic_gradients, gradcheck, rel_err, GradcheckReport};
pub use model::{accuracy, batch_loss, HeadMode, PreSvdParam, ToyModel};
pub use trace::{num_json, ordering_report, percentile, StepRecord, TrainTrace, TAIL_FRACTION};
pub use train::{train, TrainOptions, RETRY_JITTER};
pub use twostep::{two_step_sim, TwoStep, EXPANSION_TOL};
