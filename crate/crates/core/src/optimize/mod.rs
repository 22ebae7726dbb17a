//! Losses, analytic gradients and the fitting loop.

mod densify;
mod fit;
mod grad;
mod losses;

pub use densify::densify_and_prune;
pub use fit::{
    backward, fit, fit_logged, train_log_csv, write_train_log, Evaluation, FitOutput, LossBreakdown, OptimConfig,
    TrainLogRow,
};
pub use grad::GaussianGrad;
pub use losses::{loss_geometric, loss_semantic, loss_sky, visible_in_frame, EPS_LOG};
