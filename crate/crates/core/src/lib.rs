//! Latent-trajectory models for multivariate binary longitudinal data.
//!
//! A shared latent intensity curve (an unnormalized Beta kernel whose shape
//! depends on episode duration) drives `K` binary responses through
//! polynomial logit links. Coefficients are estimated by blocked Fisher
//! scoring of the generalized estimating equations with a sandwich variance,
//! polynomial orders are chosen by backward QIC_u search, and fit is checked
//! with Hosmer-Lemeshow statistics and predicted-vs-empirical curves.

pub mod data;
pub mod error;
pub mod family;
pub mod gee;
pub mod gof;
pub mod linalg;
pub mod logistic;
pub mod model;
pub mod plot;
pub mod report;
pub mod selection;
pub mod simulate;

pub use data::{MblDataset, Subject};
pub use error::{MblError, Result};
pub use family::{MeanFamily, MeanModel, SharedBetaModel, SharedBetaSpec};
pub use gee::{fit, BlockingScheme, CorrStructure, FitConfig, FitResult, WorkingCorrelation};
pub use model::{ModelSpec, ParamVector};
