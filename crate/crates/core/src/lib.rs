pub mod clustering;
pub mod datasets;
pub mod error;
pub mod linear_theory;
pub mod network;
pub mod numerics;
pub mod rng;
pub mod verify;

pub use clustering::Partition;
pub use datasets::{Covariance, Dataset, GaussianMixtureSpec, MixtureTask};
pub use error::{Error, Result};
pub use network::{Activation, ForwardTrace, MlpParams, TrainConfig, TrainRecord};
pub use numerics::{Matrix, SpectralReport, SvdResult};
pub use verify::{CheckReport, CheckRole, CheckStatus};
