//! Personalized adaptive-clipping differentially private federated learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: models, datasets and per-example gradients
//! - [`mechanism`]: per-example clipping, averaging and Gaussian perturbation
//! - [`accountant`]: Rényi-DP composition over each client's participation ledger
//! - [`schedule`]: the budget-conditioned, round-wise clipping bound
//! - [`fitting`]: offline grid simulation and the quadratic budget-to-threshold fit
//! - [`federation`]: the federated training loop and its clipping policies
//!
//! All randomness flows through keyed streams from [`rng`], so every result
//! is a pure function of its configuration and master seed.

pub mod accountant;
pub mod error;
pub mod federation;
pub mod fitting;
pub mod fmt;
pub mod mechanism;
pub mod numerics;
pub mod rng;
pub mod schedule;

pub use accountant::{AccountantConfig, LedgerEntry, ParticipationLedger};
pub use error::{Error, Result};
pub use federation::{ClientProfile, ClippingPolicy, FederationConfig, RoundRecord};
pub use fitting::{FitResult, GridSpec, PerformanceMatrix};
pub use mechanism::{ClipBound, NoiseSpec};
pub use numerics::{Example, Label, LocalDataset, ModelSpec, ParamVector};
pub use schedule::ScheduleParams;
