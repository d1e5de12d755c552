//! Clustering of categorical data with finite mixtures of multinomials.
//!
//! Two routes to the number of clusters are provided: EM-MML ([`mml`]),
//! which estimates the mixture and prunes components in a single run by
//! minimizing a message-length objective, and classical EM fitted over a
//! range of K followed by an information criterion ([`criteria`]).
//! [`synth`] plants mixtures with controlled separation, [`eval`] runs the
//! comparison experiments and association profiling, and [`io`] holds the
//! file formats.

pub mod criteria;
pub mod dataset;
pub mod em;
pub mod error;
pub mod eval;
pub mod io;
pub mod mml;
pub mod model;
pub mod rng;
pub mod synth;

pub use criteria::{score, select_by_criterion, Criterion, CriterionScore, SelectionConfig, SelectionResult};
pub use dataset::{validate_dataset, CategoricalDataset, RawTable};
pub use em::{e_step, fit_em, log_likelihood, m_step_ml, EmConfig, InitSpec};
pub use error::{MixError, Result};
pub use eval::{cramers_v, hard_assign, Method};
pub use mml::{component_annihilation_sweep, fit_em_mml, m_step_mml_alpha, message_length, MmlConfig, MmlResult};
pub use model::{FitReport, MixtureModel, ResponsibilityMatrix};
pub use synth::{generate, separation, GenSpec, PlantedMixture};
