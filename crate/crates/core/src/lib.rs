//! Joint copula-based Markov models for bivariate ordinal panel time series.
//!
//! Two ordinal series observed on the same units (the male and female
//! partner of a couple) each follow a first-order Markov chain whose
//! transitions come from a serial copula on an ordinal regression margin. A
//! coupling copula joins the two conditional-on-past distributions at every
//! wave. The crate provides the likelihoods, staged maximum-likelihood
//! estimation with numerical standard errors, copula family selection,
//! Vuong's test, and an exact simulator.

pub mod copula;
pub mod coupling;
pub mod error;
pub mod estimation;
pub mod io;
pub mod margin;
pub mod markov;
pub mod optim;
pub mod panel;
mod quad;
pub mod selection;
pub mod simulate;
pub mod special;
pub mod sum;

pub use copula::{CopulaFamily, CopulaSpec, CopulaTemplate};
pub use coupling::{loglik_joint, JointModelParams, PrevState};
pub use error::{Error, Result};
pub use estimation::{fit_stagewise, FitOptions, FitReport, ModelFamilies};
pub use io::{load_csv, write_csv, write_report, RunConfig};
pub use margin::{loglik_indep, LinkFunction, MarginalParams};
pub use markov::{loglik_markov, SerialModel};
pub use optim::OptimizerSettings;
pub use panel::{Couple, Gender, OrdinalPanel, Wave};
pub use selection::{vuong_test, CandidateSet, VuongResult};
pub use simulate::{simulate_panel, SimDesign};
pub use sum::Likelihood;
