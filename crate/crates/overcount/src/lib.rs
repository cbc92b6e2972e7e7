//! Likelihood-based models for overdispersed multivariate count data.
//!
//! Six model families — multinomial (MN), Dirichlet-multinomial (DM),
//! random-clumped multinomial (RCM), negative multinomial (NM), generalized
//! Dirichlet-multinomial (GDM) and the deep Dirichlet-multinomial mixture
//! (DDM) — with log-space pmf evaluation, analytic moments, seeded sampling,
//! maximum-likelihood fitting (generalized EM plus constrained quasi-Newton
//! for the DDM), AIC/BIC model selection and a simulation-study harness.

pub mod error;
pub mod fit;
pub mod io;
pub mod models;
pub mod optim;
pub mod sim;
pub mod specfun;
pub mod util;

pub use error::{Error, Result};
