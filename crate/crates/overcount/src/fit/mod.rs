//! Maximum-likelihood fitters for the six families and AIC/BIC scoring.
//!
//! MN has a closed-form MLE. DM, NM, GDM and RCM are fitted by direct
//! quasi-Newton on the log-likelihood over transformed parameters; the DDM
//! uses a generalized EM algorithm (see [`ddm`]). Parameter counts follow
//! the conventions of the source models (MN counts p, DDM counts
//! p(K+1)+K); the conventional free counts differ by one.

mod ddm;
mod direct;

pub use ddm::{
    ddm_scores, e_step, fit_ddm, fit_ddm_from, m_step_weights, select_k, Responsibilities,
    SelectKReport, SelectKRow,
};
pub use direct::{fit_dm, fit_gdm, fit_nm, fit_rcm};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    ddm_logpmf, dm_logpmf, gdm_logpmf, mn_logpmf, nm_logpmf, rcm_logpmf, CountMatrix, FamilyParams,
    MnParams,
};

/// Stopping and restart configuration shared by every iterative fitter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// EM stop: absolute change in the observed-data log-likelihood.
    pub tol_loglik: f64,
    pub max_em_iter: usize,
    pub n_starts: usize,
    pub seed: u64,
    /// Iteration cap for each quasi-Newton M-step call (2000 for direct
    /// fits, which reuse this config).
    pub m_step_max_iter: usize,
    /// Overparameterization warning threshold: flag fits whose parameter
    /// count exceeds this multiple of the observation count.
    pub param_cap_per_obs: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tol_loglik: 1e-6,
            max_em_iter: 500,
            n_starts: 5,
            seed: 0,
            m_step_max_iter: 500,
            param_cap_per_obs: 2.0,
        }
    }
}

/// A fitted model with its likelihood trace and information criteria.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FamilyParams,
    pub loglik: f64,
    /// Per-iteration observed-data log-likelihood (nondecreasing for EM).
    pub trace: Vec<f64>,
    pub converged: bool,
    pub n_params: usize,
    pub aic: f64,
    pub bic: f64,
    /// Set when the parameter count exceeds the configured cap relative to
    /// the number of observations.
    #[serde(default)]
    pub overparameterized: bool,
}

impl FitResult {
    pub(crate) fn build(
        params: FamilyParams,
        loglik: f64,
        trace: Vec<f64>,
        converged: bool,
        n_params: usize,
        n_obs: usize,
    ) -> FitResult {
        let (aic, bic) = information_criteria(loglik, n_params, n_obs);
        FitResult {
            params,
            loglik,
            trace,
            converged,
            n_params,
            aic,
            bic,
            overparameterized: false,
        }
    }
}

/// Largest row sum and per-column largest count; sizes the prefix tables
/// the iterative fitters share across rows within one objective evaluation.
pub(crate) fn count_maxima(data: &CountMatrix) -> (u64, Vec<u64>) {
    let mut max_m = 0;
    let mut max_y = vec![0u64; data.p()];
    for i in 0..data.n() {
        max_m = max_m.max(data.row_sum(i));
        for (mx, &v) in max_y.iter_mut().zip(data.row(i)) {
            *mx = (*mx).max(v);
        }
    }
    (max_m, max_y)
}

/// aic = −2ℓ + 2k, bic = −2ℓ + k ln n.
pub fn information_criteria(loglik: f64, n_params: usize, n: usize) -> (f64, f64) {
    let k = n_params as f64;
    let aic = -2.0 * loglik + 2.0 * k;
    let bic = -2.0 * loglik + k * (n as f64).ln();
    (aic, bic)
}

/// Log-pmf of a single observation under any family.
pub fn logpmf(params: &FamilyParams, obs: &crate::models::CountVector) -> f64 {
    match params {
        FamilyParams::Mn(p) => mn_logpmf(p, obs),
        FamilyParams::Dm(p) => dm_logpmf(p, obs),
        FamilyParams::Rcm(p) => rcm_logpmf(p, obs),
        FamilyParams::Nm(p) => nm_logpmf(p, obs),
        FamilyParams::Gdm(p) => gdm_logpmf(p, obs),
        FamilyParams::Ddm(p) => ddm_logpmf(p, obs),
    }
}

/// Σ_i log pmf(y_i), each row evaluated at its own total m_i.
pub fn loglik(params: &FamilyParams, data: &CountMatrix) -> f64 {
    (0..data.n())
        .map(|i| logpmf(params, &data.row_vector(i)))
        .sum()
}

/// Closed-form multinomial MLE: π̂_j = Σ_i y_ij / Σ_i m_i.
pub fn fit_mn(data: &CountMatrix) -> Result<FitResult> {
    let p = data.p();
    let total: u64 = (0..data.n()).map(|i| data.row_sum(i)).sum();
    if total == 0 {
        return Err(Error::InvalidData("all counts are zero".into()));
    }
    let mut pi = vec![0.0; p];
    for row in data.rows() {
        for (s, &v) in pi.iter_mut().zip(row) {
            *s += v as f64;
        }
    }
    for v in &mut pi {
        *v /= total as f64;
    }
    let params = FamilyParams::Mn(MnParams::new(pi)?);
    let ll = loglik(&params, data);
    Ok(FitResult::build(params, ll, vec![ll], true, p, data.n()))
}

/// Table-style parameter counts: MN p, DM p+1, RCM p+1, NM p+2, GDM 2p−1,
/// DDM p(K+1)+K.
pub fn family_n_params(family: &FamilyParams) -> usize {
    let p = family.p();
    match family {
        FamilyParams::Mn(_) => p,
        FamilyParams::Dm(_) => p + 1,
        FamilyParams::Rcm(_) => p + 1,
        FamilyParams::Nm(_) => p + 2,
        FamilyParams::Gdm(_) => 2 * p - 1,
        FamilyParams::Ddm(d) => p * (d.k() + 1) + d.k(),
    }
}

/// A fittable model family, DDM carrying its component count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelSpec {
    Mn,
    Dm,
    Rcm,
    Nm,
    Gdm,
    Ddm { k: usize },
}

impl ModelSpec {
    /// Label used in reports: "mn", …, "ddm_3".
    pub fn label(&self) -> String {
        match self {
            ModelSpec::Mn => "mn".into(),
            ModelSpec::Dm => "dm".into(),
            ModelSpec::Rcm => "rcm".into(),
            ModelSpec::Nm => "nm".into(),
            ModelSpec::Gdm => "gdm".into(),
            ModelSpec::Ddm { k } => format!("ddm_{k}"),
        }
    }

    pub fn parse(s: &str) -> Result<ModelSpec> {
        match s {
            "mn" => Ok(ModelSpec::Mn),
            "dm" => Ok(ModelSpec::Dm),
            "rcm" => Ok(ModelSpec::Rcm),
            "nm" => Ok(ModelSpec::Nm),
            "gdm" => Ok(ModelSpec::Gdm),
            other => {
                if let Some(k) = other.strip_prefix("ddm_") {
                    let k: usize = k.parse().map_err(|_| {
                        Error::InvalidParameter(format!("bad ddm component count in '{other}'"))
                    })?;
                    Ok(ModelSpec::Ddm { k })
                } else {
                    Err(Error::InvalidParameter(format!("unknown model '{other}'")))
                }
            }
        }
    }
}

/// Fits any model spec with one entry point.
pub fn fit_model(spec: ModelSpec, data: &CountMatrix, config: &FitConfig) -> Result<FitResult> {
    match spec {
        ModelSpec::Mn => fit_mn(data),
        ModelSpec::Dm => fit_dm(data, config),
        ModelSpec::Rcm => fit_rcm(data, config),
        ModelSpec::Nm => fit_nm(data, config),
        ModelSpec::Gdm => fit_gdm(data, config),
        ModelSpec::Ddm { k } => fit_ddm(data, k, config),
    }
}
