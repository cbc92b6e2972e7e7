//! Parameter sets for the six model families, validated at construction.
//!
//! Probability vectors whose sum deviates from 1 by at most 1e-9 are
//! renormalized (CSV/JSON round-tripping); larger deviations are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_SUM_TOL: f64 = 1e-9;

fn validate_prob_vec(name: &str, pi: &[f64], min_len: usize) -> Result<Vec<f64>> {
    if pi.len() < min_len {
        return Err(Error::InvalidParameter(format!(
            "{name} needs at least {min_len} entries, got {}",
            pi.len()
        )));
    }
    for &v in pi {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{name} entries must lie in [0,1], got {v}"
            )));
        }
    }
    let sum: f64 = pi.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::InvalidParameter(format!(
            "{name} must sum to 1, got {sum}"
        )));
    }
    Ok(pi.iter().map(|v| v / sum).collect())
}

fn validate_positive(name: &str, xs: &[f64]) -> Result<()> {
    for &v in xs {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{name} entries must be positive and finite, got {v}"
            )));
        }
    }
    Ok(())
}

/// Multinomial success probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MnParamsRaw")]
pub struct MnParams {
    pi: Vec<f64>,
}

#[derive(Deserialize)]
struct MnParamsRaw {
    pi: Vec<f64>,
}

impl TryFrom<MnParamsRaw> for MnParams {
    type Error = Error;
    fn try_from(raw: MnParamsRaw) -> Result<Self> {
        MnParams::new(raw.pi)
    }
}

impl MnParams {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        let pi = validate_prob_vec("pi", &pi, 2)?;
        Ok(MnParams { pi })
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn p(&self) -> usize {
        self.pi.len()
    }
}

/// Dirichlet-multinomial concentration parameters θ, all positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DmParamsRaw")]
pub struct DmParams {
    theta: Vec<f64>,
}

#[derive(Deserialize)]
struct DmParamsRaw {
    theta: Vec<f64>,
}

impl TryFrom<DmParamsRaw> for DmParams {
    type Error = Error;
    fn try_from(raw: DmParamsRaw) -> Result<Self> {
        DmParams::new(raw.theta)
    }
}

impl DmParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::InvalidParameter(
                "theta needs at least 2 entries".into(),
            ));
        }
        validate_positive("theta", &theta)?;
        Ok(DmParams { theta })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn p(&self) -> usize {
        self.theta.len()
    }

    pub fn theta0(&self) -> f64 {
        self.theta.iter().sum()
    }

    /// Overdispersion parameter ρ² = 1/(1+θ0).
    pub fn rho_sq(&self) -> f64 {
        1.0 / (1.0 + self.theta0())
    }

    pub fn pi(&self) -> Vec<f64> {
        let t0 = self.theta0();
        self.theta.iter().map(|t| t / t0).collect()
    }
}

/// Random-clumped multinomial: category probabilities π and clumping ρ.
///
/// ρ = 0 is the degenerate multinomial case, permitted for evaluation;
/// ρ = 1 is complete clumping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RcmParamsRaw")]
pub struct RcmParams {
    pi: Vec<f64>,
    rho: f64,
}

#[derive(Deserialize)]
struct RcmParamsRaw {
    pi: Vec<f64>,
    rho: f64,
}

impl TryFrom<RcmParamsRaw> for RcmParams {
    type Error = Error;
    fn try_from(raw: RcmParamsRaw) -> Result<Self> {
        RcmParams::new(raw.pi, raw.rho)
    }
}

impl RcmParams {
    pub fn new(pi: Vec<f64>, rho: f64) -> Result<Self> {
        let pi = validate_prob_vec("pi", &pi, 2)?;
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!(
                "rho must lie in [0,1], got {rho}"
            )));
        }
        Ok(RcmParams { pi, rho })
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn p(&self) -> usize {
        self.pi.len()
    }
}

/// Negative multinomial: π has p+1 entries, the last being the failure
/// probability; β > 0 is the dispersion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NmParamsRaw")]
pub struct NmParams {
    pi: Vec<f64>,
    beta: f64,
}

#[derive(Deserialize)]
struct NmParamsRaw {
    pi: Vec<f64>,
    beta: f64,
}

impl TryFrom<NmParamsRaw> for NmParams {
    type Error = Error;
    fn try_from(raw: NmParamsRaw) -> Result<Self> {
        NmParams::new(raw.pi, raw.beta)
    }
}

impl NmParams {
    pub fn new(pi: Vec<f64>, beta: f64) -> Result<Self> {
        let pi = validate_prob_vec("pi", &pi, 3)?;
        if !(*pi.last().unwrap() > 0.0) {
            return Err(Error::InvalidParameter(
                "failure probability pi[p+1] must be positive".into(),
            ));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        Ok(NmParams { pi, beta })
    }

    /// Full probability vector of length p+1 (last entry: failure).
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of count categories (excludes the failure slot).
    pub fn p(&self) -> usize {
        self.pi.len() - 1
    }

    pub fn pi_fail(&self) -> f64 {
        *self.pi.last().unwrap()
    }
}

/// Generalized Dirichlet-multinomial: p−1 pairs (α_j, β_j), all positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GdmParamsRaw")]
pub struct GdmParams {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

#[derive(Deserialize)]
struct GdmParamsRaw {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl TryFrom<GdmParamsRaw> for GdmParams {
    type Error = Error;
    fn try_from(raw: GdmParamsRaw) -> Result<Self> {
        GdmParams::new(raw.alpha, raw.beta)
    }
}

impl GdmParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || alpha.len() != beta.len() {
            return Err(Error::InvalidParameter(format!(
                "alpha and beta must have equal nonzero length, got {} and {}",
                alpha.len(),
                beta.len()
            )));
        }
        validate_positive("alpha", &alpha)?;
        validate_positive("beta", &beta)?;
        Ok(GdmParams { alpha, beta })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Number of count categories (one more than the parameter pairs).
    pub fn p(&self) -> usize {
        self.alpha.len() + 1
    }
}

/// Deep Dirichlet-multinomial: mixture weights w, base concentration β > 0,
/// and per-component perturbations α_k with entries in (−1, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DdmParamsRaw")]
pub struct DdmParams {
    w: Vec<f64>,
    beta: Vec<f64>,
    alpha: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct DdmParamsRaw {
    w: Vec<f64>,
    beta: Vec<f64>,
    alpha: Vec<Vec<f64>>,
}

impl TryFrom<DdmParamsRaw> for DdmParams {
    type Error = Error;
    fn try_from(raw: DdmParamsRaw) -> Result<Self> {
        DdmParams::new(raw.w, raw.beta, raw.alpha)
    }
}

impl DdmParams {
    pub fn new(w: Vec<f64>, beta: Vec<f64>, alpha: Vec<Vec<f64>>) -> Result<Self> {
        let w = validate_prob_vec("w", &w, 1)?;
        if beta.len() < 2 {
            return Err(Error::InvalidParameter(
                "beta needs at least 2 entries".into(),
            ));
        }
        validate_positive("beta", &beta)?;
        if alpha.len() != w.len() {
            return Err(Error::InvalidParameter(format!(
                "need one alpha vector per component: {} weights vs {} alphas",
                w.len(),
                alpha.len()
            )));
        }
        for a in &alpha {
            if a.len() != beta.len() {
                return Err(Error::InvalidParameter(format!(
                    "alpha vectors must have length {}, got {}",
                    beta.len(),
                    a.len()
                )));
            }
            for &v in a {
                if !(-1.0 < v && v < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "alpha entries must lie in (-1,1), got {v}"
                    )));
                }
            }
        }
        Ok(DdmParams { w, beta, alpha })
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha(&self) -> &[Vec<f64>] {
        &self.alpha
    }

    pub fn k(&self) -> usize {
        self.w.len()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Component concentration θ_k = β ⊙ (1 + α_k).
    pub fn theta_k(&self, k: usize) -> Vec<f64> {
        self.beta
            .iter()
            .zip(&self.alpha[k])
            .map(|(b, a)| b * (1.0 + a))
            .collect()
    }
}

/// A parameter set tagged by family. Serializes as
/// `{"family": "mn"|"dm"|"rcm"|"nm"|"gdm"|"ddm", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum FamilyParams {
    Mn(MnParams),
    Dm(DmParams),
    Rcm(RcmParams),
    Nm(NmParams),
    Gdm(GdmParams),
    Ddm(DdmParams),
}

impl FamilyParams {
    /// Number of count categories.
    pub fn p(&self) -> usize {
        match self {
            FamilyParams::Mn(p) => p.p(),
            FamilyParams::Dm(p) => p.p(),
            FamilyParams::Rcm(p) => p.p(),
            FamilyParams::Nm(p) => p.p(),
            FamilyParams::Gdm(p) => p.p(),
            FamilyParams::Ddm(p) => p.p(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            FamilyParams::Mn(_) => "mn",
            FamilyParams::Dm(_) => "dm",
            FamilyParams::Rcm(_) => "rcm",
            FamilyParams::Nm(_) => "nm",
            FamilyParams::Gdm(_) => "gdm",
            FamilyParams::Ddm(_) => "ddm",
        }
    }
}
