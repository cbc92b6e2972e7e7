//! Analytic first and second moments implied by a parameter set and a size m.

use serde::{Deserialize, Serialize};

use super::params::{DdmParams, DmParams, FamilyParams, GdmParams, MnParams, NmParams, RcmParams};
use super::sample::sample;
use crate::models::CountMatrix;

/// Sample count for the Monte-Carlo fill of GDM off-diagonal covariances.
pub const GDM_COV_MC_SAMPLES: u64 = 100_000;
// Fixed internal seed so `moments` stays a pure function of its arguments.
const GDM_COV_MC_SEED: u64 = 0x0dd5_eed0;

/// Mean vector and covariance matrix of a count model at size m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    /// Set when off-diagonal covariances were estimated by Monte Carlo
    /// (GDM only); records the sample count used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_offdiag_samples: Option<u64>,
}

impl Moments {
    pub fn p(&self) -> usize {
        self.mean.len()
    }

    /// The per-category variances (diagonal of the covariance matrix).
    pub fn variances(&self) -> Vec<f64> {
        (0..self.p()).map(|j| self.cov[j][j]).collect()
    }

    /// Mean of the per-category variances; the scalar summary plotted per
    /// model in the study reports.
    pub fn variance_summary(&self) -> f64 {
        self.variances().iter().sum::<f64>() / self.p() as f64
    }
}

/// m·{diag(π) − ππ'} scaled by `inflate`.
fn multinomial_cov(pi: &[f64], m: f64, inflate: f64) -> Vec<Vec<f64>> {
    let p = pi.len();
    let mut cov = vec![vec![0.0; p]; p];
    for j in 0..p {
        for l in 0..p {
            let base = if j == l {
                pi[j] * (1.0 - pi[j])
            } else {
                -pi[j] * pi[l]
            };
            cov[j][l] = m * inflate * base;
        }
    }
    cov
}

pub fn mn_moments(params: &MnParams, m: u64) -> Moments {
    let mf = m as f64;
    Moments {
        mean: params.pi().iter().map(|p| mf * p).collect(),
        cov: multinomial_cov(params.pi(), mf, 1.0),
        mc_offdiag_samples: None,
    }
}

pub fn dm_moments(params: &DmParams, m: u64) -> Moments {
    let mf = m as f64;
    let pi = params.pi();
    let inflate = 1.0 + params.rho_sq() * (mf - 1.0);
    Moments {
        mean: pi.iter().map(|p| mf * p).collect(),
        cov: multinomial_cov(&pi, mf, inflate),
        mc_offdiag_samples: None,
    }
}

/// RCM shares the DM mean/variance structure with ρ² entering directly.
pub fn rcm_moments(params: &RcmParams, m: u64) -> Moments {
    let mf = m as f64;
    let inflate = 1.0 + params.rho() * params.rho() * (mf - 1.0);
    Moments {
        mean: params.pi().iter().map(|p| mf * p).collect(),
        cov: multinomial_cov(params.pi(), mf, inflate),
        mc_offdiag_samples: None,
    }
}

/// NM moments depend only on (π, β); the size argument of the generic
/// `moments` entry point is ignored for this family.
pub fn nm_moments(params: &NmParams) -> Moments {
    let p = params.p();
    let beta = params.beta();
    let pf = params.pi_fail();
    let pi = &params.pi()[..p];
    let mean: Vec<f64> = pi.iter().map(|pj| beta * pj / pf).collect();
    let mut cov = vec![vec![0.0; p]; p];
    for j in 0..p {
        for l in 0..p {
            cov[j][l] = beta / (pf * pf) * pi[j] * pi[l];
            if j == l {
                cov[j][l] += beta / pf * pi[j];
            }
        }
    }
    Moments {
        mean,
        cov,
        mc_offdiag_samples: None,
    }
}

/// GDM moments: analytic mean and variances from the stick-breaking
/// representation; off-diagonal covariances filled by Monte Carlo with
/// [`GDM_COV_MC_SAMPLES`] draws (recorded in the result).
pub fn gdm_moments(params: &GdmParams, m: u64) -> Moments {
    let p = params.p();
    let mf = m as f64;
    // Marginally Y_j | π ~ Binomial(m, π_j) with π_j = z_j Π_{h<j}(1−z_h),
    // z_h ~ Beta(α_h, β_h) independent. First and second moments of π_j are
    // products of Beta moments.
    let mut e_pi = vec![0.0; p];
    let mut e_pi2 = vec![0.0; p];
    let mut prod1 = 1.0; // Π E[1−z_h]
    let mut prod2 = 1.0; // Π E[(1−z_h)²]
    for j in 0..p {
        if j < p - 1 {
            let (a, b) = (params.alpha()[j], params.beta()[j]);
            let ez = a / (a + b);
            let ez2 = a * (a + 1.0) / ((a + b) * (a + b + 1.0));
            e_pi[j] = ez * prod1;
            e_pi2[j] = ez2 * prod2;
            prod1 *= b / (a + b);
            prod2 *= b * (b + 1.0) / ((a + b) * (a + b + 1.0));
        } else {
            // Last category takes the remaining stick.
            e_pi[j] = prod1;
            e_pi2[j] = prod2;
        }
    }
    let mean: Vec<f64> = e_pi.iter().map(|e| mf * e).collect();
    let mut cov = vec![vec![0.0; p]; p];
    for j in 0..p {
        cov[j][j] = mf * (mf - 1.0) * e_pi2[j] + mf * e_pi[j] - mf * mf * e_pi[j] * e_pi[j];
    }
    // Off-diagonals by Monte Carlo.
    let draws = sample(
        &FamilyParams::Gdm(params.clone()),
        m,
        GDM_COV_MC_SAMPLES as usize,
        GDM_COV_MC_SEED,
    );
    let sample_cov = sample_covariance(&draws);
    for j in 0..p {
        for l in 0..p {
            if j != l {
                cov[j][l] = sample_cov[j][l];
            }
        }
    }
    Moments {
        mean,
        cov,
        mc_offdiag_samples: Some(GDM_COV_MC_SAMPLES),
    }
}

/// DDM moments: the covariance splits into a weighted sum of within-component
/// DM covariances plus a between-component part.
pub fn ddm_moments(params: &DdmParams, m: u64) -> Moments {
    let p = params.p();
    let mf = m as f64;
    let mut mean = vec![0.0; p];
    let mut cov = vec![vec![0.0; p]; p];
    let mut mix_pi = vec![0.0; p];
    for k in 0..params.k() {
        let wk = params.w()[k];
        let theta = params.theta_k(k);
        let theta0: f64 = theta.iter().sum();
        let rho_sq = 1.0 / (1.0 + theta0);
        let pik: Vec<f64> = theta.iter().map(|t| t / theta0).collect();
        let inflate = 1.0 + rho_sq * (mf - 1.0);
        for j in 0..p {
            mean[j] += wk * mf * pik[j];
            mix_pi[j] += wk * pik[j];
            for l in 0..p {
                // within-component DM covariance
                let base = if j == l {
                    pik[j] * (1.0 - pik[j])
                } else {
                    -pik[j] * pik[l]
                };
                cov[j][l] += wk * (mf * inflate * base + mf * mf * pik[j] * pik[l]);
            }
        }
    }
    for j in 0..p {
        for l in 0..p {
            cov[j][l] -= mf * mf * mix_pi[j] * mix_pi[l];
        }
    }
    Moments {
        mean,
        cov,
        mc_offdiag_samples: None,
    }
}

/// Analytic moments of any family at size m (ignored for NM, whose moments
/// depend only on its own parameters).
pub fn moments(params: &FamilyParams, m: u64) -> Moments {
    match params {
        FamilyParams::Mn(p) => mn_moments(p, m),
        FamilyParams::Dm(p) => dm_moments(p, m),
        FamilyParams::Rcm(p) => rcm_moments(p, m),
        FamilyParams::Nm(p) => nm_moments(p),
        FamilyParams::Gdm(p) => gdm_moments(p, m),
        FamilyParams::Ddm(p) => ddm_moments(p, m),
    }
}

/// Sample covariance (denominator n−1) of the rows of a count matrix.
pub(crate) fn sample_covariance(data: &CountMatrix) -> Vec<Vec<f64>> {
    let n = data.n();
    let p = data.p();
    let mut means = vec![0.0; p];
    for row in data.rows() {
        for (mj, &v) in means.iter_mut().zip(row) {
            *mj += v as f64;
        }
    }
    for mj in &mut means {
        *mj /= n as f64;
    }
    let mut cov = vec![vec![0.0; p]; p];
    for row in data.rows() {
        for j in 0..p {
            let dj = row[j] as f64 - means[j];
            for l in 0..p {
                cov[j][l] += dj * (row[l] as f64 - means[l]);
            }
        }
    }
    for r in &mut cov {
        for v in r {
            *v /= (n - 1) as f64;
        }
    }
    cov
}
