//! Moment generating function of the deep Dirichlet-multinomial.

use super::params::DdmParams;
use crate::error::{Error, Result};
use crate::specfun::ln_gamma;

/// Largest size accepted by the O(m²·p) recursion.
pub const MGF_MAX_M: u64 = 200;

/// φ_Y(t) = Σ_k w_k · Γ(m+1)Γ(θ_0k)/Γ(m+θ_0k) · D_m(θ_k, e^t), where
/// D_u = (1/u) Σ_{v=1}^u (Σ_j θ_jk e^{t_j v}) D_{u−v}, D_0 = 1.
///
/// Errors when m exceeds [`MGF_MAX_M`], on a dimension mismatch, or when the
/// recursion overflows f64 range (large m·max(t)).
pub fn ddm_mgf(params: &DdmParams, m: u64, t: &[f64]) -> Result<f64> {
    if t.len() != params.p() {
        return Err(Error::DimensionMismatch(format!(
            "t has length {}, expected {}",
            t.len(),
            params.p()
        )));
    }
    if m > MGF_MAX_M {
        return Err(Error::Range(format!(
            "mgf recursion supports m <= {MGF_MAX_M}, got {m}"
        )));
    }
    let mu = m as usize;
    let mut phi = 0.0;
    for k in 0..params.k() {
        let theta = params.theta_k(k);
        let theta0: f64 = theta.iter().sum();
        // d[u] = D_u
        let mut d = vec![0.0f64; mu + 1];
        d[0] = 1.0;
        for u in 1..=mu {
            let mut acc = 0.0;
            for v in 1..=u {
                let inner: f64 = theta
                    .iter()
                    .zip(t)
                    .map(|(&th, &tj)| th * (tj * v as f64).exp())
                    .sum();
                acc += inner * d[u - v];
            }
            d[u] = acc / u as f64;
            if !d[u].is_finite() {
                return Err(Error::Range(
                    "mgf recursion overflowed; reduce m or t".into(),
                ));
            }
        }
        let ln_prefactor =
            ln_gamma(m as f64 + 1.0) + ln_gamma(theta0) - ln_gamma(m as f64 + theta0);
        let term = params.w()[k] * ln_prefactor.exp() * d[mu];
        if !term.is_finite() {
            return Err(Error::Range(
                "mgf value overflowed; reduce m or t".into(),
            ));
        }
        phi += term;
    }
    Ok(phi)
}
