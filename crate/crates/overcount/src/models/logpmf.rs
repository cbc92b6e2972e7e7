//! Log probability mass functions for the six families.
//!
//! Everything is computed in log space via `ln_gamma`, with log-sum-exp for
//! the mixture families, so sizes in the hundreds and large category counts
//! never overflow. A structurally impossible observation (e.g. a positive
//! count on a zero-probability category) yields −∞, not an error.

use super::data::CountVector;
use super::params::{DdmParams, DmParams, GdmParams, MnParams, NmParams, RcmParams};
use crate::specfun::{ln_gamma, ln_gamma_ratio};
use crate::util::log_sum_exp;

/// ln( m! / (y_1! … y_p!) )
fn ln_multinomial_coeff(y: &[u64], m: u64) -> f64 {
    ln_gamma(m as f64 + 1.0) - y.iter().map(|&v| ln_gamma(v as f64 + 1.0)).sum::<f64>()
}

/// Multinomial log-pmf.
pub fn mn_logpmf(params: &MnParams, obs: &CountVector) -> f64 {
    mn_logpmf_raw(params.pi(), obs.counts(), obs.m())
}

// Shared kernel; `pi` need not come from a validated MnParams (the RCM
// mixture perturbs it internally).
pub(crate) fn mn_logpmf_raw(pi: &[f64], y: &[u64], m: u64) -> f64 {
    assert_eq!(pi.len(), y.len(), "dimension mismatch");
    let mut ll = ln_multinomial_coeff(y, m);
    for (&pj, &yj) in pi.iter().zip(y) {
        if yj == 0 {
            continue;
        }
        if pj <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += yj as f64 * pj.ln();
    }
    ll
}

/// Dirichlet-multinomial log-pmf.
pub fn dm_logpmf(params: &DmParams, obs: &CountVector) -> f64 {
    dm_logpmf_raw(params.theta(), obs.counts(), obs.m())
}

pub(crate) fn dm_logpmf_raw(theta: &[f64], y: &[u64], m: u64) -> f64 {
    assert_eq!(theta.len(), y.len(), "dimension mismatch");
    let theta0: f64 = theta.iter().sum();
    // Gamma ratios as log rising factorials: stable however large θ gets.
    let mut ll = ln_gamma(m as f64 + 1.0) - ln_gamma_ratio(theta0, m);
    for (&tj, &yj) in theta.iter().zip(y) {
        ll += ln_gamma_ratio(tj, yj) - ln_gamma(yj as f64 + 1.0);
    }
    ll
}

/// Random-clumped multinomial log-pmf: a p-component multinomial mixture
/// with weights π and component probabilities (1−ρ)π + ρe_j.
pub fn rcm_logpmf(params: &RcmParams, obs: &CountVector) -> f64 {
    let pi = params.pi();
    let rho = params.rho();
    let y = obs.counts();
    assert_eq!(pi.len(), y.len(), "dimension mismatch");
    let mut comps = Vec::with_capacity(pi.len());
    let mut comp_pi = vec![0.0; pi.len()];
    for (j, &wj) in pi.iter().enumerate() {
        if wj <= 0.0 {
            continue;
        }
        for (c, &pj) in comp_pi.iter_mut().zip(pi) {
            *c = (1.0 - rho) * pj;
        }
        comp_pi[j] += rho;
        comps.push(wj.ln() + mn_logpmf_raw(&comp_pi, y, obs.m()));
    }
    log_sum_exp(&comps)
}

/// Negative multinomial log-pmf. The observation total m is a realized value
/// of the random total, not fixed by design.
pub fn nm_logpmf(params: &NmParams, obs: &CountVector) -> f64 {
    let y = obs.counts();
    assert_eq!(params.p(), y.len(), "dimension mismatch");
    let m = obs.m() as f64;
    let beta = params.beta();
    // C(β+m−1, m) through the gamma function: β need not be an integer.
    let mut ll = ln_gamma_ratio(beta, obs.m()) - ln_gamma(m + 1.0);
    ll += ln_multinomial_coeff(y, obs.m());
    for (&pj, &yj) in params.pi().iter().zip(y) {
        if yj == 0 {
            continue;
        }
        if pj <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += yj as f64 * pj.ln();
    }
    ll + beta * params.pi_fail().ln()
}

/// Generalized Dirichlet-multinomial log-pmf.
///
/// Uses the tail sums z_j = Σ_{h=j}^p y_h: the β_j numerator carries
/// z_{j+1} and the denominator z_j, the form under which the distribution
/// normalizes and reduces to the DM when β_j = Σ_{h>j} θ_h.
pub fn gdm_logpmf(params: &GdmParams, obs: &CountVector) -> f64 {
    let y = obs.counts();
    assert_eq!(params.p(), y.len(), "dimension mismatch");
    let p = y.len();
    // tail[j] = Σ_{h=j}^{p-1} y_h (0-based)
    let mut tail = vec![0u64; p + 1];
    for j in (0..p).rev() {
        tail[j] = tail[j + 1] + y[j];
    }
    let mut ll = ln_multinomial_coeff(y, obs.m());
    for j in 0..p - 1 {
        let (aj, bj) = (params.alpha()[j], params.beta()[j]);
        ll += ln_gamma_ratio(aj, y[j]);
        ll += ln_gamma_ratio(bj, tail[j + 1]);
        ll -= ln_gamma_ratio(aj + bj, tail[j]);
    }
    ll
}

/// Deep Dirichlet-multinomial log-pmf: log-sum-exp over the K components
/// of ln w_k + DM(β(1+α_k)).
pub fn ddm_logpmf(params: &DdmParams, obs: &CountVector) -> f64 {
    assert_eq!(params.p(), obs.p(), "dimension mismatch");
    let comps: Vec<f64> = (0..params.k())
        .map(|k| params.w()[k].ln() + dm_logpmf_raw(&params.theta_k(k), obs.counts(), obs.m()))
        .collect();
    log_sum_exp(&comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::compositions;

    fn cv(y: &[u64]) -> CountVector {
        CountVector::new(y.to_vec()).unwrap()
    }

    #[test]
    fn mn_hand_values() {
        let p = MnParams::new(vec![0.5, 0.5]).unwrap();
        assert!((mn_logpmf(&p, &cv(&[1, 1])) - 0.5f64.ln()).abs() < 1e-12);
        let p = MnParams::new(vec![0.3, 0.7]).unwrap();
        assert!((mn_logpmf(&p, &cv(&[2, 0])) - 0.09f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mn_zero_probability_category() {
        let p = MnParams::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(mn_logpmf(&p, &cv(&[1, 1])), f64::NEG_INFINITY);
        assert!((mn_logpmf(&p, &cv(&[2, 0]))).abs() < 1e-12);
    }

    #[test]
    fn mn_normalizes() {
        let p = MnParams::new(vec![0.2, 0.3, 0.5]).unwrap();
        let total: f64 = compositions(4, 3)
            .iter()
            .map(|y| mn_logpmf(&p, &cv(y)).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dm_hand_values() {
        // Symmetric Pólya: uniform over outcomes.
        let p = DmParams::new(vec![1.0, 1.0]).unwrap();
        assert!((dm_logpmf(&p, &cv(&[1, 0])) - 0.5f64.ln()).abs() < 1e-12);
        assert!((dm_logpmf(&p, &cv(&[1, 1])) - (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn dm_normalizes() {
        let p = DmParams::new(vec![0.5, 1.5, 2.0]).unwrap();
        let total: f64 = compositions(6, 3)
            .iter()
            .map(|y| dm_logpmf(&p, &cv(y)).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dm_approaches_mn_for_large_theta0() {
        let pi = [0.3, 0.2, 0.5];
        let scale = 1e6;
        let dm = DmParams::new(pi.iter().map(|v| v * scale).collect()).unwrap();
        let mn = MnParams::new(pi.to_vec()).unwrap();
        for y in compositions(5, 3) {
            let d = (dm_logpmf(&dm, &cv(&y)).exp() - mn_logpmf(&mn, &cv(&y)).exp()).abs();
            assert!(d < 1e-4, "y={y:?}: {d}");
        }
    }

    #[test]
    fn rcm_rho_zero_is_multinomial() {
        let pi = vec![0.2, 0.3, 0.5];
        let rcm = RcmParams::new(pi.clone(), 0.0).unwrap();
        let mn = MnParams::new(pi).unwrap();
        for y in compositions(4, 3) {
            let a = rcm_logpmf(&rcm, &cv(&y));
            let b = mn_logpmf(&mn, &cv(&y));
            assert!((a - b).abs() < 1e-12, "y={y:?}");
        }
    }

    #[test]
    fn rcm_rho_one_is_complete_clumping() {
        let rcm = RcmParams::new(vec![0.4, 0.6], 1.0).unwrap();
        assert!((rcm_logpmf(&rcm, &cv(&[3, 0])).exp() - 0.4).abs() < 1e-12);
        assert!((rcm_logpmf(&rcm, &cv(&[0, 3])).exp() - 0.6).abs() < 1e-12);
        assert_eq!(rcm_logpmf(&rcm, &cv(&[2, 1])), f64::NEG_INFINITY);
    }

    #[test]
    fn rcm_normalizes() {
        let rcm = RcmParams::new(vec![0.2, 0.3, 0.5], 0.4).unwrap();
        let total: f64 = compositions(5, 3)
            .iter()
            .map(|y| rcm_logpmf(&rcm, &cv(y)).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn nm_hand_values() {
        let p = NmParams::new(vec![0.2, 0.3, 0.5], 1.0).unwrap();
        assert!((nm_logpmf(&p, &cv(&[0, 0])) - 0.5f64.ln()).abs() < 1e-12);
        assert!((nm_logpmf(&p, &cv(&[1, 0])) - 0.1f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nm_normalizes_over_truncated_totals() {
        // π_fail = 0.5, β = 1: geometric tail, truncation at 40 leaves < 1e-8.
        let p = NmParams::new(vec![0.2, 0.3, 0.5], 1.0).unwrap();
        let mut total = 0.0;
        for m in 0..=40u64 {
            for y in compositions(m, 2) {
                total += nm_logpmf(&p, &cv(&y)).exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-8, "total={total}");
    }

    #[test]
    fn gdm_beta_binomial_case() {
        // p=2, α=β=1, m=2: Beta-Binomial(1,1), uniform over 3 outcomes.
        let p = GdmParams::new(vec![1.0], vec![1.0]).unwrap();
        assert!((gdm_logpmf(&p, &cv(&[1, 1])) - (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn gdm_reduces_to_dm() {
        // β_j = Σ_{h>j} θ_h collapses the GDM to DM(θ).
        let theta = [1.0, 2.0, 3.0];
        let dm = DmParams::new(theta.to_vec()).unwrap();
        let alpha = vec![theta[0], theta[1]];
        let beta = vec![theta[1] + theta[2], theta[2]];
        let gdm = GdmParams::new(alpha, beta).unwrap();
        for y in compositions(4, 3) {
            let a = gdm_logpmf(&gdm, &cv(&y));
            let b = dm_logpmf(&dm, &cv(&y));
            assert!((a - b).abs() < 1e-10, "y={y:?}: {a} vs {b}");
        }
    }

    #[test]
    fn gdm_normalizes() {
        let p = GdmParams::new(vec![0.8, 1.2], vec![2.0, 0.7]).unwrap();
        let total: f64 = compositions(5, 3)
            .iter()
            .map(|y| gdm_logpmf(&p, &cv(y)).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ddm_single_component_is_dm() {
        let beta = vec![0.7, 1.3, 2.1];
        let ddm = DdmParams::new(vec![1.0], beta.clone(), vec![vec![0.0; 3]]).unwrap();
        let dm = DmParams::new(beta).unwrap();
        for y in compositions(5, 3) {
            let a = ddm_logpmf(&ddm, &cv(&y));
            let b = dm_logpmf(&dm, &cv(&y));
            assert!((a - b).abs() < 1e-12, "y={y:?}");
        }
    }

    #[test]
    fn ddm_identical_components_collapse() {
        let beta = vec![1.0, 2.0];
        let a1 = vec![0.4, -0.3];
        let ddm = DdmParams::new(vec![0.5, 0.5], beta.clone(), vec![a1.clone(), a1.clone()])
            .unwrap();
        let theta: Vec<f64> = beta.iter().zip(&a1).map(|(b, a)| b * (1.0 + a)).collect();
        let dm = DmParams::new(theta).unwrap();
        for y in compositions(4, 2) {
            assert!((ddm_logpmf(&ddm, &cv(&y)) - dm_logpmf(&dm, &cv(&y))).abs() < 1e-12);
        }
    }

    #[test]
    fn ddm_normalizes() {
        let ddm = DdmParams::new(
            vec![0.3, 0.7],
            vec![0.9, 1.6, 0.4],
            vec![vec![0.5, -0.2, 0.1], vec![-0.6, 0.3, 0.8]],
        )
        .unwrap();
        let total: f64 = compositions(5, 3)
            .iter()
            .map(|y| ddm_logpmf(&ddm, &cv(y)).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }
}
