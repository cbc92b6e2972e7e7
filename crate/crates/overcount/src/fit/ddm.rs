//! Generalized EM for the deep Dirichlet-multinomial mixture.
//!
//! The model is a K-component mixture of DM distributions with component
//! concentrations θ_k = β ⊙ (1 + α_k). The E-step computes posterior
//! component responsibilities in log space; the M-step updates the weights
//! in closed form and takes a constrained quasi-Newton ascent step on the
//! expected complete log-likelihood in (β, α). Any ascent step is accepted,
//! so the observed-data log-likelihood never decreases.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::direct::{mom_rho_sq, pooled_pi};
use super::{count_maxima, family_n_params, loglik, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::models::{CountMatrix, CountVector, DdmParams, FamilyParams};
use crate::optim::{minimize, BoxSpec, Transform};
use crate::specfun::{digamma_delta, InvRisingTable, LnRisingTable};
use crate::util::{derive_seed, log_sum_exp};

/// A weight below this for three consecutive iterations freezes the
/// component: its weight and α stop updating, but it still counts toward
/// n_params so information criteria stay comparable.
const FREEZE_WEIGHT: f64 = 1e-8;
const FREEZE_ITERS: usize = 3;

/// Posterior component membership probabilities, one row per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities {
    /// n×K; each row sums to 1.
    pub tau: Vec<Vec<f64>>,
}

impl Responsibilities {
    pub fn n(&self) -> usize {
        self.tau.len()
    }

    pub fn k(&self) -> usize {
        self.tau.first().map_or(0, Vec::len)
    }
}

/// τ_ik ∝ w_k DM(y_i; β(1+α_k), m_i), computed in log space.
pub fn e_step(params: &DdmParams, data: &CountMatrix) -> Responsibilities {
    let k = params.k();
    let (max_m, max_y) = count_maxima(data);
    let comps: Vec<ComponentTables> = (0..k)
        .map(|c| ComponentTables::new(&params.theta_k(c), max_m, &max_y))
        .collect();
    let log_w: Vec<f64> = params.w().iter().map(|&w| w.ln()).collect();
    let mut tau = Vec::with_capacity(data.n());
    let mut logs = vec![0.0; k];
    for i in 0..data.n() {
        let row = data.row(i);
        let m = data.row_sum(i);
        for (c, comp) in comps.iter().enumerate() {
            logs[c] = log_w[c] + comp.log_dm_kernel(row, m);
        }
        let lse = log_sum_exp(&logs);
        tau.push(logs.iter().map(|&l| (l - lse).exp()).collect());
    }
    Responsibilities { tau }
}

/// ŵ_k = Σ_i τ_ik / n.
pub fn m_step_weights(tau: &Responsibilities) -> Vec<f64> {
    let n = tau.n();
    let k = tau.k();
    let mut w = vec![0.0; k];
    for row in &tau.tau {
        for (acc, &t) in w.iter_mut().zip(row) {
            *acc += t;
        }
    }
    for v in &mut w {
        *v /= n as f64;
    }
    w
}

/// Per-component analytic scores of log DM(y; β(1+α_k), m) with respect to
/// β (K×p) and α_k (K×p). Both are the same digamma kernel scaled by the
/// chain-rule factors (1+α_jk) and β_j respectively.
pub fn ddm_scores(params: &DdmParams, obs: &CountVector) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let p = params.p();
    let k = params.k();
    let m = obs.m();
    let y = obs.counts();
    let mut s_beta = vec![vec![0.0; p]; k];
    let mut s_alpha = vec![vec![0.0; p]; k];
    for c in 0..k {
        let theta = params.theta_k(c);
        let theta0: f64 = theta.iter().sum();
        let common = -digamma_delta(theta0, m);
        for j in 0..p {
            let s = common + digamma_delta(theta[j], y[j]);
            s_beta[c][j] = (1.0 + params.alpha()[c][j]) * s;
            s_alpha[c][j] = params.beta()[j] * s;
        }
    }
    (s_beta, s_alpha)
}

/// Per-component prefix tables of the θ-dependent DM pmf pieces, shared
/// across observations within one E-step or M-step evaluation.
struct ComponentTables {
    theta0_table: LnRisingTable,
    theta_tables: Vec<LnRisingTable>,
}

impl ComponentTables {
    fn new(theta: &[f64], max_m: u64, max_y: &[u64]) -> ComponentTables {
        let theta0: f64 = theta.iter().sum();
        ComponentTables {
            theta0_table: LnRisingTable::new(theta0, max_m),
            theta_tables: theta
                .iter()
                .zip(max_y)
                .map(|(&t, &my)| LnRisingTable::new(t, my))
                .collect(),
        }
    }

    /// log DM(y; θ, m) without the multinomial-coefficient data constant.
    fn log_dm_kernel(&self, y: &[u64], m: u64) -> f64 {
        let mut v = -self.theta0_table.eval(m);
        for (table, &yj) in self.theta_tables.iter().zip(y) {
            v += table.eval(yj);
        }
        v
    }
}

/// One GEM run from explicit starting values.
fn gem(
    data: &CountMatrix,
    w0: Vec<f64>,
    beta0: Vec<f64>,
    alpha0: Vec<Vec<f64>>,
    config: &FitConfig,
) -> Result<(DdmParams, Vec<f64>, bool)> {
    let p = data.p();
    let k = w0.len();
    let mut w = w0;
    let mut beta = beta0;
    let mut alpha = alpha0;
    let mut params = DdmParams::new(w.clone(), beta.clone(), alpha.clone())?;
    let mut ll = loglik(&FamilyParams::Ddm(params.clone()), data);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut small_runs = vec![0usize; k];
    let mut frozen = vec![false; k];

    // x layout: [β (p), α_1 (p), …, α_K (p)].
    let mut transforms = vec![Transform::Positive; p];
    transforms.extend(vec![
        Transform::Interval { lo: -1.0, hi: 1.0 };
        k * p
    ]);
    let spec = BoxSpec::new(transforms);

    for _ in 0..config.max_em_iter {
        let tau = e_step(&params, data);

        // Closed-form weight update; frozen components keep their mass.
        for c in 0..k {
            if !frozen[c] {
                if w[c] < FREEZE_WEIGHT {
                    small_runs[c] += 1;
                    if small_runs[c] >= FREEZE_ITERS {
                        frozen[c] = true;
                    }
                } else {
                    small_runs[c] = 0;
                }
            }
        }
        let what = m_step_weights(&tau);
        let frozen_mass: f64 = (0..k).filter(|&c| frozen[c]).map(|c| w[c]).sum();
        let free_hat: f64 = (0..k).filter(|&c| !frozen[c]).map(|c| what[c]).sum();
        if free_hat > 0.0 {
            for c in 0..k {
                if !frozen[c] {
                    w[c] = what[c] * (1.0 - frozen_mass) / free_hat;
                }
            }
        }

        // Quasi-Newton ascent on the τ-weighted expected complete
        // log-likelihood over (β, α); any improving step is accepted.
        let mut x0 = beta.clone();
        for a in &alpha {
            x0.extend(a);
        }
        let objective = q_objective(data, &tau, p, k, &frozen);
        let res = minimize(objective, &x0, &spec, config.tol_loglik, config.m_step_max_iter)?;
        beta = res.x[..p].to_vec();
        alpha = (0..k).map(|c| res.x[p + c * p..p + (c + 1) * p].to_vec()).collect();

        params = DdmParams::new(w.clone(), beta.clone(), alpha.clone())?;
        let ll_new = loglik(&FamilyParams::Ddm(params.clone()), data);
        trace.push(ll_new);
        let delta = ll_new - ll;
        ll = ll_new;
        if delta.abs() < config.tol_loglik {
            converged = true;
            break;
        }
    }
    Ok((params, trace, converged))
}

/// −Q(β, α | τ) with its analytic gradient. Frozen components contribute
/// their value but a zero gradient, so they stay put.
fn q_objective<'a>(
    data: &'a CountMatrix,
    tau: &'a Responsibilities,
    p: usize,
    k: usize,
    frozen: &'a [bool],
) -> impl FnMut(&[f64]) -> (f64, Vec<f64>) + 'a {
    let (max_m, max_y) = count_maxima(data);
    move |x: &[f64]| {
        let beta = &x[..p];
        let mut q = 0.0;
        let mut grad = vec![0.0; x.len()];
        for c in 0..k {
            let alpha_c = &x[p + c * p..p + (c + 1) * p];
            let theta: Vec<f64> = beta
                .iter()
                .zip(alpha_c)
                .map(|(b, a)| b * (1.0 + a))
                .collect();
            let theta0: f64 = theta.iter().sum();
            let tables = ComponentTables::new(&theta, max_m, &max_y);
            let dig0 = InvRisingTable::new(theta0, max_m);
            let dig: Vec<InvRisingTable> = theta
                .iter()
                .zip(&max_y)
                .map(|(&t, &my)| InvRisingTable::new(t, my))
                .collect();
            for i in 0..data.n() {
                let t = tau.tau[i][c];
                if t < 1e-14 {
                    continue;
                }
                let m = data.row_sum(i);
                let row = data.row(i);
                q += t * tables.log_dm_kernel(row, m);
                let common = -dig0.eval(m);
                for (j, &yj) in row.iter().enumerate() {
                    let s = common + dig[j].eval(yj);
                    if !frozen[c] {
                        grad[p + c * p + j] += t * beta[j] * s;
                    }
                    grad[j] += t * (1.0 + alpha_c[j]) * s;
                }
            }
        }
        for g in &mut grad {
            *g = -*g;
        }
        (-q, grad)
    }
}

/// Starting values for one random start: moment-matched β, α uniform on
/// (−0.5, 0.5), uniform weights.
fn random_start(
    data: &CountMatrix,
    k: usize,
    rng: &mut impl Rng,
    perturb_beta: bool,
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let pi = pooled_pi(data);
    let theta0 = 1.0 / mom_rho_sq(data) - 1.0;
    let mut beta: Vec<f64> = pi.iter().map(|v| (v * theta0).max(1e-4)).collect();
    if perturb_beta {
        for b in &mut beta {
            *b *= (0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal)).exp();
        }
    }
    let alpha: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..data.p()).map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    (vec![1.0 / k as f64; k], beta, alpha)
}

fn finish(
    data: &CountMatrix,
    params: DdmParams,
    trace: Vec<f64>,
    converged: bool,
    config: &FitConfig,
) -> FitResult {
    let family = FamilyParams::Ddm(params);
    let n_params = family_n_params(&family);
    let ll = *trace.last().unwrap();
    let mut result = FitResult::build(family, ll, trace, converged, n_params, data.n());
    result.overparameterized = n_params as f64 > config.param_cap_per_obs * data.n() as f64;
    result
}

/// Fits a K-component DDM by generalized EM, returning the best of
/// `n_starts` random starts.
pub fn fit_ddm(data: &CountMatrix, k: usize, config: &FitConfig) -> Result<FitResult> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "ddm needs at least one component".into(),
        ));
    }
    let mut best: Option<(DdmParams, Vec<f64>, bool)> = None;
    for start in 0..config.n_starts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[6, start as u64]));
        let (w0, beta0, alpha0) = random_start(data, k, &mut rng, start > 0);
        let run = gem(data, w0, beta0, alpha0, config)?;
        let better = best
            .as_ref()
            .is_none_or(|b| *run.1.last().unwrap() > *b.1.last().unwrap());
        if better {
            best = Some(run);
        }
    }
    let (params, trace, converged) = best.expect("at least one start");
    Ok(finish(data, params, trace, converged, config))
}

/// Single GEM run warm-started from explicit parameters (no restarts).
pub fn fit_ddm_from(
    data: &CountMatrix,
    params: &DdmParams,
    config: &FitConfig,
) -> Result<FitResult> {
    let (fitted, trace, converged) = gem(
        data,
        params.w().to_vec(),
        params.beta().to_vec(),
        params.alpha().to_vec(),
        config,
    )?;
    Ok(finish(data, fitted, trace, converged, config))
}

/// One row of a component-count scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectKRow {
    pub k: usize,
    pub loglik: Option<f64>,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub converged: bool,
    /// Set when the fit for this K failed; the scan continues.
    pub error: Option<String>,
}

/// Result of `select_k`: the per-K table and the AIC-minimizing K.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectKReport {
    pub rows: Vec<SelectKRow>,
    pub best_k_aic: Option<usize>,
}

/// Fits the DDM over K = k_min..=k_max, warm-starting each K from the
/// previous fit (max-weight component duplicated with its weight halved,
/// which leaves the mixture — and hence the likelihood — unchanged) in
/// addition to the cold random starts. Per-K failures are recorded, not
/// fatal.
pub fn select_k(
    data: &CountMatrix,
    k_min: usize,
    k_max: usize,
    config: &FitConfig,
) -> Result<SelectKReport> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::InvalidParameter(format!(
            "bad component range {k_min}..={k_max}"
        )));
    }
    let mut rows = Vec::new();
    let mut prev: Option<DdmParams> = None;
    for k in k_min..=k_max {
        let mut candidate = fit_ddm(data, k, config);
        if let Some(ref prev_params) = prev {
            if prev_params.k() + 1 == k {
                let warm = split_max_component(prev_params);
                if let Ok(warm_fit) = fit_ddm_from(data, &warm, config) {
                    candidate = match candidate {
                        Ok(cold) if cold.loglik >= warm_fit.loglik => Ok(cold),
                        _ => Ok(warm_fit),
                    };
                }
            }
        }
        match candidate {
            Ok(fit) => {
                rows.push(SelectKRow {
                    k,
                    loglik: Some(fit.loglik),
                    aic: Some(fit.aic),
                    bic: Some(fit.bic),
                    converged: fit.converged,
                    error: None,
                });
                if let FamilyParams::Ddm(p) = fit.params {
                    prev = Some(p);
                }
            }
            Err(e) => rows.push(SelectKRow {
                k,
                loglik: None,
                aic: None,
                bic: None,
                converged: false,
                error: Some(e.to_string()),
            }),
        }
    }
    let best_k_aic = rows
        .iter()
        .filter_map(|r| r.aic.map(|a| (r.k, a)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k);
    Ok(SelectKReport { rows, best_k_aic })
}

/// Duplicates the heaviest component with half its weight on each copy;
/// the resulting (K+1)-mixture is distributionally identical.
fn split_max_component(params: &DdmParams) -> DdmParams {
    let k_max = params
        .w()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let mut w = params.w().to_vec();
    let half = w[k_max] / 2.0;
    w[k_max] = half;
    w.push(half);
    let mut alpha = params.alpha().to_vec();
    alpha.push(alpha[k_max].clone());
    DdmParams::new(w, params.beta().to_vec(), alpha).expect("split preserves validity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::fit_dm;
    use crate::models::{dm_logpmf, sample, DmParams};
    use crate::specfun::digamma;

    fn quick_config() -> FitConfig {
        FitConfig {
            n_starts: 2,
            max_em_iter: 60,
            tol_loglik: 1e-7,
            m_step_max_iter: 100,
            ..FitConfig::default()
        }
    }

    fn ddm(w: Vec<f64>, beta: Vec<f64>, alpha: Vec<Vec<f64>>) -> DdmParams {
        DdmParams::new(w, beta, alpha).unwrap()
    }

    #[test]
    fn e_step_symmetry_gives_uniform_tau() {
        let params = ddm(
            vec![0.5, 0.5],
            vec![1.0, 2.0, 3.0],
            vec![vec![0.2, -0.1, 0.3]; 2],
        );
        let data = CountMatrix::new(vec![vec![3, 1, 2], vec![0, 0, 6]]).unwrap();
        let tau = e_step(&params, &data);
        for row in &tau.tau {
            for &t in row {
                assert!((t - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn e_step_degenerate_weights() {
        let params = ddm(
            vec![1.0 - 1e-12, 1e-12],
            vec![1.0, 2.0],
            vec![vec![0.0, 0.0], vec![0.5, -0.5]],
        );
        let data = CountMatrix::new(vec![vec![4, 1]]).unwrap();
        let tau = e_step(&params, &data);
        assert!(tau.tau[0][0] > 1.0 - 1e-9);
    }

    #[test]
    fn e_step_matches_direct_pmf_ratio() {
        let params = ddm(
            vec![0.3, 0.7],
            vec![1.5, 2.5],
            vec![vec![0.4, -0.2], vec![-0.3, 0.6]],
        );
        let data = CountMatrix::new(vec![vec![2, 3], vec![5, 0]]).unwrap();
        let tau = e_step(&params, &data);
        for i in 0..data.n() {
            let obs = data.row_vector(i);
            let f1 = dm_logpmf(&DmParams::new(params.theta_k(0)).unwrap(), &obs).exp();
            let f2 = dm_logpmf(&DmParams::new(params.theta_k(1)).unwrap(), &obs).exp();
            let expected = (0.3 * f1) / (0.7 * f2);
            let got = tau.tau[i][0] / tau.tau[i][1];
            assert!((got - expected).abs() < 1e-10 * expected.max(1.0));
        }
    }

    #[test]
    fn m_step_weights_arithmetic() {
        let tau = Responsibilities {
            tau: vec![vec![0.2, 0.8], vec![0.6, 0.4]],
        };
        let w = m_step_weights(&tau);
        assert!((w[0] - 0.4).abs() < 1e-15);
        assert!((w[1] - 0.6).abs() < 1e-15);

        let all_first = Responsibilities {
            tau: vec![vec![1.0, 0.0]; 3],
        };
        assert_eq!(m_step_weights(&all_first), vec![1.0, 0.0]);
    }

    #[test]
    fn scores_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = 3;
            let beta: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..4.0)).collect();
            let alpha: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..p).map(|_| rng.random_range(-0.7..0.7)).collect())
                .collect();
            let params = ddm(vec![0.5, 0.5], beta.clone(), alpha.clone());
            let y: Vec<u64> = (0..p).map(|_| rng.random_range(0..8)).collect();
            let obs = CountVector::new(y.clone()).unwrap();
            let (s_beta, s_alpha) = ddm_scores(&params, &obs);
            for c in 0..2 {
                // Finite differences of the component log-pmf.
                let f = |b: &[f64], a: &[f64]| {
                    let theta: Vec<f64> =
                        b.iter().zip(a).map(|(bb, aa)| bb * (1.0 + aa)).collect();
                    dm_logpmf(&DmParams::new(theta).unwrap(), &obs)
                };
                let h = 1e-6;
                for j in 0..p {
                    let mut bp = beta.clone();
                    bp[j] += h;
                    let mut bm = beta.clone();
                    bm[j] -= h;
                    let fd = (f(&bp, &alpha[c]) - f(&bm, &alpha[c])) / (2.0 * h);
                    assert!(
                        (s_beta[c][j] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                        "beta score {} vs fd {}",
                        s_beta[c][j],
                        fd
                    );
                    let mut ap = alpha[c].clone();
                    ap[j] += h;
                    let mut am = alpha[c].clone();
                    am[j] -= h;
                    let fd = (f(&beta, &ap) - f(&beta, &am)) / (2.0 * h);
                    assert!(
                        (s_alpha[c][j] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                        "alpha score {} vs fd {}",
                        s_alpha[c][j],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn scores_chain_rule_identity() {
        let params = ddm(
            vec![0.4, 0.6],
            vec![1.2, 2.4, 0.8],
            vec![vec![0.3, -0.2, 0.1], vec![-0.4, 0.5, 0.0]],
        );
        let obs = CountVector::new(vec![2, 0, 5]).unwrap();
        let (s_beta, s_alpha) = ddm_scores(&params, &obs);
        for c in 0..2 {
            for j in 0..3 {
                // Both scores are the θ-score scaled by their own factor:
                // s_alpha/β_j == s_beta/(1+α_jk) exactly.
                let lhs = s_alpha[c][j] / params.beta()[j];
                let rhs = s_beta[c][j] / (1.0 + params.alpha()[c][j]);
                assert!((lhs - rhs).abs() < 1e-14 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn scores_at_zero_alpha_equal_dm_theta_score() {
        let beta = vec![1.5, 2.0, 0.7];
        let params = ddm(vec![1.0], beta.clone(), vec![vec![0.0; 3]]);
        let obs = CountVector::new(vec![1, 4, 2]).unwrap();
        let (s_beta, _) = ddm_scores(&params, &obs);
        let theta0: f64 = beta.iter().sum();
        let m = obs.m() as f64;
        for j in 0..3 {
            let expected = digamma(theta0) - digamma(m + theta0) - digamma(beta[j])
                + digamma(obs.counts()[j] as f64 + beta[j]);
            assert!((s_beta[0][j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn fit_ddm_k1_matches_fit_dm() {
        let truth = FamilyParams::Dm(DmParams::new(vec![2.0, 4.0, 3.0]).unwrap());
        let data = sample(&truth, 30, 120, 4);
        let config = FitConfig {
            n_starts: 2,
            max_em_iter: 200,
            tol_loglik: 1e-8,
            ..FitConfig::default()
        };
        let dm = fit_dm(&data, &config).unwrap();
        let ddm = fit_ddm(&data, 1, &config).unwrap();
        assert!(
            (ddm.loglik - dm.loglik).abs() < 1e-4,
            "ddm {} vs dm {}",
            ddm.loglik,
            dm.loglik
        );
    }

    #[test]
    fn em_trace_is_nondecreasing() {
        let truth = ddm(
            vec![0.5, 0.5],
            vec![3.0, 3.0, 3.0],
            vec![vec![0.8, -0.8, 0.0], vec![-0.8, 0.8, 0.0]],
        );
        let data = sample(&FamilyParams::Ddm(truth), 40, 80, 21);
        let fit = fit_ddm(&data, 2, &quick_config()).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "trace dipped: {:?}", fit.trace);
        }
    }

    #[test]
    fn label_permutation_leaves_loglik_identical() {
        let a = ddm(
            vec![0.3, 0.7],
            vec![1.0, 2.0],
            vec![vec![0.2, -0.2], vec![-0.5, 0.5]],
        );
        let b = ddm(
            vec![0.7, 0.3],
            vec![1.0, 2.0],
            vec![vec![-0.5, 0.5], vec![0.2, -0.2]],
        );
        let data = CountMatrix::new(vec![vec![3, 2], vec![0, 7], vec![4, 4]]).unwrap();
        let la = loglik(&FamilyParams::Ddm(a), &data);
        let lb = loglik(&FamilyParams::Ddm(b), &data);
        assert_eq!(la.to_bits(), lb.to_bits());
    }

    #[test]
    fn warm_started_k_scan_is_nested() {
        let truth = ddm(
            vec![0.5, 0.5],
            vec![2.0, 2.0, 2.0],
            vec![vec![0.7, -0.7, 0.0], vec![-0.7, 0.7, 0.0]],
        );
        let data = sample(&FamilyParams::Ddm(truth), 40, 60, 8);
        let report = select_k(&data, 1, 3, &quick_config()).unwrap();
        assert_eq!(report.rows.len(), 3);
        for w in report.rows.windows(2) {
            let (a, b) = (w[0].loglik.unwrap(), w[1].loglik.unwrap());
            assert!(b >= a - 1e-3, "loglik not nested: {a} vs {b}");
        }
        assert!(report.best_k_aic.is_some());
    }

    #[test]
    fn select_k_single_value() {
        let data = CountMatrix::new(vec![vec![3, 1], vec![2, 2], vec![0, 4]]).unwrap();
        let report = select_k(&data, 1, 1, &quick_config()).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.best_k_aic, Some(1));
        assert!(select_k(&data, 0, 1, &quick_config()).is_err());
        assert!(select_k(&data, 3, 2, &quick_config()).is_err());
    }

    #[test]
    fn overparameterized_flag() {
        let data = CountMatrix::new(vec![vec![3, 1, 2], vec![2, 2, 2]]).unwrap();
        let config = FitConfig {
            n_starts: 1,
            max_em_iter: 3,
            ..FitConfig::default()
        };
        // K=3, p=3: 15 params vs n=2 → way past cap 2 per observation.
        let fit = fit_ddm(&data, 3, &config).unwrap();
        assert!(fit.overparameterized);
        let small = fit_ddm(&data, 1, &config).unwrap();
        assert!(small.n_params <= 7);
    }

    #[test]
    fn weight_recovery_two_separated_components() {
        let truth = ddm(
            vec![0.3, 0.7],
            vec![5.0, 5.0, 5.0],
            vec![vec![0.9, -0.9, 0.0], vec![-0.9, 0.9, 0.0]],
        );
        let mut hits = 0;
        for seed in 0..20u64 {
            let data = sample(&FamilyParams::Ddm(truth.clone()), 30, 500, 100 + seed);
            let config = FitConfig {
                n_starts: 2,
                max_em_iter: 40,
                tol_loglik: 1e-4,
                seed,
                m_step_max_iter: 40,
                ..FitConfig::default()
            };
            let fit = fit_ddm(&data, 2, &config).unwrap();
            let FamilyParams::Ddm(p) = &fit.params else {
                panic!()
            };
            let w0 = p.w()[0].min(p.w()[1]);
            if (w0 - 0.3).abs() < 0.1 {
                hits += 1;
            }
        }
        assert!(hits >= 16, "weights recovered in {hits}/20 runs");
    }
}
