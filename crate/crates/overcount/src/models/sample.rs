//! Random sampling for each family, deterministic given a 64-bit seed.
//!
//! Compounding constructions match the pmfs: DM draws a Dirichlet through
//! normalized Gammas then a multinomial; GDM stick-breaks sequential Betas;
//! NM mixes independent Poissons over a Gamma; RCM uses the constructive
//! clumped form Y = X·N + (Z | N); DDM picks a component then draws its DM.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Gamma, Poisson};

use super::data::CountMatrix;
use super::params::{DdmParams, DmParams, FamilyParams, GdmParams, NmParams, RcmParams};

/// Draws n independent rows from the family at size m.
///
/// For NM the size argument is ignored: the law of the random total is fixed
/// by (π, β), mirroring the same asymmetry in its moments.
pub fn sample(params: &FamilyParams, m: u64, n: usize, seed: u64) -> CountMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| match params {
            FamilyParams::Mn(p) => sample_multinomial(p.pi(), m, &mut rng),
            FamilyParams::Dm(p) => sample_dm_row(p, m, &mut rng),
            FamilyParams::Rcm(p) => sample_rcm_row(p, m, &mut rng),
            FamilyParams::Nm(p) => sample_nm_row(p, &mut rng),
            FamilyParams::Gdm(p) => sample_gdm_row(p, m, &mut rng),
            FamilyParams::Ddm(p) => sample_ddm_row(p, m, &mut rng),
        })
        .collect();
    CountMatrix::new(rows).expect("sampled rows are rectangular")
}

/// Multinomial draw by sequential conditional binomials.
pub(crate) fn sample_multinomial(pi: &[f64], m: u64, rng: &mut impl Rng) -> Vec<u64> {
    let p = pi.len();
    let mut y = vec![0u64; p];
    let mut remaining = m;
    let mut rest = 1.0;
    for j in 0..p - 1 {
        if remaining == 0 || rest <= 0.0 {
            break;
        }
        let prob = (pi[j] / rest).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, prob).expect("valid binomial").sample(rng);
        y[j] = draw;
        remaining -= draw;
        rest -= pi[j];
    }
    y[p - 1] = remaining;
    y
}

fn sample_dirichlet(theta: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let mut g: Vec<f64> = theta
        .iter()
        .map(|&t| Gamma::new(t, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = g.iter().sum();
    if total <= 0.0 {
        // All gammas underflowed (tiny shapes); fall back to the mean.
        let t0: f64 = theta.iter().sum();
        return theta.iter().map(|t| t / t0).collect();
    }
    for v in &mut g {
        *v /= total;
    }
    g
}

fn sample_dm_row(params: &DmParams, m: u64, rng: &mut impl Rng) -> Vec<u64> {
    let pi = sample_dirichlet(params.theta(), rng);
    sample_multinomial(&pi, m, rng)
}

fn sample_categorical(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    weights.len() - 1
}

fn sample_rcm_row(params: &RcmParams, m: u64, rng: &mut impl Rng) -> Vec<u64> {
    let x = sample_categorical(params.pi(), rng);
    let n_clump = Binomial::new(m, params.rho())
        .expect("rho in [0,1]")
        .sample(rng);
    let mut y = sample_multinomial(params.pi(), m - n_clump, rng);
    y[x] += n_clump;
    y
}

fn sample_nm_row(params: &NmParams, rng: &mut impl Rng) -> Vec<u64> {
    let g = Gamma::new(params.beta(), 1.0)
        .expect("positive beta")
        .sample(rng);
    let pf = params.pi_fail();
    (0..params.p())
        .map(|j| {
            let lambda = g * params.pi()[j] / pf;
            if lambda <= 0.0 {
                0
            } else {
                Poisson::new(lambda).expect("positive rate").sample(rng) as u64
            }
        })
        .collect()
}

fn sample_gdm_row(params: &GdmParams, m: u64, rng: &mut impl Rng) -> Vec<u64> {
    let p = params.p();
    let mut pi = vec![0.0; p];
    let mut stick = 1.0;
    for j in 0..p - 1 {
        let z = Beta::new(params.alpha()[j], params.beta()[j])
            .expect("positive shapes")
            .sample(rng);
        pi[j] = z * stick;
        stick *= 1.0 - z;
    }
    pi[p - 1] = stick;
    sample_multinomial(&pi, m, rng)
}

fn sample_ddm_row(params: &DdmParams, m: u64, rng: &mut impl Rng) -> Vec<u64> {
    let k = sample_categorical(params.w(), rng);
    let theta = params.theta_k(k);
    let pi = sample_dirichlet(&theta, rng);
    sample_multinomial(&pi, m, rng)
}
