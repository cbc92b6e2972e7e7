//! Log-gamma and digamma, the numerical primitives behind every pmf and
//! score in this crate.
//!
//! Both functions are defined for strictly positive arguments only; called
//! outside that domain they return NaN. They are pure and reentrant.

use std::f64::consts::PI;

// Arguments below this threshold are shifted up by the recurrence before
// applying the asymptotic series.
const ASYMP_THRESHOLD: f64 = 12.0;

// Stirling series coefficients B_{2n} / (2n (2n-1)).
const LN_GAMMA_COEFFS: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
];

/// Natural logarithm of the gamma function for x > 0.
///
/// Uses the recurrence ln Γ(x) = ln Γ(x+1) − ln x to push the argument
/// above 12, then the Stirling series. Relative error is below 1e-13 on
/// [1e-6, 1e6]. Returns NaN for x ≤ 0 or NaN input.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut shift = 0.0;
    let mut z = x;
    while z < ASYMP_THRESHOLD {
        shift -= z.ln();
        z += 1.0;
    }
    let zinv2 = 1.0 / (z * z);
    let mut series = 0.0;
    let mut power = 1.0 / z;
    for c in LN_GAMMA_COEFFS {
        series += c * power;
        power *= zinv2;
    }
    shift + (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + series
}

// Digamma asymptotic coefficients B_{2n} / (2n).
const DIGAMMA_COEFFS: [f64; 6] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
];

/// Digamma function ψ(x) = d/dx ln Γ(x) for x > 0.
///
/// Downward recurrence ψ(x) = ψ(x+1) − 1/x below 12, asymptotic series
/// above. Returns NaN for x ≤ 0 or NaN input.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut shift = 0.0;
    let mut z = x;
    while z < ASYMP_THRESHOLD {
        shift -= 1.0 / z;
        z += 1.0;
    }
    let zinv2 = 1.0 / (z * z);
    let mut series = 0.0;
    let mut power = zinv2;
    for c in DIGAMMA_COEFFS {
        series += c * power;
        power *= zinv2;
    }
    shift + z.ln() - 0.5 / z - series
}

/// Past this count the rising-factorial loops fall back to function
/// differences; below it the loop is both faster and immune to the
/// catastrophic cancellation that lnΓ(x+n) − lnΓ(x) suffers when x ≫ n.
const RISING_LOOP_MAX_N: u64 = 10_000;

/// lnΓ(x+n) − lnΓ(x) for integer n ≥ 0, i.e. the log rising factorial
/// ln[x(x+1)…(x+n−1)]. Stable for arbitrarily large x.
pub fn ln_gamma_ratio(x: f64, n: u64) -> f64 {
    if n <= RISING_LOOP_MAX_N {
        let mut s = 0.0;
        for i in 0..n {
            s += (x + i as f64).ln();
        }
        s
    } else {
        ln_gamma(x + n as f64) - ln_gamma(x)
    }
}

/// ψ(x+n) − ψ(x) = Σ_{i=0}^{n−1} 1/(x+i) for integer n ≥ 0. Stable for
/// arbitrarily large x, where the direct difference loses all precision.
pub fn digamma_delta(x: f64, n: u64) -> f64 {
    if n <= RISING_LOOP_MAX_N {
        let mut s = 0.0;
        for i in 0..n {
            s += 1.0 / (x + i as f64);
        }
        s
    } else {
        digamma(x + n as f64) - digamma(x)
    }
}

/// Prefix table of `ln_gamma_ratio(x, ·)` up to a maximum count, for hot
/// loops that evaluate the same base x at many counts (one table per
/// Dirichlet parameter per objective evaluation). The prefix sums accumulate
/// in the same ascending order as [`ln_gamma_ratio`], so the values are
/// bit-identical to direct calls.
pub(crate) struct LnRisingTable {
    x: f64,
    cum: Vec<f64>,
}

impl LnRisingTable {
    pub(crate) fn new(x: f64, n_max: u64) -> LnRisingTable {
        let capped = n_max.min(RISING_LOOP_MAX_N);
        let mut cum = Vec::with_capacity(capped as usize + 1);
        let mut s = 0.0;
        cum.push(0.0);
        for i in 0..capped {
            s += (x + i as f64).ln();
            cum.push(s);
        }
        LnRisingTable { x, cum }
    }

    pub(crate) fn eval(&self, n: u64) -> f64 {
        if (n as usize) < self.cum.len() {
            self.cum[n as usize]
        } else {
            ln_gamma_ratio(self.x, n)
        }
    }
}

/// Prefix table of `digamma_delta(x, ·)`, the gradient-side companion of
/// [`LnRisingTable`]; likewise bit-identical to direct calls.
pub(crate) struct InvRisingTable {
    x: f64,
    cum: Vec<f64>,
}

impl InvRisingTable {
    pub(crate) fn new(x: f64, n_max: u64) -> InvRisingTable {
        let capped = n_max.min(RISING_LOOP_MAX_N);
        let mut cum = Vec::with_capacity(capped as usize + 1);
        let mut s = 0.0;
        cum.push(0.0);
        for i in 0..capped {
            s += 1.0 / (x + i as f64);
            cum.push(s);
        }
        InvRisingTable { x, cum }
    }

    pub(crate) fn eval(&self, n: u64) -> f64 {
        if (n as usize) < self.cum.len() {
            self.cum[n as usize]
        } else {
            digamma_delta(self.x, n)
        }
    }
}
