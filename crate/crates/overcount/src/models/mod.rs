//! Parameter types, log-pmf evaluation, analytic moments, random sampling
//! and the DDM moment generating function for the six model families.

mod data;
pub mod logpmf;
pub mod mgf;
pub mod moments;
mod params;
pub mod sample;

pub use data::{CountMatrix, CountVector};
pub use logpmf::{ddm_logpmf, dm_logpmf, gdm_logpmf, mn_logpmf, nm_logpmf, rcm_logpmf};
pub use mgf::ddm_mgf;
pub use moments::{moments, Moments};
pub use params::{DdmParams, DmParams, FamilyParams, GdmParams, MnParams, NmParams, RcmParams};
pub use sample::sample;

/// All compositions of m into p nonnegative parts, in lexicographic order.
/// Brute-force support enumeration for normalization checks; only meant for
/// small m and p.
pub fn compositions(m: u64, p: usize) -> Vec<Vec<u64>> {
    assert!(p >= 1);
    if p == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for first in 0..=m {
        for mut rest in compositions(m - first, p - 1) {
            let mut v = Vec::with_capacity(p);
            v.push(first);
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}
