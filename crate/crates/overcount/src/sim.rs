//! Simulation harness: scenario generation, zero inflation, the
//! variance-distance metric, and the three study runners (model comparison
//! across zero levels, DDM variance as K grows, and AIC/BIC over K).
//!
//! Every cell of a study derives its RNG stream from the master seed plus
//! its (level, replicate, model) coordinates, so results are independent of
//! the execution schedule and bit-identical across reruns.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_ddm, fit_ddm_from, fit_model, FitConfig, FitResult, ModelSpec};
use crate::io::write_atomic;
use crate::models::moments::sample_covariance;
use crate::models::{moments, CountMatrix, DdmParams, FamilyParams, Moments};
use crate::util::derive_seed;

/// Where the extra zeros land.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroMode {
    /// Uniformly random nonzero cells.
    Random,
    /// Smallest counts first (ones, then twos, …).
    Smallest,
}

impl ZeroMode {
    pub fn label(&self) -> &'static str {
        match self {
            ZeroMode::Random => "random",
            ZeroMode::Smallest => "smallest",
        }
    }

    pub fn parse(s: &str) -> Result<ZeroMode> {
        match s {
            "random" => Ok(ZeroMode::Random),
            "smallest" => Ok(ZeroMode::Smallest),
            other => Err(Error::InvalidParameter(format!(
                "unknown zero mode '{other}' (expected random|smallest)"
            ))),
        }
    }
}

/// One data-generating scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub p: usize,
    pub m: u64,
    pub zero_mode: ZeroMode,
    /// Target fraction of zero cells in the whole matrix, counting
    /// preexisting zeros.
    pub zero_level: f64,
    pub seed: u64,
    /// Keep one π across all replicates instead of redrawing per dataset.
    #[serde(default)]
    pub fix_pi: bool,
}

impl ScenarioSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p < 2 {
            return Err(Error::InvalidParameter(
                "scenario needs n ≥ 1 rows and p ≥ 2 columns".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.zero_level) {
            return Err(Error::Range(format!(
                "zero level must lie in [0,1), got {}",
                self.zero_level
            )));
        }
        Ok(())
    }
}

fn draw_pi(p: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..p).map(|_| rng.random::<f64>().max(1e-12)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn multinomial_rows(pi: &[f64], n: usize, m: u64, seed: u64) -> CountMatrix {
    let params = FamilyParams::Mn(crate::models::MnParams::new(pi.to_vec()).unwrap());
    crate::models::sample(&params, m, n, seed)
}

/// Draws π once (p Uniform(0,1) values, normalized) and then n i.i.d.
/// multinomial rows of size m.
pub fn generate_base(spec: &ScenarioSpec) -> Result<CountMatrix> {
    spec.validate()?;
    let pi = draw_pi(spec.p, derive_seed(spec.seed, &[1]));
    Ok(multinomial_rows(&pi, spec.n, spec.m, derive_seed(spec.seed, &[2])))
}

fn zero_target(data: &CountMatrix, level: f64) -> (usize, usize) {
    let cells = data.n() * data.p();
    let current = data.rows().flatten().filter(|&&v| v == 0).count();
    let target = (level * cells as f64).ceil() as usize;
    (current, target)
}

/// Zeroes uniformly chosen nonzero cells until the matrix-wide zero fraction
/// reaches `level` (preexisting zeros count). Returns the inflated matrix and
/// whether the target was already met (in which case the data is unchanged).
pub fn inflate_zeros_random(
    data: &CountMatrix,
    level: f64,
    seed: u64,
) -> Result<(CountMatrix, bool)> {
    check_level(level)?;
    let (current, target) = zero_target(data, level);
    if target <= current {
        return Ok((data.clone(), true));
    }
    let mut rows: Vec<Vec<u64>> = data.rows().map(<[u64]>::to_vec).collect();
    let nonzero: Vec<(usize, usize)> = cell_indices_nonzero(&rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let need = (target - current).min(nonzero.len());
    for &(i, j) in nonzero.choose_multiple(&mut rng, need) {
        rows[i][j] = 0;
    }
    Ok((CountMatrix::new(rows)?, false))
}

/// Zeroes nonzero cells in ascending count order (ties broken uniformly at
/// random) until the target zero fraction is reached.
pub fn inflate_zeros_smallest(
    data: &CountMatrix,
    level: f64,
    seed: u64,
) -> Result<(CountMatrix, bool)> {
    check_level(level)?;
    let (current, target) = zero_target(data, level);
    if target <= current {
        return Ok((data.clone(), true));
    }
    let mut rows: Vec<Vec<u64>> = data.rows().map(<[u64]>::to_vec).collect();
    let mut nonzero = cell_indices_nonzero(&rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    nonzero.shuffle(&mut rng);
    nonzero.sort_by_key(|&(i, j)| rows[i][j]);
    let need = (target - current).min(nonzero.len());
    for &(i, j) in nonzero.iter().take(need) {
        rows[i][j] = 0;
    }
    Ok((CountMatrix::new(rows)?, false))
}

fn check_level(level: f64) -> Result<()> {
    if (0.0..1.0).contains(&level) {
        Ok(())
    } else {
        Err(Error::Range(format!(
            "zero level must lie in [0,1), got {level}"
        )))
    }
}

fn cell_indices_nonzero(rows: &[Vec<u64>]) -> Vec<(usize, usize)> {
    rows.iter()
        .enumerate()
        .flat_map(|(i, r)| {
            r.iter()
                .enumerate()
                .filter(|(_, &v)| v > 0)
                .map(move |(j, _)| (i, j))
        })
        .collect()
}

pub fn inflate_zeros(
    data: &CountMatrix,
    mode: ZeroMode,
    level: f64,
    seed: u64,
) -> Result<(CountMatrix, bool)> {
    match mode {
        ZeroMode::Random => inflate_zeros_random(data, level, seed),
        ZeroMode::Smallest => inflate_zeros_smallest(data, level, seed),
    }
}

/// Column sample means and the n−1-denominator sample covariance.
pub fn empirical_moments(data: &CountMatrix) -> Result<Moments> {
    if data.n() < 2 {
        return Err(Error::InvalidData(
            "empirical moments need at least 2 rows".into(),
        ));
    }
    let n = data.n() as f64;
    let mut mean = vec![0.0; data.p()];
    for row in data.rows() {
        for (s, &v) in mean.iter_mut().zip(row) {
            *s += v as f64;
        }
    }
    for v in &mut mean {
        *v /= n;
    }
    Ok(Moments {
        mean,
        cov: sample_covariance(data),
        mc_offdiag_samples: None,
    })
}

/// Euclidean norm between the two per-category variance vectors.
pub fn variance_distance(model: &Moments, empirical: &Moments) -> f64 {
    assert_eq!(model.p(), empirical.p(), "dimension mismatch");
    model
        .variances()
        .iter()
        .zip(empirical.variances())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

// ---------------------------------------------------------------------------
// Comparison study: every model at every zero level.
// ---------------------------------------------------------------------------

/// One successful (level, model, replicate) fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub scenario: String,
    pub level: f64,
    pub model: String,
    pub replicate: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub distance: f64,
    /// Fitted-model variance summary (mean of the p implied variances).
    pub var_summary: f64,
}

/// Replicate means for one (level, model) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellMean {
    pub level: f64,
    pub model: String,
    pub mean_distance: f64,
    pub mean_aic: f64,
    pub mean_bic: f64,
    pub mean_loglik: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

/// Per-level data summary, model-independent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: f64,
    /// Mean over replicates of the empirical variance summary.
    pub mean_empirical_var: f64,
    /// All-zero rows dropped before fitting, summed over replicates.
    pub dropped_rows: usize,
}

/// Empirical variance summary of one (level, replicate) dataset,
/// model-independent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalRecord {
    pub level: f64,
    pub replicate: usize,
    pub var_summary: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: String,
    pub replicates: usize,
    pub records: Vec<CellRecord>,
    pub cells: Vec<CellMean>,
    pub levels: Vec<LevelSummary>,
    /// Per-dataset empirical variance summaries, level-major order.
    #[serde(default)]
    pub empirical: Vec<EmpiricalRecord>,
}

/// Prepared data for one (level, replicate) cell: inflated matrix with empty
/// rows dropped, its empirical moments, and the reference size m*.
struct PreparedData {
    data: CountMatrix,
    empirical: Moments,
    m_star: u64,
    dropped: usize,
}

fn prepare_cell(
    template: &ScenarioSpec,
    level: f64,
    level_idx: usize,
    replicate: usize,
    master_seed: u64,
) -> Result<PreparedData> {
    let pi_seed = if template.fix_pi {
        derive_seed(master_seed, &[7])
    } else {
        derive_seed(master_seed, &[level_idx as u64, replicate as u64, 1])
    };
    let pi = draw_pi(template.p, pi_seed);
    let base = multinomial_rows(
        &pi,
        template.n,
        template.m,
        derive_seed(master_seed, &[level_idx as u64, replicate as u64, 2]),
    );
    let (inflated, _) = inflate_zeros(
        &base,
        template.zero_mode,
        level,
        derive_seed(master_seed, &[level_idx as u64, replicate as u64, 3]),
    )?;
    let (kept, dropped) = inflated.drop_empty_rows()?;
    let empirical = empirical_moments(&kept)?;
    let m_star = kept.mean_row_sum().round().max(1.0) as u64;
    Ok(PreparedData {
        data: kept,
        empirical,
        m_star,
        dropped,
    })
}

fn fit_and_record(
    spec: ModelSpec,
    prep: &PreparedData,
    scenario: &str,
    level: f64,
    replicate: usize,
    config: &FitConfig,
) -> Result<CellRecord> {
    let fit = fit_model(spec, &prep.data, config)?;
    let model_moments = moments(&fit.params, prep.m_star);
    Ok(CellRecord {
        scenario: scenario.to_string(),
        level,
        model: spec.label(),
        replicate,
        loglik: fit.loglik,
        aic: fit.aic,
        bic: fit.bic,
        distance: variance_distance(&model_moments, &prep.empirical),
        var_summary: model_moments.variance_summary(),
    })
}

/// Runs the full (level × model × replicate) grid and aggregates per-cell
/// means. Individual fit failures are counted, not fatal.
pub fn run_comparison_study(
    levels: &[f64],
    models: &[ModelSpec],
    replicates: usize,
    template: &ScenarioSpec,
    seed: u64,
    config: &FitConfig,
) -> Result<StudyReport> {
    if replicates == 0 {
        return Err(Error::InvalidParameter("need at least 1 replicate".into()));
    }
    template.validate()?;
    for &l in levels {
        check_level(l)?;
    }
    let scenario = template.zero_mode.label().to_string();

    // (level_idx, replicate) jobs, each fitting every model on shared data.
    let jobs: Vec<(usize, usize)> = (0..levels.len())
        .flat_map(|li| (0..replicates).map(move |r| (li, r)))
        .collect();
    type JobOut = (
        usize,
        usize,
        f64,
        usize,
        Vec<std::result::Result<CellRecord, String>>,
    );
    let outputs: Vec<Result<JobOut>> = jobs
        .par_iter()
        .map(|&(li, r)| {
            let level = levels[li];
            let prep = prepare_cell(template, level, li, r, seed)?;
            let mut results = Vec::with_capacity(models.len());
            for (mi, &spec) in models.iter().enumerate() {
                let mut cfg = config.clone();
                cfg.seed = derive_seed(seed, &[li as u64, r as u64, 4, mi as u64]);
                results.push(
                    fit_and_record(spec, &prep, &scenario, level, r, &cfg)
                        .map_err(|e| e.to_string()),
                );
            }
            Ok((li, r, prep.empirical.variance_summary(), prep.dropped, results))
        })
        .collect();

    let mut records = Vec::new();
    let mut empirical = Vec::new();
    let mut fails = vec![vec![0usize; models.len()]; levels.len()];
    let mut level_var = vec![0.0; levels.len()];
    let mut level_dropped = vec![0usize; levels.len()];
    for out in outputs {
        let (li, r, emp_var, dropped, results) = out?;
        empirical.push(EmpiricalRecord {
            level: levels[li],
            replicate: r,
            var_summary: emp_var,
        });
        level_var[li] += emp_var;
        level_dropped[li] += dropped;
        for (mi, res) in results.into_iter().enumerate() {
            match res {
                Ok(rec) => records.push(rec),
                Err(_) => fails[li][mi] += 1,
            }
        }
    }

    let mut cells = Vec::new();
    for (li, &level) in levels.iter().enumerate() {
        for (mi, &spec) in models.iter().enumerate() {
            let label = spec.label();
            let hits: Vec<&CellRecord> = records
                .iter()
                .filter(|rec| rec.level == level && rec.model == label)
                .collect();
            let n_ok = hits.len();
            let avg = |f: fn(&CellRecord) -> f64| {
                if n_ok == 0 {
                    f64::NAN
                } else {
                    hits.iter().map(|rec| f(rec)).sum::<f64>() / n_ok as f64
                }
            };
            cells.push(CellMean {
                level,
                model: label,
                mean_distance: avg(|rec| rec.distance),
                mean_aic: avg(|rec| rec.aic),
                mean_bic: avg(|rec| rec.bic),
                mean_loglik: avg(|rec| rec.loglik),
                n_ok,
                n_failed: fails[li][mi],
            });
        }
    }
    let levels_out = levels
        .iter()
        .enumerate()
        .map(|(li, &level)| LevelSummary {
            level,
            mean_empirical_var: level_var[li] / replicates as f64,
            dropped_rows: level_dropped[li],
        })
        .collect();
    Ok(StudyReport {
        scenario,
        replicates,
        records,
        cells,
        levels: levels_out,
        empirical,
    })
}

// ---------------------------------------------------------------------------
// Asymptotic-K study: fitted DDM variance vs the empirical variance.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub k: usize,
    pub mean_fitted_var: f64,
    pub mean_empirical_var: f64,
    pub mean_abs_gap: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

/// One successful (K, replicate) fit in the asymptotic study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticRecord {
    pub k: usize,
    pub replicate: usize,
    pub fitted_var: f64,
    pub empirical_var: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub level: f64,
    pub replicates: usize,
    pub rows: Vec<AsymptoticRow>,
    #[serde(default)]
    pub records: Vec<AsymptoticRecord>,
}

/// Warm start for component count `k` from a smaller fit: the heaviest
/// component is split repeatedly, which leaves the mixture unchanged.
fn grow_to_k(params: &DdmParams, k: usize) -> DdmParams {
    let mut current = params.clone();
    while current.k() < k {
        current = split_heaviest(&current);
    }
    current
}

fn split_heaviest(params: &DdmParams) -> DdmParams {
    let idx = params
        .w()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let mut w = params.w().to_vec();
    let half = w[idx] / 2.0;
    w[idx] = half;
    w.push(half);
    let mut alpha = params.alpha().to_vec();
    alpha.push(alpha[idx].clone());
    DdmParams::new(w, params.beta().to_vec(), alpha).expect("split preserves validity")
}

/// Per-replicate DDM fits over ascending K on shared data, warm-started
/// from the previous K.
fn ddm_scan(
    data: &CountMatrix,
    k_values: &[usize],
    config: &FitConfig,
) -> Vec<std::result::Result<FitResult, String>> {
    let mut out = Vec::with_capacity(k_values.len());
    let mut prev: Option<DdmParams> = None;
    for &k in k_values {
        let cold = fit_ddm(data, k, config);
        let best = match (&prev, cold) {
            (Some(warm_src), cold) if warm_src.k() <= k => {
                let warm = fit_ddm_from(data, &grow_to_k(warm_src, k), config);
                match (cold, warm) {
                    (Ok(c), Ok(w)) => Ok(if c.loglik >= w.loglik { c } else { w }),
                    (Ok(c), Err(_)) => Ok(c),
                    (Err(_), Ok(w)) => Ok(w),
                    (Err(e), Err(_)) => Err(e),
                }
            }
            (_, cold) => cold,
        };
        match best {
            Ok(fit) => {
                if let FamilyParams::Ddm(p) = &fit.params {
                    prev = Some(p.clone());
                }
                out.push(Ok(fit));
            }
            Err(e) => out.push(Err(e.to_string())),
        }
    }
    out
}

/// Fits the DDM at each K on `replicates` datasets at one zero level and
/// tracks the fitted variance summary against the empirical one.
pub fn run_asymptotic_study(
    k_values: &[usize],
    level: f64,
    replicates: usize,
    template: &ScenarioSpec,
    seed: u64,
    config: &FitConfig,
) -> Result<AsymptoticReport> {
    if k_values.is_empty() || replicates == 0 {
        return Err(Error::InvalidParameter(
            "need at least one K and one replicate".into(),
        ));
    }
    template.validate()?;
    check_level(level)?;
    let per_rep: Vec<Result<Vec<std::result::Result<(f64, f64), String>>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let prep = prepare_cell(template, level, 0, r, seed)?;
            let mut cfg = config.clone();
            cfg.seed = derive_seed(seed, &[r as u64, 5]);
            let fits = ddm_scan(&prep.data, k_values, &cfg);
            Ok(fits
                .into_iter()
                .map(|res| {
                    res.map(|fit| {
                        let mm = moments(&fit.params, prep.m_star);
                        (mm.variance_summary(), prep.empirical.variance_summary())
                    })
                })
                .collect())
        })
        .collect();

    let mut rows = Vec::with_capacity(k_values.len());
    let mut records = Vec::new();
    for (ki, &k) in k_values.iter().enumerate() {
        let mut fitted = 0.0;
        let mut empirical = 0.0;
        let mut gap = 0.0;
        let mut n_ok = 0;
        let mut n_failed = 0;
        for (r, rep) in per_rep.iter().enumerate() {
            match rep {
                Ok(cells) => match &cells[ki] {
                    Ok((f, e)) => {
                        fitted += f;
                        empirical += e;
                        gap += (f - e).abs();
                        n_ok += 1;
                        records.push(AsymptoticRecord {
                            k,
                            replicate: r,
                            fitted_var: *f,
                            empirical_var: *e,
                        });
                    }
                    Err(_) => n_failed += 1,
                },
                Err(_) => n_failed += 1,
            }
        }
        let denom = n_ok.max(1) as f64;
        rows.push(AsymptoticRow {
            k,
            mean_fitted_var: if n_ok == 0 { f64::NAN } else { fitted / denom },
            mean_empirical_var: if n_ok == 0 { f64::NAN } else { empirical / denom },
            mean_abs_gap: if n_ok == 0 { f64::NAN } else { gap / denom },
            n_ok,
            n_failed,
        });
    }
    Ok(AsymptoticReport {
        level,
        replicates,
        rows,
        records,
    })
}

// ---------------------------------------------------------------------------
// Choose-K study: AIC/BIC trajectories over the component count.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChooseKRow {
    pub k: usize,
    pub mean_loglik: f64,
    pub mean_aic: f64,
    pub mean_bic: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChooseKReport {
    pub level: f64,
    pub replicates: usize,
    pub rows: Vec<ChooseKRow>,
    pub argmin_aic_k: Option<usize>,
    /// Whether mean BIC increases from each K to the next.
    pub bic_increasing: Vec<bool>,
}

/// Per-K mean AIC/BIC over replicated datasets at one zero level.
pub fn run_choose_k_study(
    k_values: &[usize],
    level: f64,
    replicates: usize,
    template: &ScenarioSpec,
    seed: u64,
    config: &FitConfig,
) -> Result<ChooseKReport> {
    if k_values.is_empty() || replicates == 0 {
        return Err(Error::InvalidParameter(
            "need at least one K and one replicate".into(),
        ));
    }
    template.validate()?;
    check_level(level)?;
    type RepOut = Vec<std::result::Result<(f64, f64, f64), String>>;
    let per_rep: Vec<Result<RepOut>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let prep = prepare_cell(template, level, 0, r, seed)?;
            let mut cfg = config.clone();
            cfg.seed = derive_seed(seed, &[r as u64, 6]);
            Ok(ddm_scan(&prep.data, k_values, &cfg)
                .into_iter()
                .map(|res| res.map(|fit| (fit.loglik, fit.aic, fit.bic)))
                .collect())
        })
        .collect();

    let mut rows = Vec::with_capacity(k_values.len());
    for (ki, &k) in k_values.iter().enumerate() {
        let mut ll = 0.0;
        let mut aic = 0.0;
        let mut bic = 0.0;
        let mut n_ok = 0;
        let mut n_failed = 0;
        for rep in &per_rep {
            match rep {
                Ok(cells) => match &cells[ki] {
                    Ok((l, a, b)) => {
                        ll += l;
                        aic += a;
                        bic += b;
                        n_ok += 1;
                    }
                    Err(_) => n_failed += 1,
                },
                Err(_) => n_failed += 1,
            }
        }
        let denom = n_ok.max(1) as f64;
        rows.push(ChooseKRow {
            k,
            mean_loglik: if n_ok == 0 { f64::NAN } else { ll / denom },
            mean_aic: if n_ok == 0 { f64::NAN } else { aic / denom },
            mean_bic: if n_ok == 0 { f64::NAN } else { bic / denom },
            n_ok,
            n_failed,
        });
    }
    let argmin_aic_k = rows
        .iter()
        .filter(|r| r.n_ok > 0)
        .min_by(|a, b| a.mean_aic.total_cmp(&b.mean_aic))
        .map(|r| r.k);
    let bic_increasing = rows
        .windows(2)
        .map(|w| w[1].mean_bic > w[0].mean_bic)
        .collect();
    Ok(ChooseKReport {
        level,
        replicates,
        rows,
        argmin_aic_k,
        bic_increasing,
    })
}

// ---------------------------------------------------------------------------
// Report writers.
// ---------------------------------------------------------------------------

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "".into()
    } else {
        format!("{v:.6}")
    }
}

/// Long-format CSV: one row per successful (level, model, replicate) fit.
pub fn study_records_csv(report: &StudyReport) -> String {
    let mut out =
        String::from("scenario,level,model,replicate,loglik,aic,bic,distance,var_summary\n");
    for r in &report.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.scenario,
            r.level,
            r.model,
            r.replicate,
            fmt_f64(r.loglik),
            fmt_f64(r.aic),
            fmt_f64(r.bic),
            fmt_f64(r.distance),
            fmt_f64(r.var_summary),
        ));
    }
    out
}

/// Plot-data CSV: level vs fitted variance summary per model, plus the
/// empirical trajectory.
pub fn study_variance_csv(report: &StudyReport) -> String {
    let mut out = String::from("level,model,mean_var_summary\n");
    for lvl in &report.levels {
        out.push_str(&format!(
            "{},empirical,{}\n",
            lvl.level,
            fmt_f64(lvl.mean_empirical_var)
        ));
    }
    // Per-model means recomputed from records to keep one writer.
    let mut seen: Vec<String> = Vec::new();
    for r in &report.records {
        if !seen.contains(&r.model) {
            seen.push(r.model.clone());
        }
    }
    for model in &seen {
        for lvl in &report.levels {
            let vals: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.model == *model && r.level == lvl.level)
                .map(|r| r.var_summary)
                .collect();
            if !vals.is_empty() {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                out.push_str(&format!("{},{},{}\n", lvl.level, model, fmt_f64(mean)));
            }
        }
    }
    out
}

pub fn write_comparison_outputs(dir: &Path, report: &StudyReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("records.csv"), &study_records_csv(report))?;
    write_atomic(&dir.join("variance_by_level.csv"), &study_variance_csv(report))?;
    let json = serde_json::json!({
        "schema": 1,
        "study": "comparison",
        "report": report,
    });
    write_atomic(&dir.join("report.json"), &serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

pub fn asymptotic_csv(report: &AsymptoticReport) -> String {
    let mut out = String::from("k,mean_fitted_var,mean_empirical_var,mean_abs_gap,n_ok,n_failed\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.k,
            fmt_f64(r.mean_fitted_var),
            fmt_f64(r.mean_empirical_var),
            fmt_f64(r.mean_abs_gap),
            r.n_ok,
            r.n_failed
        ));
    }
    out
}

pub fn write_asymptotic_outputs(dir: &Path, report: &AsymptoticReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("variance_by_k.csv"), &asymptotic_csv(report))?;
    let json = serde_json::json!({
        "schema": 1,
        "study": "asymptotic",
        "report": report,
    });
    write_atomic(&dir.join("report.json"), &serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

pub fn choose_k_csv(report: &ChooseKReport) -> String {
    let mut out = String::from("k,mean_loglik,mean_aic,mean_bic,n_ok,n_failed\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.k,
            fmt_f64(r.mean_loglik),
            fmt_f64(r.mean_aic),
            fmt_f64(r.mean_bic),
            r.n_ok,
            r.n_failed
        ));
    }
    out
}

pub fn write_choose_k_outputs(dir: &Path, report: &ChooseKReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("criteria_by_k.csv"), &choose_k_csv(report))?;
    let json = serde_json::json!({
        "schema": 1,
        "study": "choose-k",
        "report": report,
    });
    write_atomic(&dir.join("report.json"), &serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, p: usize, m: u64, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            n,
            p,
            m,
            zero_mode: ZeroMode::Random,
            zero_level: 0.0,
            seed,
            fix_pi: false,
        }
    }

    #[test]
    fn base_rows_sum_to_m_and_replay() {
        let s = spec(20, 5, 40, 9);
        let a = generate_base(&s).unwrap();
        let b = generate_base(&s).unwrap();
        assert_eq!(a, b);
        for i in 0..a.n() {
            assert_eq!(a.row_sum(i), 40);
        }
    }

    #[test]
    fn base_column_means_track_pi() {
        // Column means over many rows match m·π within 3 standard errors.
        let s = spec(10_000, 4, 30, 3);
        let data = generate_base(&s).unwrap();
        let pi = draw_pi(4, derive_seed(3, &[1]));
        for j in 0..4 {
            let mean: f64 = data.rows().map(|r| r[j] as f64).sum::<f64>() / data.n() as f64;
            let expect = 30.0 * pi[j];
            let se = (30.0 * pi[j] * (1.0 - pi[j]) / data.n() as f64).sqrt();
            assert!(
                (mean - expect).abs() < 3.0 * se.max(1e-3),
                "col {j}: {mean} vs {expect}"
            );
        }
    }

    #[test]
    fn inflation_hits_exact_target() {
        let s = spec(50, 20, 100, 5);
        let base = generate_base(&s).unwrap();
        // With m=100 over p=20 cells, assume all (or nearly all) nonzero.
        let (inflated, unchanged) = inflate_zeros_random(&base, 0.5, 1).unwrap();
        assert!(!unchanged);
        let zeros = inflated.rows().flatten().filter(|&&v| v == 0).count();
        assert_eq!(zeros, 500);
        // Smallest-first reaches the same count.
        let (small, _) = inflate_zeros_smallest(&base, 0.5, 1).unwrap();
        let zeros_s = small.rows().flatten().filter(|&&v| v == 0).count();
        assert_eq!(zeros_s, 500);
    }

    #[test]
    fn inflation_level_zero_is_identity() {
        let base = generate_base(&spec(10, 4, 25, 2)).unwrap();
        let (out, unchanged) = inflate_zeros_random(&base, 0.0, 7).unwrap();
        assert!(unchanged);
        assert_eq!(out, base);
        assert!(inflate_zeros_random(&base, 1.0, 7).is_err());
        assert!(inflate_zeros_random(&base, -0.1, 7).is_err());
    }

    #[test]
    fn inflation_never_increases_cells() {
        let base = generate_base(&spec(15, 6, 30, 11)).unwrap();
        for mode in [ZeroMode::Random, ZeroMode::Smallest] {
            let (out, _) = inflate_zeros(&base, mode, 0.4, 13).unwrap();
            assert_eq!(out.n(), base.n());
            assert_eq!(out.p(), base.p());
            for i in 0..base.n() {
                for j in 0..base.p() {
                    assert!(out.row(i)[j] <= base.row(i)[j]);
                }
            }
        }
    }

    #[test]
    fn smallest_mode_zeroes_ones_first() {
        let data = CountMatrix::new(vec![vec![1, 9, 7], vec![8, 1, 6]]).unwrap();
        // Target 2 zeros out of 6 cells: exactly the two ones must go.
        let (out, _) = inflate_zeros_smallest(&data, 2.0 / 6.0, 3).unwrap();
        assert_eq!(out.row(0)[0], 0);
        assert_eq!(out.row(1)[1], 0);
        assert_eq!(out.row(0)[1], 9);
    }

    #[test]
    fn smallest_mode_high_level_keeps_largest() {
        let base = generate_base(&spec(10, 5, 60, 17)).unwrap();
        let (out, _) = inflate_zeros_smallest(&base, 0.9, 23).unwrap();
        let survivors: Vec<u64> = out.rows().flatten().copied().filter(|&v| v > 0).collect();
        assert!(survivors.len() <= 5); // ⌈0.1·50⌉
        let max_zeroed = base
            .rows()
            .flatten()
            .zip(out.rows().flatten())
            .filter(|(_, &o)| o == 0)
            .map(|(&b, _)| b)
            .max()
            .unwrap();
        let min_survivor = survivors.iter().min().copied().unwrap_or(u64::MAX);
        assert!(min_survivor >= max_zeroed);
    }

    #[test]
    fn empirical_moments_hand_values() {
        let data = CountMatrix::new(vec![vec![0, 2], vec![2, 0]]).unwrap();
        let m = empirical_moments(&data).unwrap();
        assert_eq!(m.mean, vec![1.0, 1.0]);
        assert!((m.cov[0][0] - 2.0).abs() < 1e-12);
        assert!((m.cov[1][1] - 2.0).abs() < 1e-12);
        assert!((m.cov[0][1] + 2.0).abs() < 1e-12);
        let single = CountMatrix::new(vec![vec![1, 2]]).unwrap();
        assert!(empirical_moments(&single).is_err());
    }

    #[test]
    fn variance_distance_hand_values() {
        let a = Moments {
            mean: vec![0.0, 0.0],
            cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            mc_offdiag_samples: None,
        };
        let b = Moments {
            mean: vec![0.0, 0.0],
            cov: vec![vec![4.0, 0.0], vec![0.0, 5.0]],
            mc_offdiag_samples: None,
        };
        assert_eq!(variance_distance(&a, &a), 0.0);
        assert!((variance_distance(&a, &b) - 5.0).abs() < 1e-12);
    }

    fn lean_config() -> FitConfig {
        FitConfig {
            n_starts: 1,
            max_em_iter: 15,
            tol_loglik: 1e-4,
            m_step_max_iter: 40,
            ..FitConfig::default()
        }
    }

    #[test]
    fn comparison_smoke_single_cell() {
        let report = run_comparison_study(
            &[0.0],
            &[ModelSpec::Mn],
            1,
            &spec(30, 4, 50, 1),
            1,
            &lean_config(),
        )
        .unwrap();
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.cells.len(), 1);
        // MN fitted to pure MN data: small distance relative to the scale.
        assert!(report.cells[0].mean_distance < 10.0);
        assert_eq!(report.cells[0].n_failed, 0);
    }

    #[test]
    fn comparison_means_are_arithmetic_means() {
        let report = run_comparison_study(
            &[0.2],
            &[ModelSpec::Mn, ModelSpec::Dm],
            3,
            &spec(25, 4, 40, 2),
            11,
            &lean_config(),
        )
        .unwrap();
        for cell in &report.cells {
            let vals: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.model == cell.model && r.level == cell.level)
                .map(|r| r.distance)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((cell.mean_distance - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn studies_are_deterministic() {
        let run = || {
            run_comparison_study(
                &[0.0, 0.3],
                &[ModelSpec::Mn, ModelSpec::Dm],
                2,
                &spec(20, 4, 40, 3),
                5,
                &lean_config(),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(study_records_csv(&a), study_records_csv(&b));
        assert_eq!(
            serde_json::to_string(&a.cells).unwrap(),
            serde_json::to_string(&b.cells).unwrap()
        );
    }

    #[test]
    fn choose_k_single_value_is_argmin() {
        let report = run_choose_k_study(
            &[2],
            0.3,
            1,
            &spec(20, 4, 40, 7),
            7,
            &lean_config(),
        )
        .unwrap();
        assert_eq!(report.argmin_aic_k, Some(2));
        assert_eq!(report.rows.len(), 1);
    }

    #[test]
    fn asymptotic_k1_is_deterministic_and_finite() {
        let report = run_asymptotic_study(
            &[1, 2],
            0.3,
            2,
            &spec(20, 4, 40, 13),
            13,
            &lean_config(),
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert!(row.mean_fitted_var.is_finite());
            assert!(row.mean_empirical_var.is_finite());
            assert_eq!(row.n_ok, 2);
        }
    }

    #[test]
    fn csv_writers_shapes() {
        let report = run_choose_k_study(
            &[1, 2],
            0.2,
            1,
            &spec(15, 3, 30, 19),
            19,
            &lean_config(),
        )
        .unwrap();
        let csv = choose_k_csv(&report);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("k,mean_loglik,mean_aic,mean_bic"));
    }
}
