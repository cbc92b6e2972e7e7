//! Command-line front end: fit models to CSV count data, simulate
//! zero-inflation scenarios, compare model families on one dataset, and run
//! the three simulation studies.
//!
//! Exit codes: 0 success, 1 input/usage error, 2 numerical non-convergence
//! (best-effort output still written).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use overcount::fit::{fit_model, FitConfig, FitResult, ModelSpec};
use overcount::io::{read_count_matrix, write_atomic, write_count_matrix};
use overcount::models::moments;
use overcount::sim::{
    empirical_moments, generate_base, inflate_zeros, run_asymptotic_study, run_choose_k_study,
    run_comparison_study, variance_distance, write_asymptotic_outputs, write_choose_k_outputs,
    write_comparison_outputs, ScenarioSpec, ZeroMode,
};
use overcount::util::derive_seed;
use overcount::Error;

#[derive(Parser)]
#[command(name = "overcount", version, about = "Overdispersed multivariate count models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model family to a CSV count matrix.
    Fit(FitArgs),
    /// Generate a simulated count matrix CSV.
    Simulate(SimulateArgs),
    /// Fit several families to one dataset and tabulate distance/BIC/AIC.
    Compare(CompareArgs),
    /// Run one of the three simulation studies.
    Study(StudyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Mn,
    Dm,
    Rcm,
    Nm,
    Gdm,
    Ddm,
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV of nonnegative integer counts.
    input: PathBuf,
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Number of mixture components (required for --family ddm).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ZeroModeArg {
    Random,
    Smallest,
}

impl From<ZeroModeArg> for ZeroMode {
    fn from(z: ZeroModeArg) -> ZeroMode {
        match z {
            ZeroModeArg::Random => ZeroMode::Random,
            ZeroModeArg::Smallest => ZeroMode::Smallest,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    p: usize,
    #[arg(long, default_value_t = 100)]
    m: u64,
    #[arg(long = "zero-mode", value_enum, default_value = "random")]
    zero_mode: ZeroModeArg,
    #[arg(long = "zero-level", default_value_t = 0.0)]
    zero_level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Input CSV of nonnegative integer counts.
    input: PathBuf,
    /// Comma-separated families: mn,dm,rcm,nm,gdm (ddm added via --k-list).
    #[arg(long, default_value = "mn,dm,gdm")]
    models: String,
    /// Comma-separated DDM component counts to include (e.g. 2,10).
    #[arg(long = "k-list", default_value = "")]
    k_list: String,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 3)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the table CSV and per-model JSONs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Comparison,
    Asymptotic,
    #[value(name = "choose-k")]
    ChooseK,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, value_enum)]
    which: Which,
    /// Replicate datasets per cell (desk-scale default 20).
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated zero levels (comparison study).
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    levels: String,
    /// DDM component counts: comma list or a..b range.
    #[arg(long = "k-list")]
    k_list: Option<String>,
    /// Zero level used by the asymptotic and choose-k studies.
    #[arg(long = "zero-level", default_value_t = 0.5)]
    zero_level: f64,
    #[arg(long = "zero-mode", value_enum, default_value = "random")]
    zero_mode: ZeroModeArg,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = 100)]
    m: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Paper-scale grid (100 replicates, p=20) instead of desk scale.
    #[arg(long = "full-grid", default_value_t = false)]
    full_grid: bool,
    /// Worker threads (fallback: OVERCOUNT_JOBS, then all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Study(args) => cmd_study(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn fit_config(tol: f64, max_iter: usize, starts: usize, seed: u64) -> FitConfig {
    FitConfig {
        tol_loglik: tol,
        max_em_iter: max_iter,
        n_starts: starts,
        seed,
        ..FitConfig::default()
    }
}

fn write_fit_json(path: &std::path::Path, fit: &FitResult) -> overcount::Result<()> {
    let json = serde_json::json!({
        "schema": 1,
        "result": fit,
    });
    write_atomic(path, &serde_json::to_string_pretty(&json)?)
}

fn cmd_fit(args: FitArgs) -> overcount::Result<ExitCode> {
    let spec = match args.family {
        FamilyArg::Mn => ModelSpec::Mn,
        FamilyArg::Dm => ModelSpec::Dm,
        FamilyArg::Rcm => ModelSpec::Rcm,
        FamilyArg::Nm => ModelSpec::Nm,
        FamilyArg::Gdm => ModelSpec::Gdm,
        FamilyArg::Ddm => {
            let k = args.k.ok_or_else(|| {
                Error::InvalidParameter("--family ddm requires --k COMPONENTS".into())
            })?;
            ModelSpec::Ddm { k }
        }
    };
    let data = read_count_matrix(&args.input)?;
    let (data, dropped) = data.drop_empty_rows()?;
    if dropped > 0 {
        eprintln!("note: dropped {dropped} all-zero rows");
    }
    let config = fit_config(args.tol, args.max_iter, args.starts, args.seed);
    let fit = fit_model(spec, &data, &config)?;
    write_fit_json(&args.out, &fit)?;
    println!(
        "{}: loglik {:.4}, aic {:.4}, bic {:.4}, converged: {}",
        spec.label(),
        fit.loglik,
        fit.aic,
        fit.bic,
        fit.converged
    );
    Ok(if fit.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_simulate(args: SimulateArgs) -> overcount::Result<ExitCode> {
    let spec = ScenarioSpec {
        n: args.n,
        p: args.p,
        m: args.m,
        zero_mode: args.zero_mode.into(),
        zero_level: args.zero_level,
        seed: args.seed,
        fix_pi: false,
    };
    let base = generate_base(&spec)?;
    let (data, _) = inflate_zeros(
        &base,
        spec.zero_mode,
        spec.zero_level,
        derive_seed(spec.seed, &[3]),
    )?;
    write_count_matrix(&args.out, &data)?;
    println!(
        "wrote {} rows x {} columns to {}",
        data.n(),
        data.p(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_model_list(models: &str, k_list: &str) -> overcount::Result<Vec<ModelSpec>> {
    let mut specs = Vec::new();
    for name in models.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        specs.push(ModelSpec::parse(name)?);
    }
    for k in k_list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let k: usize = k
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad component count '{k}'")))?;
        specs.push(ModelSpec::Ddm { k });
    }
    if specs.is_empty() {
        return Err(Error::InvalidParameter("no models requested".into()));
    }
    Ok(specs)
}

fn cmd_compare(args: CompareArgs) -> overcount::Result<ExitCode> {
    let specs = parse_model_list(&args.models, &args.k_list)?;
    let data = read_count_matrix(&args.input)?;
    let (data, dropped) = data.drop_empty_rows()?;
    if dropped > 0 {
        eprintln!("note: dropped {dropped} all-zero rows");
    }
    let empirical = empirical_moments(&data)?;
    let m_star = data.mean_row_sum().round().max(1.0) as u64;
    std::fs::create_dir_all(&args.out)?;

    let mut table = String::from("model,distance,bic,aic\n");
    let mut successes = 0usize;
    for (i, &spec) in specs.iter().enumerate() {
        let config = fit_config(
            args.tol,
            args.max_iter,
            args.starts,
            derive_seed(args.seed, &[i as u64]),
        );
        match fit_model(spec, &data, &config) {
            Ok(fit) => {
                let mm = moments(&fit.params, m_star);
                let distance = variance_distance(&mm, &empirical);
                table.push_str(&format!(
                    "{},{:.6},{:.6},{:.6}\n",
                    spec.label(),
                    distance,
                    fit.bic,
                    fit.aic
                ));
                write_fit_json(&args.out.join(format!("fit_{}.json", spec.label())), &fit)?;
                successes += 1;
            }
            Err(e) => {
                eprintln!("{} failed: {e}", spec.label());
                table.push_str(&format!("{},failed,failed,failed\n", spec.label()));
            }
        }
    }
    write_atomic(&args.out.join("comparison.csv"), &table)?;
    print!("{table}");
    Ok(if successes > 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn parse_levels(levels: &str) -> overcount::Result<Vec<f64>> {
    let mut out = Vec::new();
    for tok in levels.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad level '{tok}'")))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter("no levels given".into()));
    }
    Ok(out)
}

/// Accepts "1,2,5" or "1..5" (inclusive).
fn parse_k_list(s: &str) -> overcount::Result<Vec<usize>> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad K range '{s}'")))?;
        let hi: usize = hi
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad K range '{s}'")))?;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidParameter(format!("bad K range '{s}'")));
        }
        return Ok((lo..=hi).collect());
    }
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let k: usize = tok
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad component count '{tok}'")))?;
        if k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        out.push(k);
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter("no K values given".into()));
    }
    Ok(out)
}

fn configure_jobs(jobs: Option<usize>) {
    let jobs = jobs.or_else(|| {
        std::env::var("OVERCOUNT_JOBS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(j) = jobs {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global();
    }
}

fn cmd_study(args: StudyArgs) -> overcount::Result<ExitCode> {
    configure_jobs(args.jobs);
    let replicates = args
        .replicates
        .unwrap_or(if args.full_grid { 100 } else { 20 });
    let template = ScenarioSpec {
        n: args.n.unwrap_or(50),
        p: args.p.unwrap_or(if args.full_grid { 20 } else { 10 }),
        m: args.m,
        zero_mode: args.zero_mode.into(),
        zero_level: args.zero_level,
        seed: args.seed,
        fix_pi: false,
    };
    // Studies run many fits; keep each one lean.
    let config = FitConfig {
        tol_loglik: 1e-4,
        max_em_iter: 40,
        n_starts: 2,
        seed: args.seed,
        m_step_max_iter: 60,
        param_cap_per_obs: 2.0,
    };
    std::fs::create_dir_all(&args.out)?;

    match args.which {
        Which::Comparison => {
            let levels = parse_levels(&args.levels)?;
            let k_values = parse_k_list(args.k_list.as_deref().unwrap_or("2,10"))?;
            let mut models = vec![ModelSpec::Mn, ModelSpec::Dm, ModelSpec::Gdm];
            models.extend(k_values.iter().map(|&k| ModelSpec::Ddm { k }));
            let report =
                run_comparison_study(&levels, &models, replicates, &template, args.seed, &config)?;
            write_comparison_outputs(&args.out, &report)?;
            write_manifest(&args.out, report.records.len())?;
            // One-screen summary: per-level winner by mean distance.
            println!("comparison study: {} replicates, scenario {}", replicates, report.scenario);
            for lvl in &report.levels {
                let winner = report
                    .cells
                    .iter()
                    .filter(|c| c.level == lvl.level && c.n_ok > 0)
                    .min_by(|a, b| a.mean_distance.total_cmp(&b.mean_distance));
                if let Some(w) = winner {
                    println!(
                        "level {:.1}: best distance {} ({:.3}); empirical var {:.3}",
                        lvl.level, w.model, w.mean_distance, lvl.mean_empirical_var
                    );
                }
            }
        }
        Which::Asymptotic => {
            let k_values = parse_k_list(args.k_list.as_deref().unwrap_or("1,2,5,10,20"))?;
            let replicates = args.replicates.unwrap_or(if args.full_grid { 10 } else { 5 });
            let report = run_asymptotic_study(
                &k_values,
                args.zero_level,
                replicates,
                &template,
                args.seed,
                &config,
            )?;
            write_asymptotic_outputs(&args.out, &report)?;
            write_manifest(&args.out, report.rows.len())?;
            println!("asymptotic study at level {}:", report.level);
            for row in &report.rows {
                println!(
                    "K={}: fitted var {:.3}, empirical {:.3}, gap {:.3}",
                    row.k, row.mean_fitted_var, row.mean_empirical_var, row.mean_abs_gap
                );
            }
        }
        Which::ChooseK => {
            let k_values = parse_k_list(args.k_list.as_deref().unwrap_or("1..8"))?;
            let replicates = args.replicates.unwrap_or(if args.full_grid { 100 } else { 10 });
            let report = run_choose_k_study(
                &k_values,
                args.zero_level,
                replicates,
                &template,
                args.seed,
                &config,
            )?;
            write_choose_k_outputs(&args.out, &report)?;
            write_manifest(&args.out, report.rows.len())?;
            println!(
                "choose-k study at level {}: argmin-AIC K = {:?}",
                report.level, report.argmin_aic_k
            );
            for row in &report.rows {
                println!(
                    "K={}: mean AIC {:.2}, mean BIC {:.2}",
                    row.k, row.mean_aic, row.mean_bic
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_manifest(dir: &std::path::Path, completed_cells: usize) -> overcount::Result<()> {
    let json = serde_json::json!({
        "schema": 1,
        "completed_cells": completed_cells,
        "complete": true,
    });
    write_atomic(&dir.join("manifest.json"), &serde_json::to_string_pretty(&json)?)
}
