mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fwpomdp::diagnostics::gaussian::{default_pairs, gaussian_table, ObsLevels};
use fwpomdp::diagnostics::{diagnose, AlphaZChoice, DiagnosticsConfig, DiagnosticsReport};
use fwpomdp::experiments::{error_curves, run_experiment, EvalMode, ExperimentConfig, ExperimentResult};
use fwpomdp::finite_mdp::{build_finite_mdp, default_max_iter, value_iteration};
use fwpomdp::model::{build_machine_repair, MachineRepairParams};
use fwpomdp::policy::{FiniteWindowPolicy, FixedAction, HistoryPolicy, WithWarmup};
use fwpomdp::quantizer::{build_quantized_set, QuantizerConfig, DEFAULT_CAPACITY_LIMIT};
use fwpomdp::stability::{stability_decay_curve, StabilityMode};
use fwpomdp::{Belief, Error, PomdpModel};

use output::{csv_bytes, emit, json_bytes, num, write_atomic};

#[derive(Parser)]
#[command(name = "fwpomdp", version, about = "Finite-window POMDP policies and filter-stability diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the machine-repair model of one of the three study cases.
    Model {
        #[arg(long, default_value_t = 1)]
        case: u8,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and solve the finite belief MDP for a window size.
    Solve {
        model: PathBuf,
        #[arg(long, default_value_t = 1)]
        window: usize,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        /// Drop histories whose path probability is at most this.
        #[arg(long, default_value_t = 0.0)]
        prune: f64,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Contraction coefficients and bound constants.
    Diagnose {
        model: PathBuf,
        #[arg(long)]
        beta_override: Option<f64>,
        #[arg(long = "n-max", alias = "N-max", default_value_t = 10)]
        n_max: usize,
        /// Flag the report when the computed alpha differs from this value.
        #[arg(long)]
        asserted_alpha: Option<f64>,
        #[arg(long, value_enum, default_value_t = AlphaZArg::Selected)]
        alpha_z: AlphaZArg,
        #[arg(long, default_value_t = 2.0)]
        l_inf: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filter-stability decay curve between the model's prior and reference prior.
    Stability {
        model: PathBuf,
        #[arg(long = "n-max", alias = "N-max", default_value_t = 5)]
        n_max: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed action, or the warm-up action when --window is given.
        #[arg(long, default_value_t = 0)]
        action: usize,
        /// Drive the filters with the solved policy of this window size.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the machine-repair study and write its CSV and JSON results.
    Experiment {
        #[arg(long, default_value_t = 1)]
        case: u8,
        /// Run on this model file instead of a built-in case.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Window sizes, as `0-5` or `0,2,4`.
        #[arg(long = "n-range", alias = "N-range", default_value = "0-5")]
        n_range: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = fwpomdp::experiments::DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dobrushin coefficients of the additive-Gaussian example.
    GaussianTable {
        #[arg(long, default_value_t = 2)]
        obs_levels: u8,
        /// CSV with columns ratio_t,ratio_q (`any` allowed); defaults to the published columns.
        #[arg(long)]
        ratios: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlphaZArg {
    Selected,
    BlPlain,
    BlChannel,
    TvPlain,
    TvChannel,
}

impl From<AlphaZArg> for AlphaZChoice {
    fn from(a: AlphaZArg) -> Self {
        match a {
            AlphaZArg::Selected => AlphaZChoice::Selected,
            AlphaZArg::BlPlain => AlphaZChoice::BlPlain,
            AlphaZArg::BlChannel => AlphaZChoice::BlChannel,
            AlphaZArg::TvPlain => AlphaZChoice::TvPlain,
            AlphaZArg::TvChannel => AlphaZChoice::TvChannel,
        }
    }
}

fn load_model(path: &Path) -> Result<PomdpModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let model: PomdpModel = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(model.validated()?)
}

fn solve(model: &Path, window: usize, tolerance: f64, prune: f64, max_iter: Option<usize>, out: &Path) -> Result<()> {
    let m = load_model(model)?;
    let config = QuantizerConfig { prune_threshold: prune, ..QuantizerConfig::default() };
    let mdp = build_finite_mdp(build_quantized_set(&m, window, &config)?, &m)?;
    let solved = value_iteration(&mdp, tolerance, max_iter.unwrap_or_else(|| default_max_iter(&mdp, tolerance)))?;
    write_atomic(out, &json_bytes(&solved)?)?;
    println!("window {window}: {} states, {} iterations, residual {:.3e}", mdp.n_states(), solved.iteration_count, solved.residual);
    println!("wrote {}", out.display());
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into())
}

fn print_report(r: &DiagnosticsReport, to_stderr: bool) {
    let mut lines = vec![
        format!("delta_T per action  {:?}", r.delta_t_per_action),
        format!("delta_T min         {:.6}", r.delta_t_min),
        format!("delta_Q             {:.6}", r.delta_q),
        format!("alpha               {:.6}", r.alpha),
        format!("alpha_X             {:.6}", r.alpha_x),
        format!("alpha_c             {:.6}", r.alpha_c),
        format!("alpha_Z selected    {:.6}", r.alpha_z_selected),
        format!("beta / threshold    {:.6} / {:.6}", r.beta, r.beta_threshold),
        format!("K                   {}", opt(r.k)),
    ];
    if let Some(reason) = &r.k_unavailable_reason {
        lines.push(format!("K unavailable       {reason}"));
    }
    if r.alpha_mismatch {
        lines.push(format!("alpha differs from asserted value {}", opt(r.asserted_alpha)));
    }
    for l in lines {
        if to_stderr {
            eprintln!("{l}");
        } else {
            println!("{l}");
        }
    }
}

fn history_policy(m: &PomdpModel, action: usize, window: Option<usize>) -> Result<Box<dyn HistoryPolicy>> {
    m.check_action(action)?;
    Ok(match window {
        None => Box::new(FixedAction(action)),
        Some(n) => {
            let mdp = build_finite_mdp(build_quantized_set(m, n, &QuantizerConfig::default())?, m)?;
            let solved = value_iteration(&mdp, 1e-9, default_max_iter(&mdp, 1e-9))?;
            Box::new(WithWarmup { policy: FiniteWindowPolicy { model: m.clone(), mdp, solved }, warmup_action: action })
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn stability(model: &Path, n_max: usize, mode: ModeArg, samples: u64, seed: u64, action: usize, window: Option<usize>, out: Option<&Path>) -> Result<()> {
    let m = load_model(model)?;
    let prior = Belief::new(m.prior.clone())?;
    let anchor = Belief::new(m.reference_prior.clone())?;
    let policy = history_policy(&m, action, window)?;
    let mode = match mode {
        ModeArg::Exact => StabilityMode::Exact { capacity_limit: DEFAULT_CAPACITY_LIMIT },
        ModeArg::Mc => StabilityMode::MonteCarlo { samples, seed },
    };
    let curve = stability_decay_curve(&m, &prior, &anchor, policy.as_ref(), n_max, mode)?;
    let rows = curve
        .iter()
        .map(|p| vec![p.n.to_string(), num(p.mean_tv), num(p.se_tv), num(p.mean_bl), num(p.se_bl), num(p.envelope)]);
    emit(out, &csv_bytes(&["N", "mean_tv", "se_tv", "mean_bl", "se_bl", "envelope_2_alpha_N"], rows)?)
}

fn parse_range(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    let out: Vec<usize> = if let Some((a, b)) = s.split_once('-') {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty window range {s}");
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse::<usize>()).collect::<std::result::Result<_, _>>()?
    };
    if out.is_empty() {
        bail!("empty window range {s}");
    }
    Ok(out)
}

fn experiment_csv(r: &ExperimentResult) -> Result<Vec<u8>> {
    let rows = r.records.iter().map(|x| {
        vec![
            x.n.to_string(),
            num(x.approx_value),
            num(x.realized_cost),
            num(x.value_error),
            num(x.robustness_error),
            num(x.filter_stability_term),
            num(x.alpha_pow_n),
        ]
    });
    csv_bytes(&["N", "approx_value", "realized_cost", "value_error", "robustness_error", "stability_term", "alpha_pow_N"], rows)
}

#[allow(clippy::too_many_arguments)]
fn experiment(case: u8, model: Option<&Path>, n_range: &str, mode: ModeArg, samples: u64, seed: u64, horizon: usize, warmup: usize, out: &Path) -> Result<()> {
    let (m, case_id) = match model {
        Some(p) => (load_model(p)?, None),
        None => (build_machine_repair(&MachineRepairParams::case(case)?)?, Some(case)),
    };
    let eval = match mode {
        ModeArg::Exact => EvalMode::Exact { capacity_limit: DEFAULT_CAPACITY_LIMIT },
        ModeArg::Mc => EvalMode::MonteCarlo { samples, seed },
    };
    let config = ExperimentConfig {
        window_sizes: parse_range(n_range).map_err(|e| Error::MalformedWindow(format!("--n-range: {e}")))?,
        warmup_steps: warmup,
        horizon,
        eval,
        mc_fallback_samples: samples,
        seed,
        ..ExperimentConfig::default()
    };
    let result = run_experiment(&m, &config, case_id)?;
    let stem = case_id.map(|c| format!("case{c}")).unwrap_or_else(|| "model".into());
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(&out.join(format!("{stem}.csv")), &experiment_csv(&result)?)?;
    write_atomic(&out.join(format!("{stem}.json")), &json_bytes(&result)?)?;
    match error_curves(&result) {
        Ok(curves) => {
            let rows = curves.iter().map(|c| {
                vec![c.n.to_string(), num(c.value_error), num(c.robustness_error), num(c.stability_term), num(c.alpha_pow_n)]
            });
            let bytes = csv_bytes(&["N", "value_error", "robustness_error", "stability_term", "alpha_pow_N"], rows)?;
            write_atomic(&out.join(format!("{stem}_normalized.csv")), &bytes)?;
        }
        Err(e) => eprintln!("normalized curves skipped: {e}"),
    }
    for r in &result.records {
        println!(
            "N={} approx {:.6} realized {:.6} value_err {:.6} robust_err {:.6} stability {:.6}",
            r.n, r.approx_value, r.realized_cost, r.value_error, r.robustness_error, r.filter_stability_term
        );
    }
    println!("alpha {:.6}, truncation bound {:.3e}, wrote {}", result.alpha, result.truncation_error_bound, out.display());
    Ok(())
}

fn read_ratios(path: &Path) -> Result<Vec<(f64, Option<f64>)>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let t: f64 = rec.get(0).ok_or_else(|| anyhow!("missing ratio_t"))?.trim().parse()?;
        let q = match rec.get(1).map(str::trim) {
            None | Some("") | Some("any") => None,
            Some(v) => Some(v.parse::<f64>()?),
        };
        pairs.push((t, q));
    }
    Ok(pairs)
}

fn gaussian(levels: u8, ratios: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let levels = ObsLevels::try_from(levels)?;
    let pairs = match ratios {
        Some(p) => read_ratios(p).map_err(|e| Error::MalformedKernel(format!("--ratios: {e}")))?,
        None => default_pairs(levels),
    };
    let rows = gaussian_table(&pairs, levels)?;
    let any = |v: Option<f64>| v.map(num).unwrap_or_else(|| "any".into());
    let body = rows.iter().map(|r| {
        vec![
            num(r.ratio_t),
            any(r.ratio_q),
            num(r.delta_t),
            r.delta_q_hat.map(num).unwrap_or_else(|| "any".into()),
            r.alpha_condition_holds.map(|b| b.to_string()).unwrap_or_else(|| "true".into()),
            any(r.ratio_q_min),
        ]
    });
    emit(out, &csv_bytes(&["ratio_t", "ratio_q_min", "delta_T", "delta_Q_hat", "condition_holds", "bisected_ratio_q_min"], body)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Model { case, out } => {
            let m = build_machine_repair(&MachineRepairParams::case(case)?)?;
            emit(out.as_deref(), &json_bytes(&m)?)
        }
        Command::Solve { model, window, tolerance, prune, max_iter, out } => solve(&model, window, tolerance, prune, max_iter, &out),
        Command::Diagnose { model, beta_override, n_max, asserted_alpha, alpha_z, l_inf, out } => {
            let m = load_model(&model)?;
            let config = DiagnosticsConfig { beta_override, n_max, alpha_z_choice: alpha_z.into(), asserted_alpha, l_inf };
            let report = diagnose(&m, &config)?;
            print_report(&report, out.is_none());
            emit(out.as_deref(), &json_bytes(&report)?)
        }
        Command::Stability { model, n_max, mode, samples, seed, action, window, out } => {
            stability(&model, n_max, mode, samples, seed, action, window, out.as_deref())
        }
        Command::Experiment { case, model, n_range, mode, samples, seed, horizon, warmup, out } => {
            experiment(case, model.as_deref(), &n_range, mode, samples, seed, horizon, warmup, &out)
        }
        Command::GaussianTable { obs_levels, ratios, out } => gaussian(obs_levels, ratios.as_deref(), out.as_deref()),
    }
}

/// 2 for bad input, 3 for non-convergence, 4 for capacity, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NotConverged { .. } => 3,
                Error::CapacityExceeded { .. } => 4,
                _ => 2,
            };
        }
        if cause.is::<serde_json::Error>() || cause.is::<std::num::ParseIntError>() || cause.is::<std::num::ParseFloatError>() {
            return 2;
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return 2;
            }
        }
    }
    1
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("FW_POMDP_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("FW_POMDP_THREADS={v}"))?;
        if n > 0 {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
