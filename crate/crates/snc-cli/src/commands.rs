//! Command implementations and file output.
//!
//! Every command writes a manifest.json next to its outputs carrying the
//! fully resolved configuration; `snc rerun --manifest <path>` re-executes
//! it. Curve files are plain CSV with fixed header rows so any plotting tool
//! can regenerate the figures.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use snc::harness::{
    compare_model_sim, run_campaign, CampaignConfig, ComparisonReport, ComparisonTolerances,
    Policy, SimStats,
};
use snc::model::{ChainMetrics, MarkovChain, ThetaFitParams, ThetaSource};
use snc::theta::{
    estimate_grid_outcomes, fit_gamma, fit_slopes, read_table, samples_to_table, write_table,
    GridPoint, SlopeFit, ThetaSample,
};

use crate::{
    CliError, CompareArgs, FitThetaArgs, ModelArgs, RerunArgs, SimulateArgs, SynthesisArg,
};

type CmdResult = Result<(), CliError>;

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    version: String,
    config: serde_json::Value,
    outputs: Vec<String>,
    duration_ms: u64,
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_manifest<C: Serialize>(
    dir: &Path,
    command: &str,
    config: &C,
    outputs: &[&str],
    started: Instant,
) -> Result<(), CliError> {
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: serde_json::to_value(config)?,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
        duration_ms: started.elapsed().as_millis() as u64,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn threads_or_default(threads: Option<usize>) -> usize {
    threads.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

fn load_theta_source(
    table: &Option<PathBuf>,
    w3: crate::W3Mode,
    q: u8,
    w: u32,
) -> Result<ThetaSource, CliError> {
    match table {
        None => Ok(ThetaSource::fitted_with(
            ThetaFitParams::for_q(q)?,
            w3.into(),
        )),
        Some(path) => {
            let file = fs::File::open(path)?;
            let samples = read_table(std::io::BufReader::new(file), &path.display().to_string())?;
            let table = samples_to_table(&samples, q, w);
            if table.is_empty() {
                return Err(CliError::Parameter(format!(
                    "{} holds no samples for q={q}, w={w}",
                    path.display()
                )));
            }
            Ok(ThetaSource::Table(table))
        }
    }
}

fn build_chain(
    k: u32,
    w: u32,
    q: u8,
    alpha: f64,
    theta_table: &Option<PathBuf>,
    w3: crate::W3Mode,
) -> Result<MarkovChain, CliError> {
    let source = load_theta_source(theta_table, w3, q, w)?;
    let chain = MarkovChain::build(k, w, q, &source)?;
    if alpha > 0.0 {
        Ok(chain.apply_erasure(alpha)?)
    } else {
        Ok(chain)
    }
}

pub(crate) fn cmd_model(args: &ModelArgs) -> CmdResult {
    let started = Instant::now();
    ensure_dir(&args.out_dir)?;
    let chain = build_chain(
        args.k,
        args.w,
        args.q,
        args.alpha,
        &args.theta_table,
        args.w3_gamma,
    )?;
    let metrics = chain.metrics(args.epsilon_max)?;
    write_json(&args.out_dir.join("metrics.json"), &metrics)?;

    let mut xi = String::from("epsilon,n,xi\n");
    for (eps, value) in metrics.xi.iter().enumerate() {
        xi.push_str(&format!("{eps},{},{value}\n", args.k + eps as u32));
    }
    fs::write(args.out_dir.join("xi_curve.csv"), xi)?;

    let mut delta = String::from("r,delta,lower_bound\n");
    for (i, (d, b)) in metrics.delta.iter().zip(&metrics.lower_bound).enumerate() {
        delta.push_str(&format!("{},{d},{b}\n", i + 1));
    }
    fs::write(args.out_dir.join("delta_curve.csv"), delta)?;

    write_manifest(
        &args.out_dir,
        "model",
        args,
        &["metrics.json", "xi_curve.csv", "delta_curve.csv"],
        started,
    )
}

pub(crate) fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    let started = Instant::now();
    ensure_dir(&args.out_dir)?;
    let policy: Policy = args.policy.into();
    let ladder = args
        .ladder
        .clone()
        .unwrap_or_else(|| CampaignConfig::default_ladder(args.k));
    let w = match (args.w, policy) {
        (Some(w), _) => w,
        (None, Policy::Tsnc) => *ladder.first().ok_or_else(|| {
            CliError::Parameter(format!("no density ladder available for k={}", args.k))
        })?,
        (None, Policy::Fixed) => {
            return Err(CliError::Parameter(
                "--w is required for the fixed policy".into(),
            ))
        }
    };
    let mut config = CampaignConfig::new(args.k, w, args.q);
    config.loss_rate = args.alpha;
    config.runs = args.runs;
    config.seed = args.seed;
    config.epsilon_max = args.epsilon_max;
    config.tsnc_threshold = args.threshold;
    config.ladder = Some(ladder);
    let stats = run_campaign(&config, policy, threads_or_default(args.threads))?;
    write_json(&args.out_dir.join("stats.json"), &stats)?;
    fs::write(args.out_dir.join("curves.csv"), sim_curves_csv(&stats))?;
    write_manifest(
        &args.out_dir,
        "simulate",
        args,
        &["stats.json", "curves.csv"],
        started,
    )
}

fn sim_curves_csv(stats: &SimStats) -> String {
    let mut out = String::from("curve,x,value\n");
    for (eps, v) in stats.xi_hat.iter().enumerate() {
        out.push_str(&format!("xi,{eps},{v}\n"));
    }
    for (i, v) in stats.delta_hat.iter().enumerate() {
        out.push_str(&format!("delta,{},{v}\n", i + 1));
    }
    for (i, v) in stats.delta_hat_dwell.iter().enumerate() {
        out.push_str(&format!("delta_dwell,{},{v}\n", i + 1));
    }
    for (i, v) in stats.mean_ops_at_rank.iter().enumerate() {
        out.push_str(&format!("ops,{},{v}\n", i + 1));
    }
    for (r, v) in stats.mean_density_at_rank.iter().enumerate() {
        out.push_str(&format!("density,{r},{v}\n"));
    }
    out
}

/// Reference slope parameters for a (q, w) regime, for side-by-side output.
#[derive(Debug, Serialize)]
struct ReferenceSlopes {
    m: f64,
    b: f64,
    c0: f64,
}

#[derive(Debug, Serialize)]
struct SlopesReport {
    q: u8,
    w: u32,
    fit: SlopeFit,
    reference: ReferenceSlopes,
    gamma_points: Vec<(u32, f64)>,
    skipped_points: Vec<GridPoint>,
}

pub(crate) fn cmd_fit_theta(args: &FitThetaArgs) -> CmdResult {
    let started = Instant::now();
    ensure_dir(&args.out_dir)?;
    if args.w == 0 {
        return Err(CliError::Parameter("density w must be >= 1".into()));
    }
    let coverages = args.coverages.clone().unwrap_or_else(|| {
        let start = (2 * args.w).max(12);
        (0..5).map(|i| start + 4 * i).collect()
    });
    let mut points: Vec<GridPoint> = Vec::new();
    for &c in &coverages {
        if c < args.w {
            return Err(CliError::Parameter(format!(
                "coverage {c} below density w={}",
                args.w
            )));
        }
        points.extend(rank_grid(
            c,
            args.w,
            args.synthesis,
            args.ranks_per_coverage,
            args.full_grid,
        ));
    }
    let outcomes = estimate_grid_outcomes(
        args.q,
        args.w,
        &points,
        args.trials,
        args.probes_per_state,
        args.synthesis.into(),
        args.seed,
        threads_or_default(args.threads),
    );
    let mut samples: Vec<ThetaSample> = Vec::new();
    let mut skipped: Vec<GridPoint> = Vec::new();
    for (point, outcome) in outcomes {
        match outcome {
            Ok(sample) => samples.push(sample),
            Err(snc::Error::Synthesis { r, c, attempts }) => {
                eprintln!(
                    "note: skipped unreachable state (r={r}, c={c}) after {attempts} attempts"
                );
                skipped.push(point);
            }
            Err(e) => return Err(e.into()),
        }
    }
    if samples.is_empty() {
        return Err(CliError::Parameter(
            "no grid point could be estimated; widen the grid or switch synthesis".into(),
        ));
    }

    let mut table_file = fs::File::create(args.out_dir.join("theta_table.csv"))?;
    write_table(&mut table_file, &samples)?;

    let mut gamma_csv = String::from("q,w,c,gamma_hat,samples_used\n");
    let mut gamma_points: Vec<(u32, f64)> = Vec::new();
    for &c in &coverages {
        let slice: Vec<ThetaSample> = samples.iter().copied().filter(|s| s.c == c).collect();
        match fit_gamma(&slice) {
            Ok(g) => {
                gamma_csv.push_str(&format!("{},{},{c},{g},{}\n", args.q, args.w, slice.len()));
                gamma_points.push((c, g));
            }
            Err(e) => eprintln!("note: no exponent for c={c}: {e}"),
        }
    }
    fs::write(args.out_dir.join("gamma_fit.csv"), gamma_csv)?;

    // Slope regimes exist for w >= 3; below that the table itself is the
    // product (a dependence source for densities outside the fitted range).
    let mut outputs = vec!["theta_table.csv", "gamma_fit.csv"];
    if args.w >= 3 {
        let fit = fit_slopes(&gamma_points, args.w, args.q).map_err(CliError::from)?;
        let params = ThetaFitParams::for_q(args.q)?;
        let reference = match args.w {
            3 => ReferenceSlopes {
                m: params.m_odd,
                b: 0.0,
                c0: params.c0,
            },
            4 => ReferenceSlopes {
                m: params.m_w4,
                b: params.b_w4,
                c0: 0.0,
            },
            w if w % 2 == 1 => ReferenceSlopes {
                m: params.m_odd,
                b: 0.0,
                c0: 0.0,
            },
            _ => ReferenceSlopes {
                m: params.m_even,
                b: 0.0,
                c0: 0.0,
            },
        };
        write_json(
            &args.out_dir.join("slopes.json"),
            &SlopesReport {
                q: args.q,
                w: args.w,
                fit,
                reference,
                gamma_points,
                skipped_points: skipped,
            },
        )?;
        outputs.push("slopes.json");
    } else {
        eprintln!(
            "note: w={} has no slope regime; table emitted without slopes.json",
            args.w
        );
    }
    write_manifest(&args.out_dir, "fit-theta", args, &outputs, started)
}

fn rank_grid(
    c: u32,
    w: u32,
    synthesis: SynthesisArg,
    ranks_per_coverage: u32,
    full_grid: bool,
) -> Vec<GridPoint> {
    let r_lo = match synthesis {
        // Rejection sampling cannot reach rare low-rank/full-coverage
        // states; stay in the band the natural process visits.
        SynthesisArg::Rejection => {
            if w < 5 {
                (c * 7).div_ceil(10)
            } else {
                (c * 55).div_ceil(100)
            }
        }
        SynthesisArg::Constructed => c.div_ceil(w),
    }
    .max(1);
    let r_hi = c.saturating_sub(1);
    if r_lo > r_hi {
        return Vec::new();
    }
    let span = r_hi - r_lo;
    if full_grid || span < ranks_per_coverage {
        return (r_lo..=r_hi).map(|r| (c, r)).collect();
    }
    let mut out = Vec::with_capacity(ranks_per_coverage as usize);
    for i in 0..ranks_per_coverage {
        let r = r_lo + (span * i).div_ceil(ranks_per_coverage - 1).min(span);
        if out.last() != Some(&(c, r)) {
            out.push((c, r));
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct CompareOutput {
    report: ComparisonReport,
    tolerances: ComparisonTolerances,
    checks: Vec<snc::harness::CheckLine>,
    all_pass: bool,
}

pub(crate) fn cmd_compare(args: &CompareArgs) -> CmdResult {
    let started = Instant::now();
    ensure_dir(&args.out_dir)?;
    let metrics: ChainMetrics = match &args.model_json {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => {
            let (k, w, q) = inline_params(args)?;
            build_chain(k, w, q, args.alpha, &args.theta_table, args.w3_gamma)?
                .metrics(args.epsilon_max)?
        }
    };
    let stats: SimStats = match &args.sim_json {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => {
            let (k, w, q) = inline_params(args)?;
            let mut config = CampaignConfig::new(k, w, q);
            config.loss_rate = args.alpha;
            config.runs = args.runs;
            config.seed = args.seed;
            config.epsilon_max = args.epsilon_max;
            run_campaign(&config, Policy::Fixed, threads_or_default(args.threads))?
        }
    };
    let report = compare_model_sim(&metrics, &stats)?;
    let tolerances = ComparisonTolerances {
        max_mean_rel_err: args.max_mean_rel_err,
        max_delta_mse: args.max_delta_mse,
        max_xi_mse: args.max_xi_mse,
    };
    let checks = report.evaluate(&tolerances);
    let all_pass = checks.iter().all(|c| c.pass);
    write_json(
        &args.out_dir.join("report.json"),
        &CompareOutput {
            report: report.clone(),
            tolerances,
            checks: checks.clone(),
            all_pass,
        },
    )?;

    let mut csv = String::from("curve,x,model,sim,lower_bound\n");
    for row in &report.delta_rows {
        csv.push_str(&format!(
            "delta,{},{},{},{}\n",
            row.r, row.model, row.sim, row.lower_bound
        ));
    }
    for row in &report.xi_rows {
        csv.push_str(&format!("xi,{},{},{},\n", row.epsilon, row.model, row.sim));
    }
    fs::write(args.out_dir.join("report.csv"), csv)?;
    write_manifest(
        &args.out_dir,
        "compare",
        args,
        &["report.json", "report.csv"],
        started,
    )?;
    if all_pass {
        Ok(())
    } else {
        let failed: Vec<String> = checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} = {:.3e} > {:.3e}", c.name, c.value, c.tolerance))
            .collect();
        Err(CliError::ToleranceFailed(format!(
            "comparison outside tolerance: {}",
            failed.join(", ")
        )))
    }
}

fn inline_params(args: &CompareArgs) -> Result<(u32, u32, u8), CliError> {
    match (args.k, args.w, args.q) {
        (Some(k), Some(w), Some(q)) => Ok((k, w, q)),
        _ => Err(CliError::Parameter(
            "--k, --w and --q are required unless both --model-json and --sim-json are given"
                .into(),
        )),
    }
}

pub(crate) fn cmd_rerun(args: &RerunArgs) -> CmdResult {
    let text = fs::read_to_string(&args.manifest)?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    match manifest.command.as_str() {
        "model" => cmd_model(&serde_json::from_value(manifest.config)?),
        "simulate" => cmd_simulate(&serde_json::from_value(manifest.config)?),
        "fit-theta" => cmd_fit_theta(&serde_json::from_value(manifest.config)?),
        "compare" => cmd_compare(&serde_json::from_value(manifest.config)?),
        other => Err(CliError::Parameter(format!(
            "manifest names unknown command {other:?}"
        ))),
    }
}
