mod config;
mod output;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;

use dglab::oracle::{ess3_moment, ess4_case1, ess4_case2, ess4_werner, OracleReport};
use dglab::signaling::{sweep, twin_run, SweepSummary, TwinRun};
use dglab::validate::{run_validation, ValidateOptions};
use dglab::{Classification, TimeSeries};

use config::{read_points, Format, RunConfig};
use output::{fmt_f64, fmt_opt, write_csv, write_json};

/// Twin-run signaling experiments for two-particle nonlinear Schroedinger
/// dynamics of Doebner-Goldin type.
#[derive(Parser)]
#[command(name = "dglab", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `output.directory` from the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Reserved; the dynamics are deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Twin run with and without the potential, order detection and oracle.
    Run { config: PathBuf },
    /// Closed-form prediction only, no time evolution.
    Oracle {
        config: PathBuf,
        /// 3 or 4; overrides `oracle.order`.
        #[arg(long)]
        order: Option<usize>,
    },
    /// One twin run per coefficient point; checks the class/order partition.
    Sweep {
        config: PathBuf,
        /// Text file with five coefficients c1..c5 per line.
        points: PathBuf,
    },
    /// Fast invariant suite.
    Validate {
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 0.02)]
        t_final: f64,
    },
}

/// Process exit statuses.
mod exit {
    pub const CONFIG: u8 = 1;
    pub const SOLVER: u8 = 2;
    pub const PARTITION: u8 = 3;
    pub const VALIDATION: u8 = 4;
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn config(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: exit::CONFIG,
            error: error.into(),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Bad input is a config error; anything raised while integrating or
/// fitting is a solver abort.
fn classify(e: dglab::Error) -> Failure {
    use dglab::Error as E;
    let code = match &e {
        _ if e.is_solver_abort() => exit::SOLVER,
        E::InvalidGrid(_)
        | E::InvalidIntegrator(_)
        | E::InvalidPotential(_)
        | E::InvalidState(_)
        | E::PotentialNotParticle2
        | E::EmptySweep
        | E::WernerViolating => exit::CONFIG,
        _ => exit::SOLVER,
    };
    Failure {
        code,
        error: e.into(),
    }
}

fn io_failure(e: anyhow::Error) -> Failure {
    Failure { code: exit::SOLVER, error: e }
}

fn load(path: &Path, output_dir: &Option<PathBuf>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(Failure::config)?;
    if let Some(dir) = output_dir {
        cfg.output.directory = dir.clone();
    }
    Ok(cfg)
}

fn prepare_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(io_failure)
}

#[derive(Serialize)]
struct RunPayload<'a> {
    report: &'a dglab::signaling::SignalReport,
}

fn series_rows(delta: &TimeSeries, l1: &TimeSeries, fit: Option<&dglab::observables::TaylorFit>) -> Vec<Vec<String>> {
    delta
        .times()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let model = fit.filter(|f| t <= f.window * (1.0 + 1e-12)).map(|f| f.eval(t));
            vec![fmt_f64(t), fmt_f64(delta.values()[i]), fmt_f64(l1.values()[i]), fmt_opt(model)]
        })
        .collect()
}

/// Marginal snapshots at about twenty evenly spaced recorded times.
fn marginal_rows(run: &TwinRun) -> Vec<Vec<String>> {
    let m = &run.marginals;
    let nt = m.times.len();
    let step = (nt / 20).max(1);
    let mut picks: Vec<usize> = (0..nt).step_by(step).collect();
    if picks.last() != Some(&(nt - 1)) {
        picks.push(nt - 1);
    }
    let mut rows = Vec::new();
    for i in picks {
        for (j, &x) in m.x.iter().enumerate() {
            let (a, b) = (m.with_potential[i][j], m.baseline[i][j]);
            rows.push(vec![fmt_f64(m.times[i]), fmt_f64(x), fmt_f64(a), fmt_f64(b), fmt_f64(a - b)]);
        }
    }
    rows
}

fn cmd_run(path: &Path, output_dir: &Option<PathBuf>) -> Outcome {
    let cfg = load(path, output_dir)?;
    let scenario = cfg.scenario().map_err(Failure::config)?;
    let run = twin_run(&scenario).map_err(classify)?;
    let r = &run.report;
    let dir = &cfg.output.directory;
    prepare_dir(dir)?;

    let fit_order = r.fitted.map(|f| f.order).unwrap_or(scenario.fit.max_order);
    let fit = r.detection.fits.get(fit_order - 1);
    let write = || -> anyhow::Result<()> {
        if cfg.wants(Format::Json) {
            write_json(&dir.join("report.json"), &cfg, &RunPayload { report: r })?;
        }
        if cfg.wants(Format::Csv) {
            write_csv(
                &dir.join("delta_moment.csv"),
                &cfg,
                &["t", "delta_moment", "delta_marginal_l1", "fit"],
                &series_rows(&r.delta_moment, &r.delta_marginal_l1, fit),
            )?;
            write_csv(
                &dir.join("marginals.csv"),
                &cfg,
                &["t", "x1", "rho1_potential", "rho1_baseline", "difference"],
                &marginal_rows(&run),
            )?;
        }
        if cfg.wants(Format::Svg) {
            let meta = output::csv_preamble(&cfg)?;
            plot::delta_moment(&dir.join("delta_moment.svg"), &r.delta_moment, &meta)?;
            if let Some(f) = fit {
                plot::fit_overlay(&dir.join("fit_overlay.svg"), &r.delta_moment, f, &meta)?;
            }
            plot::marginal_difference(&dir.join("marginal_difference.svg"), &run.marginals, &meta)?;
        }
        Ok(())
    };
    write().map_err(io_failure)?;

    println!("class            {}", r.class.as_str());
    println!(
        "detected order   {}",
        r.detected_order.map_or("none".to_string(), |k| k.to_string())
    );
    if let Some(f) = r.fitted {
        println!("fitted {}!a_{}      {} +- {}", f.order, f.order, fmt_f64(f.value), fmt_f64(f.uncertainty));
    }
    if let Some(o) = &r.oracle {
        println!("oracle order {}   {}", o.order, fmt_f64(o.value));
    }
    if let Some(a) = r.agreement_ratio {
        println!("agreement ratio  {}", fmt_f64(a));
    }
    println!("max |delta|      {}", fmt_f64(r.delta_moment.max_abs()));
    println!("outputs in       {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct CaseIntegrals {
    case1: f64,
    case2: f64,
}

#[derive(Serialize)]
struct OraclePayload {
    oracle: OracleReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    case_integrals: Option<CaseIntegrals>,
}

fn cmd_oracle(path: &Path, order: Option<usize>, output_dir: &Option<PathBuf>) -> Outcome {
    let mut cfg = load(path, output_dir)?;
    if order.is_some() {
        cfg.oracle.order = order;
    }
    let grid = cfg.grid().map_err(Failure::config)?;
    let coeffs = cfg.coefficients.to_coefficients().map_err(Failure::config)?;
    let class = coeffs.classify();
    let order = match cfg.oracle.order {
        Some(k @ (3 | 4)) => k,
        Some(k) => return Err(Failure::config(anyhow::anyhow!("oracle order must be 3 or 4, got {k}"))),
        None if class == Classification::WernerViolating => 3,
        None => 4,
    };
    if order == 4 && class == Classification::WernerViolating {
        return Err(Failure::config(anyhow::anyhow!(
            "the fourth-order prediction only covers coefficients with c3 = 0 and c1 + c4 = 0; \
             these coefficients are werner_violating, whose leading signal is third order (use order 3)"
        )));
    }
    let prepared = cfg.state().map_err(Failure::config)?.prepare(&grid).map_err(classify)?;
    let v = cfg.potential().map_err(Failure::config)?.sample(&grid).map_err(classify)?;
    let (prediction, cases) = if order == 3 {
        (ess3_moment(&prepared.psi, &v, &coeffs).map_err(classify)?, None)
    } else {
        let rho0 = dglab::hydro::density(&prepared.psi);
        let cases = CaseIntegrals {
            case1: ess4_case1(&prepared.psi, &v).map_err(classify)?,
            case2: ess4_case2(&rho0, &v).map_err(classify)?,
        };
        (ess4_werner(&prepared.psi, &v, &coeffs).map_err(classify)?, Some(cases))
    };
    let payload = OraclePayload {
        oracle: OracleReport::new(prediction, &grid, prepared.normalization_factor),
        case_integrals: cases,
    };
    let dir = &cfg.output.directory;
    if cfg.wants(Format::Json) {
        prepare_dir(dir)?;
        write_json(&dir.join("oracle.json"), &cfg, &payload).map_err(io_failure)?;
    }
    println!("class            {}", class.as_str());
    println!("order            {}", payload.oracle.order);
    println!("value            {}", fmt_f64(payload.oracle.value));
    if let Some(c) = &payload.case_integrals {
        println!("case1 integral   {}", fmt_f64(c.case1));
        println!("case2 integral   {}", fmt_f64(c.case2));
    }
    Ok(())
}

fn sweep_rows(s: &SweepSummary) -> Vec<Vec<String>> {
    s.rows
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.coefficients.as_array().iter().map(|c| fmt_f64(*c)).collect();
            row.push(r.class.as_str().to_string());
            row.push(r.detected_order.map_or(String::new(), |k| k.to_string()));
            row.push(fmt_opt(r.fitted));
            row.push(fmt_opt(r.oracle));
            row.push(fmt_opt(r.agreement_ratio));
            row.push(r.partition_ok.to_string());
            row.push(r.error.clone().unwrap_or_default().replace([',', '\n'], ";"));
            row
        })
        .collect()
}

#[derive(Serialize)]
struct SweepPayload<'a> {
    sweep: &'a SweepSummary,
}

fn cmd_sweep(path: &Path, points: &Path, output_dir: &Option<PathBuf>) -> Outcome {
    let cfg = load(path, output_dir)?;
    let scenario = cfg.scenario().map_err(Failure::config)?;
    let points = read_points(points).map_err(Failure::config)?;
    let summary = sweep(&scenario, &points).map_err(classify)?;
    let dir = &cfg.output.directory;
    prepare_dir(dir)?;
    let write = || -> anyhow::Result<()> {
        if cfg.wants(Format::Csv) {
            write_csv(
                &dir.join("sweep_summary.csv"),
                &cfg,
                &[
                    "c1",
                    "c2",
                    "c3",
                    "c4",
                    "c5",
                    "class",
                    "detected_order",
                    "fitted",
                    "oracle",
                    "agreement_ratio",
                    "partition_ok",
                    "error",
                ],
                &sweep_rows(&summary),
            )?;
        }
        if cfg.wants(Format::Json) {
            write_json(&dir.join("sweep.json"), &cfg, &SweepPayload { sweep: &summary })?;
        }
        Ok(())
    };
    write().map_err(io_failure)?;

    println!("{:<28} {:<10} {}", "class", "expected", "detected");
    for (class, orders) in &summary.partition {
        let expected = match class {
            Classification::Linear | Classification::GisinFree => "none",
            Classification::WernerSatisfiedSignaling => "4",
            Classification::WernerViolating => "<= 3",
        };
        let seen: Vec<String> = orders
            .iter()
            .map(|o| o.map_or("none".to_string(), |k| k.to_string()))
            .collect();
        println!("{:<28} {:<10} {}", class.as_str(), expected, seen.join(" "));
    }
    for r in summary.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "point {:?} failed: {}",
            r.coefficients.as_array(),
            r.error.as_deref().unwrap_or_default()
        );
    }
    if !summary.partition_ok {
        return Err(Failure {
            code: exit::PARTITION,
            error: anyhow::anyhow!("detected orders contradict the expected class partition"),
        });
    }
    Ok(())
}

fn cmd_validate(opts: ValidateOptions, output_dir: &Option<PathBuf>) -> Outcome {
    let report = run_validation(&opts).map_err(classify)?;
    print!("{}", report.table());
    if let Some(dir) = output_dir {
        prepare_dir(dir)?;
        #[derive(Serialize)]
        struct Payload<'a> {
            validation: &'a dglab::validate::ValidationReport,
        }
        write_json(&dir.join("validation.json"), &opts, &Payload { validation: &report }).map_err(io_failure)?;
    }
    if !report.all_passed() {
        return Err(Failure {
            code: exit::VALIDATION,
            error: anyhow::anyhow!("{} check(s) failed", report.checks.iter().filter(|c| !c.passed).count()),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(exit::CONFIG);
        }
    }
    let outcome = match &cli.command {
        Command::Run { config } => cmd_run(config, &cli.output_dir),
        Command::Oracle { config, order } => cmd_oracle(config, *order, &cli.output_dir),
        Command::Sweep { config, points } => cmd_sweep(config, points, &cli.output_dir),
        Command::Validate { n, dt, t_final } => cmd_validate(
            ValidateOptions {
                n: *n,
                dt: *dt,
                t_final: *t_final,
                ..ValidateOptions::default()
            },
            &cli.output_dir,
        ),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
