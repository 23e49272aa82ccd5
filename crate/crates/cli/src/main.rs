use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use flexagg::disagg::{deviation_metrics, lambda_disaggregate, project_to_envelope, DisaggError};
use flexagg::envelope::{build_envelope, linearize, Envelope};
use flexagg::lp::DenseSimplex;
use flexagg::model::{generate_scenario, AggTrajectory, GeneratorConfig, Scenario};
use flexagg::optimize::{run_benchmark, summarize, BenchConfig, ModelKind, Objective, UseCaseResult};

/// Aggregate flexibility of energy-constrained loads.
#[derive(Debug, Parser)]
#[command(name = "flexagg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random scenario.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 0.25)]
        dt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the envelope of a scenario and export it as JSON.
    Envelope {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also compute linear bounds with this many grid slopes.
        #[arg(long)]
        linearize: Option<usize>,
    },
    /// Minimize cost or peak over one model.
    Optimize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = parse_model)]
        model: ModelKind,
        #[arg(long, value_parser = parse_objective)]
        objective: Objective,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project a requested aggregate trajectory onto the envelope and split it across loads.
    Disaggregate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        envelope: PathBuf,
        /// CSV with an `energy_kwh` column, one row per step.
        #[arg(long)]
        request: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV of requested versus delivered aggregate energy.
        #[arg(long)]
        aggregate_out: Option<PathBuf>,
    },
    /// Run a benchmark sweep.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-scenario time budget; overrides the config file.
        #[arg(long)]
        budget_seconds: Option<f64>,
        /// Optional CSV of medians per cell.
        #[arg(long)]
        summary_out: Option<PathBuf>,
    },
    /// Sample trajectories inside the envelope and disaggregate them.
    Check {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        envelope: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e| format!("{e}; expected one of unaggregated, wc_envelope_linear, homothet, zonotope"))
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse().map_err(|e| format!("{e}; expected cost or peak"))
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let s = Scenario::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    println!("seed: {}", s.seed);
    Ok(s)
}

fn read_envelope(path: &Path, scenario: &Scenario) -> Result<Envelope> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let env = Envelope::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    if env.horizon != scenario.horizon {
        bail!("envelope has T = {}, scenario has T = {}", env.horizon, scenario.horizon);
    }
    Ok(env)
}

fn read_request(path: &Path) -> Result<AggTrajectory> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let column = reader
        .headers()?
        .iter()
        .position(|h| h.trim() == "energy_kwh")
        .context("request CSV needs an energy_kwh column")?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = record.get(column).context("short CSV row")?;
        values.push(field.trim().parse::<f64>().with_context(|| format!("bad energy value '{field}'"))?);
    }
    Ok(AggTrajectory(values))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryRow {
    model: ModelKind,
    objective: Objective,
    k: usize,
    energy_kwh: f64,
    power_kw: f64,
    value: f64,
    build_s: f64,
    solve_s: f64,
}

#[derive(Serialize)]
struct LoadRow {
    k: usize,
    load_id: u32,
    energy_kwh: f64,
}

#[derive(Serialize)]
struct AggregateRow {
    k: usize,
    requested_kwh: f64,
    delivered_kwh: f64,
}

#[derive(Serialize)]
struct CheckRow {
    sample: usize,
    rmse_kwh: Option<f64>,
    max_violation_kwh: Option<f64>,
    bracket_step: Option<usize>,
}

fn optimize(scenario: &Scenario, model: ModelKind, objective: Objective) -> Result<UseCaseResult> {
    let solver = DenseSimplex::default();
    Ok(match objective {
        Objective::Cost => flexagg::optimize::minimize_cost(scenario, model, &solver)?,
        Objective::Peak => flexagg::optimize::minimize_peak(scenario, model, &solver)?,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            n,
            horizon,
            dt,
            seed,
            out,
        } => {
            println!("seed: {seed}");
            let s = generate_scenario(&GeneratorConfig::new(n, horizon, dt, seed))?;
            fs::write(&out, s.to_json())?;
            info!("wrote {} loads x {} steps to {}", n, horizon, out.display());
        }
        Command::Envelope {
            scenario,
            out,
            linearize: grid,
        } => {
            let s = read_scenario(&scenario)?;
            let mut env = build_envelope(&s)?;
            if let Some(g) = grid {
                env = linearize(&env, g)?;
            }
            fs::write(&out, env.to_json())?;
            let segments = env.steps.iter().map(|st| st.upper.segments()).max().unwrap_or(0);
            println!("steps: {}, max upper segments: {segments}", env.steps.len());
        }
        Command::Optimize {
            scenario,
            model,
            objective,
            out,
        } => {
            let s = read_scenario(&scenario)?;
            let r = optimize(&s, model, objective)?;
            let powers = r.agg_trajectory.powers(s.dt);
            write_csv(
                &out,
                r.agg_trajectory.as_slice().iter().zip(&powers).enumerate().map(|(k, (&e, &p))| TrajectoryRow {
                    model,
                    objective,
                    k,
                    energy_kwh: e,
                    power_kw: p,
                    value: r.value,
                    build_s: r.build_time.as_secs_f64(),
                    solve_s: r.solve_time.as_secs_f64(),
                }),
            )?;
            println!("{model} {objective}: {}", r.value);
        }
        Command::Disaggregate {
            scenario,
            envelope,
            request,
            out,
            aggregate_out,
        } => {
            let s = read_scenario(&scenario)?;
            let env = read_envelope(&envelope, &s)?;
            let req = read_request(&request)?;
            let projected = project_to_envelope(&env, &req)?;
            if projected != req {
                println!("projected: {:?}", projected.as_slice());
            }
            let d = lambda_disaggregate(&s, &env, &projected)?;
            let dev = deviation_metrics(&req, &d.delivered)?;
            write_csv(
                &out,
                s.loads.iter().zip(&d.individual.rows).flat_map(|(l, row)| {
                    row.iter().enumerate().map(move |(k, &e)| LoadRow {
                        k,
                        load_id: l.id.0,
                        energy_kwh: e,
                    })
                }),
            )?;
            if let Some(path) = aggregate_out {
                write_csv(
                    &path,
                    req.as_slice().iter().zip(d.delivered.as_slice()).enumerate().map(|(k, (&r, &v))| AggregateRow {
                        k,
                        requested_kwh: r,
                        delivered_kwh: v,
                    }),
                )?;
            }
            println!("rmse: {:.6}", dev.rmse);
            println!("max violation: {:.3e}", d.max_violation);
        }
        Command::Bench {
            config,
            out,
            budget_seconds,
            summary_out,
        } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg: BenchConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
            if let Some(b) = budget_seconds {
                cfg.budget_seconds = b;
            }
            println!("seed: {}", cfg.seed);
            let rows = run_benchmark(&cfg);
            write_csv(&out, &rows)?;
            let summary = summarize(&rows);
            for r in &summary {
                println!(
                    "{} {} N={} T={} median increase {} % median time {} s ({} discarded)",
                    r.model,
                    r.objective,
                    r.n_loads,
                    r.horizon,
                    r.median_increase_pct.map_or("-".into(), |v| format!("{v:.3}")),
                    r.median_total_s.map_or("-".into(), |v| format!("{v:.3}")),
                    r.discarded
                );
            }
            if let Some(path) = summary_out {
                write_csv(&path, &summary)?;
            }
        }
        Command::Check {
            scenario,
            envelope,
            samples,
            seed,
            out,
        } => {
            println!("seed: {seed}");
            let s = read_scenario(&scenario)?;
            let env = read_envelope(&envelope, &s)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows = Vec::with_capacity(samples);
            let mut failures = 0;
            for i in 0..samples {
                let tr = env.sample_trajectory(&mut rng);
                let row = match lambda_disaggregate(&s, &env, &tr) {
                    Ok(d) => CheckRow {
                        sample: i,
                        rmse_kwh: Some(deviation_metrics(&tr, &d.delivered)?.rmse),
                        max_violation_kwh: Some(d.max_violation),
                        bracket_step: None,
                    },
                    Err(DisaggError::Bracket { k, .. }) => {
                        failures += 1;
                        CheckRow {
                            sample: i,
                            rmse_kwh: None,
                            max_violation_kwh: None,
                            bracket_step: Some(k),
                        }
                    }
                    Err(e) => return Err(e.into()),
                };
                rows.push(row);
            }
            let worst = rows.iter().filter_map(|r| r.max_violation_kwh).fold(0.0, f64::max);
            write_csv(&out, &rows)?;
            println!("samples: {samples}, bracket errors: {failures}, worst violation: {worst:.3e}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
