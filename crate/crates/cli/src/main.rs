use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use costchart::baseline::{self, BaselineModel};
use costchart::optimizer::{self, Evaluator};
use costchart::scenario::{self, DesignReport, Scenario};
use costchart::simulator::{self, AlarmRule, SimConfig};
use costchart::{ChainArtifacts, ChartPolicy};

/// Relative output paths are resolved against this directory when set.
const OUT_DIR_ENV: &str = "COSTCHART_OUT_DIR";

#[derive(Parser)]
#[command(name = "costchart", version, about = "Cost-optimal control charts for drifting processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the policy minimising the objective.
    Design {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Write the JSON report here as well as to stdout.
        #[arg(long, allow_negative_numbers = true)]
        out: Option<PathBuf>,
    },
    /// Evaluate a single policy.
    Evaluate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, allow_negative_numbers = true)]
        h: f64,
        #[arg(long, allow_negative_numbers = true)]
        k: f64,
        #[arg(long, allow_negative_numbers = true)]
        out: Option<PathBuf>,
    },
    /// Evaluate every (h, k) pair of a grid; writes CSV.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// `start:end:count` or a comma-separated list.
        #[arg(long, allow_hyphen_values = true)]
        h: String,
        #[arg(long, allow_hyphen_values = true)]
        k: String,
        /// CSV destination; stdout when omitted.
        #[arg(long, allow_negative_numbers = true)]
        out: Option<PathBuf>,
    },
    /// Re-optimise for each value of one parameter.
    Sensitivity {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Parameter name, e.g. `costs.c_o` or `z`.
        #[arg(long, allow_negative_numbers = true)]
        param: String,
        /// `start:end:count` or a comma-separated list.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Optional CSV of the per-value optima.
        #[arg(long, allow_negative_numbers = true)]
        csv: Option<PathBuf>,
    },
    /// Monte Carlo simulation of a policy (the optimum when h, k are omitted).
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, requires = "k")]
        h: Option<f64>,
        #[arg(long, requires = "h")]
        k: Option<f64>,
        #[arg(long, default_value_t = 50_000)]
        intervals: usize,
        #[arg(long, default_value_t = 100)]
        burn_in: usize,
        #[arg(long, default_value_t = 30)]
        thinning: usize,
        #[arg(long, default_value_t = SimConfig::default().seed)]
        seed: u64,
        /// `limit` or `runs:<count>:<fraction>`, e.g. `runs:3:2/3`.
        #[arg(long, default_value = "limit")]
        rule: String,
        /// Per-interval CSV trace destination.
        #[arg(long, allow_negative_numbers = true)]
        trace: Option<PathBuf>,
    },
    /// Four-state fixed-shift model: stationary probabilities and cost.
    Baseline(BaselineArgs),
    /// Write the transition matrix, repair-start matrix and stationary vector as CSV.
    DumpChain {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, allow_negative_numbers = true)]
        h: f64,
        #[arg(long, allow_negative_numbers = true)]
        k: f64,
        #[arg(long, default_value = "chain")]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file, or a bundled name (`ldl`, `sens24`, `bundled:ldl`).
    #[arg(long, allow_negative_numbers = true)]
    scenario: String,
    /// Override the objective weight p.
    #[arg(long, allow_negative_numbers = true)]
    p: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> anyhow::Result<Scenario> {
        let mut s =
            Scenario::resolve(&self.scenario).with_context(|| format!("loading scenario `{}`", self.scenario))?;
        if let Some(p) = self.p {
            s.costs.p = p;
            s.validate()?;
        }
        Ok(s)
    }
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, default_value_t = 0.0)]
    mu0: f64,
    #[arg(long, allow_negative_numbers = true)]
    sigma: f64,
    #[arg(long, allow_negative_numbers = true)]
    s: f64,
    #[arg(long, allow_negative_numbers = true)]
    delta_star: f64,
    #[arg(long, allow_negative_numbers = true)]
    h: f64,
    #[arg(long, allow_negative_numbers = true)]
    k: f64,
    #[arg(long, allow_negative_numbers = true)]
    c_s: f64,
    #[arg(long, allow_negative_numbers = true)]
    c_f: f64,
    #[arg(long, allow_negative_numbers = true)]
    c_o: f64,
    #[arg(long, allow_negative_numbers = true)]
    c_r: f64,
}

#[derive(Serialize)]
struct BaselineReport {
    model: BaselineModel,
    stationary: [f64; 4],
    fraction_b: f64,
    expected_cost: f64,
}

fn out_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let path = out_path(path);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(io::stdout().lock(), "{text}")?;
    if let Some(path) = out {
        let mut w = create(path)?;
        writeln!(w, "{text}")?;
        w.flush()?;
    }
    Ok(())
}

/// `start:end:count` or `a,b,c`.
fn parse_values(spec: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let values = if parts.len() == 3 {
        let start: f64 = parts[0].trim().parse().with_context(|| format!("bad range start in `{spec}`"))?;
        let end: f64 = parts[1].trim().parse().with_context(|| format!("bad range end in `{spec}`"))?;
        let count: usize = parts[2].trim().parse().with_context(|| format!("bad range count in `{spec}`"))?;
        optimizer::linspace(start, end, count)
    } else if parts.len() == 1 {
        spec.split(',')
            .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad value `{v}`")))
            .collect::<anyhow::Result<_>>()?
    } else {
        bail!(costchart::Error::InvalidArgument(format!("expected `start:end:count` or a list, got `{spec}`")));
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        bail!(costchart::Error::InvalidArgument(format!("`{spec}` gives no usable values")));
    }
    Ok(values)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Design { scenario, out } => {
            let s = scenario.load()?;
            let report = optimizer::minimize(&s.model(), &s.search)?;
            emit_json(&DesignReport::from_minimize(&s.name, &report), out.as_deref())
        }
        Command::Evaluate { scenario, h, k, out } => {
            let s = scenario.load()?;
            let point = optimizer::evaluate(&s.model(), ChartPolicy::new(h, k)?)?;
            emit_json(&DesignReport::from_point(&s.name, &point), out.as_deref())
        }
        Command::Sweep { scenario, h, k, out } => {
            let s = scenario.load()?;
            let points = optimizer::sweep(&s.model(), &parse_values(&h)?, &parse_values(&k)?)?;
            match out {
                Some(path) => scenario::write_design_csv(create(&path)?, &points)?,
                None => scenario::write_design_csv(io::stdout().lock(), &points)?,
            }
            Ok(())
        }
        Command::Sensitivity {
            scenario,
            param,
            values,
            csv,
        } => {
            let s = scenario.load()?;
            let report = optimizer::sensitivity(&s.model(), &s.search, &param, &parse_values(&values)?)?;
            if let Some(path) = csv {
                let optima: Vec<_> = report.rows.iter().map(|r| r.optimum).collect();
                scenario::write_design_csv(create(&path)?, &optima)?;
            }
            emit_json(&report, None)
        }
        Command::Simulate {
            scenario,
            h,
            k,
            intervals,
            burn_in,
            thinning,
            seed,
            rule,
            trace,
        } => {
            let s = scenario.load()?;
            let model = s.model();
            let eval = Evaluator::new(&model)?;
            let policy = match (h, k) {
                (Some(h), Some(k)) => ChartPolicy::new(h, k)?,
                _ => optimizer::minimize_with(&eval, &s.search)?.best.policy,
            };
            let rule: AlarmRule = rule.parse()?;
            let config = SimConfig {
                intervals,
                burn_in,
                thinning,
                seed,
                rule,
            };
            let mut report = simulator::simulate_stream(&model, policy, &config, 0, trace.is_some())?;
            if let (Some(path), Some(rows)) = (trace, report.trace.take()) {
                simulator::write_trace_csv(create(&path)?, &rows)?;
            }
            let artifacts = eval.artifacts(policy)?;
            let analytic = costchart::DesignPoint::from_artifacts(&artifacts, &model.costs);
            let comparison = simulator::compare_to_analytic(&report, &artifacts, analytic.expected_cost)?;
            #[derive(Serialize)]
            struct Out<'a> {
                scenario: &'a str,
                policy: ChartPolicy,
                config: SimConfig,
                report: simulator::SimReport,
                comparison: simulator::Comparison,
            }
            emit_json(
                &Out {
                    scenario: &s.name,
                    policy,
                    config,
                    report,
                    comparison,
                },
                None,
            )
        }
        Command::Baseline(a) => {
            let model = BaselineModel {
                mu0: a.mu0,
                sigma: a.sigma,
                s: a.s,
                delta_star: a.delta_star,
                h: a.h,
                k: a.k,
                c_s: a.c_s,
                c_f: a.c_f,
                c_o: a.c_o,
                c_r: a.c_r,
            };
            let report = BaselineReport {
                model,
                stationary: baseline::baseline_stationary(&model)?,
                fraction_b: baseline::fraction_b(model.h, model.s)?,
                expected_cost: baseline::baseline_cost(&model)?,
            };
            emit_json(&report, None)
        }
        Command::DumpChain { scenario, h, k, dir } => {
            let s = scenario.load()?;
            let artifacts = ChainArtifacts::build(&s.model(), ChartPolicy::new(h, k)?)?;
            let dir = out_path(&dir);
            artifacts.dump_csv(&dir)?;
            #[derive(Serialize)]
            struct Out {
                dir: PathBuf,
                states: usize,
                stationary_residual: f64,
                alarm_mass: f64,
            }
            emit_json(
                &Out {
                    dir,
                    states: artifacts.transition.nrows(),
                    stationary_residual: artifacts.stationary_residual,
                    alarm_mass: artifacts.alarm_mass(),
                },
                None,
            )
        }
    }
}

fn category(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<costchart::Error>() {
        return e.category();
    }
    if err.downcast_ref::<io::Error>().is_some() {
        return "io-error";
    }
    if err.downcast_ref::<std::num::ParseFloatError>().is_some()
        || err.downcast_ref::<std::num::ParseIntError>().is_some()
    {
        return "parse-error";
    }
    "internal"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err)
            if err
                .downcast_ref::<io::Error>()
                .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(err) => {
            let line = serde_json::json!({ "error": category(&err), "message": format!("{err:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
