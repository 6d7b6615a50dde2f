//! Command-line surface: training runs, controller rollouts, policy
//! evaluation, seed sweeps, QP spot checks, and CSV plotting.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gaitlab::checkpoint::load_checkpoint;
use gaitlab::config::{ConfigError, RunConfig};
use gaitlab::kinematics::{grasp_map, Contact};
use gaitlab::linalg::Mat;
use gaitlab::qp::{grid_oracle_wrench, optimality_residual, solve_stability_qp};
use gaitlab::rl::ControllerKind;
use gaitlab::rng::Rng;
use gaitlab::trainer::{
    controller_rollout, perturbation_sweep, seed_sweep, train, write_perturbation_csv,
    write_sweep_csv,
};

#[derive(Parser)]
#[command(
    name = "gaitlab",
    about = "Planar in-hand manipulation laboratory: guided-exploration RL with sub-skill controllers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path overrides, e.g. --set vge.total_steps=2000 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override the training method (RL, RL_BC, FGE, VGE, VGE_BC).
    #[arg(long)]
    method: Option<String>,
    /// Override the controller kind (IGM, CS, FG).
    #[arg(long)]
    controller: Option<String>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<String>,
    /// Override the run name.
    #[arg(long)]
    run_name: Option<String>,
}

impl ConfigArgs {
    fn load(&self, extra: &[String]) -> Result<RunConfig, ConfigError> {
        let mut overrides: Vec<String> = Vec::new();
        if let Some(m) = &self.method {
            overrides.push(format!("vge.method=\"{m}\""));
        }
        if let Some(c) = &self.controller {
            overrides.push(format!("controller.kind=\"{c}\""));
        }
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(o) = &self.out {
            overrides.push(format!("out_dir=\"{o}\""));
        }
        if let Some(r) = &self.run_name {
            overrides.push(format!("run_name=\"{r}\""));
        }
        overrides.extend(extra.iter().cloned());
        overrides.extend(self.set.iter().cloned());
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write metrics, checkpoints, and a summary.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Total environment steps (shorthand for vge.total_steps).
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Run a sub-skill controller open-loop and record its baseline return.
    Rollout {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Controller kind: IGM, CS, or FG.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Evaluate a checkpoint; optionally run the robustness sweep.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint file (.ckpt).
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Run the perturbation/noise sweep and write its CSV.
        #[arg(long)]
        perturb: bool,
    },
    /// Train one run per seed and report the success rate.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated seed list (at least two).
        #[arg(long)]
        seeds: String,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check the grasp-stability QP against the brute-force grid oracle.
    QpCheck {
        /// Number of random instances.
        #[arg(long, default_value_t = 0)]
        random: usize,
        /// TOML file of instances to check.
        #[arg(long)]
        instances: Option<PathBuf>,
    },
    /// Plot CSV columns as SVG polylines (one per input file).
    Plot {
        /// Input CSV files (repeatable).
        #[arg(long = "csv", required = true)]
        csv: Vec<PathBuf>,
        /// X column name.
        #[arg(long, default_value = "step")]
        x: String,
        /// Y column name.
        #[arg(long)]
        y: String,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<gaitlab::trainer::TrainerError> for CliError {
    fn from(e: gaitlab::trainer::TrainerError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn parse_kind(s: &str) -> Result<ControllerKind, CliError> {
    match s {
        "IGM" => Ok(ControllerKind::Igm),
        "CS" => Ok(ControllerKind::Cs),
        "FG" => Ok(ControllerKind::Fg),
        other => Err(CliError::Usage(format!(
            "unknown controller kind '{other}' (expected IGM, CS, or FG)"
        ))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { cfg, steps } => {
            let mut extra = Vec::new();
            if let Some(s) = steps {
                extra.push(format!("vge.total_steps={s}"));
            }
            let cfg = cfg.load(&extra)?;
            let summary = train(&cfg)?;
            println!(
                "run {} finished: method={} controller={} steps={} final_eval={:.4}±{:.4} threshold={:.4} success={}",
                cfg.run_name,
                summary.method,
                summary.controller,
                summary.steps,
                summary.final_eval_mean,
                summary.final_eval_std,
                summary.threshold,
                summary.success
            );
            Ok(())
        }
        Command::Rollout { cfg, kind, episodes } => {
            let kind = parse_kind(&kind)?;
            let cfg = cfg.load(&[])?;
            let out_dir = PathBuf::from(&cfg.out_dir);
            let traj = out_dir.join(format!("rollout_{}.csv", kind.to_string().to_lowercase()));
            let report = controller_rollout(&cfg, kind, episodes, cfg.seed, Some(&traj))?;
            println!(
                "{} rollout over {} episodes: mean return {:.4} ± {:.4}, limit saturation {:.0}%, mean steps {:.0}",
                kind,
                report.episodes,
                report.mean_return,
                report.std_return,
                100.0 * report.limit_saturation_fraction,
                report.mean_steps
            );
            println!("trajectory written to {}", traj.display());
            record_baseline(&out_dir, kind, report.mean_return)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(())
        }
        Command::Eval {
            cfg,
            ckpt,
            episodes,
            perturb,
        } => {
            let cfg = cfg.load(&[])?;
            let (state, step) = load_checkpoint(&ckpt, cfg.rl.clone())
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let (mean, std) = gaitlab::trainer::evaluate(
                &state.policy,
                state.action_scale,
                &cfg,
                episodes,
                cfg.seed,
            )?;
            println!(
                "checkpoint {} (step {step}): mean return {mean:.4} ± {std:.4} over {episodes} episodes",
                ckpt.display()
            );
            if perturb {
                let rows = perturbation_sweep(
                    &state.policy,
                    state.action_scale,
                    &cfg,
                    episodes,
                    cfg.seed,
                )?;
                let out = PathBuf::from(&cfg.out_dir).join("perturbation.csv");
                write_perturbation_csv(&out, &rows)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                for r in &rows {
                    println!(
                        "  axis={} level={} return={:.4}±{:.4}",
                        r.axis, r.level, r.return_mean, r.return_std
                    );
                }
                println!("perturbation sweep written to {}", out.display());
            }
            Ok(())
        }
        Command::Sweep { cfg, seeds, jobs } => {
            let seed_list: Vec<u64> = seeds
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<u64>()
                        .map_err(|_| CliError::Usage(format!("bad seed '{s}'")))
                })
                .collect::<Result<_, _>>()?;
            if seed_list.len() < 2 {
                return Err(CliError::Usage(
                    "sweep needs at least two seeds".to_string(),
                ));
            }
            let cfg = cfg.load(&[])?;
            let report = seed_sweep(&cfg, &seed_list, jobs)?;
            for row in &report.rows {
                println!(
                    "seed {}: success={} final_return={:.4} steps_to_threshold={}",
                    row.seed,
                    row.success,
                    row.final_return,
                    row.steps_to_threshold
                        .map(|v| v.to_string())
                        .unwrap_or_else(|| "none".into())
                );
            }
            println!("success rate: {:.0}%", 100.0 * report.success_rate);
            let out = PathBuf::from(&cfg.out_dir).join(format!("{}-sweep.csv", cfg.run_name));
            write_sweep_csv(&out, &report).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("sweep table written to {}", out.display());
            Ok(())
        }
        Command::QpCheck { random, instances } => {
            let mut cases: Vec<(Mat, Vec<[f64; 2]>, String)> = Vec::new();
            if let Some(path) = &instances {
                cases.extend(load_qp_instances(path)?);
            }
            if random > 0 {
                let mut rng = Rng::new(12345);
                for i in 0..random {
                    let (g, normals) = random_qp_instance(&mut rng);
                    cases.push((g, normals, format!("random[{i}]")));
                }
            }
            if cases.is_empty() {
                return Err(CliError::Usage(
                    "qp-check needs --random N and/or --instances FILE".into(),
                ));
            }
            let mut failures = 0;
            for (g, normals, label) in &cases {
                match solve_stability_qp(g, normals) {
                    Ok(sol) => {
                        let oracle = grid_oracle_wrench(g, normals, 1.0, 3.0, 0.01);
                        let resid = optimality_residual(g, normals, &sol, 1.0);
                        let ok = sol.wrench_norm <= oracle + 1e-3 && resid <= 1e-6;
                        println!(
                            "{label}: {} wrench={:.3e} oracle={:.3e} residual={:.2e} pin={}",
                            if ok { "PASS" } else { "FAIL" },
                            sol.wrench_norm,
                            oracle,
                            resid,
                            sol.pinned_index
                        );
                        if !ok {
                            failures += 1;
                        }
                    }
                    Err(e) => {
                        println!("{label}: FAIL ({e})");
                        failures += 1;
                    }
                }
            }
            if failures > 0 {
                return Err(CliError::Runtime(format!(
                    "{failures}/{} instances failed",
                    cases.len()
                )));
            }
            println!("all {} instances pass", cases.len());
            Ok(())
        }
        Command::Plot { csv, x, y, out } => {
            gaitlab::plot::plot_csv_files(&csv, &x, &y, &out).map_err(|e| match e {
                gaitlab::plot::PlotError::Io(io) => CliError::Runtime(io.to_string()),
                other => CliError::Usage(other.to_string()),
            })?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

/// Append (or update) a controller baseline in `<out>/baselines.toml`.
fn record_baseline(
    out_dir: &std::path::Path,
    kind: ControllerKind,
    mean_return: f64,
) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("baselines.toml");
    let mut table: toml::Table = std::fs::read_to_string(&path)
        .ok()
        .and_then(|t| t.parse().ok())
        .unwrap_or_default();
    let key = format!("r_{}", kind.to_string().to_lowercase());
    table.insert(key, toml::Value::Float(mean_return));
    std::fs::write(&path, toml::to_string_pretty(&table).unwrap())
}

/// Instances file schema:
///
/// ```toml
/// [[instance]]
/// center = [0.0, 0.0]
/// positions = [[0.05, 0.0], [-0.02, 0.04], [-0.02, -0.04]]
/// normals = [[-1.0, 0.0], [0.45, -0.89], [0.45, 0.89]]
/// ```
fn load_qp_instances(path: &PathBuf) -> Result<Vec<(Mat, Vec<[f64; 2]>, String)>, CliError> {
    #[derive(serde::Deserialize)]
    struct InstanceFile {
        instance: Vec<Instance>,
    }
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Instance {
        center: [f64; 2],
        positions: Vec<[f64; 2]>,
        normals: Vec<[f64; 2]>,
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let parsed: InstanceFile = toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("malformed instance file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, inst) in parsed.instance.into_iter().enumerate() {
        if inst.positions.len() != inst.normals.len() || inst.positions.is_empty() {
            return Err(CliError::Usage(format!(
                "instance {i}: positions/normals must be equal-length and non-empty"
            )));
        }
        let contacts: Vec<Contact> = inst
            .positions
            .iter()
            .zip(&inst.normals)
            .enumerate()
            .map(|(f, (p, n))| {
                let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
                Contact {
                    finger: f,
                    position: *p,
                    normal: [n[0] / len, n[1] / len],
                    force: 0.0,
                }
            })
            .collect();
        let g = grasp_map(inst.center, &contacts)
            .map_err(|e| CliError::Usage(format!("instance {i}: {e}")))?;
        let normals: Vec<[f64; 2]> = contacts.iter().map(|c| c.normal).collect();
        out.push((g, normals, format!("{}[{i}]", path.display())));
    }
    Ok(out)
}

fn random_qp_instance(rng: &mut Rng) -> (Mat, Vec<[f64; 2]>) {
    let k = 3 + rng.uniform_index(3);
    let contacts: Vec<Contact> = (0..k)
        .map(|i| {
            let a = rng.uniform_range(0.0, std::f64::consts::TAU);
            let r = rng.uniform_range(0.03, 0.08);
            let na = a + std::f64::consts::PI + rng.uniform_range(-0.4, 0.4);
            Contact {
                finger: i,
                position: [r * a.cos(), r * a.sin()],
                normal: [na.cos(), na.sin()],
                force: 0.0,
            }
        })
        .collect();
    let normals = contacts.iter().map(|c| c.normal).collect();
    let g = grasp_map([0.0, 0.0], &contacts).unwrap();
    (g, normals)
}
