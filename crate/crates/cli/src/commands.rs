use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use regretctl_core::benchmark::{synth_causal_h2, synth_noncausal_h2};
use regretctl_core::lifting::{evaluate_cost, lift_system};
use regretctl_core::regret::{regret_suboptimal, synth_regret_optimal, worst_case_instance, Suboptimal};
use regretctl_core::sim::{gen_disturbance, run_scenario, simulate_controller};
use regretctl_core::{Controller, LiftedSystem};

use crate::config::{load_system_config, LoadedSystem};
use crate::error::{CliError, CliResult};
use crate::files::{load_controller, read_json, write_json, ControllerFile, DisturbanceFile, InstanceFile, Resolver};
use crate::table::{comparison_rows, write_comparison, write_trajectory, COMPARISON_HEADER};

/// Regret-optimal finite-horizon measurement-feedback control.
#[derive(Debug, Parser)]
#[command(name = "regretctl", version)]
pub struct Cli {
    /// Accept controller files whose system digest does not match.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchmarkKind {
    NoncausalH2,
    CausalH2,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the regret-optimal causal controller.
    Synth {
        #[arg(long)]
        system: PathBuf,
        /// Relative tolerance of the bisection on the squared level.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Absolute tolerance on the level.
        #[arg(long, default_value_t = 1e-10)]
        abs_tol: f64,
        /// Fixed-level mode: find any causal controller with regret ≤ γ², or exit 2.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write an H₂-optimal benchmark controller.
    Benchmark {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, value_enum)]
        kind: BenchmarkKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cost of a controller on one instance and its regret against the noncausal benchmark.
    Eval {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long)]
        instance: PathBuf,
    },
    /// Unit-energy instance maximizing regret against a baseline.
    Worstcase {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        /// Defaults to the noncausal H₂ controller.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Step a causal controller through one generated disturbance.
    Simulate {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long)]
        disturbance: PathBuf,
        /// Overrides the seed in the disturbance file.
        #[arg(long, env = "REGRETCTL_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Compare controllers over replicated disturbances.
    Compare {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        controllers: Vec<PathBuf>,
        #[arg(long)]
        disturbance: PathBuf,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// Base seed; replication seeds are derived from it.
        #[arg(long, env = "REGRETCTL_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        csv: PathBuf,
    },
}

fn setup(system: &Path) -> CliResult<(LoadedSystem, LiftedSystem)> {
    let loaded = load_system_config(system)?;
    let lift = lift_system(&loaded.system).map_err(|e| CliError::at("lifting", e))?;
    Ok((loaded, lift))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn run(cli: Cli) -> CliResult<()> {
    let force = cli.force;
    match cli.command {
        Command::Synth { system, tol, abs_tol, gamma, out } => {
            let (loaded, lift) = setup(&system)?;
            let controller = match gamma {
                Some(g) => match regret_suboptimal(&lift, g).map_err(|e| CliError::at("fixed-level synthesis", e))? {
                    Suboptimal::Feasible(c) => {
                        println!("gamma = {g}");
                        println!("feasible = true");
                        c
                    }
                    Suboptimal::Infeasible { level, hankel_norm } => {
                        return Err(CliError::Infeasible(format!(
                            "no causal controller has regret ≤ γ² at γ = {level} (Hankel norm {hankel_norm})"
                        )))
                    }
                },
                None => {
                    let report =
                        synth_regret_optimal(&lift, tol, abs_tol).map_err(|e| CliError::at("synthesis", e))?;
                    println!("gamma_opt = {}", report.gamma_opt);
                    println!("certificate_lambda_max = {}", report.certificate_lambda_max);
                    println!("bisection_steps = {}", report.bisection_trace.len());
                    report.controller
                }
            };
            write_json(&out, &ControllerFile::from_controller(&controller, &loaded))
        }
        Command::Benchmark { system, kind, out } => {
            let (loaded, lift) = setup(&system)?;
            let c = match kind {
                BenchmarkKind::NoncausalH2 => synth_noncausal_h2(&lift),
                BenchmarkKind::CausalH2 => synth_causal_h2(&lift),
            }
            .map_err(|e| CliError::at("benchmark", e))?;
            write_json(&out, &ControllerFile::from_controller(&c, &loaded))
        }
        Command::Eval { system, controller, instance } => {
            let (loaded, lift) = setup(&system)?;
            let c = load_controller(&controller, &loaded, &lift, force)?;
            let inst = read_json::<InstanceFile>(&instance, "instance")?.instance()?;
            let nc = synth_noncausal_h2(&lift).map_err(|e| CliError::at("benchmark", e))?;
            let cost = evaluate_cost(&lift, c.youla(), &inst).map_err(|e| CliError::at("evaluation", e))?;
            let base = evaluate_cost(&lift, nc.youla(), &inst).map_err(|e| CliError::at("evaluation", e))?;
            let energy = inst.energy();
            println!("cost = {cost}");
            println!("benchmark_cost = {base}");
            println!("regret = {}", cost - base);
            println!("energy = {energy}");
            if energy > 0.0 {
                println!("regret_ratio = {}", (cost - base) / energy);
            }
            Ok(())
        }
        Command::Worstcase { system, controller, baseline, out } => {
            let (loaded, lift) = setup(&system)?;
            let c = load_controller(&controller, &loaded, &lift, force)?;
            let b: Controller = match baseline {
                Some(p) => load_controller(&p, &loaded, &lift, force)?,
                None => synth_noncausal_h2(&lift).map_err(|e| CliError::at("benchmark", e))?,
            };
            let (inst, ratio) =
                worst_case_instance(&lift, c.youla(), b.youla()).map_err(|e| CliError::at("worst case", e))?;
            println!("ratio = {ratio}");
            write_json(&out, &InstanceFile::from_instance(&inst, Some(ratio)))
        }
        Command::Simulate { system, controller, disturbance, seed, csv } => {
            let (loaded, lift) = setup(&system)?;
            let c = load_controller(&controller, &loaded, &lift, force)?;
            let file: DisturbanceFile = read_json(&disturbance, "disturbance")?;
            let resolver = Resolver { loaded: &loaded, lift: &lift, base_dir: base_dir(&disturbance), force };
            let spec = file.resolve(&resolver, seed)?;
            let inst = gen_disturbance(&lift, &spec).map_err(|e| CliError::at("disturbance", e))?;
            let traj = simulate_controller(&loaded.system, &lift, &c, &inst).map_err(|e| CliError::at("simulation", e))?;
            println!("total_cost = {}", traj.total_cost);
            println!("energy = {}", inst.energy());
            write_trajectory(&csv, &traj)
        }
        Command::Compare { system, controllers, disturbance, reps, seed, csv } => {
            let (loaded, lift) = setup(&system)?;
            let cs = controllers
                .iter()
                .map(|p| load_controller(p, &loaded, &lift, force))
                .collect::<CliResult<Vec<_>>>()?;
            let file: DisturbanceFile = read_json(&disturbance, "disturbance")?;
            let resolver = Resolver { loaded: &loaded, lift: &lift, base_dir: base_dir(&disturbance), force };
            let spec = file.resolve(&resolver, seed)?;
            let table = run_scenario(&loaded.system, &lift, &cs, &spec, reps).map_err(|e| CliError::at("scenario", e))?;
            let gammas: Vec<Option<f64>> = cs.iter().map(|c| c.gamma).collect();
            println!("{}", COMPARISON_HEADER.join(","));
            for row in comparison_rows(&table, &gammas) {
                println!("{}", row.join(","));
            }
            write_comparison(&csv, &table, &gammas)
        }
    }
}
