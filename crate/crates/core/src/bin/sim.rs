//! Command-line front end: run and validate scenarios, analyze loops,
//! export the robust model.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use platoon::analysis::{
    self, chain, linear, tuning, GridPolicy, LinearLoop, LoopVariant, TuningProblem, TUNED_KP,
};
use platoon::sim::{self, presets, Scenario};
use platoon::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "sim", version, about = "Platoon simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write the trace as CSV.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Write a built-in scenario as JSON.
    Preset {
        name: PresetName,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Analyze(Analyze),
    /// Write the uncertain state-space model as JSON.
    ExportRobust {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = presets::TIME_CONSTANT)]
        time_constant: f64,
        #[arg(long, default_value_t = presets::GAIN_KV)]
        kv: f64,
        #[arg(long, default_value_t = TUNED_KP)]
        kp: f64,
        #[arg(long, default_value_t = 1.2)]
        delta_min: f64,
        #[arg(long, default_value_t = 1.8)]
        delta_max: f64,
        #[arg(long, default_value_t = 0.6)]
        tau_max: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetName {
    DelaySteps,
    SingleFollower,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    PureVelocity,
    Combined,
}

#[derive(Args)]
struct LoopArgs {
    #[arg(long, default_value_t = presets::TIME_CONSTANT)]
    time_constant: f64,
    #[arg(long, default_value_t = presets::GAIN_KV)]
    kv: f64,
    #[arg(long, default_value_t = TUNED_KP)]
    kp: f64,
    /// Feedback factor Δ̂ in seconds.
    #[arg(long, default_value_t = 1.2)]
    overall_delay: f64,
    /// Stationary communication delay in seconds.
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, value_enum, default_value_t = Variant::Combined)]
    variant: Variant,
    #[arg(long, default_value_t = 30.0)]
    horizon: f64,
}

impl LoopArgs {
    fn linear_loop(&self) -> LinearLoop {
        LinearLoop {
            time_constant: self.time_constant,
            gain_kv: self.kv,
            gain_kp: self.kp,
            overall_delay: self.overall_delay,
            tau: self.tau,
            variant: match self.variant {
                Variant::PureVelocity => LoopVariant::PureVelocity,
                Variant::Combined => LoopVariant::Combined,
            },
        }
    }
}

#[derive(Subcommand)]
enum Analyze {
    /// Integral of one minus the velocity step response.
    DelayMeasure(LoopArgs),
    /// Monotonicity of the velocity step response.
    Positivity {
        #[command(flatten)]
        lp: LoopArgs,
        #[arg(long, default_value_t = linear::DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Largest k_p keeping the loop positive over a delay grid.
    TuneKp {
        #[arg(long, default_value_t = presets::TIME_CONSTANT)]
        time_constant: f64,
        #[arg(long, default_value_t = presets::GAIN_KV)]
        kv: f64,
        #[arg(long, default_value_t = 1.2)]
        delta_min: f64,
        #[arg(long, default_value_t = 1.8)]
        delta_max: f64,
        #[arg(long, default_value_t = 0.6)]
        tau_max: f64,
        #[arg(long, default_value_t = 0.05)]
        grid_step: f64,
        /// `full` also sweeps pairs with Δ̂ below 1/k_v + τ.
        #[arg(long, value_enum, default_value_t = Policy::Reachable)]
        policy: Policy,
    },
    /// Gap step responses of a whole platoon with constant delays.
    Chain {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 40.0)]
        horizon: f64,
        #[arg(long, default_value_t = linear::DEFAULT_EPSILON)]
        epsilon: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Reachable,
    Full,
}

fn load(path: &PathBuf) -> Result<Scenario, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    Scenario::from_json(&text)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_)
        | Error::InvalidParameter { .. }
        | Error::NonFinite(_)
        | Error::Json(_) => EXIT_INVALID,
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_FAILURE,
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { scenario, out } => {
            let s = load(&scenario)?;
            let run = sim::simulate(&s)?;
            sim::write_trace_csv(&run.trace, &out)?;
            println!(
                "wrote {} rows for {} vehicles to {}",
                run.trace.rows.len(),
                run.trace.n_vehicles,
                out.display()
            );
            for e in &run.diagnostics.headway_events {
                println!(
                    "t = {:.3} s: vehicle {} headway {} -> {} s",
                    e.time, e.vehicle, e.from, e.to
                );
            }
        }
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!("ok: {} vehicles, {} steps", s.n_vehicles(), s.steps());
        }
        Command::Preset { name, out } => {
            let s = match name {
                PresetName::DelaySteps => presets::delay_steps_platoon(),
                PresetName::SingleFollower => presets::single_follower_step(),
            };
            s.save(&out)?;
        }
        Command::Analyze(Analyze::DelayMeasure(args)) => {
            let d = analysis::delay_measure(&args.linear_loop(), args.horizon)?;
            println!("delay measure: {d:.6} s");
        }
        Command::Analyze(Analyze::Positivity { lp, epsilon }) => {
            let l = lp.linear_loop();
            let ok = analysis::external_positivity_check(&l, lp.horizon, epsilon)?;
            let dd = linear::max_drawdown(&l, lp.horizon, linear::DEFAULT_DT)?;
            println!("externally positive: {ok} (max drawdown {dd:e})");
        }
        Command::Analyze(Analyze::TuneKp {
            time_constant,
            kv,
            delta_min,
            delta_max,
            tau_max,
            grid_step,
            policy,
        }) => {
            let problem = TuningProblem {
                time_constant,
                gain_kv: kv,
                overall_delay_min: delta_min,
                overall_delay_max: delta_max,
                tau_max,
                grid_step,
                policy: match policy {
                    Policy::Reachable => GridPolicy::Reachable,
                    Policy::Full => GridPolicy::Full,
                },
            };
            let kp = tuning::tune(&problem)?;
            println!(
                "k_p = {kp:.6} 1/s over {} operating points",
                problem.operating_points().len()
            );
        }
        Command::Analyze(Analyze::Chain {
            scenario,
            horizon,
            epsilon,
        }) => {
            let s = load(&scenario)?;
            let drawdowns = chain::leader_chain_drawdowns(&s, horizon)?;
            for (k, d) in drawdowns.iter().enumerate() {
                println!(
                    "vehicle {}: positive {} (relative drawdown {d:e})",
                    k + 1,
                    *d <= epsilon
                );
            }
        }
        Command::ExportRobust {
            out,
            time_constant,
            kv,
            kp,
            delta_min,
            delta_max,
            tau_max,
        } => {
            let m = analysis::export_robust_model(
                time_constant,
                kv,
                kp,
                delta_min,
                delta_max,
                tau_max,
                &out,
            )?;
            println!(
                "wrote {}: Δ̄ = {} s, r_Δ = {}, τ_max = {} s, nominal spectral abscissa {:.4}",
                out.display(),
                m.delta_bar,
                m.r_delta,
                m.tau_max,
                m.nominal_spectral_abscissa()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
