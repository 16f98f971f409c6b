use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use greenwave::config::ExperimentConfig;
use greenwave::error::{Error, Result};
use greenwave::flowmodel::{load_observations, observations_to_csv};
use greenwave::predictor::{
    check_criteria, correction_term, estimate_next_rates, predict_free_flow,
    predict_queue_clearance, predict_signal_duration,
};
use greenwave::rates::{datapoints_to_csv, MuCurve};
use greenwave::run::{learn_mu_from_batches, run_experiment, run_fixed_timing, run_validation, EventSource};

#[derive(Parser)]
#[command(name = "greenwave", version, about = "Adaptive traffic signal duration prediction")]
struct Cli {
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Inline override, repeatable: --set key=value.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long = "t-s", global = true)]
    t_s: Option<f64>,
    #[arg(long = "t-max", global = true)]
    t_max: Option<usize>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Source {
    Dpmm,
    GroundTruth,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulator at the fixed schedule and dump observations plus
    /// ground truth.
    Simulate(SimulateArgs),
    /// Learn the departure-rate curve from a recorded observation stream.
    LearnMu(LearnMuArgs),
    /// One-step green duration prediction from explicit measurements.
    Predict(PredictArgs),
    /// Full adaptive loop; writes all report files.
    ClosedLoop(ClosedLoopArgs),
    /// Goodness-of-fit checks of the simulator's queueing assumptions.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    cycles: Option<usize>,
}

#[derive(Args)]
struct LearnMuArgs {
    /// Observation CSV (frame,x,y,angle_rad).
    #[arg(long)]
    observations: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Learned mu-curve CSV (t,mu).
    #[arg(long)]
    mu_curve: PathBuf,
    /// Measured arrival rate of the ending cycle, veh/s.
    #[arg(long)]
    lambda_a: f64,
    /// Previous estimate; defaults to lambda_a (zero correction).
    #[arg(long)]
    lambda_e: Option<f64>,
    /// Red duration of the ending cycle, s.
    #[arg(long)]
    t_mr: f64,
    /// Measured queue clearance time of the ending cycle, s.
    #[arg(long)]
    t_mq: f64,
}

#[derive(Args)]
struct ClosedLoopArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "dpmm")]
    source: Source,
    #[arg(long)]
    cycles: Option<usize>,
    /// Also write the full observation stream (large).
    #[arg(long)]
    keep_observations: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Minimum arrival-gap sample size before testing.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(alpha) = cli.alpha {
        config.alpha = alpha;
    }
    if let Some(gamma) = cli.gamma {
        config.predictor.gamma = gamma;
    }
    if let Some(t_s) = cli.t_s {
        config.predictor.t_s = t_s;
    }
    if let Some(t_max) = cli.t_max {
        config.predictor.t_max = t_max;
    }
    if let Some(sigma) = cli.sigma {
        config.predictor.sigma = sigma;
    }
    for pair in &cli.overrides {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{pair}`")))?;
        config.set(key.trim(), value)?;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = build_config(&cli)?;
    match cli.command {
        Command::Simulate(args) => {
            if let Some(cycles) = args.cycles {
                config.total_cycles = cycles;
            }
            config.validate()?;
            let (sim, observations) = run_fixed_timing(&config)?;
            std::fs::create_dir_all(&args.out)?;
            std::fs::write(args.out.join("observations.csv"), observations_to_csv(&observations))?;
            std::fs::write(args.out.join("ground_truth.csv"), sim.ground_truth().to_csv())?;
            std::fs::write(args.out.join("config.txt"), config.to_file_text())?;
            println!(
                "simulated {} cycles: {} arrivals, {} departures",
                config.total_cycles,
                sim.spawned(),
                sim.departed()
            );
        }
        Command::LearnMu(args) => {
            config.validate()?;
            let batches = load_observations(&args.observations, config.direction_bins)?;
            let (points, curve, _) = learn_mu_from_batches(&config, &batches)?;
            std::fs::create_dir_all(&args.out)?;
            std::fs::write(args.out.join("mu_points.csv"), datapoints_to_csv(&points))?;
            match curve {
                Some(curve) => {
                    std::fs::write(args.out.join("mu_curve.csv"), curve.to_csv())?;
                    println!("learned mu-curve from {} data points", points.len());
                }
                None => {
                    return Err(Error::NoData(
                        "no queued departures in the learning cycles; cannot fit mu".into(),
                    ))
                }
            }
        }
        Command::Predict(args) => {
            config.validate()?;
            let text = std::fs::read_to_string(&args.mu_curve)?;
            let curve = MuCurve::parse_csv(&text, config.predictor.sigma)?;
            let mu_a = curve.lookup(args.t_mq);
            let lambda_e_prev = args.lambda_e.unwrap_or(args.lambda_a);
            let (mu_e, lambda_e) = estimate_next_rates(mu_a, args.lambda_a);
            let t_mq_next = predict_queue_clearance(lambda_e, args.t_mr, mu_e)?;
            let t_mf_next = predict_free_flow(t_mq_next, config.predictor.gamma, config.predictor.t_s)?;
            let delta_t = correction_term(args.lambda_a, lambda_e_prev, args.t_mq);
            let t_m = predict_signal_duration(t_mq_next, t_mf_next, delta_t, config.predictor.min_green);
            let ok = check_criteria(t_m, &config.predictor);
            println!("mu_e = {mu_e}");
            println!("T_mq = {t_mq_next}");
            println!("T_mf = {t_mf_next}");
            println!("delta_t = {delta_t}");
            println!("T_m = {t_m}");
            println!("criteria = {}", if ok { "ok" } else { "violated: keeping previous duration" });
        }
        Command::ClosedLoop(args) => {
            if let Some(cycles) = args.cycles {
                config.total_cycles = cycles;
            }
            config.validate()?;
            let source = match args.source {
                Source::Dpmm => EventSource::Dpmm,
                Source::GroundTruth => EventSource::GroundTruth,
            };
            let (output, summary) =
                run_experiment(&config, source, &args.out, args.keep_observations)?;
            println!(
                "{} cycles, {} vehicles through",
                output.controller.records().len(),
                output.sim.departed()
            );
            match summary {
                Some(s) => println!(
                    "clearance MAE over {} cycles: {:.3} s ({:.1}% of mean {:.3} s)",
                    s.n, s.mean_abs, s.pct_of_mean, s.mean_actual
                ),
                None => println!("clearance MAE: not defined (no nonzero queues)"),
            }
        }
        Command::Validate(args) => {
            config.validate()?;
            let report = run_validation(&config, args.samples)?;
            let show = |name: &str, out: &Option<greenwave::stats::KsOutcome>| match out {
                Some(o) => println!(
                    "{name}: n = {}, D = {:.4}, critical(5%) = {:.4}, mean = {:.3} -> {}",
                    o.n,
                    o.statistic,
                    o.critical_5pct,
                    o.fitted_mean,
                    if o.pass { "pass" } else { "fail" }
                ),
                None => println!("{name}: no samples"),
            };
            show("arrival gaps  ", &report.arrival);
            show("departure gaps", &report.departure);
            if report.inconclusive {
                println!("warning: fewer than the recommended sample count; result is weak");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
