use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use sicfsa::baselines::{aloha_structured, greedy_baseline, DEFAULT_POWER_LEVELS};
use sicfsa::model::{stream, Network, Scenario, Stream};
use sicfsa::objective::mc_expected_objective;
use sicfsa::optim::{initial_parameters, optimize, OptimizeOptions};
use sicfsa::powerred::{reduce_power_with, ReduceOptions};
use sicfsa::runner::{
    builtin_scenario, evaluate, run_and_persist, summarize, ExperimentConfig, Method, NamedScenario,
    ParamsFile,
};
use sicfsa::{Error, Result};

#[derive(Parser)]
#[command(name = "sicfsa", version, about = "Slot and power allocation for SIC random access")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize slot probabilities and powers on one channel draw
    Optimize(OptimizeArgs),
    /// Lower the powers of saved parameters without losing decodability
    ReducePower(ReduceArgs),
    /// Exact normalized objective and expected power of saved parameters
    Evaluate(EvaluateArgs),
    /// Emit a baseline allocation as parameters JSON
    Baseline(BaselineArgs),
    /// Run a full experiment grid and write results.csv
    Run(RunArgs),
}

#[derive(Args)]
struct ScenarioArg {
    /// Built-in scenario 1..4 or a path to a scenario JSON file
    #[arg(long, default_value = "1")]
    scenario: String,
}

impl ScenarioArg {
    fn load(&self) -> Result<NamedScenario> {
        load_scenario(&self.scenario)
    }
}

fn load_scenario(arg: &str) -> Result<NamedScenario> {
    if let Ok(index) = arg.parse::<usize>() {
        return Ok(NamedScenario { id: arg.to_string(), scenario: builtin_scenario(index)? });
    }
    let path = Path::new(arg);
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg).to_string();
    Ok(NamedScenario { id, scenario: Scenario::from_json_file(path)? })
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// alg1 or alg1+l1
    #[arg(long, default_value = "alg1")]
    method: String,
    /// Overrides the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario frame count
    #[arg(long)]
    frames: Option<usize>,
    /// Write every n-th trace row
    #[arg(long, default_value_t = 1)]
    trace_stride: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Parameters JSON with A, P, H_real, H_imag
    #[arg(long)]
    params: PathBuf,
    /// Slot support threshold on allocation entries
    #[arg(long, default_value_t = 0.0)]
    support_threshold: f64,
    /// Output parameters JSON; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long)]
    params: PathBuf,
    /// Also report a Monte-Carlo estimate over this many frames
    #[arg(long)]
    mc_frames: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Aloha,
    Greedy,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, value_enum)]
    kind: BaselineKind,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_POWER_LEVELS)]
    levels: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON; other flags are ignored when given
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenarios to run (repeatable); all four built-ins by default
    #[arg(long)]
    scenario: Vec<String>,
    /// Methods to run (repeatable); all five by default
    #[arg(long)]
    method: Vec<String>,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Write zero wall times so reruns produce identical files
    #[arg(long)]
    no_timing: bool,
}

fn write_or_print(value: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, format!("{value}\n"))?;
        }
        None => println!("{value}"),
    }
    Ok(())
}

fn cmd_optimize(args: OptimizeArgs) -> Result<()> {
    let named = args.scenario.load()?;
    let method: Method = args.method.parse()?;
    let seed = args.seed.unwrap_or(named.scenario.seed);
    let net = Network::draw(named.scenario, seed)?;
    let mut opts = OptimizeOptions::from_network(&net);
    match method {
        Method::Alg1 => opts = opts.without_l1(),
        Method::Alg1L1 => {}
        other => return Err(Error::Config(format!("`optimize` runs alg1 or alg1+l1, not {other}"))),
    }
    if let Some(frames) = args.frames {
        opts.n_frames = frames;
    }
    let (a0, p0) = initial_parameters(&net, seed);
    let out = optimize(&net, &a0, &p0, &opts, &mut stream(seed, Stream::Activity), &mut |v| {
        if v.frame % 10_000 == 0 {
            info!("frame {} smoothed {:.4}", v.frame, v.smoothed_sample);
        }
    })?;
    fs::create_dir_all(&args.out)?;
    ParamsFile::new(&out.alloc, out.power.values(), &net.channel).write(args.out.join("params.json"))?;
    out.trace
        .write_csv(fs::File::create(args.out.join("trace.csv"))?, args.trace_stride)?;
    let (t, power) = evaluate(&out.alloc, out.power.values(), &net)?;
    println!("{}", json!({ "t_normalized": t, "expected_power": power }));
    Ok(())
}

fn cmd_reduce(args: ReduceArgs) -> Result<()> {
    let named = args.scenario.load()?;
    let params = ParamsFile::read(&args.params)?;
    let (net, alloc, power) = params.bind(named.scenario)?;
    let opts = ReduceOptions { support_threshold: args.support_threshold, ..ReduceOptions::default() };
    let report = reduce_power_with(&alloc, &power, &net, &opts)?;
    info!("power reduction converged after {} passes", report.passes);
    let cleaned = ParamsFile { power: report.power.values().to_vec(), ..params };
    write_or_print(&serde_json::to_string_pretty(&cleaned)?, args.out.as_deref())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let named = args.scenario.load()?;
    let seed = named.scenario.seed;
    let params = ParamsFile::read(&args.params)?;
    let (net, alloc, power) = params.bind(named.scenario)?;
    let (t, p) = evaluate(&alloc, power.values(), &net)?;
    let mut report = json!({ "t_normalized": t, "expected_power": p });
    if let Some(frames) = args.mc_frames {
        let activity = net.scenario.activity.clone();
        let (mean, se) = mc_expected_objective(
            &alloc,
            power.values(),
            &activity,
            &net,
            frames,
            &mut stream(seed, Stream::Evaluation),
        )?;
        let total = net.scenario.total_activity();
        report["mc_t_normalized"] = json!(mean / total);
        report["mc_standard_error"] = json!(se / total);
    }
    println!("{report}");
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<()> {
    let named = args.scenario.load()?;
    let seed = args.seed.unwrap_or(named.scenario.seed);
    let net = Network::draw(named.scenario, seed)?;
    let s = &net.scenario;
    let (alloc, power) = match args.kind {
        BaselineKind::Aloha => aloha_structured(s.n_slots, &net.p_min, s.p_max, args.levels)?,
        BaselineKind::Greedy => greedy_baseline(&s.activity, s.n_slots, &net.p_min, s.p_max, args.levels)?,
    };
    let params = ParamsFile::new(&alloc, power.values(), &net.channel);
    write_or_print(&serde_json::to_string_pretty(&params)?, args.out.as_deref())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => serde_json::from_str::<ExperimentConfig>(&fs::read_to_string(path)?)?,
        None => {
            let mut config = ExperimentConfig::paper_defaults(&args.out, args.seeds);
            if !args.scenario.is_empty() {
                config.scenarios = args.scenario.iter().map(|s| load_scenario(s)).collect::<Result<_>>()?;
            }
            if !args.method.is_empty() {
                config.methods = args.method.iter().map(|m| m.parse()).collect::<Result<_>>()?;
            }
            if let Some(frames) = args.frames {
                config.scenarios.iter_mut().for_each(|s| s.scenario.n_frames = frames);
            }
            config.record_timing = !args.no_timing;
            config
        }
    };
    let records = run_and_persist(&config)?;
    println!("{:<10} {:<18} {:>6} {:>10} {:>10}", "scenario", "method", "seeds", "T^N", "E[P^T X]");
    for row in summarize(&records) {
        println!(
            "{:<10} {:<18} {:>6} {:>10.4} {:>10.4}",
            row.scenario, row.method, row.n_seeds, row.t_normalized_mean, row.expected_power_mean
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize(a) => cmd_optimize(a),
        Command::ReducePower(a) => cmd_reduce(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Run(a) => cmd_run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
