//! Experiment orchestration: built-in scenarios, the five compared
//! methods, metric evaluation and result persistence.
//!
//! Work is grouped per (scenario, seed) cell group. All methods of a group
//! share one channel draw and one initial allocation, so their numbers are
//! directly comparable. Groups run in parallel; output order is fixed.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{aloha_structured, greedy_baseline, DEFAULT_POWER_LEVELS};
use crate::error::{Error, Result};
use crate::model::{stream, AllocationMatrix, ChannelMatrix, Network, PowerVector, Scenario, Stream};
use crate::objective::{exact_expected_objective, expected_power, normalized_objective};
use crate::optim::{initial_parameters, optimize, OptimizeOptions, TrainTrace};
use crate::powerred::reduce_power;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "alg1")]
    Alg1,
    #[serde(rename = "alg1+alg2")]
    Alg1PowerReduction,
    #[serde(rename = "alg1+l1")]
    Alg1L1,
    #[serde(rename = "aloha_structured")]
    AlohaStructured,
    #[serde(rename = "greedy")]
    Greedy,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Alg1,
        Method::Alg1PowerReduction,
        Method::Alg1L1,
        Method::AlohaStructured,
        Method::Greedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Alg1 => "alg1",
            Method::Alg1PowerReduction => "alg1+alg2",
            Method::Alg1L1 => "alg1+l1",
            Method::AlohaStructured => "aloha_structured",
            Method::Greedy => "greedy",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Method::AlohaStructured | Method::Greedy)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// The four evaluation scenarios. Threshold and noise power default to 1.
pub fn builtin_scenarios() -> [Scenario; 4] {
    let make = |n_slots: usize, activity: &[f64]| Scenario {
        n_devices: activity.len(),
        n_slots,
        activity: activity.to_vec(),
        n_antennas: 2,
        noise_power: 1.0,
        sinr_threshold: 1.0,
        p_max: 6.0,
        pmin_margin: 0.01,
        sharpness: 10.0,
        step_size: 0.01,
        n_frames: 100_000,
        l1_weight: 0.001,
        seed: 0,
    };
    [
        make(2, &[0.08, 0.12, 0.33, 0.35, 0.38]),
        make(2, &[0.22, 0.38, 0.41, 0.70, 0.88]),
        make(3, &[0.10, 0.12, 0.37, 0.41, 0.41, 0.41, 0.42, 0.45]),
        make(3, &[0.36, 0.38, 0.39, 0.46, 0.54, 0.64, 0.68, 0.83]),
    ]
}

/// Built-in scenario by 1-based index.
pub fn builtin_scenario(index: usize) -> Result<Scenario> {
    builtin_scenarios()
        .get(index.wrapping_sub(1))
        .cloned()
        .ok_or_else(|| Error::Config(format!("built-in scenarios are 1..4, got {index}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedScenario {
    pub id: String,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenarios: Vec<NamedScenario>,
    pub methods: Vec<Method>,
    pub n_seeds: usize,
    pub output_dir: PathBuf,
    #[serde(default = "default_levels")]
    pub n_power_levels: usize,
    /// When false, wall times are written as zero so reruns are byte-identical.
    #[serde(default = "default_true")]
    pub record_timing: bool,
    /// Every how many frames a trace row is written.
    #[serde(default = "default_stride")]
    pub trace_stride: usize,
}

fn default_levels() -> usize {
    DEFAULT_POWER_LEVELS
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    100
}

impl ExperimentConfig {
    /// All built-in scenarios and methods with their defaults.
    pub fn paper_defaults(output_dir: impl Into<PathBuf>, n_seeds: usize) -> Self {
        Self {
            scenarios: builtin_scenarios()
                .into_iter()
                .enumerate()
                .map(|(i, scenario)| NamedScenario { id: (i + 1).to_string(), scenario })
                .collect(),
            methods: Method::ALL.to_vec(),
            n_seeds,
            output_dir: output_dir.into(),
            n_power_levels: DEFAULT_POWER_LEVELS,
            record_timing: true,
            trace_stride: default_stride(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("at least one scenario is required".into()));
        }
        if self.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be positive".into()));
        }
        let mut ids = HashSet::new();
        for s in &self.scenarios {
            if !ids.insert(&s.id) {
                return Err(Error::Config(format!("duplicate scenario id `{}`", s.id)));
            }
            s.scenario.validate()?;
        }
        Ok(())
    }

    /// Seed of the `index`-th run of a scenario.
    pub fn cell_seed(scenario: &Scenario, index: usize) -> u64 {
        scenario.seed.wrapping_add(index as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    #[serde(rename = "scenario")]
    pub scenario_id: String,
    pub method: Method,
    pub seed: u64,
    pub t_normalized: f64,
    pub expected_power: f64,
    #[serde(rename = "wall_time_s")]
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub scenario_id: String,
    pub method: Method,
    pub seed: u64,
    pub error: String,
}

/// Final parameters of one cell, in the on-disk JSON layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    #[serde(rename = "A")]
    pub alloc: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub power: Vec<f64>,
    #[serde(rename = "H_real")]
    pub h_real: Vec<Vec<f64>>,
    #[serde(rename = "H_imag")]
    pub h_imag: Vec<Vec<f64>>,
}

impl ParamsFile {
    pub fn new(alloc: &AllocationMatrix, power: &[f64], channel: &ChannelMatrix) -> Self {
        let (h_real, h_imag) = channel.to_parts();
        Self { alloc: alloc.to_rows(), power: power.to_vec(), h_real, h_imag }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn channel(&self) -> Result<ChannelMatrix> {
        ChannelMatrix::from_parts(&self.h_real, &self.h_imag)
    }

    /// Binds the stored channel to `scenario` and validates A and P against it.
    pub fn bind(&self, scenario: Scenario) -> Result<(Network, AllocationMatrix, PowerVector)> {
        let net = Network::new(scenario, self.channel()?)?;
        let alloc = AllocationMatrix::new(self.alloc.clone())?;
        let power = net.power(self.power.clone())?;
        Ok((net, alloc, power))
    }
}

/// Normalized exact objective and expected power of (A, P).
pub fn evaluate(alloc: &AllocationMatrix, power: &[f64], net: &Network) -> Result<(f64, f64)> {
    let activity = &net.scenario.activity;
    let t = exact_expected_objective(alloc, power, activity, net)?;
    Ok((normalized_objective(t, activity)?, expected_power(power, activity)))
}

/// Everything one method produced in one cell.
#[derive(Debug, Clone)]
pub struct CellOutput {
    pub record: ResultRecord,
    pub alloc: AllocationMatrix,
    pub power: PowerVector,
    pub trace: Option<TrainTrace>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub cells: Vec<CellOutput>,
    pub failures: Vec<CellFailure>,
    /// Channel per (scenario id, seed), shared by that group's cells.
    pub channels: Vec<(String, u64, ChannelMatrix)>,
}

impl ExperimentOutcome {
    pub fn records(&self) -> Vec<ResultRecord> {
        self.cells.iter().map(|c| c.record.clone()).collect()
    }
}

struct Group<'a> {
    named: &'a NamedScenario,
    seed: u64,
    methods: Vec<Method>,
}

fn run_group(group: &Group<'_>, config: &ExperimentConfig) -> (Vec<CellOutput>, Vec<CellFailure>, Option<ChannelMatrix>) {
    let id = &group.named.id;
    let seed = group.seed;
    let fail_all = |e: &Error| {
        group
            .methods
            .iter()
            .map(|&method| CellFailure { scenario_id: id.clone(), method, seed, error: e.to_string() })
            .collect::<Vec<_>>()
    };
    let net = match Network::draw(group.named.scenario.clone(), seed) {
        Ok(net) => net,
        Err(e) => {
            warn!("scenario {id} seed {seed}: {e}");
            return (Vec::new(), fail_all(&e), None);
        }
    };
    let (init_alloc, init_power) = initial_parameters(&net, seed);
    let base_opts = OptimizeOptions::from_network(&net);

    let mut alg1: Option<(crate::optim::OptimizeOutput, f64)> = None;
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for &method in &group.methods {
        let result: Result<CellOutput> = (|| {
            let started = Instant::now();
            let (alloc, power, trace, wall) = match method {
                Method::Alg1 | Method::Alg1PowerReduction => {
                    if alg1.is_none() {
                        let out = optimize(
                            &net,
                            &init_alloc,
                            &init_power,
                            &base_opts.clone().without_l1(),
                            &mut stream(seed, Stream::Activity),
                            &mut |_| {},
                        )?;
                        alg1 = Some((out, started.elapsed().as_secs_f64()));
                    }
                    let (out, secs) = alg1.as_ref().expect("just computed");
                    let trace = Some(out.trace.clone());
                    if method == Method::Alg1 {
                        (out.alloc.clone(), out.power.clone(), trace, *secs)
                    } else {
                        let t0 = Instant::now();
                        let reduced = reduce_power(&out.alloc, &out.power, &net)?;
                        (out.alloc.clone(), reduced, trace, secs + t0.elapsed().as_secs_f64())
                    }
                }
                Method::Alg1L1 => {
                    let out = optimize(
                        &net,
                        &init_alloc,
                        &init_power,
                        &base_opts,
                        &mut stream(seed, Stream::Activity),
                        &mut |_| {},
                    )?;
                    (out.alloc, out.power, Some(out.trace), started.elapsed().as_secs_f64())
                }
                Method::AlohaStructured => {
                    let (a, p) = aloha_structured(net.n_slots(), &net.p_min, net.scenario.p_max, config.n_power_levels)?;
                    (a, p, None, started.elapsed().as_secs_f64())
                }
                Method::Greedy => {
                    let (a, p) = greedy_baseline(
                        &net.scenario.activity,
                        net.n_slots(),
                        &net.p_min,
                        net.scenario.p_max,
                        config.n_power_levels,
                    )?;
                    (a, p, None, started.elapsed().as_secs_f64())
                }
            };
            finish(id, method, seed, &net, alloc, power, trace, wall)
        })();
        match result {
            Ok(mut cell) => {
                if !config.record_timing {
                    cell.record.wall_time = 0.0;
                }
                cells.push(cell);
            }
            Err(e) => {
                warn!("scenario {id} method {method} seed {seed}: {e}");
                failures.push(CellFailure { scenario_id: id.clone(), method, seed, error: e.to_string() });
            }
        }
    }
    (cells, failures, Some(net.channel))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    id: &str,
    method: Method,
    seed: u64,
    net: &Network,
    alloc: AllocationMatrix,
    power: PowerVector,
    trace: Option<TrainTrace>,
    wall_time: f64,
) -> Result<CellOutput> {
    let (t_normalized, expected_power) = evaluate(&alloc, power.values(), net)?;
    Ok(CellOutput {
        record: ResultRecord {
            scenario_id: id.to_string(),
            method,
            seed,
            t_normalized,
            expected_power,
            wall_time,
        },
        alloc,
        power,
        trace,
    })
}

fn run_cells(config: &ExperimentConfig, skip: &HashSet<(String, Method, u64)>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();
    let groups: Vec<Group<'_>> = config
        .scenarios
        .iter()
        .flat_map(|named| {
            let methods = &methods;
            (0..config.n_seeds).map(move |i| {
                let seed = ExperimentConfig::cell_seed(&named.scenario, i);
                Group {
                    named,
                    seed,
                    methods: methods
                        .iter()
                        .copied()
                        .filter(|&m| !skip.contains(&(named.id.clone(), m, seed)))
                        .collect(),
                }
            })
        })
        .filter(|g| !g.methods.is_empty())
        .collect();

    let results: Vec<_> = groups.par_iter().map(|g| (g, run_group(g, config))).collect();
    let mut outcome = ExperimentOutcome::default();
    for (g, (cells, failures, channel)) in results {
        outcome.cells.extend(cells);
        outcome.failures.extend(failures);
        if let Some(h) = channel {
            outcome.channels.push((g.named.id.clone(), g.seed, h));
        }
    }
    // scenario order of the config, then method, then seed
    let order = |id: &str| config.scenarios.iter().position(|s| s.id == id).unwrap_or(usize::MAX);
    outcome
        .cells
        .sort_by(|a, b| {
            (order(&a.record.scenario_id), a.record.method, a.record.seed)
                .cmp(&(order(&b.record.scenario_id), b.record.method, b.record.seed))
        });
    Ok(outcome)
}

/// Runs every (scenario, method, seed) cell in memory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_cells(config, &HashSet::new())
}

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.json";

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn cell_dir(config: &ExperimentConfig, rec: &ResultRecord) -> PathBuf {
    config
        .output_dir
        .join("cells")
        .join(format!("s{}_{}_seed{}", rec.scenario_id, rec.method, rec.seed))
}

/// Runs the cells missing from `output_dir/results.csv`, appends their
/// rows, writes per-cell traces and parameters, and refreshes the summary.
/// Returns every record now present in the results file.
pub fn run_and_persist(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    let config_path = config.output_dir.join(CONFIG_FILE);
    let rendered = serde_json::to_string_pretty(config)? + "\n";
    if config_path.exists() {
        let existing: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&config_path)?)?;
        if &existing != config {
            return Err(Error::Config(format!(
                "{} holds a different configuration; use a fresh output directory",
                config_path.display()
            )));
        }
    } else {
        fs::write(&config_path, rendered)?;
    }

    let results_path = config.output_dir.join(RESULTS_FILE);
    let mut records = if results_path.exists() { read_results(&results_path)? } else { Vec::new() };
    let done: HashSet<(String, Method, u64)> = records
        .iter()
        .map(|r| (r.scenario_id.clone(), r.method, r.seed))
        .collect();

    let outcome = run_cells(config, &done)?;
    info!("{} new cells, {} failures", outcome.cells.len(), outcome.failures.len());

    let file = fs::OpenOptions::new().create(true).append(true).open(&results_path)?;
    let write_header = file.metadata()?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(write_header).from_writer(file);
    for cell in &outcome.cells {
        w.serialize(&cell.record)?;
    }
    w.flush()?;

    for cell in &outcome.cells {
        let dir = cell_dir(config, &cell.record);
        fs::create_dir_all(&dir)?;
        let channel = outcome
            .channels
            .iter()
            .find(|(id, seed, _)| *id == cell.record.scenario_id && *seed == cell.record.seed)
            .map(|(_, _, h)| h)
            .expect("every cell has its group's channel");
        ParamsFile::new(&cell.alloc, cell.power.values(), channel).write(dir.join("params.json"))?;
        if let Some(trace) = &cell.trace {
            trace.write_csv(fs::File::create(dir.join("trace.csv"))?, config.trace_stride)?;
        }
    }
    for f in &outcome.failures {
        warn!("cell failed: scenario {} method {} seed {}: {}", f.scenario_id, f.method, f.seed, f.error);
    }

    records.extend(outcome.records());
    write_summary(&summarize(&records), config.output_dir.join(SUMMARY_FILE))?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: Method,
    pub n_seeds: usize,
    pub t_normalized_mean: f64,
    pub t_normalized_std: f64,
    pub expected_power_mean: f64,
    pub expected_power_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Mean and sample standard deviation across seeds per (scenario, method),
/// in order of first appearance.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, Method)> = Vec::new();
    for r in records {
        let key = (r.scenario_id.clone(), r.method);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scenario, method)| {
            let rows: Vec<&ResultRecord> =
                records.iter().filter(|r| r.scenario_id == scenario && r.method == method).collect();
            let t: Vec<f64> = rows.iter().map(|r| r.t_normalized).collect();
            let p: Vec<f64> = rows.iter().map(|r| r.expected_power).collect();
            let (t_mean, t_std) = mean_std(&t);
            let (p_mean, p_std) = mean_std(&p);
            SummaryRow {
                scenario,
                method,
                n_seeds: rows.len(),
                t_normalized_mean: t_mean,
                t_normalized_std: t_std,
                expected_power_mean: p_mean,
                expected_power_std: p_std,
            }
        })
        .collect()
}

pub fn write_summary(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
