//! Projected stochastic ascent on the smoothed objective.
//!
//! Each frame draws the active devices, takes an ADAGRAD ascent step on
//! both parameter blocks, then projects the allocation rows onto the
//! probability simplex and the powers onto their box.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grad::{accumulate, Gradient, Scratch};
use crate::model::{sample_activity, AllocationMatrix, Network, PowerVector, Stream};
use crate::objective::{exact_expected_objective, normalized_objective};

pub const DEFAULT_EPSILON: f64 = 1e-10;
pub const DEFAULT_CHECKPOINT_EVERY: usize = 1000;

/// Per-coordinate squared-gradient sums.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradState {
    pub accum_alloc: Vec<f64>,
    pub accum_power: Vec<f64>,
    pub step_size: f64,
    pub epsilon: f64,
}

impl AdagradState {
    pub fn new(n_devices: usize, n_slots: usize, step_size: f64) -> Self {
        Self {
            accum_alloc: vec![0.0; n_devices * n_slots],
            accum_power: vec![0.0; n_devices],
            step_size,
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// Ascent step: G += g^2, then theta += mu g / (sqrt(G) + eps).
    pub fn step(&mut self, alloc: &mut [f64], power: &mut [f64], grad: &Gradient) {
        let (mu, eps) = (self.step_size, self.epsilon);
        let update = |theta: &mut [f64], accum: &mut [f64], g: &[f64]| {
            for ((t, acc), &gi) in theta.iter_mut().zip(accum.iter_mut()).zip(g) {
                *acc += gi * gi;
                *t += mu * gi / (acc.sqrt() + eps);
            }
        };
        update(alloc, &mut self.accum_alloc, &grad.d_alloc);
        update(power, &mut self.accum_power, &grad.d_power);
    }
}

/// Euclidean projection of one row onto {a >= 0, sum a = 1}, by sorting
/// and thresholding.
pub fn project_simplex(row: &mut [f64]) {
    if row.is_empty() {
        return;
    }
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    row.iter_mut().for_each(|a| *a = (*a - theta).max(0.0));
}

pub(crate) fn project_simplex_flat(data: &mut [f64], n_slots: usize) {
    data.chunks_mut(n_slots).for_each(project_simplex);
}

/// Projects every row of an arbitrary real matrix onto the simplex.
pub fn project_simplex_rows(rows: &[Vec<f64>]) -> Result<AllocationMatrix> {
    let n_slots = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_slots) || n_slots == 0 {
        return Err(Error::Shape("rows must be nonempty and of equal length".into()));
    }
    let mut data: Vec<f64> = rows.iter().flatten().copied().collect();
    project_simplex_flat(&mut data, n_slots);
    Ok(AllocationMatrix::from_flat_unchecked(rows.len(), n_slots, data))
}

/// Coordinatewise clamp to [p_min_i, p_max].
pub fn project_box(power: &[f64], p_min: &[f64], p_max: f64) -> Result<PowerVector> {
    let p = power.iter().zip(p_min).map(|(&p, &lo)| p.clamp(lo, p_max)).collect();
    PowerVector::new(p, p_min.to_vec(), p_max)
}

fn project_box_in_place(power: &mut [f64], p_min: &[f64], p_max: f64) {
    power.iter_mut().zip(p_min).for_each(|(p, &lo)| *p = p.clamp(lo, p_max));
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    /// 1-based frame index.
    pub frame: usize,
    /// Smoothed objective of this frame's activity at the pre-update parameters.
    pub smoothed_sample: f64,
    /// Normalized exact expected objective after the update, on checkpoint frames.
    pub exact_objective: Option<f64>,
    pub mean_power: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<FrameRecord>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes every `stride`-th record plus all checkpoint rows.
    pub fn write_csv<W: Write>(&self, out: W, stride: usize) -> Result<()> {
        let stride = stride.max(1);
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["frame", "smoothed_sample", "exact_objective", "mean_power"])?;
        for r in &self.records {
            if r.frame % stride != 0 && r.exact_objective.is_none() {
                continue;
            }
            w.write_record([
                r.frame.to_string(),
                r.smoothed_sample.to_string(),
                r.exact_objective.map(|v| v.to_string()).unwrap_or_default(),
                r.mean_power.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// State handed to the per-frame observer after projection.
#[derive(Debug)]
pub struct FrameView<'a> {
    pub frame: usize,
    pub n_slots: usize,
    /// Row-major N x K allocation.
    pub alloc: &'a [f64],
    pub power: &'a [f64],
    pub smoothed_sample: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub l1_weight: f64,
    pub n_frames: usize,
    pub step_size: f64,
    pub epsilon: f64,
    /// Exact objective is evaluated every this many frames; 0 disables it.
    pub checkpoint_every: usize,
}

impl OptimizeOptions {
    /// Frame count, step size and l1 weight taken from the scenario.
    pub fn from_network(net: &Network) -> Self {
        let s = &net.scenario;
        Self {
            l1_weight: s.l1_weight,
            n_frames: s.n_frames,
            step_size: s.step_size,
            epsilon: DEFAULT_EPSILON,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
        }
    }

    pub fn without_l1(mut self) -> Self {
        self.l1_weight = 0.0;
        self
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOutput {
    pub alloc: AllocationMatrix,
    pub power: PowerVector,
    pub trace: TrainTrace,
}

/// Random simplex rows from the scenario's init stream and every device at
/// its minimum power.
pub fn initial_parameters(net: &Network, seed: u64) -> (AllocationMatrix, PowerVector) {
    let mut rng = crate::model::stream(seed, Stream::Init);
    let alloc = AllocationMatrix::random(net.n_devices(), net.n_slots(), &mut rng);
    (alloc, net.min_power())
}

/// Runs the per-frame projected ADAGRAD loop.
pub fn optimize<R: Rng + ?Sized>(
    net: &Network,
    init_alloc: &AllocationMatrix,
    init_power: &PowerVector,
    options: &OptimizeOptions,
    rng: &mut R,
    observer: &mut dyn FnMut(&FrameView<'_>),
) -> Result<OptimizeOutput> {
    let (n, k) = (net.n_devices(), net.n_slots());
    if init_alloc.n_devices() != n || init_alloc.n_slots() != k {
        return Err(Error::Shape(format!(
            "initial allocation is {}x{}, network is {n}x{k}",
            init_alloc.n_devices(),
            init_alloc.n_slots()
        )));
    }
    if init_power.len() != n {
        return Err(Error::Shape(format!("{} initial powers for {n} devices", init_power.len())));
    }
    let p_max = net.scenario.p_max;
    if let Some((device, &lo)) = net.p_min.iter().enumerate().find(|(_, &lo)| lo > p_max) {
        return Err(Error::Infeasible { device, p_min: lo, p_max });
    }

    let activity = &net.scenario.activity;
    let mut alloc = init_alloc.as_flat().to_vec();
    let mut power = init_power.values().to_vec();
    let mut state = AdagradState::new(n, k, options.step_size);
    state.epsilon = options.epsilon;
    let mut grad = Gradient::zeros(n, k);
    let mut scratch = Scratch::default();
    let mut trace = TrainTrace { records: Vec::with_capacity(options.n_frames) };

    for frame in 1..=options.n_frames {
        let x = sample_activity(activity, rng);
        let sample = accumulate(&alloc, k, &power, &x, net, &mut grad, &mut scratch);
        grad.apply_l1_penalty(options.l1_weight);
        state.step(&mut alloc, &mut power, &grad);
        project_simplex_flat(&mut alloc, k);
        project_box_in_place(&mut power, &net.p_min, p_max);

        let exact_objective = if options.checkpoint_every > 0 && frame % options.checkpoint_every == 0 {
            let a = AllocationMatrix::from_flat_unchecked(n, k, alloc.clone());
            exact_expected_objective(&a, &power, activity, net)
                .and_then(|t| normalized_objective(t, activity))
                .ok()
        } else {
            None
        };
        trace.records.push(FrameRecord {
            frame,
            smoothed_sample: sample,
            exact_objective,
            mean_power: power.iter().sum::<f64>() / n as f64,
        });
        observer(&FrameView {
            frame,
            n_slots: k,
            alloc: &alloc,
            power: &power,
            smoothed_sample: sample,
        });
    }

    Ok(OptimizeOutput {
        alloc: AllocationMatrix::from_flat_unchecked(n, k, alloc),
        power: PowerVector::new_unchecked(power, net.p_min.clone(), p_max),
        trace,
    })
}
