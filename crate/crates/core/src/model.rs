//! Domain types for the random-access network: the scenario description,
//! activity and allocation state, transmit powers and the Rayleigh channel.
//!
//! Every random draw goes through [`stream`], which derives an independent
//! ChaCha sub-stream per purpose from a single 64-bit seed. Channel draws
//! therefore never shift when the number of frames changes.

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on allocation row sums.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Full experiment description. Serialized with exactly these keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n_devices: usize,
    pub n_slots: usize,
    /// Per-device activity probabilities, sorted nondecreasing.
    pub activity: Vec<f64>,
    pub n_antennas: usize,
    /// Noise power, linear scale.
    pub noise_power: f64,
    /// Decoding threshold on the SINR, linear scale.
    pub sinr_threshold: f64,
    pub p_max: f64,
    pub pmin_margin: f64,
    /// Sigmoid sharpness of the smoothed SIC count.
    pub sharpness: f64,
    pub step_size: f64,
    pub n_frames: usize,
    pub l1_weight: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.n_devices == 0 || self.n_slots == 0 || self.n_antennas == 0 {
            return bad("n_devices, n_slots and n_antennas must be positive".into());
        }
        if self.activity.len() != self.n_devices {
            return bad(format!(
                "activity has {} entries for {} devices",
                self.activity.len(),
                self.n_devices
            ));
        }
        if let Some(p) = self.activity.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("activity probability {p} outside [0, 1]"));
        }
        if self.activity.windows(2).any(|w| w[0] > w[1]) {
            return bad("activity must be sorted nondecreasing".into());
        }
        for (name, v) in [
            ("noise_power", self.noise_power),
            ("sinr_threshold", self.sinr_threshold),
            ("p_max", self.p_max),
            ("sharpness", self.sharpness),
            ("step_size", self.step_size),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [("pmin_margin", self.pmin_margin), ("l1_weight", self.l1_weight)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(s)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn total_activity(&self) -> f64 {
        self.activity.iter().sum()
    }
}

/// Which purpose a random sub-stream serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Channel = 0,
    Activity = 1,
    Init = 2,
    Evaluation = 3,
}

/// Independent, reproducible generator for one purpose under one seed.
pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Binary activity flags of one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityVector {
    pub x: Vec<bool>,
}

impl ActivityVector {
    pub fn new(x: Vec<bool>) -> Self {
        Self { x }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn active(&self) -> Vec<usize> {
        self.x.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i).collect()
    }

    pub fn n_active(&self) -> usize {
        self.x.iter().filter(|&&a| a).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.x.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect()
    }
}

/// Draws one frame of independent Bernoulli activity. Consumes exactly one
/// uniform per device, in device order.
pub fn sample_activity<R: Rng + ?Sized>(activity: &[f64], rng: &mut R) -> ActivityVector {
    let x = activity
        .iter()
        .map(|&p| rng.random::<f64>() < p)
        .collect();
    ActivityVector { x }
}

/// Row-stochastic N x K matrix of conditional slot-selection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationMatrix {
    n_devices: usize,
    n_slots: usize,
    data: Vec<f64>,
}

impl AllocationMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_devices = rows.len();
        let n_slots = rows.first().map_or(0, Vec::len);
        if n_devices == 0 || n_slots == 0 {
            return Err(Error::Shape("allocation matrix must be nonempty".into()));
        }
        if rows.iter().any(|r| r.len() != n_slots) {
            return Err(Error::Shape("allocation rows have unequal lengths".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_flat(n_devices, n_slots, data)
    }

    pub fn from_flat(n_devices: usize, n_slots: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_devices * n_slots {
            return Err(Error::Shape(format!(
                "{} entries for a {n_devices}x{n_slots} matrix",
                data.len()
            )));
        }
        let m = Self { n_devices, n_slots, data };
        for i in 0..n_devices {
            let row = m.row(i);
            if row.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
                return Err(Error::Shape(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Shape(format!("row {i} sums to {sum}")));
            }
        }
        Ok(m)
    }

    /// Wraps a buffer that the caller guarantees is row-stochastic.
    pub(crate) fn from_flat_unchecked(n_devices: usize, n_slots: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n_devices * n_slots);
        Self { n_devices, n_slots, data }
    }

    pub fn n_devices(&self) -> usize {
        self.n_devices
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    #[inline]
    pub fn get(&self, device: usize, slot: usize) -> f64 {
        self.data[device * self.n_slots + slot]
    }

    pub fn row(&self, device: usize) -> &[f64] {
        &self.data[device * self.n_slots..(device + 1) * self.n_slots]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n_slots).map(<[f64]>::to_vec).collect()
    }

    /// Random matrix with each row uniform on the simplex (normalized
    /// exponentials).
    pub fn random<R: Rng + ?Sized>(n_devices: usize, n_slots: usize, rng: &mut R) -> Self {
        let mut data = Vec::with_capacity(n_devices * n_slots);
        for _ in 0..n_devices {
            let row: Vec<f64> = (0..n_slots).map(|_| Exp1.sample(rng)).collect();
            let sum: f64 = row.iter().sum();
            data.extend(row.iter().map(|e| e / sum));
        }
        Self::from_flat_unchecked(n_devices, n_slots, data)
    }
}

/// Transmit powers together with their per-device box.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector {
    p: Vec<f64>,
    p_min: Vec<f64>,
    p_max: f64,
}

impl PowerVector {
    pub fn new(p: Vec<f64>, p_min: Vec<f64>, p_max: f64) -> Result<Self> {
        if p.len() != p_min.len() {
            return Err(Error::Shape(format!(
                "{} powers for {} minimum powers",
                p.len(),
                p_min.len()
            )));
        }
        for (i, (&pi, &lo)) in p.iter().zip(&p_min).enumerate() {
            if !(lo > 0.0 && lo <= p_max) {
                return Err(Error::Infeasible { device: i, p_min: lo, p_max });
            }
            if !(pi >= lo && pi <= p_max) {
                return Err(Error::Shape(format!(
                    "power {pi} of device {i} outside [{lo}, {p_max}]"
                )));
            }
        }
        Ok(Self { p, p_min, p_max })
    }

    pub(crate) fn new_unchecked(p: Vec<f64>, p_min: Vec<f64>, p_max: f64) -> Self {
        Self { p, p_min, p_max }
    }

    /// Every device at its own minimum power.
    pub fn at_minimum(p_min: Vec<f64>, p_max: f64) -> Result<Self> {
        Self::new(p_min.clone(), p_min, p_max)
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn p_min(&self) -> &[f64] {
        &self.p_min
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Same box, new values. Values are validated against the box.
    pub fn with_values(&self, p: Vec<f64>) -> Result<Self> {
        Self::new(p, self.p_min.clone(), self.p_max)
    }
}

/// N_r x N complex channel, stored per device (column i is h_i), together
/// with the cached quantities the SINR formula needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    columns: Vec<Vec<Complex64>>,
    squared_norms: Vec<f64>,
    /// `coupling[j * n + i]` = |h_j^H h_i|^2 / ||h_i||^4, the weight of
    /// interferer j in the SINR of device i after MRC.
    coupling: Vec<f64>,
}

impl ChannelMatrix {
    pub fn from_columns(columns: Vec<Vec<Complex64>>) -> Result<Self> {
        let n_antennas = columns.first().map_or(0, Vec::len);
        if columns.is_empty() || n_antennas == 0 {
            return Err(Error::Shape("channel matrix must be nonempty".into()));
        }
        if columns.iter().any(|c| c.len() != n_antennas) {
            return Err(Error::Shape("channel columns have unequal lengths".into()));
        }
        let n = columns.len();
        let squared_norms: Vec<f64> = columns
            .iter()
            .map(|c| c.iter().map(Complex64::norm_sqr).sum())
            .collect();
        let mut coupling = vec![0.0; n * n];
        for i in 0..n {
            let norm4 = squared_norms[i] * squared_norms[i];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let inner: Complex64 = columns[j]
                    .iter()
                    .zip(&columns[i])
                    .map(|(hj, hi)| hj.conj() * hi)
                    .sum();
                coupling[j * n + i] = inner.norm_sqr() / norm4;
            }
        }
        Ok(Self { columns, squared_norms, coupling })
    }

    /// Builds from N_r x N real and imaginary parts (rows are antennas).
    pub fn from_parts(real: &[Vec<f64>], imag: &[Vec<f64>]) -> Result<Self> {
        if real.len() != imag.len() || real.is_empty() {
            return Err(Error::Shape("H_real and H_imag must have the same nonzero row count".into()));
        }
        let n = real[0].len();
        if real.iter().chain(imag).any(|r| r.len() != n) {
            return Err(Error::Shape("H_real and H_imag rows have unequal lengths".into()));
        }
        let columns = (0..n)
            .map(|i| {
                real.iter()
                    .zip(imag)
                    .map(|(re, im)| Complex64::new(re[i], im[i]))
                    .collect()
            })
            .collect();
        Self::from_columns(columns)
    }

    /// Real and imaginary parts as N_r x N matrices.
    pub fn to_parts(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let real = (0..self.n_antennas())
            .map(|l| self.columns.iter().map(|c| c[l].re).collect())
            .collect();
        let imag = (0..self.n_antennas())
            .map(|l| self.columns.iter().map(|c| c[l].im).collect())
            .collect();
        (real, imag)
    }

    pub fn n_devices(&self) -> usize {
        self.columns.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.columns[0].len()
    }

    pub fn column(&self, device: usize) -> &[Complex64] {
        &self.columns[device]
    }

    pub fn squared_norms(&self) -> &[f64] {
        &self.squared_norms
    }

    #[inline]
    pub fn squared_norm(&self, device: usize) -> f64 {
        self.squared_norms[device]
    }

    /// (|h_j^H h_i| / ||h_i||^2)^2.
    #[inline]
    pub fn coupling(&self, interferer: usize, device: usize) -> f64 {
        self.coupling[interferer * self.columns.len() + device]
    }
}

/// i.i.d. CN(0, 1) entries; per entry the real part is drawn before the
/// imaginary part, device by device.
pub fn sample_channel<R: Rng + ?Sized>(
    n_devices: usize,
    n_antennas: usize,
    rng: &mut R,
) -> ChannelMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let columns = (0..n_devices)
        .map(|_| {
            (0..n_antennas)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    Complex64::new(scale * re, scale * im)
                })
                .collect()
        })
        .collect();
    ChannelMatrix::from_columns(columns).expect("positive dimensions")
}

/// Smallest power letting each device clear the threshold when transmitting
/// alone, inflated by `margin`: (1 + margin) * gamma * sigma^2 / ||h_i||^2.
pub fn compute_pmin(
    channel: &ChannelMatrix,
    sinr_threshold: f64,
    noise_power: f64,
    margin: f64,
) -> Result<Vec<f64>> {
    channel
        .squared_norms()
        .iter()
        .enumerate()
        .map(|(device, &g)| {
            if g > 0.0 {
                Ok((1.0 + margin) * sinr_threshold * noise_power / g)
            } else {
                Err(Error::DegenerateChannel { device })
            }
        })
        .collect()
}

/// A scenario bound to one channel realization, with its minimum powers.
#[derive(Debug, Clone)]
pub struct Network {
    pub scenario: Scenario,
    pub channel: ChannelMatrix,
    pub p_min: Vec<f64>,
}

impl Network {
    pub fn new(scenario: Scenario, channel: ChannelMatrix) -> Result<Self> {
        scenario.validate()?;
        if channel.n_devices() != scenario.n_devices {
            return Err(Error::Shape(format!(
                "channel has {} devices, scenario {}",
                channel.n_devices(),
                scenario.n_devices
            )));
        }
        let p_min = compute_pmin(
            &channel,
            scenario.sinr_threshold,
            scenario.noise_power,
            scenario.pmin_margin,
        )?;
        if let Some((device, &lo)) = p_min.iter().enumerate().find(|(_, &lo)| lo > scenario.p_max) {
            return Err(Error::Infeasible { device, p_min: lo, p_max: scenario.p_max });
        }
        Ok(Self { scenario, channel, p_min })
    }

    /// Draws channels from the scenario's channel stream until every device
    /// can meet its minimum power within P_max.
    pub fn draw(scenario: Scenario, seed: u64) -> Result<Self> {
        const MAX_ATTEMPTS: usize = 1000;
        scenario.validate()?;
        let mut rng = stream(seed, Stream::Channel);
        let mut last_err = None;
        for _ in 0..MAX_ATTEMPTS {
            let channel = sample_channel(scenario.n_devices, scenario.n_antennas, &mut rng);
            match Self::new(scenario.clone(), channel) {
                Ok(net) => return Ok(net),
                Err(e @ (Error::Infeasible { .. } | Error::DegenerateChannel { .. })) => {
                    last_err = Some(e)
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    pub fn n_devices(&self) -> usize {
        self.scenario.n_devices
    }

    pub fn n_slots(&self) -> usize {
        self.scenario.n_slots
    }

    pub fn min_power(&self) -> PowerVector {
        PowerVector::new_unchecked(self.p_min.clone(), self.p_min.clone(), self.scenario.p_max)
    }

    pub fn power(&self, p: Vec<f64>) -> Result<PowerVector> {
        PowerVector::new(p, self.p_min.clone(), self.scenario.p_max)
    }
}
