//! Analytic gradient of the smoothed per-frame objective with respect to
//! the allocation matrix and the power vector.
//!
//! For a contender set S with stage SINRs s_1..s_n and logistic factors
//! g_m = sigmoid(b (s_m - gamma)), the smoothed count is
//! F = sum_l prod_{m<=l} g_m. Its sensitivity to g_m is
//! (prod_{m'<m} g_m') * (1 + g_{m+1} + g_{m+1} g_{m+2} + ...), evaluated with
//! running prefix and suffix sums so that nothing is divided by a factor.

use crate::model::{ActivityVector, AllocationMatrix, Network};
use crate::receiver::{leader_denominator, sigmoid, sort_by_received_power};

/// Analytic coordinates smaller than this are skipped by the relative-error
/// comparison.
pub const GRAD_CHECK_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    n_slots: usize,
    /// Row-major N x K.
    pub d_alloc: Vec<f64>,
    pub d_power: Vec<f64>,
}

impl Gradient {
    pub fn zeros(n_devices: usize, n_slots: usize) -> Self {
        Self {
            n_slots,
            d_alloc: vec![0.0; n_devices * n_slots],
            d_power: vec![0.0; n_devices],
        }
    }

    pub fn alloc(&self, device: usize, slot: usize) -> f64 {
        self.d_alloc[device * self.n_slots + slot]
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    /// Penalizes total power: d/dP (T - lambda * sum_i P_i). Powers are
    /// positive, so the l1 norm is their sum.
    pub fn apply_l1_penalty(&mut self, l1_weight: f64) {
        if l1_weight != 0.0 {
            self.d_power.iter_mut().for_each(|g| *g -= l1_weight);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_alloc.iter().chain(&self.d_power).all(|g| g.is_finite())
    }
}

/// Value and gradient of the smoothed per-frame objective.
pub fn smoothed_value_and_grad(
    alloc: &AllocationMatrix,
    power: &[f64],
    x: &ActivityVector,
    net: &Network,
) -> (f64, Gradient) {
    let mut scratch = Scratch::default();
    let mut grad = Gradient::zeros(alloc.n_devices(), alloc.n_slots());
    let value = accumulate(alloc.as_flat(), alloc.n_slots(), power, x, net, &mut grad, &mut scratch);
    (value, grad)
}

/// Gradient of the smoothed per-frame objective.
pub fn grad_smoothed(alloc: &AllocationMatrix, power: &[f64], x: &ActivityVector, net: &Network) -> Gradient {
    smoothed_value_and_grad(alloc, power, x, net).1
}

/// Reusable buffers for the per-frame gradient in the training loop.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    sorted: Vec<usize>,
    members: Vec<usize>,
    den: Vec<f64>,
    sig: Vec<f64>,
    dsinr: Vec<f64>,
    factor: Vec<f64>,
    prefix: Vec<f64>,
}

/// Overwrites `grad` with the gradient at (alloc, power) for frame `x` and
/// returns the smoothed objective value.
pub(crate) fn accumulate(
    alloc: &[f64],
    n_slots: usize,
    power: &[f64],
    x: &ActivityVector,
    net: &Network,
    grad: &mut Gradient,
    sc: &mut Scratch,
) -> f64 {
    grad.d_alloc.iter_mut().for_each(|g| *g = 0.0);
    grad.d_power.iter_mut().for_each(|g| *g = 0.0);

    let s = &net.scenario;
    let (gamma, b, noise) = (s.sinr_threshold, s.sharpness, s.noise_power);
    let channel = &net.channel;

    sc.sorted.clear();
    sc.sorted.extend(x.x.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i));
    sort_by_received_power(&mut sc.sorted, power, channel);
    let m = sc.sorted.len();

    let mut value = 0.0;
    for mask in 1usize..(1 << m) {
        sc.members.clear();
        let sorted = &sc.sorted;
        sc.members.extend((0..m).filter(|j| mask >> j & 1 == 1).map(|j| sorted[j]));
        let n = sc.members.len();

        // stage denominators and logistic factors
        sc.den.clear();
        sc.sig.clear();
        for st in 0..n {
            let rest = &sc.members[st..];
            let d = leader_denominator(rest, power, channel, noise);
            sc.den.push(d);
            sc.sig.push(sigmoid(b * (power[rest[0]] / d - gamma)));
        }

        // F and dF/dSINR_m
        sc.dsinr.clear();
        sc.dsinr.resize(n, 0.0);
        let mut suffix = 1.0;
        for st in (0..n).rev() {
            // suffix = 1 + g_{st+1} (1 + g_{st+2} (...))
            sc.dsinr[st] = suffix;
            suffix = 1.0 + sc.sig[st] * suffix;
        }
        let mut f = 0.0;
        let mut before = 1.0;
        for st in 0..n {
            let g = sc.sig[st];
            sc.dsinr[st] *= before * b * g * (1.0 - g);
            before *= g;
            f += before;
        }

        // slot weights and allocation gradient
        let mut weight = 0.0;
        for k in 0..n_slots {
            sc.factor.clear();
            for j in 0..m {
                let a = alloc[sc.sorted[j] * n_slots + k];
                sc.factor.push(if mask >> j & 1 == 1 { a } else { 1.0 - a });
            }
            sc.prefix.clear();
            let mut acc = 1.0;
            for &fac in &sc.factor {
                sc.prefix.push(acc);
                acc *= fac;
            }
            weight += acc;
            let mut after = 1.0;
            for j in (0..m).rev() {
                let excluded = sc.prefix[j] * after;
                let sign = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                grad.d_alloc[sc.sorted[j] * n_slots + k] += sign * excluded * f;
                after *= sc.factor[j];
            }
        }
        value += weight * f;

        // power gradient through every stage SINR
        for st in 0..n {
            let coef = weight * sc.dsinr[st];
            if coef == 0.0 {
                continue;
            }
            let lead = sc.members[st];
            let d = sc.den[st];
            grad.d_power[lead] += coef / d;
            let scale = coef * power[lead] / (d * d);
            for &j in &sc.members[st + 1..] {
                grad.d_power[j] -= scale * channel.coupling(j, lead);
            }
        }
    }
    value
}

/// Central differences of `f` at `point`, one coordinate at a time.
pub fn central_difference<F>(mut f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let up = f(&x);
            x[i] = orig - step;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest |a - n| / max(|a|, |n|) over coordinates with |a| > `floor`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .filter(|(a, _)| a.abs() > floor)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()))
        .fold(0.0, f64::max)
}

/// Analytic gradient and central differences of the smoothed objective,
/// both flattened as allocation entries then powers. The allocation is
/// perturbed off the simplex, where the objective is still defined.
pub fn finite_diff_vectors(
    alloc: &AllocationMatrix,
    power: &[f64],
    x: &ActivityVector,
    net: &Network,
    step: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (n, k) = (alloc.n_devices(), alloc.n_slots());
    let grad = grad_smoothed(alloc, power, x, net);

    let mut point = alloc.as_flat().to_vec();
    point.extend_from_slice(power);
    let numeric = central_difference(
        |z| {
            let a = AllocationMatrix::from_flat_unchecked(n, k, z[..n * k].to_vec());
            crate::objective::smoothed_conditional_objective(&a, &z[n * k..], x, net)
        },
        &point,
        step,
    );
    let mut analytic = grad.d_alloc;
    analytic.extend_from_slice(&grad.d_power);
    (analytic, numeric)
}

/// Max relative error of [`grad_smoothed`] against central differences.
pub fn finite_diff_check(
    alloc: &AllocationMatrix,
    power: &[f64],
    x: &ActivityVector,
    net: &Network,
    step: f64,
) -> f64 {
    let (analytic, numeric) = finite_diff_vectors(alloc, power, x, net, step);
    max_relative_error(&analytic, &numeric, GRAD_CHECK_FLOOR)
}
