//! Expected number of devices decoded without outage.
//!
//! For slot k and contender set S the weight
//! Q_k(S) = prod_{i in S} v_i A_ik * prod_{j not in S} (1 - v_j A_jk)
//! is the probability that exactly S transmits in k, where v is either a
//! binary activity vector (one frame) or the activity probabilities (the
//! expectation over frames, by independence across devices). The objective
//! sums Q_k(S) times the SIC count of S over all slots and sets.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{sample_activity, ActivityVector, AllocationMatrix, Network};
use crate::receiver::{decoded_prefix, smooth_count, sort_by_received_power, stage_sinrs_into};

/// Largest N for which exact expectation over all 2^N sets is allowed.
pub const MAX_EXACT_DEVICES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport {
    pub value: f64,
    pub per_slot: Vec<f64>,
    pub n_subsets_evaluated: usize,
}

/// Q_k for an arbitrary subset over all N devices.
pub fn subset_probability(alloc: &AllocationMatrix, subset: &[usize], v: &[f64], slot: usize) -> f64 {
    (0..alloc.n_devices())
        .map(|i| {
            let a = v[i] * alloc.get(i, slot);
            if subset.contains(&i) {
                a
            } else {
                1.0 - a
            }
        })
        .product()
}

/// Sums Q_k(S) * count(S) over every subset S of `devices`. Devices outside
/// the list are treated as having v = 0 and contribute a factor of one.
/// `count` receives the stage SINRs of S in decoding order.
pub(crate) fn enumerate_weighted<F>(
    alloc: &AllocationMatrix,
    power: &[f64],
    net: &Network,
    devices: &[usize],
    v: &[f64],
    mut count: F,
) -> ObjectiveReport
where
    F: FnMut(&[f64]) -> f64,
{
    let n_slots = alloc.n_slots();
    let mut sorted = devices.to_vec();
    sort_by_received_power(&mut sorted, power, &net.channel);
    let m = sorted.len();
    // va[j * K + k] = v A for the j-th sorted device
    let va: Vec<f64> = sorted
        .iter()
        .flat_map(|&d| (0..n_slots).map(move |k| v[d] * alloc.get(d, k)))
        .collect();

    let mut per_slot = vec![0.0; n_slots];
    let mut members = Vec::with_capacity(m);
    let mut stage = Vec::with_capacity(m);
    for mask in 1usize..(1 << m) {
        members.clear();
        members.extend((0..m).filter(|j| mask >> j & 1 == 1).map(|j| sorted[j]));
        stage_sinrs_into(&members, power, &net.channel, net.scenario.noise_power, &mut stage);
        let c = count(&stage);
        if c == 0.0 {
            continue;
        }
        for (k, acc) in per_slot.iter_mut().enumerate() {
            let q: f64 = (0..m)
                .map(|j| {
                    let a = va[j * n_slots + k];
                    if mask >> j & 1 == 1 {
                        a
                    } else {
                        1.0 - a
                    }
                })
                .product();
            *acc += q * c;
        }
    }
    ObjectiveReport {
        value: per_slot.iter().sum(),
        per_slot,
        n_subsets_evaluated: 1 << m,
    }
}

/// Number of devices decoded in one frame, averaged over slot choices.
pub fn conditional_objective(
    alloc: &AllocationMatrix,
    power: &[f64],
    x: &ActivityVector,
    net: &Network,
) -> ObjectiveReport {
    let gamma = net.scenario.sinr_threshold;
    enumerate_weighted(alloc, power, net, &x.active(), &x.as_f64(), |stage| {
        decoded_prefix(stage, gamma) as f64
    })
}

/// [`conditional_objective`] with the logistic surrogate of the SIC count.
pub fn smoothed_conditional_objective(
    alloc: &AllocationMatrix,
    power: &[f64],
    x: &ActivityVector,
    net: &Network,
) -> f64 {
    let s = &net.scenario;
    enumerate_weighted(alloc, power, net, &x.active(), &x.as_f64(), |stage| {
        smooth_count(stage, s.sinr_threshold, s.sharpness)
    })
    .value
}

/// Expectation over the activity distribution, by enumerating all 2^N sets
/// with weights built from the activity probabilities.
pub fn exact_expected_objective(
    alloc: &AllocationMatrix,
    power: &[f64],
    activity: &[f64],
    net: &Network,
) -> Result<f64> {
    let n = net.n_devices();
    if n > MAX_EXACT_DEVICES {
        return Err(Error::TooManyDevices { n, limit: MAX_EXACT_DEVICES });
    }
    if activity.len() != n {
        return Err(Error::Shape(format!("{} activity values for {n} devices", activity.len())));
    }
    let gamma = net.scenario.sinr_threshold;
    let devices: Vec<usize> = (0..n).collect();
    Ok(enumerate_weighted(alloc, power, net, &devices, activity, |stage| {
        decoded_prefix(stage, gamma) as f64
    })
    .value)
}

/// Sample mean and standard error of the per-frame objective over
/// `n_frames` independent activity draws.
pub fn mc_expected_objective<R: Rng + ?Sized>(
    alloc: &AllocationMatrix,
    power: &[f64],
    activity: &[f64],
    net: &Network,
    n_frames: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n_frames == 0 {
        return Err(Error::Config("Monte Carlo needs at least one frame".into()));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for t in 0..n_frames {
        let x = sample_activity(activity, rng);
        let v = conditional_objective(alloc, power, &x, net).value;
        let delta = v - mean;
        mean += delta / (t + 1) as f64;
        m2 += delta * (v - mean);
    }
    let se = if n_frames > 1 {
        (m2 / (n_frames - 1) as f64 / n_frames as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Ok((mean, se))
}

/// Expected decoded count divided by the expected number of active devices.
pub fn normalized_objective(expected_value: f64, activity: &[f64]) -> Result<f64> {
    let total: f64 = activity.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroActivity);
    }
    Ok(expected_value / total)
}

/// E[P^T X] = sum_i p_i P_i.
pub fn expected_power(power: &[f64], activity: &[f64]) -> f64 {
    power.iter().zip(activity).map(|(p, a)| p * a).sum()
}
