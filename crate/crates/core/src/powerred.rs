//! Post-optimization power reduction.
//!
//! For a fixed allocation, every device's power is lowered to the largest
//! of the minimal powers it needs in the contender sets where it is decoded
//! first, keeping the SIC order of every slot support unchanged. Passes
//! repeat until the vector stops moving.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{AllocationMatrix, Network, PowerVector};
use crate::receiver::{received_power, sinr, sort_by_received_power};

/// Slack on "SINR > gamma", relative to gamma * sigma^2.
pub const SLACK_FACTOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ReduceOptions {
    /// Device i is in the support of slot k when A_ik exceeds this.
    pub support_threshold: f64,
    pub tolerance: f64,
    pub max_passes: usize,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        Self { support_threshold: 0.0, tolerance: 1e-9, max_passes: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct ReductionReport {
    pub power: PowerVector,
    pub passes: usize,
}

/// Devices with A_ik > threshold, per slot.
pub fn slot_support(alloc: &AllocationMatrix, threshold: f64) -> Vec<Vec<usize>> {
    (0..alloc.n_slots())
        .map(|k| (0..alloc.n_devices()).filter(|&i| alloc.get(i, k) > threshold).collect())
        .collect()
}

fn slack(net: &Network) -> f64 {
    SLACK_FACTOR * net.scenario.sinr_threshold * net.scenario.noise_power
}

/// Power the leader of `ordered` needs so that it stays decodable and
/// stays ahead of the second device, or, when the set is not decodable at
/// the current powers, the largest requirement over the sets obtained by
/// dropping one interferer. Zero means no decodable context was found.
pub fn required_power(ordered: &[usize], power: &[f64], net: &Network) -> f64 {
    let mut memo = HashMap::new();
    required_power_memo(ordered, power, net, &mut memo)
}

fn required_power_memo(
    ordered: &[usize],
    power: &[f64],
    net: &Network,
    memo: &mut HashMap<Vec<usize>, f64>,
) -> f64 {
    if let Some(&v) = memo.get(ordered) {
        return v;
    }
    let s = &net.scenario;
    let eps = slack(net);
    let lead = ordered[0];
    let value = match sinr(ordered, power, &net.channel, s.noise_power) {
        Ok((value, den)) if value > s.sinr_threshold => {
            // den already carries the 1/||h_lead||^2 normalization
            let mut req = s.sinr_threshold * den + eps;
            if let Some(&second) = ordered.get(1) {
                let keep_order = received_power(second, power, &net.channel)
                    / net.channel.squared_norm(lead)
                    + eps;
                req = req.max(keep_order);
            }
            req.clamp(net.p_min[lead], s.p_max)
        }
        _ => {
            // sub-contexts are evaluated at the live powers, not at zero
            let mut best = 0.0f64;
            let mut sub = Vec::with_capacity(ordered.len().saturating_sub(1));
            for drop in 1..ordered.len() {
                sub.clear();
                sub.extend(ordered.iter().enumerate().filter(|&(i, _)| i != drop).map(|(_, &d)| d));
                best = best.max(required_power_memo(&sub, power, net, memo));
            }
            best
        }
    };
    memo.insert(ordered.to_vec(), value);
    value
}

/// One pass over all slots at the given powers.
fn reduction_pass(supports: &[Vec<usize>], power: &[f64], net: &Network) -> Vec<f64> {
    let eps = slack(net);
    let mut cleaned = net.p_min.clone();
    for support in supports {
        let mut ordered = support.clone();
        sort_by_received_power(&mut ordered, power, &net.channel);
        let mut memo = HashMap::new();
        for start in 0..ordered.len() {
            let suffix = &ordered[start..];
            let lead = suffix[0];
            let mut req = required_power_memo(suffix, power, net, &mut memo);
            // keep the leader ahead of its successor even where it is never decoded
            if let Some(&next) = suffix.get(1) {
                let keep_order =
                    received_power(next, power, &net.channel) / net.channel.squared_norm(lead) + eps;
                req = req.max(keep_order);
            }
            // the current power already satisfies every constraint above
            let req = req.min(power[lead]);
            cleaned[lead] = cleaned[lead].max(req);
        }
    }
    cleaned
}

/// Repeats reduction passes until the largest change is below tolerance.
pub fn reduce_power_with(
    alloc: &AllocationMatrix,
    power: &PowerVector,
    net: &Network,
    options: &ReduceOptions,
) -> Result<ReductionReport> {
    if alloc.n_devices() != net.n_devices() || power.len() != net.n_devices() {
        return Err(Error::Shape("allocation, power and network disagree on N".into()));
    }
    let supports = slot_support(alloc, options.support_threshold);
    let mut current = power.values().to_vec();
    let mut passes = 0;
    while passes < options.max_passes {
        passes += 1;
        let next = reduction_pass(&supports, &current, net);
        let mut delta = 0.0f64;
        for (device, (&after, &before)) in next.iter().zip(&current).enumerate() {
            if after > before {
                return Err(Error::MonotonicityViolation { device, before, after });
            }
            delta = delta.max(before - after);
        }
        current = next;
        if delta < options.tolerance {
            break;
        }
    }
    Ok(ReductionReport { power: power.with_values(current)?, passes })
}

/// [`reduce_power_with`] under default options.
pub fn reduce_power(alloc: &AllocationMatrix, power: &PowerVector, net: &Network) -> Result<PowerVector> {
    reduce_power_with(alloc, power, net, &ReduceOptions::default()).map(|r| r.power)
}
