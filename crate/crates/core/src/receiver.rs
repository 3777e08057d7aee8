//! MRC receiver with successive interference cancellation.
//!
//! A contender set is decoded in a fixed order: decreasing received power
//! P_i ||h_i||^2, ties to the lower device index. Stage m decodes the m-th
//! device against the interference of every device after it; the order is
//! not re-sorted between stages.

use crate::error::{Error, Result};
use crate::model::ChannelMatrix;

/// Per-set decoding report.
#[derive(Debug, Clone, PartialEq)]
pub struct SicOutcome {
    pub ordered_devices: Vec<usize>,
    /// SINR of stage m, i.e. of `ordered_devices[m]` with the m strongest
    /// devices already cancelled.
    pub stage_sinr: Vec<f64>,
    pub n_decoded: usize,
}

#[inline]
pub fn received_power(device: usize, power: &[f64], channel: &ChannelMatrix) -> f64 {
    power[device] * channel.squared_norm(device)
}

/// Sorts `set` by decreasing received power, ties by ascending index.
pub fn order_by_received_power(set: &[usize], power: &[f64], channel: &ChannelMatrix) -> Vec<usize> {
    let mut ordered = set.to_vec();
    sort_by_received_power(&mut ordered, power, channel);
    ordered
}

pub(crate) fn sort_by_received_power(set: &mut [usize], power: &[f64], channel: &ChannelMatrix) {
    set.sort_by(|&a, &b| {
        received_power(b, power, channel)
            .total_cmp(&received_power(a, power, channel))
            .then(a.cmp(&b))
    });
}

/// Interference-plus-noise seen by `ordered[0]` after MRC, normalized to the
/// leader's own gain: sigma^2/||h_1||^2 + sum_i (|h_i^H h_1| / ||h_1||^2)^2 P_i.
#[inline]
pub(crate) fn leader_denominator(
    ordered: &[usize],
    power: &[f64],
    channel: &ChannelMatrix,
    noise_power: f64,
) -> f64 {
    let lead = ordered[0];
    let mut den = noise_power / channel.squared_norm(lead);
    for &j in &ordered[1..] {
        den += channel.coupling(j, lead) * power[j];
    }
    den
}

/// SINR of the first device of an ordered set, and its denominator.
pub fn sinr(
    ordered: &[usize],
    power: &[f64],
    channel: &ChannelMatrix,
    noise_power: f64,
) -> Result<(f64, f64)> {
    let lead = *ordered
        .first()
        .ok_or_else(|| Error::Shape("SINR of an empty set".into()))?;
    if channel.squared_norm(lead) <= 0.0 {
        return Err(Error::DegenerateChannel { device: lead });
    }
    let den = leader_denominator(ordered, power, channel, noise_power);
    Ok((power[lead] / den, den))
}

/// SINR at every SIC stage of an already ordered set.
pub(crate) fn stage_sinrs_into(
    ordered: &[usize],
    power: &[f64],
    channel: &ChannelMatrix,
    noise_power: f64,
    out: &mut Vec<f64>,
) {
    out.clear();
    for m in 0..ordered.len() {
        let rest = &ordered[m..];
        out.push(power[rest[0]] / leader_denominator(rest, power, channel, noise_power));
    }
}

/// Length of the leading run of stages above the threshold.
#[inline]
pub(crate) fn decoded_prefix(stage_sinr: &[f64], sinr_threshold: f64) -> usize {
    stage_sinr.iter().take_while(|&&s| s > sinr_threshold).count()
}

/// Hard SIC decoding of `set`: the number of devices decoded before the
/// first stage whose SINR does not exceed the threshold.
pub fn sic_decode(
    set: &[usize],
    power: &[f64],
    channel: &ChannelMatrix,
    noise_power: f64,
    sinr_threshold: f64,
) -> SicOutcome {
    let ordered_devices = order_by_received_power(set, power, channel);
    let mut stage_sinr = Vec::with_capacity(set.len());
    stage_sinrs_into(&ordered_devices, power, channel, noise_power, &mut stage_sinr);
    let n_decoded = decoded_prefix(&stage_sinr, sinr_threshold);
    SicOutcome { ordered_devices, stage_sinr, n_decoded }
}

/// Logistic function, evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// sum_l prod_{m<=l} sigmoid(b (SINR_m - gamma)) for already computed stage SINRs.
pub(crate) fn smooth_count(stage_sinr: &[f64], sinr_threshold: f64, sharpness: f64) -> f64 {
    let mut total = 0.0;
    let mut prefix = 1.0;
    for &s in stage_sinr {
        prefix *= sigmoid(sharpness * (s - sinr_threshold));
        total += prefix;
    }
    total
}

/// Differentiable surrogate of the SIC count: each stage indicator is
/// replaced by a logistic of sharpness `b` centered on the threshold.
pub fn sic_smooth(
    set: &[usize],
    power: &[f64],
    channel: &ChannelMatrix,
    noise_power: f64,
    sinr_threshold: f64,
    sharpness: f64,
) -> f64 {
    let ordered = order_by_received_power(set, power, channel);
    let mut stage = Vec::with_capacity(set.len());
    stage_sinrs_into(&ordered, power, channel, noise_power, &mut stage);
    smooth_count(&stage, sinr_threshold, sharpness)
}
