//! Reference allocations: uniform slotted ALOHA with a doubling ladder of
//! power levels, and a greedy allocation that isolates the most active
//! devices.

use log::warn;

use crate::error::{Error, Result};
use crate::model::{AllocationMatrix, PowerVector};

/// Power levels used by both baselines unless configured otherwise.
pub const DEFAULT_POWER_LEVELS: usize = 2;

/// Uniform slot choice: every entry 1/K.
pub fn aloha_matrix(n_devices: usize, n_slots: usize) -> AllocationMatrix {
    AllocationMatrix::from_flat_unchecked(
        n_devices,
        n_slots,
        vec![1.0 / n_slots as f64; n_devices * n_slots],
    )
}

/// Doubling ladder starting at the largest minimum power:
/// level j (1-based) is 2^(j-1) * max_i P_min,i, kept while within P_max.
pub fn structured_power_levels(p_min: &[f64], p_max: f64) -> Result<Vec<f64>> {
    let first = p_min.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(first > 0.0 && first <= p_max) {
        return Err(Error::Infeasible { device: argmax(p_min), p_min: first, p_max });
    }
    Ok(std::iter::successors(Some(first), |&l| Some(2.0 * l))
        .take_while(|&l| l <= p_max)
        .collect())
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i)
}

/// The ladder truncated to its first `n_levels` levels.
pub fn baseline_levels(p_min: &[f64], p_max: f64, n_levels: usize) -> Result<Vec<f64>> {
    let mut levels = structured_power_levels(p_min, p_max)?;
    levels.truncate(n_levels.max(1));
    Ok(levels)
}

/// Levels repeated in device order: l1, l2, ..., lJ, l1, ...
pub fn cyclic_power_assignment(levels: &[f64], n_devices: usize) -> Vec<f64> {
    assert!(!levels.is_empty(), "at least one power level");
    levels.iter().copied().cycle().take(n_devices).collect()
}

/// Raises any power below its device's minimum, logging each clamp.
pub fn clamp_to_box(p: Vec<f64>, p_min: &[f64], p_max: f64) -> Result<PowerVector> {
    let p = p
        .into_iter()
        .zip(p_min)
        .enumerate()
        .map(|(i, (v, &lo))| {
            let c = v.clamp(lo, p_max);
            if c != v {
                warn!("baseline power of device {i} clamped from {v} to {c}");
            }
            c
        })
        .collect();
    PowerVector::new(p, p_min.to_vec(), p_max)
}

/// ALOHA slot choice with the cyclic structured powers.
pub fn aloha_structured(
    n_slots: usize,
    p_min: &[f64],
    p_max: f64,
    n_levels: usize,
) -> Result<(AllocationMatrix, PowerVector)> {
    let levels = baseline_levels(p_min, p_max, n_levels)?;
    let power = clamp_to_box(cyclic_power_assignment(&levels, p_min.len()), p_min, p_max)?;
    Ok((aloha_matrix(p_min.len(), n_slots), power))
}

/// Greedy allocation for devices sorted by ascending activity.
///
/// The (J-1) K most active devices form J-1 blocks of K. Devices within a
/// block take distinct slots; the most active block uses the lowest level
/// and each less active block the next level up. All remaining devices
/// share slot 0 at the highest level. The returned powers are raw levels;
/// see [`greedy_baseline`] for the clamped variant.
pub fn greedy_allocation(
    activity: &[f64],
    n_slots: usize,
    levels: &[f64],
) -> Result<(AllocationMatrix, Vec<f64>)> {
    let n = activity.len();
    let j = levels.len();
    if j == 0 {
        return Err(Error::Config("greedy allocation needs at least one power level".into()));
    }
    let needed = (j - 1) * n_slots;
    if needed > n {
        return Err(Error::GreedyTooFewDevices { needed, available: n });
    }
    let shared = n - needed;
    let mut alloc = vec![0.0; n * n_slots];
    let mut power = vec![levels[j - 1]; n];
    for i in 0..shared {
        alloc[i * n_slots] = 1.0;
    }
    for i in shared..n {
        let pos = i - shared;
        // block 0 is the least active of the orthogonal blocks
        let block = pos / n_slots;
        alloc[i * n_slots + pos % n_slots] = 1.0;
        power[i] = levels[j - 2 - block];
    }
    Ok((AllocationMatrix::from_flat_unchecked(n, n_slots, alloc), power))
}

/// Greedy allocation on the structured ladder, with powers clamped to the box.
pub fn greedy_baseline(
    activity: &[f64],
    n_slots: usize,
    p_min: &[f64],
    p_max: f64,
    n_levels: usize,
) -> Result<(AllocationMatrix, PowerVector)> {
    let levels = baseline_levels(p_min, p_max, n_levels)?;
    let (alloc, p) = greedy_allocation(activity, n_slots, &levels)?;
    Ok((alloc, clamp_to_box(p, p_min, p_max)?))
}
