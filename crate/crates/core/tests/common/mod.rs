//! Independent reference implementations used as test oracles. None of these
//! share code paths with the library beyond the public domain types.
#![allow(dead_code)]

pub mod dd;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sicfsa::model::{ActivityVector, AllocationMatrix, ChannelMatrix, Network};
use sicfsa::runner::builtin_scenario;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm2(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// SINRs of each SIC stage, recomputed from raw channel columns, in the
/// order devices are peeled off.
pub fn stage_sinrs(set: &[usize], p: &[f64], h: &ChannelMatrix, noise: f64) -> Vec<f64> {
    let mut remaining: Vec<usize> = set.to_vec();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        // strongest by received power, lowest index on ties
        let mut best = 0;
        for (pos, &i) in remaining.iter().enumerate() {
            let rp = p[i] * norm2(h.column(i));
            let rb = p[remaining[best]] * norm2(h.column(remaining[best]));
            if rp > rb || (rp == rb && i < remaining[best]) {
                best = pos;
            }
        }
        let lead = remaining.remove(best);
        let hl = h.column(lead);
        let g = norm2(hl);
        let mut den = noise / g;
        for &j in &remaining {
            let c = inner(h.column(j), hl).norm() / g;
            den += c * c * p[j];
        }
        out.push(p[lead] / den);
    }
    out
}

/// Peels devices one at a time and stops at the first failure.
pub fn sequential_decode(set: &[usize], p: &[f64], h: &ChannelMatrix, noise: f64, gamma: f64) -> usize {
    let mut n = 0;
    for s in stage_sinrs(set, p, h, noise) {
        if s > gamma {
            n += 1;
        } else {
            break;
        }
    }
    n
}

/// Per-frame objective by enumerating every slot choice of the active devices.
pub fn brute_conditional(alloc: &AllocationMatrix, p: &[f64], x: &ActivityVector, net: &Network) -> f64 {
    let active = x.active();
    let k = alloc.n_slots();
    let s = &net.scenario;
    let total = k.pow(active.len() as u32);
    let mut value = 0.0;
    for code in 0..total {
        let mut c = code;
        let mut prob = 1.0;
        let mut slots = vec![Vec::new(); k];
        for &i in &active {
            let slot = c % k;
            c /= k;
            prob *= alloc.get(i, slot);
            slots[slot].push(i);
        }
        if prob == 0.0 {
            continue;
        }
        let decoded: usize = slots
            .iter()
            .map(|set| sequential_decode(set, p, &net.channel, s.noise_power, s.sinr_threshold))
            .sum();
        value += prob * decoded as f64;
    }
    value
}

/// Expected objective by enumerating all 2^N activity patterns.
pub fn brute_expected(alloc: &AllocationMatrix, p: &[f64], activity: &[f64], net: &Network) -> f64 {
    let n = activity.len();
    (0..1u32 << n)
        .map(|mask| {
            let x: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let w: f64 = (0..n).map(|i| if x[i] { activity[i] } else { 1.0 - activity[i] }).product();
            w * brute_conditional(alloc, p, &ActivityVector::new(x), net)
        })
        .sum()
}

/// Euclidean projection onto the simplex as a quadratic program, solved by
/// checking the KKT conditions on every candidate support.
pub fn qp_simplex(v: &[f64]) -> Vec<f64> {
    let k = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for support in 1..(1u32 << k) {
        let members: Vec<usize> = (0..k).filter(|&i| support >> i & 1 == 1).collect();
        let theta = (members.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / members.len() as f64;
        let mut x = vec![0.0; k];
        let mut ok = true;
        for i in 0..k {
            if support >> i & 1 == 1 {
                x[i] = v[i] - theta;
                ok &= x[i] >= -1e-12;
            } else {
                ok &= v[i] - theta <= 1e-12;
            }
        }
        if ok {
            let x: Vec<f64> = x.into_iter().map(|xi| xi.max(0.0)).collect();
            let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, x));
            }
        }
    }
    best.expect("some support satisfies KKT").1
}

/// Network on a fresh channel draw for built-in scenario `index`.
pub fn network(index: usize, seed: u64) -> Network {
    Network::draw(builtin_scenario(index).unwrap(), seed).unwrap()
}

/// Network with `n` devices and `k` slots, everything else as scenario 1.
pub fn network_sized(n: usize, k: usize, seed: u64) -> Network {
    let mut s = builtin_scenario(1).unwrap();
    s.n_devices = n;
    s.n_slots = k;
    s.activity = (0..n).map(|i| 0.1 + 0.8 * i as f64 / n.max(2) as f64).collect();
    Network::draw(s, seed).unwrap()
}

/// Allocation with every entry strictly positive.
pub fn interior_alloc<R: Rng>(n: usize, k: usize, rng: &mut R) -> AllocationMatrix {
    let rows = (0..n)
        .map(|_| {
            let r: Vec<f64> = (0..k).map(|_| 0.05 + rng.random::<f64>()).collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|v| v / s).collect()
        })
        .collect();
    AllocationMatrix::new(rows).unwrap()
}

/// Powers drawn uniformly inside the box, away from both faces.
pub fn interior_power<R: Rng>(net: &Network, rng: &mut R) -> Vec<f64> {
    let hi = net.scenario.p_max;
    net.p_min
        .iter()
        .map(|&lo| lo + (hi - lo) * (0.01 + 0.98 * rng.random::<f64>()))
        .collect()
}

/// Activity with each device on independently with probability `q`.
pub fn random_activity<R: Rng>(n: usize, q: f64, rng: &mut R) -> ActivityVector {
    ActivityVector::new((0..n).map(|_| rng.random::<f64>() < q).collect())
}

/// Supports of every slot and, per support, the decode count of each of its
/// subsets (indexed by bitmask over the support) and its decoding order.
pub struct SupportProfile {
    pub supports: Vec<Vec<usize>>,
    pub counts: Vec<Vec<usize>>,
    pub orders: Vec<Vec<usize>>,
}

pub fn support_profile(supports: &[Vec<usize>], p: &[f64], net: &Network) -> SupportProfile {
    let s = &net.scenario;
    let counts = supports
        .iter()
        .map(|sup| {
            (0..1u32 << sup.len())
                .map(|mask| {
                    let set: Vec<usize> =
                        sup.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &i)| i).collect();
                    sequential_decode(&set, p, &net.channel, s.noise_power, s.sinr_threshold)
                })
                .collect()
        })
        .collect();
    let orders = supports
        .iter()
        .map(|sup| {
            let mut o = sup.clone();
            o.sort_by(|&a, &b| {
                let ra = p[a] * net.channel.squared_norm(a);
                let rb = p[b] * net.channel.squared_norm(b);
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            o
        })
        .collect();
    SupportProfile { supports: supports.to_vec(), counts, orders }
}

impl SupportProfile {
    /// True when `other` decodes at least as many devices on every subset
    /// and keeps every decoding order.
    pub fn dominated_by(&self, other: &SupportProfile) -> bool {
        self.counts.iter().zip(&other.counts).all(|(a, b)| a.iter().zip(b).all(|(x, y)| y >= x))
            && self.orders == other.orders
    }
}
