//! Smoothed per-frame objective in double-double arithmetic, used as a
//! finite-difference oracle whose rounding noise sits far below the f64
//! gradient being checked.

use twofloat::TwoFloat;

use sicfsa::model::{ActivityVector, Network};

fn tf(x: f64) -> TwoFloat {
    TwoFloat::from(x)
}

/// exp in double-double: e^x = e^n * exp(r) with n = round(x), |r| <= 1/2.
/// The crate's own exp is only accurate to about f64 precision.
pub fn exp(x: TwoFloat) -> TwoFloat {
    let n = x.hi().round();
    let r = x - tf(n);
    let mut term = tf(1.0);
    let mut sum = tf(1.0);
    for k in 1..40 {
        term = term * r / tf(k as f64);
        sum += term;
        if term.hi().abs() < 1e-34 {
            break;
        }
    }
    let mut base = twofloat::consts::E;
    let mut e = n.abs() as u64;
    let mut pow = tf(1.0);
    while e > 0 {
        if e & 1 == 1 {
            pow = pow * base;
        }
        base = base * base;
        e >>= 1;
    }
    if n < 0.0 { sum / pow } else { sum * pow }
}

fn sigmoid(x: TwoFloat) -> TwoFloat {
    if x.hi() < -700.0 {
        return tf(0.0);
    }
    if x.hi() > 700.0 {
        return tf(1.0);
    }
    tf(1.0) / (tf(1.0) + exp(-x))
}

/// Channel quantities of one network, in double-double.
pub struct DdNetwork {
    /// ||h_i||^2
    gain: Vec<TwoFloat>,
    /// coupling[j][i] = (|h_j^H h_i| / ||h_i||^2)^2
    coupling: Vec<Vec<TwoFloat>>,
    noise: TwoFloat,
    gamma: TwoFloat,
    sharpness: TwoFloat,
}

impl DdNetwork {
    pub fn new(net: &Network) -> Self {
        let n = net.n_devices();
        let h = &net.channel;
        // |h_a^H h_b|^2
        let dot = |a: usize, b: usize| {
            let (mut re, mut im) = (tf(0.0), tf(0.0));
            for (x, y) in h.column(a).iter().zip(h.column(b)) {
                re += tf(x.re) * tf(y.re) + tf(x.im) * tf(y.im);
                im += tf(x.re) * tf(y.im) - tf(x.im) * tf(y.re);
            }
            re * re + im * im
        };
        let gain: Vec<TwoFloat> = (0..n)
            .map(|i| h.column(i).iter().fold(tf(0.0), |acc, z| acc + tf(z.re) * tf(z.re) + tf(z.im) * tf(z.im)))
            .collect();
        let coupling = (0..n)
            .map(|j| (0..n).map(|i| dot(j, i) / (gain[i] * gain[i])).collect())
            .collect();
        let s = &net.scenario;
        Self {
            gain,
            coupling,
            noise: tf(s.noise_power),
            gamma: tf(s.sinr_threshold),
            sharpness: tf(s.sharpness),
        }
    }

    pub fn smooth_count(&self, set: &mut Vec<usize>, p: &[TwoFloat]) -> TwoFloat {
        set.sort_by(|&a, &b| {
            let ra = p[a] * self.gain[a];
            let rb = p[b] * self.gain[b];
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        let mut total = tf(0.0);
        let mut prefix = tf(1.0);
        for l in 0..set.len() {
            let lead = set[l];
            let mut den = self.noise / self.gain[lead];
            for &j in &set[l + 1..] {
                den += self.coupling[j][lead] * p[j];
            }
            let sinr = p[lead] / den;
            prefix = prefix * sigmoid(self.sharpness * (sinr - self.gamma));
            total += prefix;
        }
        total
    }

    /// Smoothed objective at a flat point (allocation entries, then powers);
    /// the allocation need not lie on the simplex.
    pub fn smoothed(&self, point: &[TwoFloat], n_slots: usize, x: &ActivityVector) -> TwoFloat {
        let n = self.gain.len();
        let (alloc, p) = point.split_at(n * n_slots);
        let active = x.active();
        let mut value = tf(0.0);
        for k in 0..n_slots {
            for mask in 1u32..(1 << active.len()) {
                let mut q = tf(1.0);
                let mut set = Vec::new();
                for (b, &i) in active.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        q = q * alloc[i * n_slots + k];
                        set.push(i);
                    } else {
                        q = q * (tf(1.0) - alloc[i * n_slots + k]);
                    }
                }
                value += q * self.smooth_count(&mut set, p);
            }
        }
        value
    }

    /// Central differences with step `h`, with the perturbed point and the
    /// quotient formed in double-double.
    pub fn central_difference(&self, point: &[f64], n_slots: usize, x: &ActivityVector, h: f64) -> Vec<f64> {
        let mut z: Vec<TwoFloat> = point.iter().map(|&v| tf(v)).collect();
        let step = tf(h);
        (0..z.len())
            .map(|i| {
                let orig = z[i];
                z[i] = orig + step;
                let up = self.smoothed(&z, n_slots, x);
                z[i] = orig - step;
                let down = self.smoothed(&z, n_slots, x);
                z[i] = orig;
                f64::from((up - down) / (tf(2.0) * step))
            })
            .collect()
    }
}
