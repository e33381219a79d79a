//! Independent reference computations used by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use floodlib_core::auxiliary::AuxMode;
use floodlib_core::data::Labels;
use floodlib_core::flood::TableProvenance;
use floodlib_core::nn::Head;
use floodlib_core::{FloodTable, Matrix, MlpModel, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn provenance() -> TableProvenance {
    TableProvenance {
        n_folds: 2,
        mode: AuxMode::Scratch,
        gamma: 0.0,
        seed: 0,
        aux_checkpoint_hashes: vec![],
    }
}

pub fn table(ids: &[u64], theta: &[f64]) -> FloodTable {
    let map: BTreeMap<u64, f64> = ids.iter().copied().zip(theta.iter().copied()).collect();
    FloodTable::new(map, provenance()).unwrap()
}

/// Pre-activations of every layer and the head output for a single input,
/// computed straight from the stored parameters.
pub fn dense_forward(model: &MlpModel, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut a = x.to_vec();
    let mut pre = Vec::new();
    let n = model.num_layers();
    for (li, layer) in model.layers().iter().enumerate() {
        let z: Vec<f64> = (0..layer.out_dim)
            .map(|o| {
                layer.biases[o]
                    + (0..layer.in_dim)
                        .map(|j| layer.weights[o * layer.in_dim + j] * a[j])
                        .sum::<f64>()
            })
            .collect();
        pre.push(z.clone());
        a = if li + 1 < n {
            z.iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect()
        } else {
            z
        };
    }
    let out = match model.head() {
        Head::Identity => a,
        Head::Softmax => {
            let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = a.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        }
    };
    (pre, out)
}

/// ECE by explicit membership tests against each bin's interval.
pub fn ece_bruteforce(probs: &[Vec<f64>], labels: &[usize], bins: usize) -> f64 {
    let n = probs.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let mut conf = 0.0;
        let mut hits = 0.0;
        for (p, &y) in probs.iter().zip(labels) {
            let mut best = 0;
            for k in 1..p.len() {
                if p[k] > p[best] {
                    best = k;
                }
            }
            let c = p[best];
            let inside = if b + 1 == bins { c >= lo } else { c >= lo && c < hi };
            if inside {
                conf += c;
                if best == y {
                    hits += 1.0;
                }
            }
        }
        total += (hits - conf).abs() / n;
    }
    total
}

pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Plain,
    Flood,
    IFlood,
    AdaFlood,
}

pub const VARIANTS: [Variant; 4] = [Variant::Plain, Variant::Flood, Variant::IFlood, Variant::AdaFlood];

/// A random small network, batch and objective, kept away from every
/// non-differentiable point (ReLU at 0, loss at its flood level) so that
/// finite differences are a valid reference.
pub struct GradInstance {
    pub model: MlpModel,
    pub x: Matrix,
    pub labels: Labels,
    pub ids: Vec<u64>,
    pub l2: f64,
    pub variant: Variant,
    pub b: f64,
    pub table: Option<FloodTable>,
}

impl GradInstance {
    pub fn objective(&self) -> Objective<'_> {
        match self.variant {
            Variant::Plain => Objective::Unregularized,
            Variant::Flood => Objective::Flood { b: self.b },
            Variant::IFlood => Objective::IFlood { b: self.b },
            Variant::AdaFlood => Objective::AdaFlood(self.table.as_ref().unwrap()),
        }
    }

    /// Objective value plus L2 penalty at the model's current parameters.
    pub fn value_at(&self, params: &[f64]) -> f64 {
        let mut m = self.model.clone();
        m.set_flat_params(params).unwrap();
        let losses = m.losses(&self.x, &self.labels).unwrap();
        self.objective().evaluate(&losses, &self.ids).unwrap().value + m.l2_penalty(self.l2)
    }

    pub fn analytic(&self) -> Vec<f64> {
        let cache = self.model.forward_cached(&self.x).unwrap();
        let losses = self.model.per_sample_losses(&cache.output, &self.labels).unwrap();
        let obj = self.objective().evaluate(&losses, &self.ids).unwrap();
        self.model
            .backward(&self.x, &cache, &self.labels, &obj.upstream, self.l2)
            .unwrap()
            .flatten()
    }

    pub fn numeric(&self, h: f64) -> Vec<f64> {
        let p0 = self.model.flat_params();
        (0..p0.len())
            .map(|k| {
                let mut p = p0.clone();
                p[k] = p0[k] + h;
                let up = self.value_at(&p);
                p[k] = p0[k] - h;
                let down = self.value_at(&p);
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

const MARGIN: f64 = 1e-3;

fn min_abs_preact(model: &MlpModel, x: &Matrix) -> f64 {
    let hidden = model.num_layers() - 1;
    let mut m = f64::INFINITY;
    for row in x.iter_rows() {
        let (pre, _) = dense_forward(model, row);
        for z in pre.iter().take(hidden) {
            for v in z {
                m = m.min(v.abs());
            }
        }
    }
    m
}

/// Draws instances until one clears every kink by `MARGIN`.
pub fn grad_instance(seed: u64, variant: Variant) -> GradInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n_layers = rng.random_range(1..=3);
        let classification = rng.random_bool(0.7);
        let k = rng.random_range(2..=4);
        let mut dims = vec![rng.random_range(1..=5)];
        for _ in 1..n_layers {
            dims.push(rng.random_range(1..=8));
        }
        dims.push(if classification { k } else { 1 });
        let head = if classification {
            Head::Softmax
        } else {
            Head::Identity
        };
        let mut model = MlpModel::new(&dims, head, rng.random()).unwrap();
        // nonzero biases so bias gradients are exercised at generic points
        let mut params = model.flat_params();
        for p in params.iter_mut() {
            *p += rng.random_range(-0.2..0.2);
        }
        model.set_flat_params(&params).unwrap();

        let batch = rng.random_range(1..=6);
        let xs: Vec<f64> = (0..batch * dims[0])
            .map(|_| rng.random_range(-1.5..1.5))
            .collect();
        let x = Matrix::from_vec(batch, dims[0], xs).unwrap();
        let labels = if classification {
            Labels::Class((0..batch).map(|_| rng.random_range(0..k)).collect())
        } else {
            Labels::Real((0..batch).map(|_| rng.random_range(-2.0..2.0)).collect())
        };
        let ids: Vec<u64> = (0..batch as u64).map(|i| 1000 + 7 * i).collect();
        let l2 = if rng.random_bool(0.5) {
            rng.random_range(0.0..0.1)
        } else {
            0.0
        };

        if min_abs_preact(&model, &x) < MARGIN {
            continue;
        }
        let losses = model.losses(&x, &labels).unwrap();
        let mean = losses.iter().sum::<f64>() / batch as f64;
        let (b, table) = match variant {
            Variant::Plain => (0.0, None),
            Variant::Flood => {
                let off = rng.random_range(0.05..0.5);
                (
                    if rng.random_bool(0.5) {
                        mean + off
                    } else {
                        mean - off
                    },
                    None,
                )
            }
            Variant::IFlood => {
                let b = rng.random_range(0.0..2.0 * mean + 0.1);
                if losses.iter().any(|l| (l - b).abs() < MARGIN) {
                    continue;
                }
                (b, None)
            }
            Variant::AdaFlood => {
                let theta: Vec<f64> = losses.iter().map(|l| l * rng.random_range(0.2..1.8)).collect();
                if losses.iter().zip(&theta).any(|(l, t)| (l - t).abs() < MARGIN) {
                    continue;
                }
                (0.0, Some(table(&ids, &theta)))
            }
        };
        return GradInstance {
            model,
            x,
            labels,
            ids,
            l2,
            variant,
            b,
            table,
        };
    }
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over all parameters.
pub fn max_rel_err(a: &[f64], n: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(n)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
