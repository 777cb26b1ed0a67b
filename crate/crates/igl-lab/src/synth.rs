//! Synthetic classification datasets: seeded Gaussian class clusters.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::SupervisedDataset;
use crate::error::IglError;
use crate::rng::derived_rng;
use crate::Result;

/// Gaussian-cluster generator: K unit-variance clusters whose centers are
/// drawn on a sphere of radius `separation`, with class-balanced rows and an
/// optional label-noise rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub num_features: usize,
    pub num_rows: usize,
    pub separation: f64,
    pub label_noise: f64,
    /// When set, class 0 holds this fraction of the rows (must stay below
    /// 0.5, the balance filter) and the remaining classes split the rest
    /// evenly. A near-half class leaves the symmetry-breaking step only a
    /// thin margin, the regime where sample size starts to matter.
    #[serde(default)]
    pub dominant_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 5,
            num_features: 10,
            num_rows: 20_000,
            separation: 4.0,
            label_noise: 0.0,
            dominant_fraction: None,
            seed: 0,
        }
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<SupervisedDataset> {
    if spec.num_classes < 2 || spec.num_features == 0 || spec.num_rows < spec.num_classes {
        return Err(IglError::Config(format!(
            "bad synthetic spec: K={}, d={}, N={}",
            spec.num_classes, spec.num_features, spec.num_rows
        )));
    }
    if !(0.0..0.5).contains(&spec.label_noise) {
        return Err(IglError::Config(format!(
            "label_noise {} outside [0, 0.5)",
            spec.label_noise
        )));
    }
    if let Some(p) = spec.dominant_fraction {
        let even = 1.0 / spec.num_classes as f64;
        if !(p > even && p < 0.5) {
            return Err(IglError::Config(format!(
                "dominant_fraction {p} must lie in (1/K, 0.5)"
            )));
        }
    }

    let mut center_rng = derived_rng(spec.seed, 0);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    // Orthogonalized center directions while the dimension allows it, so the
    // pairwise center distance is separation * sqrt(2) rather than a roll of
    // the dice; extra classes beyond the dimension fall back to random
    // directions.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.num_classes);
    for _ in 0..spec.num_classes {
        let mut raw: Vec<f64> = (0..spec.num_features)
            .map(|_| std_normal.sample(&mut center_rng))
            .collect();
        for prev in &centers {
            let prev_norm_sq: f64 = prev.iter().map(|v| v * v).sum();
            let dot: f64 = raw.iter().zip(prev).map(|(a, b)| a * b).sum();
            let coeff = dot / prev_norm_sq;
            let projected: Vec<f64> = raw
                .iter()
                .zip(prev)
                .map(|(a, b)| a - coeff * b)
                .collect();
            if projected.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-6 {
                raw = projected;
            }
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        centers.push(raw.iter().map(|v| v / norm * spec.separation).collect());
    }

    let class_of = |i: usize| -> usize {
        match spec.dominant_fraction {
            // Interleave the dominant class evenly so any prefix keeps its
            // fraction: row i is class 0 when a new multiple of p*i is hit.
            Some(p) => {
                let hits = |j: usize| (p * j as f64).floor() as usize;
                if hits(i + 1) > hits(i) {
                    0
                } else {
                    let rank = i - hits(i + 1);
                    1 + rank % (spec.num_classes - 1)
                }
            }
            // Round-robin classes: balanced by construction.
            None => i % spec.num_classes,
        }
    };

    let mut rng = derived_rng(spec.seed, 1);
    let mut rows = Vec::with_capacity(spec.num_rows);
    let mut labels = Vec::with_capacity(spec.num_rows);
    for i in 0..spec.num_rows {
        let class = class_of(i);
        let row: Vec<f64> = centers[class]
            .iter()
            .map(|c| c + std_normal.sample(&mut rng))
            .collect();
        let label = if spec.label_noise > 0.0 && rng.gen::<f64>() < spec.label_noise {
            rng.gen_range(0..spec.num_classes)
        } else {
            class
        };
        rows.push(row);
        labels.push(label);
    }

    SupervisedDataset::new(rows, labels, spec.num_classes)
}
