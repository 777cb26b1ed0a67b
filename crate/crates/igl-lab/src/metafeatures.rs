//! Dataset meta-properties predicting relative algorithm performance.
//!
//! Fifteen features per dataset. Exact definitions, since several are only
//! loosely fixed in the meta-learning literature:
//!
//! - `one_nn_accuracy`, `best_node_accuracy`, `naive_bayes_accuracy`:
//!   landmarker accuracies on a seeded 70/30 holdout. The decision node picks
//!   the (feature, threshold) split with the highest information gain on the
//!   train part and predicts majority classes per side; naive Bayes is
//!   Gaussian with a variance floor.
//! - `feature_onehot_count`: number of columns whose values are all 0 or 1.
//! - `instance_per_feature`: N / d.
//! - `class_entropy_n`: H(labels) / ln K, in [0, 1]; 0 when one class holds
//!   every row.
//! - `max_fisher_discrim`: max over features of between-class to within-class
//!   variance, `sum_c n_c (mu_cj - mu_j)^2 / sum_c sum_{i in c} (x_ij - mu_cj)^2`;
//!   reported as the sentinel 1e15 when the within term vanishes but the
//!   between term does not.
//! - `max_single_feature_eff`: fraction of nonzero entries in the feature
//!   matrix.
//! - `mutual_xy_info_mean`: mean over features of I(X_j; labels) in nats,
//!   with X_j discretized into 10 equal-frequency bins (rank-based, ties
//!   broken by row order).
//! - `noise_signal_ratio`: (mean feature entropy - mean mutual information)
//!   / mean mutual information on the same bins; sentinel 1e15 when the mean
//!   mutual information vanishes. Implementation-defined.
//! - `pca_dims_95`: smallest k whose top-k covariance eigenvalues reach 95%
//!   of total variance (1 when total variance is zero).
//! - `pca_top_1_percent`: top eigenvalue over total variance (1 when total
//!   variance is zero).
//! - `n`, `n_by_sqrt_k`, `n_by_k`: sample count, N / sqrt(K), N / K.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::SupervisedDataset;
use crate::error::IglError;
use crate::rng::{derive_seed, rng_from_seed};
use crate::Result;

/// Sentinel for ratios whose denominator vanishes.
pub const RATIO_SENTINEL: f64 = 1e15;

const MI_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureRecord {
    pub one_nn_accuracy: f64,
    pub best_node_accuracy: f64,
    pub feature_onehot_count: f64,
    pub instance_per_feature: f64,
    pub class_entropy_n: f64,
    pub max_fisher_discrim: f64,
    pub max_single_feature_eff: f64,
    pub mutual_xy_info_mean: f64,
    pub naive_bayes_accuracy: f64,
    pub noise_signal_ratio: f64,
    pub pca_dims_95: f64,
    pub pca_top_1_percent: f64,
    pub n: f64,
    pub n_by_sqrt_k: f64,
    pub n_by_k: f64,
}

/// Compute all fifteen fields. Landmarkers use a holdout split seeded from
/// `seed`, everything else is a pure function of the dataset.
pub fn compute_meta_features(ds: &SupervisedDataset, seed: u64) -> Result<MetaFeatureRecord> {
    ds.validate()?;
    let n = ds.num_rows();
    if n < 10 {
        return Err(IglError::Dataset(format!(
            "meta-features need at least 10 rows, got {n}"
        )));
    }
    let k = ds.num_classes as f64;
    let (train_idx, eval_idx) = holdout_split(n, seed);
    let (evals, top_share, dims95) = pca_summary(ds);
    let (mi_mean, entropy_mean) = mutual_information_summary(ds);
    let _ = evals;

    Ok(MetaFeatureRecord {
        one_nn_accuracy: one_nn_accuracy(ds, &train_idx, &eval_idx),
        best_node_accuracy: best_node_accuracy(ds, &train_idx, &eval_idx),
        feature_onehot_count: binary_column_count(ds) as f64,
        instance_per_feature: n as f64 / ds.num_features as f64,
        class_entropy_n: class_entropy_normalized(ds),
        max_fisher_discrim: max_fisher_discriminant(ds),
        max_single_feature_eff: nonzero_fraction(ds),
        mutual_xy_info_mean: mi_mean,
        naive_bayes_accuracy: naive_bayes_accuracy(ds, &train_idx, &eval_idx),
        noise_signal_ratio: if mi_mean > 1e-12 {
            ((entropy_mean - mi_mean) / mi_mean).max(0.0)
        } else {
            RATIO_SENTINEL
        },
        pca_dims_95: dims95 as f64,
        pca_top_1_percent: top_share,
        n: n as f64,
        n_by_sqrt_k: n as f64 / k.sqrt(),
        n_by_k: n as f64 / k,
    })
}

fn holdout_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(derive_seed(seed, 0x3EA7));
    indices.shuffle(&mut rng);
    let train_size = ((0.7 * n as f64).floor() as usize).clamp(1, n - 1);
    let (train, eval) = indices.split_at(train_size);
    (train.to_vec(), eval.to_vec())
}

/// Normalized label entropy H / ln K; defined as 0 for a single-class sample.
pub fn class_entropy_normalized(ds: &SupervisedDataset) -> f64 {
    let mut counts = vec![0usize; ds.num_classes];
    for &l in &ds.labels {
        counts[l] += 1;
    }
    let n = ds.num_rows() as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    let denom = (ds.num_classes as f64).ln();
    if denom <= 0.0 || h <= 0.0 {
        0.0
    } else {
        h / denom
    }
}

/// Max over features of the between/within class variance ratio.
pub fn max_fisher_discriminant(ds: &SupervisedDataset) -> f64 {
    let n = ds.num_rows();
    let d = ds.num_features;
    let k = ds.num_classes;
    let mut best = 0.0f64;
    for j in 0..d {
        let mut class_sum = vec![0.0; k];
        let mut class_count = vec![0usize; k];
        let mut total = 0.0;
        for i in 0..n {
            let v = ds.row(i)[j];
            class_sum[ds.labels[i]] += v;
            class_count[ds.labels[i]] += 1;
            total += v;
        }
        let grand_mean = total / n as f64;
        let mut between = 0.0;
        for c in 0..k {
            if class_count[c] > 0 {
                let mu_c = class_sum[c] / class_count[c] as f64;
                between += class_count[c] as f64 * (mu_c - grand_mean).powi(2);
            }
        }
        let mut within = 0.0;
        for i in 0..n {
            let c = ds.labels[i];
            let mu_c = class_sum[c] / class_count[c] as f64;
            within += (ds.row(i)[j] - mu_c).powi(2);
        }
        let ratio = if within > 0.0 {
            between / within
        } else if between > 0.0 {
            RATIO_SENTINEL
        } else {
            0.0
        };
        best = best.max(ratio);
    }
    best
}

fn binary_column_count(ds: &SupervisedDataset) -> usize {
    (0..ds.num_features)
        .filter(|&j| {
            (0..ds.num_rows()).all(|i| {
                let v = ds.row(i)[j];
                v == 0.0 || v == 1.0
            })
        })
        .count()
}

fn nonzero_fraction(ds: &SupervisedDataset) -> f64 {
    let nonzero = ds.features.iter().filter(|&&v| v != 0.0).count();
    nonzero as f64 / ds.features.len() as f64
}

/// Rank-based equal-frequency binning: bin = floor(rank * bins / n), ties
/// broken by row order so the assignment is deterministic.
fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("finite features")
            .then(a.cmp(&b))
    });
    let mut assignment = vec![0usize; n];
    for (rank, &i) in order.iter().enumerate() {
        assignment[i] = (rank * bins / n).min(bins - 1);
    }
    assignment
}

/// Mean over features of (I(X_j; Y), H(X_j)) on equal-frequency bins, nats.
fn mutual_information_summary(ds: &SupervisedDataset) -> (f64, f64) {
    let n = ds.num_rows();
    let k = ds.num_classes;
    let nf = n as f64;
    let mut mi_total = 0.0;
    let mut h_total = 0.0;
    let mut class_p = vec![0.0; k];
    for &l in &ds.labels {
        class_p[l] += 1.0 / nf;
    }
    for j in 0..ds.num_features {
        let column: Vec<f64> = (0..n).map(|i| ds.row(i)[j]).collect();
        let bins = equal_frequency_bins(&column, MI_BINS);
        let mut joint = vec![vec![0.0; k]; MI_BINS];
        let mut bin_p = vec![0.0; MI_BINS];
        for i in 0..n {
            joint[bins[i]][ds.labels[i]] += 1.0 / nf;
            bin_p[bins[i]] += 1.0 / nf;
        }
        let mut mi = 0.0;
        for (b, row) in joint.iter().enumerate() {
            for (c, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    mi += p * (p / (bin_p[b] * class_p[c])).ln();
                }
            }
        }
        let h: f64 = bin_p
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum();
        mi_total += mi.max(0.0);
        h_total += h;
    }
    let d = ds.num_features as f64;
    (mi_total / d, h_total / d)
}

/// Eigen-decompose the (population) covariance matrix; returns the sorted
/// eigenvalues, the top eigenvalue's share of total variance, and the number
/// of components covering 95%.
fn pca_summary(ds: &SupervisedDataset) -> (Vec<f64>, f64, usize) {
    let n = ds.num_rows();
    let d = ds.num_features;
    let nf = n as f64;
    let mut means = vec![0.0; d];
    for i in 0..n {
        for (j, m) in means.iter_mut().enumerate() {
            *m += ds.row(i)[j];
        }
    }
    for m in &mut means {
        *m /= nf;
    }
    let mut cov: DMatrix<f64> = DMatrix::zeros(d, d);
    for i in 0..n {
        let row = ds.row(i);
        for a in 0..d {
            let da = row[a] - means[a];
            for b in a..d {
                cov[(a, b)] += da * (row[b] - means[b]) / nf;
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    let mut evals: Vec<f64> = cov
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&v| v.max(0.0))
        .collect();
    evals.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    let total: f64 = evals.iter().sum();
    if total <= 0.0 {
        return (evals, 1.0, 1);
    }
    let top_share = evals[0] / total;
    let mut cum = 0.0;
    let mut dims = evals.len();
    for (i, &v) in evals.iter().enumerate() {
        cum += v;
        if cum >= 0.95 * total {
            dims = i + 1;
            break;
        }
    }
    (evals, top_share, dims)
}

/// Smallest number of principal components explaining 95% of the variance.
pub fn pca_dims_95(ds: &SupervisedDataset) -> usize {
    pca_summary(ds).2
}

fn one_nn_accuracy(ds: &SupervisedDataset, train: &[usize], eval: &[usize]) -> f64 {
    let mut correct = 0usize;
    for &i in eval {
        let xi = ds.row(i);
        let mut best_d = f64::INFINITY;
        let mut best_label = 0usize;
        for &t in train {
            let dist: f64 = ds
                .row(t)
                .iter()
                .zip(xi)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist < best_d {
                best_d = dist;
                best_label = ds.labels[t];
            }
        }
        if best_label == ds.labels[i] {
            correct += 1;
        }
    }
    correct as f64 / eval.len() as f64
}

fn label_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate().skip(1) {
        if v > counts[best] {
            best = c;
        }
    }
    best
}

/// Single decision node: best (feature, threshold) split by information gain.
fn best_node_accuracy(ds: &SupervisedDataset, train: &[usize], eval: &[usize]) -> f64 {
    let k = ds.num_classes;
    let mut best_gain = f64::NEG_INFINITY;
    let mut best: Option<(usize, f64, usize, usize)> = None; // (feature, threshold, left label, right label)

    let mut base_counts = vec![0usize; k];
    for &i in train {
        base_counts[ds.labels[i]] += 1;
    }
    let base_entropy = label_entropy(&base_counts);
    let n_train = train.len() as f64;

    for j in 0..ds.num_features {
        let mut sorted: Vec<usize> = train.to_vec();
        sorted.sort_by(|&a, &b| {
            ds.row(a)[j]
                .partial_cmp(&ds.row(b)[j])
                .expect("finite features")
                .then(a.cmp(&b))
        });
        let mut left = vec![0usize; k];
        let mut right = base_counts.clone();
        for w in 0..sorted.len().saturating_sub(1) {
            let i = sorted[w];
            left[ds.labels[i]] += 1;
            right[ds.labels[i]] -= 1;
            let v = ds.row(i)[j];
            let v_next = ds.row(sorted[w + 1])[j];
            if v == v_next {
                continue;
            }
            let n_left = (w + 1) as f64;
            let n_right = n_train - n_left;
            let gain = base_entropy
                - (n_left / n_train) * label_entropy(&left)
                - (n_right / n_train) * label_entropy(&right);
            if gain > best_gain {
                best_gain = gain;
                best = Some(((j), (v + v_next) / 2.0, majority(&left), majority(&right)));
            }
        }
    }

    let Some((feature, threshold, left_label, right_label)) = best else {
        // No valid split (all rows identical): predict the majority class.
        let m = majority(&base_counts);
        let correct = eval.iter().filter(|&&i| ds.labels[i] == m).count();
        return correct as f64 / eval.len() as f64;
    };

    let mut correct = 0usize;
    for &i in eval {
        let predicted = if ds.row(i)[feature] <= threshold {
            left_label
        } else {
            right_label
        };
        if predicted == ds.labels[i] {
            correct += 1;
        }
    }
    correct as f64 / eval.len() as f64
}

fn naive_bayes_accuracy(ds: &SupervisedDataset, train: &[usize], eval: &[usize]) -> f64 {
    let k = ds.num_classes;
    let d = ds.num_features;
    let mut counts = vec![0usize; k];
    let mut sums = vec![vec![0.0; d]; k];
    for &i in train {
        counts[ds.labels[i]] += 1;
        for (j, v) in ds.row(i).iter().enumerate() {
            sums[ds.labels[i]][j] += v;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| v / (c.max(1)) as f64).collect())
        .collect();
    let mut vars = vec![vec![0.0; d]; k];
    for &i in train {
        let c = ds.labels[i];
        for (j, v) in ds.row(i).iter().enumerate() {
            vars[c][j] += (v - means[c][j]).powi(2);
        }
    }
    for c in 0..k {
        for j in 0..d {
            vars[c][j] = (vars[c][j] / counts[c].max(1) as f64).max(1e-9);
        }
    }
    let n_train: usize = counts.iter().sum();

    let mut correct = 0usize;
    for &i in eval {
        let mut best_score = f64::NEG_INFINITY;
        let mut best_class = 0usize;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mut score = (counts[c] as f64 / n_train as f64).ln();
            for (j, v) in ds.row(i).iter().enumerate() {
                score += -0.5 * (2.0 * std::f64::consts::PI * vars[c][j]).ln()
                    - (v - means[c][j]).powi(2) / (2.0 * vars[c][j]);
            }
            if score > best_score {
                best_score = score;
                best_class = c;
            }
        }
        if best_class == ds.labels[i] {
            correct += 1;
        }
    }
    correct as f64 / eval.len() as f64
}
