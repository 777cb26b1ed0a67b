//! Latent reward discovery and symmetry breaking.
//!
//! For each action's bucket of logged interactions, a (predictor, decoder)
//! pair is fit by maximizing the absolute within-bucket covariance
//! `E[f psi | a] - E[f | a] E[psi | a]`. At the population level that
//! covariance factorizes as `(1 - rho) rho (f_{a,1} - f_{a,0})
//! (psi_{a,1} - psi_{a,0})`, so its maximizers separate the two latent reward
//! states — but only up to the complement ambiguity `psi` vs `1 - psi`.
//! A baseline policy of known reward directionality resolves the ambiguity:
//! if the decoded average reward of a supposedly-bad baseline lands above
//! one half, the decoder is flipped.
//!
//! The fitted decoders rewrite the log into an ordinary contextual-bandit
//! dataset, which an offline CB oracle turns into the output policy.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cb::{train_cb_policy, CbConfig};
use crate::error::IglError;
use crate::policy::Policy;
use crate::records::{ConditionalMeans, DecodedInteraction, LoggedInteraction};
use crate::rng::{derive_seed, derived_rng};
use crate::scorer::{InputKind, LinearScorer};
use crate::Result;

/// |objective| below which a bucket carries no usable reward signal.
const DEGENERACY_EPS: f64 = 1e-6;

/// Gradient-ascent settings for one contrastive pair.
///
/// Steps are normalized to unit gradient length, so `learning_rate` is the
/// parameter distance traveled per epoch; the raw covariance gradient
/// vanishes near the uninformative saddle where both scorers sit at 0.5, and
/// fixed unnormalized steps stall there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Restarts from independent seeded initializations; the one with the
    /// largest absolute objective wins.
    pub restarts: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 10,
            restarts: 4,
            init_std: 0.01,
            seed: 0,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.epochs == 0 || self.restarts == 0 {
            return Err(IglError::Config(
                "learning_rate, epochs, and restarts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A fitted (predictor, decoder) pair for one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastivePair {
    /// Reward predictor over contexts.
    pub f: LinearScorer,
    /// Reward decoder over feedback vectors.
    pub psi: LinearScorer,
    pub action: usize,
    /// Signed within-bucket covariance of the returned pair.
    pub achieved_objective: f64,
    /// True when the bucket shows no separable signal (constant rewards or
    /// constant feedback); downstream decoding still proceeds.
    pub degenerate: bool,
}

fn bucket_indices(log: &[LoggedInteraction], a_bar: usize) -> Vec<usize> {
    log.iter()
        .enumerate()
        .filter(|(_, rec)| rec.action == a_bar)
        .map(|(i, _)| i)
        .collect()
}

/// Within-bucket empirical covariance of `f(x, a_bar)` and `psi(y, a_bar)`
/// over the records with action `a_bar`. Bounded by [-0.25, 0.25] since both
/// scorers range in (0, 1).
pub fn empirical_contrastive_objective(
    log: &[LoggedInteraction],
    a_bar: usize,
    f: &LinearScorer,
    psi: &LinearScorer,
) -> Result<f64> {
    let bucket = bucket_indices(log, a_bar);
    if bucket.len() < 2 {
        return Err(IglError::InsufficientData {
            action: a_bar,
            details: format!(
                "need at least 2 records with this action, found {}",
                bucket.len()
            ),
        });
    }
    let n = bucket.len() as f64;
    let mut sum_f = 0.0;
    let mut sum_psi = 0.0;
    let mut sum_prod = 0.0;
    for &i in &bucket {
        let fi = f.score(&log[i].context, a_bar)?;
        let pi = psi.score(&log[i].feedback, a_bar)?;
        sum_f += fi;
        sum_psi += pi;
        sum_prod += fi * pi;
    }
    Ok(sum_prod / n - (sum_f / n) * (sum_psi / n))
}

struct BucketViews<'a> {
    contexts: Vec<&'a [f64]>,
    feedbacks: Vec<&'a [f64]>,
}

fn bucket_views<'a>(log: &'a [LoggedInteraction], bucket: &[usize]) -> BucketViews<'a> {
    BucketViews {
        contexts: bucket.iter().map(|&i| log[i].context.as_slice()).collect(),
        feedbacks: bucket.iter().map(|&i| log[i].feedback.as_slice()).collect(),
    }
}

fn covariance_of(outputs_f: &[f64], outputs_psi: &[f64]) -> f64 {
    let n = outputs_f.len() as f64;
    let mean_f: f64 = outputs_f.iter().sum::<f64>() / n;
    let mean_psi: f64 = outputs_psi.iter().sum::<f64>() / n;
    let mean_prod: f64 = outputs_f
        .iter()
        .zip(outputs_psi)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n;
    mean_prod - mean_f * mean_psi
}

/// Fit a contrastive pair on the `a_bar` bucket by joint normalized gradient
/// ascent on the absolute empirical covariance, over `restarts` independent
/// initializations. `achieved_objective` records the signed covariance of the
/// winning pair; symmetry breaking resolves the sign afterwards.
pub fn fit_contrastive_pair(
    log: &[LoggedInteraction],
    a_bar: usize,
    config: &FitConfig,
) -> Result<ContrastivePair> {
    config.validate()?;
    let bucket = bucket_indices(log, a_bar);
    if bucket.len() < 2 {
        return Err(IglError::InsufficientData {
            action: a_bar,
            details: format!(
                "need at least 2 records with this action, found {}",
                bucket.len()
            ),
        });
    }
    let views = bucket_views(log, &bucket);
    let ctx_dim = views.contexts[0].len();
    let fb_dim = views.feedbacks[0].len();
    // Row count only matters for row a_bar; keep K rows so the pair plugs
    // into the shared scorer type.
    let num_actions = a_bar + 1;

    let mut best: Option<(f64, LinearScorer, LinearScorer)> = None;
    for restart in 0..config.restarts {
        let mut rng = derived_rng(config.seed, restart as u64);
        let normal = Normal::new(0.0, config.init_std).expect("finite std");
        let mut init = |rows: usize, dim: usize, kind: InputKind| LinearScorer {
            weights: (0..rows)
                .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
                .collect(),
            biases: (0..rows).map(|_| normal.sample(&mut rng)).collect(),
            input_kind: kind,
        };
        let mut f = init(num_actions, ctx_dim, InputKind::Context);
        let mut psi = init(num_actions, fb_dim, InputKind::Feedback);
        if restart == 0 {
            // Near the origin the covariance objective is the bilinear form
            // w_f' C w_psi of the bucket's context-feedback cross-covariance,
            // so its top singular pair is the best initial direction; random
            // restarts still guard against saturating a bad direction.
            if let Some((u, v)) = top_singular_pair(&views, &mut rng) {
                for (w, ui) in f.weights[a_bar].iter_mut().zip(&u) {
                    *w = 0.05 * ui;
                }
                for (w, vi) in psi.weights[a_bar].iter_mut().zip(&v) {
                    *w = 0.05 * vi;
                }
            }
        }

        ascend(&views, a_bar, &mut f, &mut psi, config)?;

        let obj = objective_on_views(&views, a_bar, &f, &psi)?;
        if best
            .as_ref()
            .map_or(true, |(best_obj, _, _)| obj.abs() > best_obj.abs())
        {
            best = Some((obj, f, psi));
        }
    }

    let (achieved_objective, f, psi) = best.expect("at least one restart");
    Ok(ContrastivePair {
        f,
        psi,
        action: a_bar,
        achieved_objective,
        degenerate: achieved_objective.abs() < DEGENERACY_EPS,
    })
}

/// Power iteration for the top singular pair (u, v) of the bucket's centered
/// context-feedback cross-covariance matrix.
fn top_singular_pair(
    views: &BucketViews,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> Option<(Vec<f64>, Vec<f64>)> {
    use rand::Rng;
    let n = views.contexts.len();
    let d = views.contexts[0].len();
    let m = views.feedbacks[0].len();
    let nf = n as f64;
    let mut x_mean = vec![0.0; d];
    let mut y_mean = vec![0.0; m];
    for i in 0..n {
        for (s, v) in x_mean.iter_mut().zip(views.contexts[i]) {
            *s += v / nf;
        }
        for (s, v) in y_mean.iter_mut().zip(views.feedbacks[i]) {
            *s += v / nf;
        }
    }
    let mut cross = vec![vec![0.0; m]; d];
    for i in 0..n {
        for (a, row) in cross.iter_mut().enumerate() {
            let dx = views.contexts[i][a] - x_mean[a];
            for (b, cell) in row.iter_mut().enumerate() {
                *cell += dx * (views.feedbacks[i][b] - y_mean[b]) / nf;
            }
        }
    }

    let normalize = |v: &mut Vec<f64>| -> f64 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        norm
    };
    let mut v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if normalize(&mut v) == 0.0 {
        return None;
    }
    let mut u = vec![0.0; d];
    for _ in 0..20 {
        for (a, ua) in u.iter_mut().enumerate() {
            *ua = cross[a].iter().zip(&v).map(|(c, vb)| c * vb).sum();
        }
        if normalize(&mut u) == 0.0 {
            return None;
        }
        for (b, vb) in v.iter_mut().enumerate() {
            *vb = cross.iter().zip(&u).map(|(row, ua)| row[b] * ua).sum();
        }
        if normalize(&mut v) == 0.0 {
            return None;
        }
    }
    Some((u, v))
}

fn objective_on_views(
    views: &BucketViews,
    a_bar: usize,
    f: &LinearScorer,
    psi: &LinearScorer,
) -> Result<f64> {
    let fs: Vec<f64> = views
        .contexts
        .iter()
        .map(|x| f.score(x, a_bar))
        .collect::<Result<_>>()?;
    let ps: Vec<f64> = views
        .feedbacks
        .iter()
        .map(|y| psi.score(y, a_bar))
        .collect::<Result<_>>()?;
    Ok(covariance_of(&fs, &ps))
}

fn ascend(
    views: &BucketViews,
    a_bar: usize,
    f: &mut LinearScorer,
    psi: &mut LinearScorer,
    config: &FitConfig,
) -> Result<()> {
    let n = views.contexts.len();
    let nf = n as f64;
    let ctx_dim = f.input_dim();
    let fb_dim = psi.input_dim();

    let mut f_out = vec![0.0; n];
    let mut psi_out = vec![0.0; n];
    let mut grad_wf = vec![0.0; ctx_dim];
    let mut grad_wpsi = vec![0.0; fb_dim];

    for epoch in 0..config.epochs {
        for i in 0..n {
            f_out[i] = f.score(views.contexts[i], a_bar)?;
            psi_out[i] = psi.score(views.feedbacks[i], a_bar)?;
        }
        let mean_f: f64 = f_out.iter().sum::<f64>() / nf;
        let mean_psi: f64 = psi_out.iter().sum::<f64>() / nf;
        let obj = covariance_of(&f_out, &psi_out);
        // Ascend on |covariance|; the complement flip realizes the other sign.
        let sign = if obj >= 0.0 { 1.0 } else { -1.0 };

        grad_wf.iter_mut().for_each(|g| *g = 0.0);
        grad_wpsi.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_bf = 0.0;
        let mut grad_bpsi = 0.0;
        for i in 0..n {
            let df = (psi_out[i] - mean_psi) * f_out[i] * (1.0 - f_out[i]) / nf;
            for (g, x) in grad_wf.iter_mut().zip(views.contexts[i]) {
                *g += df * x;
            }
            grad_bf += df;
            let dp = (f_out[i] - mean_f) * psi_out[i] * (1.0 - psi_out[i]) / nf;
            for (g, y) in grad_wpsi.iter_mut().zip(views.feedbacks[i]) {
                *g += dp * y;
            }
            grad_bpsi += dp;
        }

        let norm_sq: f64 = grad_wf.iter().chain(grad_wpsi.iter()).map(|g| g * g).sum::<f64>()
            + grad_bf * grad_bf
            + grad_bpsi * grad_bpsi;
        if !norm_sq.is_finite() {
            return Err(IglError::OptimizationDiverged {
                epoch,
                details: "non-finite covariance gradient".into(),
            });
        }
        if norm_sq == 0.0 {
            break; // exactly at a stationary point; nothing to follow
        }
        let step = sign * config.learning_rate / norm_sq.sqrt();
        for (w, g) in f.weights[a_bar].iter_mut().zip(&grad_wf) {
            *w += step * g;
        }
        f.biases[a_bar] += step * grad_bf;
        for (w, g) in psi.weights[a_bar].iter_mut().zip(&grad_wpsi) {
            *w += step * g;
        }
        psi.biases[a_bar] += step * grad_bpsi;

        if f.weights[a_bar].iter().any(|w| !w.is_finite())
            || psi.weights[a_bar].iter().any(|w| !w.is_finite())
        {
            return Err(IglError::OptimizationDiverged {
                epoch,
                details: "non-finite parameters".into(),
            });
        }
    }
    Ok(())
}

/// Importance-weighted bucket mean of the decoded reward under `baseline`:
/// the estimate of the baseline policy's average reward on action `a_bar`.
/// With a uniform baseline this is the plain bucket mean of `psi`.
pub fn estimate_rho_hat(
    log: &[LoggedInteraction],
    psi: &LinearScorer,
    baseline: &Policy,
    a_bar: usize,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for rec in log.iter().filter(|rec| rec.action == a_bar) {
        let w = baseline.probabilities(&rec.context)?[a_bar];
        num += w * psi.score(&rec.feedback, a_bar)?;
        den += w;
    }
    if den <= 0.0 {
        return Err(IglError::InsufficientData {
            action: a_bar,
            details: "baseline policy puts no weight on this action's bucket".into(),
        });
    }
    Ok(num / den)
}

/// Which side of 1/2 the baseline's true average reward is known to lie on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryDirection {
    /// Baseline is known bad: flip when the estimate lands strictly above 1/2.
    RhoBelowHalf,
    /// Baseline is known good: flip when the estimate lands strictly below 1/2.
    RhoAboveHalf,
}

/// Resolve the decoder-vs-complement ambiguity. The flip is realized by
/// negating the decoder's parameters (`1 - sigmoid(t) = sigmoid(-t)`), so the
/// result stays inside the linear-logistic class.
pub fn break_symmetry(
    psi: &LinearScorer,
    rho_hat: f64,
    direction: SymmetryDirection,
) -> (LinearScorer, bool) {
    let flip = match direction {
        SymmetryDirection::RhoBelowHalf => rho_hat > 0.5,
        SymmetryDirection::RhoAboveHalf => rho_hat < 0.5,
    };
    if flip {
        (psi.complement(), true)
    } else {
        (psi.clone(), false)
    }
}

/// Per-action baseline policies with their known reward directionality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryConfig {
    pub baseline_policies: Vec<Policy>,
    /// Margin by which each baseline's average reward avoids 1/2.
    pub eta: f64,
    /// Minimum baseline visitation of each action.
    pub c_m: f64,
    pub directions: Vec<SymmetryDirection>,
}

impl SymmetryConfig {
    /// Uniform baselines for all K actions, known bad; the standard setup for
    /// balanced datasets where no class holds half the rows.
    pub fn uniform(num_actions: usize, eta: f64) -> Self {
        Self {
            baseline_policies: vec![Policy::Uniform { num_actions }; num_actions],
            eta,
            c_m: 1.0 / num_actions as f64,
            directions: vec![SymmetryDirection::RhoBelowHalf; num_actions],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 0.5) {
            return Err(IglError::Config(format!("eta {} outside (0, 0.5]", self.eta)));
        }
        if !(self.c_m > 0.0 && self.c_m <= 1.0) {
            return Err(IglError::Config(format!("c_m {} outside (0, 1]", self.c_m)));
        }
        if self.baseline_policies.len() != self.directions.len() {
            return Err(IglError::Config(
                "one baseline policy and direction per action required".into(),
            ));
        }
        Ok(())
    }

    pub fn num_actions(&self) -> usize {
        self.baseline_policies.len()
    }
}

/// One action's oriented decoder with its audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDecoder {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub flipped: bool,
    pub rho_hat: f64,
    pub objective: f64,
}

impl ActionDecoder {
    pub fn score(&self, feedback: &[f64]) -> Result<f64> {
        if feedback.len() != self.weights.len() {
            return Err(IglError::DimensionMismatch {
                what: "decoder feedback",
                expected: self.weights.len(),
                got: feedback.len(),
            });
        }
        let t: f64 = self
            .weights
            .iter()
            .zip(feedback)
            .map(|(w, y)| w * y)
            .sum::<f64>()
            + self.bias;
        Ok(crate::scorer::sigmoid(t))
    }
}

/// The oriented decoders, indexed by action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderSet {
    pub decoders: Vec<ActionDecoder>,
}

impl DecoderSet {
    /// JSON object keyed by action index, for audit and replay.
    pub fn to_json(&self) -> Result<String> {
        let mut map = serde_json::Map::new();
        for (a, d) in self.decoders.iter().enumerate() {
            map.insert(a.to_string(), serde_json::to_value(d)?);
        }
        Ok(serde_json::to_string_pretty(&serde_json::Value::Object(map))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(s)?;
        let mut decoders = vec![None; map.len()];
        for (k, v) in map {
            let a: usize = k
                .parse()
                .map_err(|_| IglError::Contract(format!("bad action key '{k}'")))?;
            if a >= decoders.len() {
                return Err(IglError::Contract(format!(
                    "action key {a} out of range for {} decoders",
                    decoders.len()
                )));
            }
            decoders[a] = Some(serde_json::from_value(v)?);
        }
        Ok(Self {
            decoders: decoders
                .into_iter()
                .enumerate()
                .map(|(a, d)| d.ok_or_else(|| IglError::Contract(format!("missing action {a}"))))
                .collect::<Result<_>>()?,
        })
    }
}

/// Rewrite a log into contextual-bandit records, one per input record in the
/// same order, with `decoded_reward = psi'_a(y)` and propensities copied
/// through.
pub fn decode_dataset(
    log: &[LoggedInteraction],
    decoders: &DecoderSet,
) -> Result<Vec<DecodedInteraction>> {
    log.iter()
        .map(|rec| {
            let decoder = decoders.decoders.get(rec.action).ok_or_else(|| {
                IglError::Contract(format!("no decoder for action {}", rec.action))
            })?;
            Ok(DecodedInteraction {
                context: rec.context.clone(),
                action: rec.action,
                decoded_reward: decoder.score(&rec.feedback)?,
                propensity: rec.propensity,
            })
        })
        .collect()
}

/// Everything the end-to-end run produces besides the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDiagnostics {
    pub action: usize,
    pub bucket_size: usize,
    pub objective: f64,
    pub rho_hat: f64,
    pub flipped: bool,
    pub degenerate: bool,
    /// |rho_hat - 1/2|; when below eta the flip decision is unreliable.
    pub symmetry_margin: f64,
    pub symmetry_reliable: bool,
    /// Conditional means estimated by thresholding the decoded reward at 1/2
    /// (the true latent reward is unobservable here).
    pub means: ConditionalMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiIglDiagnostics {
    pub per_action: Vec<ActionDiagnostics>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiIglResult {
    pub policy: Policy,
    pub decoders: DecoderSet,
    pub diagnostics: AiIglDiagnostics,
}

/// Joint configuration of the end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiIglConfig {
    pub fit: FitConfig,
    pub cb: CbConfig,
}

/// The full pipeline: per-action pair fitting, symmetry breaking, dataset
/// decoding, and the reduction to the offline contextual-bandit oracle.
/// Per-action work runs in parallel; the result does not depend on scheduling.
pub fn run_ai_igl(
    log: &[LoggedInteraction],
    config: &AiIglConfig,
    symmetry: &SymmetryConfig,
) -> Result<AiIglResult> {
    symmetry.validate()?;
    let num_actions = symmetry.num_actions();
    for rec in log {
        rec.validate(num_actions)?;
    }

    let per_action: Vec<Result<(ActionDecoder, ContrastivePair)>> = (0..num_actions)
        .into_par_iter()
        .map(|a| {
            let fit_cfg = FitConfig {
                seed: derive_seed(config.fit.seed, a as u64),
                ..config.fit
            };
            let pair = fit_contrastive_pair(log, a, &fit_cfg)?;
            let rho_hat = estimate_rho_hat(log, &pair.psi, &symmetry.baseline_policies[a], a)?;
            let (psi_prime, flipped) = break_symmetry(&pair.psi, rho_hat, symmetry.directions[a]);
            let decoder = ActionDecoder {
                weights: psi_prime.weights[a].clone(),
                bias: psi_prime.biases[a],
                flipped,
                rho_hat,
                objective: pair.achieved_objective,
            };
            Ok((decoder, pair))
        })
        .collect();

    let mut failures = Vec::new();
    let mut decoders = Vec::with_capacity(num_actions);
    let mut pairs = Vec::with_capacity(num_actions);
    for (a, outcome) in per_action.into_iter().enumerate() {
        match outcome {
            Ok((decoder, pair)) => {
                decoders.push(decoder);
                pairs.push(pair);
            }
            Err(e) => failures.push(format!("action {a}: {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(IglError::Contract(format!(
            "per-action failures: {}",
            failures.join("; ")
        )));
    }
    let decoders = DecoderSet { decoders };

    let decoded = decode_dataset(log, &decoders)?;
    let policy = train_cb_policy(&decoded, &config.cb)?;

    let mut warnings = Vec::new();
    let mut per_action = Vec::with_capacity(num_actions);
    for (a, pair) in pairs.iter().enumerate() {
        let d = &decoders.decoders[a];
        let margin = (d.rho_hat - 0.5).abs();
        let reliable = margin >= symmetry.eta;
        if !reliable {
            warnings.push(format!(
                "action {a}: |rho_hat - 1/2| = {margin:.4} is below eta = {}; flip decision unreliable",
                symmetry.eta
            ));
        }
        if pair.degenerate {
            warnings.push(format!(
                "action {a}: contrastive objective {:.2e} is indistinguishable from zero; \
                 no separable reward signal in this bucket",
                pair.achieved_objective
            ));
        }
        let bucket: Vec<&LoggedInteraction> =
            log.iter().filter(|rec| rec.action == a).collect();
        per_action.push(ActionDiagnostics {
            action: a,
            bucket_size: bucket.len(),
            objective: pair.achieved_objective,
            rho_hat: d.rho_hat,
            flipped: d.flipped,
            degenerate: pair.degenerate,
            symmetry_margin: margin,
            symmetry_reliable: reliable,
            means: decoded_conditional_means(&bucket, &decoded, log, pair, d, a)?,
        });
    }

    Ok(AiIglResult {
        policy,
        decoders,
        diagnostics: AiIglDiagnostics {
            per_action,
            warnings,
        },
    })
}

fn decoded_conditional_means(
    bucket: &[&LoggedInteraction],
    decoded: &[DecodedInteraction],
    log: &[LoggedInteraction],
    pair: &ContrastivePair,
    decoder: &ActionDecoder,
    a_bar: usize,
) -> Result<ConditionalMeans> {
    let mut sums = [[0.0f64; 2]; 2]; // [r_hat][f or psi]
    let mut counts = [0usize; 2];
    for (rec, dec) in log.iter().zip(decoded) {
        if rec.action != a_bar {
            continue;
        }
        let r_hat = usize::from(dec.decoded_reward > 0.5);
        counts[r_hat] += 1;
        sums[r_hat][0] += pair.f.score(&rec.context, a_bar)?;
        sums[r_hat][1] += dec.decoded_reward;
    }
    let total = (counts[0] + counts[1]).max(1) as f64;
    let overall_f = (sums[0][0] + sums[1][0]) / total;
    let overall_psi = (sums[0][1] + sums[1][1]) / total;
    let mean = |r: usize, j: usize, fallback: f64| {
        if counts[r] > 0 {
            sums[r][j] / counts[r] as f64
        } else {
            fallback
        }
    };
    Ok(ConditionalMeans {
        f_a0: mean(0, 0, overall_f),
        f_a1: mean(1, 0, overall_f),
        psi_a0: mean(0, 1, overall_psi),
        psi_a1: mean(1, 1, overall_psi),
        rho_a: decoder.rho_hat,
        d_a: bucket.len() as f64 / log.len().max(1) as f64,
    })
}
