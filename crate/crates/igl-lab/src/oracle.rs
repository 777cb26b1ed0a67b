//! Exact enumeration oracles for finite environments.
//!
//! Everything here is computed by direct summation over (context, feedback,
//! reward) triples — no sampling, no learning — so these quantities serve as
//! ground truth for the statistical learners:
//!
//! - conditional means `f_{a,r}`, `psi_{a,r}` of arbitrary finite scorers,
//! - the population contrastive objective and its closed-form factorization
//!   `(1 - rho) * rho * (f_{a,1} - f_{a,0}) * (psi_{a,1} - psi_{a,0})`,
//! - the separability lower bound `|f_{a,1} - f_{a,0}| >= 4 |Cov(f, R)|`
//!   under a uniform behavior policy,
//! - the decoded-return objective `L(pi, psi) = V(pi, psi) - V(pi_bad, psi)`
//!   of the fully-conditionally-independent reduction,
//! - exhaustive grid search over finite scorer tables, the optimality oracle
//!   for the gradient-based pair fitting.
//!
//! Sums use Kahan compensation so the 1e-12 identity tolerances hold even on
//! environments with many cells.

use serde::{Deserialize, Serialize};

use crate::env::TabularEnv;
use crate::error::IglError;
use crate::policy::Policy;
use crate::records::ConditionalMeans;
use crate::rng::derived_rng;
use crate::scorer::LinearScorer;
use crate::Result;

use rand::Rng;

/// A scorer on a finite domain: `table[point][action]` in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularScorer {
    pub table: Vec<Vec<f64>>,
}

impl TabularScorer {
    pub fn new(table: Vec<Vec<f64>>) -> Result<Self> {
        if table
            .iter()
            .flatten()
            .any(|&v| !(0.0..=1.0).contains(&v))
        {
            return Err(IglError::Contract(
                "tabular scorer entries must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { table })
    }

    /// Same value for every action at each point.
    pub fn from_column(values: &[f64], num_actions: usize) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v; num_actions]).collect())
    }

    pub fn constant(num_points: usize, num_actions: usize, value: f64) -> Result<Self> {
        Self::from_column(&vec![value; num_points], num_actions)
    }

    pub fn value(&self, point: usize, action: usize) -> f64 {
        self.table[point][action]
    }

    pub fn num_points(&self) -> usize {
        self.table.len()
    }

    /// 1 - table, the complement scorer.
    pub fn complement(&self) -> Self {
        Self {
            table: self
                .table
                .iter()
                .map(|row| row.iter().map(|v| 1.0 - v).collect())
                .collect(),
        }
    }
}

/// Evaluate a linear-logistic scorer on every one-hot input of a finite
/// domain, producing the tabular scorer it induces there.
pub fn tabularize_linear(scorer: &LinearScorer, num_points: usize) -> Result<TabularScorer> {
    let mut table = Vec::with_capacity(num_points);
    for p in 0..num_points {
        let mut input = vec![0.0; scorer.input_dim()];
        if p >= input.len() {
            return Err(IglError::DimensionMismatch {
                what: "tabularize",
                expected: num_points,
                got: input.len(),
            });
        }
        input[p] = 1.0;
        let row: Vec<f64> = (0..scorer.num_actions())
            .map(|a| scorer.score(&input, a))
            .collect::<Result<_>>()?;
        table.push(row);
    }
    Ok(TabularScorer { table })
}

/// Kahan compensated accumulator.
#[derive(Default, Clone, Copy)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

/// Context-side statistics for one action: visitation, average reward, and
/// the reward-conditioned means of `f`.
struct ActionStats {
    d_a: f64,
    rho: f64,
    f_a0: f64,
    f_a1: f64,
}

fn context_stats(env: &TabularEnv, f: &TabularScorer, a_bar: usize) -> Result<ActionStats> {
    let mut d_a = KahanSum::default();
    let mut w1 = KahanSum::default(); // Pr(a_bar, r = 1)
    let mut f1 = KahanSum::default();
    let mut f0 = KahanSum::default();
    for x in 0..env.num_contexts() {
        let w = env.d0[x] * env.mu[x][a_bar];
        let r = env.reward[x][a_bar];
        d_a.add(w);
        w1.add(w * r);
        f1.add(w * r * f.value(x, a_bar));
        f0.add(w * (1.0 - r) * f.value(x, a_bar));
    }
    let d_a_v = d_a.value();
    if d_a_v <= 0.0 {
        return Err(IglError::InsufficientData {
            action: a_bar,
            details: "behavior policy never takes this action".into(),
        });
    }
    let w1_v = w1.value();
    let w0_v = d_a_v - w1_v;
    if w1_v <= 0.0 {
        return Err(IglError::DegenerateConditioning {
            action: a_bar,
            reward: 1,
        });
    }
    if w0_v <= 0.0 {
        return Err(IglError::DegenerateConditioning {
            action: a_bar,
            reward: 0,
        });
    }
    Ok(ActionStats {
        d_a: d_a_v,
        rho: w1_v / d_a_v,
        f_a0: f0.value() / w0_v,
        f_a1: f1.value() / w1_v,
    })
}

fn feedback_means(env: &TabularEnv, psi: &TabularScorer, a_bar: usize) -> (f64, f64) {
    let mut m0 = KahanSum::default();
    let mut m1 = KahanSum::default();
    for y in 0..env.num_feedbacks() {
        m0.add(env.kernel0[a_bar][y] * psi.value(y, a_bar));
        m1.add(env.kernel1[a_bar][y] * psi.value(y, a_bar));
    }
    (m0.value(), m1.value())
}

/// Exact conditional means of `(f, psi)` for action `a_bar` under the
/// environment's behavior policy.
pub fn conditional_means(
    env: &TabularEnv,
    f: &TabularScorer,
    psi: &TabularScorer,
    a_bar: usize,
) -> Result<ConditionalMeans> {
    env.validate()?;
    let stats = context_stats(env, f, a_bar)?;
    let (psi_a0, psi_a1) = feedback_means(env, psi, a_bar);
    let means = ConditionalMeans {
        f_a0: stats.f_a0,
        f_a1: stats.f_a1,
        psi_a0,
        psi_a1,
        rho_a: stats.rho,
        d_a: stats.d_a,
    };
    means.validate()?;
    Ok(means)
}

/// Population contrastive objective for action `a_bar`, by direct enumeration:
/// `E[f psi | a] - E[f | a] E[psi | a]` over the joint (x, r, y) law.
pub fn population_objective(
    env: &TabularEnv,
    f: &TabularScorer,
    psi: &TabularScorer,
    a_bar: usize,
) -> Result<f64> {
    env.validate()?;
    // Degenerate conditioning is surfaced the same way as conditional_means.
    let stats = context_stats(env, f, a_bar)?;

    let mut e_fpsi = KahanSum::default();
    let mut e_f = KahanSum::default();
    let mut e_psi = KahanSum::default();
    for x in 0..env.num_contexts() {
        let w = env.d0[x] * env.mu[x][a_bar];
        let fx = f.value(x, a_bar);
        e_f.add(w * fx);
        for (r, kernel) in [(0u8, &env.kernel0), (1u8, &env.kernel1)] {
            let pr = if r == 1 {
                env.reward[x][a_bar]
            } else {
                1.0 - env.reward[x][a_bar]
            };
            if pr == 0.0 {
                continue;
            }
            for y in 0..env.num_feedbacks() {
                let mass = w * pr * kernel[a_bar][y];
                let py = psi.value(y, a_bar);
                e_fpsi.add(mass * fx * py);
                e_psi.add(mass * py);
            }
        }
    }
    let d = stats.d_a;
    Ok(e_fpsi.value() / d - (e_f.value() / d) * (e_psi.value() / d))
}

/// The same objective through the closed-form route:
/// `(1 - rho) rho (f_{a,1} - f_{a,0}) (psi_{a,1} - psi_{a,0})`.
pub fn population_objective_factored(
    env: &TabularEnv,
    f: &TabularScorer,
    psi: &TabularScorer,
    a_bar: usize,
) -> Result<f64> {
    let m = conditional_means(env, f, psi, a_bar)?;
    Ok((1.0 - m.rho_a) * m.rho_a * (m.f_a1 - m.f_a0) * (m.psi_a1 - m.psi_a0))
}

/// The 10-context, 10-action, 10-feedback environment in which the decoded
/// return objective provably prefers a constant policy: contexts uniform,
/// uniform behavior, `R(x, a) = 1(x = a)`, and feedback `y = (a + r) mod 10`.
/// Indices are 0-based.
pub fn worked_example_env() -> TabularEnv {
    let n = 10;
    let mut kernel0 = vec![vec![0.0; n]; n];
    let mut kernel1 = vec![vec![0.0; n]; n];
    let mut reward = vec![vec![0.0; n]; n];
    for a in 0..n {
        kernel0[a][a] = 1.0;
        kernel1[a][(a + 1) % n] = 1.0;
        reward[a][a] = 1.0;
    }
    TabularEnv {
        d0: vec![0.1; n],
        mu: vec![vec![0.1; n]; n],
        reward,
        kernel0,
        kernel1,
    }
}

/// The optimal policy of [`worked_example_env`]: action equals context.
pub fn worked_example_optimal_policy() -> Policy {
    let n = 10;
    let mut table = vec![vec![0.0; n]; n];
    for (x, row) in table.iter_mut().enumerate() {
        row[x] = 1.0;
    }
    Policy::Tabular { table }
}

/// Exact decoded-return objective `L(pi, psi) = V(pi, psi) - V(pi_bad, psi)`
/// with an action-blind decoder `psi: Y -> [0, 1]`, where
/// `V(pi, psi) = E_{x ~ d0, a ~ pi}[psi(y)]` under the environment's feedback
/// law. This is the objective whose maximizer need not be the optimal policy
/// once feedback carries action information.
pub fn eval_old_objective(
    env: &TabularEnv,
    pi: &Policy,
    psi: &[f64],
    pi_bad: &Policy,
) -> Result<f64> {
    env.validate()?;
    if psi.len() != env.num_feedbacks() {
        return Err(IglError::DimensionMismatch {
            what: "decoder over feedbacks",
            expected: env.num_feedbacks(),
            got: psi.len(),
        });
    }
    Ok(decoded_value(env, pi, psi)? - decoded_value(env, pi_bad, psi)?)
}

fn decoded_value(env: &TabularEnv, pi: &Policy, psi: &[f64]) -> Result<f64> {
    let mut v = KahanSum::default();
    for x in 0..env.num_contexts() {
        let probs = pi.probabilities_at_index(x)?;
        if probs.len() != env.num_actions() {
            return Err(IglError::DimensionMismatch {
                what: "policy action count",
                expected: env.num_actions(),
                got: probs.len(),
            });
        }
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let r1 = env.reward[x][a];
            for y in 0..env.num_feedbacks() {
                let mass = env.d0[x]
                    * pa
                    * ((1.0 - r1) * env.kernel0[a][y] + r1 * env.kernel1[a][y]);
                v.add(mass * psi[y]);
            }
        }
    }
    Ok(v.value())
}

/// Result of the separability lower-bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaFBound {
    /// `|f_{a,1} - f_{a,0}|`.
    pub gap: f64,
    /// `Cov(f, R)` under contexts from d0 with the action pinned to `a_bar`.
    pub covariance: f64,
    /// Whether `gap >= 4 |covariance|` (up to 1e-12).
    pub holds: bool,
}

/// Verify `|f_{a,1} - f_{a,0}| >= 4 |Cov(f, R)|`, which requires the behavior
/// policy to be uniform.
pub fn delta_f_lower_bound_check(
    env: &TabularEnv,
    f: &TabularScorer,
    a_bar: usize,
) -> Result<DeltaFBound> {
    env.validate()?;
    let k = env.num_actions() as f64;
    for row in &env.mu {
        if row.iter().any(|&p| (p - 1.0 / k).abs() > 1e-12) {
            return Err(IglError::Contract(
                "separability bound check requires a uniform behavior policy".into(),
            ));
        }
    }
    let stats = context_stats(env, f, a_bar)?;
    let gap = (stats.f_a1 - stats.f_a0).abs();

    let mut e_f = KahanSum::default();
    let mut e_r = KahanSum::default();
    let mut e_fr = KahanSum::default();
    for x in 0..env.num_contexts() {
        let w = env.d0[x];
        e_f.add(w * f.value(x, a_bar));
        e_r.add(w * env.reward[x][a_bar]);
        e_fr.add(w * f.value(x, a_bar) * env.reward[x][a_bar]);
    }
    let covariance = e_fr.value() - e_f.value() * e_r.value();
    Ok(DeltaFBound {
        gap,
        covariance,
        holds: gap >= 4.0 * covariance.abs() - 1e-12,
    })
}

/// Output of [`grid_optimal_pair`]: the maximizing tables for action `a_bar`
/// and the attained absolute objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub f_values: Vec<f64>,
    pub psi_values: Vec<f64>,
    pub objective_abs: f64,
}

/// Exhaustive search over `grid^|X| x grid^|Y|` scorer tables for the pair
/// maximizing `|population objective|` at `a_bar`.
///
/// The search walks each side's tables in lexicographic order (grid sorted
/// ascending, table entry 0 most significant) and keeps the first maximizer,
/// so the output does not depend on the order the grid was supplied in. The
/// reported objective is re-derived by direct enumeration on the winning
/// pair.
pub fn grid_optimal_pair(
    env: &TabularEnv,
    a_bar: usize,
    grid: &[f64],
    budget: u128,
) -> Result<GridOptimum> {
    env.validate()?;
    let mut grid: Vec<f64> = grid.to_vec();
    if grid.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(IglError::Contract("grid values must lie in [0, 1]".into()));
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    grid.dedup();
    if grid.is_empty() {
        return Err(IglError::Contract("empty grid".into()));
    }

    let nx = env.num_contexts() as u32;
    let ny = env.num_feedbacks() as u32;
    let g = grid.len() as u128;
    let required = g
        .checked_pow(nx)
        .and_then(|fx| g.checked_pow(ny).and_then(|fy| fx.checked_mul(fy)))
        .unwrap_or(u128::MAX);
    if required > budget {
        return Err(IglError::BudgetExceeded { required, budget });
    }

    // The objective factorizes over the two sides, so each side's gap can be
    // maximized independently; the winning pair is identical to the joint
    // lexicographic-first argmax, at a fraction of the evaluations.
    let stats = context_stats(env, &TabularScorer::constant(env.num_contexts(), env.num_actions(), 0.0)?, a_bar)?;
    let f_weights: Vec<f64> = (0..env.num_contexts())
        .map(|x| {
            let w = env.d0[x] * env.mu[x][a_bar];
            let r = env.reward[x][a_bar];
            w * r / (stats.d_a * stats.rho) - w * (1.0 - r) / (stats.d_a * (1.0 - stats.rho))
        })
        .collect();
    let psi_weights: Vec<f64> = (0..env.num_feedbacks())
        .map(|y| env.kernel1[a_bar][y] - env.kernel0[a_bar][y])
        .collect();

    let f_values = lex_first_max_gap(&grid, &f_weights);
    let psi_values = lex_first_max_gap(&grid, &psi_weights);

    let f = TabularScorer::from_column(&f_values, env.num_actions())?;
    let psi = TabularScorer::from_column(&psi_values, env.num_actions())?;
    let objective_abs = population_objective(env, &f, &psi, a_bar)?.abs();
    Ok(GridOptimum {
        f_values,
        psi_values,
        objective_abs,
    })
}

/// First table (in lexicographic enumeration order) maximizing
/// `|sum_i weights[i] * table[i]|` over `grid^len(weights)`.
fn lex_first_max_gap(grid: &[f64], weights: &[f64]) -> Vec<f64> {
    // For a linear functional the maximum of the absolute value is attained
    // at a vertex: per coordinate the grid min or max, depending on the signs
    // of the weight and of the overall orientation. The weights here are
    // differences of two probability vectors, so they sum to zero and the two
    // orientations always achieve the same absolute gap; the lexicographically
    // smaller of the two vertex tables is the one a full enumeration keeps.
    let lo = grid[0];
    let hi = *grid.last().expect("non-empty grid");
    let build = |sign: f64| -> Vec<f64> {
        weights
            .iter()
            .map(|&w| if w * sign > 0.0 { hi } else { lo })
            .collect()
    };
    let plus = build(1.0);
    let minus = build(-1.0);
    if minus <= plus {
        minus
    } else {
        plus
    }
}

/// Seeded random environments for identity sweeps: strictly interior reward
/// probabilities so conditioning never degenerates.
pub fn random_env(seed: u64, max_contexts: usize, max_feedbacks: usize, max_actions: usize) -> TabularEnv {
    let mut rng = derived_rng(seed, 0xE17);
    let nx = rng.gen_range(2..=max_contexts);
    let ny = rng.gen_range(2..=max_feedbacks);
    let k = rng.gen_range(2..=max_actions);
    let normalize = |row: &mut Vec<f64>| {
        let sum: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= sum;
        }
    };
    let mut d0: Vec<f64> = (0..nx).map(|_| rng.gen_range(0.1..1.0)).collect();
    normalize(&mut d0);
    let mut mu = Vec::with_capacity(nx);
    for _ in 0..nx {
        let mut row: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        normalize(&mut row);
        mu.push(row);
    }
    let reward: Vec<Vec<f64>> = (0..nx)
        .map(|_| (0..k).map(|_| rng.gen_range(0.1..0.9)).collect())
        .collect();
    let mut kernel = |_: u8| -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| {
                let mut row: Vec<f64> = (0..ny).map(|_| rng.gen_range(0.05..1.0)).collect();
                normalize(&mut row);
                row
            })
            .collect()
    };
    TabularEnv {
        d0,
        mu,
        reward,
        kernel0: kernel(0),
        kernel1: kernel(1),
    }
}

/// Seeded random scorer table over `num_points` x `num_actions`.
pub fn random_scorer(seed: u64, num_points: usize, num_actions: usize) -> TabularScorer {
    let mut rng = derived_rng(seed, 0x5C0);
    TabularScorer {
        table: (0..num_points)
            .map(|_| (0..num_actions).map(|_| rng.gen_range(0.0..=1.0)).collect())
            .collect(),
    }
}

/// Seeded random environments that satisfy the symmetry-breaking assumptions
/// with a real margin: uniform contexts and behavior, exactly one rewarding
/// context per action (reward 0.55..0.7 there, 0.02..0.08 elsewhere, so each
/// action's average reward stays below 0.29 while the predictor-side gap is
/// large), and feedback kernels splitting r = 0 mass onto the low half of the
/// feedback set and r = 1 mass onto the high half.
pub fn random_signal_env(seed: u64) -> TabularEnv {
    let mut rng = derived_rng(seed, 0x516);
    let nx = rng.gen_range(3..=5);
    let ny = rng.gen_range(4..=6);
    let k = rng.gen_range(2..=3);
    let normalize = |row: &mut Vec<f64>| {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    };
    let d0 = vec![1.0 / nx as f64; nx];
    let mu = vec![vec![1.0 / k as f64; k]; nx];
    let mut reward = vec![vec![0.0; k]; nx];
    for a in 0..k {
        let rewarding = rng.gen_range(0..nx);
        for (x, row) in reward.iter_mut().enumerate() {
            row[a] = if x == rewarding {
                rng.gen_range(0.55..0.7)
            } else {
                rng.gen_range(0.02..0.08)
            };
        }
    }
    let half = ny / 2;
    let mut kernels = |low: bool| -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| {
                let mut row: Vec<f64> = (0..ny)
                    .map(|y| {
                        let in_main = if low { y < half } else { y >= half };
                        if in_main {
                            rng.gen_range(0.5..1.0)
                        } else {
                            rng.gen_range(0.0..0.1)
                        }
                    })
                    .collect();
                normalize(&mut row);
                row
            })
            .collect()
    };
    TabularEnv {
        d0,
        mu,
        reward,
        kernel0: kernels(true),
        kernel1: kernels(false),
    }
}

/// One check of the identity suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Run the full battery of exact identities on seeded random environments
/// and on the worked example. Every check must pass on a correct build; a
/// failure means the enumeration oracles and the closed forms disagree.
pub fn identity_suite(cases: usize) -> Vec<IdentityCheck> {
    let mut checks = Vec::new();

    // Factorization of the population objective.
    let mut worst: f64 = 0.0;
    for seed in 0..cases as u64 {
        let env = random_env(seed, 6, 6, 4);
        for a in 0..env.num_actions() {
            let f = random_scorer(seed ^ 0xF00D, env.num_contexts(), env.num_actions());
            let psi = random_scorer(seed ^ 0xBEEF, env.num_feedbacks(), env.num_actions());
            let left = population_objective(&env, &f, &psi, a).expect("non-degenerate env");
            let right =
                population_objective_factored(&env, &f, &psi, a).expect("non-degenerate env");
            worst = worst.max((left - right).abs());
        }
    }
    checks.push(IdentityCheck {
        name: "covariance factorization".into(),
        passed: worst < 1e-12,
        detail: format!("max |enumerated - factored| = {worst:.2e} over {cases} environments"),
    });

    // Complement antisymmetry of the population objective.
    let mut worst_flip: f64 = 0.0;
    let mut worst_both: f64 = 0.0;
    for seed in 0..cases as u64 {
        let env = random_env(seed ^ 0xC0FFEE, 6, 6, 4);
        let f = random_scorer(seed ^ 0x1234, env.num_contexts(), env.num_actions());
        let psi = random_scorer(seed ^ 0x4321, env.num_feedbacks(), env.num_actions());
        let base = population_objective(&env, &f, &psi, 0).expect("non-degenerate env");
        let flip = population_objective(&env, &f, &psi.complement(), 0).expect("env");
        let both =
            population_objective(&env, &f.complement(), &psi.complement(), 0).expect("env");
        worst_flip = worst_flip.max((flip + base).abs());
        worst_both = worst_both.max((both - base).abs());
    }
    checks.push(IdentityCheck {
        name: "complement antisymmetry".into(),
        passed: worst_flip < 1e-12 && worst_both < 1e-12,
        detail: format!(
            "max |obj(f,1-psi)+obj| = {worst_flip:.2e}, max |obj(1-f,1-psi)-obj| = {worst_both:.2e}"
        ),
    });

    // Separability lower bound, including the exact equality case.
    let mut bound_ok = true;
    let mut bound_detail = String::new();
    for seed in 0..cases as u64 {
        let mut env = random_env(seed ^ 0xABCD, 6, 6, 4);
        let k = env.num_actions();
        for row in &mut env.mu {
            *row = vec![1.0 / k as f64; k];
        }
        for a in 0..k {
            let f = random_scorer(seed ^ 0xD00D, env.num_contexts(), k);
            let b = delta_f_lower_bound_check(&env, &f, a).expect("non-degenerate env");
            if !b.holds {
                bound_ok = false;
                bound_detail = format!(
                    "seed {seed} action {a}: gap {} < 4|cov| = {}",
                    b.gap,
                    4.0 * b.covariance.abs()
                );
            }
        }
    }
    let equality_env = TabularEnv {
        d0: vec![0.5, 0.5],
        mu: vec![vec![0.5, 0.5]; 2],
        reward: vec![vec![0.0, 0.5], vec![1.0, 0.5]],
        kernel0: vec![vec![1.0, 0.0]; 2],
        kernel1: vec![vec![0.0, 1.0]; 2],
    };
    let f_eq = TabularScorer::from_column(&[0.0, 1.0], 2).expect("valid scorer");
    let eq = delta_f_lower_bound_check(&equality_env, &f_eq, 0).expect("non-degenerate env");
    let equality_exact = (eq.gap - 1.0).abs() < 1e-12 && (eq.covariance - 0.25).abs() < 1e-12;
    checks.push(IdentityCheck {
        name: "separability lower bound".into(),
        passed: bound_ok && equality_exact,
        detail: if bound_ok && equality_exact {
            format!("holds on {cases} uniform-behavior environments; equality case exact")
        } else if bound_detail.is_empty() {
            format!("equality case off: gap {} cov {}", eq.gap, eq.covariance)
        } else {
            bound_detail
        },
    });

    // Worked example: the optimal policy's decoded-return objective vanishes
    // for every decoder, while the constant-action trap scores 0.8.
    let env = worked_example_env();
    let pi_star = worked_example_optimal_policy();
    let pi_bad = Policy::Uniform { num_actions: 10 };
    let mut worst_star: f64 = 0.0;
    for seed in 0..100 {
        let psi: Vec<f64> = random_scorer(seed, 10, 1)
            .table
            .iter()
            .map(|row| row[0])
            .collect();
        let l = eval_old_objective(&env, &pi_star, &psi, &pi_bad).expect("valid env");
        worst_star = worst_star.max(l.abs());
    }
    checks.push(IdentityCheck {
        name: "worked example: optimal policy neutrality".into(),
        passed: worst_star < 1e-9,
        detail: format!("max |L(pi*, psi)| = {worst_star:.2e} over 100 random decoders"),
    });

    let mut trap_ok = true;
    let mut trap_detail = String::new();
    for c in 0..10 {
        let pi = Policy::Constant {
            num_actions: 10,
            action: c,
        };
        let mut psi = vec![0.0; 10];
        psi[c] = 1.0;
        let l = eval_old_objective(&env, &pi, &psi, &pi_bad).expect("valid env");
        if (l - 0.8).abs() > 1e-9 {
            trap_ok = false;
            trap_detail = format!("constant action {c} scored {l}, expected 0.8");
        }
    }
    checks.push(IdentityCheck {
        name: "worked example: constant-action trap".into(),
        passed: trap_ok,
        detail: if trap_ok {
            "every constant policy with its own feedback indicator scores 0.8 > 0".into()
        } else {
            trap_detail
        },
    });

    // Grid search separates each action's success feedback from its failure
    // feedback on the worked example.
    let mut grid_ok = true;
    let mut grid_detail = String::new();
    for a in 0..10 {
        let opt = grid_optimal_pair(&env, a, &[0.0, 0.25, 0.5, 0.75, 1.0], 10u128.pow(15))
            .expect("within budget");
        let split = (opt.psi_values[(a + 1) % 10] - opt.psi_values[a]).abs();
        if (split - 1.0).abs() > 1e-12 {
            grid_ok = false;
            grid_detail = format!("action {a}: success/failure split {split}, expected 1");
        }
    }
    checks.push(IdentityCheck {
        name: "worked example: grid decoder separation".into(),
        passed: grid_ok,
        detail: if grid_ok {
            "grid optimum fully splits y = a+1 from y = a for every action".into()
        } else {
            grid_detail
        },
    });

    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_context_env() -> TabularEnv {
        // d0 = (0.5, 0.5), uniform mu over 2 actions, R(., a_bar=0) = (0, 1).
        TabularEnv {
            d0: vec![0.5, 0.5],
            mu: vec![vec![0.5, 0.5]; 2],
            reward: vec![vec![0.0, 0.5], vec![1.0, 0.5]],
            kernel0: vec![vec![1.0, 0.0]; 2],
            kernel1: vec![vec![0.0, 1.0]; 2],
        }
    }

    #[test]
    fn conditional_means_by_hand() {
        let env = two_context_env();
        let f = TabularScorer::from_column(&[0.2, 0.8], 2).unwrap();
        let psi = TabularScorer::from_column(&[0.1, 0.9], 2).unwrap();
        let m = conditional_means(&env, &f, &psi, 0).unwrap();
        assert!((m.f_a0 - 0.2).abs() < 1e-15);
        assert!((m.f_a1 - 0.8).abs() < 1e-15);
        assert!((m.rho_a - 0.5).abs() < 1e-15);
        assert!((m.d_a - 0.5).abs() < 1e-15);
        assert!((m.psi_a0 - 0.1).abs() < 1e-15);
        assert!((m.psi_a1 - 0.9).abs() < 1e-15);
    }

    #[test]
    fn constant_predictor_has_equal_conditional_means() {
        let env = two_context_env();
        let f = TabularScorer::constant(2, 2, 0.3).unwrap();
        let psi = TabularScorer::constant(2, 2, 0.6).unwrap();
        let m = conditional_means(&env, &f, &psi, 0).unwrap();
        assert_eq!(m.f_a0, 0.3);
        assert_eq!(m.f_a1, 0.3);
    }

    #[test]
    fn degenerate_conditioning_is_reported() {
        let mut env = two_context_env();
        env.reward = vec![vec![1.0, 1.0]; 2]; // rho = 1 for every action
        let f = TabularScorer::constant(2, 2, 0.5).unwrap();
        let psi = TabularScorer::constant(2, 2, 0.5).unwrap();
        match conditional_means(&env, &f, &psi, 0) {
            Err(IglError::DegenerateConditioning { action: 0, reward: 0 }) => {}
            other => panic!("expected degenerate conditioning, got {other:?}"),
        }
    }

    #[test]
    fn constant_decoder_zeroes_the_objective() {
        let env = two_context_env();
        let f = TabularScorer::from_column(&[0.2, 0.8], 2).unwrap();
        let psi = TabularScorer::constant(2, 2, 0.4).unwrap();
        assert!(population_objective(&env, &f, &psi, 0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn quarter_objective_at_full_gaps() {
        // rho = 0.5, f gap 1, psi gap 1 -> objective 0.25 both routes.
        let env = two_context_env();
        let f = TabularScorer::from_column(&[0.0, 1.0], 2).unwrap();
        let psi = TabularScorer::from_column(&[0.0, 1.0], 2).unwrap();
        let left = population_objective(&env, &f, &psi, 0).unwrap();
        let right = population_objective_factored(&env, &f, &psi, 0).unwrap();
        assert!((left - 0.25).abs() < 1e-15);
        assert!((right - 0.25).abs() < 1e-15);
    }

    #[test]
    fn factorization_identity_on_random_environments() {
        for seed in 0..100 {
            let env = random_env(seed, 6, 6, 4);
            for a in 0..env.num_actions() {
                let f = random_scorer(seed * 31 + a as u64, env.num_contexts(), env.num_actions());
                let psi =
                    random_scorer(seed * 57 + a as u64, env.num_feedbacks(), env.num_actions());
                let left = population_objective(&env, &f, &psi, a).unwrap();
                let right = population_objective_factored(&env, &f, &psi, a).unwrap();
                assert!(
                    (left - right).abs() < 1e-12,
                    "seed {seed} action {a}: {left} vs {right}"
                );
            }
        }
    }

    #[test]
    fn complement_symmetry_is_exact() {
        for seed in 0..50 {
            let env = random_env(seed, 5, 5, 3);
            let f = random_scorer(seed + 1000, env.num_contexts(), env.num_actions());
            let psi = random_scorer(seed + 2000, env.num_feedbacks(), env.num_actions());
            let base = population_objective(&env, &f, &psi, 0).unwrap();
            let flipped = population_objective(&env, &f, &psi.complement(), 0).unwrap();
            let both = population_objective(&env, &f.complement(), &psi.complement(), 0).unwrap();
            assert!((flipped + base).abs() < 1e-12);
            assert!((both - base).abs() < 1e-12);
        }
    }

    #[test]
    fn worked_example_environment_shape() {
        let env = worked_example_env();
        env.validate().unwrap();
        assert_eq!(env.reward[3][3], 1.0);
        assert_eq!(env.reward[3][4], 0.0);
        // Feedback for (x=3, a=3): reward 1, so point mass on y = 4.
        assert_eq!(env.kernel1[3][4], 1.0);
        assert!(env.d0.iter().all(|&p| p == 0.1));
    }

    #[test]
    fn optimal_policy_scores_zero_for_any_decoder() {
        let env = worked_example_env();
        let pi_star = worked_example_optimal_policy();
        let pi_bad = Policy::Uniform { num_actions: 10 };
        for seed in 0..100 {
            let psi: Vec<f64> = random_scorer(seed, 10, 1)
                .table
                .iter()
                .map(|row| row[0])
                .collect();
            let l = eval_old_objective(&env, &pi_star, &psi, &pi_bad).unwrap();
            assert!(l.abs() < 1e-12, "seed {seed}: L = {l}");
        }
    }

    #[test]
    fn constant_decoder_is_neutral_for_every_policy() {
        let env = worked_example_env();
        let pi_bad = Policy::Uniform { num_actions: 10 };
        let psi = vec![0.37; 10];
        for a in 0..10 {
            let pi = Policy::Constant {
                num_actions: 10,
                action: a,
            };
            let l = eval_old_objective(&env, &pi, &psi, &pi_bad).unwrap();
            assert!(l.abs() < 1e-15);
        }
    }

    #[test]
    fn constant_policy_with_own_indicator_scores_point_eight() {
        // The trap the decoded-return objective falls into: play action c,
        // fire the decoder on the y = c feedback it mostly produces.
        let env = worked_example_env();
        let pi_bad = Policy::Uniform { num_actions: 10 };
        for c in 0..10 {
            let pi = Policy::Constant {
                num_actions: 10,
                action: c,
            };
            let mut psi = vec![0.0; 10];
            psi[c] = 1.0;
            let l = eval_old_objective(&env, &pi, &psi, &pi_bad).unwrap();
            assert!((l - 0.8).abs() < 1e-12, "c={c}: L = {l}");
        }
    }

    #[test]
    fn aligned_indicator_scores_zero_not_higher() {
        // Playing action 1 and decoding its success feedback y = 2 nets zero:
        // the success rate (0.1) exactly matches the uniform baseline's rate.
        let env = worked_example_env();
        let pi = Policy::Constant {
            num_actions: 10,
            action: 1,
        };
        let mut psi = vec![0.0; 10];
        psi[2] = 1.0;
        let l =
            eval_old_objective(&env, &pi, &psi, &Policy::Uniform { num_actions: 10 }).unwrap();
        assert!(l.abs() < 1e-12, "L = {l}");
    }

    #[test]
    fn delta_f_bound_equality_case() {
        // f = R on a 2-context env with rho = 0.5: gap 1, covariance 0.25,
        // bound holds with equality.
        let env = TabularEnv {
            d0: vec![0.5, 0.5],
            mu: vec![vec![0.5, 0.5]; 2],
            reward: vec![vec![0.0, 0.5], vec![1.0, 0.5]],
            kernel0: vec![vec![1.0, 0.0]; 2],
            kernel1: vec![vec![0.0, 1.0]; 2],
        };
        let f = TabularScorer::from_column(&[0.0, 1.0], 2).unwrap();
        let b = delta_f_lower_bound_check(&env, &f, 0).unwrap();
        assert!((b.gap - 1.0).abs() < 1e-15);
        assert!((b.covariance - 0.25).abs() < 1e-15);
        assert!(b.holds);
        assert!((b.gap - 4.0 * b.covariance.abs()).abs() < 1e-12);
    }

    #[test]
    fn delta_f_bound_constant_scorer() {
        let env = two_context_env();
        let f = TabularScorer::constant(2, 2, 0.7).unwrap();
        let b = delta_f_lower_bound_check(&env, &f, 0).unwrap();
        assert!(b.gap.abs() < 1e-15);
        assert!(b.covariance.abs() < 1e-15);
        assert!(b.holds);
    }

    #[test]
    fn delta_f_bound_random_sweep() {
        let mut checked = 0;
        for seed in 0..200 {
            let mut env = random_env(seed, 6, 6, 4);
            // Force the uniform behavior policy the bound requires.
            let k = env.num_actions();
            for row in &mut env.mu {
                *row = vec![1.0 / k as f64; k];
            }
            for a in 0..k {
                let f = random_scorer(seed + 500, env.num_contexts(), k);
                let b = delta_f_lower_bound_check(&env, &f, a).unwrap();
                assert!(b.holds, "seed {seed} action {a}: {b:?}");
                checked += 1;
            }
            if checked >= 100 {
                break;
            }
        }
        assert!(checked >= 100);
    }

    #[test]
    fn delta_f_bound_requires_uniform_mu() {
        let mut env = two_context_env();
        env.mu = vec![vec![0.9, 0.1], vec![0.5, 0.5]];
        let f = TabularScorer::constant(2, 2, 0.5).unwrap();
        assert!(delta_f_lower_bound_check(&env, &f, 0).is_err());
    }

    #[test]
    fn grid_search_finds_indicator_decoder() {
        // Feedback equals the reward deterministically, so the best decoder
        // in any grid containing {0, 1} has a full gap.
        let env = two_context_env();
        let opt = grid_optimal_pair(&env, 0, &[0.0, 0.25, 0.5, 0.75, 1.0], 1 << 30).unwrap();
        assert!((opt.objective_abs - 0.25).abs() < 1e-12);
        assert!(((opt.psi_values[1] - opt.psi_values[0]).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_search_on_worked_example_separates_success_feedback() {
        let env = worked_example_env();
        let a_bar = 1;
        let opt =
            grid_optimal_pair(&env, a_bar, &[0.0, 0.25, 0.5, 0.75, 1.0], 10u128.pow(14)).unwrap();
        // Success feedback y = 2 vs failure feedback y = 1 must be fully split.
        assert!(((opt.psi_values[2] - opt.psi_values[1]).abs() - 1.0).abs() < 1e-12);
    }

    /// Brute-force joint enumeration, the semantics the fast search must match:
    /// lexicographic order over (f, psi) tables, keeping the first pair whose
    /// absolute factored objective is strictly larger than the incumbent's.
    fn brute_force_grid(env: &TabularEnv, a_bar: usize, grid: &[f64]) -> GridOptimum {
        let mut grid = grid.to_vec();
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        let tables = |len: usize| -> Vec<Vec<f64>> {
            let mut out = vec![vec![]];
            for _ in 0..len {
                let mut next = Vec::new();
                for t in &out {
                    for &v in &grid {
                        let mut t2 = t.clone();
                        t2.push(v);
                        next.push(t2);
                    }
                }
                out = next;
            }
            out
        };
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        for f_vals in tables(env.num_contexts()) {
            let f = TabularScorer::from_column(&f_vals, env.num_actions()).unwrap();
            for psi_vals in tables(env.num_feedbacks()) {
                let psi = TabularScorer::from_column(&psi_vals, env.num_actions()).unwrap();
                let obj = population_objective_factored(env, &f, &psi, a_bar)
                    .unwrap()
                    .abs();
                if best.as_ref().map_or(true, |(b, _, _)| obj > *b) {
                    best = Some((obj, f_vals.clone(), psi_vals));
                }
            }
        }
        let (_, f_values, psi_values) = best.unwrap();
        let f = TabularScorer::from_column(&f_values, env.num_actions()).unwrap();
        let psi = TabularScorer::from_column(&psi_values, env.num_actions()).unwrap();
        GridOptimum {
            objective_abs: population_objective(env, &f, &psi, a_bar).unwrap().abs(),
            f_values,
            psi_values,
        }
    }

    #[test]
    fn fast_grid_search_matches_brute_force() {
        // The attained optimum must match a full enumeration exactly (up to
        // float noise). The argmax tables themselves are only pinned up to
        // complement ties, which brute force resolves by last-bit accidents,
        // so only the achieved objective is compared.
        for seed in 0..12 {
            let env = random_env(seed + 300, 3, 3, 3);
            for a in 0..env.num_actions() {
                let fast = grid_optimal_pair(&env, a, &[0.0, 0.5, 1.0], 1 << 30).unwrap();
                let brute = brute_force_grid(&env, a, &[0.0, 0.5, 1.0]);
                assert!(
                    (fast.objective_abs - brute.objective_abs).abs() < 1e-12,
                    "seed {seed} action {a}: {} vs {}",
                    fast.objective_abs,
                    brute.objective_abs
                );
            }
        }
    }

    #[test]
    fn grid_search_beats_random_pairs() {
        let env = random_env(77, 5, 5, 3);
        let opt = grid_optimal_pair(&env, 1, &[0.0, 0.5, 1.0], 1 << 30).unwrap();
        for seed in 0..100 {
            let f = random_scorer(seed + 9000, env.num_contexts(), env.num_actions());
            let psi = random_scorer(seed + 9100, env.num_feedbacks(), env.num_actions());
            let obj = population_objective(&env, &f, &psi, 1).unwrap().abs();
            assert!(opt.objective_abs >= obj - 1e-12);
        }
    }

    #[test]
    fn grid_search_is_order_invariant() {
        let env = random_env(5, 4, 4, 3);
        let a = grid_optimal_pair(&env, 0, &[0.0, 0.25, 0.5, 0.75, 1.0], 1 << 30).unwrap();
        let b = grid_optimal_pair(&env, 0, &[1.0, 0.5, 0.25, 0.0, 0.75], 1 << 30).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_budget_is_enforced() {
        let env = worked_example_env();
        match grid_optimal_pair(&env, 0, &[0.0, 0.25, 0.5, 0.75, 1.0], 1000) {
            Err(IglError::BudgetExceeded { required, budget }) => {
                assert_eq!(budget, 1000);
                // 5^10 * 5^10
                assert_eq!(required, 5u128.pow(20));
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }
}
