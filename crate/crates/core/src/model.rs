//! Problem instances: actions, outcome distributions, rewards, and the agent's
//! type space.
//!
//! An [`Instance`] can only be obtained through [`validate_instance`], so every
//! other module may assume the structural ordering assumptions hold: action 0
//! is the zero-effort opt-out action, outcome 0 is the zero-reward outcome that
//! only the opt-out action can produce, and expected rewards strictly increase
//! with effort.

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::{dot, sum, Rational};

/// Instance description as parsed, before any structural check.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInstance {
    pub gammas: Vec<Rational>,
    pub rewards: Vec<Rational>,
    pub dist: Vec<Vec<Rational>>,
    pub types: TypeSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TypeSpace {
    Discrete(DiscreteTypes),
    /// Uniform on `[0, upper]`.
    Uniform {
        upper: Rational,
    },
    Tabulated(Tabulation),
}

/// Finite support `c_1 < ... < c_k` with probability masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTypes {
    pub support: Vec<Rational>,
    pub masses: Vec<Rational>,
}

/// A continuous distribution on `[0, grid.last()]` given at knots: the CDF is
/// interpolated linearly between knots, the density is constant on
/// `[grid[k], grid[k + 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulation {
    pub grid: Vec<Rational>,
    pub cdf: Vec<Rational>,
    pub density: Vec<Rational>,
}

impl DiscreteTypes {
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn position(&self, cost: &Rational) -> Option<usize> {
        self.support.iter().position(|c| c == cost)
    }
}

impl Tabulation {
    /// Index `k` of the cell `[grid[k], grid[k + 1])` holding `c`; the upper
    /// end point belongs to the last cell.
    pub fn cell(&self, c: &Rational) -> usize {
        let cells = self.grid.len() - 1;
        match self.grid.partition_point(|knot| knot <= c) {
            0 => 0,
            p => (p - 1).min(cells - 1),
        }
    }
}

impl TypeSpace {
    pub fn is_discrete(&self) -> bool {
        matches!(self, TypeSpace::Discrete(_))
    }

    pub fn as_discrete(&self) -> Option<&DiscreteTypes> {
        match self {
            TypeSpace::Discrete(d) => Some(d),
            _ => None,
        }
    }

    /// Upper end `c̄` of a continuous support.
    pub fn upper(&self) -> Option<&Rational> {
        match self {
            TypeSpace::Discrete(_) => None,
            TypeSpace::Uniform { upper } => Some(upper),
            TypeSpace::Tabulated(t) => t.grid.last(),
        }
    }

    /// CDF of a continuous type space, clamped outside the support.
    pub fn cdf(&self, c: &Rational) -> Option<Rational> {
        match self {
            TypeSpace::Discrete(_) => None,
            TypeSpace::Uniform { upper } => Some(if c.is_negative() {
                Rational::zero()
            } else if c >= upper {
                Rational::one()
            } else {
                c / upper
            }),
            TypeSpace::Tabulated(t) => {
                let (first, last) = (&t.grid[0], t.grid.last()?);
                if c <= first {
                    return Some(t.cdf[0].clone());
                }
                if c >= last {
                    return t.cdf.last().cloned();
                }
                let k = t.cell(c);
                let frac = (c - &t.grid[k]) / (&t.grid[k + 1] - &t.grid[k]);
                Some(&t.cdf[k] + frac * (&t.cdf[k + 1] - &t.cdf[k]))
            }
        }
    }

    /// Density of a continuous type space on its support.
    pub fn density(&self, c: &Rational) -> Option<Rational> {
        match self {
            TypeSpace::Discrete(_) => None,
            TypeSpace::Uniform { upper } => Some(upper.recip()),
            TypeSpace::Tabulated(t) => Some(t.density[t.cell(c)].clone()),
        }
    }
}

/// A structural assumption the raw instance fails, with the offending indices.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("shape: {0}")]
    Shape(String),
    #[error("effort of the opt-out action must be 0")]
    OptOutEffort,
    #[error(
        "efforts must satisfy 0 = gamma_0 < gamma_1 <= ... <= gamma_n (fails at action {action})"
    )]
    EffortOrder { action: usize },
    #[error("reward of outcome 0 must be 0")]
    ZeroOutcomeReward,
    #[error("rewards must be nondecreasing (fails at outcome {outcome})")]
    RewardOrder { outcome: usize },
    #[error("probability F[{action}][{outcome}] outside [0, 1]")]
    ProbabilityRange { action: usize, outcome: usize },
    #[error("row {action} of the outcome distribution sums to {sum}, not 1")]
    RowSum { action: usize, sum: Rational },
    #[error("the opt-out action must yield outcome 0 with probability 1")]
    OptOutDistribution,
    #[error("effortful action {action} must give outcome 0 probability 0")]
    ZeroOutcomeProbability { action: usize },
    #[error("expected rewards must strictly increase (fails at action {action})")]
    ExpectedRewardOrder { action: usize },
    #[error("type support must be nonempty")]
    EmptySupport,
    #[error("type support must be strictly increasing and nonnegative (fails at index {index})")]
    SupportOrder { index: usize },
    #[error("type mass at index {index} is negative")]
    NegativeMass { index: usize },
    #[error("type masses sum to {sum}, not 1")]
    MassSum { sum: Rational },
    #[error("upper end of the type support must be positive")]
    UpperBound,
    #[error("tabulation grid must start at 0 and strictly increase (fails at knot {index})")]
    GridOrder { index: usize },
    #[error("tabulated CDF must run nondecreasing from 0 to 1 (fails at knot {index})")]
    CdfOrder { index: usize },
    #[error("tabulated density must be positive (fails at knot {index})")]
    Density { index: usize },
}

impl Violation {
    /// Short stable name of the violated assumption.
    pub fn assumption(&self) -> &'static str {
        match self {
            Violation::Shape(_) => "shape",
            Violation::OptOutEffort | Violation::EffortOrder { .. } => "effort-order",
            Violation::ZeroOutcomeReward | Violation::RewardOrder { .. } => "reward-order",
            Violation::ProbabilityRange { .. } => "probability-range",
            Violation::RowSum { .. } => "row-stochastic",
            Violation::OptOutDistribution | Violation::ZeroOutcomeProbability { .. } => {
                "opt-out-monitoring"
            }
            Violation::ExpectedRewardOrder { .. } => "increasing-expected-rewards",
            Violation::EmptySupport
            | Violation::SupportOrder { .. }
            | Violation::NegativeMass { .. }
            | Violation::MassSum { .. } => "discrete-types",
            Violation::UpperBound => "upper-bound",
            Violation::GridOrder { .. }
            | Violation::CdfOrder { .. }
            | Violation::Density { .. } => "tabulated-types",
        }
    }

    /// Indices identifying where the assumption fails.
    pub fn witness(&self) -> Vec<usize> {
        match self {
            Violation::EffortOrder { action }
            | Violation::ZeroOutcomeProbability { action }
            | Violation::ExpectedRewardOrder { action }
            | Violation::RowSum { action, .. } => vec![*action],
            Violation::RewardOrder { outcome } => vec![*outcome],
            Violation::ProbabilityRange { action, outcome } => vec![*action, *outcome],
            Violation::SupportOrder { index }
            | Violation::NegativeMass { index }
            | Violation::GridOrder { index }
            | Violation::CdfOrder { index }
            | Violation::Density { index } => vec![*index],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("action {action} out of range (instance has {actions} actions)")]
    ActionOutOfRange { action: usize, actions: usize },
    #[error("payment vector has {got} entries, expected {expected}")]
    PaymentLength { expected: usize, got: usize },
    #[error("payment for outcome {outcome} is negative")]
    NegativePayment { outcome: usize },
}

/// A validated principal-agent instance. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    gammas: Vec<Rational>,
    rewards: Vec<Rational>,
    dist: Vec<Vec<Rational>>,
    types: TypeSpace,
    expected_rewards: Vec<Rational>,
}

pub fn validate_instance(raw: RawInstance) -> Result<Instance, Violation> {
    let RawInstance {
        gammas,
        rewards,
        dist,
        types,
    } = raw;

    if gammas.is_empty() {
        return Err(Violation::Shape(
            "at least the opt-out action is required".into(),
        ));
    }
    if rewards.is_empty() {
        return Err(Violation::Shape(
            "at least the zero outcome is required".into(),
        ));
    }
    if dist.len() != gammas.len() {
        return Err(Violation::Shape(format!(
            "{} distribution rows for {} actions",
            dist.len(),
            gammas.len()
        )));
    }
    if let Some(i) = dist.iter().position(|row| row.len() != rewards.len()) {
        return Err(Violation::Shape(format!(
            "distribution row {i} has {} entries for {} outcomes",
            dist[i].len(),
            rewards.len()
        )));
    }

    if !gammas[0].is_zero() {
        return Err(Violation::OptOutEffort);
    }
    for i in 1..gammas.len() {
        let ok = if i == 1 {
            gammas[1] > gammas[0]
        } else {
            gammas[i] >= gammas[i - 1]
        };
        if !ok {
            return Err(Violation::EffortOrder { action: i });
        }
    }

    if !rewards[0].is_zero() {
        return Err(Violation::ZeroOutcomeReward);
    }

    for (i, row) in dist.iter().enumerate() {
        if let Some(j) = row
            .iter()
            .position(|p| p.is_negative() || *p > Rational::one())
        {
            return Err(Violation::ProbabilityRange {
                action: i,
                outcome: j,
            });
        }
        let total = sum(row);
        if !total.is_one() {
            return Err(Violation::RowSum {
                action: i,
                sum: total,
            });
        }
    }
    if !dist[0][0].is_one() {
        return Err(Violation::OptOutDistribution);
    }
    if let Some(i) = (1..dist.len()).find(|&i| !dist[i][0].is_zero()) {
        return Err(Violation::ZeroOutcomeProbability { action: i });
    }

    let expected_rewards: Vec<Rational> = dist.iter().map(|row| dot(row, &rewards)).collect();
    if let Some(i) =
        (1..expected_rewards.len()).find(|&i| expected_rewards[i] <= expected_rewards[i - 1])
    {
        return Err(Violation::ExpectedRewardOrder { action: i });
    }
    // Checked after expected rewards: an unordered reward vector usually shows
    // up first as a non-increasing expected reward.
    if let Some(j) = (1..rewards.len()).find(|&j| rewards[j] < rewards[j - 1]) {
        return Err(Violation::RewardOrder { outcome: j });
    }

    validate_types(&types)?;

    Ok(Instance {
        gammas,
        rewards,
        dist,
        types,
        expected_rewards,
    })
}

fn validate_types(types: &TypeSpace) -> Result<(), Violation> {
    match types {
        TypeSpace::Discrete(d) => {
            if d.support.is_empty() {
                return Err(Violation::EmptySupport);
            }
            if d.masses.len() != d.support.len() {
                return Err(Violation::Shape(format!(
                    "{} masses for {} support points",
                    d.masses.len(),
                    d.support.len()
                )));
            }
            if d.support[0].is_negative() {
                return Err(Violation::SupportOrder { index: 0 });
            }
            if let Some(k) = (1..d.support.len()).find(|&k| d.support[k] <= d.support[k - 1]) {
                return Err(Violation::SupportOrder { index: k });
            }
            if let Some(k) = d.masses.iter().position(|p| p.is_negative()) {
                return Err(Violation::NegativeMass { index: k });
            }
            let total = sum(&d.masses);
            if !total.is_one() {
                return Err(Violation::MassSum { sum: total });
            }
        }
        TypeSpace::Uniform { upper } => {
            if !upper.is_positive() {
                return Err(Violation::UpperBound);
            }
        }
        TypeSpace::Tabulated(t) => {
            if t.grid.len() < 2 {
                return Err(Violation::Shape(
                    "tabulation needs at least two knots".into(),
                ));
            }
            if t.cdf.len() != t.grid.len() || t.density.len() != t.grid.len() {
                return Err(Violation::Shape(
                    "tabulation grid, cdf and density lengths differ".into(),
                ));
            }
            if !t.grid[0].is_zero() {
                return Err(Violation::GridOrder { index: 0 });
            }
            if let Some(k) = (1..t.grid.len()).find(|&k| t.grid[k] <= t.grid[k - 1]) {
                return Err(Violation::GridOrder { index: k });
            }
            if !t.cdf[0].is_zero() {
                return Err(Violation::CdfOrder { index: 0 });
            }
            if let Some(k) = (1..t.cdf.len()).find(|&k| t.cdf[k] < t.cdf[k - 1]) {
                return Err(Violation::CdfOrder { index: k });
            }
            if !t.cdf[t.cdf.len() - 1].is_one() {
                return Err(Violation::CdfOrder {
                    index: t.cdf.len() - 1,
                });
            }
            if let Some(k) = t.density.iter().position(|g| !g.is_positive()) {
                return Err(Violation::Density { index: k });
            }
        }
    }
    Ok(())
}

impl Instance {
    /// Number of effortful actions `n`; actions are `0..=n`.
    pub fn n(&self) -> usize {
        self.gammas.len() - 1
    }

    /// Index of the last outcome `m`; outcomes are `0..=m`.
    pub fn m(&self) -> usize {
        self.rewards.len() - 1
    }

    pub fn num_actions(&self) -> usize {
        self.gammas.len()
    }

    pub fn num_outcomes(&self) -> usize {
        self.rewards.len()
    }

    pub fn gammas(&self) -> &[Rational] {
        &self.gammas
    }

    pub fn gamma(&self, action: usize) -> &Rational {
        &self.gammas[action]
    }

    pub fn rewards(&self) -> &[Rational] {
        &self.rewards
    }

    pub fn dist(&self) -> &[Vec<Rational>] {
        &self.dist
    }

    pub fn row(&self, action: usize) -> &[Rational] {
        &self.dist[action]
    }

    pub fn types(&self) -> &TypeSpace {
        &self.types
    }

    pub fn expected_rewards(&self) -> &[Rational] {
        &self.expected_rewards
    }

    /// `R_i = sum_j F[i][j] r_j`.
    pub fn expected_reward(&self, action: usize) -> Result<&Rational, ModelError> {
        self.check_action(action)?;
        Ok(&self.expected_rewards[action])
    }

    /// `T_i = sum_j F[i][j] t_j` for a nonnegative payment vector `t`.
    pub fn expected_transfer(
        &self,
        payments: &[Rational],
        action: usize,
    ) -> Result<Rational, ModelError> {
        self.check_action(action)?;
        self.check_payment_vector(payments)?;
        Ok(self.transfer(payments, action))
    }

    /// Unchecked variant of [`Instance::expected_transfer`] for validated inputs.
    pub(crate) fn transfer(&self, payments: &[Rational], action: usize) -> Rational {
        dot(&self.dist[action], payments)
    }

    pub fn check_payment_vector(&self, payments: &[Rational]) -> Result<(), ModelError> {
        if payments.len() != self.num_outcomes() {
            return Err(ModelError::PaymentLength {
                expected: self.num_outcomes(),
                got: payments.len(),
            });
        }
        if let Some(j) = payments.iter().position(|t| t.is_negative()) {
            return Err(ModelError::NegativePayment { outcome: j });
        }
        Ok(())
    }

    pub fn check_action(&self, action: usize) -> Result<(), ModelError> {
        if action >= self.num_actions() {
            return Err(ModelError::ActionOutOfRange {
                action,
                actions: self.num_actions(),
            });
        }
        Ok(())
    }

    /// The same instance with a different type space, re-validated.
    pub fn with_types(&self, types: TypeSpace) -> Result<Instance, Violation> {
        validate_instance(RawInstance {
            types,
            ..self.to_raw()
        })
    }

    pub fn to_raw(&self) -> RawInstance {
        RawInstance {
            gammas: self.gammas.clone(),
            rewards: self.rewards.clone(),
            dist: self.dist.clone(),
            types: self.types.clone(),
        }
    }
}

/// An allocation together with one nonnegative payment vector per allocated
/// type (per support point for discrete types, per breakpoint for
/// piecewise-constant rules).
#[derive(Debug, Clone, PartialEq)]
pub struct Contract<A> {
    pub allocation: A,
    pub payments: Vec<Vec<Rational>>,
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::rational::{int, ratio};

    pub fn running_raw() -> RawInstance {
        RawInstance {
            gammas: vec![int(0), int(1), int(3), int(10)],
            rewards: vec![int(0), int(10), int(30)],
            dist: vec![
                vec![int(1), int(0), int(0)],
                vec![int(0), int(1), int(0)],
                vec![int(0), ratio(1, 2), ratio(1, 2)],
                vec![int(0), int(0), int(1)],
            ],
            types: TypeSpace::Discrete(DiscreteTypes {
                support: vec![int(1), int(4)],
                masses: vec![ratio(1, 2), ratio(1, 2)],
            }),
        }
    }

    pub fn running() -> Instance {
        validate_instance(running_raw()).unwrap()
    }

    /// Random small instance: integer efforts and rewards, distributions with
    /// denominators up to 12, discrete types with up to `max_types` points.
    pub fn random_discrete(
        seed: u64,
        max_actions: usize,
        max_outcomes: usize,
        max_types: usize,
    ) -> Instance {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        loop {
            let n = rng.gen_range(1..=max_actions);
            let m = rng.gen_range(1..=max_outcomes);
            let k = rng.gen_range(1..=max_types);
            let raw = random_actions(&mut rng, n, m);
            let mut support: Vec<i64> = (1..=8).collect();
            for i in (1..support.len()).rev() {
                support.swap(i, rng.gen_range(0..=i));
            }
            let mut support: Vec<i64> = support[..k].to_vec();
            support.sort_unstable();
            let weights: Vec<i64> = (0..k).map(|_| rng.gen_range(1..=4)).collect();
            let total: i64 = weights.iter().sum();
            let types = TypeSpace::Discrete(DiscreteTypes {
                support: support.iter().map(|&c| ratio(c, 2)).collect(),
                masses: weights.iter().map(|&w| ratio(w, total)).collect(),
            });
            if let Ok(inst) = validate_instance(RawInstance { types, ..raw }) {
                return inst;
            }
        }
    }

    /// Action side of a random instance; the type space is a placeholder.
    pub fn random_actions(rng: &mut impl rand::Rng, n: usize, m: usize) -> RawInstance {
        let mut rewards = vec![int(0)];
        for _ in 0..m {
            let last = rewards.last().unwrap().clone();
            rewards.push(last + int(rng.gen_range(1..=8)));
        }
        let mut gammas = vec![int(0)];
        for _ in 0..n {
            let last = gammas.last().unwrap().clone();
            gammas.push(last + int(rng.gen_range(1..=3)));
        }
        let mut opt_out = vec![int(0); m + 1];
        opt_out[0] = int(1);
        let mut rows: Vec<Vec<Rational>> = (0..n)
            .map(|_| loop {
                let w: Vec<i64> = (0..m).map(|_| rng.gen_range(0..=4)).collect();
                let total: i64 = w.iter().sum();
                if total > 0 {
                    let mut row = vec![int(0)];
                    row.extend(w.iter().map(|&x| ratio(x, total)));
                    break row;
                }
            })
            .collect();
        rows.sort_by_key(|row| dot(row, &rewards));
        let mut dist = vec![opt_out];
        dist.extend(rows);
        RawInstance {
            gammas,
            rewards,
            dist,
            types: TypeSpace::Uniform { upper: int(1) },
        }
    }
}
