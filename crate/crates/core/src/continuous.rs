//! Types drawn from an interval `[0, c̄]`.
//!
//! Implementable rules are monotone and piecewise constant, so a rule is a list
//! of interior breakpoints `0 < z_1 < ... < z_ℓ < c̄` and actions
//! `a_0 >= ... >= a_ℓ`, with `a_i` on `[z_i, z_{i+1})` and `x(c̄) = a_ℓ`.
//! Implementability reduces to a finite program over one payment vector per
//! piece. Each piece `i` is tested from both ends: its left end `z_i` (the
//! right copy of that breakpoint) and its right end `z_{i+1}` (the left copy,
//! which for the last piece is `c̄` itself).
//!
//! The virtual cost `φ(c) = c + G(c)/g(c)` is exact for uniform types. For
//! tabulated types the CDF is piecewise linear and the density piecewise
//! constant, so `φ` is piecewise linear with exact rational inverse.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::discrete::{DiscreteAllocation, PlanFailure, PlanVerdict};
use crate::lp::{self, FarkasCertificate, LinearProgram, LpError, LpStatus, Relation, Sense};
use crate::model::{Contract, Instance, ModelError, Tabulation, TypeSpace};
use crate::rational::{ratio, sum, Rational};

/// Absolute slack allowed when checking that a tabulated `φ` is nondecreasing.
pub fn regularity_tolerance() -> Rational {
    ratio(1, 1_000_000_000)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContinuousError {
    #[error("instance has a discrete type space")]
    NotContinuous,
    #[error("type space is not uniform")]
    NotUniform,
    #[error("type {cost} lies outside the support")]
    OutOfSupport { cost: Rational },
    #[error("rule: {0}")]
    RuleShape(String),
    #[error("rule is not monotone: piece {piece} gets a higher action than piece {}", piece - 1)]
    NotPiecewiseMonotone { piece: usize },
    #[error("virtual cost decreases at knot {knot}")]
    NotRegular { knot: usize },
    #[error("action {action} violates gamma_i * c_max > R_i")]
    AssumptionViolated { action: usize },
    #[error("marginal returns increase at action {action}")]
    NoDmr { action: usize },
    #[error("rule is not implementable")]
    NotImplementable(Box<ContinuousDeviationPlan>),
    #[error("no payments with zero pay on outcome 0 implement the rule")]
    PinnedInfeasible,
    #[error("payment identity fails at breakpoint {breakpoint}: {lhs} != {rhs}")]
    IdentityViolated {
        breakpoint: usize,
        lhs: Box<Rational>,
        rhs: Box<Rational>,
    },
    #[error("{copy:?} weights of breakpoint {index} sum to {sum}, not 1")]
    NotNormalized {
        copy: BreakpointCopy,
        index: usize,
        sum: Rational,
    },
    #[error("deviation plan has a negative weight")]
    NegativeWeight,
    #[error("{got} payment vectors for {expected} pieces")]
    PaymentCount { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Monotone piecewise-constant allocation: `actions[i]` on
/// `[breakpoints[i-1], breakpoints[i])`, with the outer ends at 0 and `c̄`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PiecewiseConstantRule {
    breakpoints: Vec<Rational>,
    actions: Vec<usize>,
}

impl PiecewiseConstantRule {
    /// Checks shape only: one more action than breakpoints, breakpoints
    /// strictly increasing.
    pub fn new(breakpoints: Vec<Rational>, actions: Vec<usize>) -> Result<Self, ContinuousError> {
        if actions.len() != breakpoints.len() + 1 {
            return Err(ContinuousError::RuleShape(format!(
                "{} actions for {} breakpoints",
                actions.len(),
                breakpoints.len()
            )));
        }
        if let Some(i) = (1..breakpoints.len()).find(|&i| breakpoints[i] <= breakpoints[i - 1]) {
            return Err(ContinuousError::RuleShape(format!(
                "breakpoint {} does not exceed breakpoint {}",
                i + 1,
                i
            )));
        }
        Ok(PiecewiseConstantRule {
            breakpoints,
            actions,
        })
    }

    pub fn constant(action: usize) -> Self {
        PiecewiseConstantRule {
            breakpoints: Vec::new(),
            actions: vec![action],
        }
    }

    /// Interior breakpoints `z_1..z_ℓ`.
    pub fn breakpoints(&self) -> &[Rational] {
        &self.breakpoints
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn num_pieces(&self) -> usize {
        self.actions.len()
    }

    pub fn is_monotone(&self) -> bool {
        self.actions.windows(2).all(|w| w[0] >= w[1])
    }

    /// Same allocation with equal adjacent pieces merged.
    pub fn normalized(&self) -> Self {
        let mut breakpoints = Vec::new();
        let mut actions = vec![self.actions[0]];
        for (z, &a) in self.breakpoints.iter().zip(&self.actions[1..]) {
            if Some(&a) != actions.last() {
                breakpoints.push(z.clone());
                actions.push(a);
            }
        }
        PiecewiseConstantRule {
            breakpoints,
            actions,
        }
    }

    /// Index of the piece containing `c`; `c̄` belongs to the last piece.
    pub fn piece_of(&self, c: &Rational) -> usize {
        self.breakpoints.partition_point(|z| z <= c)
    }

    pub fn action_at(&self, c: &Rational) -> usize {
        self.actions[self.piece_of(c)]
    }

    /// All points `z_0 = 0, z_1, ..., z_ℓ, z_{ℓ+1} = upper`.
    pub fn points(&self, upper: &Rational) -> Vec<Rational> {
        let mut out = Vec::with_capacity(self.breakpoints.len() + 2);
        out.push(Rational::zero());
        out.extend(self.breakpoints.iter().cloned());
        out.push(upper.clone());
        out
    }
}

fn upper(inst: &Instance) -> Result<&Rational, ContinuousError> {
    inst.types().upper().ok_or(ContinuousError::NotContinuous)
}

fn check_rule(inst: &Instance, rule: &PiecewiseConstantRule) -> Result<(), ContinuousError> {
    let top = upper(inst)?;
    if let Some(z) = rule
        .breakpoints
        .iter()
        .find(|z| !z.is_positive() || *z >= top)
    {
        return Err(ContinuousError::RuleShape(format!(
            "breakpoint {z} outside the open interval (0, {top})"
        )));
    }
    for &a in &rule.actions {
        inst.check_action(a)?;
    }
    if let Some(piece) = (1..rule.actions.len()).find(|&i| rule.actions[i] > rule.actions[i - 1]) {
        return Err(ContinuousError::NotPiecewiseMonotone { piece });
    }
    Ok(())
}

/// Which copy of a breakpoint a deviation-plan weight belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BreakpointCopy {
    /// Left end `z_i` of piece `i`.
    Right,
    /// Right end `z_{i+1}` of piece `i`.
    Left,
}

/// Row of the implementability program for (copy, piece, reported piece, action).
pub fn lp2_row(
    pieces: usize,
    num_actions: usize,
    copy: BreakpointCopy,
    piece: usize,
    report: usize,
    action: usize,
) -> usize {
    let family = match copy {
        BreakpointCopy::Right => 0,
        BreakpointCopy::Left => pieces * pieces * num_actions,
    };
    family + (piece * pieces + report) * num_actions + action
}

fn payment_var(inst: &Instance, piece: usize, outcome: usize) -> usize {
    piece * inst.num_outcomes() + outcome
}

/// Implementability program of a monotone rule, after merging equal pieces.
///
/// Variables: `(ℓ+1)(m+1)` nonnegative payments, piece-major. Rows: for each
/// copy (right family first), piece `i`, reported piece `i'` and action `k`,
///
/// ```text
/// T^i_{a_i} - T^{i'}_k >= (γ_{a_i} - γ_k) z
/// ```
///
/// with `z = z_i` for the right copy and `z = z_{i+1}` for the left copy.
/// With `pin_zero_outcome`, equality rows `t^i_0 = 0` follow.
pub fn build_lp2(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
    pin_zero_outcome: bool,
) -> Result<LinearProgram, ContinuousError> {
    check_rule(inst, rule)?;
    let rule = rule.normalized();
    let points = rule.points(upper(inst)?);
    let pieces = rule.num_pieces();
    let mut lp = LinearProgram::nonnegative(pieces * inst.num_outcomes());
    for copy in [BreakpointCopy::Right, BreakpointCopy::Left] {
        for (i, &a) in rule.actions.iter().enumerate() {
            let z = match copy {
                BreakpointCopy::Right => &points[i],
                BreakpointCopy::Left => &points[i + 1],
            };
            for report in 0..pieces {
                for k in 0..inst.num_actions() {
                    let mut coeffs = vec![Rational::zero(); lp.num_vars()];
                    for (j, p) in inst.row(a).iter().enumerate() {
                        coeffs[payment_var(inst, i, j)] += p;
                    }
                    for (j, p) in inst.row(k).iter().enumerate() {
                        coeffs[payment_var(inst, report, j)] -= p;
                    }
                    lp.add_constraint(coeffs, Relation::Ge, (inst.gamma(a) - inst.gamma(k)) * z);
                }
            }
        }
    }
    if pin_zero_outcome {
        for i in 0..pieces {
            let mut coeffs = vec![Rational::zero(); lp.num_vars()];
            coeffs[payment_var(inst, i, 0)] = Rational::one();
            lp.add_constraint(coeffs, Relation::Eq, Rational::zero());
        }
    }
    Ok(lp)
}

/// Weights over both copies of every piece: `right[(i, i', k)]` for the left
/// end of piece `i`, `left[(i+1, i', k)]` for its right end.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContinuousDeviationPlan {
    right: BTreeMap<(usize, usize, usize), Rational>,
    left: BTreeMap<(usize, usize, usize), Rational>,
}

impl ContinuousDeviationPlan {
    pub fn new() -> Self {
        Self::default()
    }

    fn map(&self, copy: BreakpointCopy) -> &BTreeMap<(usize, usize, usize), Rational> {
        match copy {
            BreakpointCopy::Right => &self.right,
            BreakpointCopy::Left => &self.left,
        }
    }

    /// Sets a weight. `index` is the piece for [`BreakpointCopy::Right`] and the piece
    /// plus one for [`BreakpointCopy::Left`].
    pub fn set(
        &mut self,
        copy: BreakpointCopy,
        index: usize,
        report: usize,
        action: usize,
        weight: Rational,
    ) {
        let map = match copy {
            BreakpointCopy::Right => &mut self.right,
            BreakpointCopy::Left => &mut self.left,
        };
        if weight.is_zero() {
            map.remove(&(index, report, action));
        } else {
            map.insert((index, report, action), weight);
        }
    }

    pub fn weight(
        &self,
        copy: BreakpointCopy,
        index: usize,
        report: usize,
        action: usize,
    ) -> Rational {
        self.map(copy)
            .get(&(index, report, action))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn entries(
        &self,
        copy: BreakpointCopy,
    ) -> impl Iterator<Item = (&(usize, usize, usize), &Rational)> {
        self.map(copy).iter()
    }

    pub fn copy_sum(&self, copy: BreakpointCopy, index: usize) -> Rational {
        sum(self
            .map(copy)
            .range((index, 0, 0)..=(index, usize::MAX, usize::MAX))
            .map(|(_, w)| w))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContinuousImplementability {
    Implementable {
        rule: PiecewiseConstantRule,
        payments: Vec<Vec<Rational>>,
        pivots: usize,
    },
    NotImplementable {
        rule: PiecewiseConstantRule,
        plan: ContinuousDeviationPlan,
        pivots: usize,
    },
}

impl ContinuousImplementability {
    pub fn is_implementable(&self) -> bool {
        matches!(self, ContinuousImplementability::Implementable { .. })
    }
}

fn split_payments(inst: &Instance, point: &[Rational]) -> Vec<Vec<Rational>> {
    point
        .chunks(inst.num_outcomes())
        .map(<[Rational]>::to_vec)
        .collect()
}

/// Decides implementability of a rule. The reported rule has equal adjacent
/// pieces merged; payments and plan indices refer to its pieces.
pub fn check_implementable_cont(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
) -> Result<ContinuousImplementability, ContinuousError> {
    let lp = build_lp2(inst, rule, false)?;
    let rule = rule.normalized();
    let outcome = lp::solve(&lp)?;
    Ok(match outcome.status {
        LpStatus::Optimal(sol) => ContinuousImplementability::Implementable {
            rule,
            payments: split_payments(inst, &sol.point),
            pivots: outcome.pivots,
        },
        LpStatus::Infeasible(cert) => ContinuousImplementability::NotImplementable {
            plan: continuous_plan_from_farkas(inst, &rule, &cert),
            rule,
            pivots: outcome.pivots,
        },
        LpStatus::Unbounded => unreachable!("the implementability program has a zero objective"),
    })
}

/// Normalises Farkas multipliers of the unpinned program: off-diagonal weights
/// are divided by the largest per-copy sum and the rest goes to obedience.
pub fn continuous_plan_from_farkas(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
    cert: &FarkasCertificate,
) -> ContinuousDeviationPlan {
    let pieces = rule.num_pieces();
    let num_actions = inst.num_actions();
    let raw = |copy: BreakpointCopy, i: usize, report: usize, k: usize| {
        &cert.multipliers[lp2_row(pieces, num_actions, copy, i, report, k)]
    };
    let mut scale = Rational::zero();
    for copy in [BreakpointCopy::Right, BreakpointCopy::Left] {
        for i in 0..pieces {
            let s = sum((0..pieces)
                .flat_map(|r| (0..num_actions).map(move |k| (r, k)))
                .map(|(r, k)| raw(copy, i, r, k)));
            if s > scale {
                scale = s;
            }
        }
    }
    if scale.is_zero() {
        scale = Rational::one();
    }
    let mut plan = ContinuousDeviationPlan::new();
    for copy in [BreakpointCopy::Right, BreakpointCopy::Left] {
        for (i, &a) in rule.actions.iter().enumerate() {
            let index = match copy {
                BreakpointCopy::Right => i,
                BreakpointCopy::Left => i + 1,
            };
            let mut off_diagonal = Rational::zero();
            for report in 0..pieces {
                for k in 0..num_actions {
                    if (report, k) == (i, a) {
                        continue;
                    }
                    let w = raw(copy, i, report, k) / &scale;
                    off_diagonal += &w;
                    plan.set(copy, index, report, k, w);
                }
            }
            plan.set(copy, index, i, a, Rational::one() - off_diagonal);
        }
    }
    plan
}

/// Exact check of both non-implementability conditions: averaged over the
/// two copies, deviations into each piece dominate its prescribed outcome
/// distribution, and the plan's joint cost is strictly below truthful.
pub fn verify_continuous_plan(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
    plan: &ContinuousDeviationPlan,
) -> Result<PlanVerdict, ContinuousError> {
    check_rule(inst, rule)?;
    let points = rule.points(upper(inst)?);
    let pieces = rule.num_pieces();
    for copy in [BreakpointCopy::Right, BreakpointCopy::Left] {
        for (&(index, report, k), w) in plan.entries(copy) {
            if w.is_negative() {
                return Err(ContinuousError::NegativeWeight);
            }
            let index_ok = match copy {
                BreakpointCopy::Right => index < pieces,
                BreakpointCopy::Left => (1..=pieces).contains(&index),
            };
            if !index_ok || report >= pieces || k >= inst.num_actions() {
                return Err(ContinuousError::RuleShape(format!(
                    "plan entry ({copy:?}, {index}, {report}, {k}) outside the rule"
                )));
            }
        }
    }
    for i in 0..pieces {
        for (copy, index) in [(BreakpointCopy::Right, i), (BreakpointCopy::Left, i + 1)] {
            let total = plan.copy_sum(copy, index);
            if !total.is_one() {
                return Err(ContinuousError::NotNormalized {
                    copy,
                    index,
                    sum: total,
                });
            }
        }
    }

    let half = ratio(1, 2);
    for target in 0..pieces {
        let mut deviated = vec![Rational::zero(); inst.num_outcomes()];
        for copy in [BreakpointCopy::Right, BreakpointCopy::Left] {
            for (&(_, report, k), w) in plan.entries(copy) {
                if report != target {
                    continue;
                }
                for (acc, p) in deviated.iter_mut().zip(inst.row(k)) {
                    *acc += &half * w * p;
                }
            }
        }
        let prescribed = inst.row(rule.actions[target]);
        if let Some(j) = (0..inst.num_outcomes()).find(|&j| deviated[j] < prescribed[j]) {
            return Ok(PlanVerdict::Invalid(PlanFailure::Dominance {
                type_index: target,
                outcome: j,
                deviated: deviated[j].clone(),
                prescribed: prescribed[j].clone(),
            }));
        }
    }

    let truthful_cost = sum(&rule
        .actions
        .iter()
        .enumerate()
        .map(|(i, &a)| inst.gamma(a) * (&points[i] + &points[i + 1]))
        .collect::<Vec<_>>());
    let mut deviation_cost = Rational::zero();
    for (&(i, _, k), w) in plan.entries(BreakpointCopy::Right) {
        deviation_cost += w * inst.gamma(k) * &points[i];
    }
    for (&(index, _, k), w) in plan.entries(BreakpointCopy::Left) {
        deviation_cost += w * inst.gamma(k) * &points[index];
    }
    Ok(if deviation_cost < truthful_cost {
        PlanVerdict::Valid {
            truthful_cost,
            deviation_cost,
        }
    } else {
        PlanVerdict::Invalid(PlanFailure::CostNotLower {
            truthful_cost,
            deviation_cost,
        })
    })
}

/// Probability mass `G(z_{i+1}) - G(z_i)` of each piece.
pub fn piece_masses(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
) -> Result<Vec<Rational>, ContinuousError> {
    let points = rule.points(upper(inst)?);
    let cdf: Vec<Rational> = points
        .iter()
        .map(|z| inst.types().cdf(z).ok_or(ContinuousError::NotContinuous))
        .collect::<Result<_, _>>()?;
    Ok(cdf.windows(2).map(|w| &w[1] - &w[0]).collect())
}

fn check_payments(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
    payments: &[Vec<Rational>],
) -> Result<(), ContinuousError> {
    check_rule(inst, rule)?;
    if payments.len() != rule.num_pieces() {
        return Err(ContinuousError::PaymentCount {
            expected: rule.num_pieces(),
            got: payments.len(),
        });
    }
    for t in payments {
        inst.check_payment_vector(t)?;
    }
    Ok(())
}

/// Checks the jump condition at every interior breakpoint:
/// `T^{i}_{a_i} - T^{i+1}_{a_{i+1}} = z_{i+1} (γ_{a_i} - γ_{a_{i+1}})`.
pub fn payment_identity(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
    payments: &[Vec<Rational>],
) -> Result<(), ContinuousError> {
    check_payments(inst, rule, payments)?;
    let a = &rule.actions;
    for (i, z) in rule.breakpoints.iter().enumerate() {
        let lhs = inst.transfer(&payments[i], a[i]) - inst.transfer(&payments[i + 1], a[i + 1]);
        let rhs = z * (inst.gamma(a[i]) - inst.gamma(a[i + 1]));
        if lhs != rhs {
            return Err(ContinuousError::IdentityViolated {
                breakpoint: i + 1,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            });
        }
    }
    Ok(())
}

/// Expected principal utility `E[R_{x(c)} - T^c_{x(c)}]`.
pub fn expected_revenue_cont(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
    payments: &[Vec<Rational>],
) -> Result<Rational, ContinuousError> {
    check_payments(inst, rule, payments)?;
    let masses = piece_masses(inst, rule)?;
    Ok(sum(&rule
        .actions
        .iter()
        .zip(payments)
        .zip(&masses)
        .map(|((&a, t), mass)| mass * (&inst.expected_rewards()[a] - inst.transfer(t, a)))
        .collect::<Vec<_>>()))
}

/// Expected virtual welfare `E[R_{x(c)} - φ(c) γ_{x(c)}]`, using
/// `∫ φ g = G(c) c` on each piece.
pub fn expected_virtual_welfare(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
) -> Result<Rational, ContinuousError> {
    check_rule(inst, rule)?;
    let points = rule.points(upper(inst)?);
    let cdf = |z: &Rational| inst.types().cdf(z).expect("continuous type space");
    Ok(sum(&rule
        .actions
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let (lo, hi) = (&points[i], &points[i + 1]);
            let (g_lo, g_hi) = (cdf(lo), cdf(hi));
            &inst.expected_rewards()[a] * (&g_hi - &g_lo) - inst.gamma(a) * (g_hi * hi - g_lo * lo)
        })
        .collect::<Vec<_>>()))
}

/// Utility of the highest-cost type `c̄` under truthful obedience.
pub fn top_type_utility(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
    payments: &[Vec<Rational>],
) -> Result<Rational, ContinuousError> {
    check_payments(inst, rule, payments)?;
    let last = rule.num_pieces() - 1;
    let a = rule.actions[last];
    Ok(inst.transfer(&payments[last], a) - inst.gamma(a) * upper(inst)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousContract {
    pub contract: Contract<PiecewiseConstantRule>,
    pub expected_payment: Rational,
    pub revenue: Rational,
    pub pivots: usize,
}

impl Contract<PiecewiseConstantRule> {
    /// Payments offered to type `c`: those of the piece containing it.
    pub fn payments_for(&self, c: &Rational) -> &[Rational] {
        &self.payments[self.allocation.piece_of(c)]
    }
}

/// Payments minimising the expected transfer among those implementing the
/// (merged) rule.
pub fn min_payment_contract_cont(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
    pin_zero_outcome: bool,
) -> Result<ContinuousContract, ContinuousError> {
    let mut lp = build_lp2(inst, rule, pin_zero_outcome)?;
    let rule = rule.normalized();
    let masses = piece_masses(inst, &rule)?;
    let mut objective = vec![Rational::zero(); lp.num_vars()];
    for (i, (&a, mass)) in rule.actions.iter().zip(&masses).enumerate() {
        for (j, p) in inst.row(a).iter().enumerate() {
            objective[payment_var(inst, i, j)] += mass * p;
        }
    }
    lp.set_objective(Sense::Min, objective);
    let outcome = lp::solve(&lp)?;
    match outcome.status {
        LpStatus::Optimal(sol) => {
            let payments = split_payments(inst, &sol.point);
            let revenue = expected_revenue_cont(inst, &rule, &payments)?;
            Ok(ContinuousContract {
                contract: Contract {
                    allocation: rule,
                    payments,
                },
                expected_payment: sol.objective,
                revenue,
                pivots: outcome.pivots,
            })
        }
        LpStatus::Infeasible(_) if pin_zero_outcome => Err(ContinuousError::PinnedInfeasible),
        LpStatus::Infeasible(cert) => Err(ContinuousError::NotImplementable(Box::new(
            continuous_plan_from_farkas(inst, &rule, &cert),
        ))),
        LpStatus::Unbounded => unreachable!("payments are bounded below by zero"),
    }
}

/// `φ(c) = c + G(c)/g(c)` on `[0, c̄]`.
pub fn virtual_cost(ts: &TypeSpace, c: &Rational) -> Result<Rational, ContinuousError> {
    let top = ts.upper().ok_or(ContinuousError::NotContinuous)?;
    if c.is_negative() || c > top {
        return Err(ContinuousError::OutOfSupport { cost: c.clone() });
    }
    Ok(match ts {
        TypeSpace::Uniform { .. } => c * Rational::from_integer(2.into()),
        _ => {
            let g = ts.density(c).ok_or(ContinuousError::NotContinuous)?;
            c + ts.cdf(c).ok_or(ContinuousError::NotContinuous)? / g
        }
    })
}

/// Value of `φ` just below knot `k + 1`, from inside cell `k`.
fn left_limit(t: &Tabulation, k: usize) -> Rational {
    &t.grid[k + 1] + &t.cdf[k + 1] / &t.density[k]
}

fn knot_value(t: &Tabulation, k: usize) -> Rational {
    let cell = k.min(t.grid.len() - 2);
    &t.grid[k] + &t.cdf[k] / &t.density[cell]
}

/// First knot where a tabulated `φ` drops by more than the tolerance.
pub fn regularity_violation(ts: &TypeSpace) -> Option<usize> {
    let TypeSpace::Tabulated(t) = ts else {
        return None;
    };
    let tol = regularity_tolerance();
    (1..t.grid.len() - 1).find(|&k| left_limit(t, k - 1) - knot_value(t, k) > tol)
}

/// Whether `φ` is nondecreasing; within a tabulation cell it always is, so only
/// the jumps at interior knots matter. Discrete type spaces have no `φ`.
pub fn is_regular(ts: &TypeSpace) -> bool {
    !ts.is_discrete() && regularity_violation(ts).is_none()
}

/// Smallest `z` in `[0, c̄]` with `φ(z) >= s`, or `None` when `φ(c̄) < s`.
pub fn inverse_virtual_cost(
    ts: &TypeSpace,
    s: &Rational,
) -> Result<Option<Rational>, ContinuousError> {
    let top = ts.upper().ok_or(ContinuousError::NotContinuous)?;
    match ts {
        TypeSpace::Discrete(_) => Err(ContinuousError::NotContinuous),
        TypeSpace::Uniform { .. } => {
            let z = s / Rational::from_integer(2.into());
            Ok(if z > *top {
                None
            } else {
                Some(if z.is_negative() { Rational::zero() } else { z })
            })
        }
        TypeSpace::Tabulated(t) => {
            let cells = t.grid.len() - 1;
            for k in 0..cells {
                let start = knot_value(t, k);
                if *s <= start {
                    return Ok(Some(t.grid[k].clone()));
                }
                let end = left_limit(t, k);
                let last = k + 1 == cells;
                if *s < end || (last && *s <= end) {
                    let cdf_slope = (&t.cdf[k + 1] - &t.cdf[k]) / (&t.grid[k + 1] - &t.grid[k]);
                    let slope = Rational::one() + cdf_slope / &t.density[k];
                    return Ok(Some(&t.grid[k] + (s - start) / slope));
                }
            }
            Ok(None)
        }
    }
}

/// Rule maximising `R_i - φ(c) γ_i` pointwise, ties at a type going to the
/// higher-effort action. Built by walking the upper envelope of the lines
/// `s ↦ R_i - s γ_i` over `s = φ(c)`.
pub fn virtual_welfare_rule(inst: &Instance) -> Result<PiecewiseConstantRule, ContinuousError> {
    let ts = inst.types();
    let top = upper(inst)?;
    if let Some(knot) = regularity_violation(ts) {
        return Err(ContinuousError::NotRegular { knot });
    }
    let rewards = inst.expected_rewards();
    let s_start = virtual_cost(ts, &Rational::zero())?;
    let s_end = virtual_cost(ts, top)?;

    let value = |i: usize, s: &Rational| &rewards[i] - s * inst.gamma(i);
    let mut current = (0..inst.num_actions())
        .max_by(|&i, &j| value(i, &s_start).cmp(&value(j, &s_start)).then(i.cmp(&j)))
        .expect("the opt-out action exists");
    let mut breakpoints: Vec<Rational> = Vec::new();
    let mut actions = vec![current];
    loop {
        // Earliest crossing with a flatter line; among simultaneous
        // crossings the flattest line dominates afterwards.
        let next = (0..inst.num_actions())
            .filter(|&k| inst.gamma(k) < inst.gamma(current))
            .map(|k| {
                let s = (&rewards[current] - &rewards[k]) / (inst.gamma(current) - inst.gamma(k));
                (s, inst.gamma(k).clone(), k)
            })
            .min();
        let Some((s, _, k)) = next else { break };
        if s >= s_end {
            break;
        }
        let z = inverse_virtual_cost(ts, &s)?.expect("crossing below φ(c̄)");
        current = k;
        if z.is_positive() && breakpoints.last().is_none_or(|b| *b < z) {
            breakpoints.push(z);
            actions.push(k);
        } else {
            *actions.last_mut().expect("nonempty") = k;
        }
    }
    PiecewiseConstantRule::new(breakpoints, actions).map(|r| r.normalized())
}

/// Marginal returns `(R_i - R_{i-1}) / (γ_i - γ_{i-1})` for `i = 1..=n`;
/// `None` where two actions need equal effort.
pub fn marginal_returns(inst: &Instance) -> Vec<Option<Rational>> {
    let r = inst.expected_rewards();
    (1..inst.num_actions())
        .map(|i| {
            let dg = inst.gamma(i) - inst.gamma(i - 1);
            (!dg.is_zero()).then(|| (&r[i] - &r[i - 1]) / dg)
        })
        .collect()
}

fn dmr_violation(inst: &Instance) -> Option<usize> {
    let q = marginal_returns(inst);
    if let Some(i) = q.iter().position(Option::is_none) {
        return Some(i + 1);
    }
    (1..q.len()).find(|&i| q[i] > q[i - 1]).map(|i| i + 1)
}

/// Diminishing marginal returns: the marginal return per unit of effort is
/// weakly decreasing in the action.
pub fn has_dmr(inst: &Instance) -> bool {
    dmr_violation(inst).is_none()
}

/// Breakpoints `z_i` with `φ(z_i) = (R_{n+1-i} - R_{n-i}) / (γ_{n+1-i} - γ_{n-i})`
/// for `i = 1..=n`, clamped to `[0, c̄]`, paired with the defining ratio.
pub fn dmr_breakpoints(inst: &Instance) -> Result<Vec<(Rational, Rational)>, ContinuousError> {
    let ts = inst.types();
    let top = upper(inst)?.clone();
    if let Some(knot) = regularity_violation(ts) {
        return Err(ContinuousError::NotRegular { knot });
    }
    if let Some(action) = dmr_violation(inst) {
        return Err(ContinuousError::NoDmr { action });
    }
    let q: Vec<Rational> = marginal_returns(inst).into_iter().flatten().collect();
    let n = inst.n();
    (1..=n)
        .map(|i| {
            let ratio = q[n - i].clone();
            let z = inverse_virtual_cost(ts, &ratio)?.unwrap_or_else(|| top.clone());
            Ok((z, ratio))
        })
        .collect()
}

/// Breakpoints of [`dmr_breakpoints`] that lie strictly inside the support,
/// without repeats: the form in which they appear in a rule.
pub fn interior_dmr_breakpoints(inst: &Instance) -> Result<Vec<Rational>, ContinuousError> {
    let top = upper(inst)?.clone();
    let mut out: Vec<Rational> = Vec::new();
    for (z, _) in dmr_breakpoints(inst)? {
        if z.is_positive() && z < top && out.last() != Some(&z) {
            out.push(z);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointCosts {
    /// `Σ_c γ_{x(c)} c`.
    pub cost: Rational,
    /// `Σ_c γ_{x(c)} φ(c)`.
    pub virtual_cost: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointCostComparison {
    pub first: JointCosts,
    pub second: JointCosts,
}

impl JointCostComparison {
    /// True when the two orderings disagree strictly.
    pub fn orders_differ(&self) -> bool {
        let by_cost = self.first.cost.cmp(&self.second.cost);
        let by_virtual = self.first.virtual_cost.cmp(&self.second.virtual_cost);
        by_cost != by_virtual && by_cost.is_ne() && by_virtual.is_ne()
    }
}

/// Joint cost and joint virtual cost of two allocations over finitely many
/// types embedded in a continuous type space.
pub fn joint_virtual_cost_compare(
    inst: &Instance,
    support: &[Rational],
    first: &DiscreteAllocation,
    second: &DiscreteAllocation,
    ts: &TypeSpace,
) -> Result<JointCostComparison, ContinuousError> {
    let joint = |x: &DiscreteAllocation| -> Result<JointCosts, ContinuousError> {
        if x.len() != support.len() {
            return Err(ContinuousError::RuleShape(format!(
                "allocation covers {} types, support has {}",
                x.len(),
                support.len()
            )));
        }
        let mut cost = Rational::zero();
        let mut virtual_cost_total = Rational::zero();
        for (c, &a) in support.iter().zip(x.actions()) {
            inst.check_action(a)?;
            cost += inst.gamma(a) * c;
            virtual_cost_total += inst.gamma(a) * virtual_cost(ts, c)?;
        }
        Ok(JointCosts {
            cost,
            virtual_cost: virtual_cost_total,
        })
    };
    Ok(JointCostComparison {
        first: joint(first)?,
        second: joint(second)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformOptimal {
    pub contract: Contract<PiecewiseConstantRule>,
    pub revenue: Rational,
    pub expected_payment: Rational,
    pub virtual_welfare: Rational,
    pub top_type_utility: Rational,
    pub pivots: usize,
}

/// Action that fails `γ_i c̄ > R_i`, if any.
pub fn assumption_violation(inst: &Instance) -> Result<Option<usize>, ContinuousError> {
    let top = upper(inst)?;
    Ok((1..inst.num_actions()).find(|&i| inst.gamma(i) * top <= inst.expected_rewards()[i]))
}

/// Optimal contract for uniform costs: the virtual-welfare rule with
/// payments that never pay on outcome 0, chosen to minimise expected payment.
pub fn uniform_optimal_contract(inst: &Instance) -> Result<UniformOptimal, ContinuousError> {
    if !matches!(inst.types(), TypeSpace::Uniform { .. }) {
        return Err(ContinuousError::NotUniform);
    }
    if let Some(action) = assumption_violation(inst)? {
        return Err(ContinuousError::AssumptionViolated { action });
    }
    let rule = virtual_welfare_rule(inst)?;
    let best = min_payment_contract_cont(inst, &rule, true)?;
    let virtual_welfare = expected_virtual_welfare(inst, &best.contract.allocation)?;
    let top_type_utility =
        top_type_utility(inst, &best.contract.allocation, &best.contract.payments)?;
    Ok(UniformOptimal {
        revenue: best.revenue,
        expected_payment: best.expected_payment,
        virtual_welfare,
        top_type_utility,
        pivots: best.pivots,
        contract: best.contract,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use num_bigint::BigInt;

    use crate::model::{validate_instance, Instance, RawInstance, Tabulation, TypeSpace};
    use crate::rational::{int, Rational};

    /// Nearest multiple of 10^-12.
    pub fn approx(x: f64) -> Rational {
        let scale = 1_000_000_000_000i64;
        Rational::new(
            BigInt::from((x * scale as f64).round() as i64),
            BigInt::from(scale),
        )
    }

    /// Unit-rate exponential costs truncated at 5: knots every 1/4 up to 4,
    /// then a last cell carrying the remaining tail mass.
    pub fn exponential_tabulation() -> TypeSpace {
        let mut grid: Vec<f64> = (0..=16).map(|k| f64::from(k) / 4.0).collect();
        grid.push(5.0);
        let cdf: Vec<Rational> = grid
            .iter()
            .map(|&c| {
                if c == 5.0 {
                    int(1)
                } else {
                    approx(1.0 - (-c).exp())
                }
            })
            .collect();
        TypeSpace::Tabulated(Tabulation {
            grid: grid.iter().map(|&c| approx(c)).collect(),
            cdf,
            density: grid.iter().map(|&c| approx((-c).exp())).collect(),
        })
    }

    /// Running-example actions with costs uniform on `[0, 12]`.
    pub fn uniform_running() -> Instance {
        let mut raw = crate::model::fixtures::running_raw();
        raw.types = TypeSpace::Uniform { upper: int(12) };
        validate_instance(raw).unwrap()
    }

    /// Random action side with uniform costs on `[0, c̄]`, where `c̄` exceeds
    /// every `R_i / γ_i` so that only zero effort is worth buying at the top.
    pub fn random_uniform(seed: u64, max_actions: usize, max_outcomes: usize) -> Instance {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        loop {
            let n = rng.gen_range(1..=max_actions);
            let m = rng.gen_range(1..=max_outcomes);
            let raw = crate::model::fixtures::random_actions(&mut rng, n, m);
            let Ok(probe) = validate_instance(raw.clone()) else {
                continue;
            };
            let bound = (1..probe.num_actions())
                .map(|i| &probe.expected_rewards()[i] / probe.gamma(i))
                .max()
                .unwrap();
            let upper = bound.floor() + int(rng.gen_range(1..=4));
            return validate_instance(RawInstance {
                types: TypeSpace::Uniform { upper },
                ..raw
            })
            .unwrap();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::model::validate_instance;
    use crate::rational::{int, to_f64};
    use proptest::prelude::*;

    fn rule(breakpoints: &[Rational], actions: &[usize]) -> PiecewiseConstantRule {
        PiecewiseConstantRule::new(breakpoints.to_vec(), actions.to_vec()).unwrap()
    }

    /// Breakpoints and actions of the pointwise argmax of `R_i - φ(c) γ_i` on
    /// the grid `c = k h`, ties to the higher action.
    fn grid_scan(inst: &Instance, h: &Rational) -> (Vec<Rational>, Vec<usize>) {
        let top = inst.types().upper().unwrap().clone();
        let mut breaks = Vec::new();
        let mut actions: Vec<usize> = Vec::new();
        let mut c = Rational::zero();
        while c <= top {
            let phi = virtual_cost(inst.types(), &c).unwrap();
            let best = (0..inst.num_actions())
                .max_by(|&i, &j| {
                    let vi = &inst.expected_rewards()[i] - &phi * inst.gamma(i);
                    let vj = &inst.expected_rewards()[j] - &phi * inst.gamma(j);
                    vi.cmp(&vj).then(i.cmp(&j))
                })
                .unwrap();
            if actions.last() != Some(&best) {
                if !actions.is_empty() {
                    breaks.push(c.clone());
                }
                actions.push(best);
            }
            c += h;
        }
        (breaks, actions)
    }

    #[test]
    fn uniform_virtual_cost_doubles() {
        let ts = TypeSpace::Uniform { upper: int(12) };
        assert_eq!(virtual_cost(&ts, &ratio(7, 3)).unwrap(), ratio(14, 3));
        assert_eq!(virtual_cost(&ts, &int(0)).unwrap(), int(0));
        assert!(matches!(
            virtual_cost(&ts, &int(13)),
            Err(ContinuousError::OutOfSupport { .. })
        ));
    }

    #[test]
    fn exponential_virtual_cost() {
        let ts = exponential_tabulation();
        let at_two = to_f64(&virtual_cost(&ts, &int(2)).unwrap());
        assert!((at_two - (2.0 + 2f64.exp() - 1.0)).abs() < 1e-6, "{at_two}");
        assert_eq!(virtual_cost(&ts, &int(0)).unwrap(), int(0));
        assert!(is_regular(&ts));
        assert!(is_regular(&TypeSpace::Uniform { upper: int(3) }));
    }

    #[test]
    fn rising_density_breaks_regularity() {
        let ts = TypeSpace::Tabulated(Tabulation {
            grid: vec![int(0), int(1), int(2)],
            cdf: vec![int(0), ratio(1, 10), int(1)],
            density: vec![ratio(1, 10), ratio(9, 10), ratio(9, 10)],
        });
        assert_eq!(regularity_violation(&ts), Some(1));
        assert!(!is_regular(&ts));
    }

    #[test]
    fn tabulated_inverse_round_trips() {
        let ts = exponential_tabulation();
        for k in 0..=50 {
            let c = ratio(k, 10);
            let s = virtual_cost(&ts, &c).unwrap();
            assert_eq!(inverse_virtual_cost(&ts, &s).unwrap(), Some(c));
        }
        let beyond = virtual_cost(&ts, &int(5)).unwrap() + int(1);
        assert_eq!(inverse_virtual_cost(&ts, &beyond).unwrap(), None);
    }

    #[test]
    fn uniform_running_virtual_welfare_rule() {
        let inst = uniform_running();
        let (scan_breaks, scan_actions) = grid_scan(&inst, &ratio(1, 1000));
        let vw = virtual_welfare_rule(&inst).unwrap();
        assert_eq!(vw.actions(), scan_actions.as_slice());
        for (z, scanned) in vw.breakpoints().iter().zip(&scan_breaks) {
            assert!(
                scanned >= z && scanned - z <= ratio(1, 1000),
                "{z} vs {scanned}"
            );
        }
        // Frozen after the scan above agreed.
        assert_eq!(vw.breakpoints(), &[ratio(5, 7), ratio(5, 2), int(5)]);
        assert_eq!(vw.actions(), &[3, 2, 1, 0]);
    }

    #[test]
    fn tabulated_virtual_welfare_rule_matches_scan() {
        let mut raw = crate::model::fixtures::running_raw();
        raw.types = exponential_tabulation();
        let inst = validate_instance(raw).unwrap();
        let vw = virtual_welfare_rule(&inst).unwrap();
        let (scan_breaks, scan_actions) = grid_scan(&inst, &ratio(1, 1000));
        assert_eq!(vw.actions(), scan_actions.as_slice());
        for (z, scanned) in vw.breakpoints().iter().zip(&scan_breaks) {
            assert!(
                scanned >= z && scanned - z <= ratio(1, 1000),
                "{z} vs {scanned}"
            );
        }
    }

    #[test]
    fn single_action_threshold() {
        let inst = validate_instance(crate::model::RawInstance {
            gammas: vec![int(0), int(2)],
            rewards: vec![int(0), int(10)],
            dist: vec![vec![int(1), int(0)], vec![int(0), int(1)]],
            types: TypeSpace::Uniform { upper: int(10) },
        })
        .unwrap();
        let vw = virtual_welfare_rule(&inst).unwrap();
        assert_eq!(vw, rule(&[ratio(5, 2)], &[1, 0]));
        let opt = uniform_optimal_contract(&inst).unwrap();
        assert_eq!(opt.contract.allocation, vw);
        assert_eq!(opt.revenue, opt.virtual_welfare);
    }

    #[test]
    fn dmr_agrees_with_virtual_welfare() {
        let inst = uniform_running();
        assert_eq!(
            marginal_returns(&inst),
            vec![Some(int(10)), Some(int(5)), Some(ratio(10, 7))]
        );
        assert!(has_dmr(&inst));
        let dmr = dmr_breakpoints(&inst).unwrap();
        assert_eq!(
            dmr,
            vec![
                (ratio(5, 7), ratio(10, 7)),
                (ratio(5, 2), int(5)),
                (int(5), int(10))
            ]
        );
        assert_eq!(
            interior_dmr_breakpoints(&inst).unwrap(),
            virtual_welfare_rule(&inst).unwrap().breakpoints()
        );
    }

    #[test]
    fn increasing_marginal_returns_rejected() {
        let inst = validate_instance(crate::model::RawInstance {
            gammas: vec![int(0), int(1), int(2)],
            rewards: vec![int(0), int(1), int(3)],
            dist: vec![
                vec![int(1), int(0), int(0)],
                vec![int(0), int(1), int(0)],
                vec![int(0), int(0), int(1)],
            ],
            types: TypeSpace::Uniform { upper: int(4) },
        })
        .unwrap();
        assert!(!has_dmr(&inst));
        assert_eq!(
            dmr_breakpoints(&inst),
            Err(ContinuousError::NoDmr { action: 2 })
        );
    }

    #[test]
    fn uniform_running_optimal_contract() {
        let inst = uniform_running();
        assert_eq!(assumption_violation(&inst).unwrap(), None);
        let opt = uniform_optimal_contract(&inst).unwrap();
        let rule = &opt.contract.allocation;
        assert_eq!(rule.breakpoints(), &[ratio(5, 7), ratio(5, 2), int(5)]);
        assert_eq!(opt.top_type_utility, int(0));
        assert_eq!(opt.revenue, opt.virtual_welfare);
        assert!(opt.contract.payments.iter().all(|t| t[0].is_zero()));
        payment_identity(&inst, rule, &opt.contract.payments).unwrap();
        assert!(build_lp2(&inst, rule, true)
            .unwrap()
            .satisfies(&opt.contract.payments.concat()));
    }

    #[test]
    fn cheap_top_type_violates_assumption() {
        let mut raw = crate::model::fixtures::running_raw();
        raw.types = TypeSpace::Uniform { upper: int(4) };
        let inst = validate_instance(raw).unwrap();
        assert_eq!(
            uniform_optimal_contract(&inst),
            Err(ContinuousError::AssumptionViolated { action: 1 })
        );
    }

    #[test]
    fn lp2_shape() {
        let inst = uniform_running();
        let r = rule(&[int(1), int(3)], &[3, 2, 0]);
        let lp = build_lp2(&inst, &r, false).unwrap();
        assert_eq!(lp.num_vars(), 9);
        assert_eq!(lp.num_constraints(), 2 * 9 * 4);
        let pinned = build_lp2(&inst, &r, true).unwrap();
        assert_eq!(pinned.num_constraints(), 2 * 9 * 4 + 3);
        let merged = build_lp2(&inst, &rule(&[int(1), int(3)], &[3, 3, 0]), false).unwrap();
        assert_eq!(merged.num_vars(), 6);
    }

    #[test]
    fn constant_rules() {
        let inst = uniform_running();
        match check_implementable_cont(&inst, &PiecewiseConstantRule::constant(0)).unwrap() {
            ContinuousImplementability::Implementable { payments, .. } => {
                let best =
                    min_payment_contract_cont(&inst, &PiecewiseConstantRule::constant(0), false)
                        .unwrap();
                assert!(best.contract.payments.iter().flatten().all(Zero::is_zero));
                assert_eq!(payments.len(), 1);
            }
            other => panic!("{other:?}"),
        }
        let zero = PiecewiseConstantRule::constant(0);
        assert_eq!(expected_virtual_welfare(&inst, &zero).unwrap(), int(0));
        assert_eq!(
            expected_revenue_cont(&inst, &zero, &[vec![int(0); 3]]).unwrap(),
            int(0)
        );
        // The top type must be paid for the highest effort.
        let top =
            min_payment_contract_cont(&inst, &PiecewiseConstantRule::constant(3), false).unwrap();
        assert_eq!(top.expected_payment, int(168));
        assert_eq!(top.contract.payments[0][2], int(168));
        payment_identity(&inst, &top.contract.allocation, &top.contract.payments).unwrap();
    }

    #[test]
    fn constant_middle_action_is_not_implementable() {
        let inst = uniform_running();
        let r = PiecewiseConstantRule::constant(2);
        match check_implementable_cont(&inst, &r).unwrap() {
            ContinuousImplementability::NotImplementable { plan, .. } => {
                assert!(verify_continuous_plan(&inst, &r, &plan).unwrap().is_valid());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotone_rules_rejected() {
        let inst = uniform_running();
        let r = rule(&[int(2)], &[1, 3]);
        assert!(!r.is_monotone());
        assert_eq!(
            check_implementable_cont(&inst, &r),
            Err(ContinuousError::NotPiecewiseMonotone { piece: 1 })
        );
        assert!(matches!(
            build_lp2(&inst, &rule(&[int(12)], &[1, 0]), false),
            Err(ContinuousError::RuleShape(_))
        ));
        assert!(PiecewiseConstantRule::new(vec![int(2), int(2)], vec![2, 1, 0]).is_err());
    }

    #[test]
    fn perturbed_payment_breaks_identity() {
        let inst = uniform_running();
        let opt = uniform_optimal_contract(&inst).unwrap();
        let mut payments = opt.contract.payments.clone();
        let last = payments[1].len() - 1;
        payments[1][last] += int(1);
        assert!(matches!(
            payment_identity(&inst, &opt.contract.allocation, &payments),
            Err(ContinuousError::IdentityViolated { .. })
        ));
    }

    #[test]
    fn exponential_joint_costs() {
        let inst = validate_instance(crate::model::RawInstance {
            gammas: vec![int(0), int(1), int(2), int(3), int(7)],
            rewards: vec![int(0), int(1), int(2), int(3), int(4)],
            dist: (0..5)
                .map(|i| (0..5).map(|j| int(i64::from(i == j))).collect())
                .collect(),
            types: exponential_tabulation(),
        })
        .unwrap();
        let support = [int(1), int(2)];
        let cmp = joint_virtual_cost_compare(
            &inst,
            &support,
            &DiscreteAllocation::new(vec![2, 3]),
            &DiscreteAllocation::new(vec![4, 1]),
            inst.types(),
        )
        .unwrap();
        assert_eq!(cmp.first.cost, int(8));
        assert_eq!(cmp.second.cost, int(9));
        assert!((to_f64(&cmp.first.virtual_cost) - 30.6).abs() < 0.01);
        assert!((to_f64(&cmp.second.virtual_cost) - 27.41).abs() < 0.01);
        assert!(cmp.orders_differ());

        let uniform = TypeSpace::Uniform { upper: int(5) };
        let cmp = joint_virtual_cost_compare(
            &inst,
            &support,
            &DiscreteAllocation::new(vec![2, 3]),
            &DiscreteAllocation::new(vec![4, 1]),
            &uniform,
        )
        .unwrap();
        assert!(!cmp.orders_differ());
    }

    /// Two-point Gauss-Legendre on each piece; exact for the linear integrand
    /// of uniform costs.
    fn quadrature_virtual_welfare(inst: &Instance, r: &PiecewiseConstantRule) -> f64 {
        let top = to_f64(inst.types().upper().unwrap());
        let points: Vec<f64> = r
            .points(inst.types().upper().unwrap())
            .iter()
            .map(to_f64)
            .collect();
        let node = 1.0 / 3f64.sqrt();
        let mut total = 0.0;
        for (i, &a) in r.actions().iter().enumerate() {
            let (lo, hi) = (points[i], points[i + 1]);
            let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
            for c in [mid - half * node, mid + half * node] {
                let value = to_f64(&inst.expected_rewards()[a]) - 2.0 * c * to_f64(inst.gamma(a));
                total += half * value / top;
            }
        }
        total
    }

    fn random_rule(inst: &Instance, seed: u64) -> PiecewiseConstantRule {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let top = inst.types().upper().unwrap().clone();
        let pieces = rng.gen_range(1..=inst.num_actions());
        let mut actions: Vec<usize> = (0..pieces).map(|_| rng.gen_range(0..=inst.n())).collect();
        actions.sort_unstable_by(|a, b| b.cmp(a));
        let denominator = 24i64;
        let mut cuts: Vec<Rational> = Vec::new();
        while cuts.len() + 1 < pieces {
            let z = &top * ratio(rng.gen_range(1..denominator), denominator);
            if !cuts.contains(&z) {
                cuts.push(z);
            }
        }
        cuts.sort();
        PiecewiseConstantRule::new(cuts, actions).unwrap()
    }

    /// Utility of type `c` reporting piece `report` and taking `action`.
    fn utility(
        inst: &Instance,
        payments: &[Vec<Rational>],
        report: usize,
        action: usize,
        c: &Rational,
    ) -> Rational {
        inst.transfer(&payments[report], action) - inst.gamma(action) * c
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn implementability_verdicts_are_certified(seed in any::<u64>(), rule_seed in any::<u64>()) {
            let inst = random_uniform(seed, 3, 3);
            let r = random_rule(&inst, rule_seed);
            let top = inst.types().upper().unwrap().clone();
            match check_implementable_cont(&inst, &r).unwrap() {
                ContinuousImplementability::Implementable { rule, payments, .. } => {
                    payment_identity(&inst, &rule, &payments).unwrap();
                    let revenue = expected_revenue_cont(&inst, &rule, &payments).unwrap();
                    let vw = expected_virtual_welfare(&inst, &rule).unwrap();
                    let top_u = top_type_utility(&inst, &rule, &payments).unwrap();
                    prop_assert!(!top_u.is_negative());
                    prop_assert_eq!(revenue, vw - top_u);
                    // Extended payments are IC for every type; checking piece
                    // ends and midpoints suffices since utilities are affine.
                    let points = rule.points(&top);
                    let mut probes = points.clone();
                    probes.extend(points.windows(2).map(|w| (&w[0] + &w[1]) / int(2)));
                    for c in &probes {
                        let own = rule.piece_of(c);
                        let truthful = utility(&inst, &payments, own, rule.actions()[own], c);
                        for report in 0..rule.num_pieces() {
                            for k in 0..inst.num_actions() {
                                prop_assert!(utility(&inst, &payments, report, k, c) <= truthful);
                            }
                        }
                    }
                    // Just below each breakpoint the type still belongs to the
                    // piece on the left and must not prefer the right one.
                    for (i, z) in rule.breakpoints().iter().enumerate() {
                        let truthful = utility(&inst, &payments, i, rule.actions()[i], z);
                        let right = utility(&inst, &payments, i + 1, rule.actions()[i + 1], z);
                        prop_assert_eq!(truthful, right);
                    }
                }
                ContinuousImplementability::NotImplementable { rule, plan, .. } => {
                    prop_assert!(verify_continuous_plan(&inst, &rule, &plan).unwrap().is_valid());
                }
            }
        }

        #[test]
        fn virtual_welfare_matches_quadrature(seed in any::<u64>(), rule_seed in any::<u64>()) {
            let inst = random_uniform(seed, 3, 3);
            let r = random_rule(&inst, rule_seed);
            let exact = to_f64(&expected_virtual_welfare(&inst, &r).unwrap());
            let numeric = quadrature_virtual_welfare(&inst, &r);
            prop_assert!((exact - numeric).abs() <= 1e-9 * exact.abs().max(1.0), "{exact} vs {numeric}");
        }

        #[test]
        fn uniform_optimum_is_pinned_and_tight(seed in any::<u64>()) {
            let inst = random_uniform(seed, 3, 3);
            let opt = uniform_optimal_contract(&inst).unwrap();
            prop_assert_eq!(opt.top_type_utility.clone(), int(0));
            prop_assert_eq!(opt.revenue.clone(), opt.virtual_welfare.clone());
            prop_assert_eq!(*opt.contract.allocation.actions().last().unwrap(), 0);
            if has_dmr(&inst) {
                prop_assert_eq!(
                    interior_dmr_breakpoints(&inst).unwrap(),
                    opt.contract.allocation.breakpoints().to_vec()
                );
            }
            // No random rule earns more.
            for rule_seed in 0..8u64 {
                let r = random_rule(&inst, seed ^ rule_seed);
                if let Ok(best) = min_payment_contract_cont(&inst, &r, false) {
                    prop_assert!(best.revenue <= opt.revenue);
                }
            }
        }
    }
}
