//! Finitely many agent types.
//!
//! The IC program for an allocation has one nonnegative payment variable per
//! (type, outcome) and one constraint per (true type, reported type, action):
//!
//! ```text
//! T^c_{x(c)} - γ_{x(c)} c  >=  T^{c'}_k - γ_k c
//! ```
//!
//! When it is infeasible, the Farkas multipliers of these rows are a deviation
//! plan `λ(c, c', k)`: after per-type normalisation the deviations into each
//! type dominate that type's prescribed outcome distribution, at a strictly
//! lower joint cost than truthful behaviour. Such a plan is a self-contained
//! proof that no payments implement the allocation.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::lp::{
    self, FarkasCertificate, Feasibility, LinearProgram, LpError, LpStatus, Relation, Sense,
};
use crate::model::{Contract, DiscreteTypes, Instance, ModelError};
use crate::rational::{sum, Rational};

pub const DEFAULT_BRUTE_FORCE_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscreteError {
    #[error("instance has a continuous type space")]
    NotDiscrete,
    #[error("allocation covers {got} types, instance has {expected}")]
    AllocationShape { expected: usize, got: usize },
    #[error("type {type_index} is allocated action {action}, which does not exist")]
    ActionOutOfRange { type_index: usize, action: usize },
    #[error("contract has {got} payment vectors for {expected} types")]
    PaymentCount { expected: usize, got: usize },
    #[error("allocation is not implementable")]
    NotImplementable(Box<DeviationPlan>),
    #[error("deviation plan weights of type {type_index} sum to {sum}, not 1")]
    NotNormalized { type_index: usize, sum: Rational },
    #[error("deviation plan has a negative weight")]
    NegativeWeight,
    #[error("{rules} allocations exceed the brute-force cap of {cap}")]
    CapExceeded { rules: u128, cap: u64 },
    #[error("menu: {0}")]
    Menu(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Action recommended to each support point, in increasing cost order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiscreteAllocation {
    actions: Vec<usize>,
}

impl DiscreteAllocation {
    pub fn new(actions: Vec<usize>) -> Self {
        DiscreteAllocation { actions }
    }

    pub fn constant(num_types: usize, action: usize) -> Self {
        DiscreteAllocation {
            actions: vec![action; num_types],
        }
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn action(&self, type_index: usize) -> usize {
        self.actions[type_index]
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Lower costs never receive lower actions.
    pub fn is_monotone(&self) -> bool {
        is_monotone(self)
    }
}

pub fn is_monotone(alloc: &DiscreteAllocation) -> bool {
    alloc.actions.windows(2).all(|w| w[0] >= w[1])
}

/// Monotonicity in required effort rather than action index; differs from
/// [`is_monotone`] only when two effortful actions need the same effort.
pub fn is_effort_monotone(inst: &Instance, alloc: &DiscreteAllocation) -> bool {
    alloc
        .actions
        .windows(2)
        .all(|w| inst.gamma(w[0]) >= inst.gamma(w[1]))
}

fn discrete_types(inst: &Instance) -> Result<&DiscreteTypes, DiscreteError> {
    inst.types().as_discrete().ok_or(DiscreteError::NotDiscrete)
}

fn check_allocation(inst: &Instance, alloc: &DiscreteAllocation) -> Result<(), DiscreteError> {
    let types = discrete_types(inst)?;
    if alloc.len() != types.len() {
        return Err(DiscreteError::AllocationShape {
            expected: types.len(),
            got: alloc.len(),
        });
    }
    if let Some((type_index, &action)) = alloc
        .actions
        .iter()
        .enumerate()
        .find(|(_, &a)| a >= inst.num_actions())
    {
        return Err(DiscreteError::ActionOutOfRange { type_index, action });
    }
    Ok(())
}

/// Weights `λ(c, c', k)` over (true type, reported type, action), indexed by
/// support position. Only nonzero weights are stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviationPlan {
    weights: BTreeMap<(usize, usize, usize), Rational>,
}

impl DeviationPlan {
    pub fn new() -> Self {
        Self::default()
    }

    /// Truthful reporting and obedience for every type.
    pub fn truthful(alloc: &DiscreteAllocation) -> Self {
        let mut plan = Self::new();
        for (c, &a) in alloc.actions.iter().enumerate() {
            plan.set(c, c, a, Rational::one());
        }
        plan
    }

    /// Types `low < high` exchange their reports and actions; everyone else
    /// is truthful.
    pub fn swap(alloc: &DiscreteAllocation, low: usize, high: usize) -> Self {
        let mut plan = Self::truthful(alloc);
        plan.set(low, low, alloc.action(low), Rational::zero());
        plan.set(high, high, alloc.action(high), Rational::zero());
        plan.set(low, high, alloc.action(high), Rational::one());
        plan.set(high, low, alloc.action(low), Rational::one());
        plan
    }

    pub fn set(&mut self, true_type: usize, report: usize, action: usize, weight: Rational) {
        if weight.is_zero() {
            self.weights.remove(&(true_type, report, action));
        } else {
            self.weights.insert((true_type, report, action), weight);
        }
    }

    pub fn weight(&self, true_type: usize, report: usize, action: usize) -> Rational {
        self.weights
            .get(&(true_type, report, action))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    /// Nonzero entries `((c, c', k), λ)` in lexicographic key order.
    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize, usize), &Rational)> {
        self.weights.iter()
    }

    pub fn row_sum(&self, true_type: usize) -> Rational {
        sum(self
            .weights
            .range((true_type, 0, 0)..=(true_type, usize::MAX, usize::MAX))
            .map(|(_, w)| w))
    }
}

/// Outcome of checking a plan against the two non-implementability conditions.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanVerdict {
    Valid {
        truthful_cost: Rational,
        deviation_cost: Rational,
    },
    Invalid(PlanFailure),
}

impl PlanVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, PlanVerdict::Valid { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanFailure {
    /// Deviations into `type_index` put less mass on `outcome` than its prescribed action.
    Dominance {
        type_index: usize,
        outcome: usize,
        deviated: Rational,
        prescribed: Rational,
    },
    /// Joint cost of the plan is not strictly below truthful joint cost.
    CostNotLower {
        truthful_cost: Rational,
        deviation_cost: Rational,
    },
}

fn payment_var(inst: &Instance, type_index: usize, outcome: usize) -> usize {
    type_index * inst.num_outcomes() + outcome
}

/// Row of the IC program holding constraint `(c, c', k)`.
pub fn ic_row(
    num_types: usize,
    num_actions: usize,
    true_type: usize,
    report: usize,
    action: usize,
) -> usize {
    (true_type * num_types + report) * num_actions + action
}

/// IC program for `alloc`: `|C|·(m+1)` nonnegative payments and
/// `|C|²·(n+1)` constraints, rows ordered by (true type, report, action).
pub fn build_ic_lp(
    inst: &Instance,
    alloc: &DiscreteAllocation,
) -> Result<LinearProgram, DiscreteError> {
    check_allocation(inst, alloc)?;
    let types = discrete_types(inst)?;
    let k_types = types.len();
    let mut lp = LinearProgram::nonnegative(k_types * inst.num_outcomes());
    for (c, cost) in types.support.iter().enumerate() {
        let prescribed = alloc.action(c);
        for report in 0..k_types {
            for k in 0..inst.num_actions() {
                let mut coeffs = vec![Rational::zero(); lp.num_vars()];
                for (j, p) in inst.row(prescribed).iter().enumerate() {
                    coeffs[payment_var(inst, c, j)] += p;
                }
                for (j, p) in inst.row(k).iter().enumerate() {
                    coeffs[payment_var(inst, report, j)] -= p;
                }
                let rhs = (inst.gamma(prescribed) - inst.gamma(k)) * cost;
                lp.add_constraint(coeffs, Relation::Ge, rhs);
            }
        }
    }
    Ok(lp)
}

fn split_payments(inst: &Instance, point: &[Rational]) -> Vec<Vec<Rational>> {
    point
        .chunks(inst.num_outcomes())
        .map(<[Rational]>::to_vec)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Implementability {
    Implementable {
        payments: Vec<Vec<Rational>>,
        pivots: usize,
    },
    NotImplementable {
        plan: DeviationPlan,
        pivots: usize,
    },
}

impl Implementability {
    pub fn is_implementable(&self) -> bool {
        matches!(self, Implementability::Implementable { .. })
    }

    pub fn pivots(&self) -> usize {
        match self {
            Implementability::Implementable { pivots, .. }
            | Implementability::NotImplementable { pivots, .. } => *pivots,
        }
    }
}

/// Decides implementability of `alloc`; returns feasible payments or a
/// normalised deviation plan certifying that none exist.
pub fn check_implementable(
    inst: &Instance,
    alloc: &DiscreteAllocation,
) -> Result<Implementability, DiscreteError> {
    let lp = build_ic_lp(inst, alloc)?;
    let outcome = lp::solve(&lp)?;
    Ok(match outcome.status {
        LpStatus::Optimal(sol) => Implementability::Implementable {
            payments: split_payments(inst, &sol.point),
            pivots: outcome.pivots,
        },
        LpStatus::Infeasible(cert) => Implementability::NotImplementable {
            plan: plan_from_farkas(inst, alloc, &cert),
            pivots: outcome.pivots,
        },
        LpStatus::Unbounded => unreachable!("the IC program has a zero objective"),
    })
}

/// Turns Farkas multipliers of the IC program into a deviation plan whose
/// weights sum to one per true type: off-diagonal weights are scaled by the
/// largest row sum `M`, and the remaining mass goes to truthful obedience.
pub fn plan_from_farkas(
    inst: &Instance,
    alloc: &DiscreteAllocation,
    cert: &FarkasCertificate,
) -> DeviationPlan {
    let k_types = alloc.len();
    let num_actions = inst.num_actions();
    let mut raw = DeviationPlan::new();
    for c in 0..k_types {
        for report in 0..k_types {
            for k in 0..num_actions {
                let y = &cert.multipliers[ic_row(k_types, num_actions, c, report, k)];
                raw.set(c, report, k, y.clone());
            }
        }
    }
    let scale = (0..k_types)
        .map(|c| raw.row_sum(c))
        .max()
        .filter(|m| m.is_positive())
        .unwrap_or_else(Rational::one);
    let mut plan = DeviationPlan::new();
    for c in 0..k_types {
        let diagonal = (c, c, alloc.action(c));
        let mut off_diagonal = Rational::zero();
        for (&(tc, report, k), w) in raw.entries() {
            if tc != c || (tc, report, k) == diagonal {
                continue;
            }
            let scaled = w / &scale;
            off_diagonal += &scaled;
            plan.set(c, report, k, scaled);
        }
        plan.set(c, c, alloc.action(c), Rational::one() - off_diagonal);
    }
    plan
}

/// Exact check of a normalised plan against both non-implementability conditions.
pub fn verify_deviation_plan(
    inst: &Instance,
    alloc: &DiscreteAllocation,
    plan: &DeviationPlan,
) -> Result<PlanVerdict, DiscreteError> {
    check_allocation(inst, alloc)?;
    let types = discrete_types(inst)?;
    let k_types = types.len();
    if plan.entries().any(|(_, w)| w.is_negative()) {
        return Err(DiscreteError::NegativeWeight);
    }
    if let Some(&(c, report, k)) = plan
        .entries()
        .map(|(key, _)| key)
        .find(|&&(c, report, k)| c >= k_types || report >= k_types || k >= inst.num_actions())
    {
        return Err(DiscreteError::ActionOutOfRange {
            type_index: c.max(report),
            action: k,
        });
    }
    for c in 0..k_types {
        let total = plan.row_sum(c);
        if !total.is_one() {
            return Err(DiscreteError::NotNormalized {
                type_index: c,
                sum: total,
            });
        }
    }

    for target in 0..k_types {
        let mut deviated = vec![Rational::zero(); inst.num_outcomes()];
        for (&(_, report, k), w) in plan.entries() {
            if report != target {
                continue;
            }
            for (acc, p) in deviated.iter_mut().zip(inst.row(k)) {
                *acc += w * p;
            }
        }
        let prescribed = inst.row(alloc.action(target));
        if let Some(j) = (0..inst.num_outcomes()).find(|&j| deviated[j] < prescribed[j]) {
            return Ok(PlanVerdict::Invalid(PlanFailure::Dominance {
                type_index: target,
                outcome: j,
                deviated: deviated[j].clone(),
                prescribed: prescribed[j].clone(),
            }));
        }
    }

    let truthful_cost = sum(&types
        .support
        .iter()
        .enumerate()
        .map(|(c, cost)| inst.gamma(alloc.action(c)) * cost)
        .collect::<Vec<_>>());
    let deviation_cost = sum(&plan
        .entries()
        .map(|(&(c, _, k), w)| w * inst.gamma(k) * &types.support[c])
        .collect::<Vec<_>>());
    if deviation_cost < truthful_cost {
        Ok(PlanVerdict::Valid {
            truthful_cost,
            deviation_cost,
        })
    } else {
        Ok(PlanVerdict::Invalid(PlanFailure::CostNotLower {
            truthful_cost,
            deviation_cost,
        }))
    }
}

/// For a non-monotone allocation, the swap plan of the first offending pair
/// `low < high` with `γ_{x(low)} < γ_{x(high)}`.
pub fn monotonicity_witness(inst: &Instance, alloc: &DiscreteAllocation) -> Option<DeviationPlan> {
    let n = alloc.len();
    (0..n)
        .flat_map(|low| (low + 1..n).map(move |high| (low, high)))
        .find(|&(low, high)| inst.gamma(alloc.action(low)) < inst.gamma(alloc.action(high)))
        .map(|(low, high)| DeviationPlan::swap(alloc, low, high))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinPaymentContract {
    pub contract: Contract<DiscreteAllocation>,
    pub expected_payment: Rational,
    pub revenue: Rational,
    pub pivots: usize,
}

/// Payments minimising `E[T^c_{x(c)}]` over the IC program's feasible region.
pub fn min_payment_contract(
    inst: &Instance,
    alloc: &DiscreteAllocation,
) -> Result<MinPaymentContract, DiscreteError> {
    let mut lp = build_ic_lp(inst, alloc)?;
    let types = discrete_types(inst)?;
    let mut objective = vec![Rational::zero(); lp.num_vars()];
    for (c, mass) in types.masses.iter().enumerate() {
        for (j, p) in inst.row(alloc.action(c)).iter().enumerate() {
            objective[payment_var(inst, c, j)] += mass * p;
        }
    }
    lp.set_objective(Sense::Min, objective);
    let outcome = lp::solve(&lp)?;
    match outcome.status {
        LpStatus::Optimal(sol) => {
            let expected_payment = sol.objective;
            let expected_reward = sum(&types
                .masses
                .iter()
                .enumerate()
                .map(|(c, mass)| mass * &inst.expected_rewards()[alloc.action(c)])
                .collect::<Vec<_>>());
            Ok(MinPaymentContract {
                contract: Contract {
                    allocation: alloc.clone(),
                    payments: split_payments(inst, &sol.point),
                },
                revenue: expected_reward - &expected_payment,
                expected_payment,
                pivots: outcome.pivots,
            })
        }
        LpStatus::Infeasible(cert) => Err(DiscreteError::NotImplementable(Box::new(
            plan_from_farkas(inst, alloc, &cert),
        ))),
        LpStatus::Unbounded => unreachable!("payments are bounded below by zero"),
    }
}

/// Expected principal utility `E[R_{x(c)} - T^c_{x(c)}]` of a contract.
pub fn expected_revenue(
    inst: &Instance,
    contract: &Contract<DiscreteAllocation>,
) -> Result<Rational, DiscreteError> {
    check_contract(inst, contract)?;
    let types = discrete_types(inst)?;
    Ok(sum(&types
        .masses
        .iter()
        .enumerate()
        .map(|(c, mass)| {
            let a = contract.allocation.action(c);
            mass * (&inst.expected_rewards()[a] - inst.transfer(&contract.payments[c], a))
        })
        .collect::<Vec<_>>()))
}

fn check_contract(
    inst: &Instance,
    contract: &Contract<DiscreteAllocation>,
) -> Result<(), DiscreteError> {
    check_allocation(inst, &contract.allocation)?;
    if contract.payments.len() != contract.allocation.len() {
        return Err(DiscreteError::PaymentCount {
            expected: contract.allocation.len(),
            got: contract.payments.len(),
        });
    }
    for t in &contract.payments {
        inst.check_payment_vector(t)?;
    }
    Ok(())
}

/// Non-increasing action sequences over `0..=n` of a fixed length, in
/// lexicographic order. There are `binomial(len + n, len)` of them.
#[derive(Debug, Clone)]
pub struct MonotoneRules {
    current: Option<Vec<usize>>,
    top: usize,
}

impl MonotoneRules {
    pub fn new(num_types: usize, n: usize) -> Self {
        MonotoneRules {
            current: Some(vec![0; num_types]),
            top: n,
        }
    }
}

impl Iterator for MonotoneRules {
    type Item = DiscreteAllocation;

    fn next(&mut self) -> Option<DiscreteAllocation> {
        let out = self.current.take()?;
        let mut next = out.clone();
        // Rightmost position that can grow without exceeding its left neighbour.
        let grow = (0..next.len())
            .rev()
            .find(|&i| next[i] < if i == 0 { self.top } else { next[i - 1] });
        if let Some(i) = grow {
            next[i] += 1;
            for v in &mut next[i + 1..] {
                *v = 0;
            }
            self.current = Some(next);
        }
        Some(DiscreteAllocation::new(out))
    }
}

pub fn enumerate_monotone(inst: &Instance) -> Result<MonotoneRules, DiscreteError> {
    Ok(MonotoneRules::new(discrete_types(inst)?.len(), inst.n()))
}

/// Every allocation of `0..=n` to the types, in mixed-radix order.
#[derive(Debug, Clone)]
pub struct AllAllocations {
    current: Option<Vec<usize>>,
    top: usize,
}

impl AllAllocations {
    pub fn new(num_types: usize, n: usize) -> Self {
        AllAllocations {
            current: Some(vec![0; num_types]),
            top: n,
        }
    }
}

impl Iterator for AllAllocations {
    type Item = DiscreteAllocation;

    fn next(&mut self) -> Option<DiscreteAllocation> {
        let out = self.current.take()?;
        let mut next = out.clone();
        if let Some(i) = (0..next.len()).rev().find(|&i| next[i] < self.top) {
            next[i] += 1;
            for v in &mut next[i + 1..] {
                *v = 0;
            }
            self.current = Some(next);
        }
        Some(DiscreteAllocation::new(out))
    }
}

/// How the candidate allocations of an optimal-contract search were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchSpace {
    /// Monotone allocations only; implementable allocations are monotone.
    Monotone,
    /// Effort-monotone allocations; used when two effortful actions tie in effort.
    EffortMonotone,
    /// Every allocation.
    Exhaustive,
}

impl SearchSpace {
    pub fn describe(self) -> &'static str {
        match self {
            SearchSpace::Monotone => {
                "monotone allocations only: every implementable allocation gives lower costs weakly more effort"
            }
            SearchSpace::EffortMonotone => {
                "effort-monotone allocations: actions with equal effort may be ordered either way"
            }
            SearchSpace::Exhaustive => "all allocations",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalContract {
    pub contract: Contract<DiscreteAllocation>,
    pub revenue: Rational,
    pub expected_payment: Rational,
    pub search: SearchSpace,
    pub rules_examined: usize,
    pub implementable_rules: usize,
    pub pivots: usize,
}

fn best_of(
    inst: &Instance,
    candidates: Vec<DiscreteAllocation>,
    search: SearchSpace,
) -> Result<OptimalContract, DiscreteError> {
    let evaluated: Vec<Result<Option<MinPaymentContract>, DiscreteError>> = candidates
        .par_iter()
        .map(|alloc| match min_payment_contract(inst, alloc) {
            Ok(c) => Ok(Some(c)),
            Err(DiscreteError::NotImplementable(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut best: Option<MinPaymentContract> = None;
    let mut implementable_rules = 0;
    let mut pivots = 0;
    // Sequential scan keeps the first-found tie-break in enumeration order.
    for result in evaluated {
        let Some(candidate) = result? else {
            continue;
        };
        implementable_rules += 1;
        pivots += candidate.pivots;
        if best.as_ref().is_none_or(|b| candidate.revenue > b.revenue) {
            best = Some(candidate);
        }
    }
    let best = best.expect("the zero-effort allocation is always implementable");
    Ok(OptimalContract {
        contract: best.contract,
        revenue: best.revenue,
        expected_payment: best.expected_payment,
        search,
        rules_examined: candidates.len(),
        implementable_rules,
        pivots,
    })
}

fn has_effort_ties(inst: &Instance) -> bool {
    inst.gammas().windows(2).any(|w| w[0] == w[1])
}

/// Revenue-maximising IC contract, searching monotone allocations.
pub fn optimal_contract(inst: &Instance) -> Result<OptimalContract, DiscreteError> {
    let types = discrete_types(inst)?;
    if has_effort_ties(inst) {
        let candidates = AllAllocations::new(types.len(), inst.n())
            .filter(|a| is_effort_monotone(inst, a))
            .collect();
        return best_of(inst, candidates, SearchSpace::EffortMonotone);
    }
    best_of(
        inst,
        enumerate_monotone(inst)?.collect(),
        SearchSpace::Monotone,
    )
}

/// Number of allocations a brute-force search visits, `(n+1)^|C|`.
pub fn allocation_count(inst: &Instance) -> Result<u128, DiscreteError> {
    let types = discrete_types(inst)?;
    let base = inst.num_actions() as u128;
    Ok(u32::try_from(types.len())
        .ok()
        .and_then(|e| base.checked_pow(e))
        .unwrap_or(u128::MAX))
}

/// Optimal contract over every allocation, monotone or not.
pub fn brute_force_optimal(inst: &Instance, cap: u64) -> Result<OptimalContract, DiscreteError> {
    let types = discrete_types(inst)?;
    let rules = allocation_count(inst)?;
    if rules > u128::from(cap) {
        return Err(DiscreteError::CapExceeded { rules, cap });
    }
    best_of(
        inst,
        AllAllocations::new(types.len(), inst.n()).collect(),
        SearchSpace::Exhaustive,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub enum IcVerdict {
    Ic,
    Violation(IcViolation),
}

impl IcVerdict {
    pub fn is_ic(&self) -> bool {
        matches!(self, IcVerdict::Ic)
    }
}

/// Type `type_index` strictly prefers reporting `report` and taking `action`.
#[derive(Debug, Clone, PartialEq)]
pub struct IcViolation {
    pub type_index: usize,
    pub report: usize,
    pub action: usize,
    pub utility: Rational,
    pub prescribed_utility: Rational,
}

/// Direct IC check over every (type, report, action) triple. Ties are allowed:
/// the prescribed pair only has to be among the agent's best responses.
pub fn ic_check(
    inst: &Instance,
    contract: &Contract<DiscreteAllocation>,
) -> Result<IcVerdict, DiscreteError> {
    check_contract(inst, contract)?;
    let types = discrete_types(inst)?;
    for (c, cost) in types.support.iter().enumerate() {
        let prescribed_action = contract.allocation.action(c);
        let prescribed_utility = inst.transfer(&contract.payments[c], prescribed_action)
            - inst.gamma(prescribed_action) * cost;
        let mut best: Option<(usize, usize, Rational)> = None;
        for (report, t) in contract.payments.iter().enumerate() {
            for k in 0..inst.num_actions() {
                let u = inst.transfer(t, k) - inst.gamma(k) * cost;
                if best.as_ref().is_none_or(|(_, _, b)| u > *b) {
                    best = Some((report, k, u));
                }
            }
        }
        let (report, action, utility) = best.expect("at least one type and action");
        if utility > prescribed_utility {
            return Ok(IcVerdict::Violation(IcViolation {
                type_index: c,
                report,
                action,
                utility,
                prescribed_utility,
            }));
        }
    }
    Ok(IcVerdict::Ic)
}

/// One realisation of a correlated menu: with `probability`, recommend
/// `action` and pay `payments`.
#[derive(Debug, Clone, PartialEq)]
pub struct MenuEntry {
    pub probability: Rational,
    pub action: usize,
    pub payments: Vec<Rational>,
}

/// A lottery over (action, payment vector) pairs for each type.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedMenu {
    pub entries: Vec<Vec<MenuEntry>>,
}

impl CorrelatedMenu {
    /// A deterministic contract as a menu of one-point lotteries.
    pub fn from_contract(contract: &Contract<DiscreteAllocation>) -> Self {
        CorrelatedMenu {
            entries: contract
                .payments
                .iter()
                .zip(contract.allocation.actions())
                .map(|(t, &a)| {
                    vec![MenuEntry {
                        probability: Rational::one(),
                        action: a,
                        payments: t.clone(),
                    }]
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MenuVerdict {
    Ic,
    /// Facing entry `entry` of its own lottery, the type prefers `action`.
    Disobedient {
        type_index: usize,
        entry: usize,
        action: usize,
        gain: Rational,
    },
    /// Reporting `report` and best-responding to each realised payment beats truth.
    Misreport {
        type_index: usize,
        report: usize,
        truthful_utility: Rational,
        deviation_utility: Rational,
    },
}

impl MenuVerdict {
    pub fn is_ic(&self) -> bool {
        matches!(self, MenuVerdict::Ic)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MenuReport {
    pub verdict: MenuVerdict,
    pub revenue: Rational,
}

fn check_menu(inst: &Instance, menu: &CorrelatedMenu) -> Result<(), DiscreteError> {
    let types = discrete_types(inst)?;
    if menu.entries.len() != types.len() {
        return Err(DiscreteError::Menu(format!(
            "{} lotteries for {} types",
            menu.entries.len(),
            types.len()
        )));
    }
    for (c, lottery) in menu.entries.iter().enumerate() {
        if lottery.is_empty() {
            return Err(DiscreteError::Menu(format!(
                "type {c} has an empty lottery"
            )));
        }
        for e in lottery {
            if e.probability.is_negative() {
                return Err(DiscreteError::Menu(format!(
                    "type {c} has a negative probability"
                )));
            }
            inst.check_action(e.action)?;
            inst.check_payment_vector(&e.payments)?;
        }
        let total = sum(&lottery
            .iter()
            .map(|e| e.probability.clone())
            .collect::<Vec<_>>());
        if !total.is_one() {
            return Err(DiscreteError::Menu(format!(
                "type {c} lottery probabilities sum to {total}"
            )));
        }
    }
    Ok(())
}

/// Verifies a correlated menu: obedience to every realised pair, and truthful
/// reporting against every misreport followed by best responses.
pub fn verify_correlated_menu(
    inst: &Instance,
    menu: &CorrelatedMenu,
) -> Result<MenuReport, DiscreteError> {
    check_menu(inst, menu)?;
    let types = discrete_types(inst)?;
    let best_response = |payments: &[Rational], cost: &Rational| -> (usize, Rational) {
        (0..inst.num_actions())
            .map(|k| (k, inst.transfer(payments, k) - inst.gamma(k) * cost))
            .fold(None::<(usize, Rational)>, |best, (k, u)| match best {
                Some((_, ref b)) if u <= *b => best,
                _ => Some((k, u)),
            })
            .expect("at least one action")
    };

    let revenue = sum(&types
        .masses
        .iter()
        .zip(&menu.entries)
        .map(|(mass, lottery)| {
            mass * sum(&lottery
                .iter()
                .map(|e| {
                    &e.probability
                        * (&inst.expected_rewards()[e.action]
                            - inst.transfer(&e.payments, e.action))
                })
                .collect::<Vec<_>>())
        })
        .collect::<Vec<_>>());

    for (c, cost) in types.support.iter().enumerate() {
        let own = &menu.entries[c];
        let mut truthful = Rational::zero();
        for (idx, e) in own.iter().enumerate() {
            let obey = inst.transfer(&e.payments, e.action) - inst.gamma(e.action) * cost;
            let (action, best) = best_response(&e.payments, cost);
            if !e.probability.is_zero() && best > obey {
                return Ok(MenuReport {
                    verdict: MenuVerdict::Disobedient {
                        type_index: c,
                        entry: idx,
                        action,
                        gain: best - obey,
                    },
                    revenue,
                });
            }
            truthful += &e.probability * obey;
        }
        for (report, lottery) in menu.entries.iter().enumerate() {
            if report == c {
                continue;
            }
            let deviation = sum(&lottery
                .iter()
                .map(|e| &e.probability * best_response(&e.payments, cost).1)
                .collect::<Vec<_>>());
            if deviation > truthful {
                return Ok(MenuReport {
                    verdict: MenuVerdict::Misreport {
                        type_index: c,
                        report,
                        truthful_utility: truthful,
                        deviation_utility: deviation,
                    },
                    revenue,
                });
            }
        }
    }
    Ok(MenuReport {
        verdict: MenuVerdict::Ic,
        revenue,
    })
}

/// Feasibility of the IC program only, without building a certificate.
pub fn is_implementable(
    inst: &Instance,
    alloc: &DiscreteAllocation,
) -> Result<bool, DiscreteError> {
    let lp = build_ic_lp(inst, alloc)?;
    Ok(matches!(lp::feasible(&lp)?, Feasibility::Yes(_)))
}
