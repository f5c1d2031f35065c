//! Exact rational linear programming.
//!
//! A dense two-phase primal simplex over [`Rational`] with Bland's rule. Every
//! answer carries a certificate that can be re-checked in exact arithmetic:
//! optimal solutions come with a dual vector attaining the same objective,
//! infeasible programs with Farkas multipliers.
//!
//! Certificate conventions, per original constraint `i`:
//!
//! * Farkas multipliers apply to the constraint rewritten as `a·x <= b`
//!   (`>=` rows are negated first). Multipliers of inequality rows are
//!   nonnegative, those of equality rows are free, and the combination
//!   `sum_i y_i a_i` is nonnegative on nonnegative variables and zero on free
//!   ones while `sum_i y_i b_i < 0`.
//! * Dual values are the multipliers `y` with `sum_i y_i b_i` equal to the
//!   optimal objective and `c - yᵀA` of the sign required by the sense.

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::{dot, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    NonNegative,
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<Rational>,
    pub relation: Relation,
    pub rhs: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub vars: Vec<VarKind>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<Rational>,
    pub sense: Sense,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSolution {
    pub point: Vec<Rational>,
    pub dual: Vec<Rational>,
    pub objective: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarkasCertificate {
    pub multipliers: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal(OptimalSolution),
    Infeasible(FarkasCertificate),
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Yes(Vec<Rational>),
    No(FarkasCertificate),
}

impl LinearProgram {
    /// A feasibility problem over `num_vars` nonnegative variables.
    pub fn nonnegative(num_vars: usize) -> Self {
        Self::with_vars(vec![VarKind::NonNegative; num_vars])
    }

    pub fn with_vars(vars: Vec<VarKind>) -> Self {
        let objective = vec![Rational::zero(); vars.len()];
        LinearProgram {
            vars,
            constraints: Vec::new(),
            objective,
            sense: Sense::Max,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Appends a constraint and returns its row index.
    pub fn add_constraint(
        &mut self,
        coeffs: Vec<Rational>,
        relation: Relation,
        rhs: Rational,
    ) -> usize {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn set_objective(&mut self, sense: Sense, coeffs: Vec<Rational>) {
        self.sense = sense;
        self.objective = coeffs;
    }

    pub fn objective_value(&self, point: &[Rational]) -> Rational {
        dot(&self.objective, point)
    }

    /// Exact check of every constraint and variable sign.
    pub fn satisfies(&self, point: &[Rational]) -> bool {
        if point.len() != self.num_vars() {
            return false;
        }
        let signs_ok = self
            .vars
            .iter()
            .zip(point)
            .all(|(kind, v)| *kind == VarKind::Free || !v.is_negative());
        signs_ok
            && self.constraints.iter().all(|c| {
                let lhs = dot(&c.coeffs, point);
                match c.relation {
                    Relation::Le => lhs <= c.rhs,
                    Relation::Ge => lhs >= c.rhs,
                    Relation::Eq => lhs == c.rhs,
                }
            })
    }

    fn check_shape(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.objective.len() != n {
            return Err(LpError::Malformed(format!(
                "objective has {} coefficients for {n} variables",
                self.objective.len()
            )));
        }
        if let Some(i) = self.constraints.iter().position(|c| c.coeffs.len() != n) {
            return Err(LpError::Malformed(format!(
                "constraint {i} has {} coefficients for {n} variables",
                self.constraints[i].coeffs.len()
            )));
        }
        Ok(())
    }
}

impl FarkasCertificate {
    /// Combination `(sum_i y_i ã_i, sum_i y_i b̃_i)` over the `<=`-normalised rows.
    pub fn combination(&self, lp: &LinearProgram) -> (Vec<Rational>, Rational) {
        let mut coeffs = vec![Rational::zero(); lp.num_vars()];
        let mut rhs = Rational::zero();
        for (y, c) in self.multipliers.iter().zip(&lp.constraints) {
            if y.is_zero() {
                continue;
            }
            let y = if c.relation == Relation::Ge {
                -y
            } else {
                y.clone()
            };
            for (acc, a) in coeffs.iter_mut().zip(&c.coeffs) {
                if !a.is_zero() {
                    *acc += &y * a;
                }
            }
            rhs += &y * &c.rhs;
        }
        (coeffs, rhs)
    }

    /// True iff the multipliers prove `0 <= (negative number)`.
    pub fn verify(&self, lp: &LinearProgram) -> bool {
        if self.multipliers.len() != lp.num_constraints() {
            return false;
        }
        let signs_ok = self
            .multipliers
            .iter()
            .zip(&lp.constraints)
            .all(|(y, c)| c.relation == Relation::Eq || !y.is_negative());
        if !signs_ok {
            return false;
        }
        let (coeffs, rhs) = self.combination(lp);
        let coeffs_ok = coeffs.iter().zip(&lp.vars).all(|(d, kind)| match kind {
            VarKind::NonNegative => !d.is_negative(),
            VarKind::Free => d.is_zero(),
        });
        coeffs_ok && rhs.is_negative()
    }
}

impl OptimalSolution {
    /// Primal feasibility, dual feasibility and equal objectives, all exact.
    pub fn verify(&self, lp: &LinearProgram) -> bool {
        if !lp.satisfies(&self.point) || self.dual.len() != lp.num_constraints() {
            return false;
        }
        if lp.objective_value(&self.point) != self.objective {
            return false;
        }
        let dual_objective = self
            .dual
            .iter()
            .zip(&lp.constraints)
            .fold(Rational::zero(), |acc, (y, c)| acc + y * &c.rhs);
        if dual_objective != self.objective {
            return false;
        }
        // For Min the multipliers of >= rows are nonnegative, of <= rows nonpositive;
        // reduced costs c - yᵀA are nonnegative. Max mirrors every sign.
        let flip = lp.sense == Sense::Max;
        let row_signs_ok = self.dual.iter().zip(&lp.constraints).all(|(y, c)| {
            let y = if flip { -y } else { y.clone() };
            match c.relation {
                Relation::Ge => !y.is_negative(),
                Relation::Le => !y.is_positive(),
                Relation::Eq => true,
            }
        });
        let reduced_ok = (0..lp.num_vars()).all(|j| {
            let mut d = lp.objective[j].clone();
            for (y, c) in self.dual.iter().zip(&lp.constraints) {
                if !y.is_zero() && !c.coeffs[j].is_zero() {
                    d -= y * &c.coeffs[j];
                }
            }
            if flip {
                d = -d;
            }
            match lp.vars[j] {
                VarKind::NonNegative => !d.is_negative(),
                VarKind::Free => d.is_zero(),
            }
        });
        row_signs_ok && reduced_ok
    }
}

/// Solves `lp` exactly.
pub fn solve(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    lp.check_shape()?;
    let mut tab = Tableau::build(lp);
    let status = tab.run(lp);
    Ok(LpOutcome {
        status,
        pivots: tab.pivots,
    })
}

/// Phase-1 only: a feasible point or a Farkas certificate.
pub fn feasible(lp: &LinearProgram) -> Result<Feasibility, LpError> {
    let mut zero = lp.clone();
    zero.objective = vec![Rational::zero(); lp.num_vars()];
    match solve(&zero)?.status {
        LpStatus::Optimal(sol) => Ok(Feasibility::Yes(sol.point)),
        LpStatus::Infeasible(cert) => Ok(Feasibility::No(cert)),
        LpStatus::Unbounded => unreachable!("a zero objective cannot be unbounded"),
    }
}

/// Standard-form column bookkeeping for one original variable.
#[derive(Debug, Clone, Copy)]
struct VarColumns {
    pos: usize,
    neg: Option<usize>,
}

struct Tableau {
    /// `rows[r][cols]` holds the right-hand side.
    rows: Vec<Vec<Rational>>,
    /// Reduced costs; `obj[cols]` holds minus the current objective value.
    obj: Vec<Rational>,
    basis: Vec<usize>,
    cols: usize,
    var_cols: Vec<VarColumns>,
    /// Column forming the initial identity in each row (slack or artificial).
    identity: Vec<usize>,
    artificial: Vec<bool>,
    barred: Vec<bool>,
    /// Set where the original row was negated to make its right-hand side nonnegative.
    row_sign: Vec<bool>,
    relations: Vec<Relation>,
    pivots: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let mut next = 0usize;
        let var_cols: Vec<VarColumns> = lp
            .vars
            .iter()
            .map(|kind| {
                let pos = next;
                next += 1;
                let neg = (*kind == VarKind::Free).then(|| {
                    next += 1;
                    next - 1
                });
                VarColumns { pos, neg }
            })
            .collect();

        let negated: Vec<bool> = lp.constraints.iter().map(|c| c.rhs.is_negative()).collect();
        let mut slack_col = Vec::with_capacity(lp.num_constraints());
        for c in &lp.constraints {
            if c.relation == Relation::Eq {
                slack_col.push(None);
            } else {
                slack_col.push(Some(next));
                next += 1;
            }
        }
        // A row needs an artificial unless its slack enters with coefficient +1.
        let mut identity = Vec::with_capacity(lp.num_constraints());
        let mut artificial_cols = Vec::new();
        for (i, c) in lp.constraints.iter().enumerate() {
            let slack_positive = match c.relation {
                Relation::Le => !negated[i],
                Relation::Ge => negated[i],
                Relation::Eq => false,
            };
            if slack_positive {
                identity.push(slack_col[i].expect("inequality rows have a slack"));
            } else {
                identity.push(next);
                artificial_cols.push(next);
                next += 1;
            }
        }
        let cols = next;
        let mut artificial = vec![false; cols];
        for &a in &artificial_cols {
            artificial[a] = true;
        }

        let rows = lp
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut row = vec![Rational::zero(); cols + 1];
                for (v, a) in c.coeffs.iter().enumerate() {
                    if a.is_zero() {
                        continue;
                    }
                    let a = if negated[i] { -a } else { a.clone() };
                    if let Some(neg) = var_cols[v].neg {
                        row[neg] = -a.clone();
                    }
                    row[var_cols[v].pos] = a;
                }
                if let Some(s) = slack_col[i] {
                    let unit = if c.relation == Relation::Le {
                        Rational::one()
                    } else {
                        -Rational::one()
                    };
                    row[s] = if negated[i] { -unit } else { unit };
                }
                if artificial[identity[i]] {
                    row[identity[i]] = Rational::one();
                }
                row[cols] = if negated[i] { -&c.rhs } else { c.rhs.clone() };
                row
            })
            .collect();

        Tableau {
            rows,
            obj: vec![Rational::zero(); cols + 1],
            basis: identity.clone(),
            cols,
            var_cols,
            identity,
            artificial,
            barred: vec![false; cols],
            row_sign: negated,
            relations: lp.constraints.iter().map(|c| c.relation).collect(),
            pivots: 0,
        }
    }

    fn run(&mut self, lp: &LinearProgram) -> LpStatus {
        if self.artificial.iter().any(|&a| a) {
            let phase_one: Vec<Rational> = self
                .artificial
                .iter()
                .map(|&a| if a { Rational::one() } else { Rational::zero() })
                .collect();
            self.price(&phase_one);
            let bounded = self.iterate();
            debug_assert!(bounded, "phase one is bounded below by zero");
            if self.obj[self.cols].is_negative() {
                let cert = self.farkas(&phase_one);
                debug_assert!(cert.verify(lp), "Farkas certificate failed re-verification");
                return LpStatus::Infeasible(cert);
            }
            self.drive_out_artificials();
            for j in 0..self.cols {
                if self.artificial[j] {
                    self.barred[j] = true;
                }
            }
        }

        let mut costs = vec![Rational::zero(); self.cols];
        for (v, cols) in self.var_cols.iter().enumerate() {
            let c = match lp.sense {
                Sense::Min => lp.objective[v].clone(),
                Sense::Max => -&lp.objective[v],
            };
            if let Some(neg) = cols.neg {
                costs[neg] = -c.clone();
            }
            costs[cols.pos] = c;
        }
        self.price(&costs);
        if !self.iterate() {
            return LpStatus::Unbounded;
        }

        let mut values = vec![Rational::zero(); self.cols];
        for (r, &b) in self.basis.iter().enumerate() {
            values[b] = self.rows[r][self.cols].clone();
        }
        let point: Vec<Rational> = self
            .var_cols
            .iter()
            .map(|vc| match vc.neg {
                Some(neg) => &values[vc.pos] - &values[neg],
                None => values[vc.pos].clone(),
            })
            .collect();
        let dual: Vec<Rational> = (0..self.rows.len())
            .map(|r| {
                let id = self.identity[r];
                let w = &costs[id] - &self.obj[id];
                let w = if self.row_sign[r] { -w } else { w };
                match lp.sense {
                    Sense::Min => w,
                    Sense::Max => -w,
                }
            })
            .collect();
        let objective = lp.objective_value(&point);
        LpStatus::Optimal(OptimalSolution {
            point,
            dual,
            objective,
        })
    }

    /// Resets the reduced-cost row for `costs` against the current basis.
    fn price(&mut self, costs: &[Rational]) {
        let mut obj: Vec<Rational> = costs.to_vec();
        obj.push(Rational::zero());
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = &costs[b];
            if cb.is_zero() {
                continue;
            }
            for (o, t) in obj.iter_mut().zip(&self.rows[r]) {
                if !t.is_zero() {
                    *o -= cb * t;
                }
            }
        }
        self.obj = obj;
    }

    /// Bland's rule until optimal (`true`) or unbounded (`false`).
    fn iterate(&mut self) -> bool {
        loop {
            let entering = (0..self.cols).find(|&j| !self.barred[j] && self.obj[j].is_negative());
            let Some(e) = entering else {
                return true;
            };
            let mut leave: Option<(usize, Rational)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][e];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.rows[r][self.cols] / a;
                let better = match &leave {
                    None => true,
                    Some((best_r, best)) => {
                        ratio < *best || (ratio == *best && self.basis[r] < self.basis[*best_r])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            let Some((r, _)) = leave else {
                return false;
            };
            self.pivot(r, e);
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        self.pivots += 1;
        let mut pivot_row = std::mem::take(&mut self.rows[r]);
        let inv = pivot_row[e].recip();
        for v in pivot_row.iter_mut() {
            if !v.is_zero() {
                *v *= &inv;
            }
        }
        let support: Vec<usize> = (0..=self.cols)
            .filter(|&j| !pivot_row[j].is_zero())
            .collect();
        let eliminate = |row: &mut Vec<Rational>| {
            let f = row[e].clone();
            if f.is_zero() {
                return;
            }
            for &j in &support {
                row[j] -= &f * &pivot_row[j];
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.obj);
        self.rows[r] = pivot_row;
        self.basis[r] = e;
    }

    /// Replaces zero-level basic artificials by structural or slack columns
    /// where the row allows it; rows left with an artificial are redundant.
    fn drive_out_artificials(&mut self) {
        for r in 0..self.rows.len() {
            if !self.artificial[self.basis[r]] {
                continue;
            }
            if let Some(j) =
                (0..self.cols).find(|&j| !self.artificial[j] && !self.rows[r][j].is_zero())
            {
                self.pivot(r, j);
            }
        }
    }

    fn farkas(&self, phase_one: &[Rational]) -> FarkasCertificate {
        // w = c_B B^-1 from the identity columns; u = -w proves infeasibility of
        // the standard form, mapped back through row negation and >= flips.
        let multipliers = (0..self.rows.len())
            .map(|r| {
                let id = self.identity[r];
                let u = &self.obj[id] - &phase_one[id];
                let u = if self.row_sign[r] { -u } else { u };
                if self.is_ge_row(r) {
                    -u
                } else {
                    u
                }
            })
            .collect();
        FarkasCertificate { multipliers }
    }

    fn is_ge_row(&self, r: usize) -> bool {
        self.relations[r] == Relation::Ge
    }
}
