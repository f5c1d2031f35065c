//! Commands behind the `contract-forge` binary.
//!
//! Each command returns a [`Report`]: an exit status, a JSON result document
//! and a short human-readable summary. Discrete and continuous instances are
//! dispatched on `types.kind`.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::continuous::{
    self, check_implementable_cont, expected_virtual_welfare, min_payment_contract_cont,
    top_type_utility, uniform_optimal_contract, verify_continuous_plan, virtual_welfare_rule,
    ContinuousError, ContinuousImplementability, PiecewiseConstantRule,
};
use crate::discrete::{
    self, brute_force_optimal, check_implementable, ic_check, min_payment_contract,
    optimal_contract, verify_correlated_menu, verify_deviation_plan, DiscreteAllocation,
    DiscreteError, IcVerdict, Implementability, MenuVerdict, PlanFailure, PlanVerdict,
};
use crate::document::{self as doc, rational_value, DocumentError};
use crate::model::{validate_instance, Contract, DiscreteTypes, Instance, TypeSpace};
use crate::rational::{format_rational, Rational};

pub const SOLVER: &str = "exact rational two-phase simplex, Bland's rule";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success,
    ParseError,
    InvalidInstance,
    /// Not implementable, not IC, or a certificate that fails to verify.
    Rejected,
}

impl Exit {
    pub fn code(self) -> i32 {
        match self {
            Exit::Success => 0,
            Exit::ParseError => 1,
            Exit::InvalidInstance => 2,
            Exit::Rejected => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub exit: Exit,
    pub document: Value,
    pub summary: String,
}

impl Report {
    fn new(exit: Exit, command: Value, fields: Value, summary: String) -> Self {
        let mut document = match fields {
            Value::Object(map) => map,
            _ => Map::new(),
        };
        document.insert("command".into(), command);
        Report {
            exit,
            document: Value::Object(document),
            summary,
        }
    }

    fn error(exit: Exit, command: &Value, status: &str, message: String) -> Self {
        Report::new(
            exit,
            command.clone(),
            json!({"status": status, "error": message}),
            format!("{status}: {message}\n"),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    pub oracle: bool,
    pub uniform_virtual: bool,
    pub cap: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            oracle: false,
            uniform_virtual: false,
            cap: discrete::DEFAULT_BRUTE_FORCE_CAP,
        }
    }
}

fn read_json(path: &Path, command: &Value) -> Result<Value, Box<Report>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Box::new(Report::error(
            Exit::ParseError,
            command,
            "parse-error",
            format!("cannot read {}: {e}", path.display()),
        ))
    })?;
    doc::parse_json(&text).map_err(|e| Box::new(parse_failure(command, path, &e)))
}

fn parse_failure(command: &Value, path: &Path, e: &DocumentError) -> Report {
    Report::error(
        Exit::ParseError,
        command,
        "parse-error",
        format!("{}: {e}", path.display()),
    )
}

fn load_instance(path: &Path, command: &Value) -> Result<Instance, Box<Report>> {
    let value = read_json(path, command)?;
    let raw =
        doc::parse_instance(&value).map_err(|e| Box::new(parse_failure(command, path, &e)))?;
    validate_instance(raw).map_err(|v| {
        Box::new(Report::new(
            Exit::InvalidInstance,
            command.clone(),
            json!({
                "status": "invalid",
                "violation": {
                    "assumption": v.assumption(),
                    "witness": v.witness(),
                    "message": v.to_string(),
                },
            }),
            format!("invalid instance ({}): {v}\n", v.assumption()),
        ))
    })
}

fn instance_summary(inst: &Instance) -> Value {
    let kind = match inst.types() {
        TypeSpace::Discrete(_) => "discrete",
        TypeSpace::Uniform { .. } => "uniform",
        TypeSpace::Tabulated(_) => "tabulated",
    };
    let mut out = json!({
        "kind": kind,
        "actions": inst.num_actions(),
        "outcomes": inst.num_outcomes(),
        "expected_rewards": doc::rationals_value(inst.expected_rewards()),
    });
    match inst.types() {
        TypeSpace::Discrete(d) => out["types"] = json!(d.len()),
        other => out["upper"] = rational_value(other.upper().expect("continuous")),
    }
    out
}

fn list(values: &[Rational]) -> String {
    let parts: Vec<String> = values.iter().map(format_rational).collect();
    format!("({})", parts.join(", "))
}

fn discrete_table(types: &DiscreteTypes, contract: &Contract<DiscreteAllocation>) -> String {
    let mut out = String::new();
    for (i, cost) in types.support.iter().enumerate() {
        let _ = writeln!(
            out,
            "  type {:>6}  action {}  payments {}",
            format_rational(cost),
            contract.allocation.action(i),
            list(&contract.payments[i])
        );
    }
    out
}

fn piece_table(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
    payments: Option<&[Vec<Rational>]>,
) -> String {
    let points = rule.points(inst.types().upper().expect("continuous"));
    let mut out = String::new();
    for (i, &a) in rule.actions().iter().enumerate() {
        let close = if i + 1 == rule.num_pieces() { "]" } else { ")" };
        let _ = write!(
            out,
            "  [{}, {}{}  action {}",
            format_rational(&points[i]),
            format_rational(&points[i + 1]),
            close,
            a
        );
        if let Some(p) = payments {
            let _ = write!(out, "  payments {}", list(&p[i]));
        }
        out.push('\n');
    }
    out
}

fn provenance(pivots: usize) -> Value {
    json!({"pivots": pivots, "solver": SOLVER})
}

fn plan_costs(verdict: &PlanVerdict) -> (Value, Value, bool) {
    match verdict {
        PlanVerdict::Valid {
            truthful_cost,
            deviation_cost,
        }
        | PlanVerdict::Invalid(PlanFailure::CostNotLower {
            truthful_cost,
            deviation_cost,
        }) => (
            rational_value(truthful_cost),
            rational_value(deviation_cost),
            verdict.is_valid(),
        ),
        PlanVerdict::Invalid(PlanFailure::Dominance { .. }) => (Value::Null, Value::Null, false),
    }
}

fn failure_value(verdict: &PlanVerdict) -> Value {
    match verdict {
        PlanVerdict::Valid { .. } => Value::Null,
        PlanVerdict::Invalid(PlanFailure::Dominance {
            type_index,
            outcome,
            deviated,
            prescribed,
        }) => json!({
            "condition": "dominance",
            "index": type_index,
            "outcome": outcome,
            "deviated": rational_value(deviated),
            "prescribed": rational_value(prescribed),
        }),
        PlanVerdict::Invalid(PlanFailure::CostNotLower { .. }) => {
            json!({"condition": "joint-cost"})
        }
    }
}

fn discrete_input_error(command: &Value, e: &DiscreteError) -> Report {
    Report::error(Exit::ParseError, command, "parse-error", e.to_string())
}

fn continuous_input_error(command: &Value, e: &ContinuousError) -> Report {
    Report::error(Exit::ParseError, command, "parse-error", e.to_string())
}

pub fn cmd_validate(path: &Path) -> Report {
    let command = json!({"name": "validate"});
    match load_instance(path, &command) {
        Ok(inst) => Report::new(
            Exit::Success,
            command,
            json!({"status": "valid", "instance": instance_summary(&inst)}),
            format!(
                "valid instance: {} actions, {} outcomes\n",
                inst.num_actions(),
                inst.num_outcomes()
            ),
        ),
        Err(report) => *report,
    }
}

/// Implementability of a discrete allocation or a breakpoint rule, with
/// minimum payments or a deviation-plan certificate.
pub fn cmd_check(instance: &Path, allocation: &Path) -> Report {
    let command = json!({"name": "check"});
    let inst = match load_instance(instance, &command) {
        Ok(inst) => inst,
        Err(report) => return *report,
    };
    let value = match read_json(allocation, &command) {
        Ok(v) => v,
        Err(report) => return *report,
    };
    match inst.types() {
        TypeSpace::Discrete(types) => match doc::parse_allocation(&value, types) {
            Ok(alloc) => check_discrete(&inst, types, &alloc, &command),
            Err(e) => parse_failure(&command, allocation, &e),
        },
        _ => match doc::parse_rule(&value) {
            Ok(rule) => check_continuous(&inst, &rule, &command),
            Err(e) => parse_failure(&command, allocation, &e),
        },
    }
}

fn check_discrete(
    inst: &Instance,
    types: &DiscreteTypes,
    alloc: &DiscreteAllocation,
    command: &Value,
) -> Report {
    let verdict = match check_implementable(inst, alloc) {
        Ok(v) => v,
        Err(e) => return discrete_input_error(command, &e),
    };
    match verdict {
        Implementability::Implementable { pivots, .. } => {
            let best = match min_payment_contract(inst, alloc) {
                Ok(best) => best,
                Err(e) => return discrete_input_error(command, &e),
            };
            let summary = format!(
                "implementable; minimum expected payment {}, revenue {}\n{}",
                format_rational(&best.expected_payment),
                format_rational(&best.revenue),
                discrete_table(types, &best.contract)
            );
            Report::new(
                Exit::Success,
                command.clone(),
                json!({
                    "status": "implementable",
                    "instance": instance_summary(inst),
                    "contract": {
                        "allocation": doc::allocation_value(alloc, types),
                        "payments": doc::discrete_payments_value(&best.contract.payments, types),
                    },
                    "expected_payment": rational_value(&best.expected_payment),
                    "revenue": rational_value(&best.revenue),
                    "provenance": provenance(pivots + best.pivots),
                }),
                summary,
            )
        }
        Implementability::NotImplementable { plan, pivots } => {
            let verdict =
                verify_deviation_plan(inst, alloc, &plan).expect("plan built for this allocation");
            let (truthful, deviation, valid) = plan_costs(&verdict);
            let summary = format!(
                "not implementable; deviation plan lowers joint cost from {} to {}\n",
                truthful.as_str().unwrap_or("?"),
                deviation.as_str().unwrap_or("?")
            );
            Report::new(
                Exit::Rejected,
                command.clone(),
                json!({
                    "status": "not-implementable",
                    "instance": instance_summary(inst),
                    "contract": {"allocation": doc::allocation_value(alloc, types)},
                    "certificate": {
                        "kind": "deviation-plan",
                        "weights": doc::deviation_plan_value(&plan, types),
                        "truthful_cost": truthful,
                        "deviation_cost": deviation,
                        "verified": valid,
                    },
                    "provenance": provenance(pivots),
                }),
                summary,
            )
        }
    }
}

fn continuous_certificate(
    inst: &Instance,
    rule: &PiecewiseConstantRule,
    plan: &continuous::ContinuousDeviationPlan,
) -> Value {
    let verdict = verify_continuous_plan(inst, rule, plan).expect("plan built for this rule");
    let (truthful, deviation, valid) = plan_costs(&verdict);
    let mut cert = doc::continuous_plan_value(plan);
    cert["kind"] = json!("continuous-deviation-plan");
    cert["truthful_cost"] = truthful;
    cert["deviation_cost"] = deviation;
    cert["verified"] = json!(valid);
    cert
}

fn check_continuous(inst: &Instance, rule: &PiecewiseConstantRule, command: &Value) -> Report {
    let verdict = match check_implementable_cont(inst, rule) {
        Ok(v) => v,
        Err(ContinuousError::NotPiecewiseMonotone { piece }) => {
            return Report::new(
                Exit::Rejected,
                command.clone(),
                json!({
                    "status": "not-implementable",
                    "instance": instance_summary(inst),
                    "contract": {"allocation": doc::rule_value(rule)},
                    "reason": {"kind": "not-monotone", "piece": piece},
                }),
                format!("not implementable: piece {piece} raises the action, and implementable rules are monotone\n"),
            )
        }
        Err(e) => return continuous_input_error(command, &e),
    };
    match verdict {
        ContinuousImplementability::Implementable { rule, pivots, .. } => {
            let best = match min_payment_contract_cont(inst, &rule, false) {
                Ok(best) => best,
                Err(e) => return continuous_input_error(command, &e),
            };
            continuous_contract_report(
                inst,
                command,
                "implementable",
                &best.contract,
                &best.expected_payment,
                &best.revenue,
                pivots + best.pivots,
                Exit::Success,
                None,
            )
        }
        ContinuousImplementability::NotImplementable { rule, plan, pivots } => Report::new(
            Exit::Rejected,
            command.clone(),
            json!({
                "status": "not-implementable",
                "instance": instance_summary(inst),
                "contract": {"allocation": doc::rule_value(&rule)},
                "certificate": continuous_certificate(inst, &rule, &plan),
                "provenance": provenance(pivots),
            }),
            format!(
                "not implementable; deviation plan attached\n{}",
                piece_table(inst, &rule, None)
            ),
        ),
    }
}

#[allow(clippy::too_many_arguments)]
fn continuous_contract_report(
    inst: &Instance,
    command: &Value,
    status: &str,
    contract: &Contract<PiecewiseConstantRule>,
    expected_payment: &Rational,
    revenue: &Rational,
    pivots: usize,
    exit: Exit,
    note: Option<&str>,
) -> Report {
    let rule = &contract.allocation;
    let vw = expected_virtual_welfare(inst, rule).expect("validated rule");
    let top = top_type_utility(inst, rule, &contract.payments).expect("validated payments");
    let mut fields = json!({
        "status": status,
        "instance": instance_summary(inst),
        "contract": {
            "allocation": doc::rule_value(rule),
            "payments": doc::piece_payments_value(&contract.payments),
        },
        "expected_payment": rational_value(expected_payment),
        "revenue": rational_value(revenue),
        "virtual_welfare": rational_value(&vw),
        "top_type_utility": rational_value(&top),
        "provenance": provenance(pivots),
    });
    if let Some(note) = note {
        fields["note"] = json!(note);
    }
    let summary = format!(
        "{status}; revenue {}, virtual welfare {}, top-type utility {}\n{}",
        format_rational(revenue),
        format_rational(&vw),
        format_rational(&top),
        piece_table(inst, rule, Some(&contract.payments))
    );
    Report::new(exit, command.clone(), fields, summary)
}

/// Re-verifies a result document produced by `check` or `solve`: deviation
/// plans against both conditions, payments against incentive compatibility.
pub fn cmd_check_certificate(instance: &Path, result: &Path) -> Report {
    let command = json!({"name": "check", "certificate": true});
    let inst = match load_instance(instance, &command) {
        Ok(inst) => inst,
        Err(report) => return *report,
    };
    let value = match read_json(result, &command) {
        Ok(v) => v,
        Err(report) => return *report,
    };
    let Some(contract) = value.get("contract") else {
        return parse_failure(
            &command,
            result,
            &DocumentError::Schema {
                path: "$".into(),
                message: "missing field \"contract\"".into(),
            },
        );
    };
    let outcome = match inst.types() {
        TypeSpace::Discrete(types) => {
            recheck_discrete(&inst, types, contract, value.get("certificate"))
        }
        _ => recheck_continuous(&inst, contract, value.get("certificate")),
    };
    match outcome {
        Ok((what, true, detail)) => Report::new(
            Exit::Success,
            command,
            json!({"status": "valid", "verified": what, "detail": detail}),
            format!("{what} verified\n"),
        ),
        Ok((what, false, detail)) => Report::new(
            Exit::Rejected,
            command,
            json!({"status": "invalid", "verified": what, "detail": detail}),
            format!("{what} does not verify\n"),
        ),
        Err(e) => parse_failure(&command, result, &e),
    }
}

type Recheck = Result<(&'static str, bool, Value), DocumentError>;

fn schema_error(path: &str, message: impl ToString) -> DocumentError {
    DocumentError::Schema {
        path: path.into(),
        message: message.to_string(),
    }
}

fn recheck_discrete(
    inst: &Instance,
    types: &DiscreteTypes,
    contract: &Value,
    certificate: Option<&Value>,
) -> Recheck {
    let alloc = doc::parse_allocation(contract, types)?;
    if let Some(cert) = certificate {
        let weights = cert
            .get("weights")
            .ok_or_else(|| schema_error("$.certificate", "missing field \"weights\""))?;
        let plan = doc::parse_deviation_plan(weights, types, "$.certificate.weights")?;
        return match verify_deviation_plan(inst, &alloc, &plan) {
            Ok(verdict) => Ok((
                "deviation plan",
                verdict.is_valid(),
                failure_value(&verdict),
            )),
            Err(e @ (DiscreteError::NotNormalized { .. } | DiscreteError::NegativeWeight)) => {
                Ok(("deviation plan", false, json!({"reason": e.to_string()})))
            }
            Err(e) => Err(schema_error("$.certificate", e)),
        };
    }
    let payments = contract
        .get("payments")
        .ok_or_else(|| schema_error("$.contract", "missing field \"payments\""))?;
    let payments = doc::parse_discrete_payments(payments, types, "$.contract.payments")?;
    let verdict = ic_check(
        inst,
        &Contract {
            allocation: alloc,
            payments,
        },
    )
    .map_err(|e| schema_error("$.contract", e))?;
    Ok(match verdict {
        IcVerdict::Ic => ("contract", true, Value::Null),
        IcVerdict::Violation(v) => ("contract", false, violation_value(types, &v)),
    })
}

fn recheck_continuous(inst: &Instance, contract: &Value, certificate: Option<&Value>) -> Recheck {
    let rule = doc::parse_rule(contract)?;
    if let Some(cert) = certificate {
        let plan = doc::parse_continuous_plan(cert, "$.certificate")?;
        return match verify_continuous_plan(inst, &rule, &plan) {
            Ok(verdict) => Ok((
                "deviation plan",
                verdict.is_valid(),
                failure_value(&verdict),
            )),
            Err(e @ (ContinuousError::NotNormalized { .. } | ContinuousError::NegativeWeight)) => {
                Ok(("deviation plan", false, json!({"reason": e.to_string()})))
            }
            Err(e) => Err(schema_error("$.certificate", e)),
        };
    }
    let payments = contract
        .get("payments")
        .ok_or_else(|| schema_error("$.contract", "missing field \"payments\""))?;
    let payments: Vec<Vec<Rational>> = serde_json::from_value::<Vec<Value>>(payments.clone())
        .map_err(|e| schema_error("$.contract.payments", e))?
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let path = format!("$.contract.payments[{i}]");
            t.as_array()
                .ok_or_else(|| schema_error(&path, "expected an array"))?
                .iter()
                .map(|v| doc::rational_from_value(v, &path))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    if payments.len() != rule.num_pieces() {
        return Err(schema_error(
            "$.contract.payments",
            "one payment vector per piece expected",
        ));
    }
    let lp =
        continuous::build_lp2(inst, &rule, false).map_err(|e| schema_error("$.contract", e))?;
    let rule_is_merged = rule.normalized() == rule;
    let ok = rule_is_merged && lp.satisfies(&payments.concat());
    let identity = continuous::payment_identity(inst, &rule, &payments).is_ok();
    Ok((
        "contract",
        ok && identity,
        json!({"payment_identity": identity}),
    ))
}

fn violation_value(types: &DiscreteTypes, v: &discrete::IcViolation) -> Value {
    json!({
        "type": format_rational(&types.support[v.type_index]),
        "report": format_rational(&types.support[v.report]),
        "action": v.action,
        "utility": rational_value(&v.utility),
        "prescribed_utility": rational_value(&v.prescribed_utility),
    })
}

/// Optimal contract: monotone search for discrete types, the virtual-welfare
/// contract for uniform costs, and an implementability probe of the
/// virtual-welfare rule for tabulated costs.
pub fn cmd_solve(instance: &Path, options: SolveOptions) -> Report {
    let command = json!({
        "name": "solve",
        "oracle": options.oracle,
        "uniform_virtual": options.uniform_virtual,
    });
    let inst = match load_instance(instance, &command) {
        Ok(inst) => inst,
        Err(report) => return *report,
    };
    if options.uniform_virtual && !matches!(inst.types(), TypeSpace::Uniform { .. }) {
        return Report::error(
            Exit::InvalidInstance,
            &command,
            "invalid",
            "--uniform-virtual needs uniformly distributed costs".into(),
        );
    }
    match inst.types() {
        TypeSpace::Discrete(types) => solve_discrete(&inst, types, options, &command),
        TypeSpace::Uniform { .. } => solve_uniform(&inst, &command),
        TypeSpace::Tabulated(_) => solve_tabulated(&inst, &command),
    }
}

fn solve_discrete(
    inst: &Instance,
    types: &DiscreteTypes,
    options: SolveOptions,
    command: &Value,
) -> Report {
    let opt = match optimal_contract(inst) {
        Ok(opt) => opt,
        Err(e) => return discrete_input_error(command, &e),
    };
    let mut fields = json!({
        "status": "optimal",
        "instance": instance_summary(inst),
        "contract": {
            "allocation": doc::allocation_value(&opt.contract.allocation, types),
            "payments": doc::discrete_payments_value(&opt.contract.payments, types),
        },
        "revenue": rational_value(&opt.revenue),
        "expected_payment": rational_value(&opt.expected_payment),
        "search": {
            "space": format!("{:?}", opt.search).to_lowercase(),
            "justification": opt.search.describe(),
            "rules_examined": opt.rules_examined,
            "implementable_rules": opt.implementable_rules,
        },
        "provenance": provenance(opt.pivots),
    });
    let mut summary = format!(
        "optimal revenue {} over {} candidate allocations\n{}",
        format_rational(&opt.revenue),
        opt.rules_examined,
        discrete_table(types, &opt.contract)
    );
    let mut exit = Exit::Success;
    if options.oracle {
        fields["oracle"] = match brute_force_optimal(inst, options.cap) {
            Ok(brute) => {
                let agrees = brute.revenue == opt.revenue;
                let _ = writeln!(
                    summary,
                    "exhaustive search over {} allocations: revenue {} ({})",
                    brute.rules_examined,
                    format_rational(&brute.revenue),
                    if agrees { "agrees" } else { "DISAGREES" }
                );
                if !agrees {
                    exit = Exit::Rejected;
                }
                json!({
                    "status": "complete",
                    "revenue": rational_value(&brute.revenue),
                    "agrees": agrees,
                    "rules_examined": brute.rules_examined,
                })
            }
            Err(DiscreteError::CapExceeded { rules, cap }) => {
                let _ = writeln!(
                    summary,
                    "exhaustive search skipped: {rules} allocations exceed the cap of {cap}"
                );
                json!({"status": "cap-exceeded", "rules": rules.to_string(), "cap": cap})
            }
            Err(e) => return discrete_input_error(command, &e),
        };
    }
    Report::new(exit, command.clone(), fields, summary)
}

fn solve_uniform(inst: &Instance, command: &Value) -> Report {
    match uniform_optimal_contract(inst) {
        Ok(opt) => continuous_contract_report(
            inst,
            command,
            "optimal",
            &opt.contract,
            &opt.expected_payment,
            &opt.revenue,
            opt.pivots,
            Exit::Success,
            None,
        ),
        Err(ContinuousError::AssumptionViolated { action }) => Report::new(
            Exit::InvalidInstance,
            command.clone(),
            json!({
                "status": "invalid",
                "violation": {
                    "assumption": "top-type-zero-effort",
                    "witness": [action],
                    "message": format!("gamma_{action} * c_max <= R_{action}"),
                },
            }),
            format!("invalid instance: action {action} is worth incentivising even at the highest cost\n"),
        ),
        Err(ContinuousError::PinnedInfeasible) => Report::error(
            Exit::Rejected,
            command,
            "not-implementable",
            "virtual-welfare rule has no payments with zero pay on outcome 0".into(),
        ),
        Err(e) => continuous_input_error(command, &e),
    }
}

const TABULATED_NOTE: &str =
    "optimality of the virtual-welfare rule is only established for uniform costs";

fn solve_tabulated(inst: &Instance, command: &Value) -> Report {
    let rule = match virtual_welfare_rule(inst) {
        Ok(rule) => rule,
        Err(ContinuousError::NotRegular { knot }) => {
            return Report::new(
                Exit::InvalidInstance,
                command.clone(),
                json!({
                    "status": "invalid",
                    "violation": {
                        "assumption": "regular",
                        "witness": [knot],
                        "message": format!("virtual cost decreases at knot {knot}"),
                    },
                }),
                format!("invalid instance: virtual cost decreases at knot {knot}\n"),
            )
        }
        Err(e) => return continuous_input_error(command, &e),
    };
    match check_implementable_cont(inst, &rule) {
        Ok(ContinuousImplementability::Implementable { rule, pivots, .. }) => {
            match min_payment_contract_cont(inst, &rule, false) {
                Ok(best) => continuous_contract_report(
                    inst,
                    command,
                    "implementable",
                    &best.contract,
                    &best.expected_payment,
                    &best.revenue,
                    pivots + best.pivots,
                    Exit::Success,
                    Some(TABULATED_NOTE),
                ),
                Err(e) => continuous_input_error(command, &e),
            }
        }
        Ok(ContinuousImplementability::NotImplementable { rule, plan, pivots }) => Report::new(
            Exit::Rejected,
            command.clone(),
            json!({
                "status": "not-implementable",
                "instance": instance_summary(inst),
                "contract": {"allocation": doc::rule_value(&rule)},
                "certificate": continuous_certificate(inst, &rule, &plan),
                "note": TABULATED_NOTE,
                "provenance": provenance(pivots),
            }),
            format!(
                "virtual-welfare rule is not implementable\n{}",
                piece_table(inst, &rule, None)
            ),
        ),
        Err(e) => continuous_input_error(command, &e),
    }
}

/// Incentive compatibility and revenue of a randomised menu.
pub fn cmd_verify_menu(instance: &Path, menu: &Path) -> Report {
    let command = json!({"name": "verify-menu"});
    let inst = match load_instance(instance, &command) {
        Ok(inst) => inst,
        Err(report) => return *report,
    };
    let Some(types) = inst.types().as_discrete() else {
        return Report::error(
            Exit::InvalidInstance,
            &command,
            "invalid",
            "menus are defined for discrete types only".into(),
        );
    };
    let value = match read_json(menu, &command) {
        Ok(v) => v,
        Err(report) => return *report,
    };
    let parsed = match doc::parse_menu(&value, types) {
        Ok(m) => m,
        Err(e) => return parse_failure(&command, menu, &e),
    };
    let report = match verify_correlated_menu(&inst, &parsed) {
        Ok(r) => r,
        Err(e) => return discrete_input_error(&command, &e),
    };
    let key = |i: usize| format_rational(&types.support[i]);
    let (exit, status, violation) = match &report.verdict {
        MenuVerdict::Ic => (Exit::Success, "ic", Value::Null),
        MenuVerdict::Disobedient {
            type_index,
            entry,
            action,
            gain,
        } => (
            Exit::Rejected,
            "violation",
            json!({
                "kind": "disobedient",
                "type": key(*type_index),
                "entry": entry,
                "action": action,
                "gain": rational_value(gain),
            }),
        ),
        MenuVerdict::Misreport {
            type_index,
            report: r,
            truthful_utility,
            deviation_utility,
        } => (
            Exit::Rejected,
            "violation",
            json!({
                "kind": "misreport",
                "type": key(*type_index),
                "report": key(*r),
                "truthful_utility": rational_value(truthful_utility),
                "deviation_utility": rational_value(deviation_utility),
            }),
        ),
    };
    let mut fields = json!({
        "status": status,
        "instance": instance_summary(&inst),
        "menu": doc::menu_value(&parsed, types),
        "revenue": rational_value(&report.revenue),
    });
    if !violation.is_null() {
        fields["violation"] = violation;
    }
    let summary = format!(
        "menu {status}; revenue {}\n",
        format_rational(&report.revenue)
    );
    Report::new(exit, command, fields, summary)
}
