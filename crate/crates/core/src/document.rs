//! JSON documents read and written by the command-line tool.
//!
//! Numbers are carried as strings in exact form: decimals or `p/q` on input,
//! lowest-terms `p/q` on output. JSON numbers are accepted on input too.
//! Object keys come out sorted, so output bytes depend only on content.
//!
//! Discrete types are addressed by their cost, printed canonically
//! (`"1"`, `"1/2"`); on input any rational spelling of a support point works.

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::continuous::{BreakpointCopy, ContinuousDeviationPlan, PiecewiseConstantRule};
use crate::discrete::{CorrelatedMenu, DeviationPlan, DiscreteAllocation, MenuEntry};
use crate::model::{DiscreteTypes, RawInstance, Tabulation, TypeSpace};
use crate::rational::{format_rational, parse_rational, ParseRationalError, Rational};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DocumentError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: {source}")]
    Number {
        path: String,
        source: ParseRationalError,
    },
}

fn schema(path: &str, message: impl Into<String>) -> DocumentError {
    DocumentError::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

pub fn parse_json(text: &str) -> Result<Value, DocumentError> {
    serde_json::from_str(text).map_err(|e| DocumentError::Json(e.to_string()))
}

fn field<'a>(obj: &'a Value, key: &str, path: &str) -> Result<&'a Value, DocumentError> {
    obj.get(key)
        .ok_or_else(|| schema(path, format!("missing field \"{key}\"")))
}

fn array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>, DocumentError> {
    value
        .as_array()
        .ok_or_else(|| schema(path, "expected an array"))
}

pub fn rational_from_value(value: &Value, path: &str) -> Result<Rational, DocumentError> {
    let text = match value {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err(schema(path, "expected a number or numeric string")),
    };
    parse_rational(&text).map_err(|source| DocumentError::Number {
        path: path.to_string(),
        source,
    })
}

fn rationals(value: &Value, path: &str) -> Result<Vec<Rational>, DocumentError> {
    array(value, path)?
        .iter()
        .enumerate()
        .map(|(i, v)| rational_from_value(v, &format!("{path}[{i}]")))
        .collect()
}

fn index(value: &Value, path: &str) -> Result<usize, DocumentError> {
    value
        .as_u64()
        .and_then(|v| usize::try_from(v).ok())
        .ok_or_else(|| schema(path, "expected a nonnegative integer"))
}

pub fn rational_value(value: &Rational) -> Value {
    Value::String(format_rational(value))
}

pub fn rationals_value(values: &[Rational]) -> Value {
    Value::Array(values.iter().map(rational_value).collect())
}

/// Parses an instance document into an unvalidated instance.
pub fn parse_instance(value: &Value) -> Result<RawInstance, DocumentError> {
    let gammas = rationals(field(value, "gammas", "$")?, "$.gammas")?;
    let rewards = rationals(field(value, "rewards", "$")?, "$.rewards")?;
    let dist = array(field(value, "dist", "$")?, "$.dist")?
        .iter()
        .enumerate()
        .map(|(i, row)| rationals(row, &format!("$.dist[{i}]")))
        .collect::<Result<_, _>>()?;
    let types = parse_types(field(value, "types", "$")?)?;
    Ok(RawInstance {
        gammas,
        rewards,
        dist,
        types,
    })
}

fn parse_types(value: &Value) -> Result<TypeSpace, DocumentError> {
    let path = "$.types";
    let kind = field(value, "kind", path)?
        .as_str()
        .ok_or_else(|| schema("$.types.kind", "expected a string"))?;
    match kind {
        "discrete" => Ok(TypeSpace::Discrete(DiscreteTypes {
            support: rationals(field(value, "support", path)?, "$.types.support")?,
            masses: rationals(field(value, "masses", path)?, "$.types.masses")?,
        })),
        "uniform" => Ok(TypeSpace::Uniform {
            upper: rational_from_value(field(value, "upper", path)?, "$.types.upper")?,
        }),
        "tabulated" => Ok(TypeSpace::Tabulated(Tabulation {
            grid: rationals(field(value, "grid", path)?, "$.types.grid")?,
            cdf: rationals(field(value, "cdf", path)?, "$.types.cdf")?,
            density: rationals(field(value, "density", path)?, "$.types.density")?,
        })),
        other => Err(schema(
            "$.types.kind",
            format!("unknown kind \"{other}\" (expected discrete, uniform or tabulated)"),
        )),
    }
}

pub fn types_value(types: &TypeSpace) -> Value {
    match types {
        TypeSpace::Discrete(d) => json!({
            "kind": "discrete",
            "support": rationals_value(&d.support),
            "masses": rationals_value(&d.masses),
        }),
        TypeSpace::Uniform { upper } => json!({"kind": "uniform", "upper": rational_value(upper)}),
        TypeSpace::Tabulated(t) => json!({
            "kind": "tabulated",
            "grid": rationals_value(&t.grid),
            "cdf": rationals_value(&t.cdf),
            "density": rationals_value(&t.density),
        }),
    }
}

pub fn instance_value(raw: &RawInstance) -> Value {
    json!({
        "gammas": rationals_value(&raw.gammas),
        "rewards": rationals_value(&raw.rewards),
        "dist": raw.dist.iter().map(|row| rationals_value(row)).collect::<Vec<_>>(),
        "types": types_value(&raw.types),
    })
}

fn type_position(types: &DiscreteTypes, key: &str, path: &str) -> Result<usize, DocumentError> {
    let cost = parse_rational(key).map_err(|source| DocumentError::Number {
        path: path.to_string(),
        source,
    })?;
    types
        .position(&cost)
        .ok_or_else(|| schema(path, format!("{key} is not a support point")))
}

fn type_key(types: &DiscreteTypes, index: usize) -> String {
    format_rational(&types.support[index])
}

/// Values keyed by support point, or listed in support order; every type
/// must be covered exactly once.
fn per_type<T>(
    value: &Value,
    types: &DiscreteTypes,
    path: &str,
    mut item: impl FnMut(&Value, &str) -> Result<T, DocumentError>,
) -> Result<Vec<T>, DocumentError> {
    match value {
        Value::Array(items) => {
            if items.len() != types.len() {
                return Err(schema(
                    path,
                    format!("{} entries for {} types", items.len(), types.len()),
                ));
            }
            items
                .iter()
                .enumerate()
                .map(|(i, v)| item(v, &format!("{path}[{i}]")))
                .collect()
        }
        Value::Object(map) => {
            let mut slots: Vec<Option<T>> = (0..types.len()).map(|_| None).collect();
            for (key, v) in map {
                let entry_path = format!("{path}.{key}");
                let pos = type_position(types, key, &entry_path)?;
                if slots[pos].is_some() {
                    return Err(schema(&entry_path, "type listed twice"));
                }
                slots[pos] = Some(item(v, &entry_path)?);
            }
            slots
                .into_iter()
                .enumerate()
                .map(|(i, s)| {
                    s.ok_or_else(|| schema(path, format!("type {} missing", type_key(types, i))))
                })
                .collect()
        }
        _ => Err(schema(path, "expected an object keyed by type or an array")),
    }
}

fn keyed<T>(
    types: &DiscreteTypes,
    values: impl IntoIterator<Item = T>,
    f: impl Fn(T) -> Value,
) -> Value {
    Value::Object(
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| (type_key(types, i), f(v)))
            .collect::<Map<_, _>>(),
    )
}

/// `{"allocation": {"<cost>": action, ...}}`, or the inner value on its own.
pub fn parse_allocation(
    value: &Value,
    types: &DiscreteTypes,
) -> Result<DiscreteAllocation, DocumentError> {
    let (inner, path) = match value.get("allocation") {
        Some(v) => (v, "$.allocation"),
        None => (value, "$"),
    };
    per_type(inner, types, path, index).map(DiscreteAllocation::new)
}

pub fn allocation_value(alloc: &DiscreteAllocation, types: &DiscreteTypes) -> Value {
    keyed(types, alloc.actions().iter().copied(), Value::from)
}

pub fn discrete_payments_value(payments: &[Vec<Rational>], types: &DiscreteTypes) -> Value {
    keyed(types, payments, |t| rationals_value(t))
}

pub fn parse_discrete_payments(
    value: &Value,
    types: &DiscreteTypes,
    path: &str,
) -> Result<Vec<Vec<Rational>>, DocumentError> {
    per_type(value, types, path, rationals)
}

/// `{"breakpoints": [...], "actions": [...]}`, optionally under a `"rule"` or
/// `"allocation"` key.
pub fn parse_rule(value: &Value) -> Result<PiecewiseConstantRule, DocumentError> {
    let (inner, path) = match (value.get("rule"), value.get("allocation")) {
        (Some(v), _) => (v, "$.rule"),
        (None, Some(v)) => (v, "$.allocation"),
        (None, None) => (value, "$"),
    };
    let breakpoints = rationals(
        field(inner, "breakpoints", path)?,
        &format!("{path}.breakpoints"),
    )?;
    let actions = array(field(inner, "actions", path)?, &format!("{path}.actions"))?
        .iter()
        .enumerate()
        .map(|(i, v)| index(v, &format!("{path}.actions[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    PiecewiseConstantRule::new(breakpoints, actions).map_err(|e| schema(path, e.to_string()))
}

pub fn rule_value(rule: &PiecewiseConstantRule) -> Value {
    json!({
        "breakpoints": rationals_value(rule.breakpoints()),
        "actions": rule.actions(),
    })
}

pub fn piece_payments_value(payments: &[Vec<Rational>]) -> Value {
    Value::Array(payments.iter().map(|t| rationals_value(t)).collect())
}

/// `{"menu": {"<cost>": [{"prob", "action", "payments"}, ...]}}`.
pub fn parse_menu(value: &Value, types: &DiscreteTypes) -> Result<CorrelatedMenu, DocumentError> {
    let (inner, path) = match value.get("menu") {
        Some(v) => (v, "$.menu"),
        None => (value, "$"),
    };
    let entries = per_type(inner, types, path, |lottery, lpath| {
        array(lottery, lpath)?
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let epath = format!("{lpath}[{i}]");
                Ok(MenuEntry {
                    probability: rational_from_value(
                        field(e, "prob", &epath)?,
                        &format!("{epath}.prob"),
                    )?,
                    action: index(field(e, "action", &epath)?, &format!("{epath}.action"))?,
                    payments: rationals(
                        field(e, "payments", &epath)?,
                        &format!("{epath}.payments"),
                    )?,
                })
            })
            .collect()
    })?;
    Ok(CorrelatedMenu { entries })
}

pub fn menu_value(menu: &CorrelatedMenu, types: &DiscreteTypes) -> Value {
    keyed(types, &menu.entries, |lottery| {
        Value::Array(
            lottery
                .iter()
                .map(|e| {
                    json!({
                        "prob": rational_value(&e.probability),
                        "action": e.action,
                        "payments": rationals_value(&e.payments),
                    })
                })
                .collect(),
        )
    })
}

pub fn deviation_plan_value(plan: &DeviationPlan, types: &DiscreteTypes) -> Value {
    Value::Array(
        plan.entries()
            .map(|(&(c, report, k), w)| {
                json!({
                    "type": type_key(types, c),
                    "report": type_key(types, report),
                    "action": k,
                    "weight": rational_value(w),
                })
            })
            .collect(),
    )
}

pub fn parse_deviation_plan(
    value: &Value,
    types: &DiscreteTypes,
    path: &str,
) -> Result<DeviationPlan, DocumentError> {
    let mut plan = DeviationPlan::new();
    for (i, e) in array(value, path)?.iter().enumerate() {
        let epath = format!("{path}[{i}]");
        let key = |name: &str| -> Result<usize, DocumentError> {
            let text = field(e, name, &epath)?
                .as_str()
                .ok_or_else(|| schema(&format!("{epath}.{name}"), "expected a cost string"))?;
            type_position(types, text, &format!("{epath}.{name}"))
        };
        plan.set(
            key("type")?,
            key("report")?,
            index(field(e, "action", &epath)?, &format!("{epath}.action"))?,
            rational_from_value(field(e, "weight", &epath)?, &format!("{epath}.weight"))?,
        );
    }
    Ok(plan)
}

fn copy_name(copy: BreakpointCopy) -> &'static str {
    match copy {
        BreakpointCopy::Right => "right",
        BreakpointCopy::Left => "left",
    }
}

pub fn continuous_plan_value(plan: &ContinuousDeviationPlan) -> Value {
    let mut out = Map::new();
    for copy in [BreakpointCopy::Right, BreakpointCopy::Left] {
        let entries: Vec<Value> = plan
            .entries(copy)
            .map(|(&(index, report, k), w)| {
                json!({
                    "breakpoint": index,
                    "report": report,
                    "action": k,
                    "weight": rational_value(w),
                })
            })
            .collect();
        out.insert(copy_name(copy).to_string(), Value::Array(entries));
    }
    Value::Object(out)
}

pub fn parse_continuous_plan(
    value: &Value,
    path: &str,
) -> Result<ContinuousDeviationPlan, DocumentError> {
    let mut plan = ContinuousDeviationPlan::new();
    for copy in [BreakpointCopy::Right, BreakpointCopy::Left] {
        let name = copy_name(copy);
        let cpath = format!("{path}.{name}");
        for (i, e) in array(field(value, name, path)?, &cpath)?.iter().enumerate() {
            let epath = format!("{cpath}[{i}]");
            plan.set(
                copy,
                index(
                    field(e, "breakpoint", &epath)?,
                    &format!("{epath}.breakpoint"),
                )?,
                index(field(e, "report", &epath)?, &format!("{epath}.report"))?,
                index(field(e, "action", &epath)?, &format!("{epath}.action"))?,
                rational_from_value(field(e, "weight", &epath)?, &format!("{epath}.weight"))?,
            );
        }
    }
    Ok(plan)
}

/// Canonical text of a document: sorted keys, two-space indent, trailing newline.
pub fn to_canonical_string(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialise");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::running_raw;
    use crate::rational::{int, ratio};

    #[test]
    fn instance_round_trip() {
        let raw = running_raw();
        let text = to_canonical_string(&instance_value(&raw));
        assert_eq!(parse_instance(&parse_json(&text).unwrap()).unwrap(), raw);
    }

    #[test]
    fn decimals_and_numbers_accepted() {
        let doc = parse_json(
            r#"{"gammas": [0, "1", "3", "1e1"], "rewards": ["0", 10, "30"],
                "dist": [["1","0","0"],["0","1","0"],["0","0.5","1/2"],["0","0","1"]],
                "types": {"kind": "discrete", "support": ["1", "4"], "masses": ["0.5", "0.5"]}}"#,
        )
        .unwrap();
        assert_eq!(parse_instance(&doc).unwrap(), running_raw());
    }

    #[test]
    fn schema_errors_name_the_field() {
        let doc = parse_json(r#"{"gammas": ["0"], "rewards": ["0"], "dist": [["x"]], "types": {"kind": "uniform", "upper": "1"}}"#).unwrap();
        let err = parse_instance(&doc).unwrap_err();
        assert!(err.to_string().starts_with("$.dist[0][0]"), "{err}");
        let doc = parse_json(
            r#"{"gammas": [], "rewards": [], "dist": [], "types": {"kind": "poisson"}}"#,
        )
        .unwrap();
        assert!(parse_instance(&doc).is_err());
        assert!(matches!(parse_json("{"), Err(DocumentError::Json(_))));
    }

    #[test]
    fn allocations_by_cost_or_position() {
        let types = DiscreteTypes {
            support: vec![int(1), int(4)],
            masses: vec![ratio(1, 2), ratio(1, 2)],
        };
        let keyed = parse_json(r#"{"allocation": {"4": 1, "1.0": 3}}"#).unwrap();
        let listed = parse_json(r#"{"allocation": [3, 1]}"#).unwrap();
        let expected = DiscreteAllocation::new(vec![3, 1]);
        assert_eq!(parse_allocation(&keyed, &types).unwrap(), expected);
        assert_eq!(parse_allocation(&listed, &types).unwrap(), expected);
        assert_eq!(allocation_value(&expected, &types), json!({"1": 3, "4": 1}));
        assert!(
            parse_allocation(&parse_json(r#"{"allocation": {"1": 3}}"#).unwrap(), &types).is_err()
        );
        assert!(parse_allocation(
            &parse_json(r#"{"allocation": {"2": 3, "4": 1}}"#).unwrap(),
            &types
        )
        .is_err());
    }

    #[test]
    fn rules_round_trip() {
        let rule =
            PiecewiseConstantRule::new(vec![ratio(5, 7), ratio(5, 2), int(5)], vec![3, 2, 1, 0])
                .unwrap();
        let value = rule_value(&rule);
        assert_eq!(parse_rule(&value).unwrap(), rule);
        assert_eq!(parse_rule(&json!({ "rule": value })).unwrap(), rule);
    }

    #[test]
    fn plans_round_trip() {
        let types = DiscreteTypes {
            support: vec![int(1), int(4)],
            masses: vec![ratio(1, 2), ratio(1, 2)],
        };
        let mut plan = DeviationPlan::new();
        plan.set(0, 1, 3, ratio(1, 2));
        plan.set(1, 1, 1, ratio(1, 3));
        let value = deviation_plan_value(&plan, &types);
        assert_eq!(parse_deviation_plan(&value, &types, "$").unwrap(), plan);

        let mut cplan = ContinuousDeviationPlan::new();
        cplan.set(BreakpointCopy::Right, 0, 1, 2, ratio(1, 4));
        cplan.set(BreakpointCopy::Left, 2, 0, 0, int(1));
        let value = continuous_plan_value(&cplan);
        assert_eq!(parse_continuous_plan(&value, "$").unwrap(), cplan);
    }
}
