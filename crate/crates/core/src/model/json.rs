//! JSON instance format.
//!
//! ```json
//! {
//!   "name": "toy",
//!   "x": [{"name": "x0", "integer": false, "upper": 10.0}],
//!   "c": [1.0],
//!   "rows": 1,
//!   "A": [[0, 0, 1.0]],
//!   "b": [2.0],
//!   "blocks": [{
//!     "name": "b0",
//!     "convexity": "equality",
//!     "y": [{"name": "y0", "lo": 0, "hi": 3}],
//!     "z": [],
//!     "objective": ["sub", ["sqr", ["var", "y0"]], ["const", 4.0]],
//!     "constraints": [],
//!     "D_rows": 1,
//!     "D": [[0, 0, 1.0]]
//!   }]
//! }
//! ```
//!
//! Matrices are sparse `(row, col, value)` triples. Expressions are nested
//! prefix arrays; variables are referenced by name within their block.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{
    validate_model, Block, Convexity, Expr, InnerVar, LinearVar, LinkingMatrix, LinkingVar,
    ModelError, SeedColumn, StructuredModel, Triplet, ValidatedModel,
};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read instance: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("block `{block}`: bad expression {detail}")]
    BadExpr { block: String, detail: String },
    #[error("block `{block}`: unknown variable `{name}`")]
    UnknownVariable { block: String, name: String },
    #[error("invalid model: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ModelError>),
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    name: String,
    #[serde(default)]
    x: Vec<XDecl>,
    #[serde(default)]
    c: Vec<f64>,
    rows: usize,
    #[serde(rename = "A", default)]
    a: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    blocks: Vec<BlockFile>,
    #[serde(default)]
    nonanticipative: bool,
    #[serde(default)]
    monotone: bool,
    #[serde(default)]
    seed_columns: Vec<SeedColumn>,
}

#[derive(Serialize, Deserialize)]
struct XDecl {
    name: String,
    #[serde(default)]
    integer: bool,
    #[serde(default)]
    upper: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct YDecl {
    name: String,
    lo: i64,
    hi: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ZDecl {
    name: String,
    lo: f64,
    hi: f64,
    #[serde(default)]
    integer: bool,
}

#[derive(Serialize, Deserialize)]
struct BlockFile {
    name: String,
    convexity: Convexity,
    y: Vec<YDecl>,
    #[serde(default)]
    z: Vec<ZDecl>,
    objective: Value,
    #[serde(default)]
    constraints: Vec<Value>,
    #[serde(rename = "D_rows", default)]
    d_rows: Option<usize>,
    #[serde(rename = "D", default)]
    d: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    z_candidates: Vec<Vec<Value>>,
}

fn expr_to_json(e: &Expr, names: &[String]) -> Value {
    let un = |op: &str, a: &Expr| json!([op, expr_to_json(a, names)]);
    let bin = |op: &str, a: &Expr, b: &Expr| json!([op, expr_to_json(a, names), expr_to_json(b, names)]);
    match e {
        Expr::Const(c) => json!(["const", c]),
        Expr::Var(i) => json!(["var", names[*i]]),
        Expr::Add(ts) => {
            let mut v = vec![json!("add")];
            v.extend(ts.iter().map(|t| expr_to_json(t, names)));
            Value::Array(v)
        }
        Expr::Sub(a, b) => bin("sub", a, b),
        Expr::Mul(a, b) => bin("mul", a, b),
        Expr::Div(a, b) => bin("div", a, b),
        Expr::Neg(a) => un("neg", a),
        Expr::Sqr(a) => un("sqr", a),
        Expr::Sqrt(a) => un("sqrt", a),
        Expr::Powi(a, n) => json!(["powi", expr_to_json(a, names), n]),
        Expr::Exp(a) => un("exp", a),
        Expr::Log(a) => un("log", a),
    }
}

fn expr_from_json(v: &Value, vars: &HashMap<&str, usize>, block: &str) -> Result<Expr, InstanceError> {
    let bad = |detail: String| InstanceError::BadExpr { block: block.to_string(), detail };
    let arr = v.as_array().ok_or_else(|| bad(format!("{v}: expected an array")))?;
    let op = arr
        .first()
        .and_then(Value::as_str)
        .ok_or_else(|| bad(format!("{v}: missing operator")))?;
    let args = &arr[1..];
    let sub = |k: usize| -> Result<Box<Expr>, InstanceError> {
        Ok(Box::new(expr_from_json(&args[k], vars, block)?))
    };
    let arity = |n: usize| -> Result<(), InstanceError> {
        if args.len() == n {
            Ok(())
        } else {
            Err(bad(format!("{v}: `{op}` takes {n} argument(s)")))
        }
    };
    Ok(match op {
        "const" => {
            arity(1)?;
            Expr::Const(args[0].as_f64().ok_or_else(|| bad(format!("{v}: constant must be a number")))?)
        }
        "var" => {
            arity(1)?;
            let name = args[0].as_str().ok_or_else(|| bad(format!("{v}: variable name must be a string")))?;
            let idx = vars.get(name).ok_or_else(|| InstanceError::UnknownVariable {
                block: block.to_string(),
                name: name.to_string(),
            })?;
            Expr::Var(*idx)
        }
        "add" => {
            if args.is_empty() {
                return Err(bad(format!("{v}: empty sum")));
            }
            Expr::Add(
                args.iter()
                    .map(|a| expr_from_json(a, vars, block))
                    .collect::<Result<_, _>>()?,
            )
        }
        "sub" | "mul" | "div" => {
            arity(2)?;
            let (a, b) = (sub(0)?, sub(1)?);
            match op {
                "sub" => Expr::Sub(a, b),
                "mul" => Expr::Mul(a, b),
                _ => Expr::Div(a, b),
            }
        }
        "powi" => {
            arity(2)?;
            let n = args[1]
                .as_i64()
                .and_then(|n| i32::try_from(n).ok())
                .ok_or_else(|| bad(format!("{v}: powi exponent must be an integer")))?;
            Expr::Powi(sub(0)?, n)
        }
        "neg" | "sqr" | "sqrt" | "exp" | "log" => {
            arity(1)?;
            let a = sub(0)?;
            match op {
                "neg" => Expr::Neg(a),
                "sqr" => Expr::Sqr(a),
                "sqrt" => Expr::Sqrt(a),
                "exp" => Expr::Exp(a),
                _ => Expr::Log(a),
            }
        }
        other => return Err(bad(format!("unknown operator `{other}`"))),
    })
}

fn triplets(v: &[(usize, usize, f64)]) -> Vec<Triplet> {
    v.iter().map(|&(r, c, x)| Triplet::new(r, c, x)).collect()
}

fn untriplets(v: &[Triplet]) -> Vec<(usize, usize, f64)> {
    v.iter().map(|t| (t.row, t.col, t.value)).collect()
}

/// Parses a model without validating it.
pub fn model_from_str(text: &str) -> Result<StructuredModel, InstanceError> {
    let file: InstanceFile = serde_json::from_str(text)?;
    let mut blocks = Vec::with_capacity(file.blocks.len());
    for bf in &file.blocks {
        let names: Vec<&str> = bf
            .y
            .iter()
            .map(|v| v.name.as_str())
            .chain(bf.z.iter().map(|v| v.name.as_str()))
            .collect();
        let vars: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let y_only: HashMap<&str, usize> = bf.y.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect();
        blocks.push(Block {
            name: bf.name.clone(),
            y: bf
                .y
                .iter()
                .map(|v| LinkingVar { name: v.name.clone(), lo: v.lo, hi: v.hi, weight: v.weight })
                .collect(),
            z: bf
                .z
                .iter()
                .map(|v| InnerVar { name: v.name.clone(), lo: v.lo, hi: v.hi, integer: v.integer })
                .collect(),
            objective: expr_from_json(&bf.objective, &vars, &bf.name)?,
            constraints: bf
                .constraints
                .iter()
                .map(|g| expr_from_json(g, &vars, &bf.name))
                .collect::<Result<_, _>>()?,
            linking: LinkingMatrix::new(bf.d_rows.unwrap_or(file.rows), triplets(&bf.d)),
            convexity: bf.convexity,
            z_candidates: bf
                .z_candidates
                .iter()
                .map(|cand| cand.iter().map(|e| expr_from_json(e, &y_only, &bf.name)).collect())
                .collect::<Result<_, _>>()?,
        });
    }
    Ok(StructuredModel {
        name: file.name,
        x: file
            .x
            .iter()
            .map(|v| LinearVar { name: v.name.clone(), integer: v.integer, upper: v.upper })
            .collect(),
        cost: file.c,
        rows: file.rows,
        a: triplets(&file.a),
        rhs: file.b,
        blocks,
        nonanticipative: file.nonanticipative,
        monotone: file.monotone,
        seed_columns: file.seed_columns,
    })
}

pub fn model_to_string(model: &StructuredModel) -> String {
    let blocks = model
        .blocks
        .iter()
        .map(|b| {
            let names: Vec<String> = (0..b.nvars()).map(|i| b.var_name(i).to_string()).collect();
            BlockFile {
                name: b.name.clone(),
                convexity: b.convexity,
                y: b
                    .y
                    .iter()
                    .map(|v| YDecl { name: v.name.clone(), lo: v.lo, hi: v.hi, weight: v.weight })
                    .collect(),
                z: b
                    .z
                    .iter()
                    .map(|v| ZDecl { name: v.name.clone(), lo: v.lo, hi: v.hi, integer: v.integer })
                    .collect(),
                objective: expr_to_json(&b.objective, &names),
                constraints: b.constraints.iter().map(|g| expr_to_json(g, &names)).collect(),
                d_rows: Some(b.linking.rows),
                d: untriplets(&b.linking.entries),
                z_candidates: b
                    .z_candidates
                    .iter()
                    .map(|cand| cand.iter().map(|e| expr_to_json(e, &names)).collect())
                    .collect(),
            }
        })
        .collect();
    let file = InstanceFile {
        name: model.name.clone(),
        x: model
            .x
            .iter()
            .map(|v| XDecl { name: v.name.clone(), integer: v.integer, upper: v.upper })
            .collect(),
        c: model.cost.clone(),
        rows: model.rows,
        a: untriplets(&model.a),
        b: model.rhs.clone(),
        blocks,
        nonanticipative: model.nonanticipative,
        monotone: model.monotone,
        seed_columns: model.seed_columns.clone(),
    };
    serde_json::to_string_pretty(&file).expect("instance serialization cannot fail")
}

/// Parses and validates.
pub fn parse_instance(text: &str) -> Result<ValidatedModel, InstanceError> {
    validate_model(model_from_str(text)?).map_err(InstanceError::Invalid)
}

pub fn load_instance(path: &Path) -> Result<ValidatedModel, InstanceError> {
    parse_instance(&std::fs::read_to_string(path)?)
}

pub fn save_instance(model: &StructuredModel, path: &Path) -> Result<(), InstanceError> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"{
        "name": "toy",
        "x": [{"name": "x0", "upper": 10.0}],
        "c": [1.0],
        "rows": 1,
        "A": [[0, 0, 1.0]],
        "b": [2.0],
        "blocks": [{
            "name": "b0",
            "convexity": "equality",
            "y": [{"name": "y0", "lo": 0, "hi": 3}],
            "objective": ["sub", ["sqr", ["var", "y0"]], ["const", 4.0]],
            "constraints": [["add", ["var", "y0"], ["const", -2.0]]],
            "D": [[0, 0, 1.0]]
        }]
    }"#;

    #[test]
    fn parses_documented_example() {
        let m = parse_instance(TOY).unwrap();
        assert_eq!(m.blocks[0].objective.eval(&[3.0]), Ok(5.0));
        assert_eq!(m.blocks[0].linking.rows, 1);
        assert_eq!(m.x[0].upper, Some(10.0));
    }

    #[test]
    fn unknown_variable_is_reported() {
        let text = TOY.replace(r#"["var", "y0"]]"#, r#"["var", "w"]]"#);
        assert!(matches!(model_from_str(&text), Err(InstanceError::UnknownVariable { .. })));
    }

    #[test]
    fn bad_operator() {
        let text = TOY.replace("\"sqr\"", "\"cube\"");
        assert!(matches!(model_from_str(&text), Err(InstanceError::BadExpr { .. })));
    }

    #[test]
    fn invalid_model_lists_errors() {
        let text = TOY.replace(r#""lo": 0, "hi": 3"#, r#""lo": 4, "hi": 3"#);
        match parse_instance(&text) {
            Err(InstanceError::Invalid(errs)) => assert_eq!(errs.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_read_write_is_stable() {
        let m = model_from_str(TOY).unwrap();
        let s1 = model_to_string(&m);
        let s2 = model_to_string(&model_from_str(&s1).unwrap());
        assert_eq!(s1, s2);
        assert_eq!(model_from_str(&s1).unwrap(), m);
    }
}
