//! Unit-suffixed config keys: `wavelengths_nm`, `pixel_pitch_um`, `dmax_mm`
//! and friends are rewritten to their `_m` form before deserialisation.

use serde_json::{Map, Value};

const SUFFIXES: [(&str, i32); 6] = [
    ("_nm", -9),
    ("_um", -6),
    ("_µm", -6),
    ("_mm", -3),
    ("_cm", -2),
    ("_km", 3),
];

/// Rewrites every suffixed key in place, scaling numbers and arrays of numbers.
/// Strings and nulls pass through (e.g. `"infinity"`).
pub fn normalize(value: Value) -> Result<Value, String> {
    walk(value, "")
}

fn walk(value: Value, path: &str) -> Result<Value, String> {
    match value {
        Value::Object(map) => {
            let mut out = Map::new();
            for (key, v) in map {
                let here = join(path, &key);
                let (name, v) = match SUFFIXES.iter().find(|(s, _)| key.ends_with(s)) {
                    Some((s, exp)) => (format!("{}_m", &key[..key.len() - s.len()]), scale(v, *exp, &here)?),
                    None => (key, walk(v, &here)?),
                };
                if out.contains_key(&name) {
                    return Err(format!(
                        "{here}: the key `{name}` is given twice (with and without a unit suffix)"
                    ));
                }
                out.insert(name, v);
            }
            Ok(Value::Object(out))
        }
        Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| walk(v, &format!("{path}[{i}]")))
            .collect::<Result<Vec<_>, _>>()
            .map(Value::Array),
        other => Ok(other),
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn scale(value: Value, exp: i32, path: &str) -> Result<Value, String> {
    match value {
        Value::Number(n) => {
            let x = n.as_f64().ok_or_else(|| format!("{path}: not a finite number"))?;
            serde_json::Number::from_f64(shift_decimal(x, exp))
                .map(Value::Number)
                .ok_or_else(|| format!("{path}: value out of range after unit conversion"))
        }
        Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| scale(v, exp, &format!("{path}[{i}]")))
            .collect::<Result<Vec<_>, _>>()
            .map(Value::Array),
        Value::String(_) | Value::Null => Ok(value),
        _ => Err(format!("{path}: a unit-suffixed key must hold numbers")),
    }
}

/// `x · 10^exp` rounded once from the shortest decimal form of `x`, so
/// `33.28` nm becomes exactly the literal `33.28e-9`.
fn shift_decimal(x: f64, exp: i32) -> f64 {
    let text = format!("{x:e}");
    let (mantissa, e) = text.split_once('e').expect("exponent form");
    let e: i32 = e.parse().expect("integer exponent");
    format!("{mantissa}e{}", e + exp).parse().expect("valid float")
}
