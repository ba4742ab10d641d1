use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Number, Value};

/// One self-describing result: every output is stored next to the flags
/// that produced it.
#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub parameters: Map<String, Value>,
    pub outputs: Map<String, Value>,
    pub wall_time_seconds: Value,
    pub seed: Option<u64>,
    pub tool_version: &'static str,
}

impl RunRecord {
    pub fn new(command: &str) -> Self {
        RunRecord {
            command: command.to_string(),
            parameters: Map::new(),
            outputs: Map::new(),
            wall_time_seconds: Value::Null,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION"),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }

    pub fn output(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.outputs.insert(key.to_string(), value.into());
        self
    }

    pub fn finish(mut self, started: Instant) -> Self {
        self.wall_time_seconds = num(started.elapsed().as_secs_f64());
        self
    }

    pub fn print(&self) {
        println!("{}", serde_json::to_string_pretty(self).expect("records serialize"));
    }
}

/// Formats a float with 17 significant digits, which round-trips binary64.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// A JSON number carrying all 17 digits; non-finite values become strings.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(Number::from_str(&fmt17(x)).expect("formatted float is a JSON number"))
    } else {
        Value::String(fmt17(x))
    }
}

pub fn big(x: u128) -> Value {
    Value::Number(Number::from_str(&x.to_string()).expect("integer is a JSON number"))
}

pub fn pairs(points: &[(f64, f64)]) -> Value {
    Value::Array(points.iter().map(|&(x, y)| Value::Array(vec![num(x), num(y)])).collect())
}

pub fn nums(values: &[f64]) -> Value {
    Value::Array(values.iter().map(|&v| num(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [1.8231469544522168, 0.1, 1e-300, 213556.78508818566, -2.5] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let json = serde_json::to_string(&num(x)).unwrap();
            assert_eq!(json.parse::<f64>().unwrap(), x);
            assert_eq!(json.split('e').next(), s.split('e').next());
        }
        assert_eq!(fmt17(1.0), "1.0000000000000000e0");
        assert_eq!(num(f64::INFINITY), Value::String("inf".into()));
    }
}
