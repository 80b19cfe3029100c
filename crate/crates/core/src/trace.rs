//! Per-tick trace records and their line-delimited JSON rendering.

use serde_json::{json, Map, Value};

use crate::matrix::NetMatrix;
use crate::names::{Name, PortName};
use crate::streams::{MaskTail, MaskVector, Payload, StreamValue};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub port: PortName,
    pub kind: Name,
    pub value: StreamValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: u64,
    pub entries: Vec<TraceEntry>,
}

impl TraceRecord {
    pub fn to_json(&self) -> Value {
        let values: Vec<Value> = self
            .entries
            .iter()
            .map(|e| {
                json!({
                    "port": e.port.to_string(),
                    "kind": e.kind.as_str(),
                    "value": value_to_json(&e.value),
                })
            })
            .collect();
        json!({ "t": self.t, "values": values })
    }

    /// One line of JSON, no trailing newline.
    pub fn to_json_line(&self) -> String {
        self.to_json().to_string()
    }
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

fn mask_to_json(m: &MaskVector) -> Value {
    let support: Vec<Value> = m
        .support()
        .iter()
        .map(|(p, w)| json!({ "port": p.to_string(), "w": number(*w) }))
        .collect();
    let tail = match m.tail() {
        MaskTail::Zero => Value::Null,
        MaskTail::AllOnes(k) => Value::String(k.to_string()),
    };
    json!({ "support": support, "tail": tail })
}

pub fn matrix_to_json(a: &NetMatrix) -> Value {
    Value::Array(
        a.entries()
            .map(|(r, c, w)| json!({ "row": r.to_string(), "col": c.to_string(), "w": number(w) }))
            .collect(),
    )
}

/// Scalars and vectors as numbers, masks as support lists, matrices as
/// entry lists, samples as `{payload, sign}` (or null when absent).
pub fn value_to_json(v: &StreamValue) -> Value {
    match v {
        StreamValue::Scalar(x) => number(*x),
        StreamValue::Vector(xs) => Value::Array(xs.iter().map(|x| number(*x)).collect()),
        StreamValue::RowMask(m) | StreamValue::ColumnMask(m) => mask_to_json(m),
        StreamValue::Matrix(a) => matrix_to_json(a),
        StreamValue::Sample(None) => Value::Null,
        StreamValue::Sample(Some(s)) => {
            let mut obj = Map::new();
            let payload = match &s.payload {
                Payload::Real(x) => number(*x),
                Payload::Token(t) => Value::String(t.to_string()),
            };
            obj.insert("payload".into(), payload);
            obj.insert("sign".into(), Value::String(s.sign.to_string()));
            Value::Object(obj)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Machine;

    #[test]
    fn tick_zero_record() {
        let m = Machine::standard(0);
        let line = m.snapshot().to_json_line();
        assert_eq!(
            line,
            r#"{"t":0,"values":[{"kind":"matrix","port":"Self:Self:in","value":[]},{"kind":"matrix","port":"Self:Self:out","value":[{"col":"Self:Self:out","row":"Self:Self:in","w":1.0}]}]}"#
        );
    }

    #[test]
    fn shortest_round_trip_numbers() {
        assert_eq!(value_to_json(&StreamValue::Scalar(0.1)).to_string(), "0.1");
        assert_eq!(value_to_json(&StreamValue::Vector(vec![1.0 / 3.0])).to_string(), "[0.3333333333333333]");
    }
}
