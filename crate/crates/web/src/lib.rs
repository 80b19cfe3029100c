//! Browser bindings. Each exported function returns a JSON string; the
//! `*_json` functions behind them are plain Rust so they run in native tests.

use std::collections::BTreeMap;
use std::sync::Arc;

use dmm_core::engine::{Edit, Machine};
use dmm_core::lang::Interpreter;
use dmm_core::names::{name, Direction, PortName};
use dmm_core::neurons::{Const, NeuronTypeDecl};
use dmm_core::rng::RngHandle;
use dmm_core::signature::{KindShape, StreamKindDecl, COLUMN_MASK, ROW_MASK, SCALAR};
use dmm_core::streams::{linear_combine, MaskTail, MaskVector, Payload, Sign, SignedSample, StreamValue};
use dmm_core::trace::{matrix_to_json, value_to_json};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_DRAWS: u32 = 1_000_000;
const MAX_TICKS: u64 = 10_000;

#[wasm_bindgen]
pub fn stochastic_sum(c1: f64, c2: f64, draws: u32, seed: u32) -> Result<String, JsValue> {
    stochastic_sum_json(c1, c2, draws, u64::from(seed)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn run_script(source: &str, seed: u32) -> Result<String, JsValue> {
    run_script_json(source, u64::from(seed)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn self_modification(delay: u32, ticks: u32) -> Result<String, JsValue> {
    self_modification_json(delay as usize, u64::from(ticks)).map_err(|e| JsValue::from_str(&e))
}

/// Draws `c1 * first + c2 * second` over two signed sample streams and
/// reports how often each stream was picked and with which sign.
pub fn stochastic_sum_json(c1: f64, c2: f64, draws: u32, seed: u64) -> Result<String, String> {
    if !(c1.is_finite() && c2.is_finite()) {
        return Err("coefficients must be finite".into());
    }
    if draws == 0 || draws > MAX_DRAWS {
        return Err(format!("draws must be between 1 and {MAX_DRAWS}"));
    }
    let kind = StreamKindDecl::new(name("coin"), KindShape::SignedSample { payload_space: name("X") });
    let stream = |tok: &str| StreamValue::Sample(Some(SignedSample::new(Payload::Token(name(tok)), Sign::Plus)));
    let (first, second) = (stream("first"), stream("second"));
    let mut rng = RngHandle::seeded(seed);
    let mut counts: BTreeMap<(&str, &str), u32> = BTreeMap::new();
    let mut empty = 0u32;
    for _ in 0..draws {
        match linear_combine(&kind, &[(c1, &first), (c2, &second)], &mut rng).map_err(|e| e.to_string())? {
            StreamValue::Sample(Some(s)) => {
                let which = match &s.payload {
                    Payload::Token(t) if t.as_str() == "second" => "second",
                    _ => "first",
                };
                let sign = if s.sign == Sign::Plus { "+" } else { "-" };
                *counts.entry((which, sign)).or_insert(0) += 1;
            }
            _ => empty += 1,
        }
    }
    let total = c1.abs() + c2.abs();
    let expected = if total > 0.0 { c2.abs() / total } else { 0.0 };
    let count = |w, s| counts.get(&(w, s)).copied().unwrap_or(0);
    Ok(json!({
        "draws": draws,
        "empty": empty,
        "first": { "plus": count("first", "+"), "minus": count("first", "-") },
        "second": { "plus": count("second", "+"), "minus": count("second", "-") },
        "expected_second": expected,
    })
    .to_string())
}

/// Runs a script and returns every scalar output's trajectory, the final
/// matrix and the `#show` lines.
pub fn run_script_json(source: &str, seed: u64) -> Result<String, String> {
    let mut it = Interpreter::standard(seed);
    let program = dmm_core::lang::parse_program(source).map_err(|e| e.to_string())?;
    let ticks: u64 = program
        .iter()
        .map(|s| match s.node {
            dmm_core::lang::ast::Stmt::Step(n) => n,
            _ => 0,
        })
        .sum();
    if ticks > MAX_TICKS {
        return Err(format!("script steps {ticks} ticks; the demo stops at {MAX_TICKS}"));
    }
    let mut series: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    let mut lines = Vec::new();
    let mut tick_list = Vec::new();
    for stmt in &program {
        let mut snaps = Vec::new();
        let out = it
            .eval_statement_with(stmt, &mut |m: &Machine| snaps.push(m.snapshot()))
            .map_err(|e| e.to_string())?;
        lines.extend(out.lines);
        for rec in snaps {
            let row = tick_list.len();
            tick_list.push(rec.t);
            for e in &rec.entries {
                if let (Direction::Output, StreamValue::Scalar(x)) = (e.port.direction, &e.value) {
                    let s = series.entry(e.port.to_string()).or_default();
                    s.resize(row, None);
                    s.push(Some(*x));
                }
            }
        }
    }
    for s in series.values_mut() {
        s.resize(tick_list.len(), None);
    }
    Ok(json!({
        "ticks": tick_list,
        "scalars": series,
        "matrix": matrix_to_json(it.machine().matrix()),
        "lines": lines,
    })
    .to_string())
}

fn input(t: &str, c: &str, f: &str) -> PortName {
    PortName::input(t, c, f).expect("valid name")
}

fn output(t: &str, c: &str, f: &str) -> PortName {
    PortName::output(t, c, f).expect("valid name")
}

fn set(m: &mut Machine, row: &PortName, col: &PortName, weight: f64) -> Result<(), String> {
    m.apply_edit(Edit::SetWeight { row: row.clone(), col: col.clone(), weight }).map_err(|e| e.to_string())
}

fn constant(m: &mut Machine, type_name: &str, kind: &str, v: StreamValue) -> Result<(), String> {
    let decl = NeuronTypeDecl::new(name(type_name), vec![], vec![(name("out"), name(kind))], name(type_name));
    m.register_type(decl, Arc::new(Const(v))).map_err(|e| e.to_string())
}

/// Scalars `x` (leaky integrator of a constant) and `y` (reads `x`), plus an
/// updateweights neuron that adds row `x.in` to row `y.in` when its gate
/// fires. The gate is the difference of two taps on a delay chain behind a
/// constant trigger, so it fires once, `delay + 2` ticks in.
fn pulse_machine(trigger: f64, delay: usize) -> Result<Machine, String> {
    let mut m = Machine::standard(0);
    let sig = m.signature().clone();
    let (x_in, x_out) = (input("linear", "x", "in"), output("linear", "x", "out"));
    let y_in = input("linear", "y", "in");
    let unit = |p: &PortName| {
        MaskVector::from_entries(&sig, Direction::Input, [(p.clone(), 1.0)], MaskTail::Zero).map_err(|e| e.to_string())
    };
    constant(&mut m, "trigger", SCALAR, StreamValue::Scalar(trigger))?;
    constant(&mut m, "gamma_src", ROW_MASK, StreamValue::RowMask(unit(&y_in)?))?;
    constant(&mut m, "beta_src", ROW_MASK, StreamValue::RowMask(unit(&x_in)?))?;
    constant(
        &mut m,
        "alpha_src",
        COLUMN_MASK,
        StreamValue::ColumnMask(MaskVector::all_ones(Direction::Output, name(SCALAR))),
    )?;
    set(&mut m, &x_in, &x_out, 0.9)?;
    set(&mut m, &x_in, &output("one", "o", "out"), 1.0)?;
    set(&mut m, &y_in, &x_out, 1.0)?;
    let tap = |j: usize| {
        if j == 0 {
            output("trigger", "t", "out")
        } else {
            output("id_scalar", &format!("d{j}"), "out")
        }
    };
    for j in 1..=delay + 1 {
        set(&mut m, &input("id_scalar", &format!("d{j}"), "in"), &tap(j - 1), 1.0)?;
    }
    let u = |f: &str| input("updateweights", "u", f);
    set(&mut m, &u("gate"), &tap(delay), 1.0)?;
    set(&mut m, &u("gate"), &tap(delay + 1), -1.0)?;
    let (self_in, self_out) = (m.self_input().clone(), m.self_output().clone());
    set(&mut m, &u("m"), &self_out, 1.0)?;
    set(&mut m, &u("gamma"), &output("gamma_src", "g", "out"), 1.0)?;
    set(&mut m, &u("beta"), &output("beta_src", "b", "out"), 1.0)?;
    set(&mut m, &u("alpha"), &output("alpha_src", "a", "out"), 1.0)?;
    set(&mut m, &self_in, &output("updateweights", "u", "out"), 1.0)?;
    Ok(m)
}

/// Runs the pulsed machine next to an identical one whose trigger is zero and
/// reports both `y` trajectories and the first tick at which the matrices
/// differ.
pub fn self_modification_json(delay: usize, ticks: u64) -> Result<String, String> {
    if delay > 200 || ticks == 0 || ticks > MAX_TICKS {
        return Err(format!("need delay <= 200 and 1 <= ticks <= {MAX_TICKS}"));
    }
    let mut edited = pulse_machine(1.0, delay)?;
    let mut clone = pulse_machine(0.0, delay)?;
    let y = output("linear", "y", "out");
    let read = |m: &Machine| m.read_output(&y).ok().and_then(|v| v.as_scalar()).unwrap_or(0.0);
    let (mut ya, mut yb) = (Vec::new(), Vec::new());
    let mut matrix_from = None;
    for t in 1..=ticks {
        edited.step(1).map_err(|e| e.to_string())?;
        clone.step(1).map_err(|e| e.to_string())?;
        ya.push(read(&edited));
        yb.push(read(&clone));
        if matrix_from.is_none() && edited.matrix() != clone.matrix() {
            matrix_from = Some(t);
        }
    }
    let y_from = ya.iter().zip(&yb).position(|(a, b)| a != b).map(|i| i as u64 + 1);
    Ok(json!({
        "edited": ya,
        "clone": yb,
        "matrix_differs_from": matrix_from,
        "y_differs_from": y_from,
        "final_row": value_to_json(&StreamValue::Matrix(edited.matrix().clone()))
            .as_array()
            .map(|a| a.iter().filter(|e| e["row"] == "linear:y:in").cloned().collect::<Vec<Value>>()),
    })
    .to_string())
}
