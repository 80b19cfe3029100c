//! Machine state and the two-stroke synchronous cycle.
//!
//! Each step is a down stroke followed by an up stroke. The down stroke
//! recomputes every active input as the matrix-row combination of the
//! current outputs; the up stroke runs every active neuron's transform on
//! those inputs. The matrix itself is the output of the `Self` neuron, an
//! identity on matrices with a unit self-loop, so contributions wired into
//! `Self`'s input accumulate into the next tick's matrix.
//!
//! A neuron is active while any of its ports has a nonzero weight. Neurons
//! that lose all weights go dormant: they stop computing and read as zero,
//! but their storage lingers until [`Machine::garbage_collect`]. A neuron
//! that (re)activates starts from its initial state with zero outputs, and
//! its transform runs only after a down stroke has filled its inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::matrix::{update_kernel, MatrixError, NetMatrix, UpdateSpec};
use crate::names::{name, CellId, Direction, Name, PortName};
use crate::neurons::{kind_types, NeuronError, NeuronState, NeuronTypeDecl, Registry, StepContext, Transform};
use crate::rng::RngHandle;
use crate::signature::{Signature, SignatureError, StreamKindDecl, SELF};
use crate::streams::{check_kind, linear_combine, zero_value, StreamValue};
use crate::trace::{TraceEntry, TraceRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid signature: {0}")]
    InvalidSignature(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Neuron(#[from] NeuronError),
    #[error("unknown port {port}: {source}")]
    UnknownPort { port: PortName, source: SignatureError },
    #[error("tick {tick}: neuron {neuron} failed: {message}")]
    TransformFailure { tick: u64, neuron: CellId, message: String },
    #[error("tick {tick}: cannot combine input {port}: {message}")]
    CombineFailure { tick: u64, port: PortName, message: String },
    #[error("up stroke requested before a down stroke")]
    PhaseOrder,
    #[error("machine halted: {0}")]
    Halted(String),
}

/// One of the two ways the outside world edits the matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Edit {
    SetWeight { row: PortName, col: PortName, weight: f64 },
    UpdateWeights(UpdateSpec),
}

/// A non-fatal message recorded while stepping.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub tick: u64,
    pub neuron: CellId,
    pub message: String,
}

/// Counts of stored structures; everything outside these is implicit zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    pub matrix_entries: usize,
    pub resident_neurons: usize,
    pub stored_values: usize,
}

#[derive(Debug, Clone)]
pub struct Machine {
    sig: Signature,
    reg: Registry,
    self_cell: CellId,
    self_in: PortName,
    self_out: PortName,
    states: BTreeMap<CellId, NeuronState>,
    inputs: BTreeMap<PortName, StreamValue>,
    outputs: BTreeMap<PortName, StreamValue>,
    active: BTreeSet<CellId>,
    /// Activated since the last down stroke; their transforms wait.
    pending: BTreeSet<CellId>,
    inputs_fresh: bool,
    t: u64,
    rng: RngHandle,
    diagnostics: Vec<Diagnostic>,
    halted: Option<String>,
}

impl Machine {
    pub fn new(sig: Signature, reg: Registry, seed: u64) -> Result<Self, EngineError> {
        sig.validate().map_err(|e| EngineError::InvalidSignature(e.to_string()))?;
        reg.check_bound(&sig).map_err(|e| EngineError::InvalidSignature(e.to_string()))?;
        let self_cell = CellId::new(name(SELF), name(SELF));
        let self_decl = sig.neuron_type(&self_cell.type_name).expect("validated");
        let self_in = self_cell.port(self_decl.inputs[0].0.clone(), Direction::Input);
        let self_out = self_cell.port(self_decl.outputs[0].0.clone(), Direction::Output);
        let mut a = NetMatrix::new();
        a.set_weight(&sig, &self_in, &self_out, 1.0)?;
        let self_transform = reg.transform(&self_decl.transform_id).expect("validated").clone();
        let mut m = Machine {
            sig,
            reg,
            self_cell: self_cell.clone(),
            self_in,
            self_out: self_out.clone(),
            states: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            active: BTreeSet::new(),
            pending: BTreeSet::new(),
            inputs_fresh: false,
            t: 0,
            rng: RngHandle::seeded(seed),
            diagnostics: Vec::new(),
            halted: None,
        };
        m.states.insert(self_cell.clone(), self_transform.initial_state());
        m.outputs.insert(self_out, StreamValue::Matrix(a));
        m.active.insert(self_cell);
        Ok(m)
    }

    /// A machine over the standard signature.
    pub fn standard(seed: u64) -> Self {
        let (sig, reg) = Registry::standard();
        Machine::new(sig, reg, seed).expect("standard signature is valid")
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn registry(&self) -> &Registry {
        &self.reg
    }

    pub fn tick(&self) -> u64 {
        self.t
    }

    pub fn self_input(&self) -> &PortName {
        &self.self_in
    }

    pub fn self_output(&self) -> &PortName {
        &self.self_out
    }

    /// The matrix governing the machine: the current output of `Self`.
    pub fn matrix(&self) -> &NetMatrix {
        self.outputs
            .get(&self.self_out)
            .and_then(StreamValue::as_matrix)
            .expect("Self always holds a matrix")
    }

    pub fn active(&self) -> &BTreeSet<CellId> {
        &self.active
    }

    pub fn is_active(&self, cell: &CellId) -> bool {
        self.active.contains(cell)
    }

    pub fn is_resident(&self, cell: &CellId) -> bool {
        self.states.contains_key(cell)
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn halted(&self) -> Option<&str> {
        self.halted.as_deref()
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = RngHandle::seeded(seed);
    }

    pub fn footprint(&self) -> Footprint {
        Footprint {
            matrix_entries: self.matrix().nnz(),
            resident_neurons: self.states.len(),
            stored_values: self.inputs.len() + self.outputs.len(),
        }
    }

    /// Declares a kind together with its `id_<kind>` and `gated_<kind>` types.
    pub fn declare_kind(&mut self, decl: StreamKindDecl) -> Result<(), EngineError> {
        let kind = decl.name.clone();
        let mut sig = self.sig.clone();
        sig.declare_kind(decl).map_err(NeuronError::from)?;
        for t in kind_types(&kind) {
            self.reg.declare_type(&mut sig, t)?;
        }
        self.sig = sig;
        Ok(())
    }

    /// Declares a type whose transform id is already bound.
    pub fn declare_type(&mut self, decl: NeuronTypeDecl) -> Result<(), EngineError> {
        self.reg.declare_type(&mut self.sig, decl)?;
        Ok(())
    }

    /// Binds a host transform and declares its type. Takes effect for
    /// neurons not yet instantiated.
    pub fn register_type(&mut self, decl: NeuronTypeDecl, t: Arc<dyn Transform>) -> Result<(), EngineError> {
        self.reg.register_type(&mut self.sig, decl, t)?;
        Ok(())
    }

    pub fn bind_transform(&mut self, id: Name, t: Arc<dyn Transform>) -> Result<(), EngineError> {
        self.reg.bind(id, t)?;
        Ok(())
    }

    fn kind_of(&self, port: &PortName) -> Result<&StreamKindDecl, EngineError> {
        self.sig
            .port_kind(port)
            .map_err(|source| EngineError::UnknownPort { port: port.clone(), source })
    }

    pub fn read_output(&self, port: &PortName) -> Result<StreamValue, EngineError> {
        self.read(port, Direction::Output, &self.outputs)
    }

    pub fn read_input(&self, port: &PortName) -> Result<StreamValue, EngineError> {
        self.read(port, Direction::Input, &self.inputs)
    }

    fn read(
        &self,
        port: &PortName,
        direction: Direction,
        values: &BTreeMap<PortName, StreamValue>,
    ) -> Result<StreamValue, EngineError> {
        if port.direction != direction {
            return Err(EngineError::UnknownPort {
                port: port.clone(),
                source: SignatureError::UnknownField {
                    type_name: port.type_name.clone(),
                    field: port.field_name.clone(),
                    direction,
                },
            });
        }
        let kind = self.kind_of(port)?;
        if self.active.contains(&port.cell()) {
            if let Some(v) = values.get(port) {
                return Ok(v.clone());
            }
        }
        Ok(zero_value(kind))
    }

    /// Applies an external edit to the matrix held at `Self`'s output.
    pub fn apply_edit(&mut self, edit: Edit) -> Result<(), EngineError> {
        let mut a = self.matrix().clone();
        match edit {
            Edit::SetWeight { row, col, weight } => a.set_weight(&self.sig, &row, &col, weight)?,
            Edit::UpdateWeights(spec) => {
                let delta = update_kernel(&a, &spec);
                a.add_scaled_in_place(&delta, 1.0);
            }
        }
        self.outputs.insert(self.self_out.clone(), StreamValue::Matrix(a));
        self.refresh_activity();
        Ok(())
    }

    fn refresh_activity(&mut self) {
        let (rows, cols) = self.matrix().active_ports();
        let mut now: BTreeSet<CellId> = rows.iter().chain(cols.iter()).map(PortName::cell).collect();
        now.insert(self.self_cell.clone());
        let newly: Vec<CellId> = now.difference(&self.active).cloned().collect();
        for cell in newly {
            let Ok(decl) = self.sig.neuron_type(&cell.type_name) else { continue };
            let initial = self
                .reg
                .transform(&decl.transform_id)
                .map(|t| t.initial_state())
                .unwrap_or_default();
            self.states.insert(cell.clone(), initial);
            for (f, _) in &decl.inputs {
                self.inputs.remove(&cell.port(f.clone(), Direction::Input));
            }
            for (f, _) in &decl.outputs {
                self.outputs.remove(&cell.port(f.clone(), Direction::Output));
            }
            self.pending.insert(cell);
        }
        self.pending.retain(|c| now.contains(c));
        self.active = now;
    }

    fn halt(&mut self, err: EngineError) -> EngineError {
        self.halted = Some(err.to_string());
        err
    }

    /// Recomputes every active input from the current outputs and matrix.
    pub fn down_stroke(&mut self) -> Result<(), EngineError> {
        if let Some(h) = &self.halted {
            return Err(EngineError::Halted(h.clone()));
        }
        let a = self.matrix().clone();
        let mut fresh = Vec::new();
        for cell in &self.active {
            let decl = self.sig.neuron_type(&cell.type_name).expect("active neurons have declared types");
            for (field, kind_name) in &decl.inputs {
                let port = cell.port(field.clone(), Direction::Input);
                let kind = self.sig.kind(kind_name).expect("declared kind");
                // outputs not yet produced read as zero and drop out of the sum
                let terms: Vec<(f64, &StreamValue)> = a
                    .row(&port)
                    .into_iter()
                    .flatten()
                    .filter_map(|(col, w)| self.outputs.get(col).map(|v| (*w, v)))
                    .collect();
                match linear_combine(kind, &terms, &mut self.rng) {
                    Ok(v) => fresh.push((port, v)),
                    Err(e) => {
                        let err = EngineError::CombineFailure { tick: self.t + 1, port, message: e.to_string() };
                        self.halted = Some(err.to_string());
                        return Err(err);
                    }
                }
            }
        }
        for (port, v) in fresh {
            self.inputs.insert(port, v);
        }
        self.pending.clear();
        self.inputs_fresh = true;
        Ok(())
    }

    /// Runs every active neuron's transform and advances the clock.
    pub fn up_stroke(&mut self) -> Result<(), EngineError> {
        if let Some(h) = &self.halted {
            return Err(EngineError::Halted(h.clone()));
        }
        if !self.inputs_fresh {
            return Err(EngineError::PhaseOrder);
        }
        let tick = self.t + 1;
        let mut produced: Vec<(PortName, StreamValue)> = Vec::new();
        let cells: Vec<CellId> = self.active.difference(&self.pending).cloned().collect();
        for cell in cells {
            let decl = self.sig.neuron_type(&cell.type_name).expect("declared").clone();
            let transform = self.reg.transform(&decl.transform_id).expect("bound").clone();
            let mut inputs = Vec::with_capacity(decl.inputs.len());
            for (field, kind_name) in &decl.inputs {
                let port = cell.port(field.clone(), Direction::Input);
                let v = match self.inputs.get(&port) {
                    Some(v) => v.clone(),
                    None => zero_value(self.sig.kind(kind_name).expect("declared kind")),
                };
                inputs.push(v);
            }
            let cx = StepContext { sig: &self.sig, decl: &decl };
            let state = self.states.entry(cell.clone()).or_default();
            let result = transform.step(&cx, state, &inputs, &mut self.rng);
            let out = match result {
                Ok(out) => out,
                Err(e) => {
                    let err = EngineError::TransformFailure { tick, neuron: cell, message: e.0 };
                    return Err(self.halt(err));
                }
            };
            if out.outputs.len() != decl.outputs.len() {
                let message = format!("emitted {} outputs, type declares {}", out.outputs.len(), decl.outputs.len());
                return Err(self.halt(EngineError::TransformFailure { tick, neuron: cell, message }));
            }
            for ((field, kind_name), v) in decl.outputs.iter().zip(out.outputs) {
                let kind = self.sig.kind(kind_name).expect("declared kind");
                if let Err(e) = check_kind(kind, &v) {
                    let message = format!("output `{field}`: {e}");
                    return Err(self.halt(EngineError::TransformFailure { tick, neuron: cell, message }));
                }
                produced.push((cell.port(field.clone(), Direction::Output), v));
            }
            for message in out.diagnostics {
                self.diagnostics.push(Diagnostic { tick, neuron: cell.clone(), message });
            }
        }
        for (port, v) in produced {
            self.outputs.insert(port, v);
        }
        if let Err(message) = self.matrix().check_invariants(&self.sig) {
            let neuron = self.self_cell.clone();
            return Err(self.halt(EngineError::TransformFailure { tick, neuron, message }));
        }
        self.t = tick;
        self.inputs_fresh = false;
        self.refresh_activity();
        Ok(())
    }

    /// `n` repetitions of down stroke then up stroke.
    pub fn step(&mut self, n: u64) -> Result<(), EngineError> {
        for _ in 0..n {
            self.down_stroke()?;
            self.up_stroke()?;
        }
        Ok(())
    }

    /// Drops every dormant neuron's storage. Never removes `Self`.
    pub fn garbage_collect(&mut self) {
        let active = &self.active;
        self.states.retain(|c, _| active.contains(c));
        self.inputs.retain(|p, _| active.contains(&p.cell()));
        self.outputs.retain(|p, _| active.contains(&p.cell()));
    }

    /// Latest values of all ports of active neurons, in port order.
    pub fn snapshot(&self) -> TraceRecord {
        let mut entries = Vec::new();
        for cell in &self.active {
            let Ok(decl) = self.sig.neuron_type(&cell.type_name) else { continue };
            let fields = decl
                .inputs
                .iter()
                .map(|f| (f, Direction::Input))
                .chain(decl.outputs.iter().map(|f| (f, Direction::Output)));
            for ((field, kind_name), dir) in fields {
                let port = cell.port(field.clone(), dir);
                let store = match dir {
                    Direction::Input => &self.inputs,
                    Direction::Output => &self.outputs,
                };
                let value = match store.get(&port) {
                    Some(v) => v.clone(),
                    None => zero_value(self.sig.kind(kind_name).expect("declared kind")),
                };
                entries.push(TraceEntry { port, kind: kind_name.clone(), value });
            }
        }
        entries.sort_by(|a, b| a.port.cmp(&b.port));
        TraceRecord { t: self.t, entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::RowSource;
    use crate::signature::SCALAR;
    use crate::streams::{MaskTail, MaskVector};

    fn inp(t: &str, c: &str) -> PortName {
        PortName::input(t, c, "in").unwrap()
    }

    fn out(t: &str, c: &str) -> PortName {
        PortName::output(t, c, "out").unwrap()
    }

    fn set(m: &mut Machine, row: PortName, col: PortName, weight: f64) {
        m.apply_edit(Edit::SetWeight { row, col, weight }).unwrap();
    }

    fn scalar_out(m: &Machine, p: &PortName) -> f64 {
        m.read_output(p).unwrap().as_scalar().unwrap()
    }

    #[test]
    fn fresh_machine() {
        let m = Machine::standard(0);
        assert_eq!(m.tick(), 0);
        let a = m.read_output(m.self_output()).unwrap();
        let a = a.as_matrix().unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(m.self_input(), m.self_output()), 1.0);
        assert_eq!(m.read_output(&out("sigmoid", "x")).unwrap(), StreamValue::Scalar(0.0));
        assert_eq!(m.active().len(), 1);
        let snap = m.snapshot();
        assert_eq!(snap.entries.len(), 2);
    }

    #[test]
    fn self_only_is_fixed_point() {
        let mut m = Machine::standard(0);
        let before = m.matrix().clone();
        m.step(20).unwrap();
        assert_eq!(m.matrix(), &before);
        assert_eq!(m.tick(), 20);
    }

    #[test]
    fn accumulator_law() {
        let mut m = Machine::standard(0);
        set(&mut m, inp("id_scalar", "acc"), out("id_scalar", "acc"), 1.0);
        set(&mut m, inp("id_scalar", "acc"), out("one", "src"), 2.5);
        for n in 1..=50u64 {
            m.step(1).unwrap();
            assert_eq!(scalar_out(&m, &out("id_scalar", "acc")), (n as f64 - 1.0) * 2.5);
        }
    }

    #[test]
    fn activation_reads_zero_until_first_up_stroke() {
        let mut m = Machine::standard(0);
        m.step(3).unwrap();
        set(&mut m, inp("linear", "x"), out("one", "b"), 1.0);
        assert!(m.is_active(&CellId::new(name("one"), name("b"))));
        assert_eq!(scalar_out(&m, &out("one", "b")), 0.0);
        m.step(1).unwrap();
        assert_eq!(scalar_out(&m, &out("one", "b")), 1.0);
        // linear saw the bias output only after one more step
        assert_eq!(scalar_out(&m, &out("linear", "x")), 0.0);
        m.step(1).unwrap();
        assert_eq!(scalar_out(&m, &out("linear", "x")), 1.0);
    }

    #[test]
    fn pending_neurons_skip_an_unprimed_up_stroke() {
        let mut m = Machine::standard(0);
        m.down_stroke().unwrap();
        set(&mut m, inp("linear", "x"), out("one", "b"), 1.0);
        m.up_stroke().unwrap();
        assert_eq!(scalar_out(&m, &out("one", "b")), 0.0);
        assert!(matches!(m.up_stroke(), Err(EngineError::PhaseOrder)));
    }

    #[test]
    fn step_composes() {
        let build = || {
            let mut m = Machine::standard(3);
            set(&mut m, inp("tanh", "a"), out("tanh", "b"), 0.7);
            set(&mut m, inp("tanh", "b"), out("tanh", "a"), -1.3);
            set(&mut m, inp("tanh", "a"), out("one", "u"), 0.4);
            m
        };
        let mut m1 = build();
        m1.step(1).unwrap();
        m1.step(1).unwrap();
        let mut m2 = build();
        m2.step(2).unwrap();
        assert_eq!(m1.snapshot(), m2.snapshot());
    }

    #[test]
    fn gc_drops_dormant_neurons() {
        let mut m = Machine::standard(0);
        m.garbage_collect();
        assert_eq!(m.active().len(), 1);
        assert_eq!(m.footprint().resident_neurons, 1);
        set(&mut m, inp("linear", "x"), out("one", "b"), 1.0);
        m.step(2).unwrap();
        assert_eq!(m.footprint().resident_neurons, 3);
        set(&mut m, inp("linear", "x"), out("one", "b"), 0.0);
        assert_eq!(m.active().len(), 1);
        assert_eq!(m.footprint().resident_neurons, 3);
        m.garbage_collect();
        let once = m.footprint();
        m.garbage_collect();
        assert_eq!(m.footprint(), once);
        assert_eq!(once.resident_neurons, 1);
        assert_eq!(once.stored_values, 2);
    }

    #[test]
    fn update_edit_zeroes_row() {
        let mut m = Machine::standard(0);
        set(&mut m, inp("linear", "x"), out("one", "b"), 0.5);
        set(&mut m, inp("linear", "x"), out("linear", "x"), -2.0);
        let sig = m.signature().clone();
        let unit = |c: f64| {
            MaskVector::from_entries(&sig, Direction::Input, [(inp("linear", "x"), c)], MaskTail::Zero).unwrap()
        };
        let spec = UpdateSpec::new(
            unit(1.0),
            MaskVector::all_ones(Direction::Output, name(SCALAR)),
            RowSource::Rows(unit(-1.0)),
            1.0,
        )
        .unwrap();
        m.apply_edit(Edit::UpdateWeights(spec)).unwrap();
        assert!(m.matrix().row(&inp("linear", "x")).is_none());
        assert_eq!(m.active().len(), 1);
    }

    #[test]
    fn transform_failure_halts() {
        #[derive(Debug)]
        struct Broken;
        impl Transform for Broken {
            fn arity(&self) -> crate::neurons::Arity {
                crate::neurons::Arity { inputs: 0, outputs: 1 }
            }
            fn step(
                &self,
                _: &StepContext<'_>,
                _: &mut NeuronState,
                _: &[StreamValue],
                _: &mut RngHandle,
            ) -> Result<crate::neurons::StepOutput, crate::neurons::TransformError> {
                Ok(crate::neurons::StepOutput::values(vec![StreamValue::Vector(vec![1.0])]))
            }
        }
        let mut m = Machine::standard(0);
        let decl = NeuronTypeDecl::new(name("broken"), vec![], vec![(name("out"), name(SCALAR))], name("broken"));
        m.register_type(decl, Arc::new(Broken)).unwrap();
        set(&mut m, inp("linear", "x"), out("broken", "b"), 1.0);
        m.step(1).unwrap_err();
        assert!(m.halted().is_some());
        assert!(matches!(m.step(1), Err(EngineError::Halted(_))));
    }

    #[test]
    fn unknown_port_reads_fail() {
        let m = Machine::standard(0);
        assert!(matches!(m.read_output(&out("nosuch", "x")), Err(EngineError::UnknownPort { .. })));
        assert!(m.read_output(&inp("linear", "x")).is_err());
    }
}
