use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::engine::{EngineError, Machine};
use crate::lang::ast::*;
use crate::lang::lexer::Pos;
use crate::lang::parser::{parse_program, SyntaxError};
use crate::matrix::{MatrixError, RowSource, UpdateSpec};
use crate::names::{name, CellId, Direction, Name, PortName};
use crate::neurons::NeuronTypeDecl;
use crate::signature::{SignatureError, StreamKindDecl, SELF};
use crate::streams::{MaskTail, MaskVector};
use crate::trace::{value_to_json, TraceRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalErrorKind {
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(Name),
    #[error("identifier `{0}` is already bound")]
    DuplicateIdentifier(Name),
    #[error("`{0}` names a neuron, not a port")]
    NotAPort(Name),
    #[error("`{0}` does not name a neuron")]
    NotANeuron(Name),
    #[error("{port} is not an {expected} port")]
    WrongDirection { port: PortName, expected: Direction },
    #[error("{0}")]
    CrossKindWeight(MatrixError),
    #[error("no transform bound for type `{0}`")]
    UnboundTransform(Name),
    #[error("`{ident}` declared as `{declared}` but the port carries `{actual}`")]
    KindMismatch { ident: Name, declared: Name, actual: Name },
    #[error("kind `{0}` already declared with a different shape")]
    ConflictingKind(Name),
    #[error("malformed update: {0}")]
    MalformedUpdate(String),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Runtime(EngineError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{pos}: {kind}")]
pub struct EvalError {
    pub pos: Pos,
    pub kind: EvalErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LangError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl LangError {
    pub fn pos(&self) -> Pos {
        match self {
            LangError::Syntax(e) => e.pos(),
            LangError::Eval(e) => e.pos,
        }
    }

    /// The message without its position.
    pub fn message(&self) -> String {
        match self {
            LangError::Syntax(SyntaxError::Lex(e)) => format!("unexpected character {:?}", e.ch),
            LangError::Syntax(SyntaxError::Parse(e)) => format!("expected {}, found {}", e.expected, e.found),
            LangError::Eval(e) => e.kind.to_string(),
        }
    }

    /// True for failures of the running machine, as opposed to mistakes in
    /// the program text.
    pub fn is_runtime(&self) -> bool {
        matches!(self, LangError::Eval(e) if e.kind.is_runtime())
    }
}

impl EvalErrorKind {
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            EvalErrorKind::Runtime(
                EngineError::TransformFailure { .. }
                    | EngineError::CombineFailure { .. }
                    | EngineError::Halted(_)
                    | EngineError::PhaseOrder
            )
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binding {
    Port(PortName),
    Neuron(CellId),
}

/// Identifier bindings plus the cell names already in use.
#[derive(Debug, Clone, Default)]
pub struct Env {
    bindings: BTreeMap<Name, Binding>,
    cell_names: BTreeSet<Name>,
    counter: u64,
}

impl Env {
    pub fn new() -> Self {
        let mut env = Env::default();
        env.cell_names.insert(name(SELF));
        env
    }

    pub fn get(&self, ident: &Name) -> Option<&Binding> {
        self.bindings.get(ident)
    }

    pub fn bindings(&self) -> impl Iterator<Item = (&Name, &Binding)> {
        self.bindings.iter()
    }

    pub fn note_cell_name(&mut self, cell: &Name) {
        self.cell_names.insert(cell.clone());
    }

    /// A fresh `g<counter>` name not yet used as a cell name.
    pub fn autogen_cellname(&mut self) -> Name {
        loop {
            let candidate = name(&format!("g{}", self.counter));
            self.counter += 1;
            if self.cell_names.insert(candidate.clone()) {
                return candidate;
            }
        }
    }
}

/// Text lines for `#show` and the trace records of every tick stepped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOutcome {
    pub lines: Vec<String>,
    pub records: Vec<TraceRecord>,
}

impl EvalOutcome {
    fn extend(&mut self, other: EvalOutcome) {
        self.lines.extend(other.lines);
        self.records.extend(other.records);
    }
}

#[derive(Debug, Clone)]
pub struct Interpreter {
    machine: Machine,
    env: Env,
}

type EResult<T> = Result<T, EvalErrorKind>;

impl Interpreter {
    pub fn new(machine: Machine) -> Self {
        let mut env = Env::new();
        for cell in machine.active() {
            env.note_cell_name(&cell.cell_name);
        }
        Interpreter { machine, env }
    }

    pub fn standard(seed: u64) -> Self {
        Interpreter::new(Machine::standard(seed))
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn machine_mut(&mut self) -> &mut Machine {
        &mut self.machine
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    /// Parses and evaluates `text`, stopping at the first error.
    pub fn run_source(&mut self, text: &str) -> Result<EvalOutcome, LangError> {
        let program = parse_program(text)?;
        Ok(self.eval_program(&program)?)
    }

    pub fn eval_program(&mut self, program: &[Statement]) -> Result<EvalOutcome, EvalError> {
        let mut out = EvalOutcome::default();
        for s in program {
            out.extend(self.eval_statement(s)?);
        }
        Ok(out)
    }

    pub fn eval_statement(&mut self, s: &Statement) -> Result<EvalOutcome, EvalError> {
        let mut records = Vec::new();
        let mut out = self.eval_statement_with(s, &mut |m: &Machine| records.push(m.snapshot()))?;
        out.records = records;
        Ok(out)
    }

    /// Like [`Interpreter::eval_statement`], but hands the machine to
    /// `on_tick` after every step instead of collecting trace records.
    pub fn eval_statement_with(
        &mut self,
        s: &Statement,
        on_tick: &mut dyn FnMut(&Machine),
    ) -> Result<EvalOutcome, EvalError> {
        self.eval(&s.node, on_tick).map_err(|kind| EvalError { pos: s.pos, kind })
    }

    fn eval(&mut self, s: &Stmt, on_tick: &mut dyn FnMut(&Machine)) -> EResult<EvalOutcome> {
        let mut out = EvalOutcome::default();
        match s {
            Stmt::KindDecl(specs) => self.kind_decl(specs)?,
            Stmt::NewCellType { type_name, inputs, outputs } => {
                if !self.machine.registry().is_bound(type_name) {
                    return Err(EvalErrorKind::UnboundTransform(type_name.clone()));
                }
                let flip = |v: &[(Name, Name)]| v.iter().map(|(k, f)| (f.clone(), k.clone())).collect();
                let decl = NeuronTypeDecl::new(type_name.clone(), flip(inputs), flip(outputs), type_name.clone());
                self.machine.declare_type(decl).map_err(EvalErrorKind::Runtime)?;
            }
            Stmt::NeuronName { type_name, cell_name } => {
                self.machine.signature().neuron_type(type_name)?;
                self.env.note_cell_name(cell_name);
            }
            Stmt::NeuronDecl { type_name, neuron_id, outputs, inputs } => {
                self.neuron_decl(type_name, neuron_id, outputs, inputs)?
            }
            Stmt::StreamDecl { kind_name, stream_id, neuron_id, field_name } => {
                self.machine.signature().kind(kind_name)?;
                self.check_fresh(stream_id)?;
                let cell = self.neuron(neuron_id)?;
                let port = cell.port(field_name.clone(), Direction::Input);
                let actual = self.machine.signature().port_kind_name(&port)?;
                if actual != kind_name {
                    return Err(EvalErrorKind::KindMismatch {
                        ident: stream_id.clone(),
                        declared: kind_name.clone(),
                        actual: actual.clone(),
                    });
                }
                self.env.bindings.insert(stream_id.clone(), Binding::Port(port));
            }
            Stmt::Weight { dst, src, value } => {
                let row = self.resolve_dir(dst, Direction::Input)?;
                let col = self.resolve_dir(src, Direction::Output)?;
                let edit = crate::engine::Edit::SetWeight { row, col, weight: *value };
                self.machine.apply_edit(edit).map_err(runtime)?;
            }
            Stmt::UpdateWeights { lhs, rhs } => {
                if let Some(spec) = self.update_spec(lhs, rhs)? {
                    self.machine.apply_edit(crate::engine::Edit::UpdateWeights(spec)).map_err(runtime)?;
                }
            }
            Stmt::Step(n) => {
                for _ in 0..*n {
                    self.machine.step(1).map_err(runtime)?;
                    on_tick(&self.machine);
                }
            }
            Stmt::Show(target) => out.lines.extend(self.show(target)?),
            Stmt::Seed(seed) => self.machine.reseed(*seed),
            Stmt::Gc => self.machine.garbage_collect(),
        }
        Ok(out)
    }

    fn kind_decl(&mut self, specs: &[KindSpec]) -> EResult<()> {
        for spec in specs {
            let existing = self.machine.signature().kind(&spec.name).ok().map(|k| k.shape.clone());
            match (&spec.shape, existing) {
                (None, None) => return Err(SignatureError::UnknownKind(spec.name.clone()).into()),
                (None, Some(_)) => {}
                (Some(shape), Some(old)) if *shape == old => {}
                (Some(_), Some(_)) => return Err(EvalErrorKind::ConflictingKind(spec.name.clone())),
                (Some(shape), None) => self
                    .machine
                    .declare_kind(StreamKindDecl::new(spec.name.clone(), shape.clone()))
                    .map_err(EvalErrorKind::Runtime)?,
            }
        }
        Ok(())
    }

    fn neuron_decl(
        &mut self,
        type_name: &Name,
        neuron_id: &Name,
        outputs: &[(Name, Name)],
        inputs: &[(Name, Name)],
    ) -> EResult<()> {
        let decl = self.machine.signature().neuron_type(type_name)?.clone();
        if !self.machine.registry().is_bound(&decl.transform_id) {
            return Err(EvalErrorKind::UnboundTransform(type_name.clone()));
        }
        let mut fresh = BTreeSet::new();
        for ident in std::iter::once(neuron_id).chain(outputs.iter().chain(inputs).map(|(_, id)| id)) {
            self.check_fresh(ident)?;
            if !fresh.insert(ident) {
                return Err(EvalErrorKind::DuplicateIdentifier(ident.clone()));
            }
        }
        let check_field = |field: &Name, direction: Direction| {
            let fields = match direction {
                Direction::Input => &decl.inputs,
                Direction::Output => &decl.outputs,
            };
            if fields.iter().any(|(f, _)| f == field) {
                Ok(())
            } else {
                Err(SignatureError::UnknownField { type_name: type_name.clone(), field: field.clone(), direction })
            }
        };
        for (f, _) in outputs {
            check_field(f, Direction::Output)?;
        }
        for (f, _) in inputs {
            check_field(f, Direction::Input)?;
        }
        let cell = CellId::new(type_name.clone(), self.env.autogen_cellname());
        for (f, id) in outputs {
            self.env.bindings.insert(id.clone(), Binding::Port(cell.port(f.clone(), Direction::Output)));
        }
        for (f, id) in inputs {
            self.env.bindings.insert(id.clone(), Binding::Port(cell.port(f.clone(), Direction::Input)));
        }
        self.env.bindings.insert(neuron_id.clone(), Binding::Neuron(cell));
        Ok(())
    }

    fn check_fresh(&self, ident: &Name) -> EResult<()> {
        if self.env.bindings.contains_key(ident) {
            Err(EvalErrorKind::DuplicateIdentifier(ident.clone()))
        } else {
            Ok(())
        }
    }

    fn neuron(&self, ident: &Name) -> EResult<CellId> {
        match self.env.get(ident) {
            Some(Binding::Neuron(c)) => Ok(c.clone()),
            Some(Binding::Port(_)) => Err(EvalErrorKind::NotANeuron(ident.clone())),
            None => Err(EvalErrorKind::UnknownIdentifier(ident.clone())),
        }
    }

    /// The port a reference denotes. Field names are unique across a type's
    /// inputs and outputs, so the direction follows from the field.
    fn resolve(&mut self, r: &PortRef) -> EResult<PortName> {
        let (cell, field) = match &r.node {
            RefKind::Ident(id) => {
                return match self.env.get(id) {
                    Some(Binding::Port(p)) => Ok(p.clone()),
                    Some(Binding::Neuron(_)) => Err(EvalErrorKind::NotAPort(id.clone())),
                    None => Err(EvalErrorKind::UnknownIdentifier(id.clone())),
                };
            }
            RefKind::Field(id, f) => (self.neuron(id)?, f.clone()),
            RefKind::Triple(t, c, f) => (CellId::new(t.clone(), c.clone()), f.clone()),
        };
        let decl = self.machine.signature().neuron_type(&cell.type_name)?;
        let direction = if decl.inputs.iter().any(|(x, _)| *x == field) {
            Direction::Input
        } else if decl.outputs.iter().any(|(x, _)| *x == field) {
            Direction::Output
        } else {
            return Err(SignatureError::UnknownField {
                type_name: cell.type_name.clone(),
                field,
                direction: Direction::Input,
            }
            .into());
        };
        if let RefKind::Triple(..) = r.node {
            self.env.note_cell_name(&cell.cell_name);
        }
        Ok(cell.port(field, direction))
    }

    fn resolve_dir(&mut self, r: &PortRef, expected: Direction) -> EResult<PortName> {
        let port = self.resolve(r)?;
        if port.direction != expected {
            return Err(EvalErrorKind::WrongDirection { port, expected });
        }
        Ok(port)
    }

    fn mask(&mut self, terms: &[MaskTerm], axis: Direction) -> EResult<MaskVector> {
        let mut entries = Vec::with_capacity(terms.len());
        for t in terms {
            entries.push((self.resolve_dir(&t.target, axis)?, t.coef));
        }
        MaskVector::from_entries(self.machine.signature(), axis, entries, MaskTail::Zero)
            .map_err(|e| EvalErrorKind::MalformedUpdate(e.to_string()))
    }

    /// `None` when every mask is zero and the update has no effect.
    fn update_spec(&mut self, lhs: &[MaskTerm], rhs: &UpdateRhs) -> EResult<Option<UpdateSpec>> {
        let gamma = self.mask(lhs, Direction::Input)?;
        let (alpha, beta) = match rhs {
            UpdateRhs::Product { columns, rows } => {
                (self.mask(columns, Direction::Output)?, RowSource::Rows(self.mask(rows, Direction::Input)?))
            }
            UpdateRhs::Sum(terms) => {
                let first = self.resolve(&terms[0].target)?;
                let axis = first.direction;
                let m = self.mask(terms, axis).map_err(|e| match e {
                    EvalErrorKind::WrongDirection { .. } => {
                        EvalErrorKind::MalformedUpdate("right-hand side mixes input and output streams".into())
                    }
                    e => e,
                })?;
                let Some(kind) = m.port_kind().or(gamma.port_kind()).cloned() else { return Ok(None) };
                match axis {
                    // a fake input row of ones, selected by the column mask
                    Direction::Output => (m, RowSource::AllOnes(kind)),
                    // a combination of existing rows, all columns kept
                    Direction::Input => (MaskVector::all_ones(Direction::Output, kind), RowSource::Rows(m)),
                }
            }
        };
        UpdateSpec::new(gamma, alpha, beta, 1.0)
            .map(Some)
            .map_err(|e| EvalErrorKind::MalformedUpdate(e.to_string()))
    }

    fn show(&mut self, target: &ShowTarget) -> EResult<Vec<String>> {
        Ok(match target {
            ShowTarget::Matrix => self.machine.matrix().dump().lines().map(str::to_string).collect(),
            ShowTarget::Active => self.machine.active().iter().map(|c| c.to_string()).collect(),
            ShowTarget::Tick => vec![format!("tick {}", self.machine.tick())],
            ShowTarget::Port(r) => {
                let port = self.resolve(r)?;
                let value = match port.direction {
                    Direction::Input => self.machine.read_input(&port),
                    Direction::Output => self.machine.read_output(&port),
                }
                .map_err(EvalErrorKind::Runtime)?;
                vec![format!("{port} {}", value_to_json(&value))]
            }
        })
    }
}

fn runtime(e: EngineError) -> EvalErrorKind {
    match e {
        EngineError::Matrix(m @ MatrixError::CrossKindWeight { .. }) => EvalErrorKind::CrossKindWeight(m),
        e => EvalErrorKind::Runtime(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn port(s: &str, dir: Direction) -> PortName {
        let parts: Vec<&str> = s.split(':').collect();
        match dir {
            Direction::Input => PortName::input(parts[0], parts[1], parts[2]).unwrap(),
            Direction::Output => PortName::output(parts[0], parts[1], parts[2]).unwrap(),
        }
    }

    fn kind_of(err: LangError) -> EvalErrorKind {
        match err {
            LangError::Eval(e) => e.kind,
            other => panic!("expected an evaluation error, got {other}"),
        }
    }

    const TWO: &str = "#neuron sigmoid:n1 out:y1 = #transformof in:x1;\n\
                       #neuron sigmoid:n2 out:y2 = #transformof in:x2;\n";

    #[test]
    fn update_adds_alpha_entries() {
        let mut it = Interpreter::standard(0);
        it.run_source(TWO).unwrap();
        it.run_source("#updateweights x1 += 0.5 * y1 + (-2) * y2 + y1;").unwrap();
        let a = it.machine().matrix();
        let x1 = port("sigmoid:g0:in", Direction::Input);
        assert_eq!(a.get(&x1, &port("sigmoid:g0:out", Direction::Output)), 1.5);
        assert_eq!(a.get(&x1, &port("sigmoid:g1:out", Direction::Output)), -2.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn row_zeroing() {
        let mut it = Interpreter::standard(0);
        it.run_source(TWO).unwrap();
        it.run_source("#weight x1 y1 = 0.5; #weight x1 y2 = -2; #weight x2 y1 = 3;").unwrap();
        it.run_source("#updateweights x1 += (-1) * x1;").unwrap();
        let a = it.machine().matrix();
        assert!(a.row(&port("sigmoid:g0:in", Direction::Input)).is_none());
        assert_eq!(a.get(&port("sigmoid:g1:in", Direction::Input), &port("sigmoid:g0:out", Direction::Output)), 3.0);
    }

    #[test]
    fn product_form_combines_rows() {
        let mut it = Interpreter::standard(0);
        it.run_source(TWO).unwrap();
        it.run_source("#weight x2 y1 = 3; #weight x2 y2 = 5;").unwrap();
        it.run_source("#updateweights x1 += (y2) * (0.5 * x2);").unwrap();
        let a = it.machine().matrix();
        let x1 = port("sigmoid:g0:in", Direction::Input);
        assert_eq!(a.get(&x1, &port("sigmoid:g1:out", Direction::Output)), 2.5);
        assert_eq!(a.get(&x1, &port("sigmoid:g0:out", Direction::Output)), 0.0);
    }

    #[test]
    fn declarations_leave_matrix_alone() {
        let mut it = Interpreter::standard(0);
        let before = it.machine().matrix().clone();
        it.run_source(TWO).unwrap();
        it.run_source("#neuron relu:c9; #kind v2:vector:2; #stream scalar:z = #neuroninput n1.in;").unwrap();
        assert_eq!(it.machine().matrix(), &before);
        assert_eq!(it.machine().active().len(), 1);
    }

    #[test]
    fn cross_kind_weight_is_an_error() {
        let mut it = Interpreter::standard(0);
        it.run_source(TWO).unwrap();
        let err = it.run_source("#weight x1 Self:Self:out = 1;").unwrap_err();
        assert!(matches!(kind_of(err), EvalErrorKind::CrossKindWeight(_)));
        assert_eq!(it.machine().matrix().nnz(), 1);
    }

    #[test]
    fn identifier_errors() {
        let mut it = Interpreter::standard(0);
        it.run_source(TWO).unwrap();
        assert!(matches!(kind_of(it.run_source("#weight x1 nope = 1;").unwrap_err()), EvalErrorKind::UnknownIdentifier(_)));
        assert!(matches!(
            kind_of(it.run_source("#neuron relu:n1 out:q = #transformof;").unwrap_err()),
            EvalErrorKind::DuplicateIdentifier(_)
        ));
        assert!(matches!(
            kind_of(it.run_source("#neuron relu:q out:w, out:w = #transformof;").unwrap_err()),
            EvalErrorKind::DuplicateIdentifier(_)
        ));
        assert!(matches!(kind_of(it.run_source("#weight y1 x1 = 1;").unwrap_err()), EvalErrorKind::WrongDirection { .. }));
        assert!(matches!(
            kind_of(it.run_source("#newcelltype mystery #input scalar:a #output scalar:b;").unwrap_err()),
            EvalErrorKind::UnboundTransform(_)
        ));
        assert!(matches!(
            kind_of(it.run_source("#stream matrix:m = #neuroninput n1.in;").unwrap_err()),
            EvalErrorKind::KindMismatch { .. }
        ));
    }

    #[test]
    fn error_positions() {
        let mut it = Interpreter::standard(0);
        let err = it.run_source("#step 1;\n  #weight a b = 1;").unwrap_err();
        assert_eq!(err.pos(), Pos { line: 2, col: 3 });
    }

    #[test]
    fn autogen_names() {
        let mut env = Env::new();
        assert_eq!(env.autogen_cellname().as_str(), "g0");
        env.note_cell_name(&name("g2"));
        assert_eq!(env.autogen_cellname().as_str(), "g1");
        assert_eq!(env.autogen_cellname().as_str(), "g3");
        let names: BTreeSet<Name> = (0..1000).map(|_| env.autogen_cellname()).collect();
        assert_eq!(names.len(), 1000);
    }

    #[test]
    fn autogen_skips_user_cell_names() {
        let mut it = Interpreter::standard(0);
        it.run_source("#neuron relu:g0; #weight relu:g1:in relu:g1:out = 1;").unwrap();
        it.run_source("#neuron relu:n out:o = #transformof;").unwrap();
        assert_eq!(it.env().get(&name("n")), Some(&Binding::Neuron(CellId::new(name("relu"), name("g2")))));
    }

    #[test]
    fn step_records_and_show() {
        let mut it = Interpreter::standard(0);
        it.run_source(TWO).unwrap();
        it.run_source("#neuron one:b out:one = #transformof; #weight x1 one = 2;").unwrap();
        let out = it.run_source("#step 3; #show tick; #show x1; #show matrix;").unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.records[2].t, 3);
        assert_eq!(out.lines[0], "tick 3");
        assert_eq!(out.lines[1], "sigmoid:g0:in 2.0");
        assert_eq!(out.lines.len(), 4);
    }
}
