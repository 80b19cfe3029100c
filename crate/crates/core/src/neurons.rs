//! Neuron types, the transform contract, and the built-in transforms.
//!
//! A transform is a causal step function: the outputs it emits at tick `t`
//! are computed from the inputs of tick `t - 1` and its own state. Built-in
//! transforms keep no state; host transforms may accumulate history in
//! [`NeuronState`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::matrix::{update_kernel, NetMatrix, RowSource, UpdateSpec};
use crate::names::{name, Name};
use crate::rng::RngHandle;
use crate::signature::{
    KindShape, Signature, SignatureError, StreamKindDecl, COLUMN_MASK, MATRIX, ROW_MASK, SCALAR, SELF,
};
use crate::streams::{check_kind, scale_value, zero_value, StreamValue};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuronError {
    #[error("neuron type `{0}` already registered")]
    DuplicateType(Name),
    #[error("transform `{0}` already bound")]
    DuplicateTransform(Name),
    #[error("no transform bound as `{0}`")]
    UnboundTransform(Name),
    #[error("unknown stream kind `{0}`")]
    UnknownKind(Name),
    #[error("type `{type_name}`: transform takes {expected}, declaration has {found}")]
    ArityMismatch { type_name: Name, expected: Arity, found: Arity },
    #[error("type `{type_name}`: {message}")]
    Incompatible { type_name: Name, message: String },
    #[error(transparent)]
    Signature(SignatureError),
}

impl From<SignatureError> for NeuronError {
    fn from(e: SignatureError) -> Self {
        match e {
            SignatureError::UnknownKind(k) => NeuronError::UnknownKind(k),
            SignatureError::DuplicateType(t) => NeuronError::DuplicateType(t),
            other => NeuronError::Signature(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct TransformError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arity {
    pub inputs: usize,
    pub outputs: usize,
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} inputs / {} outputs", self.inputs, self.outputs)
    }
}

/// Interface of a neuron type: named, kinded input and output fields plus
/// the id of the transform that implements it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronTypeDecl {
    pub type_name: Name,
    pub inputs: Vec<(Name, Name)>,
    pub outputs: Vec<(Name, Name)>,
    pub transform_id: Name,
}

impl NeuronTypeDecl {
    pub fn new(type_name: Name, inputs: Vec<(Name, Name)>, outputs: Vec<(Name, Name)>, transform_id: Name) -> Self {
        NeuronTypeDecl { type_name, inputs, outputs, transform_id }
    }

    pub fn arity(&self) -> Arity {
        Arity { inputs: self.inputs.len(), outputs: self.outputs.len() }
    }
}

/// Per-neuron transform state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeuronState(pub Vec<StreamValue>);

pub struct StepContext<'a> {
    pub sig: &'a Signature,
    pub decl: &'a NeuronTypeDecl,
}

impl StepContext<'_> {
    pub fn input_kind(&self, i: usize) -> Result<&StreamKindDecl, TransformError> {
        let (_, k) = self.decl.inputs.get(i).ok_or_else(|| TransformError(format!("no input #{i}")))?;
        self.sig.kind(k).map_err(|e| TransformError(e.to_string()))
    }

    pub fn output_kind(&self, i: usize) -> Result<&StreamKindDecl, TransformError> {
        let (_, k) = self.decl.outputs.get(i).ok_or_else(|| TransformError(format!("no output #{i}")))?;
        self.sig.kind(k).map_err(|e| TransformError(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub outputs: Vec<StreamValue>,
    /// Non-fatal problems, e.g. a malformed mask that was ignored this tick.
    pub diagnostics: Vec<String>,
}

impl StepOutput {
    pub fn values(outputs: Vec<StreamValue>) -> Self {
        StepOutput { outputs, diagnostics: Vec::new() }
    }
}

pub trait Transform: fmt::Debug + Send + Sync {
    fn arity(&self) -> Arity;

    /// Checks a declaration against what the transform can handle.
    fn check(&self, sig: &Signature, decl: &NeuronTypeDecl) -> Result<(), NeuronError> {
        let _ = sig;
        if decl.arity() != self.arity() {
            return Err(NeuronError::ArityMismatch {
                type_name: decl.type_name.clone(),
                expected: self.arity(),
                found: decl.arity(),
            });
        }
        Ok(())
    }

    fn initial_state(&self) -> NeuronState {
        NeuronState::default()
    }

    /// Outputs for tick `t` from the inputs of tick `t - 1`.
    fn step(
        &self,
        cx: &StepContext<'_>,
        state: &mut NeuronState,
        inputs: &[StreamValue],
        rng: &mut RngHandle,
    ) -> Result<StepOutput, TransformError>;
}

fn incompatible(decl: &NeuronTypeDecl, message: impl Into<String>) -> NeuronError {
    NeuronError::Incompatible { type_name: decl.type_name.clone(), message: message.into() }
}

fn shape_of<'a>(sig: &'a Signature, kind: &Name) -> Result<&'a KindShape, NeuronError> {
    Ok(&sig.kind(kind)?.shape)
}

/// Output at `t` equals input at `t - 1`; works for any kind.
#[derive(Debug, Clone, Copy)]
pub struct Identity;

impl Transform for Identity {
    fn arity(&self) -> Arity {
        Arity { inputs: 1, outputs: 1 }
    }

    fn check(&self, sig: &Signature, decl: &NeuronTypeDecl) -> Result<(), NeuronError> {
        if decl.arity() != self.arity() {
            return Err(NeuronError::ArityMismatch { type_name: decl.type_name.clone(), expected: self.arity(), found: decl.arity() });
        }
        shape_of(sig, &decl.inputs[0].1)?;
        if decl.inputs[0].1 != decl.outputs[0].1 {
            return Err(incompatible(decl, "identity needs equal input and output kinds"));
        }
        Ok(())
    }

    fn step(
        &self,
        _cx: &StepContext<'_>,
        _state: &mut NeuronState,
        inputs: &[StreamValue],
        _rng: &mut RngHandle,
    ) -> Result<StepOutput, TransformError> {
        Ok(StepOutput::values(vec![inputs[0].clone()]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    pub const ALL: [Activation; 4] = [Activation::Sigmoid, Activation::Tanh, Activation::Relu, Activation::Linear];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    pub fn type_name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

/// Scalar activation applied to the previous tick's input.
#[derive(Debug, Clone, Copy)]
pub struct ScalarFn(pub Activation);

impl Transform for ScalarFn {
    fn arity(&self) -> Arity {
        Arity { inputs: 1, outputs: 1 }
    }

    fn check(&self, sig: &Signature, decl: &NeuronTypeDecl) -> Result<(), NeuronError> {
        if decl.arity() != self.arity() {
            return Err(NeuronError::ArityMismatch { type_name: decl.type_name.clone(), expected: self.arity(), found: decl.arity() });
        }
        for (_, k) in decl.inputs.iter().chain(&decl.outputs) {
            if *shape_of(sig, k)? != KindShape::Scalar {
                return Err(incompatible(decl, format!("{} works on scalar streams", self.0.type_name())));
            }
        }
        Ok(())
    }

    fn step(
        &self,
        _cx: &StepContext<'_>,
        _state: &mut NeuronState,
        inputs: &[StreamValue],
        _rng: &mut RngHandle,
    ) -> Result<StepOutput, TransformError> {
        let x = inputs[0].as_scalar().ok_or_else(|| TransformError("expected a scalar input".into()))?;
        Ok(StepOutput::values(vec![StreamValue::Scalar(self.0.apply(x))]))
    }
}

/// Value input scaled by a scalar mask input.
#[derive(Debug, Clone, Copy)]
pub struct Gated;

impl Transform for Gated {
    fn arity(&self) -> Arity {
        Arity { inputs: 2, outputs: 1 }
    }

    fn check(&self, sig: &Signature, decl: &NeuronTypeDecl) -> Result<(), NeuronError> {
        if decl.arity() != self.arity() {
            return Err(NeuronError::ArityMismatch { type_name: decl.type_name.clone(), expected: self.arity(), found: decl.arity() });
        }
        shape_of(sig, &decl.inputs[0].1)?;
        if decl.inputs[0].1 != decl.outputs[0].1 {
            return Err(incompatible(decl, "gated value and output kinds differ"));
        }
        if *shape_of(sig, &decl.inputs[1].1)? != KindShape::Scalar {
            return Err(incompatible(decl, "gate mask must be scalar"));
        }
        Ok(())
    }

    fn step(
        &self,
        cx: &StepContext<'_>,
        _state: &mut NeuronState,
        inputs: &[StreamValue],
        rng: &mut RngHandle,
    ) -> Result<StepOutput, TransformError> {
        let kind = cx.output_kind(0)?;
        let mask = inputs[1].as_scalar().ok_or_else(|| TransformError("expected a scalar mask".into()))?;
        let out = if mask == 0.0 {
            zero_value(kind)
        } else if mask == 1.0 {
            inputs[0].clone()
        } else {
            scale_value(kind, mask, &inputs[0], rng).map_err(|e| TransformError(e.to_string()))?
        };
        Ok(StepOutput::values(vec![out]))
    }
}

/// Zero-input source emitting a fixed value every tick.
#[derive(Debug, Clone)]
pub struct Const(pub StreamValue);

impl Transform for Const {
    fn arity(&self) -> Arity {
        Arity { inputs: 0, outputs: 1 }
    }

    fn check(&self, sig: &Signature, decl: &NeuronTypeDecl) -> Result<(), NeuronError> {
        if decl.arity() != self.arity() {
            return Err(NeuronError::ArityMismatch { type_name: decl.type_name.clone(), expected: self.arity(), found: decl.arity() });
        }
        let kind = sig.kind(&decl.outputs[0].1)?;
        check_kind(kind, &self.0).map_err(|e| incompatible(decl, e.to_string()))
    }

    fn step(
        &self,
        _cx: &StepContext<'_>,
        _state: &mut NeuronState,
        _inputs: &[StreamValue],
        _rng: &mut RngHandle,
    ) -> Result<StepOutput, TransformError> {
        Ok(StepOutput::values(vec![self.0.clone()]))
    }
}

/// Higher-order neuron: inputs `(m, gamma, beta, alpha, gate)`, output the
/// update delta `gate * gamma * alpha * (beta . m)` as a matrix stream.
///
/// A malformed mask yields an empty delta and a diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct UpdateWeights;

impl Transform for UpdateWeights {
    fn arity(&self) -> Arity {
        Arity { inputs: 5, outputs: 1 }
    }

    fn check(&self, sig: &Signature, decl: &NeuronTypeDecl) -> Result<(), NeuronError> {
        if decl.arity() != self.arity() {
            return Err(NeuronError::ArityMismatch { type_name: decl.type_name.clone(), expected: self.arity(), found: decl.arity() });
        }
        let want = [KindShape::NetMatrix, KindShape::RowMask, KindShape::RowMask, KindShape::ColumnMask, KindShape::Scalar];
        for ((field, k), shape) in decl.inputs.iter().zip(want.iter()) {
            if shape_of(sig, k)? != shape {
                return Err(incompatible(decl, format!("input `{field}` must carry {shape}")));
            }
        }
        if *shape_of(sig, &decl.outputs[0].1)? != KindShape::NetMatrix {
            return Err(incompatible(decl, "output must carry matrix"));
        }
        Ok(())
    }

    fn step(
        &self,
        _cx: &StepContext<'_>,
        _state: &mut NeuronState,
        inputs: &[StreamValue],
        _rng: &mut RngHandle,
    ) -> Result<StepOutput, TransformError> {
        let bad = || TransformError("updateweights received values of the wrong kind".into());
        let m = inputs[0].as_matrix().ok_or_else(bad)?;
        let gate = inputs[4].as_scalar().ok_or_else(bad)?;
        if gate == 0.0 {
            return Ok(StepOutput::values(vec![StreamValue::Matrix(NetMatrix::new())]));
        }
        let (StreamValue::RowMask(gamma), StreamValue::RowMask(beta), StreamValue::ColumnMask(alpha)) =
            (&inputs[1], &inputs[2], &inputs[3])
        else {
            return Err(bad());
        };
        match UpdateSpec::new(gamma.clone(), alpha.clone(), RowSource::Rows(beta.clone()), gate) {
            Ok(spec) => Ok(StepOutput::values(vec![StreamValue::Matrix(update_kernel(m, &spec))])),
            Err(e) => Ok(StepOutput {
                outputs: vec![StreamValue::Matrix(NetMatrix::new())],
                diagnostics: vec![e.to_string()],
            }),
        }
    }
}

/// Transform ids bound in every standard registry.
pub mod ids {
    pub const IDENTITY: &str = "identity";
    pub const GATED: &str = "gated";
    pub const ONE: &str = "one";
    pub const UPDATE_WEIGHTS: &str = "updateweights";
}

/// Transforms by id. Type declarations live in the [`Signature`].
#[derive(Debug, Clone, Default)]
pub struct Registry {
    transforms: BTreeMap<Name, Arc<dyn Transform>>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    /// The standard signature and registry: kinds `scalar`, `matrix`,
    /// `rowmask`, `columnmask`; types `Self`, `id_<kind>`, `gated_<kind>`,
    /// `sigmoid`, `tanh`, `relu`, `linear`, `one` and `updateweights`.
    pub fn standard() -> (Signature, Registry) {
        let mut sig = Signature::builtin_kinds();
        let mut reg = Registry::empty();
        let s = |x: &str| name(x);
        reg.bind(s(ids::IDENTITY), Arc::new(Identity)).unwrap();
        reg.bind(s(ids::GATED), Arc::new(Gated)).unwrap();
        reg.bind(s(ids::ONE), Arc::new(Const(StreamValue::Scalar(1.0)))).unwrap();
        reg.bind(s(ids::UPDATE_WEIGHTS), Arc::new(UpdateWeights)).unwrap();
        for act in Activation::ALL {
            reg.bind(s(act.type_name()), Arc::new(ScalarFn(act))).unwrap();
        }

        let self_decl = NeuronTypeDecl::new(
            s(SELF),
            vec![(s("in"), s(MATRIX))],
            vec![(s("out"), s(MATRIX))],
            s(ids::IDENTITY),
        );
        reg.declare_type(&mut sig, self_decl).unwrap();
        for kind in [SCALAR, MATRIX, ROW_MASK, COLUMN_MASK] {
            for decl in kind_types(&s(kind)) {
                reg.declare_type(&mut sig, decl).unwrap();
            }
        }
        for act in Activation::ALL {
            let decl = NeuronTypeDecl::new(
                s(act.type_name()),
                vec![(s("in"), s(SCALAR))],
                vec![(s("out"), s(SCALAR))],
                s(act.type_name()),
            );
            reg.declare_type(&mut sig, decl).unwrap();
        }
        reg.declare_type(&mut sig, NeuronTypeDecl::new(s("one"), vec![], vec![(s("out"), s(SCALAR))], s(ids::ONE)))
            .unwrap();
        let uw = NeuronTypeDecl::new(
            s("updateweights"),
            vec![
                (s("m"), s(MATRIX)),
                (s("gamma"), s(ROW_MASK)),
                (s("beta"), s(ROW_MASK)),
                (s("alpha"), s(COLUMN_MASK)),
                (s("gate"), s(SCALAR)),
            ],
            vec![(s("out"), s(MATRIX))],
            s(ids::UPDATE_WEIGHTS),
        );
        reg.declare_type(&mut sig, uw).unwrap();
        (sig, reg)
    }

    pub fn bind(&mut self, id: Name, t: Arc<dyn Transform>) -> Result<(), NeuronError> {
        if self.transforms.contains_key(&id) {
            return Err(NeuronError::DuplicateTransform(id));
        }
        self.transforms.insert(id, t);
        Ok(())
    }

    pub fn transform(&self, id: &Name) -> Option<&Arc<dyn Transform>> {
        self.transforms.get(id)
    }

    pub fn is_bound(&self, id: &Name) -> bool {
        self.transforms.contains_key(id)
    }

    /// Declares a type whose transform is already bound.
    pub fn declare_type(&self, sig: &mut Signature, decl: NeuronTypeDecl) -> Result<(), NeuronError> {
        if sig.neuron_type(&decl.type_name).is_ok() {
            return Err(NeuronError::DuplicateType(decl.type_name));
        }
        let t = self
            .transforms
            .get(&decl.transform_id)
            .ok_or_else(|| NeuronError::UnboundTransform(decl.transform_id.clone()))?;
        sig.check_type(&decl)?;
        t.check(sig, &decl)?;
        sig.declare_type(decl)?;
        Ok(())
    }

    /// Binds `t` under the declaration's transform id and declares the type.
    pub fn register_type(
        &mut self,
        sig: &mut Signature,
        decl: NeuronTypeDecl,
        t: Arc<dyn Transform>,
    ) -> Result<(), NeuronError> {
        if sig.neuron_type(&decl.type_name).is_ok() {
            return Err(NeuronError::DuplicateType(decl.type_name));
        }
        sig.check_type(&decl)?;
        t.check(sig, &decl)?;
        self.bind(decl.transform_id.clone(), t)?;
        self.declare_type(sig, decl)
    }

    /// Checks that every declared type has a bound transform.
    pub fn check_bound(&self, sig: &Signature) -> Result<(), NeuronError> {
        for decl in sig.neuron_types() {
            if !self.is_bound(&decl.transform_id) {
                return Err(NeuronError::UnboundTransform(decl.transform_id.clone()));
            }
        }
        Ok(())
    }
}

/// The identity (`id_<kind>`) and gated (`gated_<kind>`) types that come
/// with every declared kind.
pub fn kind_types(kind: &Name) -> Vec<NeuronTypeDecl> {
    let id = NeuronTypeDecl::new(
        name(&format!("id_{kind}")),
        vec![(name("in"), kind.clone())],
        vec![(name("out"), kind.clone())],
        name(ids::IDENTITY),
    );
    let gated = NeuronTypeDecl::new(
        name(&format!("gated_{kind}")),
        vec![(name("value"), kind.clone()), (name("mask"), name(SCALAR))],
        vec![(name("out"), kind.clone())],
        name(ids::GATED),
    );
    vec![id, gated]
}

/// Runs a transform over an input log the way the engine does: outputs at
/// tick 0 are zero, and outputs at tick `t` come from inputs at `t - 1`.
/// Returns `inputs.len() + 1` output rows.
pub fn run_on_log(
    t: &dyn Transform,
    sig: &Signature,
    decl: &NeuronTypeDecl,
    inputs: &[Vec<StreamValue>],
    rng: &mut RngHandle,
) -> Result<Vec<Vec<StreamValue>>, TransformError> {
    let cx = StepContext { sig, decl };
    let zeros = (0..decl.outputs.len())
        .map(|i| cx.output_kind(i).map(zero_value))
        .collect::<Result<Vec<_>, _>>()?;
    let mut state = t.initial_state();
    let mut out = vec![zeros];
    for row in inputs {
        out.push(t.step(&cx, &mut state, row, rng)?.outputs);
    }
    Ok(out)
}
