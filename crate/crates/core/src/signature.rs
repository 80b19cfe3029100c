//! Stream kinds and the machine signature (kinds plus neuron types).

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::names::{name, Direction, Name, PortName};
use crate::neurons::NeuronTypeDecl;

pub const SCALAR: &str = "scalar";
pub const MATRIX: &str = "matrix";
pub const ROW_MASK: &str = "rowmask";
pub const COLUMN_MASK: &str = "columnmask";
pub const SELF: &str = "Self";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("unknown neuron type `{0}`")]
    UnknownType(Name),
    #[error("type `{type_name}` has no {direction} field `{field}`")]
    UnknownField { type_name: Name, field: Name, direction: Direction },
    #[error("unknown stream kind `{0}`")]
    UnknownKind(Name),
    #[error("stream kind `{0}` declared twice")]
    DuplicateKind(Name),
    #[error("neuron type `{0}` declared twice")]
    DuplicateType(Name),
    #[error("field `{field}` appears twice in type `{type_name}`")]
    DuplicateField { type_name: Name, field: Name },
    #[error("type `{0}` declares no outputs")]
    NoOutputs(Name),
    #[error("vector kind `{0}` must have dimension >= 1")]
    ZeroDimension(Name),
    #[error("signature lacks built-in {0}")]
    MissingBuiltin(&'static str),
}

/// The vector space a kind of stream carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KindShape {
    Scalar,
    Vector(usize),
    /// Masks over input ports (row selectors).
    RowMask,
    /// Masks over output ports (column selectors).
    ColumnMask,
    NetMatrix,
    SignedSample { payload_space: Name },
}

impl fmt::Display for KindShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KindShape::Scalar => f.write_str("scalar"),
            KindShape::Vector(n) => write!(f, "vector:{n}"),
            KindShape::RowMask => f.write_str("rowmask"),
            KindShape::ColumnMask => f.write_str("columnmask"),
            KindShape::NetMatrix => f.write_str("matrix"),
            KindShape::SignedSample { payload_space } => write!(f, "sample:{payload_space}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamKindDecl {
    pub name: Name,
    pub shape: KindShape,
}

impl StreamKindDecl {
    pub fn new(name: Name, shape: KindShape) -> Self {
        StreamKindDecl { name, shape }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Signature {
    kinds: BTreeMap<Name, StreamKindDecl>,
    types: BTreeMap<Name, NeuronTypeDecl>,
}

impl Signature {
    pub fn empty() -> Self {
        Signature::default()
    }

    /// The built-in kinds only: scalar, matrix, row masks and column masks.
    /// Neuron types are added by [`crate::neurons::Registry::standard`].
    pub fn builtin_kinds() -> Self {
        let mut sig = Signature::empty();
        for (n, shape) in [
            (SCALAR, KindShape::Scalar),
            (MATRIX, KindShape::NetMatrix),
            (ROW_MASK, KindShape::RowMask),
            (COLUMN_MASK, KindShape::ColumnMask),
        ] {
            sig.declare_kind(StreamKindDecl::new(name(n), shape)).expect("fresh signature");
        }
        sig
    }

    pub fn declare_kind(&mut self, decl: StreamKindDecl) -> Result<(), SignatureError> {
        if let KindShape::Vector(0) = decl.shape {
            return Err(SignatureError::ZeroDimension(decl.name));
        }
        if self.kinds.contains_key(&decl.name) {
            return Err(SignatureError::DuplicateKind(decl.name));
        }
        self.kinds.insert(decl.name.clone(), decl);
        Ok(())
    }

    pub fn declare_type(&mut self, decl: NeuronTypeDecl) -> Result<(), SignatureError> {
        if self.types.contains_key(&decl.type_name) {
            return Err(SignatureError::DuplicateType(decl.type_name));
        }
        self.check_type(&decl)?;
        self.types.insert(decl.type_name.clone(), decl);
        Ok(())
    }

    /// Structural checks on a type declaration against the declared kinds.
    pub fn check_type(&self, decl: &NeuronTypeDecl) -> Result<(), SignatureError> {
        if decl.outputs.is_empty() {
            return Err(SignatureError::NoOutputs(decl.type_name.clone()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (field, kind) in decl.inputs.iter().chain(decl.outputs.iter()) {
            if !seen.insert(field) {
                return Err(SignatureError::DuplicateField {
                    type_name: decl.type_name.clone(),
                    field: field.clone(),
                });
            }
            if !self.kinds.contains_key(kind) {
                return Err(SignatureError::UnknownKind(kind.clone()));
            }
        }
        Ok(())
    }

    pub fn kind(&self, kind_name: &Name) -> Result<&StreamKindDecl, SignatureError> {
        self.kinds.get(kind_name).ok_or_else(|| SignatureError::UnknownKind(kind_name.clone()))
    }

    pub fn kinds(&self) -> impl Iterator<Item = &StreamKindDecl> {
        self.kinds.values()
    }

    pub fn neuron_type(&self, type_name: &Name) -> Result<&NeuronTypeDecl, SignatureError> {
        self.types.get(type_name).ok_or_else(|| SignatureError::UnknownType(type_name.clone()))
    }

    pub fn neuron_types(&self) -> impl Iterator<Item = &NeuronTypeDecl> {
        self.types.values()
    }

    /// Name of the kind carried by a port.
    pub fn port_kind_name(&self, port: &PortName) -> Result<&Name, SignatureError> {
        let decl = self.neuron_type(&port.type_name)?;
        let fields = match port.direction {
            Direction::Input => &decl.inputs,
            Direction::Output => &decl.outputs,
        };
        fields
            .iter()
            .find(|(f, _)| *f == port.field_name)
            .map(|(_, k)| k)
            .ok_or_else(|| SignatureError::UnknownField {
                type_name: port.type_name.clone(),
                field: port.field_name.clone(),
                direction: port.direction,
            })
    }

    pub fn port_kind(&self, port: &PortName) -> Result<&StreamKindDecl, SignatureError> {
        let kind = self.port_kind_name(port)?;
        self.kind(kind)
    }

    /// Checks the invariants a machine relies on: every referenced kind is
    /// declared, and the matrix kind and the `Self` type are present.
    pub fn validate(&self) -> Result<(), SignatureError> {
        match self.kinds.get(&name(MATRIX)) {
            Some(k) if k.shape == KindShape::NetMatrix => {}
            _ => return Err(SignatureError::MissingBuiltin("matrix kind")),
        }
        let self_ok = self.types.get(&name(SELF)).is_some_and(|d| {
            d.inputs.len() == 1
                && d.outputs.len() == 1
                && d.inputs[0].1.as_str() == MATRIX
                && d.outputs[0].1.as_str() == MATRIX
        });
        if !self_ok {
            return Err(SignatureError::MissingBuiltin("Self type"));
        }
        for decl in self.types.values() {
            self.check_type(decl)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neurons::Registry;

    #[test]
    fn port_kind_lookups() {
        let (sig, _) = Registry::standard();
        let self_in = PortName::input(SELF, SELF, "in").unwrap();
        assert_eq!(sig.port_kind(&self_in).unwrap().shape, KindShape::NetMatrix);
        let out = PortName::output("sigmoid", "c", "out").unwrap();
        assert_eq!(sig.port_kind(&out).unwrap().shape, KindShape::Scalar);
        let bogus = PortName::output("nosuch", "c", "out").unwrap();
        assert!(matches!(sig.port_kind(&bogus), Err(SignatureError::UnknownType(_))));
        let wrong_dir = PortName::input("sigmoid", "c", "out").unwrap();
        assert!(matches!(sig.port_kind(&wrong_dir), Err(SignatureError::UnknownField { .. })));
    }

    #[test]
    fn standard_signature_validates() {
        let (sig, _) = Registry::standard();
        sig.validate().unwrap();
        assert!(Signature::builtin_kinds().validate().is_err());
    }

    #[test]
    fn rejects_bad_declarations() {
        let mut sig = Signature::builtin_kinds();
        assert!(matches!(
            sig.declare_kind(StreamKindDecl::new(name("v"), KindShape::Vector(0))),
            Err(SignatureError::ZeroDimension(_))
        ));
        assert!(matches!(
            sig.declare_kind(StreamKindDecl::new(name(SCALAR), KindShape::Scalar)),
            Err(SignatureError::DuplicateKind(_))
        ));
        let no_out = NeuronTypeDecl::new(name("t"), vec![], vec![], name("t"));
        assert!(matches!(sig.declare_type(no_out), Err(SignatureError::NoOutputs(_))));
        let dup = NeuronTypeDecl::new(
            name("t"),
            vec![(name("x"), name(SCALAR))],
            vec![(name("x"), name(SCALAR))],
            name("t"),
        );
        assert!(matches!(sig.declare_type(dup), Err(SignatureError::DuplicateField { .. })));
    }
}
