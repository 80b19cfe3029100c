use crate::lang::lexer::Pos;
use crate::names::Name;
use crate::signature::KindShape;

/// A node with its source position. Equality ignores the position so that
/// re-parsed programs compare equal to the originals.
#[derive(Debug, Clone)]
pub struct Spanned<T> {
    pub node: T,
    pub pos: Pos,
}

impl<T> Spanned<T> {
    pub fn new(node: T, pos: Pos) -> Self {
        Spanned { node, pos }
    }
}

impl<T: PartialEq> PartialEq for Spanned<T> {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}

pub type Statement = Spanned<Stmt>;
pub type PortRef = Spanned<RefKind>;

#[derive(Debug, Clone, PartialEq)]
pub enum RefKind {
    /// `type:cell:field`
    Triple(Name, Name, Name),
    /// `IdNeuron.field`
    Field(Name, Name),
    /// An identifier bound to a port.
    Ident(Name),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KindSpec {
    pub name: Name,
    /// `None` acknowledges an already-declared kind.
    pub shape: Option<KindShape>,
}

/// `coef * port`; a bare port has coefficient 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTerm {
    pub coef: f64,
    pub target: PortRef,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateRhs {
    /// Either a sum of scaled outputs (added directly to the target rows)
    /// or a sum of scaled inputs (a combination of existing rows).
    Sum(Vec<MaskTerm>),
    /// `(column mask) * (row mask)`.
    Product { columns: Vec<MaskTerm>, rows: Vec<MaskTerm> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShowTarget {
    Matrix,
    Active,
    Tick,
    Port(PortRef),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    KindDecl(Vec<KindSpec>),
    /// Field lists are `(kind, field)` pairs.
    NewCellType { type_name: Name, inputs: Vec<(Name, Name)>, outputs: Vec<(Name, Name)> },
    NeuronName { type_name: Name, cell_name: Name },
    /// Binding lists are `(field, identifier)` pairs.
    NeuronDecl { type_name: Name, neuron_id: Name, outputs: Vec<(Name, Name)>, inputs: Vec<(Name, Name)> },
    StreamDecl { kind_name: Name, stream_id: Name, neuron_id: Name, field_name: Name },
    Weight { dst: PortRef, src: PortRef, value: f64 },
    UpdateWeights { lhs: Vec<MaskTerm>, rhs: UpdateRhs },
    Step(u64),
    Show(ShowTarget),
    Seed(u64),
    Gc,
}

impl Stmt {
    /// Statements that only introduce names and never touch the machine.
    pub fn is_declaration(&self) -> bool {
        matches!(
            self,
            Stmt::KindDecl(_)
                | Stmt::NewCellType { .. }
                | Stmt::NeuronName { .. }
                | Stmt::NeuronDecl { .. }
                | Stmt::StreamDecl { .. }
        )
    }
}
