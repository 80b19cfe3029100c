//! Per-kind stream values and their linear combinations.
//!
//! Exact kinds (scalars, vectors, masks, matrices) combine by weighted sums.
//! Signed-sample streams represent a signed measure by one sample per tick;
//! their combination is stochastic: term `i` is chosen with probability
//! `|a_i| / sum_j |a_j|` and its sign flag is toggled when `a_i < 0`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::matrix::NetMatrix;
use crate::names::{Direction, Name, PortName};
use crate::rng::RngHandle;
use crate::signature::{KindShape, Signature, SignatureError, StreamKindDecl};

/// Tails within this distance of 0 or 1 snap to the exact value.
const TAIL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StreamError {
    #[error("kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },
    #[error("all-ones tails combine to coefficient {0}, which is neither 0 nor 1")]
    MaskTailConflict(f64),
    #[error("mask mixes ports of kinds `{0}` and `{1}`")]
    MixedMaskKinds(Name, Name),
    #[error("port {port} has direction {found}, mask runs over {expected} ports")]
    WrongDirection { port: PortName, expected: Direction, found: Direction },
    #[error(transparent)]
    Signature(#[from] SignatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn toggled(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Real(f64),
    Token(Name),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedSample {
    pub payload: Payload,
    pub sign: Sign,
}

impl SignedSample {
    pub fn new(payload: Payload, sign: Sign) -> Self {
        SignedSample { payload, sign }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskTail {
    Zero,
    /// 1 at every port of the named kind (on the mask's axis).
    AllOnes(Name),
}

/// A mask over input ports (`axis = Input`, a row selector) or output ports
/// (`axis = Output`, a column selector).
///
/// The value at port `p` is `support[p] + tail(p)`. All ports touched by the
/// support and the tail belong to a single stream kind.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVector {
    axis: Direction,
    port_kind: Option<Name>,
    support: BTreeMap<PortName, f64>,
    tail: MaskTail,
}

impl MaskVector {
    pub fn empty(axis: Direction) -> Self {
        MaskVector { axis, port_kind: None, support: BTreeMap::new(), tail: MaskTail::Zero }
    }

    /// The trivial mask: 1 at every port of `kind` on `axis`.
    pub fn all_ones(axis: Direction, kind: Name) -> Self {
        MaskVector {
            axis,
            port_kind: Some(kind.clone()),
            support: BTreeMap::new(),
            tail: MaskTail::AllOnes(kind),
        }
    }

    /// Builds a mask from entries, summing repeated ports and dropping zeros.
    pub fn from_entries<I>(
        sig: &Signature,
        axis: Direction,
        entries: I,
        tail: MaskTail,
    ) -> Result<Self, StreamError>
    where
        I: IntoIterator<Item = (PortName, f64)>,
    {
        let mut port_kind = match &tail {
            MaskTail::Zero => None,
            MaskTail::AllOnes(k) => {
                sig.kind(k)?;
                Some(k.clone())
            }
        };
        let mut support = BTreeMap::new();
        for (port, coef) in entries {
            if port.direction != axis {
                let found = port.direction;
                return Err(StreamError::WrongDirection { port, expected: axis, found });
            }
            let kind = sig.port_kind_name(&port)?;
            match &port_kind {
                Some(k) if k != kind => return Err(StreamError::MixedMaskKinds(k.clone(), kind.clone())),
                Some(_) => {}
                None => port_kind = Some(kind.clone()),
            }
            *support.entry(port).or_insert(0.0) += coef;
        }
        support.retain(|_, v| *v != 0.0);
        let mut mask = MaskVector { axis, port_kind, support, tail };
        mask.normalize();
        Ok(mask)
    }

    pub(crate) fn from_parts(
        axis: Direction,
        port_kind: Option<Name>,
        support: BTreeMap<PortName, f64>,
        tail: MaskTail,
    ) -> Self {
        let mut mask = MaskVector { axis, port_kind, support, tail };
        mask.normalize();
        mask
    }

    fn normalize(&mut self) {
        self.support.retain(|_, v| *v != 0.0);
        if self.support.is_empty() && self.tail == MaskTail::Zero {
            self.port_kind = None;
        }
    }

    pub fn axis(&self) -> Direction {
        self.axis
    }

    /// The single kind of ports this mask touches; `None` for the zero mask.
    pub fn port_kind(&self) -> Option<&Name> {
        self.port_kind.as_ref()
    }

    pub fn support(&self) -> &BTreeMap<PortName, f64> {
        &self.support
    }

    pub fn tail(&self) -> &MaskTail {
        &self.tail
    }

    pub fn is_finite(&self) -> bool {
        self.tail == MaskTail::Zero
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty() && self.tail == MaskTail::Zero
    }

    /// Coefficient at `port`, given the name of the port's kind.
    pub fn coefficient(&self, port: &PortName, port_kind: &Name) -> f64 {
        let base = self.support.get(port).copied().unwrap_or(0.0);
        match &self.tail {
            MaskTail::AllOnes(k) if k == port_kind && port.direction == self.axis => base + 1.0,
            _ => base,
        }
    }
}

/// The value one stream carries at one tick.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamValue {
    Scalar(f64),
    Vector(Vec<f64>),
    RowMask(MaskVector),
    ColumnMask(MaskVector),
    Matrix(NetMatrix),
    /// `None` is the zero measure: no sample this tick.
    Sample(Option<SignedSample>),
}

impl StreamValue {
    pub fn tag(&self) -> &'static str {
        match self {
            StreamValue::Scalar(_) => "scalar",
            StreamValue::Vector(_) => "vector",
            StreamValue::RowMask(_) => "rowmask",
            StreamValue::ColumnMask(_) => "columnmask",
            StreamValue::Matrix(_) => "matrix",
            StreamValue::Sample(_) => "sample",
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            StreamValue::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&NetMatrix> {
        match self {
            StreamValue::Matrix(m) => Some(m),
            _ => None,
        }
    }

    /// Whether the value's tag (and vector length) fits the shape.
    pub fn fits(&self, shape: &KindShape) -> bool {
        match (self, shape) {
            (StreamValue::Scalar(_), KindShape::Scalar) => true,
            (StreamValue::Vector(xs), KindShape::Vector(n)) => xs.len() == *n,
            (StreamValue::RowMask(m), KindShape::RowMask) => m.axis() == Direction::Input,
            (StreamValue::ColumnMask(m), KindShape::ColumnMask) => m.axis() == Direction::Output,
            (StreamValue::Matrix(_), KindShape::NetMatrix) => true,
            (StreamValue::Sample(_), KindShape::SignedSample { .. }) => true,
            _ => false,
        }
    }

    fn describe(&self) -> String {
        match self {
            StreamValue::Vector(xs) => format!("vector:{}", xs.len()),
            other => other.tag().to_string(),
        }
    }
}

pub fn check_kind(kind: &StreamKindDecl, v: &StreamValue) -> Result<(), StreamError> {
    if v.fits(&kind.shape) {
        Ok(())
    } else {
        Err(StreamError::KindMismatch { expected: format!("{} ({})", kind.name, kind.shape), found: v.describe() })
    }
}

/// The additive identity of a kind.
pub fn zero_value(kind: &StreamKindDecl) -> StreamValue {
    match &kind.shape {
        KindShape::Scalar => StreamValue::Scalar(0.0),
        KindShape::Vector(n) => StreamValue::Vector(vec![0.0; *n]),
        KindShape::RowMask => StreamValue::RowMask(MaskVector::empty(Direction::Input)),
        KindShape::ColumnMask => StreamValue::ColumnMask(MaskVector::empty(Direction::Output)),
        KindShape::NetMatrix => StreamValue::Matrix(NetMatrix::new()),
        KindShape::SignedSample { .. } => StreamValue::Sample(None),
    }
}

/// Weighted sum of stream values of one kind.
pub fn linear_combine(
    kind: &StreamKindDecl,
    terms: &[(f64, &StreamValue)],
    rng: &mut RngHandle,
) -> Result<StreamValue, StreamError> {
    for (_, v) in terms {
        check_kind(kind, v)?;
    }
    Ok(match &kind.shape {
        KindShape::Scalar => {
            let mut acc = 0.0;
            for (c, v) in terms {
                if let StreamValue::Scalar(x) = v {
                    acc += c * x;
                }
            }
            StreamValue::Scalar(acc)
        }
        KindShape::Vector(n) => {
            let mut acc = vec![0.0; *n];
            for (c, v) in terms {
                if let StreamValue::Vector(xs) = v {
                    for (a, x) in acc.iter_mut().zip(xs) {
                        *a += c * x;
                    }
                }
            }
            StreamValue::Vector(acc)
        }
        KindShape::RowMask => {
            let masks: Vec<(f64, &MaskVector)> = terms
                .iter()
                .filter_map(|(c, v)| match v {
                    StreamValue::RowMask(m) => Some((*c, m)),
                    _ => None,
                })
                .collect();
            StreamValue::RowMask(combine_masks(Direction::Input, &masks)?)
        }
        KindShape::ColumnMask => {
            let masks: Vec<(f64, &MaskVector)> = terms
                .iter()
                .filter_map(|(c, v)| match v {
                    StreamValue::ColumnMask(m) => Some((*c, m)),
                    _ => None,
                })
                .collect();
            StreamValue::ColumnMask(combine_masks(Direction::Output, &masks)?)
        }
        KindShape::NetMatrix => {
            let mut acc = NetMatrix::new();
            for (c, v) in terms {
                if let StreamValue::Matrix(m) = v {
                    acc.add_scaled_in_place(m, *c);
                }
            }
            StreamValue::Matrix(acc)
        }
        KindShape::SignedSample { .. } => StreamValue::Sample(stochastic_sum(terms, rng)),
    })
}

/// `linear_combine` with a single term.
pub fn scale_value(
    kind: &StreamKindDecl,
    c: f64,
    v: &StreamValue,
    rng: &mut RngHandle,
) -> Result<StreamValue, StreamError> {
    linear_combine(kind, &[(c, v)], rng)
}

fn combine_masks(axis: Direction, masks: &[(f64, &MaskVector)]) -> Result<MaskVector, StreamError> {
    let mut port_kind: Option<Name> = None;
    let mut tail_kind: Option<Name> = None;
    let mut tail_coef = 0.0;
    let mut support: BTreeMap<PortName, f64> = BTreeMap::new();
    for (c, m) in masks {
        if *c == 0.0 || m.is_zero() {
            continue;
        }
        if let Some(k) = m.port_kind() {
            match &port_kind {
                Some(existing) if existing != k => {
                    return Err(StreamError::MixedMaskKinds(existing.clone(), k.clone()));
                }
                Some(_) => {}
                None => port_kind = Some(k.clone()),
            }
        }
        if let MaskTail::AllOnes(k) = m.tail() {
            tail_kind = Some(k.clone());
            tail_coef += c;
        }
        for (p, w) in m.support() {
            *support.entry(p.clone()).or_insert(0.0) += c * w;
        }
    }
    let tail = match tail_kind {
        None => MaskTail::Zero,
        Some(k) => {
            if tail_coef.abs() <= TAIL_EPS {
                MaskTail::Zero
            } else if (tail_coef - 1.0).abs() <= TAIL_EPS {
                MaskTail::AllOnes(k)
            } else {
                return Err(StreamError::MaskTailConflict(tail_coef));
            }
        }
    };
    Ok(MaskVector::from_parts(axis, port_kind, support, tail))
}

fn stochastic_sum(terms: &[(f64, &StreamValue)], rng: &mut RngHandle) -> Option<SignedSample> {
    let effective: Vec<(f64, &SignedSample)> = terms
        .iter()
        .filter_map(|(c, v)| match v {
            StreamValue::Sample(Some(s)) if *c != 0.0 => Some((*c, s)),
            _ => None,
        })
        .collect();
    if effective.is_empty() {
        return None;
    }
    let total: f64 = effective.iter().map(|(c, _)| c.abs()).sum();
    let target = rng.uniform() * total;
    let mut cumulative = 0.0;
    let mut chosen = effective[effective.len() - 1];
    for &(c, s) in &effective {
        cumulative += c.abs();
        if target < cumulative {
            chosen = (c, s);
            break;
        }
    }
    let (c, s) = chosen;
    let sign = if c < 0.0 { s.sign.toggled() } else { s.sign };
    Some(SignedSample::new(s.payload.clone(), sign))
}
