//! The sparse network matrix and the masked row-update kernel.
//!
//! Rows are input ports, columns are output ports. Storage is row-major and
//! canonical: no stored zeros, and every stored entry connects two ports of
//! the same stream kind.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::names::{Direction, Name, PortName};
use crate::signature::{Signature, SignatureError};
use crate::streams::{MaskTail, MaskVector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("cross-kind weight: {row} carries `{row_kind}` but {col} carries `{col_kind}`")]
    CrossKindWeight { row: PortName, row_kind: Name, col: PortName, col_kind: Name },
    #[error("{port} is not an {expected} port")]
    WrongDirection { port: PortName, expected: Direction },
    #[error("weight {0} is not finite")]
    NonFiniteWeight(f64),
    #[error("malformed mask: {0}")]
    MalformedMask(String),
    #[error(transparent)]
    Signature(#[from] SignatureError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetMatrix {
    rows: BTreeMap<PortName, BTreeMap<PortName, f64>>,
}

impl NetMatrix {
    pub fn new() -> Self {
        NetMatrix::default()
    }

    pub fn get(&self, row: &PortName, col: &PortName) -> f64 {
        self.rows.get(row).and_then(|r| r.get(col)).copied().unwrap_or(0.0)
    }

    /// Sets `a[row, col] = w`, removing the entry when `w == 0`.
    pub fn set_weight(
        &mut self,
        sig: &Signature,
        row: &PortName,
        col: &PortName,
        w: f64,
    ) -> Result<(), MatrixError> {
        if row.direction != Direction::Input {
            return Err(MatrixError::WrongDirection { port: row.clone(), expected: Direction::Input });
        }
        if col.direction != Direction::Output {
            return Err(MatrixError::WrongDirection { port: col.clone(), expected: Direction::Output });
        }
        if !w.is_finite() {
            return Err(MatrixError::NonFiniteWeight(w));
        }
        let row_kind = sig.port_kind_name(row)?;
        let col_kind = sig.port_kind_name(col)?;
        if row_kind != col_kind {
            return Err(MatrixError::CrossKindWeight {
                row: row.clone(),
                row_kind: row_kind.clone(),
                col: col.clone(),
                col_kind: col_kind.clone(),
            });
        }
        self.put(row.clone(), col.clone(), w);
        Ok(())
    }

    fn put(&mut self, row: PortName, col: PortName, w: f64) {
        if w == 0.0 {
            if let Some(r) = self.rows.get_mut(&row) {
                r.remove(&col);
                if r.is_empty() {
                    self.rows.remove(&row);
                }
            }
        } else {
            self.rows.entry(row).or_default().insert(col, w);
        }
    }

    pub fn row(&self, row: &PortName) -> Option<&BTreeMap<PortName, f64>> {
        self.rows.get(row)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&PortName, &BTreeMap<PortName, f64>)> {
        self.rows.iter()
    }

    /// All stored entries in row-major port order.
    pub fn entries(&self) -> impl Iterator<Item = (&PortName, &PortName, f64)> {
        self.rows.iter().flat_map(|(r, cols)| cols.iter().map(move |(c, w)| (r, c, *w)))
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.rows.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `self + s * other`, zeros pruned.
    pub fn add_scaled(&self, other: &NetMatrix, s: f64) -> NetMatrix {
        let mut out = self.clone();
        out.add_scaled_in_place(other, s);
        out
    }

    pub fn add_scaled_in_place(&mut self, other: &NetMatrix, s: f64) {
        if s == 0.0 {
            return;
        }
        for (r, c, w) in other.entries() {
            let v = self.get(r, c) + s * w;
            self.put(r.clone(), c.clone(), v);
        }
    }

    /// Rows and columns with nonzero support.
    pub fn active_ports(&self) -> (BTreeSet<PortName>, BTreeSet<PortName>) {
        let rows = self.rows.keys().cloned().collect();
        let cols = self.rows.values().flat_map(|r| r.keys().cloned()).collect();
        (rows, cols)
    }

    /// One `row\tcol\tweight` line per entry, in port order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (r, c, w) in self.entries() {
            let _ = writeln!(out, "{r}\t{c}\t{w}");
        }
        out
    }

    /// Verifies the canonical-form and kind-block invariants.
    pub fn check_invariants(&self, sig: &Signature) -> Result<(), String> {
        for (r, c, w) in self.entries() {
            if w == 0.0 {
                return Err(format!("stored zero at ({r}, {c})"));
            }
            if r.direction != Direction::Input || c.direction != Direction::Output {
                return Err(format!("misoriented entry ({r}, {c})"));
            }
            let rk = sig.port_kind_name(r).map_err(|e| e.to_string())?;
            let ck = sig.port_kind_name(c).map_err(|e| e.to_string())?;
            if rk != ck {
                return Err(format!("cross-kind entry ({r}: {rk}, {c}: {ck})"));
            }
        }
        if self.rows.values().any(BTreeMap::is_empty) {
            return Err("empty row retained".into());
        }
        Ok(())
    }
}

/// The row vector `sum_k beta_k * a[k, :]` as a mask over output ports.
pub fn left_multiply(beta: &MaskVector, a: &NetMatrix) -> Result<MaskVector, MatrixError> {
    if beta.axis() != Direction::Input {
        return Err(MatrixError::MalformedMask("row combination must run over input ports".into()));
    }
    if !beta.is_finite() {
        return Err(MatrixError::MalformedMask("row combination must be finite".into()));
    }
    let mut acc: BTreeMap<PortName, f64> = BTreeMap::new();
    for (k, b) in beta.support() {
        if let Some(row) = a.row(k) {
            for (j, w) in row {
                *acc.entry(j.clone()).or_insert(0.0) += b * w;
            }
        }
    }
    Ok(MaskVector::from_parts(Direction::Output, beta.port_kind().cloned(), acc, MaskTail::Zero))
}

/// Where the right-hand-side row of an update comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum RowSource {
    /// `sum_k beta_k * a[k, :]` for a finite row mask `beta`.
    Rows(MaskVector),
    /// A synthetic input row equal to 1 at every output of the named kind.
    AllOnes(Name),
}

/// A validated `gamma += alpha * beta` row update, scaled by `gate`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSpec {
    gamma: MaskVector,
    alpha: MaskVector,
    beta: RowSource,
    gate: f64,
}

impl UpdateSpec {
    pub fn new(gamma: MaskVector, alpha: MaskVector, beta: RowSource, gate: f64) -> Result<Self, MatrixError> {
        let malformed = |m: &str| Err(MatrixError::MalformedMask(m.to_string()));
        if gamma.axis() != Direction::Input || !gamma.is_finite() {
            return malformed("target mask must be a finite mask over input ports");
        }
        if alpha.axis() != Direction::Output {
            return malformed("column mask must run over output ports");
        }
        if !gate.is_finite() {
            return malformed("gate is not finite");
        }
        let mut kinds: Vec<&Name> = Vec::new();
        kinds.extend(gamma.port_kind());
        kinds.extend(alpha.port_kind());
        match &beta {
            RowSource::Rows(b) => {
                if b.axis() != Direction::Input || !b.is_finite() {
                    return malformed("row combination must be a finite mask over input ports");
                }
                kinds.extend(b.port_kind());
            }
            RowSource::AllOnes(k) => {
                if !alpha.is_finite() {
                    return malformed("an all-ones row needs a finite column mask");
                }
                kinds.push(k);
            }
        }
        if let Some(first) = kinds.first() {
            if let Some(other) = kinds.iter().find(|k| *k != first) {
                return Err(MatrixError::MalformedMask(format!("masks mix kinds `{first}` and `{other}`")));
            }
        }
        Ok(UpdateSpec { gamma, alpha, beta, gate })
    }

    pub fn gamma(&self) -> &MaskVector {
        &self.gamma
    }

    pub fn alpha(&self) -> &MaskVector {
        &self.alpha
    }

    pub fn beta(&self) -> &RowSource {
        &self.beta
    }

    pub fn gate(&self) -> f64 {
        self.gate
    }
}

/// The update delta: `d[i, j] = gate * gamma_i * alpha_j * sum_k beta_k a[k, j]`.
///
/// The caller adds it to `a`; `a` itself is not touched.
pub fn update_kernel(a: &NetMatrix, spec: &UpdateSpec) -> NetMatrix {
    let mut delta = NetMatrix::new();
    if spec.gate == 0.0 || spec.gamma.is_zero() {
        return delta;
    }
    // alpha_j * (row source)_j for every column j where it can be nonzero
    let scaled_row: Vec<(PortName, f64)> = match &spec.beta {
        RowSource::Rows(beta) => {
            let row = left_multiply(beta, a).expect("validated row mask");
            let kind = row.port_kind().cloned();
            row.support()
                .iter()
                .map(|(j, r)| {
                    let alpha_j = match &kind {
                        Some(k) => spec.alpha.coefficient(j, k),
                        None => 0.0,
                    };
                    (j.clone(), alpha_j * r)
                })
                .collect()
        }
        RowSource::AllOnes(_) => spec.alpha.support().iter().map(|(j, a)| (j.clone(), *a)).collect(),
    };
    for (i, g) in spec.gamma.support() {
        for (j, v) in &scaled_row {
            let d = spec.gate * g * v;
            if d != 0.0 {
                delta.put(i.clone(), j.clone(), d);
            }
        }
    }
    delta
}
