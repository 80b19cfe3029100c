//! Names over the base alphabet and the port addresses built from them.
//!
//! Every row and column of the network matrix is addressed by a port: a
//! `type:cell:field` triple plus a direction. Names are plain ASCII
//! identifiers; the structural characters of the description language
//! (space, `#`, `;`, `:`, `,`, `=`, `.`) can never occur inside one.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("empty name")]
    EmptyName,
    #[error("forbidden character {ch:?} at position {position}")]
    ForbiddenCharacter { position: usize, ch: char },
}

/// Returns true for characters of the base alphabet: ASCII letters, digits
/// and underscore.
pub fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// A validated, non-empty name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(String);

impl Name {
    pub fn new(text: &str) -> Result<Self, NameError> {
        if text.is_empty() {
            return Err(NameError::EmptyName);
        }
        if let Some((position, ch)) = text.chars().enumerate().find(|(_, c)| !is_name_char(*c)) {
            return Err(NameError::ForbiddenCharacter { position, ch });
        }
        Ok(Name(text.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Name {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Shorthand for names known to be valid at the call site.
///
/// Panics on invalid input; reserved for literals in built-ins and tests.
pub fn name(text: &str) -> Name {
    Name::new(text).unwrap_or_else(|e| panic!("invalid built-in name {text:?}: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Input,
    Output,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Input => f.write_str("input"),
            Direction::Output => f.write_str("output"),
        }
    }
}

/// A neuron instance: its type and cell name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId {
    pub type_name: Name,
    pub cell_name: Name,
}

impl CellId {
    pub fn new(type_name: Name, cell_name: Name) -> Self {
        CellId { type_name, cell_name }
    }

    pub fn port(&self, field_name: Name, direction: Direction) -> PortName {
        PortName {
            type_name: self.type_name.clone(),
            cell_name: self.cell_name.clone(),
            field_name,
            direction,
        }
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.type_name, self.cell_name)
    }
}

/// Address of one neuron input (a matrix row) or output (a matrix column).
///
/// Ordering is lexicographic on `(type_name, cell_name, field_name)`, with
/// direction as the final tiebreak so the order stays total.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortName {
    pub type_name: Name,
    pub cell_name: Name,
    pub field_name: Name,
    pub direction: Direction,
}

impl PortName {
    pub fn new(type_name: Name, cell_name: Name, field_name: Name, direction: Direction) -> Self {
        PortName { type_name, cell_name, field_name, direction }
    }

    pub fn input(type_name: &str, cell_name: &str, field_name: &str) -> Result<Self, NameError> {
        Ok(PortName::new(
            Name::new(type_name)?,
            Name::new(cell_name)?,
            Name::new(field_name)?,
            Direction::Input,
        ))
    }

    pub fn output(type_name: &str, cell_name: &str, field_name: &str) -> Result<Self, NameError> {
        Ok(PortName::new(
            Name::new(type_name)?,
            Name::new(cell_name)?,
            Name::new(field_name)?,
            Direction::Output,
        ))
    }

    pub fn cell(&self) -> CellId {
        CellId::new(self.type_name.clone(), self.cell_name.clone())
    }
}

/// Canonical `type:cell:field` rendering (direction is implied by the field).
impl fmt::Display for PortName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.type_name, self.cell_name, self.field_name)
    }
}
