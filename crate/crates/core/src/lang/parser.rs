use thiserror::Error;

use crate::lang::ast::*;
use crate::lang::lexer::{tokenize, LexError, Pos, Token, TokenKind};
use crate::names::Name;
use crate::signature::KindShape;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: expected {expected}, found {found}")]
pub struct ParseError {
    pub pos: Pos,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyntaxError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl SyntaxError {
    pub fn pos(&self) -> Pos {
        match self {
            SyntaxError::Lex(e) => e.pos,
            SyntaxError::Parse(e) => e.pos,
        }
    }
}

pub fn parse_program(text: &str) -> Result<Vec<Statement>, SyntaxError> {
    let tokens = tokenize(text)?;
    let end = tokens.last().map(|t| t.pos).unwrap_or(Pos { line: 1, col: 1 });
    let mut p = Parser { tokens, i: 0, end };
    let mut out = Vec::new();
    while p.peek().is_some() {
        out.push(p.statement()?);
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    i: usize,
    end: Pos,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.i).map(|t| &t.kind)
    }

    fn peek_at(&self, k: usize) -> Option<&TokenKind> {
        self.tokens.get(self.i + k).map(|t| &t.kind)
    }

    fn pos(&self) -> Pos {
        self.tokens.get(self.i).map(|t| t.pos).unwrap_or(self.end)
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        let found = self.peek().map(|t| format!("`{t}`")).unwrap_or_else(|| "end of input".into());
        Err(ParseError { pos: self.pos(), expected: expected.into(), found })
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: &TokenKind) -> PResult<()> {
        if self.eat(kind) {
            Ok(())
        } else {
            self.error(&format!("`{kind}`"))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(TokenKind::Keyword(k)) if k == kw) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.error(&format!("`#{kw}`"))
        }
    }

    /// A name token; all-digit numbers also serve as names.
    fn name(&mut self) -> PResult<Name> {
        let text = match self.peek() {
            Some(TokenKind::Name(n)) => n.clone(),
            Some(TokenKind::Number { text, .. }) if text.chars().all(|c| c.is_ascii_digit()) => text.clone(),
            _ => return self.error("a name"),
        };
        self.i += 1;
        Ok(Name::new(&text).expect("lexer only produces valid names"))
    }

    fn number(&mut self) -> PResult<f64> {
        match self.peek() {
            Some(TokenKind::Number { value, .. }) => {
                let v = *value;
                self.i += 1;
                Ok(v)
            }
            _ => self.error("a number"),
        }
    }

    fn count(&mut self) -> PResult<u64> {
        match self.peek() {
            Some(TokenKind::Number { text, .. }) => match text.parse::<u64>() {
                Ok(n) => {
                    self.i += 1;
                    Ok(n)
                }
                Err(_) => self.error("a non-negative integer"),
            },
            _ => self.error("a non-negative integer"),
        }
    }

    fn statement(&mut self) -> PResult<Statement> {
        let pos = self.pos();
        let kw = match self.peek() {
            Some(TokenKind::Keyword(k)) => k.clone(),
            _ => return self.error("a statement keyword"),
        };
        self.i += 1;
        let stmt = match kw.as_str() {
            "kind" => self.kind_decl()?,
            "newcelltype" => self.new_cell_type()?,
            "neuron" => self.neuron()?,
            "stream" => self.stream_decl()?,
            "weight" => {
                let dst = self.port_ref()?;
                let src = self.port_ref()?;
                self.expect(&TokenKind::Eq)?;
                let value = self.number()?;
                Stmt::Weight { dst, src, value }
            }
            "updateweights" => {
                let lhs = self.sum()?;
                self.expect(&TokenKind::PlusEq)?;
                let rhs = self.update_rhs()?;
                Stmt::UpdateWeights { lhs, rhs }
            }
            "step" => {
                if self.peek() == Some(&TokenKind::Semi) {
                    Stmt::Step(1)
                } else {
                    Stmt::Step(self.count()?)
                }
            }
            "show" => self.show()?,
            "seed" => Stmt::Seed(self.count()?),
            "gc" => Stmt::Gc,
            _ => {
                self.i -= 1;
                return self.error("a statement keyword");
            }
        };
        self.expect(&TokenKind::Semi)?;
        Ok(Spanned::new(stmt, pos))
    }

    fn kind_decl(&mut self) -> PResult<Stmt> {
        let mut specs = vec![self.kind_spec()?];
        while self.eat(&TokenKind::Comma) {
            specs.push(self.kind_spec()?);
        }
        Ok(Stmt::KindDecl(specs))
    }

    fn kind_spec(&mut self) -> PResult<KindSpec> {
        let name = self.name()?;
        if !self.eat(&TokenKind::Colon) {
            return Ok(KindSpec { name, shape: None });
        }
        let shape_pos = self.i;
        let shape = match self.name()?.as_str() {
            "scalar" => KindShape::Scalar,
            "rowmask" => KindShape::RowMask,
            "columnmask" => KindShape::ColumnMask,
            "matrix" => KindShape::NetMatrix,
            "vector" => {
                self.expect(&TokenKind::Colon)?;
                let n = self.count()?;
                KindShape::Vector(n as usize)
            }
            "sample" => {
                self.expect(&TokenKind::Colon)?;
                KindShape::SignedSample { payload_space: self.name()? }
            }
            _ => {
                self.i = shape_pos;
                return self.error("scalar, vector, rowmask, columnmask, matrix or sample");
            }
        };
        Ok(KindSpec { name, shape: Some(shape) })
    }

    fn kind_field(&mut self) -> PResult<(Name, Name)> {
        let kind = self.name()?;
        self.expect(&TokenKind::Colon)?;
        Ok((kind, self.name()?))
    }

    fn new_cell_type(&mut self) -> PResult<Stmt> {
        let type_name = self.name()?;
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        while self.eat_keyword("input") {
            inputs.push(self.kind_field()?);
        }
        while self.eat_keyword("output") {
            outputs.push(self.kind_field()?);
        }
        if outputs.is_empty() {
            return self.error("`#output`");
        }
        Ok(Stmt::NewCellType { type_name, inputs, outputs })
    }

    fn bindings(&mut self) -> PResult<Vec<(Name, Name)>> {
        let mut out = Vec::new();
        if !matches!(self.peek(), Some(TokenKind::Name(_)) | Some(TokenKind::Number { .. })) {
            return Ok(out);
        }
        loop {
            let field = self.name()?;
            self.expect(&TokenKind::Colon)?;
            out.push((field, self.name()?));
            if !self.eat(&TokenKind::Comma) {
                return Ok(out);
            }
        }
    }

    fn neuron(&mut self) -> PResult<Stmt> {
        let type_name = self.name()?;
        self.expect(&TokenKind::Colon)?;
        let id = self.name()?;
        if self.peek() == Some(&TokenKind::Semi) {
            return Ok(Stmt::NeuronName { type_name, cell_name: id });
        }
        let outputs = self.bindings()?;
        self.expect(&TokenKind::Eq)?;
        self.expect_keyword("transformof")?;
        let inputs = self.bindings()?;
        Ok(Stmt::NeuronDecl { type_name, neuron_id: id, outputs, inputs })
    }

    fn stream_decl(&mut self) -> PResult<Stmt> {
        let (kind_name, stream_id) = self.kind_field()?;
        self.expect(&TokenKind::Eq)?;
        self.expect_keyword("neuroninput")?;
        let neuron_id = self.name()?;
        self.expect(&TokenKind::Dot)?;
        let field_name = self.name()?;
        Ok(Stmt::StreamDecl { kind_name, stream_id, neuron_id, field_name })
    }

    fn port_ref(&mut self) -> PResult<PortRef> {
        let pos = self.pos();
        let first = self.name()?;
        let kind = if self.eat(&TokenKind::Colon) {
            let cell = self.name()?;
            self.expect(&TokenKind::Colon)?;
            RefKind::Triple(first, cell, self.name()?)
        } else if self.eat(&TokenKind::Dot) {
            RefKind::Field(first, self.name()?)
        } else {
            RefKind::Ident(first)
        };
        Ok(Spanned::new(kind, pos))
    }

    fn term(&mut self) -> PResult<MaskTerm> {
        let coef = match (self.peek(), self.peek_at(1), self.peek_at(2)) {
            (Some(TokenKind::Number { .. }), Some(TokenKind::Star), _) => {
                let c = self.number()?;
                self.expect(&TokenKind::Star)?;
                c
            }
            (Some(TokenKind::LParen), Some(TokenKind::Number { .. }), Some(TokenKind::RParen)) => {
                self.i += 1;
                let c = self.number()?;
                self.expect(&TokenKind::RParen)?;
                self.expect(&TokenKind::Star)?;
                c
            }
            _ => 1.0,
        };
        Ok(MaskTerm { coef, target: self.port_ref()? })
    }

    fn sum(&mut self) -> PResult<Vec<MaskTerm>> {
        let mut terms = vec![self.term()?];
        while self.eat(&TokenKind::Plus) {
            terms.push(self.term()?);
        }
        Ok(terms)
    }

    fn update_rhs(&mut self) -> PResult<UpdateRhs> {
        let grouped = self.peek() == Some(&TokenKind::LParen)
            && !matches!(self.peek_at(1), Some(TokenKind::Number { .. }))
            || (self.peek() == Some(&TokenKind::LParen)
                && matches!(self.peek_at(1), Some(TokenKind::Number { .. }))
                && self.peek_at(2) != Some(&TokenKind::RParen));
        if !grouped {
            return Ok(UpdateRhs::Sum(self.sum()?));
        }
        self.expect(&TokenKind::LParen)?;
        let columns = self.sum()?;
        self.expect(&TokenKind::RParen)?;
        self.expect(&TokenKind::Star)?;
        self.expect(&TokenKind::LParen)?;
        let rows = self.sum()?;
        self.expect(&TokenKind::RParen)?;
        Ok(UpdateRhs::Product { columns, rows })
    }

    fn show(&mut self) -> PResult<Stmt> {
        let special = match (self.peek(), self.peek_at(1)) {
            (Some(TokenKind::Name(n)), Some(TokenKind::Semi)) => match n.as_str() {
                "matrix" => Some(ShowTarget::Matrix),
                "active" => Some(ShowTarget::Active),
                "tick" => Some(ShowTarget::Tick),
                _ => None,
            },
            _ => None,
        };
        if let Some(target) = special {
            self.i += 1;
            return Ok(Stmt::Show(target));
        }
        Ok(Stmt::Show(ShowTarget::Port(self.port_ref()?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::names::name;

    fn one(src: &str) -> Stmt {
        let mut v = parse_program(src).unwrap();
        assert_eq!(v.len(), 1);
        v.remove(0).node
    }

    fn ident(s: &str) -> PortRef {
        Spanned::new(RefKind::Ident(name(s)), Pos::default())
    }

    #[test]
    fn neuron_declaration_form() {
        let s = one("#neuron sigmoid:n out:y = #transformof in:x;");
        assert_eq!(
            s,
            Stmt::NeuronDecl {
                type_name: name("sigmoid"),
                neuron_id: name("n"),
                outputs: vec![(name("out"), name("y"))],
                inputs: vec![(name("in"), name("x"))],
            }
        );
        assert_eq!(one("#neuron one:b = #transformof;"), Stmt::NeuronDecl {
            type_name: name("one"),
            neuron_id: name("b"),
            outputs: vec![],
            inputs: vec![],
        });
        assert_eq!(one("#neuron sigmoid:c1;"), Stmt::NeuronName { type_name: name("sigmoid"), cell_name: name("c1") });
    }

    #[test]
    fn row_zeroing_update() {
        let s = one("#updateweights r += (-1) * r;");
        assert_eq!(
            s,
            Stmt::UpdateWeights {
                lhs: vec![MaskTerm { coef: 1.0, target: ident("r") }],
                rhs: UpdateRhs::Sum(vec![MaskTerm { coef: -1.0, target: ident("r") }]),
            }
        );
    }

    #[test]
    fn product_update() {
        let s = one("#updateweights r += (c + 0.5 * d) * (s + (-2) * t);");
        let Stmt::UpdateWeights { rhs: UpdateRhs::Product { columns, rows }, .. } = s else { panic!() };
        assert_eq!(columns.len(), 2);
        assert_eq!(rows[1].coef, -2.0);
    }

    #[test]
    fn missing_semicolon() {
        let err = parse_program("#gc").unwrap_err();
        assert!(matches!(err, SyntaxError::Parse(ParseError { .. })));
        assert!(parse_program("#weight a:b:c d:e:f = 1").is_err());
    }

    #[test]
    fn kinds_and_cell_types() {
        let s = one("#kind v3:vector:3, coin:sample:X, scalar;");
        let Stmt::KindDecl(specs) = s else { panic!() };
        assert_eq!(specs[0].shape, Some(KindShape::Vector(3)));
        assert_eq!(specs[1].shape, Some(KindShape::SignedSample { payload_space: name("X") }));
        assert_eq!(specs[2].shape, None);
        let s = one("#newcelltype acc #input scalar:x #input scalar:y #output scalar:z;");
        assert_eq!(
            s,
            Stmt::NewCellType {
                type_name: name("acc"),
                inputs: vec![(name("scalar"), name("x")), (name("scalar"), name("y"))],
                outputs: vec![(name("scalar"), name("z"))],
            }
        );
        assert!(parse_program("#kind v:tensor;").is_err());
    }

    #[test]
    fn positions_recorded() {
        let v = parse_program("#gc;\n#step 4;").unwrap();
        assert_eq!(v[1].pos, Pos { line: 2, col: 1 });
        let err = parse_program("#gc;\n#bogus;").unwrap_err();
        assert_eq!(err.pos(), Pos { line: 2, col: 1 });
    }
}
