//! The description language: tokens, syntax tree, parser, canonical
//! printer and an interpreter that drives a [`crate::Machine`].

pub mod ast;
pub mod eval;
pub mod lexer;
pub mod parser;
pub mod printer;

pub use eval::{Env, EvalError, EvalErrorKind, EvalOutcome, Interpreter, LangError};
pub use lexer::{tokenize, LexError, Pos, Token, TokenKind};
pub use parser::{parse_program, ParseError, SyntaxError};
pub use printer::{print_program, print_statement};
