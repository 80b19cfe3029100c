//! Batch runner, trace writer and interactive REPL for the `dmm` binary.

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;
use dmm_core::engine::{EngineError, Machine};
use dmm_core::lang::{parse_program, Interpreter, LangError, Pos};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_LANGUAGE: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "dmm", version, about = "Run and steer dataflow matrix machines")]
pub struct Cli {
    /// Script to evaluate first.
    #[arg(long, value_name = "PATH")]
    pub script: Option<PathBuf>,
    /// Extra steps to run after the script.
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub steps: u64,
    /// Seed for stochastic stream sums.
    #[arg(long, value_name = "U64", default_value_t = 0, conflicts_with = "entropy")]
    pub seed: u64,
    /// Seed from the clock instead; the chosen seed is reported on stderr.
    #[arg(long)]
    pub entropy: bool,
    /// Write one JSON record per tick to this file.
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    /// Read statements from stdin after the script and steps.
    #[arg(long)]
    pub repl: bool,
    /// Print the matrix dump every N ticks.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub show_matrix_every: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub script_path: Option<PathBuf>,
    pub steps: u64,
    pub seed: u64,
    pub trace_path: Option<PathBuf>,
    pub repl: bool,
    pub show_matrix_every: Option<u64>,
    /// Set when the seed came from the clock.
    pub entropy_seeded: bool,
}

impl Cli {
    pub fn into_config(self) -> RunConfig {
        let seed = if self.entropy {
            let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
            now.as_nanos() as u64 ^ u64::from(std::process::id()).rotate_left(32)
        } else {
            self.seed
        };
        RunConfig {
            script_path: self.script,
            steps: self.steps,
            seed,
            trace_path: self.trace,
            repl: self.repl,
            show_matrix_every: self.show_matrix_every,
            entropy_seeded: self.entropy,
        }
    }
}

#[derive(Debug)]
pub enum SessionError {
    Io(io::Error),
    Lang(LangError),
    Engine(EngineError),
}

impl From<io::Error> for SessionError {
    fn from(e: io::Error) -> Self {
        SessionError::Io(e)
    }
}

/// Writes the machine's current snapshot as one JSON line.
pub fn emit_trace(machine: &Machine, sink: &mut dyn Write) -> io::Result<()> {
    writeln!(sink, "{}", machine.snapshot().to_json_line())
}

/// An interpreter plus the per-tick side channels: trace file and periodic
/// matrix dumps.
pub struct Session {
    interp: Interpreter,
    trace: Option<Box<dyn Write>>,
    show_matrix_every: Option<u64>,
}

impl Session {
    pub fn new(seed: u64, trace: Option<Box<dyn Write>>, show_matrix_every: Option<u64>) -> Self {
        Session { interp: Interpreter::standard(seed), trace, show_matrix_every }
    }

    pub fn interpreter(&self) -> &Interpreter {
        &self.interp
    }

    fn after_tick(
        machine: &Machine,
        trace: &mut Option<Box<dyn Write>>,
        every: Option<u64>,
        out: &mut dyn Write,
    ) -> io::Result<()> {
        if let Some(sink) = trace {
            emit_trace(machine, sink.as_mut())?;
        }
        if let Some(n) = every {
            if machine.tick().is_multiple_of(n) {
                writeln!(out, "-- matrix at tick {}", machine.tick())?;
                write!(out, "{}", machine.matrix().dump())?;
            }
        }
        Ok(())
    }

    /// Evaluates a whole program, stopping at the first error.
    pub fn eval_text(&mut self, text: &str, out: &mut dyn Write) -> Result<(), SessionError> {
        self.eval_chunk(text, out, false)
    }

    fn eval_chunk(&mut self, text: &str, out: &mut dyn Write, report_ticks: bool) -> Result<(), SessionError> {
        let program = parse_program(text).map_err(|e| SessionError::Lang(e.into()))?;
        for stmt in &program {
            let Session { interp, trace, show_matrix_every } = self;
            let mut io_error = None;
            let result = interp.eval_statement_with(stmt, &mut |m: &Machine| {
                if io_error.is_none() {
                    io_error = Self::after_tick(m, trace, *show_matrix_every, out).err();
                }
            });
            if let Some(e) = io_error {
                return Err(e.into());
            }
            let outcome = result.map_err(|e| SessionError::Lang(e.into()))?;
            for line in &outcome.lines {
                writeln!(out, "{line}")?;
            }
            if report_ticks && matches!(stmt.node, dmm_core::lang::ast::Stmt::Step(_)) {
                writeln!(out, "tick {}", self.interp.machine().tick())?;
            }
        }
        Ok(())
    }

    /// Runs `n` more ticks outside any script.
    pub fn step(&mut self, n: u64, out: &mut dyn Write) -> Result<(), SessionError> {
        for _ in 0..n {
            self.interp.machine_mut().step(1).map_err(SessionError::Engine)?;
            Self::after_tick(self.interp.machine(), &mut self.trace, self.show_matrix_every, out)?;
        }
        Ok(())
    }

    pub fn finish(&mut self) -> io::Result<()> {
        match &mut self.trace {
            Some(sink) => sink.flush(),
            None => Ok(()),
        }
    }
}

/// `file:line:col: message`
pub fn diagnostic(origin: &str, pos: Pos, message: &str) -> String {
    format!("{origin}:{}:{}: {message}", pos.line, pos.col)
}

/// Byte offset just past the last `;` outside a `//` comment.
fn statement_boundary(text: &str) -> Option<usize> {
    let mut last = None;
    let mut in_comment = false;
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'\n' => in_comment = false,
            b'/' if !in_comment && bytes.get(i + 1) == Some(&b'/') => in_comment = true,
            b';' if !in_comment => last = Some(i + 1),
            _ => {}
        }
    }
    last
}

/// Reads statements until end of input. Lines are buffered until a `;`
/// completes a statement; errors are reported and the session continues.
pub fn repl_loop(
    session: &mut Session,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> io::Result<()> {
    let mut buffer = String::new();
    let mut buffer_line = 1u32;
    let mut line_no = 0u32;
    loop {
        write!(out, "{}", if buffer.trim().is_empty() { "dmm> " } else { "...> " })?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        if buffer.trim().is_empty() {
            buffer.clear();
            buffer_line = line_no;
        }
        buffer.push_str(&line);
        if !line.ends_with('\n') {
            buffer.push('\n');
        }
        let Some(end) = statement_boundary(&buffer) else { continue };
        let chunk: String = buffer.drain(..end).collect();
        let chunk_line = buffer_line;
        buffer_line = line_no;
        match session.eval_chunk(&chunk, out, true) {
            Ok(()) => {}
            Err(SessionError::Io(e)) => return Err(e),
            Err(SessionError::Lang(e)) => {
                let pos = Pos { line: chunk_line + e.pos().line - 1, col: e.pos().col };
                writeln!(err, "{}", diagnostic("<stdin>", pos, &e.message()))?;
            }
            Err(SessionError::Engine(e)) => writeln!(err, "<stdin>: {e}")?,
        }
    }
    if !buffer.trim().is_empty() && parse_program(&buffer).map_or(true, |p| !p.is_empty()) {
        writeln!(err, "{}", diagnostic("<stdin>", Pos { line: buffer_line, col: 1 }, "unterminated statement"))?;
    }
    writeln!(out)?;
    Ok(())
}

/// Runs a configuration to completion and returns the process exit code.
pub fn run(config: &RunConfig, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    match run_inner(config, input, out, err) {
        Ok(()) => EXIT_OK,
        Err(code) => code,
    }
}

fn run_inner(config: &RunConfig, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), u8> {
    let io_fail = |err: &mut dyn Write, what: &str, e: io::Error| {
        let _ = writeln!(err, "dmm: {what}: {e}");
        EXIT_IO
    };
    if config.entropy_seeded {
        let _ = writeln!(err, "dmm: seed {}", config.seed);
    }
    let trace: Option<Box<dyn Write>> = match &config.trace_path {
        Some(p) => match File::create(p) {
            Ok(f) => Some(Box::new(BufWriter::new(f))),
            Err(e) => return Err(io_fail(err, &p.display().to_string(), e)),
        },
        None => None,
    };
    let mut session = Session::new(config.seed, trace, config.show_matrix_every);
    let result = (|| -> Result<(), u8> {
        if let Some(path) = &config.script_path {
            let origin = path.display().to_string();
            let text = std::fs::read_to_string(path).map_err(|e| io_fail(err, &origin, e))?;
            match session.eval_text(&text, out) {
                Ok(()) => {}
                Err(SessionError::Io(e)) => return Err(io_fail(err, "write", e)),
                Err(SessionError::Lang(e)) => {
                    let _ = writeln!(err, "{}", diagnostic(&origin, e.pos(), &e.message()));
                    return Err(if e.is_runtime() { EXIT_RUNTIME } else { EXIT_LANGUAGE });
                }
                Err(SessionError::Engine(e)) => {
                    let _ = writeln!(err, "{origin}: {e}");
                    return Err(EXIT_RUNTIME);
                }
            }
        }
        match session.step(config.steps, out) {
            Ok(()) => {}
            Err(SessionError::Io(e)) => return Err(io_fail(err, "write", e)),
            Err(SessionError::Engine(e)) => {
                let _ = writeln!(err, "dmm: {e}");
                return Err(EXIT_RUNTIME);
            }
            Err(SessionError::Lang(e)) => {
                let _ = writeln!(err, "dmm: {e}");
                return Err(EXIT_LANGUAGE);
            }
        }
        if config.repl {
            repl_loop(&mut session, input, out, err).map_err(|e| io_fail(err, "repl", e))?;
        }
        Ok(())
    })();
    // keep what was traced before a failure
    let flushed = session.finish();
    result?;
    flushed.map_err(|e| io_fail(err, "trace", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_skip_comments() {
        assert_eq!(statement_boundary("#gc"), None);
        assert_eq!(statement_boundary("#gc; #step"), Some(4));
        assert_eq!(statement_boundary("#gc // a;b\n"), None);
        assert_eq!(statement_boundary("#gc // x\n;"), Some(10));
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from(["dmm", "--steps", "3", "--show-matrix-every", "2"]).unwrap();
        let cfg = cli.into_config();
        assert_eq!((cfg.steps, cfg.seed, cfg.show_matrix_every), (3, 0, Some(2)));
        assert!(Cli::try_parse_from(["dmm", "--show-matrix-every", "0"]).is_err());
        assert!(Cli::try_parse_from(["dmm", "--seed", "4", "--entropy"]).is_err());
    }
}
