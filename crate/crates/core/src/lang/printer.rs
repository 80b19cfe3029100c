use std::fmt::Write as _;

use crate::lang::ast::*;

/// Canonical text: one statement per line, single spaces, shortest
/// round-trip numbers.
pub fn print_program(program: &[Statement]) -> String {
    let mut out = String::new();
    for s in program {
        out.push_str(&print_statement(&s.node));
        out.push('\n');
    }
    out
}

pub fn print_statement(s: &Stmt) -> String {
    let mut o = String::new();
    match s {
        Stmt::KindDecl(specs) => {
            let parts: Vec<String> = specs
                .iter()
                .map(|k| match &k.shape {
                    Some(shape) => format!("{}:{shape}", k.name),
                    None => k.name.to_string(),
                })
                .collect();
            write!(o, "#kind {};", parts.join(", ")).unwrap();
        }
        Stmt::NewCellType { type_name, inputs, outputs } => {
            write!(o, "#newcelltype {type_name}").unwrap();
            for (k, f) in inputs {
                write!(o, " #input {k}:{f}").unwrap();
            }
            for (k, f) in outputs {
                write!(o, " #output {k}:{f}").unwrap();
            }
            o.push(';');
        }
        Stmt::NeuronName { type_name, cell_name } => write!(o, "#neuron {type_name}:{cell_name};").unwrap(),
        Stmt::NeuronDecl { type_name, neuron_id, outputs, inputs } => {
            write!(o, "#neuron {type_name}:{neuron_id}").unwrap();
            if !outputs.is_empty() {
                write!(o, " {}", bindings(outputs)).unwrap();
            }
            o.push_str(" = #transformof");
            if !inputs.is_empty() {
                write!(o, " {}", bindings(inputs)).unwrap();
            }
            o.push(';');
        }
        Stmt::StreamDecl { kind_name, stream_id, neuron_id, field_name } => {
            write!(o, "#stream {kind_name}:{stream_id} = #neuroninput {neuron_id}.{field_name};").unwrap()
        }
        Stmt::Weight { dst, src, value } => {
            write!(o, "#weight {} {} = {};", port_ref(dst), port_ref(src), number(*value)).unwrap()
        }
        Stmt::UpdateWeights { lhs, rhs } => {
            write!(o, "#updateweights {} += ", sum(lhs)).unwrap();
            match rhs {
                UpdateRhs::Sum(terms) => o.push_str(&sum(terms)),
                UpdateRhs::Product { columns, rows } => write!(o, "({}) * ({})", sum(columns), sum(rows)).unwrap(),
            }
            o.push(';');
        }
        Stmt::Step(n) => write!(o, "#step {n};").unwrap(),
        Stmt::Show(target) => {
            let t = match target {
                ShowTarget::Matrix => "matrix".to_string(),
                ShowTarget::Active => "active".to_string(),
                ShowTarget::Tick => "tick".to_string(),
                ShowTarget::Port(r) => port_ref(r),
            };
            write!(o, "#show {t};").unwrap();
        }
        Stmt::Seed(n) => write!(o, "#seed {n};").unwrap(),
        Stmt::Gc => o.push_str("#gc;"),
    }
    o
}

fn bindings(list: &[(crate::names::Name, crate::names::Name)]) -> String {
    list.iter().map(|(f, id)| format!("{f}:{id}")).collect::<Vec<_>>().join(", ")
}

pub fn port_ref(r: &PortRef) -> String {
    match &r.node {
        RefKind::Triple(t, c, f) => format!("{t}:{c}:{f}"),
        RefKind::Field(id, f) => format!("{id}.{f}"),
        RefKind::Ident(id) => id.to_string(),
    }
}

fn number(v: f64) -> String {
    format!("{v}")
}

fn sum(terms: &[MaskTerm]) -> String {
    terms
        .iter()
        .map(|t| {
            let r = port_ref(&t.target);
            if t.coef == 1.0 {
                r
            } else if t.coef.is_sign_negative() {
                format!("({}) * {r}", number(t.coef))
            } else {
                format!("{} * {r}", number(t.coef))
            }
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parser::parse_program;

    #[test]
    fn canonical_spacing() {
        let p = parse_program("#weight   a:b:c\n d:e:f=0.50 ;#updateweights r+=(-1)*r;#step;").unwrap();
        assert_eq!(
            print_program(&p),
            "#weight a:b:c d:e:f = 0.5;\n#updateweights r += (-1) * r;\n#step 1;\n"
        );
    }

    #[test]
    fn coefficients_round_trip() {
        for src in [
            "#updateweights x += 1 * y + 2.5 * z;",
            "#updateweights x += (0.1) * y;",
            "#updateweights x + (-3) * w += (c + (-0.25) * d) * (s + 1e-7 * t);",
        ] {
            let p = parse_program(src).unwrap();
            let printed = print_program(&p);
            assert_eq!(parse_program(&printed).unwrap(), p, "{printed}");
        }
    }
}
