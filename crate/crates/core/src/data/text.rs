//! Plain-text serialization of quadratic problems.
//!
//! ```text
//! svrp-problem 1
//! clients <M> dim <d>
//! regularizer none | l1 <w> | ball <r>
//! client <m> offset <f_m(0)>
//! <d rows of the Hessian, d numbers each>
//! <linear term, d numbers>
//! ...
//! ```
//!
//! Numbers use Rust's shortest round-trip decimal form, so a write–read cycle
//! is exact. Every quadratic client, ridge or shifted included, is stored by
//! its effective `(H, c, f(0))`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::problem::{ClientObjective, FederatedProblem, Regularizer};

const MAGIC: &str = "svrp-problem 1";

pub fn write_problem<W: Write>(problem: &FederatedProblem, mut out: W) -> Result<()> {
    let d = problem.dim();
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "clients {} dim {d}", problem.num_clients())?;
    match problem.regularizer() {
        Regularizer::None => writeln!(out, "regularizer none")?,
        Regularizer::L1 { weight } => writeln!(out, "regularizer l1 {weight:e}")?,
        Regularizer::Ball { radius } => writeln!(out, "regularizer ball {radius:e}")?,
    }
    let zero = Vector::zeros(d);
    for (m, client) in problem.clients().iter().enumerate() {
        let h = client
            .hessian()
            .ok_or_else(|| Error::Unsupported("serializing a black-box client".into()))?;
        let c = client.linear_term().expect("quadratic");
        writeln!(out, "client {m} offset {:e}", client.value(&zero)?)?;
        for i in 0..d {
            let row: Vec<String> = (0..d).map(|j| format!("{:e}", h[(i, j)])).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        let lin: Vec<String> = c.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", lin.join(" "))?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.error(1, "unexpected end of input")),
        }
    }

    fn error(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn numbers(&mut self, count: usize) -> Result<Vec<f64>> {
        let text = self.next_line()?;
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.error(1, format!("invalid number `{t}`"))))
            .collect::<Result<_>>()?;
        if values.len() != count {
            return Err(self.error(1, format!("expected {count} numbers, found {}", values.len())));
        }
        Ok(values)
    }
}

fn field<'a>(tokens: &[&'a str], i: usize, lines: &Lines<impl BufRead>) -> Result<&'a str> {
    tokens
        .get(i)
        .copied()
        .ok_or_else(|| lines.error(1, "missing field"))
}

pub fn read_problem<R: BufRead>(reader: R) -> Result<FederatedProblem> {
    let mut lines = Lines {
        inner: reader.lines(),
        line: 0,
    };
    if lines.next_line()?.trim() != MAGIC {
        return Err(lines.error(1, format!("expected `{MAGIC}`")));
    }
    let header = lines.next_line()?;
    let t: Vec<&str> = header.split_whitespace().collect();
    if t.len() != 4 || t[0] != "clients" || t[2] != "dim" {
        return Err(lines.error(1, "expected `clients <M> dim <d>`"));
    }
    let parse_usize = |s: &str, lines: &Lines<R>| {
        s.parse::<usize>().map_err(|_| lines.error(1, format!("invalid count `{s}`")))
    };
    let m = parse_usize(t[1], &lines)?;
    let d = parse_usize(t[3], &lines)?;
    let reg_line = lines.next_line()?;
    let r: Vec<&str> = reg_line.split_whitespace().collect();
    let param = |lines: &Lines<R>| -> Result<f64> {
        field(&r, 2, lines)?
            .parse()
            .map_err(|_| lines.error(1, "invalid regularizer parameter"))
    };
    let regularizer = match (r.first().copied(), r.get(1).copied()) {
        (Some("regularizer"), Some("none")) => Regularizer::None,
        (Some("regularizer"), Some("l1")) => Regularizer::L1 { weight: param(&lines)? },
        (Some("regularizer"), Some("ball")) => Regularizer::Ball { radius: param(&lines)? },
        _ => return Err(lines.error(1, "expected `regularizer none|l1 <w>|ball <r>`")),
    };
    let mut clients = Vec::with_capacity(m);
    for k in 0..m {
        let head = lines.next_line()?;
        let h: Vec<&str> = head.split_whitespace().collect();
        if h.len() != 4 || h[0] != "client" || h[2] != "offset" || h[1] != k.to_string() {
            return Err(lines.error(1, format!("expected `client {k} offset <value>`")));
        }
        let offset: f64 = h[3].parse().map_err(|_| lines.error(1, "invalid offset"))?;
        let mut rows = Vec::with_capacity(d * d);
        for _ in 0..d {
            rows.extend(lines.numbers(d)?);
        }
        let linear = Vector::from_vec(lines.numbers(d)?);
        let hessian = Matrix::from_row_slice(d, d, &rows);
        clients.push(ClientObjective::quadratic(hessian, linear)?.with_offset(offset));
    }
    FederatedProblem::new(clients, regularizer)
}
