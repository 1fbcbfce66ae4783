//! Plain-text instance format.
//!
//! ```text
//! qcqp-instance v1
//! n 3 d 2
//! radius 1.5
//! interior_radius 1.5
//! noise_sigma 0
//! edges 1
//! 0 1 -0.5
//! node 0
//! b 0.1 0.2
//! A
//! 1 0
//! 0 1
//! ...
//! ```
//!
//! Floats use the shortest representation that round-trips exactly.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::QcqpInstance;
use crate::error::{Error, Result};
use crate::topology::Graph;

const MAGIC: &str = "qcqp-instance v1";

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub(super) fn write(inst: &QcqpInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "n {} d {}", inst.node_count(), inst.dim());
    let _ = writeln!(out, "radius {}", inst.radius());
    let _ = writeln!(out, "interior_radius {}", inst.interior_radius());
    let _ = writeln!(out, "noise_sigma {}", inst.noise_sigma());
    let _ = writeln!(out, "edges {}", inst.graph().edge_count());
    for &(i, j) in inst.graph().edges() {
        let c = inst.offset(i, j).expect("edge has a slot");
        let _ = writeln!(out, "{i} {j} {c}");
    }
    for i in 0..inst.node_count() {
        let _ = writeln!(out, "node {i}");
        let _ = writeln!(out, "b {}", join(inst.linear(i).iter().copied()));
        let _ = writeln!(out, "A");
        let a = inst.quadratic(i);
        for r in 0..inst.dim() {
            let _ = writeln!(out, "{}", join(a.row(r).iter().copied()));
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        for (k, line) in self.inner.by_ref() {
            self.last = k + 1;
            let line = line.trim();
            if !line.is_empty() {
                return Ok(line);
            }
        }
        Err(Error::parse(self.last + 1, "unexpected end of input"))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.last, msg)
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        line.strip_prefix(key)
            .map(str::trim)
            .ok_or_else(|| self.err(format!("expected '{key}'")))
    }

    fn number<T: std::str::FromStr>(&self, token: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        token.parse().map_err(|e| self.err(format!("bad number '{token}': {e}")))
    }

    fn floats(&self, line: &str, count: usize) -> Result<Vec<f64>> {
        let values = line.split_whitespace().map(|t| self.number(t)).collect::<Result<Vec<f64>>>()?;
        if values.len() != count {
            return Err(self.err(format!("expected {count} values, found {}", values.len())));
        }
        Ok(values)
    }
}

pub(super) fn read(text: &str) -> Result<QcqpInstance> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    if lines.next()? != MAGIC {
        return Err(lines.err("missing 'qcqp-instance v1' header"));
    }
    let header: Vec<&str> = lines.next()?.split_whitespace().collect();
    let (n, d) = match header.as_slice() {
        ["n", n, "d", d] => (lines.number::<usize>(n)?, lines.number::<usize>(d)?),
        _ => return Err(lines.err("expected 'n <count> d <dim>'")),
    };
    let radius = lines.keyed("radius").and_then(|t| lines.number::<f64>(t))?;
    let interior = lines.keyed("interior_radius").and_then(|t| lines.number::<f64>(t))?;
    let sigma = lines.keyed("noise_sigma").and_then(|t| lines.number::<f64>(t))?;
    let edge_count = lines.keyed("edges").and_then(|t| lines.number::<usize>(t))?;

    let mut edges = Vec::with_capacity(edge_count);
    let mut offsets = Vec::with_capacity(edge_count);
    for _ in 0..edge_count {
        let parts: Vec<&str> = lines.next()?.split_whitespace().collect();
        let [i, j, c] = parts.as_slice() else {
            return Err(lines.err("expected 'i j c'"));
        };
        edges.push((lines.number::<usize>(i)?, lines.number::<usize>(j)?));
        offsets.push(lines.number::<f64>(c)?);
    }
    let graph = Graph::from_edges(n, edges.iter().copied())?;
    if graph.edges() != edges.as_slice() {
        return Err(lines.err("edges must be listed once each as sorted (lo, hi) pairs"));
    }

    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let idx = lines.keyed("node").and_then(|t| lines.number::<usize>(t))?;
        if idx != i {
            return Err(lines.err(format!("expected node {i}, found {idx}")));
        }
        let b_line = lines.keyed("b")?;
        b.push(DVector::from_vec(lines.floats(b_line, d)?));
        if lines.next()? != "A" {
            return Err(lines.err("expected 'A'"));
        }
        let mut rows = Vec::with_capacity(d * d);
        for _ in 0..d {
            let line = lines.next()?;
            rows.extend(lines.floats(line, d)?);
        }
        a.push(DMatrix::from_row_slice(d, d, &rows));
    }
    QcqpInstance::from_edge_data(graph, a, b, &offsets, radius, interior, sigma)
}

#[cfg(test)]
mod tests {
    use super::super::QcqpParams;
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let graph = Graph::erdos_renyi(7, 0.4, 3).unwrap();
        let params = QcqpParams { noise_sigma: 0.25, ..QcqpParams::paper(11) };
        let inst = QcqpInstance::generate(&graph, &params).unwrap();
        let text = inst.to_text();
        let back = QcqpInstance::from_text(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn malformed_input_reports_line() {
        let graph = Graph::erdos_renyi(3, 1.0, 3).unwrap();
        let inst = QcqpInstance::generate(&graph, &QcqpParams { d: 2, ..QcqpParams::paper(1) }).unwrap();
        let text = inst.to_text().replace("radius", "radios");
        match QcqpInstance::from_text(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(QcqpInstance::from_text("garbage").is_err());
        let truncated: String = inst.to_text().lines().take(12).collect::<Vec<_>>().join("\n");
        assert!(QcqpInstance::from_text(&truncated).is_err());
    }
}
