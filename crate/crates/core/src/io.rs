//! METIS graph files and plain-text partition files.
//!
//! The METIS header is `n m [fmt [ncon]]`. `fmt` is a three-digit flag string
//! where the last digit enables edge weights, the middle one node weights and
//! the first one node sizes (parsed and ignored). Node ids in the body are
//! 1-based; lines starting with `%` are comments.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{BlockId, Graph, NodeId, Weight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Symmetry {
    /// Every arc must have a reverse arc of equal weight.
    #[default]
    Strict,
    /// Missing reverse arcs are added; conflicting weights keep the larger.
    Symmetrize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Format {
    node_sizes: bool,
    node_weights: bool,
    edge_weights: bool,
}

fn parse_format(token: &str, line: usize) -> Result<Format> {
    if token.is_empty() || token.len() > 3 || !token.bytes().all(|b| b == b'0' || b == b'1') {
        return Err(Error::parse(line, format!("invalid fmt flags '{token}'")));
    }
    let padded = format!("{token:0>3}");
    let bytes = padded.as_bytes();
    Ok(Format {
        node_sizes: bytes[0] == b'1',
        node_weights: bytes[1] == b'1',
        edge_weights: bytes[2] == b'1',
    })
}

fn parse_int(token: &str, line: usize, what: &str) -> Result<i64> {
    token
        .parse::<i64>()
        .map_err(|_| Error::parse(line, format!("expected integer {what}, found '{token}'")))
}

pub fn parse_metis(text: &str, symmetry: Symmetry) -> Result<Graph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim_start().starts_with('%'));

    let (header_line, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| Error::parse(1, "missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 2 || fields.len() > 4 {
        return Err(Error::parse(header_line, "header must be 'n m [fmt [ncon]]'"));
    }
    let n = parse_int(fields[0], header_line, "node count")?;
    let m = parse_int(fields[1], header_line, "edge count")?;
    if n < 0 || m < 0 || n > NodeId::MAX as i64 {
        return Err(Error::parse(header_line, "node and edge counts must be non-negative"));
    }
    let format = match fields.get(2) {
        Some(t) => parse_format(t, header_line)?,
        None => Format::default(),
    };
    if let Some(ncon) = fields.get(3) {
        if parse_int(ncon, header_line, "ncon")? != 1 {
            return Err(Error::parse(
                header_line,
                "only a single balance constraint is supported",
            ));
        }
    }
    let n = n as usize;

    let mut node_weights = Vec::with_capacity(n);
    let mut arcs: Vec<(NodeId, NodeId, Weight)> = Vec::with_capacity(2 * m as usize);
    let mut self_loops = 0usize;
    let mut last_line = header_line;
    for u in 0..n {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(last_line + 1, format!("expected {n} node lines, found {u}")))?;
        last_line = line_no;
        let mut tokens = line.split_whitespace();
        if format.node_sizes {
            let t = tokens
                .next()
                .ok_or_else(|| Error::parse(line_no, "missing node size"))?;
            parse_int(t, line_no, "node size")?;
        }
        let weight = if format.node_weights {
            let t = tokens
                .next()
                .ok_or_else(|| Error::parse(line_no, "missing node weight"))?;
            parse_int(t, line_no, "node weight")?
        } else {
            1
        };
        if weight <= 0 {
            return Err(Error::parse(line_no, format!("node weight {weight} must be positive")));
        }
        node_weights.push(weight);
        while let Some(t) = tokens.next() {
            let v = parse_int(t, line_no, "neighbor id")?;
            if v < 1 || v as usize > n {
                return Err(Error::parse(line_no, format!("neighbor id {v} out of range 1..={n}")));
            }
            let w = if format.edge_weights {
                let t = tokens
                    .next()
                    .ok_or_else(|| Error::parse(line_no, format!("missing weight for neighbor {v}")))?;
                parse_int(t, line_no, "edge weight")?
            } else {
                1
            };
            if w <= 0 {
                return Err(Error::parse(line_no, format!("edge weight {w} must be positive")));
            }
            let v = (v - 1) as NodeId;
            if v as usize == u {
                self_loops += 1;
                continue;
            }
            arcs.push((u as NodeId, v, w));
        }
    }
    if let Some((line_no, line)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse(
            line_no,
            format!("unexpected trailing content '{}'", line.trim()),
        ));
    }
    if self_loops > 0 {
        log::warn!("dropped {self_loops} self-loop entries");
    }

    arcs.sort_unstable_by_key(|&(u, v, _)| (u, v));
    let merged = merge_parallel(arcs);
    let merged = match symmetry {
        Symmetry::Strict => {
            check_symmetric(&merged)?;
            if merged.len() != 2 * m as usize {
                log::warn!("header declares {m} edges but the body contains {}", merged.len() / 2);
            }
            merged
        }
        Symmetry::Symmetrize => symmetrize(merged),
    };
    Ok(Graph::from_arcs(node_weights, merged))
}

fn merge_parallel(sorted: Vec<(NodeId, NodeId, Weight)>) -> Vec<(NodeId, NodeId, Weight)> {
    let mut out: Vec<(NodeId, NodeId, Weight)> = Vec::with_capacity(sorted.len());
    for (u, v, w) in sorted {
        match out.last_mut() {
            Some(last) if last.0 == u && last.1 == v => last.2 += w,
            _ => out.push((u, v, w)),
        }
    }
    out
}

fn check_symmetric(arcs: &[(NodeId, NodeId, Weight)]) -> Result<()> {
    let mut reversed: Vec<(NodeId, NodeId, Weight)> = arcs.iter().map(|&(u, v, w)| (v, u, w)).collect();
    reversed.sort_unstable_by_key(|&(u, v, _)| (u, v));
    for (a, b) in arcs.iter().zip(&reversed) {
        if a != b {
            let (u, v, w) = if (a.0, a.1) <= (b.0, b.1) { *a } else { (b.1, b.0, b.2) };
            return Err(Error::InvalidGraph(format!(
                "edge ({}, {}) with weight {w} has no matching reverse edge",
                u + 1,
                v + 1
            )));
        }
    }
    Ok(())
}

fn symmetrize(arcs: Vec<(NodeId, NodeId, Weight)>) -> Vec<(NodeId, NodeId, Weight)> {
    let mut all: Vec<(NodeId, NodeId, Weight)> = Vec::with_capacity(arcs.len() * 2);
    for &(u, v, w) in &arcs {
        all.push((u.min(v), u.max(v), w));
    }
    all.sort_unstable();
    let mut out = Vec::with_capacity(all.len() * 2);
    let mut i = 0;
    while i < all.len() {
        let (u, v, mut w) = all[i];
        while i + 1 < all.len() && all[i + 1].0 == u && all[i + 1].1 == v {
            i += 1;
            w = w.max(all[i].2);
        }
        out.push((u, v, w));
        out.push((v, u, w));
        i += 1;
    }
    out
}

pub fn read_metis(path: impl AsRef<Path>, symmetry: Symmetry) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metis(&text, symmetry)
}

pub fn to_metis_string(graph: &Graph) -> String {
    let node_weights = !graph.has_unit_node_weights();
    let edge_weights = !graph.has_unit_edge_weights();
    let mut out = format!("{} {}", graph.n(), graph.m());
    match (node_weights, edge_weights) {
        (false, false) => {}
        (false, true) => out.push_str(" 1"),
        (true, false) => out.push_str(" 10"),
        (true, true) => out.push_str(" 11"),
    }
    out.push('\n');
    for v in graph.nodes() {
        let mut first = true;
        let mut push = |out: &mut String, x: Weight| {
            if !first {
                out.push(' ');
            }
            first = false;
            out.push_str(&x.to_string());
        };
        if node_weights {
            push(&mut out, graph.node_weight(v));
        }
        for (u, w) in graph.neighbors(v) {
            push(&mut out, u as Weight + 1);
            if edge_weights {
                push(&mut out, w);
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_metis(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_metis_string(graph)).map_err(|e| Error::io(path, e))
}

pub fn write_partition(blocks: &[BlockId], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for b in blocks {
        writeln!(out, "{b}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_partition(text: &str) -> Result<Vec<BlockId>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<BlockId>()
                .map_err(|_| Error::parse(i + 1, format!("invalid block id '{}'", l.trim())))
        })
        .collect()
}

pub fn read_partition(path: impl AsRef<Path>) -> Result<Vec<BlockId>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_partition(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph() {
        let g = parse_metis("3 2\n2\n1 3\n2\n", Symmetry::Strict).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.m(), 2);
        assert_eq!(g.edge_weight(0, 1), Some(1));
        assert_eq!(g.edge_weight(1, 2), Some(1));
        assert_eq!(g.edge_weight(0, 2), None);
        assert!(g.has_unit_node_weights());
    }

    #[test]
    fn edge_weight_flag() {
        let g = parse_metis("2 1 1\n2 5\n1 5\n", Symmetry::Strict).unwrap();
        assert_eq!(g.edge_weight(0, 1), Some(5));
        assert_eq!(g.total_edge_weight(), 5);
    }

    #[test]
    fn node_weights_and_comments() {
        let g = parse_metis("% comment\n3 2 11\n4 2 1\n% mid\n2 1 1 3 7\n1 2 7\n", Symmetry::Strict).unwrap();
        assert_eq!(g.node_weights(), &[4, 2, 1]);
        assert_eq!(g.edge_weight(1, 2), Some(7));
    }

    #[test]
    fn empty_lines_are_isolated_nodes() {
        let g = parse_metis("3 1\n2\n1\n\n", Symmetry::Strict).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.degree(2), 0);
    }

    #[test]
    fn asymmetric_rejected_in_strict_mode() {
        let err = parse_metis("2 1\n2\n\n", Symmetry::Strict).unwrap_err();
        assert!(matches!(err, Error::InvalidGraph(_)), "{err}");
        let g = parse_metis("2 1\n2\n\n", Symmetry::Symmetrize).unwrap();
        assert_eq!(g.edge_weight(1, 0), Some(1));
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_metis("", Symmetry::Strict).is_err());
        assert!(parse_metis("x 2\n", Symmetry::Strict).is_err());
        assert!(parse_metis("2 1 2\n2\n1\n", Symmetry::Strict).is_err());
        assert!(parse_metis("2 1\n3\n1\n", Symmetry::Strict).is_err());
        assert!(parse_metis("2 1 1\n2 0\n1 0\n", Symmetry::Strict).is_err());
        assert!(parse_metis("2 1 10\n-1 2\n1 1\n", Symmetry::Strict).is_err());
        assert!(parse_metis("3 2\n2\n1\n", Symmetry::Strict).is_err());
        assert!(parse_metis("1 0\n\n5\n", Symmetry::Strict).is_err());
    }

    #[test]
    fn self_loops_dropped() {
        let g = parse_metis("2 1\n1 2\n1\n", Symmetry::Strict).unwrap();
        assert_eq!(g.m(), 1);
        assert_eq!(g.edge_weight(0, 0), None);
    }

    #[test]
    fn partition_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        write_partition(&[0, 1, 0], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "0\n1\n0\n");
        assert_eq!(read_partition(&path).unwrap(), vec![0, 1, 0]);
        write_partition(&[0, 0], &path).unwrap();
        assert_eq!(read_partition(&path).unwrap(), vec![0, 0]);
    }
}
