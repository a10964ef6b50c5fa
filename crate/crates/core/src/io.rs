//! Text formats: edge lists, series CSV, model JSON and pairwise statistics.
//!
//! Every node index written or read here is 1-based.

use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::pairwise::PairwiseStats;
use crate::var::{SeriesMatrix, VarModel};

/// `n <count>` on the first line, then one `from to` pair per line.
pub fn write_edge_list<W: Write>(g: &DirectedGraph, mut w: W) -> Result<()> {
    writeln!(w, "n {}", g.n())?;
    for (from, to) in g.edges() {
        writeln!(w, "{} {}", from + 1, to + 1)?;
    }
    Ok(())
}

pub fn read_edge_list<R: BufRead>(r: R) -> Result<DirectedGraph> {
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        line,
        column,
        message,
    };
    let mut graph: Option<DirectedGraph> = None;
    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(line_no, 1, format!("expected two fields, found {}", fields.len())));
        }
        match &mut graph {
            None => {
                if fields[0] != "n" {
                    return Err(parse_err(line_no, 1, "expected header `n <count>`".into()));
                }
                let n = fields[1]
                    .parse()
                    .map_err(|e| parse_err(line_no, 2, format!("bad node count: {e}")))?;
                graph = Some(DirectedGraph::new(n));
            }
            Some(g) => {
                let mut ends = [0usize; 2];
                for (c, f) in fields.iter().enumerate() {
                    let v: usize = f
                        .parse()
                        .map_err(|e| parse_err(line_no, c + 1, format!("bad node `{f}`: {e}")))?;
                    if v == 0 || v > g.n() {
                        return Err(parse_err(line_no, c + 1, format!("node {v} outside 1..={}", g.n())));
                    }
                    ends[c] = v - 1;
                }
                g.add_edge(ends[0], ends[1])
                    .map_err(|e| parse_err(line_no, 1, e.to_string()))?;
            }
        }
    }
    graph.ok_or_else(|| parse_err(1, 1, "missing header `n <count>`".into()))
}

/// One row per time step, comma separated, shortest round-trip decimals.
pub fn write_series_csv<W: Write>(x: &SeriesMatrix, header: bool, mut w: W) -> Result<()> {
    if header {
        let names: Vec<String> = (1..=x.dim()).map(|j| format!("x{j}")).collect();
        writeln!(w, "{}", names.join(","))?;
    }
    let mut line = String::new();
    for row in x.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Parses a numeric CSV; errors carry 1-based file line and column.
pub fn read_series_csv<R: Read>(r: R, header: bool) -> Result<SeriesMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    line,
                    column: record.len().min(w) + 1,
                    message: format!("expected {w} columns, found {}", record.len()),
                })
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                column: c + 1,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: c + 1,
                    message: format!("non-finite value `{field}`"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let n = width.ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "no data rows".into(),
    })?;
    SeriesMatrix::new(rows, n, values)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    p: usize,
    /// `coeffs[tau - 1][i][j]`.
    coeffs: Vec<Vec<Vec<f64>>>,
    noise_vars: Vec<f64>,
    topology: Vec<[usize; 2]>,
}

pub fn model_to_json(m: &VarModel) -> Result<String> {
    let n = m.n();
    let file = ModelFile {
        n,
        p: m.p(),
        coeffs: m
            .coeffs()
            .iter()
            .map(|b| (0..n).map(|i| b.row(i).iter().copied().collect()).collect())
            .collect(),
        noise_vars: m.noise_vars().to_vec(),
        topology: m.topology().edges().map(|(a, b)| [a + 1, b + 1]).collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<VarModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.coeffs.len() != file.p {
        return Err(Error::DimensionMismatch {
            expected: file.p,
            found: file.coeffs.len(),
        });
    }
    let mut coeffs = Vec::with_capacity(file.p);
    for lag in &file.coeffs {
        if lag.len() != file.n || lag.iter().any(|r| r.len() != file.n) {
            return Err(Error::DimensionMismatch {
                expected: file.n,
                found: lag.len(),
            });
        }
        coeffs.push(DMatrix::from_fn(file.n, file.n, |i, j| lag[i][j]));
    }
    let g = DirectedGraph::from_one_based(file.n, file.topology.iter().map(|e| (e[0], e[1])))?;
    VarModel::new(coeffs, file.noise_vars, g)
}

/// `i,j,p_ij,F,P` for every ordered off-diagonal pair, where the row
/// describes `j -> i`.
pub fn write_stats_csv<W: Write>(stats: &PairwiseStats, mut w: W) -> Result<()> {
    writeln!(w, "i,j,p_ij,F,P")?;
    let n = stats.n();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    i + 1,
                    j + 1,
                    stats.order(i, j),
                    stats.f(i, j),
                    stats.p(i, j)
                )?;
            }
        }
    }
    Ok(())
}
