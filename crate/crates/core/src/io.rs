//! Columnar text files for sampled functions and corpus manifests.
//!
//! A function file holds `# key value` header lines followed by one
//! `x1 x2 value` triple per node; 1D files omit the x2 column.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::atoms::{CorpusItem, CorpusKind, DyadicRect};
use crate::error::{Error, Result};
use crate::geometry::{BesselParam, RadialGrid};
use crate::operators::{SampledFunction1D, SampledFunction2D};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Serialize with shortest round-trip decimals.
pub fn format_function_2d(f: &SampledFunction2D) -> String {
    let mut s = String::new();
    writeln!(s, "# lambda {}", f.grid1.lambda()).unwrap();
    writeln!(s, "# shape {} {}", f.grid1.len(), f.grid2.len()).unwrap();
    for (i, x1) in f.grid1.nodes().iter().enumerate() {
        for (j, x2) in f.grid2.nodes().iter().enumerate() {
            writeln!(s, "{x1:e} {x2:e} {:e}", f.values[(i, j)]).unwrap();
        }
    }
    s
}

pub fn format_function_1d(f: &SampledFunction1D) -> String {
    let mut s = String::new();
    writeln!(s, "# lambda {}", f.grid.lambda()).unwrap();
    writeln!(s, "# shape {}", f.grid.len()).unwrap();
    for (x, v) in f.grid.nodes().iter().zip(&f.values) {
        writeln!(s, "{x:e} {v:e}").unwrap();
    }
    s
}

/// Either dimensionality, as read from a file.
#[derive(Clone, Debug)]
pub enum Sampled {
    One(SampledFunction1D),
    Two(SampledFunction2D),
}

impl Sampled {
    pub fn lambda(&self) -> f64 {
        match self {
            Self::One(f) => f.grid.lambda(),
            Self::Two(f) => f.grid1.lambda(),
        }
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse { line, msg: format!("not a number: {tok:?}") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite value {tok:?}") });
    }
    Ok(v)
}

/// Parse a function file; λ comes from the header unless `lambda` overrides it.
pub fn parse_function(text: &str, lambda: Option<f64>) -> Result<Sampled> {
    let mut header_lambda = None;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(h) = t.strip_prefix('#') {
            let mut it = h.split_whitespace();
            if it.next() == Some("lambda") {
                let v = it.next().ok_or(Error::Parse { line, msg: "lambda header without value".into() })?;
                header_lambda = Some(parse_f64(v, line)?);
            }
            continue;
        }
        let vals = t.split_whitespace().map(|tok| parse_f64(tok, line)).collect::<Result<Vec<_>>>()?;
        if vals.len() != 2 && vals.len() != 3 {
            return Err(Error::Parse { line, msg: format!("expected 2 or 3 columns, found {}", vals.len()) });
        }
        if let Some((l0, first)) = rows.first() {
            if first.len() != vals.len() {
                return Err(Error::Parse { line, msg: format!("column count differs from line {l0}") });
            }
        }
        rows.push((line, vals));
    }
    let last_line = text.lines().count().max(1);
    if rows.is_empty() {
        return Err(Error::Parse { line: last_line, msg: "no data rows".into() });
    }
    let lam = lambda.or(header_lambda).ok_or(Error::Parse { line: 1, msg: "missing '# lambda' header".into() })?;
    let p = BesselParam::new(lam)?;
    let axis = |col: usize| -> Vec<f64> {
        let mut v: Vec<f64> = rows.iter().map(|r| r.1[col]).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    };
    let index = |nodes: &[f64], x: f64| nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()).unwrap();
    let grid_of = |nodes: Vec<f64>| -> Result<Arc<RadialGrid>> {
        RadialGrid::from_nodes(&p, nodes).map(Arc::new).map_err(|e| Error::Parse { line: rows[0].0, msg: e.to_string() })
    };
    if rows[0].1.len() == 2 {
        let n1 = axis(0);
        let mut values = vec![None; n1.len()];
        for (line, r) in &rows {
            let i = index(&n1, r[0]);
            if values[i].replace(r[1]).is_some() {
                return Err(Error::Parse { line: *line, msg: format!("duplicate node {}", r[0]) });
            }
        }
        let values = values.into_iter().map(|v| v.unwrap()).collect();
        return Ok(Sampled::One(SampledFunction1D::new(grid_of(n1)?, values)?));
    }
    let (n1, n2) = (axis(0), axis(1));
    let mut values: Array2<Option<f64>> = Array2::from_elem((n1.len(), n2.len()), None);
    for (line, r) in &rows {
        let (i, j) = (index(&n1, r[0]), index(&n2, r[1]));
        if values[(i, j)].replace(r[2]).is_some() {
            return Err(Error::Parse { line: *line, msg: format!("duplicate node ({}, {})", r[0], r[1]) });
        }
    }
    if let Some(((i, j), _)) = values.indexed_iter().find(|(_, v)| v.is_none()) {
        return Err(Error::Parse {
            line: last_line,
            msg: format!("node ({}, {}) missing from the tensor grid", n1[i], n2[j]),
        });
    }
    let values = values.mapv(|v| v.unwrap());
    Ok(Sampled::Two(SampledFunction2D::new(grid_of(n1)?, grid_of(n2)?, values)?))
}

pub fn read_function(path: &Path, lambda: Option<f64>) -> Result<Sampled> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_function(&text, lambda)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Corpus manifest entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub index: usize,
    pub kind: CorpusKind,
    pub label: String,
    pub file: String,
    pub rects: Vec<DyadicRect>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub count: usize,
    pub lambda: f64,
    pub exponent: f64,
    pub grid: BTreeMap<String, f64>,
    pub items: Vec<ManifestItem>,
}

/// Write one file per corpus item plus `manifest.json` into `dir`.
pub fn write_corpus(dir: &Path, items: &[CorpusItem], seed: u64, exponent: f64) -> Result<Manifest> {
    let first = items.first().ok_or_else(|| Error::InvalidParameter("empty corpus".into()))?;
    let g = &first.function.grid1;
    let (lo, hi) = g.span();
    let grid = BTreeMap::from([("lo".to_string(), lo), ("hi".to_string(), hi), ("count".to_string(), g.len() as f64)]);
    let mut entries = Vec::with_capacity(items.len());
    for it in items {
        let file = format!("f{:03}.txt", it.index);
        write_text(&dir.join(&file), &format_function_2d(&it.function))?;
        entries.push(ManifestItem { index: it.index, kind: it.kind, label: it.label.clone(), file, rects: it.rects.clone() });
    }
    let manifest = Manifest { seed, count: items.len(), lambda: g.lambda(), exponent, grid, items: entries };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    write_text(&dir.join("manifest.json"), &json)?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })
}
