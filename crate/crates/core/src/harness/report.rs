//! Experiment reports: a flat table of rows plus verdicts that are pure
//! functions of that table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_text;

/// One table cell. Missing values serialize as empty CSV fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn num(&self) -> Option<f64> {
        match self {
            Self::Num(v) => Some(*v),
            _ => None,
        }
    }

    fn csv(&self) -> String {
        match self {
            Self::Num(v) => format!("{v:e}"),
            Self::Text(s) => s.clone(),
            Self::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Num(v as f64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Self::Text(v)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Append a row given as (column, value) pairs; unnamed columns stay empty.
    pub fn push(&mut self, cells: Vec<(&str, Cell)>) {
        let mut row = vec![Cell::Empty; self.columns.len()];
        for (name, v) in cells {
            let k = self.column(name).unwrap_or_else(|| panic!("unknown column {name}"));
            row[k] = v;
        }
        self.rows.push(row);
    }

    /// Numeric values of `column` over rows whose `filter` column equals the given text.
    pub fn values(&self, column: &str, filter: Option<&(String, String)>) -> Vec<Option<f64>> {
        let Some(c) = self.column(column) else { return Vec::new() };
        let f = filter.map(|(k, v)| (self.column(k), v));
        self.rows
            .iter()
            .filter(|r| match &f {
                None => true,
                Some((Some(k), v)) => r[*k] == Cell::Text((*v).clone()),
                Some((None, _)) => false,
            })
            .map(|r| r[c].num())
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.columns).map_err(err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::csv)).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    /// Inverse of `to_csv`: fields that parse as numbers become `Num`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let err = |e: csv::Error| {
            let line = e.position().map_or(1, |p| p.line() as usize);
            Error::Parse { line, msg: e.to_string() }
        };
        let columns = r.headers().map_err(err)?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(err)?;
            rows.push(
                rec.iter()
                    .map(|f| match f {
                        "" => Cell::Empty,
                        _ => f.parse::<f64>().map_or_else(|_| Cell::Text(f.to_string()), Cell::Num),
                    })
                    .collect(),
            );
        }
        Ok(Self { columns, rows })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduce {
    Max,
    Min,
    /// max / min of a positive column.
    Band,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Le(f64),
    Ge(f64),
    Within(f64, f64),
}

impl Cmp {
    pub fn holds(&self, v: f64) -> bool {
        match *self {
            Self::Le(b) => v <= b,
            Self::Ge(b) => v >= b,
            Self::Within(lo, hi) => v >= lo && v <= hi,
        }
    }
}

/// An asserted check: reduce one column (optionally filtered) and compare.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub column: String,
    pub filter: Option<(String, String)>,
    pub reduce: Reduce,
    pub cmp: Cmp,
    /// Name of the config tolerance the bound comes from.
    pub tolerance: String,
    #[serde(with = "nan_as_null")]
    pub measured: f64,
    pub passed: bool,
}

/// JSON has no NaN; a failed measurement is stored as null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl Verdict {
    /// Recompute the reduced value from `table`. Missing or non-finite
    /// entries, or an empty selection, give NaN and therefore a failure.
    pub fn measure(table: &Table, column: &str, filter: Option<&(String, String)>, reduce: Reduce) -> f64 {
        let vals = table.values(column, filter);
        if vals.is_empty() || vals.iter().any(|v| !v.is_some_and(f64::is_finite)) {
            return f64::NAN;
        }
        let vals: Vec<f64> = vals.into_iter().flatten().collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        match reduce {
            Reduce::Max => max,
            Reduce::Min => min,
            Reduce::Band if min > 0.0 => max / min,
            Reduce::Band => f64::NAN,
        }
    }

    pub fn evaluate(
        table: &Table,
        name: &str,
        column: &str,
        filter: Option<(&str, &str)>,
        reduce: Reduce,
        cmp: Cmp,
        tolerance: &str,
    ) -> Self {
        let filter = filter.map(|(k, v)| (k.to_string(), v.to_string()));
        let measured = Self::measure(table, column, filter.as_ref(), reduce);
        Self {
            name: name.into(),
            column: column.into(),
            filter,
            reduce,
            cmp,
            tolerance: tolerance.into(),
            measured,
            passed: measured.is_finite() && cmp.holds(measured),
        }
    }

    /// True when the stored outcome matches a recomputation from `table`.
    pub fn consistent_with(&self, table: &Table) -> bool {
        let m = Self::measure(table, &self.column, self.filter.as_ref(), self.reduce);
        let same = m == self.measured || (m.is_nan() && self.measured.is_nan());
        same && self.passed == (m.is_finite() && self.cmp.holds(m))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub title: String,
    pub table: Table,
    pub verdicts: Vec<Verdict>,
    /// Grid sizes, rule orders and other run parameters.
    pub fingerprint: BTreeMap<String, String>,
    /// Per-row failures that did not abort the run.
    pub errors: Vec<String>,
    pub wall_clock_s: f64,
}

/// JSON summary: everything but the row table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
    pub fingerprint: BTreeMap<String, String>,
    pub errors: Vec<String>,
    pub wall_clock_s: f64,
    pub rows: usize,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn summary_json(&self) -> Result<String> {
        let s = Summary {
            id: self.id.clone(),
            title: self.title.clone(),
            passed: self.passed(),
            verdicts: self.verdicts.clone(),
            fingerprint: self.fingerprint.clone(),
            errors: self.errors.clone(),
            wall_clock_s: self.wall_clock_s,
            rows: self.table.rows.len(),
        };
        serde_json::to_string_pretty(&s).map_err(|e| Error::Io(e.to_string()))
    }

    /// Reassemble a report from the files written by `write`.
    pub fn read(dir: &Path, id: &str) -> Result<Self> {
        let stem = id.to_lowercase();
        let load = |ext: &str| {
            let path = dir.join(format!("{stem}.{ext}"));
            std::fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        };
        let s: Summary =
            serde_json::from_str(&load("json")?).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
        let table = Table::from_csv(&load("csv")?)?;
        if table.rows.len() != s.rows {
            return Err(Error::LengthMismatch { expected: s.rows, got: table.rows.len() });
        }
        Ok(Self {
            id: s.id,
            title: s.title,
            table,
            verdicts: s.verdicts,
            fingerprint: s.fingerprint,
            errors: s.errors,
            wall_clock_s: s.wall_clock_s,
        })
    }

    /// True when every stored verdict matches a recomputation from the rows.
    pub fn consistent(&self) -> bool {
        self.verdicts.iter().all(|v| v.consistent_with(&self.table))
    }

    /// Write `<id>.csv`, `<id>.json` and any plot into `dir`; returns the paths.
    pub fn write(&self, dir: &Path, plot: Option<String>) -> Result<Vec<PathBuf>> {
        let stem = self.id.to_lowercase();
        let mut out = vec![dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.json"))];
        write_text(&out[0], &self.table.to_csv()?)?;
        write_text(&out[1], &self.summary_json()?)?;
        if let Some(svg) = plot {
            let p = dir.join(format!("{stem}.svg"));
            write_text(&p, &svg)?;
            out.push(p);
        }
        Ok(out)
    }

    /// One line per verdict, for terminals.
    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {}  ({:.1} s)", self.id, self.title, self.wall_clock_s).unwrap();
        for v in &self.verdicts {
            let mark = if v.passed { "PASS" } else { "FAIL" };
            writeln!(s, "  [{mark}] {}: {:e} vs {:?}", v.name, v.measured, v.cmp).unwrap();
        }
        for e in &self.errors {
            writeln!(s, "  error: {e}").unwrap();
        }
        s
    }
}

/// A log-log scatter plot with an optional fitted line, as a standalone SVG.
pub fn loglog_svg(title: &str, series: &[(&str, Vec<(f64, f64)>)], fit: Option<(f64, f64)>) -> String {
    let (w, h, m) = (480.0, 360.0, 50.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, lo + 1.0)
        }
    };
    let ((x0, x1), (y0, y1)) = (bounds(|p| p.0), bounds(|p| p.1));
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, w / 2.0).unwrap();
    writeln!(s, r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - 2.0 * m, h - 2.0 * m).unwrap();
    writeln!(s, r#"<text x="{m}" y="{}">1e{x0:.2}</text><text x="{}" y="{}" text-anchor="end">1e{x1:.2}</text>"#, h - m + 15.0, w - m, h - m + 15.0).unwrap();
    writeln!(s, r#"<text x="5" y="{}">1e{y0:.2}</text><text x="5" y="{}">1e{y1:.2}</text>"#, h - m, m + 10.0).unwrap();
    for (k, (name, v)) in series.iter().enumerate() {
        let c = colors[k % colors.len()];
        for &(x, y) in v.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0) {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(x.log10()), sy(y.log10())).unwrap();
        }
        writeln!(s, r#"<text x="{}" y="{}" fill="{c}">{name}</text>"#, w - m + 4.0, m + 14.0 * (k as f64 + 1.0)).unwrap();
    }
    if let Some((slope, icept)) = fit {
        let line = |x: f64| slope * x + icept;
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4"/>"#,
            sx(x0),
            sy(line(x0)),
            sx(x1),
            sy(line(x1))
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_recompute_from_rows() {
        let mut t = Table::new(&["kind", "a"]);
        t.push(vec![("kind", "x".into()), ("a", 2.0.into())]);
        t.push(vec![("kind", "x".into()), ("a", 8.0.into())]);
        t.push(vec![("kind", "y".into()), ("a", 100.0.into())]);
        let v = Verdict::evaluate(&t, "band", "a", Some(("kind", "x")), Reduce::Band, Cmp::Le(5.0), "band");
        assert_eq!(v.measured, 4.0);
        assert!(v.passed && v.consistent_with(&t));
        let w = Verdict::evaluate(&t, "max", "a", None, Reduce::Max, Cmp::Within(0.0, 50.0), "m");
        assert!(!w.passed && w.consistent_with(&t));
        t.push(vec![("kind", "x".into())]);
        assert!(!v.consistent_with(&t));
        let e = Verdict::evaluate(&t, "band", "a", Some(("kind", "x")), Reduce::Band, Cmp::Le(5.0), "band");
        assert!(e.measured.is_nan() && !e.passed);
        let none = Verdict::evaluate(&t, "none", "a", Some(("kind", "z")), Reduce::Max, Cmp::Le(1.0), "n");
        assert!(!none.passed);
    }

    #[test]
    fn csv_round_trips_numbers() {
        let mut t = Table::new(&["name", "v"]);
        t.push(vec![("name", "a,b".into()), ("v", 0.1.into())]);
        t.push(vec![("v", (1.0 / 3.0).into())]);
        let text = t.to_csv().unwrap();
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(&rows[0][0], "a,b");
        assert_eq!(rows[1][1].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(&rows[1][0], "");
        let back = Table::from_csv(&text).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn written_reports_read_back() {
        let mut t = Table::new(&["kind", "a"]);
        t.push(vec![("kind", "x".into()), ("a", 0.1.into())]);
        t.push(vec![("kind", "x".into()), ("a", f64::NAN.into())]);
        t.push(vec![("kind", "y".into()), ("a", 0.9999999999999987.into())]);
        let v = Verdict::evaluate(&t, "max", "a", Some(("kind", "x")), Reduce::Max, Cmp::Le(1.0), "m");
        let r = ExperimentReport {
            id: "EX".into(),
            title: "t".into(),
            table: t,
            verdicts: vec![v],
            fingerprint: BTreeMap::from([("k".into(), "v".into())]),
            errors: vec!["e".into()],
            wall_clock_s: 0.5,
        };
        let dir = std::env::temp_dir().join(format!("hb-report-{}", std::process::id()));
        r.write(&dir, None).unwrap();
        let back = ExperimentReport::read(&dir, "EX").unwrap();
        assert!(back.consistent() && !back.passed());
        let y = Verdict::evaluate(&back.table, "y", "a", Some(("kind", "y")), Reduce::Max, Cmp::Le(1.0), "m");
        let json = serde_json::to_string(&y).unwrap();
        assert_eq!(serde_json::from_str::<Verdict>(&json).unwrap(), y);
        assert_eq!(back.verdicts[0].name, "max");
        assert!(back.verdicts[0].measured.is_nan());
        assert_eq!((back.fingerprint, back.errors), (r.fingerprint, r.errors));
        std::fs::write(dir.join("ex.csv"), "kind,a\nx,0.1\nx,0.2\ny,0.5\n").unwrap();
        assert!(!ExperimentReport::read(&dir, "EX").unwrap().consistent());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
