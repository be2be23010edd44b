//! CSV and JSON readers and writers.
//!
//! Curve sets are stored wide (`r,obs,sim1,...,simS`), one grid value per
//! line. Envelopes are written as `index,arg,lower,central,upper,observed`
//! with empty fields for unbounded sides. Floats are printed with the
//! shortest representation that reads back to the same value.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::combined::{CurveSet, PartInfo};
use crate::envelope::{GlobalEnvelope, RankTestResult};
use crate::error::{Error, Result};
use crate::fanova::GroupedCurveSet;
use crate::rank::Side;
use crate::spatial::{PointPattern, Window};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?)
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

fn field_f64(path: &Path, rec: &csv::StringRecord, i: usize, col: &str) -> Result<f64> {
    let line = line_of(rec);
    let raw = rec.get(i).ok_or_else(|| parse_err(path, line, format!("missing column `{col}`")))?;
    let v: f64 = raw.parse().map_err(|_| parse_err(path, line, format!("`{raw}` in column `{col}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value in column `{col}`")));
    }
    Ok(v)
}

fn headers(path: &Path, rd: &mut csv::Reader<File>) -> Result<Vec<String>> {
    let h = rd.headers().map_err(|e| parse_err(path, 1, e.to_string()))?;
    Ok(h.iter().map(|s| s.to_ascii_lowercase()).collect())
}

/// Reads a wide curve-set CSV: the first column is the grid, the next the
/// observed curve, the rest simulations.
pub fn read_curve_set(path: &Path, name: &str, side: Side) -> Result<CurveSet> {
    let mut rd = reader(path)?;
    let head = headers(path, &mut rd)?;
    if head.len() < 3 {
        return Err(parse_err(path, 1, "expected columns r, obs and at least one simulation"));
    }
    let n = head.len() - 1;
    let mut args = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); n];
    for rec in rd.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        if rec.len() != head.len() {
            return Err(parse_err(path, line_of(&rec), format!("expected {} fields, found {}", head.len(), rec.len())));
        }
        args.push(field_f64(path, &rec, 0, &head[0])?);
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(field_f64(path, &rec, c + 1, &head[c + 1])?);
        }
    }
    if args.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    CurveSet::new(name, args, cols, side)
}

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

pub fn write_curve_set(path: &Path, c: &CurveSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["r".to_string(), "obs".to_string()];
    head.extend((1..=c.nsim()).map(|i| format!("sim{i}")));
    w.write_record(&head)?;
    for (j, a) in c.args().iter().enumerate() {
        let mut row = vec![fmt_f64(*a)];
        row.extend((0..=c.nsim()).map(|i| fmt_f64(c.curve(i)[j])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `r` followed by one column per named curve.
pub fn write_summary_csv(path: &Path, grid: &[f64], names: &[String], curves: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["r".to_string()];
    head.extend(names.iter().cloned());
    w.write_record(&head)?;
    for (j, r) in grid.iter().enumerate() {
        let mut row = vec![fmt_f64(*r)];
        row.extend(curves.iter().map(|c| fmt_f64(c[j])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row of an envelope file.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeRow {
    pub index: usize,
    pub arg: f64,
    pub lower: f64,
    pub central: f64,
    pub upper: f64,
    pub observed: f64,
}

pub fn envelope_rows(args: &[f64], env: &GlobalEnvelope, central: &[f64], observed: &[f64]) -> Vec<EnvelopeRow> {
    (0..args.len())
        .map(|j| EnvelopeRow {
            index: j,
            arg: args[j],
            lower: env.lower[j],
            central: central[j],
            upper: env.upper[j],
            observed: observed[j],
        })
        .collect()
}

pub fn write_envelope_csv(path: &Path, rows: &[EnvelopeRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "arg", "lower", "central", "upper", "observed"])?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            fmt_f64(r.arg),
            fmt_f64(r.lower),
            fmt_f64(r.central),
            fmt_f64(r.upper),
            fmt_f64(r.observed),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_envelope_csv(path: &Path) -> Result<Vec<EnvelopeRow>> {
    let mut rd = reader(path)?;
    let head = headers(path, &mut rd)?;
    if head != ["index", "arg", "lower", "central", "upper", "observed"] {
        return Err(parse_err(path, 1, "expected header index,arg,lower,central,upper,observed"));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let bound = |i: usize, inf: f64| -> Result<f64> {
            match rec.get(i) {
                Some("") => Ok(inf),
                _ => field_f64(path, &rec, i, &head[i]),
            }
        };
        out.push(EnvelopeRow {
            index: rec
                .get(0)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| parse_err(path, line, "bad index"))?,
            arg: field_f64(path, &rec, 1, "arg")?,
            lower: bound(2, f64::NEG_INFINITY)?,
            central: field_f64(path, &rec, 3, "central")?,
            upper: bound(4, f64::INFINITY)?,
            observed: field_f64(path, &rec, 5, "observed")?,
        });
    }
    Ok(out)
}

/// Scalar summary written as `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub p_minus: f64,
    pub p_plus: f64,
    pub p_erc: f64,
    pub decision: crate::envelope::Decision,
    pub alpha: f64,
    pub s: usize,
    pub observed_rank: f64,
    pub critical_rank: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<PartInfo>,
}

impl ResultSummary {
    pub fn new(r: &RankTestResult, parts: Vec<PartInfo>) -> Self {
        ResultSummary {
            p_minus: r.p_interval.p_minus,
            p_plus: r.p_interval.p_plus,
            p_erc: r.p_erc,
            decision: r.decision,
            alpha: r.alpha,
            s: r.nsim,
            observed_rank: r.observed_rank,
            critical_rank: r.envelope.critical_rank,
            parts,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

/// Reads `group,curve_id,r,value[,weight]` in long format. Curves are keyed
/// by `(group, curve_id)` and kept in order of first appearance; every curve
/// must cover the same grid in the same order. A weight column, if present,
/// must be constant within each curve and is only used when `use_weights`.
pub fn read_grouped_csv(path: &Path, use_weights: bool) -> Result<GroupedCurveSet> {
    let mut rd = reader(path)?;
    let head = headers(path, &mut rd)?;
    let expect = ["group", "curve_id", "r", "value"];
    if head.len() < 4 || head[..4] != expect || head.len() > 5 || (head.len() == 5 && head[4] != "weight") {
        return Err(parse_err(path, 1, "expected header group,curve_id,r,value[,weight]"));
    }
    let has_weight = head.len() == 5;
    if use_weights && !has_weight {
        return Err(parse_err(path, 1, "weights requested but there is no weight column"));
    }
    let mut keys: Vec<(String, String)> = Vec::new();
    let mut curves: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != head.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", head.len(), rec.len())));
        }
        let key = (rec[0].to_string(), rec[1].to_string());
        let r = field_f64(path, &rec, 2, "r")?;
        let v = field_f64(path, &rec, 3, "value")?;
        let w = if has_weight { field_f64(path, &rec, 4, "weight")? } else { 1.0 };
        let idx = match keys.iter().position(|k| *k == key) {
            Some(i) => {
                if weights[i] != w {
                    return Err(parse_err(path, line, format!("weight changes within curve {}/{}", key.0, key.1)));
                }
                i
            }
            None => {
                keys.push(key);
                curves.push(Vec::new());
                weights.push(w);
                keys.len() - 1
            }
        };
        curves[idx].push((r, v));
    }
    let first = curves.first().ok_or_else(|| parse_err(path, 2, "no data rows"))?;
    let args: Vec<f64> = first.iter().map(|p| p.0).collect();
    for (c, k) in curves.iter().zip(&keys) {
        if c.len() != args.len() || c.iter().zip(&args).any(|(p, a)| p.0 != *a) {
            return Err(Error::MismatchedGrid { part: format!("{}/{}", k.0, k.1), expected: args.len(), found: c.len() });
        }
    }
    let labels: Vec<String> = keys.iter().map(|k| k.0.clone()).collect();
    let values = curves.into_iter().map(|c| c.into_iter().map(|p| p.1).collect()).collect();
    GroupedCurveSet::new(args, values, &labels, use_weights.then_some(weights))
}

pub fn write_grouped_csv(path: &Path, g: &GroupedCurveSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let weighted = g.is_weighted();
    let mut head = vec!["group", "curve_id", "r", "value"];
    if weighted {
        head.push("weight");
    }
    w.write_record(&head)?;
    for i in 0..g.ncurves() {
        for (a, v) in g.args().iter().zip(g.curve(i)) {
            let mut row = vec![g.labels()[g.groups()[i]].clone(), i.to_string(), fmt_f64(*a), fmt_f64(*v)];
            if weighted {
                row.push(fmt_f64(g.weight(i)));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Deserialize)]
struct PatternRow {
    x: f64,
    y: f64,
    mark: Option<u32>,
}

/// Reads `x,y[,mark]` with the window from a JSON sidecar.
pub fn read_pattern(path: &Path, window_path: &Path) -> Result<PointPattern> {
    let window: Window = read_json(window_path)?;
    window.validate()?;
    let mut rd = reader(path)?;
    let head = headers(path, &mut rd)?;
    if head.len() < 2 || head[0] != "x" || head[1] != "y" || (head.len() == 3 && head[2] != "mark") || head.len() > 3 {
        return Err(parse_err(path, 1, "expected header x,y[,mark]"));
    }
    let mut points = Vec::new();
    let mut marks = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let row: PatternRow = rec.deserialize(Some(&csv::StringRecord::from(head.clone()))).map_err(|e| parse_err(path, line, e.to_string()))?;
        let p = [row.x, row.y];
        if !(p[0].is_finite() && p[1].is_finite()) || !window.contains(p) {
            return Err(parse_err(path, line, format!("point ({}, {}) outside the window", p[0], p[1])));
        }
        points.push(p);
        if head.len() == 3 {
            marks.push(row.mark.ok_or_else(|| parse_err(path, line, "missing mark"))?);
        }
    }
    PointPattern::new(points, window, (head.len() == 3).then_some(marks))
}

pub fn write_pattern(path: &Path, window_path: &Path, p: &PointPattern) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match p.marks() {
        Some(m) => {
            w.write_record(["x", "y", "mark"])?;
            for (q, k) in p.points().iter().zip(m) {
                w.write_record([fmt_f64(q[0]), fmt_f64(q[1]), k.to_string()])?;
            }
        }
        None => {
            w.write_record(["x", "y"])?;
            for q in p.points() {
                w.write_record([fmt_f64(q[0]), fmt_f64(q[1])])?;
            }
        }
    }
    w.flush()?;
    write_json(window_path, p.window())
}
