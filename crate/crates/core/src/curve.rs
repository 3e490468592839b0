//! Uniform time grids and functions sampled on them.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points `t_i = i·step` for `i = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    step: f64,
    n_points: usize,
}

impl TimeGrid {
    pub fn new(step: f64, n_points: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid("step", format!("must be positive, got {step}")));
        }
        if n_points < 2 {
            return Err(Error::invalid("n_points", format!("need at least 2, got {n_points}")));
        }
        Ok(TimeGrid { step, n_points })
    }

    /// Grid from 0 to `t_max` inclusive. `t_max` is rounded to a whole number of steps.
    pub fn with_horizon(step: f64, t_max: f64) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::invalid("t_max", format!("must be positive, got {t_max}")));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid("step", format!("must be positive, got {step}")));
        }
        let intervals = (t_max / step).round();
        if !(1.0..=1e8).contains(&intervals) {
            return Err(Error::invalid(
                "step",
                format!("t_max/step = {} gives an unusable number of points", t_max / step),
            ));
        }
        TimeGrid::new(step, intervals as usize + 1)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.t(self.n_points - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.t(i))
    }

    /// Smallest index `i` with `t_i ≥ t` (may equal `n_points`).
    pub fn first_index_at_or_after(&self, t: f64) -> usize {
        let mut i = (t / self.step).ceil().max(0.0) as usize;
        while i > 0 && self.t(i - 1) >= t {
            i -= 1;
        }
        while self.t(i) < t {
            i += 1;
        }
        i.min(self.n_points)
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_points == other.n_points && self.step == other.step
    }
}

/// A function sampled on a [`TimeGrid`], with optional pointwise standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    grid: TimeGrid,
    values: Vec<f64>,
    stderr: Option<Vec<f64>>,
    warnings: Vec<String>,
}

impl Curve {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.n_points()
            )));
        }
        Ok(Curve {
            grid,
            values,
            stderr: None,
            warnings: Vec::new(),
        })
    }

    pub fn with_stderr(grid: TimeGrid, values: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        if stderr.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "{} standard errors for {} values",
                stderr.len(),
                values.len()
            )));
        }
        if stderr.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::invalid("stderr", "standard errors must be nonnegative"));
        }
        let mut curve = Curve::new(grid, values)?;
        curve.stderr = Some(stderr);
        Ok(curve)
    }

    /// Samples `f` on every grid point.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.times().map(f).collect();
        Curve {
            grid,
            values,
            stderr: None,
            warnings: Vec::new(),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stderr(&self) -> Option<&[f64]> {
        self.stderr.as_deref()
    }

    pub fn value_at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn push_warning(&mut self, warning: impl Into<String>) {
        self.warnings.push(warning.into());
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.times().zip(self.values.iter().copied())
    }

    /// Writes `t,value[,stderr]` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut headers = vec!["t", "value"];
        let mut columns: Vec<&[f64]> = vec![&self.values];
        if let Some(se) = &self.stderr {
            headers.push("stderr");
            columns.push(se);
        }
        write_table(path, &self.grid, &headers[1..], &columns)
    }

    /// Reads a curve written by [`Curve::write_csv`] or any CSV whose first
    /// column is a uniform time grid; the second column becomes the values and
    /// a column named `stderr`, when present, the standard errors.
    pub fn read_csv(path: &Path) -> Result<Self> {
        Curve::read_csv_column(path, None)
    }

    /// Like [`Curve::read_csv`], taking the values from the named column.
    pub fn read_csv_column(path: &Path, column: Option<&str>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::parse(&path.display().to_string(), "empty file"))?
            .split(',')
            .map(str::trim)
            .collect();
        if header.len() < 2 || header[0] != "t" {
            return Err(Error::parse(&header.join(","), "header must start with `t,`"));
        }
        let value_col = match column {
            None => 1,
            Some(name) => header
                .iter()
                .position(|h| *h == name)
                .filter(|&c| c > 0)
                .ok_or_else(|| Error::parse(&header.join(","), format!("no column named `{name}`")))?,
        };
        let se_col = header.iter().position(|h| *h == "stderr");
        let (mut ts, mut vs, mut ses) = (Vec::new(), Vec::new(), Vec::new());
        for line in lines {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != header.len() {
                return Err(Error::parse(line, format!("expected {} columns", header.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("`{s}` is not a number")))
            };
            ts.push(num(cells[0])?);
            vs.push(num(cells[value_col])?);
            if let Some(c) = se_col {
                ses.push(num(cells[c])?);
            }
        }
        if ts.len() < 2 {
            return Err(Error::parse(&path.display().to_string(), "need at least two rows"));
        }
        let step = ts[1] - ts[0];
        let grid = TimeGrid::new(step, ts.len())?;
        for (i, t) in ts.iter().enumerate() {
            if (t - grid.t(i)).abs() > 1e-9 * step.max(grid.t(i)) {
                return Err(Error::parse(
                    &path.display().to_string(),
                    format!("row {i}: t = {t} is off the uniform grid"),
                ));
            }
        }
        if se_col.is_some() {
            Curve::with_stderr(grid, vs, ses)
        } else {
            Curve::new(grid, vs)
        }
    }
}

/// Formats a double with 17 significant digits.
pub fn format_full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `path` atomically: a sibling temporary file is filled, flushed, then renamed.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("output", format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Writes a CSV whose first column is `t` followed by one column per `headers` entry.
pub fn write_table(path: &Path, grid: &TimeGrid, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    assert_eq!(headers.len(), columns.len());
    for c in columns {
        if c.len() != grid.n_points() {
            return Err(Error::GridMismatch(format!(
                "column of {} values for a grid of {} points",
                c.len(),
                grid.n_points()
            )));
        }
    }
    let mut out = String::with_capacity(grid.n_points() * 24 * (columns.len() + 1));
    out.push('t');
    for h in headers {
        out.push(',');
        out.push_str(h);
    }
    out.push('\n');
    for i in 0..grid.n_points() {
        out.push_str(&format_full(grid.t(i)));
        for c in columns {
            out.push(',');
            out.push_str(&format_full(c[i]));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}
