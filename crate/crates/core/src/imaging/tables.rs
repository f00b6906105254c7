//! Text tables: point files, trajectory logs and loss curves.
//!
//! All tables are comma-separated UTF-8 with a header row and LF line
//! endings. Reals are written with Rust's shortest round-trip formatting, so
//! parsing a written table recovers every value exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::PointSet;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn records(text: &str) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let rows = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Parse(e.to_string()))?;
    Ok((header, rows))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec
        .get(i)
        .ok_or_else(|| Error::Parse(format!("row {line}: missing column {i}")))?;
    raw.parse()
        .map_err(|_| Error::Parse(format!("row {line}: cannot parse `{raw}`")))
}

/// Serializes points with header `x,y,r,g,b` (RGB) or `x,y,v` (grayscale).
pub fn points_to_string(ps: &PointSet) -> String {
    let mut out = String::from(match ps.channels {
        1 => "x,y,v\n",
        _ => "x,y,r,g,b\n",
    });
    for (i, p) in ps.positions.iter().enumerate() {
        let _ = write!(out, "{},{}", p[0], p[1]);
        for c in ps.color(i) {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

/// Parses and validates a point table.
pub fn points_from_str(text: &str) -> Result<PointSet> {
    let (header, rows) = records(text)?;
    let channels = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["x", "y", "r", "g", "b"] => 3,
        ["x", "y", "v"] => 1,
        _ => {
            return Err(Error::Parse(format!(
                "expected header `x,y,r,g,b` or `x,y,v`, got `{}`",
                header.join(",")
            )))
        }
    };
    let mut positions = Vec::with_capacity(rows.len());
    let mut colors = Vec::with_capacity(rows.len() * channels);
    for (line, rec) in rows.iter().enumerate() {
        if rec.len() != 2 + channels {
            return Err(Error::Parse(format!(
                "row {}: expected {} columns, got {}",
                line + 1,
                2 + channels,
                rec.len()
            )));
        }
        positions.push([field(rec, 0, line + 1)?, field(rec, 1, line + 1)?]);
        for k in 0..channels {
            colors.push(field(rec, 2 + k, line + 1)?);
        }
    }
    PointSet::new(positions, colors, channels)
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointSet> {
    let path = path.as_ref();
    points_from_str(&read_text(path)?).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_points(ps: &PointSet, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &points_to_string(ps))
}

/// One logged point position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub point: usize,
    pub x: f64,
    pub y: f64,
    /// Loss of the whole configuration at this step.
    pub loss: f64,
}

/// Point positions over the course of an optimization run, with header
/// `step,point_index,x,y,loss`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryLog {
    /// Appends one row per point for `step`.
    pub fn record(&mut self, step: usize, positions: &[[f64; 2]], loss: f64) {
        debug_assert!(self.rows.last().map_or(true, |r| r.step <= step));
        self.rows.extend(
            positions
                .iter()
                .enumerate()
                .map(|(point, p)| TrajectoryRow {
                    step,
                    point,
                    x: p[0],
                    y: p[1],
                    loss,
                }),
        );
    }

    pub fn steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = self.rows.iter().map(|r| r.step).collect();
        steps.dedup();
        steps
    }

    /// Rows logged at `step`, in point order.
    pub fn at_step(&self, step: usize) -> Vec<TrajectoryRow> {
        self.rows
            .iter()
            .filter(|r| r.step == step)
            .copied()
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,point_index,x,y,loss\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.step, r.point, r.x, r.y, r.loss);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (header, rows) = records(text)?;
        if header != ["step", "point_index", "x", "y", "loss"] {
            return Err(Error::Parse(format!(
                "unexpected trajectory header `{}`",
                header.join(",")
            )));
        }
        let rows = rows
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                Ok(TrajectoryRow {
                    step: field(rec, 0, i + 1)?,
                    point: field(rec, 1, i + 1)?,
                    x: field(rec, 2, i + 1)?,
                    y: field(rec, 3, i + 1)?,
                    loss: field(rec, 4, i + 1)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.windows(2).any(|w| w[1].step < w[0].step) {
            return Err(Error::Parse("trajectory steps decrease".into()));
        }
        Ok(TrajectoryLog { rows })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_csv())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&read_text(path.as_ref())?)
    }
}

/// `(step, loss)` pairs with header `step,loss`.
pub fn loss_curve_to_csv(curve: &[(usize, f64)]) -> String {
    let mut out = String::from("step,loss\n");
    for (step, loss) in curve {
        let _ = writeln!(out, "{step},{loss}");
    }
    out
}

pub fn loss_curve_from_csv(text: &str) -> Result<Vec<(usize, f64)>> {
    let (header, rows) = records(text)?;
    if header != ["step", "loss"] {
        return Err(Error::Parse(format!(
            "unexpected loss header `{}`",
            header.join(",")
        )));
    }
    rows.iter()
        .enumerate()
        .map(|(i, rec)| Ok((field(rec, 0, i + 1)?, field(rec, 1, i + 1)?)))
        .collect()
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn point_table_round_trips_exactly(
            pts in prop::collection::vec(((-1e6..1e6f64), (-1e6..1e6f64), (0.0..=1.0f64), (0.0..=1.0f64), (0.0..=1.0f64)), 1..40))
        {
            let positions = pts.iter().map(|p| [p.0, p.1]).collect();
            let colors = pts.iter().flat_map(|p| [p.2, p.3, p.4]).collect();
            let ps = PointSet::new(positions, colors, 3).unwrap();
            let back = points_from_str(&points_to_string(&ps)).unwrap();
            prop_assert_eq!(back, ps);
        }
    }
}
