use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::moo::{ObjectiveVector, Orientation, PointSet};

/// Reads one objective vector per line. Blank lines are skipped.
pub fn read_points_csv(path: impl AsRef<Path>, orientation: Orientation) -> Result<PointSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_points_csv(&text, path, orientation)
}

pub fn parse_points_csv(text: &str, path: &Path, orientation: Orientation) -> Result<PointSet> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut points = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let values = raw
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("non-numeric field {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(parse_err(
                    line,
                    format!("ragged row: expected {w} fields, found {}", values.len()),
                ))
            }
            _ => {}
        }
        let v = ObjectiveVector::new(values, orientation).map_err(|e| parse_err(line, e.to_string()))?;
        points.push(v);
    }
    PointSet::new(points)
}
