//! Pareto dominance, nondominated filtering and hypervolume computation.
//!
//! Points carry their optimization orientation so that a set can never mix
//! minimized and maximized objectives. Internally every routine works on the
//! minimization form (maximized objectives are negated), which keeps the
//! hypervolume code single-orientation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest objective count accepted by [`hypervolume_exact`].
pub const EXACT_MAX_DIM: usize = 6;
/// Largest nondominated set size accepted by [`hypervolume_exact`].
pub const EXACT_MAX_POINTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Minimize,
    Maximize,
}

impl Orientation {
    fn sign(self) -> f64 {
        match self {
            Orientation::Minimize => 1.0,
            Orientation::Maximize => -1.0,
        }
    }
}

/// A point in objective space.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveVector {
    values: Vec<f64>,
    orientation: Orientation,
}

impl ObjectiveVector {
    pub fn new(values: Vec<f64>, orientation: Orientation) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        check_finite(&values)?;
        Ok(Self {
            values,
            orientation,
        })
    }

    pub fn minimize(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Orientation::Minimize)
    }

    pub fn maximize(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Orientation::Maximize)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn min_form(&self) -> Vec<f64> {
        let s = self.orientation.sign();
        self.values.iter().map(|v| s * v).collect()
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Returns true iff `a` is at least as good as `b` everywhere and strictly
/// better somewhere.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.orientation != b.orientation {
        return Err(Error::OrientationMismatch);
    }
    Ok(dominates_min(
        &a.min_form(),
        &b.min_form(),
    ))
}

/// Dominance on minimization-form slices of equal length.
fn dominates_min(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// A set of objective vectors with uniform length and orientation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    points: Vec<ObjectiveVector>,
}

impl PointSet {
    pub fn new(points: Vec<ObjectiveVector>) -> Result<Self> {
        if let Some(first) = points.first() {
            for p in &points[1..] {
                if p.len() != first.len() {
                    return Err(Error::DimensionMismatch {
                        expected: first.len(),
                        found: p.len(),
                    });
                }
                if p.orientation != first.orientation {
                    return Err(Error::OrientationMismatch);
                }
            }
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a set from raw rows sharing one orientation.
    pub fn from_rows(rows: Vec<Vec<f64>>, orientation: Orientation) -> Result<Self> {
        let points = rows
            .into_iter()
            .map(|r| ObjectiveVector::new(r, orientation))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn points(&self) -> &[ObjectiveVector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(ObjectiveVector::len)
    }

    pub fn orientation(&self) -> Option<Orientation> {
        self.points.first().map(ObjectiveVector::orientation)
    }

    /// Returns a new set with `p` appended.
    pub fn with_point(&self, p: ObjectiveVector) -> Result<Self> {
        let mut points = self.points.clone();
        points.push(p);
        Self::new(points)
    }
}

/// Keeps the points dominated by no other point of the set, in input order.
/// Equal points never dominate each other, so duplicates survive together.
pub fn pareto_filter(s: &PointSet) -> PointSet {
    let forms: Vec<Vec<f64>> = s.points.iter().map(ObjectiveVector::min_form).collect();
    let points = s
        .points
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            !forms
                .iter()
                .enumerate()
                .any(|(j, other)| j != *i && dominates_min(other, &forms[*i]))
        })
        .map(|(_, p)| p.clone())
        .collect();
    PointSet { points }
}

/// Corner bounding a hypervolume computation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    values: Vec<f64>,
}

impl ReferencePoint {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        check_finite(&values)?;
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Validates the reference point against the set and returns
/// (points, reference) in minimization form.
fn to_min_problem(s: &PointSet, r: &ReferencePoint) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let Some(orientation) = s.orientation() else {
        return Ok((Vec::new(), r.values.clone()));
    };
    let dim = r.values.len();
    let sign = orientation.sign();
    let reference: Vec<f64> = r.values.iter().map(|v| sign * v).collect();
    let mut points = Vec::with_capacity(s.len());
    for (index, p) in s.points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        let form = p.min_form();
        if form.iter().zip(&reference).any(|(x, r)| x > r) {
            return Err(Error::ReferenceNotDominated { index });
        }
        points.push(form);
    }
    Ok((points, reference))
}

/// Exact hypervolume of the region dominated by `s` and bounded by `r`.
///
/// Dominated points are removed first, so `hypervolume_exact(s)` and
/// `hypervolume_exact(pareto_filter(s))` perform the identical computation.
pub fn hypervolume_exact(s: &PointSet, r: &ReferencePoint) -> Result<f64> {
    let front = pareto_filter(s);
    let (points, reference) = to_min_problem(&front, r)?;
    if points.is_empty() {
        return Ok(0.0);
    }
    if reference.len() > EXACT_MAX_DIM || points.len() > EXACT_MAX_POINTS {
        return Err(Error::HypervolumeTooLarge {
            dim: reference.len(),
            points: points.len(),
            max_dim: EXACT_MAX_DIM,
            max_points: EXACT_MAX_POINTS,
        });
    }
    Ok(sweep(&points, &reference))
}

/// Slices the dominated region along the last objective and recurses on the
/// (d-1)-dimensional cross sections.
fn sweep(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let d = reference.len();
    if d == 1 {
        let best = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        return reference[0] - best;
    }
    let last = d - 1;
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    sorted.sort_by(|a, b| a[last].total_cmp(&b[last]));

    let mut volume = 0.0;
    let mut section: Vec<Vec<f64>> = Vec::with_capacity(sorted.len());
    for (i, p) in sorted.iter().enumerate() {
        section.push(p[..last].to_vec());
        let upper = sorted.get(i + 1).map_or(reference[last], |q| q[last]);
        let height = upper - p[last];
        if height > 0.0 {
            volume += sweep(&section, &reference[..last]) * height;
        }
    }
    volume
}

/// Monte-Carlo hypervolume estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Samples uniformly in the box between the best corner of `s` and `r` and
/// scales the dominated fraction by the box volume.
pub fn hypervolume_mc(
    s: &PointSet,
    r: &ReferencePoint,
    samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::invalid("hypervolume_mc needs at least one sample"));
    }
    let (points, reference) = to_min_problem(s, r)?;
    if points.is_empty() {
        return Ok(McEstimate {
            estimate: 0.0,
            stderr: 0.0,
        });
    }
    let dim = reference.len();
    let lower: Vec<f64> = (0..dim)
        .map(|j| points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let extent: Vec<f64> = reference.iter().zip(&lower).map(|(r, l)| r - l).collect();
    let box_volume: f64 = extent.iter().product();
    if box_volume == 0.0 {
        return Ok(McEstimate {
            estimate: 0.0,
            stderr: 0.0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = vec![0.0; dim];
    let mut hits: u64 = 0;
    for _ in 0..samples {
        for j in 0..dim {
            sample[j] = lower[j] + extent[j] * rng.random::<f64>();
        }
        if points
            .iter()
            .any(|p| p.iter().zip(&sample).all(|(x, z)| x <= z))
        {
            hits += 1;
        }
    }
    let n = samples as f64;
    let fraction = hits as f64 / n;
    Ok(McEstimate {
        estimate: fraction * box_volume,
        stderr: (fraction * (1.0 - fraction) / n).sqrt() * box_volume,
    })
}
