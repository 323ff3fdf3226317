//! Deterministic 2-D source and target distributions.
//!
//! Every sampler is a pure function of `(spec, n, seed)`. The `*_with`
//! variants draw from a caller-owned generator so that a training loop can
//! keep one stream alive across steps.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seeded_rng;

/// A batch of `n` points in `d` dimensions with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointBatch {
    data: Array2<f64>,
    labels: Option<Vec<usize>>,
}

impl PointBatch {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point batch contains NaN or inf".into()));
        }
        Ok(Self { data, labels: None })
    }

    pub fn with_labels(data: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != data.nrows() {
            return Err(invalid(format!(
                "{} labels for {} points",
                labels.len(),
                data.nrows()
            )));
        }
        let mut batch = Self::new(data)?;
        batch.labels = Some(labels);
        Ok(batch)
    }

    /// Builds a batch from row slices; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(invalid("ragged rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| invalid(e.to_string()))?;
        Self::new(data)
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    /// Keeps the rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> PointBatch {
        let data = self.data.select(ndarray::Axis(0), idx);
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect());
        PointBatch { data, labels }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    CircleUniform,
    GaussianIso,
}

/// The source distribution: a circle of fixed radius or an isotropic Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub radius_or_std: f64,
}

impl SourceSpec {
    pub fn new(kind: SourceKind, radius_or_std: f64) -> Result<Self> {
        let spec = Self {
            kind,
            radius_or_std,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn circle(radius: f64) -> Result<Self> {
        Self::new(SourceKind::CircleUniform, radius)
    }

    pub fn gaussian(std: f64) -> Result<Self> {
        Self::new(SourceKind::GaussianIso, std)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_or_std > 0.0 && self.radius_or_std.is_finite()) {
            return Err(invalid(format!(
                "source radius_or_std must be positive, got {}",
                self.radius_or_std
            )));
        }
        Ok(())
    }
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self {
            kind: SourceKind::CircleUniform,
            radius_or_std: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    LetterF,
    LetterM,
    TwoMoons,
    Checkerboard,
    GaussianIso,
}

impl DatasetName {
    fn supported_class_counts(self) -> &'static [usize] {
        match self {
            DatasetName::TwoMoons => &[0, 2],
            DatasetName::Checkerboard => &[0, 2, 4, 8],
            _ => &[0],
        }
    }
}

/// A 2-D target distribution.
///
/// `scale` multiplies the canonical geometry (for `gaussian_iso` it is the
/// standard deviation). `class_count = 0` means unconditional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub scale: f64,
    pub noise_std: f64,
    #[serde(default)]
    pub class_count: usize,
}

impl DatasetSpec {
    /// The default geometry for `name`.
    pub fn new(name: DatasetName) -> Self {
        let (scale, noise_std) = match name {
            DatasetName::TwoMoons => (1.0, 0.05),
            DatasetName::Checkerboard => (2.0, 0.0),
            DatasetName::LetterF | DatasetName::LetterM => (1.0, 0.0),
            DatasetName::GaussianIso => (1.0, 0.0),
        };
        Self {
            name,
            scale,
            noise_std,
            class_count: 0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_noise(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    pub fn with_classes(mut self, class_count: usize) -> Self {
        self.class_count = class_count;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(invalid(format!("dataset scale must be positive, got {}", self.scale)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid(format!(
                "dataset noise_std must be nonnegative, got {}",
                self.noise_std
            )));
        }
        if !self.name.supported_class_counts().contains(&self.class_count) {
            return Err(invalid(format!(
                "{:?} does not support class_count = {}",
                self.name, self.class_count
            )));
        }
        Ok(())
    }

    /// Analytic support membership for a noise-free sample.
    pub fn contains(&self, p: &[f64]) -> bool {
        const TOL: f64 = 1e-9;
        let (x, y) = (p[0] / self.scale, p[1] / self.scale);
        match self.name {
            DatasetName::LetterF => in_union(&letter_f_strokes(), x, y, TOL),
            DatasetName::LetterM => in_union(&letter_m_strokes(), x, y, TOL),
            DatasetName::TwoMoons => moon_arc_of(x, y, TOL).is_some(),
            DatasetName::Checkerboard => checker_cell_of(x, y).is_some(),
            DatasetName::GaussianIso => p.iter().all(|v| v.is_finite()),
        }
    }

    /// Re-derives the class label of a noise-free sample from its coordinates.
    pub fn label_of(&self, p: &[f64]) -> Option<usize> {
        if self.class_count == 0 {
            return None;
        }
        let (x, y) = (p[0] / self.scale, p[1] / self.scale);
        match self.name {
            DatasetName::TwoMoons => moon_arc_of(x, y, 1e-9),
            DatasetName::Checkerboard => checker_cell_of(x, y).map(|c| c % self.class_count),
            _ => None,
        }
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]` in canonical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        x >= self.x0 - tol && x <= self.x1 + tol && y >= self.y0 - tol && y <= self.y1 + tol
    }
}

/// Strokes of the letter F on `[-1, 1]²`.
pub fn letter_f_strokes() -> Vec<Rect> {
    vec![
        Rect::new(-0.6, -0.3, -1.0, 1.0),
        Rect::new(-0.6, 0.6, 0.7, 1.0),
        Rect::new(-0.6, 0.35, -0.05, 0.25),
    ]
}

/// Strokes of the letter M on `[-1, 1]²`: two uprights plus two diagonals,
/// each diagonal made of 8 stacked slabs running from the top inner corner
/// of an upright down to `(0, -0.2)`.
pub fn letter_m_strokes() -> Vec<Rect> {
    const HALF_WIDTH: f64 = 0.15;
    const SLABS: usize = 8;
    const Y_BOTTOM: f64 = -0.2;
    const Y_TOP: f64 = 1.0;
    const X_TOP: f64 = 0.6;

    let mut strokes = vec![
        Rect::new(-0.9, -0.6, -1.0, 1.0),
        Rect::new(0.6, 0.9, -1.0, 1.0),
    ];
    let h = (Y_TOP - Y_BOTTOM) / SLABS as f64;
    for k in 0..SLABS {
        let y0 = Y_BOTTOM + h * k as f64;
        let y1 = y0 + h;
        let mid = 0.5 * (y0 + y1);
        let cx = X_TOP * (mid - Y_BOTTOM) / (Y_TOP - Y_BOTTOM);
        strokes.push(Rect::new(-cx - HALF_WIDTH, -cx + HALF_WIDTH, y0, y1));
        strokes.push(Rect::new(cx - HALF_WIDTH, cx + HALF_WIDTH, y0, y1));
    }
    strokes
}

fn in_union(rects: &[Rect], x: f64, y: f64, tol: f64) -> bool {
    rects.iter().any(|r| r.contains(x, y, tol))
}

/// 0 = upper arc, 1 = lower arc.
fn moon_arc_of(x: f64, y: f64, tol: f64) -> Option<usize> {
    let upper = ((x * x + y * y).sqrt() - 1.0).abs() <= tol && y >= -tol;
    let (lx, ly) = (x - 1.0, y - 0.5);
    let lower = ((lx * lx + ly * ly).sqrt() - 1.0).abs() <= tol && ly <= tol;
    match (upper, lower) {
        (true, _) => Some(0),
        (false, true) => Some(1),
        _ => None,
    }
}

const CHECKER_CELLS: usize = 4;

/// Index of the black cell containing the canonical point, if any. Black
/// cells are numbered row-major from the bottom-left.
fn checker_cell_of(x: f64, y: f64) -> Option<usize> {
    // canonical board is [-1, 1]² (scale 1 here), cells of width 0.5
    let w = 2.0 / CHECKER_CELLS as f64;
    let i = ((x + 1.0) / w).floor();
    let j = ((y + 1.0) / w).floor();
    let n = CHECKER_CELLS as f64;
    if !(0.0..n).contains(&i) || !(0.0..n).contains(&j) {
        return None;
    }
    let (i, j) = (i as usize, j as usize);
    if (i + j) % 2 != 0 {
        return None;
    }
    Some((j * CHECKER_CELLS + i) / 2)
}

/// Lower-left corner (canonical coordinates) of black cell `k`.
fn checker_cell_origin(k: usize) -> (f64, f64) {
    let w = 2.0 / CHECKER_CELLS as f64;
    let j = (2 * k) / CHECKER_CELLS;
    let i = 2 * k - j * CHECKER_CELLS + (j % 2);
    (-1.0 + w * i as f64, -1.0 + w * j as f64)
}

const CHECKER_BLACK: usize = CHECKER_CELLS * CHECKER_CELLS / 2;

pub fn sample_source(spec: &SourceSpec, n: usize, seed: u64) -> PointBatch {
    sample_source_with(spec, n, &mut seeded_rng(seed))
}

pub fn sample_source_with<R: Rng + ?Sized>(spec: &SourceSpec, n: usize, rng: &mut R) -> PointBatch {
    let mut data = Array2::zeros((n, 2));
    for mut row in data.rows_mut() {
        match spec.kind {
            SourceKind::CircleUniform => {
                let theta = rng.random::<f64>() * std::f64::consts::TAU;
                row[0] = spec.radius_or_std * theta.cos();
                row[1] = spec.radius_or_std * theta.sin();
            }
            SourceKind::GaussianIso => {
                row[0] = spec.radius_or_std * Distribution::<f64>::sample(&StandardNormal, rng);
                row[1] = spec.radius_or_std * Distribution::<f64>::sample(&StandardNormal, rng);
            }
        }
    }
    PointBatch { data, labels: None }
}

pub fn sample_target(spec: &DatasetSpec, n: usize, seed: u64) -> PointBatch {
    sample_target_with(spec, n, &mut seeded_rng(seed))
}

/// Unconditional draw; labels are filled when `class_count > 0`.
pub fn sample_target_with<R: Rng + ?Sized>(spec: &DatasetSpec, n: usize, rng: &mut R) -> PointBatch {
    let mut data = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for mut row in data.rows_mut() {
        let (p, label) = draw_target(spec, None, rng);
        row[0] = p[0];
        row[1] = p[1];
        labels.push(label);
    }
    let labels = (spec.class_count > 0).then_some(labels);
    PointBatch { data, labels }
}

/// Draws one sample per requested label from the class-conditional target.
pub fn sample_target_for_labels<R: Rng + ?Sized>(
    spec: &DatasetSpec,
    labels: &[usize],
    rng: &mut R,
) -> Result<PointBatch> {
    if spec.class_count == 0 {
        return Err(invalid(format!("{:?} is unconditional", spec.name)));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= spec.class_count) {
        return Err(invalid(format!(
            "label {bad} out of range for {} classes",
            spec.class_count
        )));
    }
    let mut data = Array2::zeros((labels.len(), 2));
    for (mut row, &label) in data.rows_mut().into_iter().zip(labels) {
        let (p, _) = draw_target(spec, Some(label), rng);
        row[0] = p[0];
        row[1] = p[1];
    }
    PointBatch::with_labels(data, labels.to_vec())
}

fn draw_target<R: Rng + ?Sized>(
    spec: &DatasetSpec,
    class: Option<usize>,
    rng: &mut R,
) -> ([f64; 2], usize) {
    let (mut p, label) = match spec.name {
        DatasetName::LetterF => (draw_from_strokes(&letter_f_strokes(), rng), 0),
        DatasetName::LetterM => (draw_from_strokes(&letter_m_strokes(), rng), 0),
        DatasetName::TwoMoons => {
            let arc = class.unwrap_or_else(|| usize::from(rng.random::<bool>()));
            let theta = rng.random::<f64>() * std::f64::consts::PI;
            let p = if arc == 0 {
                [theta.cos(), theta.sin()]
            } else {
                [1.0 - theta.cos(), 0.5 - theta.sin()]
            };
            (p, arc)
        }
        DatasetName::Checkerboard => {
            let cell = match class {
                // cells k ≡ c (mod K) are equally many for K ∈ {2, 4, 8}
                Some(c) => {
                    let per_class = CHECKER_BLACK / spec.class_count;
                    c + spec.class_count * rng.random_range(0..per_class)
                }
                None => rng.random_range(0..CHECKER_BLACK),
            };
            let (ox, oy) = checker_cell_origin(cell);
            let w = 2.0 / CHECKER_CELLS as f64;
            let p = [ox + w * rng.random::<f64>(), oy + w * rng.random::<f64>()];
            (p, if spec.class_count > 0 { cell % spec.class_count } else { 0 })
        }
        DatasetName::GaussianIso => {
            let p = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
            (p, 0)
        }
    };
    for v in &mut p {
        *v *= spec.scale;
        if spec.noise_std > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            *v += spec.noise_std * z;
        }
    }
    (p, label)
}

fn draw_from_strokes<R: Rng + ?Sized>(strokes: &[Rect], rng: &mut R) -> [f64; 2] {
    let total: f64 = strokes.iter().map(Rect::area).sum();
    let mut pick = rng.random::<f64>() * total;
    let mut chosen = strokes[strokes.len() - 1];
    for r in strokes {
        if pick < r.area() {
            chosen = *r;
            break;
        }
        pick -= r.area();
    }
    [
        chosen.x0 + (chosen.x1 - chosen.x0) * rng.random::<f64>(),
        chosen.y0 + (chosen.y1 - chosen.y0) * rng.random::<f64>(),
    ]
}
