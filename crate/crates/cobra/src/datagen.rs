//! Seeded synthetic datasets and CSV ingestion.
//!
//! Regression generators follow the usual textbook definitions:
//!
//! * linear-gaussian: `X ~ N(0, I)`, `y = Xw + σε`, with the first `⌈d/2⌉`
//!   coefficients drawn from `U[0, 100]` and the rest zero
//! * friedman1: `X ~ U[0,1]^d`,
//!   `y = 10 sin(π x₁x₂) + 20 (x₃ - ½)² + 10 x₄ + 5 x₅ + σε`
//! * sparse-uncorrelated: `X ~ N(0, I)`, `y = x₁ + 2x₂ - 2x₃ - 1.5x₄ + σε`
//!
//! Classification generators are two-dimensional (blobs use `d`) with labels
//! `0` and `1` split evenly: interleaving half-moons, concentric circles with
//! radius ratio ½, and two gaussian blobs centred at `∓2` on every axis.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{rng_from_seed, Dataset};
use crate::error::{CobraError, Result};
use crate::machines::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    LinearGaussian,
    Friedman1,
    SparseUncorrelated,
    Moons,
    Circles,
    LinearlySeparable,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 6] = [
        GeneratorKind::LinearGaussian,
        GeneratorKind::Friedman1,
        GeneratorKind::SparseUncorrelated,
        GeneratorKind::Moons,
        GeneratorKind::Circles,
        GeneratorKind::LinearlySeparable,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GeneratorKind::LinearGaussian => "linear-gaussian",
            GeneratorKind::Friedman1 => "friedman1",
            GeneratorKind::SparseUncorrelated => "sparse-uncorrelated",
            GeneratorKind::Moons => "moons",
            GeneratorKind::Circles => "circles",
            GeneratorKind::LinearlySeparable => "linearly-separable",
        }
    }

    pub fn task(&self) -> Task {
        match self {
            GeneratorKind::LinearGaussian | GeneratorKind::Friedman1 | GeneratorKind::SparseUncorrelated => {
                Task::Regression
            }
            _ => Task::Classification,
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeneratorKind {
    type Err = CobraError;

    fn from_str(s: &str) -> Result<Self> {
        GeneratorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CobraError::InvalidParameter(format!("unknown generator `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    /// Feature count; ignored by moons and circles, which are planar.
    #[serde(default = "default_dimension")]
    pub d: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_dimension() -> usize {
    10
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n: usize, d: usize, noise: f64, seed: u64) -> Self {
        Self { kind, n, d, noise, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CobraError::InvalidParameter(msg));
        if self.n == 0 {
            return fail("sample count must be at least 1".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail(format!("noise {} must be finite and >= 0", self.noise));
        }
        match self.kind {
            GeneratorKind::Friedman1 if self.d < 5 => fail(format!("friedman1 needs d >= 5, got {}", self.d)),
            GeneratorKind::SparseUncorrelated if self.d < 4 => {
                fail(format!("sparse-uncorrelated needs d >= 4, got {}", self.d))
            }
            GeneratorKind::LinearGaussian | GeneratorKind::LinearlySeparable if self.d == 0 => {
                fail("dimension must be at least 1".into())
            }
            _ => Ok(()),
        }
    }
}

/// Noise-free Friedman #1 response.
pub fn friedman1_response(x: &[f64]) -> f64 {
    10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
}

/// Noise-free sparse-uncorrelated response.
pub fn sparse_uncorrelated_response(x: &[f64]) -> f64 {
    x[0] + 2.0 * x[1] - 2.0 * x[2] - 1.5 * x[3]
}

/// Label of the noise-free moon arc nearest to `p`: the upper arc
/// `(cos t, sin t)` is class 0, the lower arc `(1 - cos t, ½ - sin t)` is
/// class 1, for `t ∈ [0, π]`.
pub fn moons_label(p: &[f64]) -> i64 {
    let upper = arc_distance(p[0], p[1], 0.0, 0.0, true);
    let lower = arc_distance(p[0], p[1], 1.0, 0.5, false);
    i64::from(lower < upper)
}

/// Distance from `(x, y)` to the unit half-circle centred at `(cx, cy)`,
/// upper half when `upper`, lower half otherwise.
fn arc_distance(x: f64, y: f64, cx: f64, cy: f64, upper: bool) -> f64 {
    let (dx, dy) = (x - cx, y - cy);
    let on_side = if upper { dy >= 0.0 } else { dy <= 0.0 };
    if on_side {
        ((dx * dx + dy * dy).sqrt() - 1.0).abs()
    } else {
        let left = ((dx + 1.0).powi(2) + dy * dy).sqrt();
        let right = ((dx - 1.0).powi(2) + dy * dy).sqrt();
        left.min(right)
    }
}

/// Label of the noise-free circle nearest to `p`: radius 1 is class 0,
/// radius ½ is class 1.
pub fn circles_label(p: &[f64]) -> i64 {
    i64::from(p[0].hypot(p[1]) < 0.75)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Evenly spaced `count` values over `[0, end]` (inclusive when `inclusive`).
fn spaced(count: usize, end: f64, inclusive: bool) -> impl Iterator<Item = f64> {
    let denom = if inclusive { count.saturating_sub(1).max(1) } else { count } as f64;
    (0..count).map(move |i| end * i as f64 / denom)
}

pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let (n, d, noise) = (spec.n, spec.d, spec.noise);
    match spec.kind {
        GeneratorKind::LinearGaussian => {
            let informative = d.div_ceil(2);
            let coef: Vec<f64> = (0..d)
                .map(|j| if j < informative { 100.0 * rng.random::<f64>() } else { 0.0 })
                .collect();
            let features: Vec<f64> = (0..n * d).map(|_| normal(&mut rng)).collect();
            let targets = features
                .chunks_exact(d)
                .map(|x| x.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>() + noise * normal(&mut rng))
                .collect();
            Dataset::new(features, d, Some(targets))
        }
        GeneratorKind::Friedman1 => {
            let features: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
            let targets = features
                .chunks_exact(d)
                .map(|x| friedman1_response(x) + noise * normal(&mut rng))
                .collect();
            Dataset::new(features, d, Some(targets))
        }
        GeneratorKind::SparseUncorrelated => {
            let features: Vec<f64> = (0..n * d).map(|_| normal(&mut rng)).collect();
            let targets = features
                .chunks_exact(d)
                .map(|x| sparse_uncorrelated_response(x) + noise * normal(&mut rng))
                .collect();
            Dataset::new(features, d, Some(targets))
        }
        GeneratorKind::Moons => {
            let n_upper = n / 2;
            let n_lower = n - n_upper;
            let mut points: Vec<([f64; 2], f64)> = Vec::with_capacity(n);
            points.extend(spaced(n_upper, PI, true).map(|t| ([t.cos(), t.sin()], 0.0)));
            points.extend(spaced(n_lower, PI, true).map(|t| ([1.0 - t.cos(), 0.5 - t.sin()], 1.0)));
            Ok(planar(points, noise, &mut rng))
        }
        GeneratorKind::Circles => {
            let n_outer = n / 2;
            let n_inner = n - n_outer;
            let mut points: Vec<([f64; 2], f64)> = Vec::with_capacity(n);
            points.extend(spaced(n_outer, 2.0 * PI, false).map(|t| ([t.cos(), t.sin()], 0.0)));
            points.extend(spaced(n_inner, 2.0 * PI, false).map(|t| ([0.5 * t.cos(), 0.5 * t.sin()], 1.0)));
            Ok(planar(points, noise, &mut rng))
        }
        GeneratorKind::LinearlySeparable => {
            let n0 = n / 2;
            let mut features = Vec::with_capacity(n * d);
            let mut targets = Vec::with_capacity(n);
            for i in 0..n {
                let (center, label) = if i < n0 { (-2.0, 0.0) } else { (2.0, 1.0) };
                features.extend((0..d).map(|_| center + noise * normal(&mut rng)));
                targets.push(label);
            }
            let data = Dataset::new(features, d, Some(targets))?;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            Ok(data.select(&order))
        }
    }
}

fn planar(mut points: Vec<([f64; 2], f64)>, noise: f64, rng: &mut ChaCha8Rng) -> Dataset {
    for (p, _) in points.iter_mut() {
        p[0] += noise * normal(rng);
        p[1] += noise * normal(rng);
    }
    points.shuffle(rng);
    let features = points.iter().flat_map(|(p, _)| *p).collect();
    let targets = points.iter().map(|(_, l)| *l).collect();
    Dataset::new(features, 2, Some(targets)).expect("finite planar sample")
}

/// Which column of a CSV file holds the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetColumn {
    Index(usize),
    Name(String),
}

impl FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(s.parse().map_or_else(|_| TargetColumn::Name(s.to_string()), TargetColumn::Index))
    }
}

pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| CobraError::io(path, e))?;
    read_csv(file, target, has_header)
}

/// Parse CSV from any reader. Features are the non-target columns in file
/// order; row numbers in errors count data rows from 1.
pub fn read_csv<R: Read>(reader: R, target: &TargetColumn, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let target_idx = match target {
        TargetColumn::Index(i) => *i,
        TargetColumn::Name(name) => {
            if !has_header {
                return Err(CobraError::Schema(format!("target `{name}` named but the file has no header")));
            }
            rdr.headers()?
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CobraError::Schema(format!("no column named `{name}`")))?
        }
    };
    let mut width = None;
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if target_idx >= record.len() {
            return Err(CobraError::Schema(format!(
                "target column {target_idx} missing in row {row} with {} fields",
                record.len()
            )));
        }
        width.get_or_insert(record.len());
        for (c, cell) in record.iter().enumerate() {
            let value = parse_cell(cell, row, c)?;
            if c == target_idx {
                targets.push(value);
            } else {
                features.push(value);
            }
        }
    }
    let width = width.ok_or_else(|| CobraError::InvalidData("CSV has no data rows".into()))?;
    Dataset::new(features, width - 1, Some(targets))
}

fn parse_cell(cell: &str, row: usize, column: usize) -> Result<f64> {
    let value: f64 = cell.parse().map_err(|_| CobraError::Parse {
        row,
        column,
        message: format!("`{cell}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(CobraError::Parse {
            row,
            column,
            message: format!("`{cell}` is not finite"),
        });
    }
    Ok(value)
}

/// Read feature-only rows (no target), e.g. query points.
pub fn read_points_csv<R: Read>(reader: R, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut width = None;
    let mut features = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        width.get_or_insert(record.len());
        for (c, cell) in record.iter().enumerate() {
            features.push(parse_cell(cell, r + 1, c)?);
        }
    }
    let width = width.ok_or_else(|| CobraError::InvalidData("CSV has no data rows".into()))?;
    Dataset::new(features, width, None)
}

/// Header `x1,…,xd,y`, one row per sample, target last. Values are written
/// in shortest round-trip form.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=data.d()).map(|j| format!("x{j}")).collect();
    let targets = data.targets();
    if targets.is_some() {
        header.push("y".into());
    }
    wtr.write_record(&header)?;
    for (i, row) in data.rows().enumerate() {
        let mut fields: Vec<String> = row.iter().map(f64::to_string).collect();
        if let Some(t) = targets {
            fields.push(t[i].to_string());
        }
        wtr.write_record(&fields)?;
    }
    wtr.flush().map_err(|e| CobraError::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| CobraError::io(path, e))?;
    write_csv(data, std::io::BufWriter::new(file))
}
