//! Synthetic 2-D geometry: random star-shaped polygons, uniform interior
//! sampling, point-in-polygon tests, labeled lattices and the banana, star
//! and three-cluster shape generators.
//!
//! All randomness comes from ChaCha8 seeded with `seed_from_u64`, which is
//! specified independently of platform and word size.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Result, SvddError};

pub type Point = [f64; 2];

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Simple polygon with anticlockwise vertex order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Builds a polygon, reversing clockwise input so the stored order is
    /// anticlockwise.
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(SvddError::Input(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SvddError::Input("non-finite polygon vertex".into()));
        }
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area (non-negative after orientation).
    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// (x_min, x_max, y_min, y_max) of the vertices.
    pub fn bounds(&self) -> Bounds {
        Bounds::enclosing(self.vertices.iter().copied())
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    fn on_boundary(&self, p: Point) -> bool {
        self.edges().any(|(a, b)| on_segment(p, a, b))
    }
}

fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let scale = (b[0] - a[0]).abs() + (b[1] - a[1]).abs() + 1.0;
    if cross.abs() > 1e-12 * scale * scale {
        return false;
    }
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Closed-region membership: boundary points count as inside.
pub fn point_in_polygon(p: Point, poly: &Polygon) -> bool {
    if poly.on_boundary(p) {
        return true;
    }
    crossing_parity(p, poly)
}

/// Even-odd ray casting toward +x.
fn crossing_parity(p: Point, poly: &Polygon) -> bool {
    let mut inside = false;
    for (a, b) in poly.edges() {
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolygonConfig {
    pub k: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub seed: u64,
}

impl PolygonConfig {
    /// Radii in [3, 5], as used for the simulation study.
    pub fn study(k: usize, seed: u64) -> Self {
        Self {
            k,
            r_min: 3.0,
            r_max: 5.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 3 {
            return Err(SvddError::Input(format!("polygon needs k >= 3, got {}", self.k)));
        }
        if !(self.r_min > 0.0 && self.r_min <= self.r_max && self.r_max.is_finite()) {
            return Err(SvddError::Input(format!(
                "need 0 < r_min <= r_max, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomPolygon {
    pub polygon: Polygon,
    /// Seed that produced the polygon; differs from the requested seed only
    /// when a degenerate draw forced a retry.
    pub seed_used: u64,
    pub retries: u32,
}

const MAX_POLYGON_RETRIES: u32 = 64;

/// Random polygon with vertices `r_i·exp(iθ_(i))`: `θ_(1) = 0`, the remaining
/// angles are sorted Uniform(0, 2π) draws and the radii are Uniform(r_min, r_max).
pub fn generate_polygon(config: &PolygonConfig) -> Result<RandomPolygon> {
    config.validate()?;
    for retry in 0..=MAX_POLYGON_RETRIES {
        let seed = config.seed.wrapping_add(retry as u64);
        let mut rng = rng_from_seed(seed);
        let mut angles: Vec<f64> = std::iter::once(0.0)
            .chain((1..config.k).map(|_| rng.random_range(0.0..TAU)))
            .collect();
        angles[1..].sort_by(f64::total_cmp);
        let vertices: Vec<Point> = angles
            .iter()
            .map(|&theta| {
                let r = if config.r_min == config.r_max {
                    config.r_min
                } else {
                    rng.random_range(config.r_min..config.r_max)
                };
                [r * theta.cos(), r * theta.sin()]
            })
            .collect();
        if signed_area(&vertices) > 0.0 {
            if retry > 0 {
                log::warn!("degenerate polygon for seed {}; regenerated with seed {seed}", config.seed);
            }
            return Ok(RandomPolygon {
                polygon: Polygon { vertices },
                seed_used: seed,
                retries: retry,
            });
        }
    }
    Err(SvddError::DegenerateInput(format!(
        "no non-degenerate polygon after {MAX_POLYGON_RETRIES} retries from seed {}",
        config.seed
    )))
}

/// Uniform samples from the polygon interior by bounding-box rejection.
pub fn sample_interior(poly: &Polygon, count: usize, seed: u64) -> Result<DataMatrix> {
    if count == 0 {
        return Err(SvddError::Input("sample count must be positive".into()));
    }
    let area = poly.area();
    let b = poly.bounds();
    if !(area > 0.0) || b.width() <= 0.0 || b.height() <= 0.0 {
        return Err(SvddError::DegenerateInput("polygon has zero area".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut values = Vec::with_capacity(2 * count);
    while values.len() < 2 * count {
        let p = [
            rng.random_range(b.x_min..b.x_max),
            rng.random_range(b.y_min..b.y_max),
        ];
        if !poly.on_boundary(p) && crossing_parity(p, poly) {
            values.extend_from_slice(&p);
        }
    }
    DataMatrix::new(count, 2, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn enclosing(points: impl IntoIterator<Item = Point>) -> Self {
        points.into_iter().fold(
            Self {
                x_min: f64::INFINITY,
                x_max: f64::NEG_INFINITY,
                y_min: f64::INFINITY,
                y_max: f64::NEG_INFINITY,
            },
            |b, p| Self {
                x_min: b.x_min.min(p[0]),
                x_max: b.x_max.max(p[0]),
                y_min: b.y_min.min(p[1]),
                y_max: b.y_max.max(p[1]),
            },
        )
    }

    pub fn of_data(x: &DataMatrix) -> Result<Self> {
        if x.cols() != 2 {
            return Err(SvddError::Dimension {
                expected: 2,
                got: x.cols(),
            });
        }
        Ok(Self::enclosing(x.iter_rows().map(|r| [r[0], r[1]])))
    }

    /// Grows each side by `fraction` of the extent on that axis.
    pub fn padded(&self, fraction: f64) -> Self {
        let dx = fraction * self.width();
        let dy = fraction * self.height();
        Self {
            x_min: self.x_min - dx,
            x_max: self.x_max + dx,
            y_min: self.y_min - dy,
            y_max: self.y_max + dy,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// Lattice spanning `bounds` inclusively, with ground-truth labels.
///
/// Points are ordered row-major: x varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGrid {
    pub bounds: Bounds,
    pub resolution: (usize, usize),
    pub points: DataMatrix,
    pub labels: Vec<bool>,
}

impl LabeledGrid {
    pub fn lattice(bounds: Bounds, resolution: (usize, usize)) -> Result<DataMatrix> {
        let (nx, ny) = resolution;
        if nx < 2 || ny < 2 {
            return Err(SvddError::Input(format!(
                "grid resolution must be at least 2 per axis, got {nx}x{ny}"
            )));
        }
        let mut values = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            let y = bounds.y_min + bounds.height() * j as f64 / (ny - 1) as f64;
            for i in 0..nx {
                let x = bounds.x_min + bounds.width() * i as f64 / (nx - 1) as f64;
                values.push(x);
                values.push(y);
            }
        }
        DataMatrix::new(nx * ny, 2, values)
    }

    pub fn from_fn(
        bounds: Bounds,
        resolution: (usize, usize),
        inside: impl Fn(Point) -> bool,
    ) -> Result<Self> {
        let points = Self::lattice(bounds, resolution)?;
        let labels = points.iter_rows().map(|r| inside([r[0], r[1]])).collect();
        Ok(Self {
            bounds,
            resolution,
            points,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inside_count(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }
}

pub const DEFAULT_GRID_RESOLUTION: (usize, usize) = (200, 200);

/// Lattice over the polygon's bounding rectangle labeled by membership.
pub fn make_labeled_grid(poly: &Polygon, resolution: (usize, usize)) -> Result<LabeledGrid> {
    LabeledGrid::from_fn(poly.bounds(), resolution, |p| point_in_polygon(p, poly))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Banana,
    Star,
    ThreeCluster,
}

impl std::str::FromStr for ShapeKind {
    type Err = SvddError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "banana" => Ok(Self::Banana),
            "star" => Ok(Self::Star),
            "three_cluster" | "three-cluster" => Ok(Self::ThreeCluster),
            other => Err(SvddError::Input(format!("unknown shape kind '{other}'"))),
        }
    }
}

impl ShapeKind {
    pub fn default_size(self) -> usize {
        match self {
            ShapeKind::Banana => 267,
            ShapeKind::Star | ShapeKind::ThreeCluster => 300,
        }
    }

    pub fn default_noise(self) -> f64 {
        match self {
            ShapeKind::Banana => BANANA_HALF_WIDTH,
            ShapeKind::Star => 0.0,
            ShapeKind::ThreeCluster => CLUSTER_RADIUS,
        }
    }
}

// Banana: the band |y − (a x² + b)| ≤ w for |x| ≤ L.
const BANANA_HALF_LENGTH: f64 = 3.0;
const BANANA_CURVATURE: f64 = 0.4;
const BANANA_OFFSET: f64 = -1.8;
const BANANA_HALF_WIDTH: f64 = 0.6;

// Star: five points, outer/inner radius.
const STAR_OUTER: f64 = 3.0;
const STAR_INNER: f64 = 1.3;

// Three clusters: uniform discs. Gaussian blobs were tried first, but their
// sparse tails make the ground-truth region ill-defined.
const CLUSTER_CENTERS: [Point; 3] = [[0.0, 0.0], [6.0, 0.0], [3.0, 5.2]];
const CLUSTER_RADIUS: f64 = 1.5;

/// Reconstructed benchmark shape: generator plus ground-truth region.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    /// Half-width for the banana, disc radius for the clusters; the star
    /// adds Gaussian jitter of this size (0 keeps samples on the polygon).
    pub noise: f64,
    star: Option<Polygon>,
}

impl Shape {
    pub fn new(kind: ShapeKind, noise: Option<f64>) -> Result<Self> {
        let noise = noise.unwrap_or_else(|| kind.default_noise());
        if !(noise >= 0.0 && noise.is_finite()) || (kind != ShapeKind::Star && noise == 0.0) {
            return Err(SvddError::Input(format!("invalid noise {noise} for {kind:?}")));
        }
        let star = (kind == ShapeKind::Star).then(|| star_polygon(5, STAR_OUTER, STAR_INNER));
        Ok(Self { kind, noise, star })
    }

    pub fn star_polygon(&self) -> Option<&Polygon> {
        self.star.as_ref()
    }

    /// Ground-truth membership of the generating region.
    pub fn contains(&self, p: Point) -> bool {
        match self.kind {
            ShapeKind::Banana => {
                p[0].abs() <= BANANA_HALF_LENGTH
                    && (p[1] - banana_center(p[0])).abs() <= self.noise
            }
            ShapeKind::Star => point_in_polygon(p, self.star.as_ref().expect("star polygon")),
            ShapeKind::ThreeCluster => {
                let r = self.noise;
                CLUSTER_CENTERS
                    .iter()
                    .any(|c| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) <= r * r)
            }
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<DataMatrix> {
        if n == 0 {
            return Err(SvddError::Input("shape size must be positive".into()));
        }
        let mut rng = rng_from_seed(seed);
        match self.kind {
            ShapeKind::Banana => {
                let mut values = Vec::with_capacity(2 * n);
                for _ in 0..n {
                    // uniform in x and in the vertical offset is uniform in area
                    let x = rng.random_range(-BANANA_HALF_LENGTH..=BANANA_HALF_LENGTH);
                    let off = rng.random_range(-self.noise..=self.noise);
                    values.push(x);
                    values.push(banana_center(x) + off);
                }
                DataMatrix::new(n, 2, values)
            }
            ShapeKind::Star => {
                let poly = self.star.as_ref().expect("star polygon");
                let base = sample_interior(poly, n, rng.random())?;
                if self.noise == 0.0 {
                    return Ok(base);
                }
                let values = base
                    .values()
                    .iter()
                    .map(|v| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        v + self.noise * e
                    })
                    .collect();
                DataMatrix::new(n, 2, values)
            }
            ShapeKind::ThreeCluster => {
                let mut values = Vec::with_capacity(2 * n);
                for i in 0..n {
                    let c = CLUSTER_CENTERS[i % 3];
                    // sqrt of a uniform radius fraction gives uniform area density
                    let r = self.noise * rng.random::<f64>().sqrt();
                    let theta = rng.random_range(0.0..2.0 * PI);
                    values.push(c[0] + r * theta.cos());
                    values.push(c[1] + r * theta.sin());
                }
                DataMatrix::new(n, 2, values)
            }
        }
    }

    /// Scoring lattice over the data bounding box padded by 10%, labeled by
    /// ground truth.
    pub fn labeled_grid(&self, data: &DataMatrix, resolution: (usize, usize)) -> Result<LabeledGrid> {
        let bounds = Bounds::of_data(data)?.padded(0.1);
        LabeledGrid::from_fn(bounds, resolution, |p| self.contains(p))
    }

    pub fn cluster_centers() -> [Point; 3] {
        CLUSTER_CENTERS
    }
}

fn banana_center(x: f64) -> f64 {
    BANANA_CURVATURE * x * x + BANANA_OFFSET
}

/// Regular `points`-pointed star with alternating outer and inner radii,
/// first tip on the positive y-axis.
pub fn star_polygon(points: usize, outer: f64, inner: f64) -> Polygon {
    let vertices = (0..2 * points)
        .map(|i| {
            let r = if i % 2 == 0 { outer } else { inner };
            let theta = PI / 2.0 + PI * i as f64 / points as f64;
            [r * theta.cos(), r * theta.sin()]
        })
        .collect();
    Polygon { vertices }
}

/// Generates a reconstructed benchmark shape with default size/noise when
/// not given.
pub fn generate_shape(
    kind: ShapeKind,
    n: Option<usize>,
    noise: Option<f64>,
    seed: u64,
) -> Result<DataMatrix> {
    Shape::new(kind, noise)?.sample(n.unwrap_or_else(|| kind.default_size()), seed)
}
