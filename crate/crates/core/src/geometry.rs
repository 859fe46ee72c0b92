//! Wound shapes on the quarter domain.
//!
//! Every wound is described by a boundary curve `r(s)`, `s ∈ [0, 1]`, running
//! from the x-axis (`s = 0`) to the y-axis (`s = 1`). Together with the two
//! axis segments the curve closes the quarter wound. The three basic families
//! share the same parameter grid so convex combinations are pointwise.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of boundary samples per curve.
pub const DEFAULT_SAMPLES: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    Invalid(String),
    #[error("parameter grids of the combined curves differ")]
    GridMismatch,
    #[error("invalid convex weights {0:?}: need non-negative weights summing to one")]
    Weights([f64; 3]),
    #[error("degenerate polygon with {0} vertices")]
    Degenerate(usize),
    #[error("initial wound area is zero")]
    ZeroArea,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rectangle,
    Rhombus,
    Ellipse,
    Convex,
}

impl ShapeKind {
    pub const BASIC: [ShapeKind; 3] = [ShapeKind::Rectangle, ShapeKind::Rhombus, ShapeKind::Ellipse];

    pub fn as_str(self) -> &'static str {
        match self {
            ShapeKind::Rectangle => "rectangle",
            ShapeKind::Rhombus => "rhombus",
            ShapeKind::Ellipse => "ellipse",
            ShapeKind::Convex => "convex",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShapeKind {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rectangle" => Ok(ShapeKind::Rectangle),
            "rhombus" => Ok(ShapeKind::Rhombus),
            "ellipse" => Ok(ShapeKind::Ellipse),
            "convex" => Ok(ShapeKind::Convex),
            other => Err(GeometryError::Invalid(format!("unknown shape '{other}'"))),
        }
    }
}

/// The trunk's shape descriptor `(y_cut, x_m, y_m, x_cut)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadruple {
    pub y_cut: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub x_cut: f64,
}

impl Quadruple {
    pub fn to_array(self) -> [f64; 4] {
        [self.y_cut, self.x_m, self.y_m, self.x_cut]
    }
}

/// A wound shape with its cut points; `weights` is only meaningful for
/// [`ShapeKind::Convex`] and blends rectangle, rhombus and ellipse in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WoundGeometry {
    pub kind: ShapeKind,
    pub x_cut: f64,
    pub y_cut: f64,
    pub weights: Option<[f64; 3]>,
}

fn check_cuts(x_cut: f64, y_cut: f64) -> Result<(), GeometryError> {
    if !(x_cut.is_finite() && y_cut.is_finite() && x_cut > 0.0 && y_cut > 0.0) {
        return Err(GeometryError::Invalid(format!(
            "cuts must be positive, got x_cut={x_cut}, y_cut={y_cut}"
        )));
    }
    Ok(())
}

fn check_weights(w: [f64; 3]) -> Result<(), GeometryError> {
    let sum: f64 = w.iter().sum();
    if w.iter().any(|a| !a.is_finite() || *a < 0.0) || (sum - 1.0).abs() > 1e-12 {
        return Err(GeometryError::Weights(w));
    }
    Ok(())
}

fn basic_point(kind: ShapeKind, x_cut: f64, y_cut: f64, s: f64) -> [f64; 2] {
    match kind {
        ShapeKind::Rectangle => {
            if s <= 0.5 {
                [x_cut, 2.0 * s * y_cut]
            } else {
                [(2.0 - 2.0 * s) * x_cut, y_cut]
            }
        }
        ShapeKind::Rhombus => [(1.0 - s) * x_cut, s * y_cut],
        ShapeKind::Ellipse => {
            let a = FRAC_PI_2 * s;
            // cos(π/2) is not exactly zero in floating point
            let x = if s == 1.0 { 0.0 } else { x_cut * a.cos() };
            let y = if s == 0.0 { 0.0 } else { y_cut * a.sin() };
            [x, y]
        }
        ShapeKind::Convex => unreachable!("convex shapes are evaluated through their weights"),
    }
}

impl WoundGeometry {
    pub fn basic(kind: ShapeKind, x_cut: f64, y_cut: f64) -> Result<Self, GeometryError> {
        if kind == ShapeKind::Convex {
            return Err(GeometryError::Invalid("convex shapes need weights".into()));
        }
        check_cuts(x_cut, y_cut)?;
        Ok(Self { kind, x_cut, y_cut, weights: None })
    }

    pub fn convex(x_cut: f64, y_cut: f64, weights: [f64; 3]) -> Result<Self, GeometryError> {
        check_cuts(x_cut, y_cut)?;
        check_weights(weights)?;
        Ok(Self { kind: ShapeKind::Convex, x_cut, y_cut, weights: Some(weights) })
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        check_cuts(self.x_cut, self.y_cut)?;
        match (self.kind, self.weights) {
            (ShapeKind::Convex, Some(w)) => check_weights(w),
            (ShapeKind::Convex, None) => Err(GeometryError::Invalid("convex shapes need weights".into())),
            _ => Ok(()),
        }
    }

    /// Boundary point at parameter `s ∈ [0, 1]`.
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        match (self.kind, self.weights) {
            (ShapeKind::Convex, Some(w)) => {
                let mut p = [0.0; 2];
                for (kind, a) in ShapeKind::BASIC.iter().zip(w) {
                    let q = basic_point(*kind, self.x_cut, self.y_cut, s);
                    p[0] += a * q[0];
                    p[1] += a * q[1];
                }
                p
            }
            (kind, _) => basic_point(kind, self.x_cut, self.y_cut, s),
        }
    }

    /// Parameter values where the curve may have a kink (always includes the
    /// end points).
    pub fn breakpoints(&self) -> Vec<f64> {
        let has_corner = match (self.kind, self.weights) {
            (ShapeKind::Rectangle, _) => true,
            (ShapeKind::Convex, Some(w)) => w[0] > 0.0,
            _ => false,
        };
        if has_corner {
            vec![0.0, 0.5, 1.0]
        } else {
            vec![0.0, 1.0]
        }
    }

    pub fn boundary(&self, n_samples: usize) -> Result<BoundaryCurve, GeometryError> {
        self.validate()?;
        if n_samples < 3 {
            return Err(GeometryError::Invalid(format!("need at least 3 samples, got {n_samples}")));
        }
        let s: Vec<f64> = uniform_grid(n_samples);
        let points = s.iter().map(|&si| self.point_at(si)).collect();
        Ok(BoundaryCurve { s, points })
    }

    pub fn quadruple(&self) -> Quadruple {
        let [x_m, y_m] = self.point_at(0.5);
        Quadruple { y_cut: self.y_cut, x_m, y_m, x_cut: self.x_cut }
    }

    pub fn extent(&self) -> (f64, f64) {
        domain_extent(self.x_cut, self.y_cut)
    }

    /// Smallest cut, the length scale of the wound.
    pub fn min_cut(&self) -> f64 {
        self.x_cut.min(self.y_cut)
    }
}

fn uniform_grid(n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|j| if j == n - 1 { 1.0 } else { j as f64 / last })
        .collect()
}

/// Wound rim sampled on a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    pub s: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

impl BoundaryCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The quarter-wound polygon: rim followed by the origin.
    pub fn closed_polygon(&self) -> Vec<[f64; 2]> {
        close_with_axes(&self.points)
    }

    pub fn area(&self) -> Result<f64, GeometryError> {
        polygon_area(&self.closed_polygon())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "s,x,y")?;
        for (s, p) in self.s.iter().zip(&self.points) {
            writeln!(out, "{},{},{}", s, p[0], p[1])?;
        }
        Ok(())
    }
}

/// Appends the origin unless the rim already ends there.
pub fn close_with_axes(rim: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut poly = rim.to_vec();
    if poly.last() != Some(&[0.0, 0.0]) && poly.first() != Some(&[0.0, 0.0]) {
        poly.push([0.0, 0.0]);
    }
    poly
}

pub fn parametrize_shape(
    kind: ShapeKind,
    x_cut: f64,
    y_cut: f64,
    n_samples: usize,
) -> Result<BoundaryCurve, GeometryError> {
    WoundGeometry::basic(kind, x_cut, y_cut)?.boundary(n_samples)
}

/// Pointwise convex combination `r(s) = Σ α_p r_p(s)`.
pub fn convex_combine(curves: [&BoundaryCurve; 3], weights: [f64; 3]) -> Result<BoundaryCurve, GeometryError> {
    check_weights(weights)?;
    let base = curves[0];
    if curves.iter().any(|c| c.s != base.s || c.points.len() != base.points.len()) {
        return Err(GeometryError::GridMismatch);
    }
    let points = (0..base.len())
        .map(|j| {
            let mut p = [0.0; 2];
            for (c, a) in curves.iter().zip(weights) {
                p[0] += a * c.points[j][0];
                p[1] += a * c.points[j][1];
            }
            p
        })
        .collect();
    Ok(BoundaryCurve { s: base.s.clone(), points })
}

/// Rounds to one decimal, ties away from zero.
///
/// Values within a relative 1e-9 of a tie are treated as ties, so that inputs
/// written with a few decimals round the way decimal arithmetic would.
pub fn round1(v: f64) -> f64 {
    let scaled = v * 10.0;
    let lower = scaled.floor();
    let frac = scaled - lower;
    let tol = 1e-9 * scaled.abs().max(1.0);
    let rounded = if (frac - 0.5).abs() <= tol {
        if scaled >= 0.0 {
            lower + 1.0
        } else {
            lower
        }
    } else {
        scaled.round()
    };
    rounded / 10.0
}

/// Quarter-domain extent `(x_l, y_l)`.
pub fn domain_extent(x_cut: f64, y_cut: f64) -> (f64, f64) {
    (round1(2.5 * x_cut), round1(2.5 * y_cut))
}

pub fn shape_quadruple(geometry: &WoundGeometry) -> Quadruple {
    geometry.quadruple()
}

/// Shoelace area (absolute value) of a closed polygon.
pub fn polygon_area(vertices: &[[f64; 2]]) -> Result<f64, GeometryError> {
    if vertices.len() < 3 {
        return Err(GeometryError::Degenerate(vertices.len()));
    }
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    Ok(0.5 * twice.abs())
}

/// Relative surface area of the wound.
pub fn rsaw(initial: &[[f64; 2]], displaced: &[[f64; 2]]) -> Result<f64, GeometryError> {
    let a0 = polygon_area(initial)?;
    if a0 == 0.0 {
        return Err(GeometryError::ZeroArea);
    }
    Ok(polygon_area(displaced)? / a0)
}

/// Distance from `p` to the segment `ab`.
pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    d[0].hypot(d[1])
}

/// Even-odd ray casting.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Distance from `point` to the wound rim, and whether it lies inside the
/// quarter wound. The axis segments of the closure do not count as rim.
pub fn wound_distance(point: [f64; 2], rim: &[[f64; 2]]) -> (bool, f64) {
    let d = rim
        .windows(2)
        .map(|w| segment_distance(point, w[0], w[1]))
        .fold(f64::INFINITY, f64::min);
    let d = if rim.len() == 1 {
        segment_distance(point, rim[0], rim[0])
    } else {
        d
    };
    let inside = d > 0.0 && point_in_polygon(point, &close_with_axes(rim));
    (inside || d == 0.0, d)
}

/// Point on the ellipse of the given cuts at parameter `s`; used by tests and
/// the mesh audit.
pub fn ellipse_point(x_cut: f64, y_cut: f64, s: f64) -> [f64; 2] {
    let a = 0.5 * PI * s;
    [x_cut * a.cos(), y_cut * a.sin()]
}
