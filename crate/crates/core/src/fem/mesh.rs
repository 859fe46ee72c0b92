//! Quarter-domain triangulations with the wound rim resolved as element
//! edges, mesh quality, and point location for P1 interpolation.

use serde::{Deserialize, Serialize};
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::FemError;
use crate::geometry::{segment_distance, WoundGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryTag {
    Interior,
    /// On `y = 0`, strictly between the origin and the outer edge.
    Horizontal,
    /// On `x = 0`, strictly between the origin and the outer edge.
    Vertical,
    Origin,
    /// On `x = x_l` or `y = y_l`.
    Outer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub tags: Vec<BoundaryTag>,
    /// Rim marker nodes, ordered from the x-axis to the y-axis.
    pub rim: Vec<usize>,
    pub x_l: f64,
    pub y_l: f64,
}

pub fn twice_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}

/// Gradients of the three P1 basis functions and the element area.
pub fn basis_gradients(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let j = twice_area(p[0], p[1], p[2]);
    let g = [
        [(p[1][1] - p[2][1]) / j, (p[2][0] - p[1][0]) / j],
        [(p[2][1] - p[0][1]) / j, (p[0][0] - p[2][0]) / j],
        [(p[0][1] - p[1][1]) / j, (p[1][0] - p[0][0]) / j],
    ];
    (g, 0.5 * j)
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn jacobians(&self) -> Vec<f64> {
        (0..self.triangles.len())
            .map(|t| {
                let p = self.corners(t);
                twice_area(p[0], p[1], p[2])
            })
            .collect()
    }

    /// `min |J| / max |J|` over all elements.
    pub fn quality(&self) -> f64 {
        mesh_quality(self)
    }

    pub fn validate(&self) -> Result<(), FemError> {
        for (t, j) in self.jacobians().iter().enumerate() {
            if !(*j > 0.0) {
                return Err(FemError::Mesh(format!("element {t} has non-positive Jacobian {j:e}")));
            }
        }
        Ok(())
    }

    /// Lumped (row-sum) mass per node.
    pub fn lumped_masses(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_nodes()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let p = self.corners(t);
            let a = 0.5 * twice_area(p[0], p[1], p[2]) / 3.0;
            for &i in tri {
                m[i] += a;
            }
        }
        m
    }

    pub fn rim_points(&self) -> Vec<[f64; 2]> {
        self.rim.iter().map(|&i| self.nodes[i]).collect()
    }

    /// Smallest interior angle over all elements, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut best = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let p = self.corners(t);
            for k in 0..3 {
                let a = p[k];
                let b = p[(k + 1) % 3];
                let c = p[(k + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / ((u[0] * u[0] + u[1] * u[1]).sqrt() * (v[0] * v[0] + v[1] * v[1]).sqrt());
                best = best.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        best
    }

    /// Node-to-node adjacency (excluding self), sorted.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for tri in &self.triangles {
            for &a in tri {
                for &b in tri {
                    if a != b {
                        adj[a].push(b);
                    }
                }
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

pub fn mesh_quality(mesh: &Mesh) -> f64 {
    let j = mesh.jacobians();
    let (lo, hi) = j.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Element size giving roughly `target_nodes` nodes on the domain, never
/// coarser than 0.3 of the shorter cut.
pub fn auto_element_size(geometry: &WoundGeometry, target_nodes: usize) -> f64 {
    let (x_l, y_l) = geometry.extent();
    let budget = (1.155 * x_l * y_l / target_nodes.max(1) as f64).sqrt();
    budget.min(0.3 * geometry.min_cut())
}

/// Rim nodes at near-equal arc-length spacing `≤ h`, evaluated on the
/// analytic curve and split at kinks.
pub fn sample_rim(geometry: &WoundGeometry, h: f64) -> Vec<[f64; 2]> {
    const DENSE: usize = 2048;
    let bps = geometry.breakpoints();
    let mut out = vec![geometry.point_at(0.0)];
    for w in bps.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        let ss: Vec<f64> = (0..=DENSE).map(|k| s0 + (s1 - s0) * k as f64 / DENSE as f64).collect();
        let mut cum = vec![0.0; DENSE + 1];
        let mut prev = geometry.point_at(s0);
        for k in 1..=DENSE {
            let p = geometry.point_at(ss[k]);
            cum[k] = cum[k - 1] + ((p[0] - prev[0]).powi(2) + (p[1] - prev[1]).powi(2)).sqrt();
            prev = p;
        }
        let len = cum[DENSE];
        let n = ((len / h).ceil() as usize).max(1);
        for k in 1..n {
            let target = len * k as f64 / n as f64;
            let j = cum.partition_point(|&c| c < target).clamp(1, DENSE);
            let frac = (target - cum[j - 1]) / (cum[j] - cum[j - 1]);
            let s = ss[j - 1] + frac * (ss[j] - ss[j - 1]);
            out.push(geometry.point_at(s));
        }
        out.push(geometry.point_at(s1));
    }
    out
}

pub fn generate_mesh(geometry: &WoundGeometry, h: f64) -> Result<Mesh, FemError> {
    geometry.validate().map_err(|e| FemError::Mesh(e.to_string()))?;
    if !(h > 0.0 && h < geometry.min_cut()) {
        return Err(FemError::Mesh(format!("element size {h} must lie in (0, {}))", geometry.min_cut())));
    }
    let (x_l, y_l) = geometry.extent();
    mesh_from_rim(&sample_rim(geometry, h), x_l, y_l, h)
}

fn subdivide(a: [f64; 2], b: [f64; 2], h: f64) -> Vec<[f64; 2]> {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let n = ((len / h).round() as usize).max(1);
    (1..n)
        .map(|k| {
            let f = k as f64 / n as f64;
            [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
        })
        .collect()
}

/// Triangulates `[0, x_l] × [0, y_l]` with the given rim polyline as
/// constraint edges. Rim points become nodes `0..rim.len()`.
pub fn mesh_from_rim(rim: &[[f64; 2]], x_l: f64, y_l: f64, h: f64) -> Result<Mesh, FemError> {
    if rim.len() < 2 {
        return Err(FemError::Mesh("rim needs at least two points".into()));
    }
    let start = rim[0];
    let end = *rim.last().unwrap();
    if start[1] != 0.0 || end[0] != 0.0 || !(start[0] > 0.0 && start[0] < x_l) || !(end[1] > 0.0 && end[1] < y_l) {
        return Err(FemError::Mesh("rim must run from the open x-axis segment to the open y-axis segment".into()));
    }
    for p in &rim[1..rim.len() - 1] {
        if !(p[0] > 0.0 && p[1] > 0.0 && p[0] < x_l && p[1] < y_l) {
            return Err(FemError::Mesh(format!("rim point {p:?} leaves the domain interior")));
        }
    }

    let mut nodes: Vec<[f64; 2]> = rim.to_vec();
    let mut tags = vec![BoundaryTag::Interior; rim.len()];
    tags[0] = BoundaryTag::Horizontal;
    *tags.last_mut().unwrap() = BoundaryTag::Vertical;
    let rim_idx: Vec<usize> = (0..rim.len()).collect();

    // Outer loop, counter-clockwise from the rim start.
    let mut loop_idx = vec![0usize];
    let push = |nodes: &mut Vec<[f64; 2]>, tags: &mut Vec<BoundaryTag>, p: [f64; 2], tag: BoundaryTag| {
        nodes.push(p);
        tags.push(tag);
        nodes.len() - 1
    };
    let corner_r = [x_l, 0.0];
    let corner_tr = [x_l, y_l];
    let corner_t = [0.0, y_l];
    for p in subdivide(start, corner_r, h) {
        loop_idx.push(push(&mut nodes, &mut tags, p, BoundaryTag::Horizontal));
    }
    loop_idx.push(push(&mut nodes, &mut tags, corner_r, BoundaryTag::Outer));
    for p in subdivide(corner_r, corner_tr, h) {
        loop_idx.push(push(&mut nodes, &mut tags, [x_l, p[1]], BoundaryTag::Outer));
    }
    loop_idx.push(push(&mut nodes, &mut tags, corner_tr, BoundaryTag::Outer));
    for p in subdivide(corner_tr, corner_t, h) {
        loop_idx.push(push(&mut nodes, &mut tags, [p[0], y_l], BoundaryTag::Outer));
    }
    loop_idx.push(push(&mut nodes, &mut tags, corner_t, BoundaryTag::Outer));
    for p in subdivide(corner_t, end, h) {
        loop_idx.push(push(&mut nodes, &mut tags, [0.0, p[1]], BoundaryTag::Vertical));
    }
    loop_idx.push(rim.len() - 1);
    for p in subdivide(end, [0.0, 0.0], h) {
        loop_idx.push(push(&mut nodes, &mut tags, [0.0, p[1]], BoundaryTag::Vertical));
    }
    loop_idx.push(push(&mut nodes, &mut tags, [0.0, 0.0], BoundaryTag::Origin));
    for p in subdivide([0.0, 0.0], start, h) {
        loop_idx.push(push(&mut nodes, &mut tags, [p[0], 0.0], BoundaryTag::Horizontal));
    }

    let mut edges: Vec<[usize; 2]> = rim_idx.windows(2).map(|w| [w[0], w[1]]).collect();
    for k in 0..loop_idx.len() {
        let a = loop_idx[k];
        let b = loop_idx[(k + 1) % loop_idx.len()];
        if a != b {
            edges.push([a, b]);
        }
    }

    let n_fixed = nodes.len();
    let clearance = 0.6 * h;
    let dy = h * 3f64.sqrt() / 2.0;
    let mut j = 1;
    while (j as f64) * dy < y_l {
        let y = j as f64 * dy;
        let offset = if j % 2 == 1 { 0.5 * h } else { 0.0 };
        let mut i = 0;
        loop {
            let x = offset + i as f64 * h;
            if x >= x_l {
                break;
            }
            i += 1;
            if x.min(y).min(x_l - x).min(y_l - y) < clearance {
                continue;
            }
            let near_rim = rim.windows(2).any(|w| segment_distance([x, y], w[0], w[1]) < clearance);
            if !near_rim {
                nodes.push([x, y]);
                tags.push(BoundaryTag::Interior);
            }
        }
        j += 1;
    }

    let mut triangles = triangulate(&nodes, &edges)?;
    for _ in 0..4 {
        smooth(&mut nodes, &triangles, n_fixed);
        triangles = triangulate(&nodes, &edges)?;
    }
    let mesh = Mesh { nodes, triangles, tags, rim: rim_idx, x_l, y_l };
    mesh.validate()?;
    Ok(mesh)
}

fn smooth(nodes: &mut [[f64; 2]], triangles: &[[usize; 3]], n_fixed: usize) {
    let n = nodes.len();
    let mut sum = vec![[0.0; 2]; n];
    let mut cnt = vec![0usize; n];
    for t in triangles {
        for k in 0..3 {
            let a = t[k];
            for l in 1..3 {
                let b = t[(k + l) % 3];
                sum[a][0] += nodes[b][0];
                sum[a][1] += nodes[b][1];
                cnt[a] += 1;
            }
        }
    }
    for i in n_fixed..n {
        if cnt[i] > 0 {
            nodes[i] = [sum[i][0] / cnt[i] as f64, sum[i][1] / cnt[i] as f64];
        }
    }
}

fn triangulate(nodes: &[[f64; 2]], edges: &[[usize; 2]]) -> Result<Vec<[usize; 3]>, FemError> {
    let pts: Vec<Point2<f64>> = nodes.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let mut conflict = false;
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::try_bulk_load_cdt(pts, edges.to_vec(), |_| conflict = true)
        .map_err(|e| FemError::Mesh(format!("triangulation failed: {e:?}")))?;
    if conflict {
        return Err(FemError::Mesh("rim constraint edges intersect".into()));
    }
    if cdt.num_vertices() != nodes.len() {
        return Err(FemError::Mesh("duplicate mesh nodes".into()));
    }
    let mut tris = Vec::with_capacity(cdt.num_inner_faces());
    for f in cdt.inner_faces() {
        let v = f.vertices();
        let mut t = [v[0].fix().index(), v[1].fix().index(), v[2].fix().index()];
        if twice_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
        tris.push(t);
    }
    Ok(tris)
}

/// Bucket grid over element bounding boxes for point location.
#[derive(Debug, Clone)]
pub struct PointLocator {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

/// Location of a query point: element and barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Located {
    pub element: usize,
    pub weights: [f64; 3],
    /// `true` when the point lies outside every element and the closest
    /// element was used instead.
    pub fallback: bool,
}

impl PointLocator {
    pub fn new(nodes: &[[f64; 2]], triangles: &[[usize; 3]]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let area = ((hi[0] - lo[0]) * (hi[1] - lo[1])).max(1e-300);
        let cell = (area / triangles.len().max(1) as f64).sqrt().max(1e-12) * 1.5;
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize + 1).max(1);
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in triangles.iter().enumerate() {
            let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for &i in tri {
                for k in 0..2 {
                    a[k] = a[k].min(nodes[i][k]);
                    b[k] = b[k].max(nodes[i][k]);
                }
            }
            let i0 = ((a[0] - lo[0]) / cell).floor().max(0.0) as usize;
            let i1 = (((b[0] - lo[0]) / cell).floor() as usize).min(nx - 1);
            let j0 = ((a[1] - lo[1]) / cell).floor().max(0.0) as usize;
            let j1 = (((b[1] - lo[1]) / cell).floor() as usize).min(ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Self { nodes: nodes.to_vec(), triangles: triangles.to_vec(), origin: lo, cell, nx, ny, buckets }
    }

    fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let j = twice_area(pa, pb, pc);
        [twice_area(p, pb, pc) / j, twice_area(pa, p, pc) / j, twice_area(pa, pb, p) / j]
    }

    pub fn locate(&self, p: [f64; 2]) -> Located {
        let i = ((p[0] - self.origin[0]) / self.cell).floor();
        let j = ((p[1] - self.origin[1]) / self.cell).floor();
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        if i >= 0.0 && j >= 0.0 && (i as usize) < self.nx && (j as usize) < self.ny {
            for &t in &self.buckets[j as usize * self.nx + i as usize] {
                let w = self.barycentric(t, p);
                let m = w[0].min(w[1]).min(w[2]);
                if m >= -1e-12 {
                    return Located { element: t, weights: w, fallback: false };
                }
                if best.is_none_or(|(_, _, bm)| m > bm) {
                    best = Some((t, w, m));
                }
            }
        }
        // outside the hull or in a numerically ambiguous spot
        for t in 0..self.triangles.len() {
            let w = self.barycentric(t, p);
            let m = w[0].min(w[1]).min(w[2]);
            if best.is_none_or(|(_, _, bm)| m > bm) {
                best = Some((t, w, m));
            }
        }
        let (t, w, m) = best.expect("locator has elements");
        if m >= -1e-12 {
            return Located { element: t, weights: w, fallback: false };
        }
        let c = [w[0].max(0.0), w[1].max(0.0), w[2].max(0.0)];
        let s = c[0] + c[1] + c[2];
        Located { element: t, weights: [c[0] / s, c[1] / s, c[2] / s], fallback: true }
    }

    pub fn interpolate(&self, loc: &Located, values: &[f64]) -> f64 {
        let tri = self.triangles[loc.element];
        loc.weights[0] * values[tri[0]] + loc.weights[1] * values[tri[1]] + loc.weights[2] * values[tri[2]]
    }

    pub fn element_nodes(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ShapeKind;

    fn rect() -> WoundGeometry {
        WoundGeometry::basic(ShapeKind::Rectangle, 2.0, 1.0).unwrap()
    }

    #[test]
    fn generated_mesh_is_valid() {
        for kind in ShapeKind::BASIC {
            let g = WoundGeometry::basic(kind, 2.0, 1.0).unwrap();
            let m = generate_mesh(&g, 0.25).unwrap();
            m.validate().unwrap();
            assert!(m.min_angle_deg() > 20.0, "{kind}: {}", m.min_angle_deg());
            let area: f64 = m.jacobians().iter().sum::<f64>() * 0.5;
            assert!((area - 5.0 * 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn rim_resolution_and_accuracy() {
        let g = WoundGeometry::basic(ShapeKind::Ellipse, 2.5, 1.5).unwrap();
        let h = 0.3;
        let m = generate_mesh(&g, h).unwrap();
        let rim = m.rim_points();
        let len: f64 = rim.windows(2).map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt()).sum();
        assert!(rim.len() as f64 >= len / h);
        for p in &rim {
            let r = (p[0] / 2.5).powi(2) + (p[1] / 1.5).powi(2);
            assert!((r - 1.0).abs() < 1e-12);
        }
        assert_eq!(rim[0][1], 0.0);
        assert_eq!(rim.last().unwrap()[0], 0.0);
    }

    #[test]
    fn rim_edges_are_mesh_edges() {
        let m = generate_mesh(&rect(), 0.3).unwrap();
        let has_edge = |a: usize, b: usize| {
            m.triangles.iter().any(|t| t.contains(&a) && t.contains(&b))
        };
        for w in m.rim.windows(2) {
            assert!(has_edge(w[0], w[1]));
        }
    }

    #[test]
    fn tags_match_positions() {
        let m = generate_mesh(&rect(), 0.3).unwrap();
        for (p, tag) in m.nodes.iter().zip(&m.tags) {
            match tag {
                BoundaryTag::Origin => assert_eq!(*p, [0.0, 0.0]),
                BoundaryTag::Horizontal => assert!(p[1] == 0.0 && p[0] > 0.0 && p[0] < m.x_l),
                BoundaryTag::Vertical => assert!(p[0] == 0.0 && p[1] > 0.0 && p[1] < m.y_l),
                BoundaryTag::Outer => assert!(p[0] == m.x_l || p[1] == m.y_l),
                BoundaryTag::Interior => assert!(p[0] > 0.0 && p[1] > 0.0 && p[0] < m.x_l && p[1] < m.y_l),
            }
        }
    }

    #[test]
    fn quality_examples() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mut m = Mesh {
            nodes,
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            tags: vec![BoundaryTag::Interior; 4],
            rim: vec![],
            x_l: 1.0,
            y_l: 1.0,
        };
        assert_eq!(mesh_quality(&m), 1.0);
        m.nodes[3] = [0.0, 0.5];
        m.nodes[2] = [1.0, 1.0];
        // second triangle: (0,0),(1,1),(0,0.5) → area 0.25; first 0.5
        assert_eq!(mesh_quality(&m), 0.5);
    }

    #[test]
    fn locator_reproduces_linear_fields() {
        let m = generate_mesh(&rect(), 0.3).unwrap();
        let loc = PointLocator::new(&m.nodes, &m.triangles);
        let f: Vec<f64> = m.nodes.iter().map(|p| 1.0 + 2.0 * p[0] - 3.0 * p[1]).collect();
        for k in 0..200 {
            let p = [5.0 * ((k * 37) % 200) as f64 / 200.0, 2.5 * ((k * 91) % 200) as f64 / 200.0];
            let l = loc.locate(p);
            assert!(!l.fallback);
            let v = loc.interpolate(&l, &f);
            assert!((v - (1.0 + 2.0 * p[0] - 3.0 * p[1])).abs() < 1e-10);
        }
        let l = loc.locate([6.0, 1.0]);
        assert!(l.fallback);
    }

    #[test]
    fn crossing_rim_is_rejected() {
        let rim = vec![[1.0, 0.0], [1.0, 1.0], [0.2, 0.2], [1.2, 0.4], [0.0, 1.0]];
        assert!(mesh_from_rim(&rim, 3.0, 3.0, 0.3).is_err());
    }

    #[test]
    fn auto_size_respects_cut() {
        let g = WoundGeometry::basic(ShapeKind::Rhombus, 0.5, 4.0).unwrap();
        assert!(auto_element_size(&g, 500) <= 0.15 + 1e-15);
    }
}
