//! Galerkin boundary-integral operators for the exterior 2D Laplace problem
//! on a closed polygonal boundary.
//!
//! Kernels use the fundamental solution G(x,y) = -(1/2π) log|x-y|. The
//! double layer carries the kernel ∂ν(y) G(x,y) with ν the outward normal of
//! the interior domain, so the Gauss integral of the kernel over the closed
//! curve is -1 for interior points and -1/2 on the open edges. Inner (panel)
//! integrals are closed forms; outer integrals use 16-point Gauss with
//! geometric subdivision near the inner panel.
//!
//! Coordinates are rescaled once so the boundary diameter is at most 1/2,
//! which makes the single-layer operator positive definite (logarithmic
//! capacity below one). All Galerkin matrices refer to the scaled geometry;
//! physical mass matrices for data pairings are provided separately.

use nalgebra::{DMatrix, DVector, Point2, Vector2};
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryLabel, Mesh};
use crate::quadrature::gauss_legendre;

/// Closed boundary chain extracted from a mesh: P1 nodes are chain vertices,
/// P0 panels are chain edges (panel i joins node i to node i+1 mod n).
#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    /// mesh vertex index per chain node
    pub nodes: Vec<usize>,
    /// original (unscaled) coordinates per chain node
    pub points: Vec<Point2<f64>>,
    /// boundary label per panel
    pub labels: Vec<BoundaryLabel>,
    /// coordinate scale factor applied before assembly
    pub scale: f64,
    /// chain node index per mesh vertex
    pub node_of_vertex: BTreeMap<usize, usize>,
}

impl BoundaryMesh {
    /// Extract the (single, closed) boundary chain of `mesh`, oriented
    /// counterclockwise, and fix the assembly scale from the bounding box.
    pub fn from_mesh(mesh: &Mesh) -> Result<Self> {
        let mut bm = Self::from_mesh_unscaled(mesh)?;
        let (mut lo, mut hi) = (bm.points[0], bm.points[0]);
        for p in &bm.points {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let diag = (hi - lo).norm();
        bm.scale = if diag > 0.5 { 0.5 / diag } else { 1.0 };
        Ok(bm)
    }

    /// Like `from_mesh` but with an explicit scale factor.
    pub fn from_mesh_with_scale(mesh: &Mesh, scale: f64) -> Result<Self> {
        let mut bm = Self::from_mesh_unscaled(mesh)?;
        bm.scale = scale;
        Ok(bm)
    }

    fn from_mesh_unscaled(mesh: &Mesh) -> Result<Self> {
        // Directed boundary edges: each boundary edge appears in exactly one
        // triangle, traversed with the domain on its left.
        let mut succ: BTreeMap<usize, (usize, BoundaryLabel)> = BTreeMap::new();
        for tri in &mesh.triangles {
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                let key = if u < v { (u, v) } else { (v, u) };
                if let Some(&label) = mesh.boundary.get(&key) {
                    if succ.insert(u, (v, label)).is_some() {
                        return Err(Error::InvalidMesh(
                            "boundary is not a single closed curve".into(),
                        ));
                    }
                }
            }
        }
        if succ.is_empty() {
            return Err(Error::InvalidMesh("mesh has no boundary".into()));
        }
        let start = *succ.keys().next().unwrap();
        let mut nodes = vec![start];
        let mut labels = Vec::new();
        let mut cur = start;
        loop {
            let &(next, label) = succ
                .get(&cur)
                .ok_or_else(|| Error::InvalidMesh("boundary chain is broken".into()))?;
            labels.push(label);
            if next == start {
                break;
            }
            nodes.push(next);
            cur = next;
        }
        if nodes.len() != succ.len() {
            return Err(Error::InvalidMesh(
                "boundary has more than one connected component".into(),
            ));
        }
        let points: Vec<Point2<f64>> = nodes.iter().map(|&v| mesh.vertices[v]).collect();
        for i in 0..points.len() {
            let j = (i + 1) % points.len();
            if (points[j] - points[i]).norm() == 0.0 {
                return Err(Error::DegeneratePanel(i));
            }
        }
        let node_of_vertex = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        Ok(BoundaryMesh {
            nodes,
            points,
            labels,
            scale: 1.0,
            node_of_vertex,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_panels(&self) -> usize {
        self.nodes.len()
    }

    /// Endpoints of panel `i` in original coordinates.
    pub fn panel(&self, i: usize) -> (Point2<f64>, Point2<f64>) {
        (self.points[i], self.points[(i + 1) % self.points.len()])
    }

    /// Endpoints of panel `i` in scaled coordinates.
    pub fn panel_scaled(&self, i: usize) -> (Point2<f64>, Point2<f64>) {
        let (a, b) = self.panel(i);
        (a * self.scale, b * self.scale)
    }

    pub fn panel_length(&self, i: usize) -> f64 {
        let (a, b) = self.panel(i);
        (b - a).norm()
    }

    /// Outward unit normal of panel `i` (the chain is counterclockwise).
    pub fn panel_normal(&self, i: usize) -> Vector2<f64> {
        let (a, b) = self.panel(i);
        let t = (b - a).normalize();
        Vector2::new(t.y, -t.x)
    }

    pub fn max_panel_length(&self) -> f64 {
        (0..self.n_panels())
            .map(|i| self.panel_length(i))
            .fold(0.0, f64::max)
    }

    /// Halve every panel. Node 2i of the result is node i of `self`.
    pub fn refined(&self) -> BoundaryMesh {
        let n = self.n_panels();
        let mut nodes = Vec::with_capacity(2 * n);
        let mut points = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(2 * n);
        for i in 0..n {
            let (a, b) = self.panel(i);
            nodes.push(self.nodes[i]);
            points.push(a);
            nodes.push(usize::MAX); // midpoint: no mesh vertex
            points.push(Point2::from((a.coords + b.coords) * 0.5));
            labels.push(self.labels[i]);
            labels.push(self.labels[i]);
        }
        let node_of_vertex = nodes
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v != usize::MAX)
            .map(|(k, &v)| (v, k))
            .collect();
        BoundaryMesh {
            nodes,
            points,
            labels,
            scale: self.scale,
            node_of_vertex,
        }
    }

    /// Physical P0×P1 mass matrix ⟨φ_i, ψ_j⟩ (unscaled lengths).
    pub fn mass_p0_p1(&self) -> DMatrix<f64> {
        let n = self.n_panels();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let half = 0.5 * self.panel_length(i);
            m[(i, i)] += half;
            m[(i, (i + 1) % n)] += half;
        }
        m
    }

    /// Physical P1×P1 boundary mass matrix (cyclic tridiagonal).
    pub fn mass_p1(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let l = self.panel_length(i);
            let j = (i + 1) % n;
            m[(i, i)] += l / 3.0;
            m[(j, j)] += l / 3.0;
            m[(i, j)] += l / 6.0;
            m[(j, i)] += l / 6.0;
        }
        m
    }

    /// Lumped physical P1 mass (row sums), used as the dual-norm surrogate.
    pub fn lumped_mass_p1(&self) -> DVector<f64> {
        let n = self.n_nodes();
        let mut d = DVector::zeros(n);
        for i in 0..n {
            let half = 0.5 * self.panel_length(i);
            d[i] += half;
            d[(i + 1) % n] += half;
        }
        d
    }
}

/// Dense Galerkin matrices on the scaled geometry.
#[derive(Debug, Clone)]
pub struct BoundaryOperators {
    /// ⟨Vφ_j, φ_i⟩, P0×P0, symmetric positive definite after scaling
    pub v_mat: DMatrix<f64>,
    /// ⟨φ_i, Kψ_j⟩, P0×P1
    pub k_mat: DMatrix<f64>,
    /// ⟨Wψ_j, ψ_i⟩, P1×P1, symmetric positive semidefinite, constants in
    /// the kernel
    pub w_mat: DMatrix<f64>,
    /// ⟨φ_i, ψ_j⟩ on the scaled geometry (the mass block of the Calderón
    /// projector family; physical pairings use `BoundaryMesh::mass_p0_p1`)
    pub m_mat: DMatrix<f64>,
}

impl BoundaryOperators {
    pub fn assemble(bm: &BoundaryMesh) -> Result<Self> {
        let v_mat = assemble_single_layer(bm)?;
        let k_mat = assemble_double_layer(bm);
        let w_mat = assemble_hypersingular_from(bm, &v_mat);
        let m_mat = bm.mass_p0_p1() * bm.scale;
        Ok(BoundaryOperators {
            v_mat,
            k_mat,
            w_mat,
            m_mat,
        })
    }
}

// ---------------------------------------------------------------------------
// panel primitives (closed forms)
// ---------------------------------------------------------------------------

/// Local frame of a straight panel with respect to an observation point:
/// s0/d are the tangential/normal coordinates of x relative to the panel
/// start, len the panel length.
struct PanelFrame {
    s0: f64,
    d: f64,
    len: f64,
}

impl PanelFrame {
    fn new(x: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> Self {
        let ab = b - a;
        let len = ab.norm();
        let tang = ab / len;
        let norm = Vector2::new(tang.y, -tang.x);
        let p = x - a;
        PanelFrame {
            s0: p.dot(&tang),
            d: p.dot(&norm),
            len,
        }
    }
}

/// ∫_panel log|x-y| ds_y (closed form; integrable at d = 0).
fn log_moment0(f: &PanelFrame) -> f64 {
    let prim = |u: f64| -> f64 {
        if u == 0.0 && f.d == 0.0 {
            return 0.0;
        }
        let r2 = u * u + f.d * f.d;
        let mut val = 0.5 * u * r2.ln() - u;
        if f.d != 0.0 {
            val += f.d * (u / f.d).atan();
        }
        val
    };
    prim(f.len - f.s0) - prim(-f.s0)
}

/// (I0, I1): ∫_panel (t/L)^0,1 · ∂ν(y)G(x,y) ds_y against the outward normal.
///
/// The kernel reduces to (d/2π) / ((t-s0)² + d²); for collinear observation
/// points (d = 0) the integral vanishes identically.
fn dlp_moments(f: &PanelFrame) -> (f64, f64) {
    if f.d == 0.0 {
        return (0.0, 0.0);
    }
    let inv2pi = 0.5 / std::f64::consts::PI;
    let (u0, u1) = (-f.s0, f.len - f.s0);
    let ang = (u1 / f.d).atan() - (u0 / f.d).atan();
    let i0 = inv2pi * ang;
    let logs = ((u1 * u1 + f.d * f.d) / (u0 * u0 + f.d * f.d)).ln();
    let i1 = inv2pi * (f.s0 * ang + 0.5 * f.d * logs) / f.len;
    (i0, i1)
}

/// Single-layer potential of a unit density on a panel: -(1/2π)∫ log|x-y|.
fn slp_panel(x: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let f = PanelFrame::new(x, a, b);
    -0.5 / std::f64::consts::PI * log_moment0(&f)
}

/// Double-layer potential of the two nodal hat functions on a panel:
/// returns (weight of start node, weight of end node).
fn dlp_panel_linear(x: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> (f64, f64) {
    let f = PanelFrame::new(x, a, b);
    let (i0, i1) = dlp_moments(&f);
    (i0 - i1, i1)
}

/// Outer integration over a panel with adaptive geometric subdivision
/// toward the inner panel when the panels are close.
fn outer_integral(
    a: Point2<f64>,
    b: Point2<f64>,
    inner_a: Point2<f64>,
    inner_b: Point2<f64>,
    f: &mut impl FnMut(Point2<f64>) -> f64,
) -> f64 {
    fn dist_to_segment(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
        let ab = b - a;
        let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        (p - (a + t * ab)).norm()
    }
    fn rec(
        a: Point2<f64>,
        b: Point2<f64>,
        ia: Point2<f64>,
        ib: Point2<f64>,
        f: &mut impl FnMut(Point2<f64>) -> f64,
        depth: u32,
    ) -> f64 {
        let len = (b - a).norm();
        let mid = Point2::from((a.coords + b.coords) * 0.5);
        let clearance = dist_to_segment(mid, ia, ib);
        if depth >= 28 || clearance > 2.0 * len {
            let mut acc = 0.0;
            for &(t, w) in gauss_legendre(16) {
                let s = 0.5 * (t + 1.0);
                let x = Point2::from(a.coords + s * (b.coords - a.coords));
                acc += w * f(x);
            }
            return acc * 0.5 * len;
        }
        rec(a, mid, ia, ib, f, depth + 1) + rec(mid, b, ia, ib, f, depth + 1)
    }
    rec(a, b, inner_a, inner_b, f, 0)
}

// ---------------------------------------------------------------------------
// assembly
// ---------------------------------------------------------------------------

/// Galerkin single-layer matrix ⟨Vφ_j, φ_i⟩ on the scaled geometry.
///
/// Identical panels use the closed form L²(3 - 2 log L)/(4π); distinct pairs
/// use the analytic inner integral and subdivided Gauss outside. The matrix
/// is assembled on the upper triangle and mirrored, so it is exactly
/// symmetric.
pub fn assemble_single_layer(bm: &BoundaryMesh) -> Result<DMatrix<f64>> {
    let n = bm.n_panels();
    for i in 0..n {
        if bm.panel_length(i) == 0.0 {
            return Err(Error::DegeneratePanel(i));
        }
    }
    let inv4pi = 0.25 / std::f64::consts::PI;
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (ai, bi) = bm.panel_scaled(i);
            let mut row = Vec::with_capacity(n - i);
            for j in i..n {
                let val = if i == j {
                    let l = (bi - ai).norm();
                    l * l * (3.0 - 2.0 * l.ln()) * inv4pi
                } else {
                    let (aj, bj) = bm.panel_scaled(j);
                    outer_integral(ai, bi, aj, bj, &mut |x| slp_panel(x, aj, bj))
                };
                row.push((j, val));
            }
            row
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, val) in row {
            m[(i, j)] = val;
            m[(j, i)] = val;
        }
    }
    Ok(m)
}

/// Galerkin double-layer matrix ⟨φ_i, Kψ_j⟩ on the scaled geometry.
///
/// Collinear observation points contribute nothing (the kernel vanishes on
/// straight panels), which covers the principal-value case x, y on the same
/// panel.
pub fn assemble_double_layer(bm: &BoundaryMesh) -> DMatrix<f64> {
    let n = bm.n_panels();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (ai, bi) = bm.panel_scaled(i);
            let mut row = vec![0.0; n];
            for p in 0..n {
                if p == i {
                    continue; // same straight panel: kernel is identically zero
                }
                let (ap, bp) = bm.panel_scaled(p);
                let start = outer_integral(ai, bi, ap, bp, &mut |x| dlp_panel_linear(x, ap, bp).0);
                let end = outer_integral(ai, bi, ap, bp, &mut |x| dlp_panel_linear(x, ap, bp).1);
                row[p] += start;
                row[(p + 1) % n] += end;
            }
            row
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, val) in row.into_iter().enumerate() {
            m[(i, j)] = val;
        }
    }
    m
}

/// Hypersingular matrix through the integration-by-parts identity
/// ⟨Wψ_i, ψ_j⟩ = ⟨Vψ_i', ψ_j'⟩ with arclength derivatives (P0 functions),
/// reusing the single-layer matrix on derivative densities.
pub fn assemble_hypersingular(bm: &BoundaryMesh) -> Result<DMatrix<f64>> {
    let v = assemble_single_layer(bm)?;
    Ok(assemble_hypersingular_from(bm, &v))
}

fn assemble_hypersingular_from(bm: &BoundaryMesh, v_mat: &DMatrix<f64>) -> DMatrix<f64> {
    let n = bm.n_nodes();
    // D[p, node]: arclength derivative of the nodal hats, panel by panel.
    let mut d = DMatrix::zeros(n, n);
    for p in 0..n {
        let inv_l = 1.0 / (bm.scale * bm.panel_length(p));
        d[(p, p)] -= inv_l;
        d[(p, (p + 1) % n)] += inv_l;
    }
    d.transpose() * v_mat * d
}

/// Debug dump: `matrix <rows> <cols>` followed by one whitespace-separated
/// row per line, shortest round-trip floats.
pub fn dump_matrix(m: &DMatrix<f64>) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "matrix {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// exterior evaluation
// ---------------------------------------------------------------------------

/// Gauss integral of the double-layer kernel over the whole boundary:
/// -1 inside, -1/2 on open edges, 0 outside (original coordinates).
fn gauss_angle_sum(bm: &BoundaryMesh, x: Point2<f64>) -> f64 {
    (0..bm.n_panels())
        .map(|p| {
            let (a, b) = bm.panel(p);
            dlp_moments(&PanelFrame::new(x, a, b)).0
        })
        .sum()
}

/// Representation-formula evaluation u(x) = (K g)(x) - (V ψ)(x) of the
/// exterior harmonic function with Dirichlet trace `g` (P1) and outward
/// normal derivative `psi` (P0), at points strictly exterior to the domain.
///
/// The combination decays at infinity when the total flux of `psi`
/// vanishes, matching the o(1) radiation condition.
pub fn evaluate_exterior(
    bm: &BoundaryMesh,
    dirichlet_trace: &DVector<f64>,
    neumann_trace: &DVector<f64>,
    points: &[Point2<f64>],
) -> Result<Vec<f64>> {
    let n = bm.n_panels();
    assert_eq!(dirichlet_trace.len(), n);
    assert_eq!(neumann_trace.len(), n);
    let clearance = bm.max_panel_length();
    let mut vals = Vec::with_capacity(points.len());
    for &x in points {
        let dist = (0..n)
            .map(|p| {
                let (a, b) = bm.panel(p);
                let ab = b - a;
                let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (x - (a + t * ab)).norm()
            })
            .fold(f64::INFINITY, f64::min);
        if dist <= clearance || gauss_angle_sum(bm, x) < -0.25 {
            return Err(Error::PointNearBoundary(x.x, x.y));
        }
        let mut val = 0.0;
        for p in 0..n {
            let (a, b) = bm.panel(p);
            let (wa, wb) = dlp_panel_linear(x, a, b);
            val += wa * dirichlet_trace[p] + wb * dirichlet_trace[(p + 1) % n];
            val -= neumann_trace[p] * slp_panel(x, a, b);
        }
        vals.push(val);
    }
    Ok(vals)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Cauchy data of the dipole u(x) = a·(x-x0)/|x-x0|² sampled on the
    /// boundary: nodal trace and panel-midpoint flux. With `scaled` the
    /// dipole lives in the scaled coordinates (center scaled along).
    pub fn dipole_data(
        bm: &BoundaryMesh,
        a: Vector2<f64>,
        x0: Point2<f64>,
        scaled: bool,
    ) -> (DVector<f64>, DVector<f64>) {
        let s = if scaled { bm.scale } else { 1.0 };
        let x0 = x0 * s;
        let n = bm.n_nodes();
        let val = |x: Point2<f64>| {
            let r = x - x0;
            a.dot(&r) / r.norm_squared()
        };
        let grad = |x: Point2<f64>| -> Vector2<f64> {
            let r = x - x0;
            let r2 = r.norm_squared();
            a / r2 - 2.0 * a.dot(&r) / (r2 * r2) * r
        };
        let g = DVector::from_iterator(n, (0..n).map(|k| val(bm.points[k] * s)));
        let psi = DVector::from_iterator(
            n,
            (0..n).map(|p| {
                let (pa, pb) = bm.panel(p);
                let mid = Point2::from((pa.coords + pb.coords) * 0.5 * s);
                let nu = bm.panel_normal(p);
                grad(mid).dot(&nu)
            }),
        );
        (g, psi)
    }
}
