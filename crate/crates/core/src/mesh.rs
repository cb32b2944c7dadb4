//! Conforming triangle meshes with labeled boundary parts and
//! newest-vertex bisection.
//!
//! Triangles are stored as `[a, b, peak]`, positively oriented, with the
//! refinement edge being `(a, b)` and the peak the newest vertex. Bisection
//! inserts the midpoint of the refinement edge and recursively refines
//! neighbours first whenever the shared edge is not their refinement edge,
//! so the result is always conforming and the number of similarity classes
//! stays bounded.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};

/// Boundary part labels: transmission (equality coupling) or Signorini
/// (unilateral contact).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BoundaryLabel {
    Transmission,
    Signorini,
}

impl BoundaryLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryLabel::Transmission => "transmission",
            BoundaryLabel::Signorini => "signorini",
        }
    }
}

impl std::str::FromStr for BoundaryLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "transmission" => Ok(BoundaryLabel::Transmission),
            "signorini" => Ok(BoundaryLabel::Signorini),
            other => Err(format!("unknown boundary label `{other}`")),
        }
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point2<f64>>,
    /// `[a, b, peak]`, counterclockwise; refinement edge `(a, b)`.
    pub triangles: Vec<[usize; 3]>,
    /// Bisection depth per triangle (0 on the initial mesh).
    pub generation: Vec<u32>,
    /// Boundary edges with labels, keyed by sorted vertex pair.
    pub boundary: BTreeMap<(usize, usize), BoundaryLabel>,
}

/// Per-edge geometry and adjacency.
#[derive(Debug, Clone)]
pub struct EdgeInfo {
    pub a: usize,
    pub b: usize,
    pub length: f64,
    /// Unit normal; for interior edges it points from `tris[0]` into
    /// `tris[1]`, for boundary edges outward.
    pub normal: Vector2<f64>,
    pub midpoint: Point2<f64>,
    /// Incident triangles (boundary edges have one).
    pub tris: Vec<usize>,
    pub label: Option<BoundaryLabel>,
}

#[derive(Debug, Clone)]
pub struct EdgeTable {
    pub edges: Vec<EdgeInfo>,
    pub index: BTreeMap<(usize, usize), usize>,
}

impl Mesh {
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let p = &self.vertices;
        0.5 * ((p[b].x - p[a].x) * (p[c].y - p[a].y) - (p[c].x - p[a].x) * (p[b].y - p[a].y))
    }

    pub fn area(&self, t: usize) -> f64 {
        self.signed_area(t).abs()
    }

    /// Diameter h_K (longest edge).
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let p = &self.vertices;
        let e0 = (p[b] - p[a]).norm();
        let e1 = (p[c] - p[b]).norm();
        let e2 = (p[a] - p[c]).norm();
        e0.max(e1).max(e2)
    }

    /// Diameter of the inscribed circle, 4|K| / perimeter.
    pub fn incircle_diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let p = &self.vertices;
        let per = (p[b] - p[a]).norm() + (p[c] - p[b]).norm() + (p[a] - p[c]).norm();
        4.0 * self.area(t) / per
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.diameter(t))
            .fold(0.0, f64::max)
    }

    /// max over triangles of h_K / rho_K.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.diameter(t) / self.incircle_diameter(t))
            .fold(0.0, f64::max)
    }

    pub fn barycenter(&self, t: usize) -> Point2<f64> {
        let [a, b, c] = self.triangles[t];
        let p = &self.vertices;
        Point2::from((p[a].coords + p[b].coords + p[c].coords) / 3.0)
    }

    /// Gradients of the three nodal basis functions on triangle `t`.
    pub fn shape_gradients(&self, t: usize) -> [Vector2<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        let p = &self.vertices;
        let inv2a = 1.0 / (2.0 * self.signed_area(t));
        let rot = |v: Vector2<f64>| Vector2::new(-v.y, v.x);
        [
            rot(p[c] - p[b]) * inv2a,
            rot(p[a] - p[c]) * inv2a,
            rot(p[b] - p[a]) * inv2a,
        ]
    }

    /// Gradient of the P1 function with the given nodal values on triangle `t`.
    pub fn p1_gradient(&self, t: usize, nodal: &[f64]) -> Vector2<f64> {
        let grads = self.shape_gradients(t);
        let [a, b, c] = self.triangles[t];
        nodal[a] * grads[0] + nodal[b] * grads[1] + nodal[c] * grads[2]
    }

    /// Build the edge table with lengths, normals and adjacency.
    pub fn edge_patches(&self) -> EdgeTable {
        let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges: Vec<EdgeInfo> = Vec::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                let key = edge_key(u, v);
                match index.get(&key) {
                    Some(&e) => edges[e].tris.push(t),
                    None => {
                        let pa = self.vertices[u];
                        let pb = self.vertices[v];
                        let tang = pb - pa;
                        let length = tang.norm();
                        // normal = tangent rotated by -90° in the first
                        // incident triangle's traversal direction: points out
                        // of that triangle.
                        let normal = Vector2::new(tang.y, -tang.x) / length;
                        index.insert(key, edges.len());
                        edges.push(EdgeInfo {
                            a: u,
                            b: v,
                            length,
                            normal,
                            midpoint: Point2::from((pa.coords + pb.coords) * 0.5),
                            tris: vec![t],
                            label: self.boundary.get(&key).copied(),
                        });
                    }
                }
            }
        }
        EdgeTable { edges, index }
    }

    /// Check conformity, orientation, label coverage and adjacency counts.
    pub fn validate(&self) -> Result<()> {
        for t in 0..self.triangles.len() {
            if self.signed_area(t) <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} is degenerate or negatively oriented"
                )));
            }
        }
        let table = self.edge_patches();
        for e in &table.edges {
            match e.tris.len() {
                1 => {
                    if e.label.is_none() {
                        return Err(Error::InvalidMesh(format!(
                            "edge ({}, {}) has one neighbour but no boundary label",
                            e.a, e.b
                        )));
                    }
                }
                2 => {
                    if e.label.is_some() {
                        return Err(Error::InvalidMesh(format!(
                            "interior edge ({}, {}) carries a boundary label",
                            e.a, e.b
                        )));
                    }
                }
                n => {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({}, {}) has {n} incident triangles",
                        e.a, e.b
                    )))
                }
            }
        }
        if !self
            .boundary
            .values()
            .any(|&l| l == BoundaryLabel::Transmission)
        {
            return Err(Error::Labels("transmission part must be nonempty".into()));
        }
        Ok(())
    }

    /// Number of triangles with more than one boundary edge (0 except on the
    /// minimal 2-triangle mesh).
    pub fn multi_boundary_triangles(&self) -> usize {
        self.triangles
            .iter()
            .filter(|tri| {
                (0..3)
                    .filter(|&k| {
                        self.boundary
                            .contains_key(&edge_key(tri[k], tri[(k + 1) % 3]))
                    })
                    .count()
                    > 1
            })
            .count()
    }

    /// Newest-vertex bisection of `marked` with recursive conforming closure.
    ///
    /// Pairs sharing a refinement edge are always split together, so the
    /// mesh is conforming after every elementary step.
    pub fn bisect(&self, marked: &[usize]) -> Refinement {
        let mut want: Vec<usize> = marked.to_vec();
        want.sort_unstable();
        want.dedup();
        for &t in &want {
            assert!(t < self.triangles.len(), "marked triangle {t} out of range");
        }
        let mut state = Refiner::new(self);
        for &t in &want {
            if !state.split_done[t] {
                state.ensure_split(t);
            }
        }
        Refinement {
            mesh: state.mesh,
            ancestor: state.ancestor,
            midpoints: state.midpoints,
        }
    }

    /// One round of uniform refinement (every triangle bisected).
    pub fn bisect_all(&self) -> Refinement {
        self.bisect(&(0..self.triangles.len()).collect::<Vec<_>>())
    }
}

/// Result of a bisection call.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub mesh: Mesh,
    /// new triangle index -> ancestor index in the unrefined mesh
    pub ancestor: Vec<usize>,
    /// created vertices in creation order: (new vertex, edge endpoints);
    /// endpoints may themselves be earlier new vertices
    pub midpoints: Vec<(usize, (usize, usize))>,
}

impl Refinement {
    /// Prolong nodal values from the unrefined mesh (exact P1 interpolation:
    /// every new vertex is an edge midpoint).
    pub fn prolong(&self, coarse: &[f64]) -> Vec<f64> {
        let mut fine = Vec::with_capacity(self.mesh.vertices.len());
        fine.extend_from_slice(coarse);
        for &(m, (a, b)) in &self.midpoints {
            debug_assert_eq!(m, fine.len());
            let val = 0.5 * (fine[a] + fine[b]);
            fine.push(val);
        }
        fine
    }

    /// Chain two refinements: `self` applied after `earlier`.
    pub fn compose(self, earlier: Refinement) -> Refinement {
        let ancestor = self
            .ancestor
            .iter()
            .map(|&mid| earlier.ancestor[mid])
            .collect();
        let mut midpoints = earlier.midpoints;
        midpoints.extend(self.midpoints);
        Refinement {
            mesh: self.mesh,
            ancestor,
            midpoints,
        }
    }
}

struct Refiner {
    mesh: Mesh,
    ancestor: Vec<usize>,
    midpoints: Vec<(usize, (usize, usize))>,
    /// edge -> incident triangle slots, kept current during splits
    edge_map: BTreeMap<(usize, usize), Vec<usize>>,
    /// per original slot: has the triangle that initially occupied it been
    /// bisected (possibly during closure for another mark)?
    split_done: Vec<bool>,
}

impl Refiner {
    fn new(mesh: &Mesh) -> Self {
        let mut edge_map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                edge_map
                    .entry(edge_key(tri[k], tri[(k + 1) % 3]))
                    .or_default()
                    .push(t);
            }
        }
        Refiner {
            mesh: mesh.clone(),
            ancestor: (0..mesh.triangles.len()).collect(),
            midpoints: Vec::new(),
            edge_map,
            split_done: vec![false; mesh.triangles.len()],
        }
    }

    fn ref_edge(&self, t: usize) -> (usize, usize) {
        let [a, b, _] = self.mesh.triangles[t];
        edge_key(a, b)
    }

    fn neighbour_across(&self, t: usize, e: (usize, usize)) -> Option<usize> {
        self.edge_map
            .get(&e)
            .and_then(|v| v.iter().copied().find(|&s| s != t))
    }

    /// Bisect the triangle in slot `t`, first making its refinement-edge
    /// neighbour compatible (one bisection of the neighbour is enough: the
    /// child adjacent across our refinement edge has it as its own
    /// refinement edge).
    fn ensure_split(&mut self, t: usize) {
        let mut stack = vec![t];
        while let Some(&top) = stack.last() {
            assert!(
                stack.len() <= self.mesh.triangles.len() + 4,
                "refinement recursion cycle"
            );
            let e = self.ref_edge(top);
            match self.neighbour_across(top, e) {
                Some(n) if self.ref_edge(n) != e => stack.push(n),
                n => {
                    self.split_pair(top, n, e);
                    stack.pop();
                }
            }
        }
    }

    /// Split `t` (and its compatible neighbour, if any) along edge `e`.
    fn split_pair(&mut self, t: usize, n: Option<usize>, e: (usize, usize)) {
        let m = {
            let p = Point2::from(
                (self.mesh.vertices[e.0].coords + self.mesh.vertices[e.1].coords) * 0.5,
            );
            self.mesh.vertices.push(p);
            self.mesh.vertices.len() - 1
        };
        self.midpoints.push((m, e));
        if let Some(label) = self.mesh.boundary.remove(&e) {
            self.mesh.boundary.insert(edge_key(e.0, m), label);
            self.mesh.boundary.insert(edge_key(e.1, m), label);
        }
        let mut group = vec![t];
        group.extend(n);
        for g in group {
            let [a, b, p] = self.mesh.triangles[g];
            debug_assert_eq!(edge_key(a, b), e);
            let gen = self.mesh.generation[g] + 1;
            let anc = self.ancestor[g];
            self.detach(g, [a, b, p]);
            // children [p, a, m] and [b, p, m]: CCW, old edges as refinement
            // edges, midpoint as the new peak.
            self.mesh.triangles[g] = [p, a, m];
            self.mesh.generation[g] = gen;
            self.attach(g, [p, a, m]);
            let s = self.mesh.triangles.len();
            self.mesh.triangles.push([b, p, m]);
            self.mesh.generation.push(gen);
            self.ancestor.push(anc);
            self.attach(s, [b, p, m]);
            if g < self.split_done.len() {
                self.split_done[g] = true;
            }
        }
    }

    fn detach(&mut self, t: usize, tri: [usize; 3]) {
        for k in 0..3 {
            let key = edge_key(tri[k], tri[(k + 1) % 3]);
            if let Some(v) = self.edge_map.get_mut(&key) {
                v.retain(|&s| s != t);
                if v.is_empty() {
                    self.edge_map.remove(&key);
                }
            }
        }
    }

    fn attach(&mut self, t: usize, tri: [usize; 3]) {
        for k in 0..3 {
            self.edge_map
                .entry(edge_key(tri[k], tri[(k + 1) % 3]))
                .or_default()
                .push(t);
        }
    }
}

/// Geometry descriptors for the built-in mesh generators.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Unit square (0,1)²; boundary segments bottom, right, top, left.
    UnitSquare,
    /// L-shaped domain (0,1)² minus [1/2,1]²; six boundary segments, counter-
    /// clockwise from (0,0).
    LShape,
    /// Simple closed polygon, counterclockwise vertex list; segment i joins
    /// vertex i to vertex i+1.
    Polygon(Vec<[f64; 2]>),
}

impl Geometry {
    /// Boundary segments as (start, end) pairs, counterclockwise.
    pub fn segments(&self) -> Vec<([f64; 2], [f64; 2])> {
        let verts: Vec<[f64; 2]> = match self {
            Geometry::UnitSquare => vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            Geometry::LShape => vec![
                [0.0, 0.0],
                [1.0, 0.0],
                [1.0, 0.5],
                [0.5, 0.5],
                [0.5, 1.0],
                [0.0, 1.0],
            ],
            Geometry::Polygon(v) => v.clone(),
        };
        let n = verts.len();
        (0..n).map(|i| (verts[i], verts[(i + 1) % n])).collect()
    }

    pub fn segment_count(&self) -> usize {
        self.segments().len()
    }
}

/// Generate a conforming mesh of `geometry` with grid pitch at most `h0`
/// (hence triangle diameters at most √2·h0) and the given per-segment labels.
///
/// Cells whose diagonal split would create a triangle with two boundary edges
/// are split into four triangles instead; the minimal 2-triangle square at
/// pitch 1 is kept as the documented exception.
pub fn generate_initial_mesh(
    geometry: &Geometry,
    labels: &[BoundaryLabel],
    h0: f64,
) -> Result<Mesh> {
    if !(h0 > 0.0) {
        return Err(Error::Geometry(format!("h0 must be positive, got {h0}")));
    }
    // grid resolutions beyond this exceed what the dense solver downstream
    // can handle anyway
    if 1.0 / h0 > 4096.0 {
        return Err(Error::Geometry(format!(
            "h0 = {h0} requests more than 4096 cells per direction"
        )));
    }
    let segments = geometry.segments();
    if labels.len() != segments.len() {
        return Err(Error::Labels(format!(
            "expected {} segment labels, got {}",
            segments.len(),
            labels.len()
        )));
    }
    if !labels.contains(&BoundaryLabel::Transmission) {
        return Err(Error::Labels("transmission part must be nonempty".into()));
    }
    let mesh = match geometry {
        Geometry::UnitSquare => {
            let n = (1.0 / h0).ceil().max(1.0) as usize;
            cell_mesh(&square_cells(n, n), 1.0 / n as f64, [0.0, 0.0])
        }
        Geometry::LShape => {
            // cells covering (0,1)² minus [1/2,1]²
            let n = (0.5 / h0).ceil().max(1.0) as usize;
            let pitch = 0.5 / n as f64;
            let mut cells = Vec::new();
            for j in 0..2 * n {
                for i in 0..2 * n {
                    if i < n || j < n {
                        cells.push((i, j));
                    }
                }
            }
            cell_mesh(&cells, pitch, [0.0, 0.0])
        }
        Geometry::Polygon(verts) => polygon_mesh(verts, h0)?,
    };
    attach_labels(mesh, &segments, labels)
}

fn square_cells(nx: usize, ny: usize) -> Vec<(usize, usize)> {
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push((i, j));
        }
    }
    cells
}

/// Structured mesh over a set of unit cells: diagonal split by default,
/// 4-way split where the diagonal split would put two boundary edges in one
/// triangle. The single-cell mesh stays the plain 2-triangle split.
fn cell_mesh(cells: &[(usize, usize)], pitch: f64, origin: [f64; 2]) -> Mesh {
    use std::collections::BTreeSet;
    let cellset: BTreeSet<(usize, usize)> = cells.iter().copied().collect();
    let mut vid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut vertices: Vec<Point2<f64>> = Vec::new();
    let mut vertex = |i: usize, j: usize, vertices: &mut Vec<Point2<f64>>| -> usize {
        *vid.entry((i, j)).or_insert_with(|| {
            vertices.push(Point2::new(
                origin[0] + pitch * i as f64,
                origin[1] + pitch * j as f64,
            ));
            vertices.len() - 1
        })
    };
    let has = |i: isize, j: isize| -> bool {
        i >= 0 && j >= 0 && cellset.contains(&(i as usize, j as usize))
    };
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for &(i, j) in cells {
        let (ii, jj) = (i as isize, j as isize);
        let bottom = !has(ii, jj - 1);
        let top = !has(ii, jj + 1);
        let left = !has(ii - 1, jj);
        let right = !has(ii + 1, jj);
        let v00 = vertex(i, j, &mut vertices);
        let v10 = vertex(i + 1, j, &mut vertices);
        let v11 = vertex(i + 1, j + 1, &mut vertices);
        let v01 = vertex(i, j + 1, &mut vertices);
        // Diagonal v00-v11: lower triangle sees bottom+right, upper sees
        // top+left.
        let needs_quad = cells.len() > 1 && ((bottom && right) || (top && left));
        if needs_quad {
            // center vertex: even grid index on the doubled lattice is not
            // representable; push directly.
            vertices.push(Point2::new(
                origin[0] + pitch * (i as f64 + 0.5),
                origin[1] + pitch * (j as f64 + 0.5),
            ));
            let c = vertices.len() - 1;
            // refinement edges = outer sides (longest)
            triangles.push([v00, v10, c]);
            triangles.push([v10, v11, c]);
            triangles.push([v11, v01, c]);
            triangles.push([v01, v00, c]);
        } else {
            // refinement edge = diagonal (longest), shared by the pair
            triangles.push([v11, v00, v10]);
            triangles.push([v00, v11, v01]);
        }
    }
    let generation = vec![0; triangles.len()];
    let mut mesh = Mesh {
        vertices,
        triangles,
        generation,
        boundary: BTreeMap::new(),
    };
    mark_boundary_edges(&mut mesh);
    mesh
}

/// Insert all single-neighbour edges into the boundary map with a placeholder
/// label (real labels attached afterwards).
fn mark_boundary_edges(mesh: &mut Mesh) {
    let mut count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for tri in &mesh.triangles {
        for k in 0..3 {
            *count.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
        }
    }
    mesh.boundary = count
        .into_iter()
        .filter(|&(_, c)| c == 1)
        .map(|(k, _)| (k, BoundaryLabel::Transmission))
        .collect();
}

fn attach_labels(
    mut mesh: Mesh,
    segments: &[([f64; 2], [f64; 2])],
    labels: &[BoundaryLabel],
) -> Result<Mesh> {
    let keys: Vec<(usize, usize)> = mesh.boundary.keys().copied().collect();
    for key in keys {
        let mid = Point2::from((mesh.vertices[key.0].coords + mesh.vertices[key.1].coords) * 0.5);
        let seg = segments
            .iter()
            .position(|&(a, b)| point_on_segment(mid, a, b, 1e-9))
            .ok_or_else(|| {
                Error::Labels(format!(
                    "boundary edge midpoint ({}, {}) lies on no geometry segment",
                    mid.x, mid.y
                ))
            })?;
        mesh.boundary.insert(key, labels[seg]);
    }
    mesh.validate()?;
    Ok(mesh)
}

fn point_on_segment(p: Point2<f64>, a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
    let a = Point2::new(a[0], a[1]);
    let b = Point2::new(b[0], b[1]);
    let ab = b - a;
    let ap = p - a;
    let len2 = ab.norm_squared();
    let cross = ab.x * ap.y - ab.y * ap.x;
    if cross.abs() > tol * len2.sqrt().max(1.0) {
        return false;
    }
    let t = ap.dot(&ab) / len2;
    (-tol..=1.0 + tol).contains(&t)
}

/// Ear-clipping triangulation of a simple polygon, then uniform bisection
/// until the grid pitch criterion h_K ≤ √2·h0 holds, then a 3-way split of
/// any triangle with two boundary edges.
fn polygon_mesh(verts: &[[f64; 2]], h0: f64) -> Result<Mesh> {
    let n = verts.len();
    if n < 3 {
        return Err(Error::Geometry("polygon needs at least 3 vertices".into()));
    }
    let pts: Vec<Point2<f64>> = verts.iter().map(|v| Point2::new(v[0], v[1])).collect();
    let area2: f64 = (0..n)
        .map(|i| {
            let p = pts[i];
            let q = pts[(i + 1) % n];
            p.x * q.y - q.x * p.y
        })
        .sum();
    if area2 <= 0.0 {
        return Err(Error::Geometry(
            "polygon must be counterclockwise and non-degenerate".into(),
        ));
    }
    if polygon_self_intersects(&pts) {
        return Err(Error::Geometry("polygon is self-intersecting".into()));
    }
    // ear clipping
    let mut ring: Vec<usize> = (0..n).collect();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut guard = 0;
    while ring.len() > 3 {
        guard += 1;
        if guard > n * n + 16 {
            return Err(Error::Geometry(
                "ear clipping failed (degenerate polygon?)".into(),
            ));
        }
        let m = ring.len();
        let mut clipped = false;
        for k in 0..m {
            let (ia, ib, ic) = (ring[(k + m - 1) % m], ring[k], ring[(k + 1) % m]);
            let (pa, pb, pc) = (pts[ia], pts[ib], pts[ic]);
            let cross = (pb - pa).x * (pc - pa).y - (pb - pa).y * (pc - pa).x;
            if cross <= 1e-14 {
                continue; // reflex or degenerate corner
            }
            let contains_other = ring
                .iter()
                .any(|&j| j != ia && j != ib && j != ic && point_in_triangle(pts[j], pa, pb, pc));
            if contains_other {
                continue;
            }
            triangles.push([ia, ib, ic]);
            ring.remove(k);
            clipped = true;
            break;
        }
        if !clipped {
            return Err(Error::Geometry(
                "ear clipping failed (non-simple polygon?)".into(),
            ));
        }
    }
    triangles.push([ring[0], ring[1], ring[2]]);
    let mut mesh = Mesh {
        vertices: pts,
        generation: vec![0; triangles.len()],
        triangles,
        boundary: BTreeMap::new(),
    };
    relabel_longest_edges(&mut mesh);
    mark_boundary_edges(&mut mesh);
    // split triangles with two boundary edges via an interior point
    split_multi_boundary(&mut mesh);
    // refine until pitch criterion holds
    let target = std::f64::consts::SQRT_2 * h0;
    while mesh.max_diameter() > target {
        if mesh.triangles.len() > 4_000_000 {
            return Err(Error::Geometry(format!(
                "h0 = {h0} needs more than 4 million triangles on this polygon"
            )));
        }
        mesh = mesh.bisect_all().mesh;
    }
    Ok(mesh)
}

fn relabel_longest_edges(mesh: &mut Mesh) {
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        let p = &mesh.vertices;
        let lens = [
            (p[tri[1]] - p[tri[0]]).norm(),
            (p[tri[2]] - p[tri[1]]).norm(),
            (p[tri[0]] - p[tri[2]]).norm(),
        ];
        let k = (0..3).max_by(|&i, &j| lens[i].total_cmp(&lens[j])).unwrap();
        mesh.triangles[t] = [tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]];
    }
}

fn split_multi_boundary(mesh: &mut Mesh) {
    loop {
        let bad = (0..mesh.triangles.len()).find(|&t| {
            let tri = mesh.triangles[t];
            (0..3)
                .filter(|&k| {
                    mesh.boundary
                        .contains_key(&edge_key(tri[k], tri[(k + 1) % 3]))
                })
                .count()
                > 1
        });
        let Some(t) = bad else { break };
        let tri = mesh.triangles[t];
        let c = mesh.barycenter(t);
        mesh.vertices.push(c);
        let cv = mesh.vertices.len() - 1;
        let gen = mesh.generation[t];
        mesh.triangles[t] = [tri[0], tri[1], cv];
        mesh.triangles.push([tri[1], tri[2], cv]);
        mesh.triangles.push([tri[2], tri[0], cv]);
        mesh.generation.push(gen);
        mesh.generation.push(gen);
    }
}

fn point_in_triangle(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> bool {
    let s = |u: Point2<f64>, v: Point2<f64>| (v - u).x * (p - u).y - (v - u).y * (p - u).x;
    let (d0, d1, d2) = (s(a, b), s(b, c), s(c, a));
    d0 >= -1e-14 && d1 >= -1e-14 && d2 >= -1e-14
}

fn polygon_self_intersects(pts: &[Point2<f64>]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            // skip adjacent segments
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            if segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

fn segments_cross(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>, d: Point2<f64>) -> bool {
    let orient = |p: Point2<f64>, q: Point2<f64>, r: Point2<f64>| {
        (q - p).x * (r - p).y - (q - p).y * (r - p).x
    };
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

// ---------------------------------------------------------------------------
// plain-text mesh format
// ---------------------------------------------------------------------------

/// Serialize in the documented plain-text format. Floats print in shortest
/// round-trip form, so write/parse cycles are bit-stable.
pub fn write_mesh_text(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "vertices {}", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{} {}", v.x, v.y);
    }
    let _ = writeln!(out, "triangles {}", mesh.triangles.len());
    for t in &mesh.triangles {
        let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "boundary {}", mesh.boundary.len());
    for (&(a, b), &label) in &mesh.boundary {
        let _ = writeln!(out, "{} {} {}", a, b, label.as_str());
    }
    out
}

/// Parse the plain-text mesh format; see `write_mesh_text` for the grammar.
pub fn parse_mesh_text(text: &str) -> Result<Mesh> {
    let all_lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut cursor = 0usize;
    let mut lines = std::iter::from_fn(move || {
        let item = all_lines.get(cursor).copied();
        cursor += 1;
        item
    });
    let fail = |line: usize, msg: String| Error::MeshFormat { line, msg };

    let expect_section =
        |lines: &mut dyn Iterator<Item = (usize, &str)>, name: &str| -> Result<(usize, usize)> {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| fail(0, format!("missing `{name}` section")))?;
            let mut it = l.split_whitespace();
            let head = it.next().unwrap_or("");
            if head != name {
                return Err(fail(ln, format!("expected `{name} <count>`, found `{l}`")));
            }
            let count: usize = it
                .next()
                .ok_or_else(|| fail(ln, format!("missing count after `{name}`")))?
                .parse()
                .map_err(|e| fail(ln, format!("bad count: {e}")))?;
            if it.next().is_some() {
                return Err(fail(ln, format!("trailing tokens after `{name} <count>`")));
            }
            Ok((ln, count))
        };

    let (_, nv) = expect_section(&mut lines, "vertices")?;
    if nv > 50_000_000 {
        return Err(fail(0, format!("vertex count {nv} too large")));
    }
    let mut vertices = Vec::with_capacity(nv.min(1 << 20));
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| fail(0, "unexpected end of input in vertex list".into()))?;
        let mut it = l.split_whitespace();
        let x: f64 = it
            .next()
            .ok_or_else(|| fail(ln, "missing x coordinate".into()))?
            .parse()
            .map_err(|e| fail(ln, format!("bad x coordinate: {e}")))?;
        let y: f64 = it
            .next()
            .ok_or_else(|| fail(ln, "missing y coordinate".into()))?
            .parse()
            .map_err(|e| fail(ln, format!("bad y coordinate: {e}")))?;
        if it.next().is_some() {
            return Err(fail(ln, "trailing tokens on vertex line".into()));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(fail(ln, "coordinates must be finite".into()));
        }
        vertices.push(Point2::new(x, y));
    }
    let (_, nt) = expect_section(&mut lines, "triangles")?;
    if nt > 50_000_000 {
        return Err(fail(0, format!("triangle count {nt} too large")));
    }
    let mut triangles = Vec::with_capacity(nt.min(1 << 20));
    for _ in 0..nt {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| fail(0, "unexpected end of input in triangle list".into()))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| fail(ln, format!("bad index: {e}")))
            })
            .collect::<Result<_>>()?;
        if idx.len() != 3 {
            return Err(fail(
                ln,
                format!("expected 3 vertex indices, got {}", idx.len()),
            ));
        }
        for &i in &idx {
            if i >= vertices.len() {
                return Err(fail(ln, format!("vertex index {i} out of range")));
            }
        }
        if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
            return Err(fail(ln, "triangle has repeated vertices".into()));
        }
        triangles.push([idx[0], idx[1], idx[2]]);
    }
    let (_, nb) = expect_section(&mut lines, "boundary")?;
    if nb > 50_000_000 {
        return Err(fail(0, format!("boundary count {nb} too large")));
    }
    let mut boundary = BTreeMap::new();
    for _ in 0..nb {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| fail(0, "unexpected end of input in boundary list".into()))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(fail(ln, format!("expected `a b label`, found `{l}`")));
        }
        let a: usize = toks[0]
            .parse()
            .map_err(|e| fail(ln, format!("bad index: {e}")))?;
        let b: usize = toks[1]
            .parse()
            .map_err(|e| fail(ln, format!("bad index: {e}")))?;
        if a >= vertices.len() || b >= vertices.len() || a == b {
            return Err(fail(ln, format!("bad boundary edge ({a}, {b})")));
        }
        let label: BoundaryLabel = toks[2].parse().map_err(|msg| fail(ln, msg))?;
        boundary.insert(edge_key(a, b), label);
    }
    if let Some((ln, l)) = lines.next() {
        return Err(fail(ln, format!("unexpected trailing content `{l}`")));
    }
    let mesh = Mesh {
        generation: vec![0; triangles.len()],
        vertices,
        triangles,
        boundary,
    };
    mesh.validate()?;
    Ok(mesh)
}
