//! Region on which the displacement itself (not only its derived fields) is
//! minimizer-independent: elements whose line perpendicular to the well
//! direction A, drawn through the barycenter, stays inside the domain until
//! it reaches the transmission boundary.
//!
//! The line is traced across the triangulation in both directions at once by
//! clipping it against every triangle and merging the parameter intervals;
//! the endpoints of the component containing the barycenter are then matched
//! against the labeled boundary edges.

use nalgebra::{Point2, Vector2};

use crate::mesh::{BoundaryLabel, Mesh};
use crate::potential::WellParams;

/// Per-element flag: does the perpendicular component through the barycenter
/// touch the closure of the transmission part?
pub fn unique_displacement_region(mesh: &Mesh, well: &WellParams) -> Vec<bool> {
    let dir = Vector2::new(-well.a.y, well.a.x).normalize();
    let diam = mesh_diameter(mesh);
    let merge_tol = 1e-9 * diam;
    let touch_tol = 1e-7 * diam;
    let boundary_segments: Vec<(Point2<f64>, Point2<f64>, BoundaryLabel)> = mesh
        .boundary
        .iter()
        .map(|(&(a, b), &label)| (mesh.vertices[a], mesh.vertices[b], label))
        .collect();
    (0..mesh.triangles.len())
        .map(|t| {
            let origin = mesh.barycenter(t);
            let Some((t_min, t_max)) = component_through_origin(mesh, origin, dir, merge_tol)
            else {
                return false;
            };
            [t_min, t_max].iter().any(|&s| {
                let p = origin + s * dir;
                boundary_segments.iter().any(|&(a, b, label)| {
                    label == BoundaryLabel::Transmission
                        && point_segment_distance(p, a, b) <= touch_tol
                })
            })
        })
        .collect()
}

fn point_segment_distance(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}

fn mesh_diameter(mesh: &Mesh) -> f64 {
    let (mut lo, mut hi) = (mesh.vertices[0], mesh.vertices[0]);
    for p in &mesh.vertices {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    (hi - lo).norm()
}

/// Clip the line origin + t·dir against every triangle, merge the intervals,
/// and return the merged component containing t = 0.
fn component_through_origin(
    mesh: &Mesh,
    origin: Point2<f64>,
    dir: Vector2<f64>,
    tol: f64,
) -> Option<(f64, f64)> {
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        let pts = [
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        ];
        if let Some(iv) = clip_line_triangle(origin, dir, &pts) {
            intervals.push(iv);
        }
    }
    if intervals.is_empty() {
        return None;
    }
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv.0 <= last.1 + tol => last.1 = last.1.max(iv.1),
            _ => merged.push(iv),
        }
    }
    merged
        .into_iter()
        .find(|&(a, b)| a - tol <= 0.0 && 0.0 <= b + tol)
}

/// Parameter interval of the line inside one triangle, None if it misses.
/// Works in the perpendicular coordinate: the triangle is cut iff the vertex
/// offsets change sign.
fn clip_line_triangle(
    origin: Point2<f64>,
    dir: Vector2<f64>,
    pts: &[Point2<f64>; 3],
) -> Option<(f64, f64)> {
    let perp = Vector2::new(-dir.y, dir.x);
    let offs = [
        (pts[0] - origin).dot(&perp),
        (pts[1] - origin).dot(&perp),
        (pts[2] - origin).dot(&perp),
    ];
    let mut ts: Vec<f64> = Vec::with_capacity(4);
    for i in 0..3 {
        let j = (i + 1) % 3;
        let (oi, oj) = (offs[i], offs[j]);
        if oi == 0.0 {
            ts.push((pts[i] - origin).dot(&dir));
        }
        if (oi < 0.0 && oj > 0.0) || (oi > 0.0 && oj < 0.0) {
            let s = oi / (oi - oj);
            let p = pts[i] + s * (pts[j] - pts[i]);
            ts.push((p - origin).dot(&dir));
        }
    }
    if ts.len() < 2 {
        return None;
    }
    let lo = ts.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (hi > lo).then_some((lo, hi))
}
