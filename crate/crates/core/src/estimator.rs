//! Residual a posteriori error estimator and Dörfler marking.
//!
//! For the piecewise-constant stress σ = DW**(∇u) the estimator splits into
//!
//!   η_Ω   = Σ_K h_K ‖f‖_{L^{4/3}(K)} + Σ_{E interior} h_E ‖[ν·σ]‖_{L²(E)},
//!   η_C,1 = Σ_{E ⊂ Γs} ‖(ν·σ)₊‖_{L²(E)}          (no h-weight),
//!   η_C,2 = Σ_{E ⊂ Γs} ∫_E (ν·σ)₋ v,
//!   η_S   = Σ_{E ⊂ ∂Ω} h_E^{1/2} ‖ R + ν·σ - t0 ‖_{L²(E)},
//!
//! where R is the boundary P1 function representing S(u|Γ + v - u0) through
//! the boundary mass matrix. A two-level surrogate for the non-computable
//! best-approximation distance of V⁻¹(1/2 - K)(u|Γ + v - u0) is reported
//! separately and never enters the marking.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::bem::{assemble_double_layer, assemble_single_layer, BoundaryMesh};
use crate::energy::{Discretization, LoadAssembly};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryLabel, EdgeTable};
use crate::quadrature::{gauss_legendre, tri_7point};
use crate::solver::{MacroFields, SolutionState};

#[derive(Debug, Clone)]
pub struct EstimatorReport {
    /// per element: h_K ‖f‖_{L^{4/3}(K)}
    pub volume_parts: Vec<f64>,
    /// per edge-table edge: h_E ‖[ν·σ]‖_{L²(E)} (interior edges only)
    pub jump_parts: Vec<f64>,
    /// per edge: ‖(ν·σ)₊‖_{L²(E)} on Signorini edges
    pub contact_pos_parts: Vec<f64>,
    /// per edge: ∫_E (ν·σ)₋ v on Signorini edges
    pub contact_comp_parts: Vec<f64>,
    /// per edge: h_E^{1/2}‖S(w-u0) lift + ν·σ - t0‖_{L²(E)} on boundary edges
    pub flux_parts: Vec<f64>,
    pub eta_omega: f64,
    pub eta_c1: f64,
    pub eta_c2: f64,
    pub eta_s: f64,
    /// marking indicator per element: volume + half of incident interior
    /// edge jumps + own boundary-edge terms
    pub indicator: Vec<f64>,
    pub edges: EdgeTable,
}

impl EstimatorReport {
    pub fn total(&self) -> f64 {
        self.eta_omega + self.eta_c1 + self.eta_c2 + self.eta_s
    }
}

pub fn estimate(
    disc: &Discretization,
    data: &crate::energy::ProblemData,
    load: &LoadAssembly,
    state: &SolutionState,
    fields: &MacroFields,
) -> Result<EstimatorReport> {
    let mesh = &disc.mesh;
    let table = mesh.edge_patches();
    let nt = mesh.triangles.len();
    let ne = table.edges.len();

    // volume terms h_K ‖f‖_{4/3, K}
    let mut volume_parts = vec![0.0; nt];
    for t in 0..nt {
        let tri = mesh.triangles[t];
        let pts = [
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        ];
        let area = mesh.area(t);
        let mut acc = 0.0;
        for &(lambda, wq) in tri_7point().iter() {
            let x = lambda[0] * pts[0].x + lambda[1] * pts[1].x + lambda[2] * pts[2].x;
            let y = lambda[0] * pts[0].y + lambda[1] * pts[1].y + lambda[2] * pts[2].y;
            let f = (data.f)(x, y);
            if !f.is_finite() {
                return Err(Error::NonFiniteData(x, y));
            }
            acc += area * wq * f.abs().powf(4.0 / 3.0);
        }
        volume_parts[t] = mesh.diameter(t) * acc.powf(0.75);
    }

    // boundary P1 lift of S(w - u0)
    let w = &fields.boundary_value;
    let s_defect = disc.sp.apply(&(w - &load.u0_nodes));
    let mass = Cholesky::new(disc.bm.mass_p1())
        .ok_or(Error::NotPositiveDefinite("boundary mass matrix"))?;
    let lift = mass.solve(&s_defect);

    let mut jump_parts = vec![0.0; ne];
    let mut contact_pos_parts = vec![0.0; ne];
    let mut contact_comp_parts = vec![0.0; ne];
    let mut flux_parts = vec![0.0; ne];

    let n_u = disc.layout.n_u;
    // nodal values of v on mesh vertices (zero off the Signorini dofs)
    let v_at_vertex = |vertex: usize| -> f64 {
        disc.bm
            .node_of_vertex
            .get(&vertex)
            .and_then(|&k| disc.layout.node_vdof[k])
            .map_or(0.0, |j| state.x[n_u + j])
    };

    for (e, edge) in table.edges.iter().enumerate() {
        match edge.tris.as_slice() {
            [t0, t1] => {
                let jump = edge.normal.dot(&(fields.sigma[*t0] - fields.sigma[*t1]));
                // constant jump: L² norm is |jump|·h^{1/2}, weighted by h_E
                jump_parts[e] = edge.length.powf(1.5) * jump.abs();
            }
            [t0] => {
                let sn = edge.normal.dot(&fields.sigma[*t0]);
                if edge.label == Some(BoundaryLabel::Signorini) {
                    contact_pos_parts[e] = sn.max(0.0) * edge.length.sqrt();
                    let va = v_at_vertex(edge.a);
                    let vb = v_at_vertex(edge.b);
                    contact_comp_parts[e] = (-sn).max(0.0) * edge.length * 0.5 * (va + vb);
                }
                // flux mismatch term on every boundary edge
                let ka = disc.bm.node_of_vertex[&edge.a];
                let kb = disc.bm.node_of_vertex[&edge.b];
                let (ra, rb) = (lift[ka], lift[kb]);
                let pa = mesh.vertices[edge.a];
                let pb = mesh.vertices[edge.b];
                let mut acc = 0.0;
                for &(xi, wq) in gauss_legendre(8) {
                    let s = 0.5 * (xi + 1.0);
                    let x = pa.x + s * (pb.x - pa.x);
                    let y = pa.y + s * (pb.y - pa.y);
                    let t0v = (data.t0)(x, y);
                    if !t0v.is_finite() {
                        return Err(Error::NonFiniteData(x, y));
                    }
                    let r = ra + s * (rb - ra);
                    let val = r + sn - t0v;
                    acc += wq * val * val;
                }
                let l2 = (acc * 0.5 * edge.length).sqrt();
                flux_parts[e] = edge.length.sqrt() * l2;
            }
            _ => unreachable!("validated mesh"),
        }
    }

    let eta_omega: f64 = volume_parts.iter().sum::<f64>() + jump_parts.iter().sum::<f64>();
    let eta_c1: f64 = contact_pos_parts.iter().sum();
    let eta_c2: f64 = contact_comp_parts.iter().sum();
    let eta_s: f64 = flux_parts.iter().sum();

    // element indicators for marking
    let mut indicator = volume_parts.clone();
    for (e, edge) in table.edges.iter().enumerate() {
        match edge.tris.as_slice() {
            [t0, t1] => {
                indicator[*t0] += 0.5 * jump_parts[e];
                indicator[*t1] += 0.5 * jump_parts[e];
            }
            [t0] => {
                indicator[*t0] += contact_pos_parts[e] + contact_comp_parts[e] + flux_parts[e];
            }
            _ => unreachable!(),
        }
    }

    Ok(EstimatorReport {
        volume_parts,
        jump_parts,
        contact_pos_parts,
        contact_comp_parts,
        flux_parts,
        eta_omega,
        eta_c1,
        eta_c2,
        eta_s,
        indicator,
        edges: table,
    })
}

/// Dörfler bulk marking: smallest index-greedy set carrying a θ-fraction of
/// the total indicator. Ties break by element index.
pub fn mark(report: &EstimatorReport, theta: f64) -> Vec<usize> {
    assert!(theta > 0.0 && theta <= 1.0, "theta must be in (0, 1]");
    let mut order: Vec<usize> = (0..report.indicator.len()).collect();
    order.sort_by(|&a, &b| {
        report.indicator[b]
            .total_cmp(&report.indicator[a])
            .then(a.cmp(&b))
    });
    let total: f64 = report.indicator.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let target = theta * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for &t in &order {
        if acc >= target || report.indicator[t] == 0.0 {
            break;
        }
        acc += report.indicator[t];
        marked.push(t);
    }
    marked.sort_unstable();
    marked
}

/// Two-level surrogate for the non-computable best-approximation distance:
/// solve the first-kind equation on the once-refined boundary and measure
/// the V-energy of the component orthogonal to the coarse P0 space.
/// Heuristic diagnostic only.
pub fn dist_surrogate(bm: &BoundaryMesh, datum: &DVector<f64>) -> Result<f64> {
    let fine = bm.refined();
    let nc = bm.n_nodes();
    let nf = fine.n_nodes();
    let v_f = assemble_single_layer(&fine)?;
    let k_f = assemble_double_layer(&fine);
    let m_f = fine.mass_p0_p1() * fine.scale;
    let chol = Cholesky::new(v_f.clone())
        .ok_or(Error::NotPositiveDefinite("refined single-layer matrix"))?;
    // prolong the P1 datum
    let mut datum_f = DVector::zeros(nf);
    for i in 0..nc {
        datum_f[2 * i] = datum[i];
        datum_f[2 * i + 1] = 0.5 * (datum[i] + datum[(i + 1) % nc]);
    }
    let rhs = (m_f * 0.5 - k_f) * datum_f;
    let z = chol.solve(&rhs);
    // coarse P0 injection: coarse panel i covers fine panels 2i, 2i+1
    let mut inj = DMatrix::zeros(nf, nc);
    for i in 0..nc {
        inj[(2 * i, i)] = 1.0;
        inj[(2 * i + 1, i)] = 1.0;
    }
    let gram = inj.transpose() * &v_f * &inj;
    let proj_rhs = inj.transpose() * (&v_f * &z);
    let y = Cholesky::new(gram)
        .ok_or(Error::NotPositiveDefinite("coarse Gram matrix"))?
        .solve(&proj_rhs);
    let total = z.dot(&(&v_f * &z));
    let explained = y.dot(&proj_rhs);
    Ok((total - explained).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{assemble_load, DofLayout, ProblemData};
    use crate::mesh::{generate_initial_mesh, Geometry};
    use crate::potential::WellParams;
    use crate::solver::extract_macro;
    use approx::assert_relative_eq;
    use nalgebra::Vector2;

    fn wells() -> WellParams {
        WellParams::new(Vector2::new(-1.0, 0.0), Vector2::new(1.0, 0.0)).unwrap()
    }

    fn disc_square(h0: f64) -> Discretization {
        let labels = vec![
            BoundaryLabel::Signorini,
            BoundaryLabel::Transmission,
            BoundaryLabel::Transmission,
            BoundaryLabel::Transmission,
        ];
        let mesh = generate_initial_mesh(&Geometry::UnitSquare, &labels, h0).unwrap();
        Discretization::build(mesh).unwrap()
    }

    fn zero_state(disc: &Discretization) -> SolutionState {
        SolutionState {
            x: DVector::zeros(disc.layout.n_dofs()),
            multiplier: 0.0,
            active: vec![true; disc.layout.n_v()],
            iterations: Vec::new(),
            residual: 0.0,
        }
    }

    #[test]
    fn zero_everything_gives_zero_estimator() {
        let disc = disc_square(0.5);
        let data = ProblemData::zero();
        let load = assemble_load(&disc, &data).unwrap();
        let state = zero_state(&disc);
        let fields = extract_macro(&disc, &wells(), &state);
        let report = estimate(&disc, &data, &load, &state, &fields).unwrap();
        assert_eq!(report.total(), 0.0);
        assert!(report.indicator.iter().all(|&i| i == 0.0));
        assert!(mark(&report, 0.5).is_empty());
    }

    #[test]
    fn volume_term_matches_per_element_oracle() {
        // f = 1, zero state: volume part must be Σ h_K |K|^{3/4}
        let disc = disc_square(0.5);
        let data = ProblemData::constants(1.0, 0.0, 0.0);
        let load = assemble_load(&disc, &data).unwrap();
        let state = zero_state(&disc);
        let fields = extract_macro(&disc, &wells(), &state);
        let report = estimate(&disc, &data, &load, &state, &fields).unwrap();
        for t in 0..disc.mesh.triangles.len() {
            let expect = disc.mesh.diameter(t) * disc.mesh.area(t).powf(0.75);
            assert_relative_eq!(report.volume_parts[t], expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn manufactured_jump_term() {
        // two-triangle square with u chosen so the gradients differ across
        // the diagonal; expected jump term |Δσ·ν| h^{3/2} evaluated by hand
        // from the envelope gradient
        let mesh = generate_initial_mesh(
            &Geometry::UnitSquare,
            &[BoundaryLabel::Transmission; 4],
            1.0,
        )
        .unwrap();
        let disc = Discretization::build(mesh).unwrap();
        let well = wells();
        let data = ProblemData::zero();
        let load = assemble_load(&disc, &data).unwrap();
        let mut state = zero_state(&disc);
        // nodal values: pick u with different per-triangle gradients
        for (i, p) in disc.mesh.vertices.iter().enumerate() {
            state.x[i] = 2.0 * p.x * p.y; // P1 interpolant differs per triangle
        }
        let fields = extract_macro(&disc, &well, &state);
        let report = estimate(&disc, &data, &load, &state, &fields).unwrap();
        let table = &report.edges;
        let (e, edge) = table
            .edges
            .iter()
            .enumerate()
            .find(|(_, e)| e.tris.len() == 2)
            .unwrap();
        let jump = edge
            .normal
            .dot(&(fields.sigma[edge.tris[0]] - fields.sigma[edge.tris[1]]));
        let expect = edge.length.powf(1.5) * jump.abs();
        assert!(expect > 0.0);
        assert_relative_eq!(report.jump_parts[e], expect, max_relative = 1e-12);
        assert_relative_eq!(
            report.eta_omega,
            report.jump_parts.iter().sum::<f64>(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn totals_are_sums_of_parts_and_nonnegative() {
        let disc = disc_square(0.25);
        let well = wells();
        let data = ProblemData::constants(0.3, 0.1, 0.0);
        let load = assemble_load(&disc, &data).unwrap();
        let sol = crate::solver::solve(&disc, &well, &load, &Default::default()).unwrap();
        let fields = extract_macro(&disc, &well, &sol);
        let report = estimate(&disc, &data, &load, &sol, &fields).unwrap();
        for part in report
            .volume_parts
            .iter()
            .chain(&report.jump_parts)
            .chain(&report.contact_pos_parts)
            .chain(&report.contact_comp_parts)
            .chain(&report.flux_parts)
        {
            assert!(*part >= 0.0);
        }
        let sum = report.volume_parts.iter().sum::<f64>() + report.jump_parts.iter().sum::<f64>();
        assert_relative_eq!(report.eta_omega, sum, max_relative = 1e-12);
        assert!(report.total() >= report.eta_s);
    }

    #[test]
    fn indicator_is_assembly_order_independent() {
        // relabeling elements permutes the indicator but leaves totals alone
        let disc = disc_square(0.25);
        let well = wells();
        let data = ProblemData::constants(0.5, 0.0, 0.0);
        let load = assemble_load(&disc, &data).unwrap();
        let sol = crate::solver::solve(&disc, &well, &load, &Default::default()).unwrap();
        let fields = extract_macro(&disc, &well, &sol);
        let report = estimate(&disc, &data, &load, &sol, &fields).unwrap();

        let mut mesh2 = disc.mesh.clone();
        let nt = mesh2.triangles.len();
        let perm: Vec<usize> = (0..nt).rev().collect();
        mesh2.triangles = perm.iter().map(|&t| mesh2.triangles[t]).collect();
        mesh2.generation = perm.iter().map(|&t| mesh2.generation[t]).collect();
        let disc2 = Discretization::build(mesh2).unwrap();
        // same dof layout (vertices unchanged), so the state carries over
        let layout2 = DofLayout::build(&disc2.mesh, &disc2.bm);
        assert_eq!(layout2.n_dofs(), disc.layout.n_dofs());
        let load2 = assemble_load(&disc2, &data).unwrap();
        let sol2 = SolutionState {
            x: sol.x.clone(),
            ..zero_state(&disc2)
        };
        let fields2 = extract_macro(&disc2, &well, &sol2);
        let report2 = estimate(&disc2, &data, &load2, &sol2, &fields2).unwrap();
        assert_relative_eq!(report.total(), report2.total(), max_relative = 1e-12);
        for (t, &t_old) in perm.iter().enumerate() {
            assert_relative_eq!(
                report2.indicator[t],
                report.indicator[t_old],
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn complementarity_terms_vanish_for_admissible_stress() {
        // state with inward normal stress on the contact edges and v = 0
        let disc = disc_square(0.25);
        let well = wells();
        let data = ProblemData::zero();
        let load = assemble_load(&disc, &data).unwrap();
        let mut state = zero_state(&disc);
        for (i, p) in disc.mesh.vertices.iter().enumerate() {
            state.x[i] = 0.3 * p.y; // ∂y u > 0, bottom normal (0,-1): ν·σ < 0
        }
        let fields = extract_macro(&disc, &well, &state);
        let report = estimate(&disc, &data, &load, &state, &fields).unwrap();
        assert_eq!(report.eta_c1, 0.0);
        assert_eq!(report.eta_c2, 0.0); // v = 0 kills the second term too
    }

    #[test]
    fn dorfler_marking_rules() {
        let disc = disc_square(0.5);
        let data = ProblemData::zero();
        let load = assemble_load(&disc, &data).unwrap();
        let state = zero_state(&disc);
        let fields = extract_macro(&disc, &wells(), &state);
        let mut report = estimate(&disc, &data, &load, &state, &fields).unwrap();

        // uniform indicators on 8 elements, theta = 1/2: lowest 4 indices
        report.indicator = vec![1.0; 8];
        assert_eq!(mark(&report, 0.5), vec![0, 1, 2, 3]);
        // theta = 1 takes every nonzero indicator
        report.indicator = vec![1.0, 0.0, 2.0, 0.0, 3.0, 1.0, 0.0, 0.5];
        let all = mark(&report, 1.0);
        assert_eq!(all, vec![0, 2, 4, 5, 7]);
        // one dominant element
        report.indicator = vec![0.01, 10.0, 0.02, 0.01, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(mark(&report, 0.5), vec![1]);
    }

    #[test]
    fn dist_surrogate_zero_datum() {
        let disc = disc_square(0.25);
        let datum = DVector::zeros(disc.bm.n_nodes());
        assert_eq!(dist_surrogate(&disc.bm, &datum).unwrap(), 0.0);
    }

    #[test]
    fn dist_surrogate_small_for_resolved_datum() {
        // transmission problem driven by a smooth dipole-like datum: the
        // boundary datum is well resolved, so the two-level surrogate stays
        // below the flux-mismatch part it supplements
        let mesh = generate_initial_mesh(
            &Geometry::UnitSquare,
            &[crate::mesh::BoundaryLabel::Transmission; 4],
            0.125,
        )
        .unwrap();
        let disc = Discretization::build(mesh).unwrap();
        let well = wells();
        let data = ProblemData {
            f: Box::new(|_, _| 0.0),
            t0: Box::new(|_, _| 0.0),
            u0: Box::new(|x, y| {
                let (dx, dy) = (x - 0.5, y - 0.5);
                dx / (dx * dx + dy * dy)
            }),
        };
        let load = assemble_load(&disc, &data).unwrap();
        let sol = crate::solver::solve(&disc, &well, &load, &Default::default()).unwrap();
        let fields = crate::solver::extract_macro(&disc, &well, &sol);
        let report = estimate(&disc, &data, &load, &sol, &fields).unwrap();
        let datum = &fields.boundary_value - &load.u0_nodes;
        let surrogate = dist_surrogate(&disc.bm, &datum).unwrap();
        assert!(
            surrogate < report.eta_s,
            "surrogate {surrogate} should stay below eta_S {}",
            report.eta_s
        );
    }
}
