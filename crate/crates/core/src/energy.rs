//! Coupled FE/BE degrees of freedom and the discrete energy
//!
//! ```text
//!     J(u, v) = ∫ W**(∇u) + ½ ⟨S(u|Γ + v), u|Γ + v⟩ - ℓ(u, v),
//!     ℓ(u, v) = ⟨t0 + S u0, u|Γ + v⟩ + ∫ f u,
//! ```
//!
//! over piecewise linears for u and the Signorini-supported boundary hats
//! for v. ∇u is constant per element, so the volume terms are exact; the
//! load volume term uses the 3-point edge-midpoint rule (exact for affine f
//! against P1 trials).

use nalgebra::{DMatrix, DVector, Point2};

use crate::bem::{BoundaryMesh, BoundaryOperators};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryLabel, Mesh};
use crate::potential::WellParams;
use crate::quadrature::{tri_7point, TRI_MIDPOINT};
use crate::steklov::{assemble_steklov, SteklovOperator};

/// Index maps for the coupled system: u-dofs are all mesh vertices, v-dofs
/// the boundary nodes whose hat functions are supported inside the closed
/// Signorini part (both incident boundary edges labeled Signorini).
#[derive(Debug, Clone)]
pub struct DofLayout {
    pub n_u: usize,
    /// v-dof -> boundary chain node
    pub v_node: Vec<usize>,
    /// boundary chain node -> v-dof
    pub node_vdof: Vec<Option<usize>>,
}

impl DofLayout {
    pub fn build(mesh: &Mesh, bm: &BoundaryMesh) -> Self {
        let n = bm.n_nodes();
        let mut node_vdof = vec![None; n];
        let mut v_node = Vec::new();
        for k in 0..n {
            let prev = (k + n - 1) % n;
            if bm.labels[prev] == BoundaryLabel::Signorini
                && bm.labels[k] == BoundaryLabel::Signorini
            {
                node_vdof[k] = Some(v_node.len());
                v_node.push(k);
            }
        }
        DofLayout {
            n_u: mesh.vertices.len(),
            v_node,
            node_vdof,
        }
    }

    pub fn n_v(&self) -> usize {
        self.v_node.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_u + self.v_node.len()
    }

    /// Boundary P1 coefficients of u|Γ + v for a full dof vector.
    pub fn boundary_value(&self, bm: &BoundaryMesh, x: &DVector<f64>) -> DVector<f64> {
        let n = bm.n_nodes();
        let mut w = DVector::zeros(n);
        for k in 0..n {
            w[k] = x[bm.nodes[k]];
            if let Some(j) = self.node_vdof[k] {
                w[k] += x[self.n_u + j];
            }
        }
        w
    }

    /// Adjoint of `boundary_value`: accumulate a boundary dual vector into
    /// the dof vector.
    pub fn scatter_boundary(&self, bm: &BoundaryMesh, d: &DVector<f64>, out: &mut DVector<f64>) {
        for k in 0..bm.n_nodes() {
            out[bm.nodes[k]] += d[k];
            if let Some(j) = self.node_vdof[k] {
                out[self.n_u + j] += d[k];
            }
        }
    }
}

/// One mesh level with its boundary chain, operators and dof maps.
pub struct Discretization {
    pub mesh: Mesh,
    pub bm: BoundaryMesh,
    pub ops: BoundaryOperators,
    pub sp: SteklovOperator,
    pub layout: DofLayout,
}

impl Discretization {
    pub fn build(mesh: Mesh) -> Result<Self> {
        let bm = BoundaryMesh::from_mesh(&mesh)?;
        let ops = BoundaryOperators::assemble(&bm)?;
        let sp = assemble_steklov(&ops)?;
        let layout = DofLayout::build(&mesh, &bm);
        Ok(Discretization {
            mesh,
            bm,
            ops,
            sp,
            layout,
        })
    }
}

/// Problem data: volume load f, boundary flux t0, boundary gap/transmission
/// datum u0, as point-evaluable scalar fields.
pub struct ProblemData {
    pub f: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub t0: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub u0: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl ProblemData {
    pub fn zero() -> Self {
        Self::constants(0.0, 0.0, 0.0)
    }

    pub fn constants(f: f64, t0: f64, u0: f64) -> Self {
        ProblemData {
            f: Box::new(move |_, _| f),
            t0: Box::new(move |_, _| t0),
            u0: Box::new(move |_, _| u0),
        }
    }
}

/// Discrete load and the n = 2 mean-constraint data.
pub struct LoadAssembly {
    /// ℓ over the dofs: ℓ·(u, v) = ⟨t0 + S u0, u|Γ + v⟩ + ∫ f u
    pub load: DVector<f64>,
    /// P1 interpolant of u0 on the boundary nodes
    pub u0_nodes: DVector<f64>,
    /// P0 projection (panel means) of t0
    pub t0_panels: DVector<f64>,
    /// constraint row a with a·x = rhs encoding ⟨S(u|Γ + v - u0), 1⟩ = 0
    pub constraint: DVector<f64>,
    pub constraint_rhs: f64,
}

fn check_finite(val: f64, x: f64, y: f64) -> Result<f64> {
    if val.is_finite() {
        Ok(val)
    } else {
        Err(Error::NonFiniteData(x, y))
    }
}

pub fn assemble_load(disc: &Discretization, data: &ProblemData) -> Result<LoadAssembly> {
    let layout = &disc.layout;
    let bm = &disc.bm;
    let nb = bm.n_nodes();
    // boundary data in discrete form
    let u0_nodes = DVector::from_iterator(
        nb,
        bm.points
            .iter()
            .map(|p| (data.u0)(p.x, p.y))
            .collect::<Vec<_>>(),
    );
    for (k, &v) in u0_nodes.iter().enumerate() {
        check_finite(v, bm.points[k].x, bm.points[k].y)?;
    }
    let mut t0_panels = DVector::zeros(nb);
    for p in 0..nb {
        let (a, b) = bm.panel(p);
        let mean =
            crate::quadrature::segment_integral([a.x, a.y], [b.x, b.y], 8, |x, y| (data.t0)(x, y))
                / bm.panel_length(p);
        t0_panels[p] = check_finite(mean, a.x, a.y)?;
    }
    // boundary dual vector Mᵀ t0 + S u0
    let dual = bm.mass_p0_p1().transpose() * &t0_panels + disc.sp.apply(&u0_nodes);
    let mut load = DVector::zeros(layout.n_dofs());
    layout.scatter_boundary(bm, &dual, &mut load);
    // volume term by 3-point quadrature
    for t in 0..disc.mesh.triangles.len() {
        let tri = disc.mesh.triangles[t];
        let area = disc.mesh.area(t);
        let pts: [Point2<f64>; 3] = [
            disc.mesh.vertices[tri[0]],
            disc.mesh.vertices[tri[1]],
            disc.mesh.vertices[tri[2]],
        ];
        for &(lambda, wq) in TRI_MIDPOINT.iter() {
            let x = lambda[0] * pts[0].x + lambda[1] * pts[1].x + lambda[2] * pts[2].x;
            let y = lambda[0] * pts[0].y + lambda[1] * pts[1].y + lambda[2] * pts[2].y;
            let fval = check_finite((data.f)(x, y), x, y)?;
            for i in 0..3 {
                load[tri[i]] += area * wq * fval * lambda[i];
            }
        }
    }
    // mean constraint ⟨S(w - u0), 1⟩ = 0: row a = scatter(S 1), rhs = (S 1)·u0
    let s_one = disc.sp.apply(&DVector::from_element(nb, 1.0));
    let mut constraint = DVector::zeros(layout.n_dofs());
    layout.scatter_boundary(bm, &s_one, &mut constraint);
    let constraint_rhs = s_one.dot(&u0_nodes);
    Ok(LoadAssembly {
        load,
        u0_nodes,
        t0_panels,
        constraint,
        constraint_rhs,
    })
}

/// Σ_K |K| W**(∇u_K): exact since ∇u is constant per element.
pub fn volume_energy(mesh: &Mesh, well: &WellParams, u: &DVector<f64>) -> f64 {
    (0..mesh.triangles.len())
        .map(|t| {
            let g = mesh.p1_gradient(t, u.as_slice());
            mesh.area(t) * well.w_relaxed(g)
        })
        .sum()
}

pub fn energy(
    disc: &Discretization,
    well: &WellParams,
    load: &LoadAssembly,
    state: &DVector<f64>,
) -> f64 {
    let u = state.rows(0, disc.layout.n_u).into_owned();
    let w = disc.layout.boundary_value(&disc.bm, state);
    volume_energy(&disc.mesh, well, &u) + 0.5 * w.dot(&disc.sp.apply(&w)) - load.load.dot(state)
}

pub fn energy_gradient(
    disc: &Discretization,
    well: &WellParams,
    load: &LoadAssembly,
    state: &DVector<f64>,
) -> DVector<f64> {
    let mesh = &disc.mesh;
    let mut g = -load.load.clone();
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        let grads = mesh.shape_gradients(t);
        let gu = mesh.p1_gradient(t, state.as_slice());
        let sigma = well.grad_w_relaxed(gu);
        let area = mesh.area(t);
        for i in 0..3 {
            g[tri[i]] += area * sigma.dot(&grads[i]);
        }
    }
    let w = disc.layout.boundary_value(&disc.bm, state);
    let sw = disc.sp.apply(&w);
    disc.layout.scatter_boundary(&disc.bm, &sw, &mut g);
    g
}

/// Branch-selected Hessian of the energy (volume part from the second
/// derivative of W**, plus the boundary S block).
pub fn energy_hessian(
    disc: &Discretization,
    well: &WellParams,
    state: &DVector<f64>,
) -> DMatrix<f64> {
    let mesh = &disc.mesh;
    let n = disc.layout.n_dofs();
    let mut h = DMatrix::zeros(n, n);
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangles[t];
        let grads = mesh.shape_gradients(t);
        let gu = mesh.p1_gradient(t, state.as_slice());
        let hw = well.hess_w_relaxed(gu);
        let area = mesh.area(t);
        for i in 0..3 {
            let hgi = hw * grads[i];
            for j in 0..3 {
                h[(tri[i], tri[j])] += area * grads[j].dot(&hgi);
            }
        }
    }
    // S coupling: rows/cols through the boundary scatter maps
    let bm = &disc.bm;
    let layout = &disc.layout;
    let nb = bm.n_nodes();
    let mut targets: Vec<Vec<usize>> = Vec::with_capacity(nb);
    for k in 0..nb {
        let mut t = vec![bm.nodes[k]];
        if let Some(j) = layout.node_vdof[k] {
            t.push(layout.n_u + j);
        }
        targets.push(t);
    }
    for k in 0..nb {
        for l in 0..nb {
            let s = disc.sp.s_mat[(k, l)];
            for &r in &targets[k] {
                for &c in &targets[l] {
                    h[(r, c)] += s;
                }
            }
        }
    }
    h
}

/// Recompute the volume energy with the 7-point rule (test oracle for
/// quadrature exactness).
pub fn volume_energy_quadrature(mesh: &Mesh, well: &WellParams, u: &DVector<f64>) -> f64 {
    (0..mesh.triangles.len())
        .map(|t| {
            let g = mesh.p1_gradient(t, u.as_slice());
            let area = mesh.area(t);
            tri_7point()
                .iter()
                .map(|&(_, wq)| area * wq * well.w_relaxed(g))
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_initial_mesh, Geometry};
    use approx::assert_relative_eq;
    use nalgebra::Vector2;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn disc_square(h0: f64, signorini_bottom: bool) -> Discretization {
        let labels = if signorini_bottom {
            vec![
                BoundaryLabel::Signorini,
                BoundaryLabel::Transmission,
                BoundaryLabel::Transmission,
                BoundaryLabel::Transmission,
            ]
        } else {
            vec![BoundaryLabel::Transmission; 4]
        };
        let mesh = generate_initial_mesh(&Geometry::UnitSquare, &labels, h0).unwrap();
        Discretization::build(mesh).unwrap()
    }

    fn wells() -> WellParams {
        WellParams::new(Vector2::new(-1.0, 0.0), Vector2::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn vdofs_are_interior_signorini_nodes() {
        let disc = disc_square(0.25, true);
        // bottom edge nodes strictly between the corners
        assert_eq!(disc.layout.n_v(), 3);
        for &k in &disc.layout.v_node {
            let p = disc.bm.points[k];
            assert_relative_eq!(p.y, 0.0);
            assert!(p.x > 0.0 && p.x < 1.0);
        }
        let all_t = disc_square(0.25, false);
        assert_eq!(all_t.layout.n_v(), 0);
    }

    #[test]
    fn zero_data_gives_zero_load() {
        let disc = disc_square(0.5, true);
        let load = assemble_load(&disc, &ProblemData::zero()).unwrap();
        assert_eq!(load.load.amax(), 0.0);
        assert_eq!(load.constraint_rhs, 0.0);
    }

    #[test]
    fn unit_volume_load_is_partition_of_unity() {
        let disc = disc_square(0.25, true);
        let load = assemble_load(&disc, &ProblemData::constants(1.0, 0.0, 0.0)).unwrap();
        let total: f64 = load.load.rows(0, disc.layout.n_u).iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        let v_total: f64 = load
            .load
            .rows(disc.layout.n_u, disc.layout.n_v())
            .iter()
            .sum();
        assert_eq!(v_total, 0.0);
    }

    #[test]
    fn constant_u0_load_consistency() {
        let disc = disc_square(0.25, true);
        let data = ProblemData::constants(0.7, 0.3, 0.9);
        let load = assemble_load(&disc, &data).unwrap();
        // ℓ·(1,0) = ⟨t0 + S u0, 1⟩ + ∫ f
        let mut ones = DVector::zeros(disc.layout.n_dofs());
        for i in 0..disc.layout.n_u {
            ones[i] = 1.0;
        }
        let lhs = load.load.dot(&ones);
        let one_b = DVector::from_element(disc.bm.n_nodes(), 1.0);
        let t0_pairing = (disc.bm.mass_p0_p1().transpose() * &load.t0_panels).dot(&one_b);
        let rhs = t0_pairing + disc.sp.apply(&load.u0_nodes).dot(&one_b) + 0.7;
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn zero_state_zero_energy() {
        let disc = disc_square(0.5, true);
        let load = assemble_load(&disc, &ProblemData::zero()).unwrap();
        let x = DVector::zeros(disc.layout.n_dofs());
        // W**(0) > 0 for the standard wells only if 0 is outside the relaxed
        // well; for wells ±(1, 0), W**(0) = 0.
        assert_eq!(energy(&disc, &wells(), &load, &x), 0.0);
    }

    #[test]
    fn well_gradient_has_zero_volume_energy() {
        let disc = disc_square(0.25, false);
        let well = wells();
        // u = F1 · x, linear with gradient exactly F1 everywhere
        let u = DVector::from_iterator(
            disc.layout.n_u,
            disc.mesh
                .vertices
                .iter()
                .map(|p| well.f1.x * p.x + well.f1.y * p.y),
        );
        assert!(volume_energy(&disc.mesh, &well, &u).abs() <= 1e-12);
    }

    #[test]
    fn energy_matches_independent_quadrature_path() {
        let disc = disc_square(0.25, true);
        let well = wells();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = DVector::from_fn(disc.layout.n_u, |_, _| rng.gen_range(-1.0..1.0));
        let direct = volume_energy(&disc.mesh, &well, &u);
        let quad = volume_energy_quadrature(&disc.mesh, &well, &u);
        assert_relative_eq!(direct, quad, epsilon = 1e-13, max_relative = 1e-13);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let disc = disc_square(0.5, true);
        let well = wells();
        let data = ProblemData::constants(0.4, -0.2, 0.1);
        let load = assemble_load(&disc, &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = disc.layout.n_dofs();
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
        let g = energy_gradient(&disc, &well, &load, &x);
        let d = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let eps = 1e-6;
        let fd = (energy(&disc, &well, &load, &(&x + &d * eps))
            - energy(&disc, &well, &load, &(&x - &d * eps)))
            / (2.0 * eps);
        assert_relative_eq!(g.dot(&d), fd, max_relative = 1e-5);
    }

    #[test]
    fn constant_translation_only_couples_through_s() {
        let disc = disc_square(0.25, false);
        let well = wells();
        let load = assemble_load(&disc, &ProblemData::zero()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = disc.layout.n_dofs();
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
        let c = 0.37;
        let shifted = &x + DVector::from_element(n, c);
        let dg = energy_gradient(&disc, &well, &load, &shifted)
            - energy_gradient(&disc, &well, &load, &x);
        // expected change: scatter of S (c 1_b)
        let one_b = DVector::from_element(disc.bm.n_nodes(), 1.0);
        let mut expect = DVector::zeros(n);
        disc.layout
            .scatter_boundary(&disc.bm, &(disc.sp.apply(&one_b) * c), &mut expect);
        assert!((dg - expect).amax() <= 1e-9);
    }

    #[test]
    fn energy_is_convex_and_gradient_monotone() {
        let disc = disc_square(0.5, true);
        let well = wells();
        let load = assemble_load(&disc, &ProblemData::constants(0.2, 0.1, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = disc.layout.n_dofs();
        for _ in 0..50 {
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let y = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let mid = energy(&disc, &well, &load, &((&x + &y) * 0.5));
            let chord =
                0.5 * energy(&disc, &well, &load, &x) + 0.5 * energy(&disc, &well, &load, &y);
            assert!(mid <= chord + 1e-10 * (1.0 + chord.abs()));
            let mono = (energy_gradient(&disc, &well, &load, &x)
                - energy_gradient(&disc, &well, &load, &y))
            .dot(&(&x - &y));
            assert!(mono >= -1e-10 * (1.0 + mono.abs()));
        }
    }

    #[test]
    fn hessian_is_gradient_jacobian() {
        let disc = disc_square(0.5, true);
        let well = wells();
        let load = assemble_load(&disc, &ProblemData::zero()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = disc.layout.n_dofs();
        let x = DVector::from_fn(n, |_, _| rng.gen_range(0.2..1.4));
        let h = energy_hessian(&disc, &well, &x);
        let d = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let eps = 1e-6;
        let fd = (energy_gradient(&disc, &well, &load, &(&x + &d * eps))
            - energy_gradient(&disc, &well, &load, &(&x - &d * eps)))
            / (2.0 * eps);
        let hd = &h * &d;
        assert!((fd - &hd).amax() / (1.0 + hd.amax()) <= 1e-4);
    }
}
