//! P1 finite elements: mass and stiffness assembly for the bilinear form
//!
//! ```text
//! a(u, v) = ∫ (Σ q_kl ∂_k u ∂_l v + Σ q_k ∂_k u v) dx + α₀ ∫_∂Ω u v ds + c₀ ∫ u v dx
//! ```
//!
//! the L2 projection `P_h`, and the discrete generator `A_h = -M⁻¹ S`.

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::matfunc::LinearOperator;
use crate::mesh::Mesh;
use crate::sparse::{conjugate_gradient, dot, CgOptions, CsrMatrix};
use crate::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type TensorFn = Arc<dyn Fn(&[f64]) -> [[f64; 2]; 2] + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> [f64; 2] + Send + Sync>;

/// Dense eigen checks are skipped above this many dofs.
pub const DENSE_CHECK_LIMIT: usize = 400;

/// Diffusion tensor `q_ij(x)` and advection field `q_i(x)`. In 1D only the
/// `[0][0]` and `[0]` entries are used.
#[derive(Clone)]
pub struct CoefficientField {
    pub diffusion: TensorFn,
    pub advection: VectorFn,
    /// Stated ellipticity constant `c₁` of the diffusion tensor.
    pub ellipticity: f64,
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("ellipticity", &self.ellipticity)
            .finish_non_exhaustive()
    }
}

impl CoefficientField {
    pub fn constant(diffusion: [[f64; 2]; 2], advection: [f64; 2]) -> Self {
        let c1 = sym_min_eig(diffusion);
        Self {
            diffusion: Arc::new(move |_| diffusion),
            advection: Arc::new(move |_| advection),
            ellipticity: c1,
        }
    }

    /// `q_ij = q δ_ij` with constant advection.
    pub fn isotropic(q: f64, advection: [f64; 2]) -> Self {
        Self::constant([[q, 0.0], [0.0, q]], advection)
    }

    /// Samples both fields at the nodes and element centroids; fails if the
    /// diffusion tensor drops below the stated `c₁` or a value is not finite.
    pub fn check_ellipticity(&self, mesh: &Mesh) -> Result<()> {
        let dim = mesh.dim();
        let mut points: Vec<[f64; 2]> = (0..mesh.n_nodes()).map(|i| pad(mesh.node(i))).collect();
        points.extend((0..mesh.n_elements()).map(|e| centroid(mesh, e)));
        for p in points {
            let q = (self.diffusion)(&p[..dim]);
            let b = (self.advection)(&p[..dim]);
            if q.iter().flatten().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::SingularCoefficient(format!("non-finite coefficient at {:?}", &p[..dim])));
            }
            let lam = if dim == 1 { q[0][0] } else { sym_min_eig(q) };
            if !(self.ellipticity > 0.0) || lam < self.ellipticity * (1.0 - 1e-12) {
                return Err(Error::SingularCoefficient(format!(
                    "smallest eigenvalue {lam} below c1 = {} at {:?}",
                    self.ellipticity,
                    &p[..dim]
                )));
            }
        }
        Ok(())
    }
}

fn sym_min_eig(q: [[f64; 2]; 2]) -> f64 {
    let a = q[0][0];
    let d = q[1][1];
    let b = 0.5 * (q[0][1] + q[1][0]);
    let mean = 0.5 * (a + d);
    mean - (0.25 * (a - d).powi(2) + b * b).sqrt()
}

fn pad(p: &[f64]) -> [f64; 2] {
    let mut out = [0.0; 2];
    out[..p.len()].copy_from_slice(p);
    out
}

fn centroid(mesh: &Mesh, e: usize) -> [f64; 2] {
    let el = mesh.element(e);
    let mut c = [0.0; 2];
    for &i in el {
        for (d, x) in mesh.node(i).iter().enumerate() {
            c[d] += x / el.len() as f64;
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
    Robin { alpha0: f64 },
}

impl BoundaryCondition {
    /// Robin coefficient; zero for Neumann and Dirichlet.
    pub fn alpha0(&self) -> f64 {
        match *self {
            BoundaryCondition::Robin { alpha0 } => alpha0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BilinearFormSpec {
    pub coeffs: CoefficientField,
    pub bc: BoundaryCondition,
    /// Gårding shift `c₀ ≥ 0`, added as `c₀ M` to the stiffness matrix.
    pub garding_shift: f64,
    /// Turn a failed ellipticity sample into an error instead of a warning.
    pub strict_ellipticity: bool,
}

impl BilinearFormSpec {
    pub fn new(coeffs: CoefficientField, bc: BoundaryCondition, garding_shift: f64) -> Self {
        Self {
            coeffs,
            bc,
            garding_shift,
            strict_ellipticity: false,
        }
    }
}

/// Which mass matrix defines `M⁻¹` in `A_h = -M⁻¹ S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassMode {
    #[default]
    Lumped,
    Consistent,
}

/// Node ↔ unknown bookkeeping. Dirichlet nodes carry no dof.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    node_to_dof: Vec<Option<usize>>,
    dof_to_node: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, bc: BoundaryCondition) -> Self {
        let mut constrained = vec![false; mesh.n_nodes()];
        if bc == BoundaryCondition::Dirichlet {
            for i in mesh.boundary_nodes() {
                constrained[i] = true;
            }
        }
        let mut node_to_dof = vec![None; mesh.n_nodes()];
        let mut dof_to_node = Vec::new();
        for (i, &c) in constrained.iter().enumerate() {
            if !c {
                node_to_dof[i] = Some(dof_to_node.len());
                dof_to_node.push(i);
            }
        }
        Self {
            node_to_dof,
            dof_to_node,
        }
    }

    /// Every node is a dof.
    pub fn unconstrained(mesh: &Mesh) -> Self {
        Self::new(mesh, BoundaryCondition::Neumann)
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_to_node.len()
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    pub fn node(&self, dof: usize) -> usize {
        self.dof_to_node[dof]
    }
}

/// Quadrature points of element `e` as `(barycentric, weight)` with weights
/// summing to the element measure. Two-point Gauss in 1D, three-point
/// interior rule in 2D.
fn element_quadrature(mesh: &Mesh, e: usize) -> Vec<([f64; 3], f64)> {
    let measure = mesh.element_measure(e);
    if mesh.dim() == 1 {
        let g = 0.5 / 3f64.sqrt();
        vec![([0.5 - g, 0.5 + g, 0.0], 0.5 * measure), ([0.5 + g, 0.5 - g, 0.0], 0.5 * measure)]
    } else {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        let w = measure / 3.0;
        vec![([a, b, b], w), ([b, a, b], w), ([b, b, a], w)]
    }
}

/// Higher-order rule for error measurement: five-point Gauss in 1D, the
/// six-point degree-4 rule in 2D.
fn error_quadrature(mesh: &Mesh, e: usize) -> Vec<([f64; 3], f64)> {
    let measure = mesh.element_measure(e);
    if mesh.dim() == 1 {
        const X: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
        const W: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
        X.iter()
            .zip(W)
            .map(|(&x, w)| {
                let s = 0.5 * (1.0 + x);
                ([1.0 - s, s, 0.0], 0.5 * w * measure)
            })
            .collect()
    } else {
        let (a1, b1, w1) = (0.445_948_490_915_965, 0.108_103_018_168_070, 0.223_381_589_678_011);
        let (a2, b2, w2) = (0.091_576_213_509_771, 0.816_847_572_980_459, 0.109_951_743_655_322);
        vec![
            ([a1, a1, b1], w1 * measure),
            ([a1, b1, a1], w1 * measure),
            ([b1, a1, a1], w1 * measure),
            ([a2, a2, b2], w2 * measure),
            ([a2, b2, a2], w2 * measure),
            ([b2, a2, a2], w2 * measure),
        ]
    }
}

fn physical_point(mesh: &Mesh, e: usize, bary: &[f64; 3]) -> [f64; 2] {
    let mut p = [0.0; 2];
    for (k, &i) in mesh.element(e).iter().enumerate() {
        for (d, x) in mesh.node(i).iter().enumerate() {
            p[d] += bary[k] * x;
        }
    }
    p
}

/// Gradients of the element basis functions (rows indexed by local node).
fn basis_gradients(mesh: &Mesh, e: usize) -> [[f64; 2]; 3] {
    let el = mesh.element(e);
    if mesh.dim() == 1 {
        let h = mesh.element_measure(e);
        [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0; 2]]
    } else {
        let (p0, p1, p2) = (mesh.node(el[0]), mesh.node(el[1]), mesh.node(el[2]));
        let two_area = 2.0 * mesh.element_measure(e);
        [
            [(p1[1] - p2[1]) / two_area, (p2[0] - p1[0]) / two_area],
            [(p2[1] - p0[1]) / two_area, (p0[0] - p2[0]) / two_area],
            [(p0[1] - p1[1]) / two_area, (p1[0] - p0[0]) / two_area],
        ]
    }
}

/// Exact element mass matrix entry for affine basis functions.
fn local_mass(dim: usize, measure: f64, i: usize, j: usize) -> f64 {
    match (dim, i == j) {
        (1, true) => measure / 3.0,
        (1, false) => measure / 6.0,
        (_, true) => measure / 6.0,
        (_, false) => measure / 12.0,
    }
}

fn push_restricted(triplets: &mut Vec<(usize, usize, f64)>, dofs: &DofMap, a: usize, b: usize, v: f64) {
    if let (Some(i), Some(j)) = (dofs.dof(a), dofs.dof(b)) {
        triplets.push((i, j, v));
    }
}

/// Consistent mass matrix `M_ij = ∫ φ_i φ_j` on the dofs of `dofs`.
pub fn assemble_mass(mesh: &Mesh, dofs: &DofMap) -> CsrMatrix {
    let npe = mesh.dim() + 1;
    let mut triplets = Vec::with_capacity(mesh.n_elements() * npe * npe);
    for e in 0..mesh.n_elements() {
        let el = mesh.element(e);
        let measure = mesh.element_measure(e);
        for i in 0..npe {
            for j in 0..npe {
                push_restricted(&mut triplets, dofs, el[i], el[j], local_mass(mesh.dim(), measure, i, j));
            }
        }
    }
    CsrMatrix::from_triplets(dofs.n_dofs(), dofs.n_dofs(), triplets)
}

/// Stiffness matrix `S_ij = a(φ_j, φ_i)` including the Robin boundary term
/// and the Gårding shift. Coefficients are evaluated at element centroids.
pub fn assemble_stiffness(mesh: &Mesh, spec: &BilinearFormSpec, dofs: &DofMap) -> Result<CsrMatrix> {
    if let Err(err) = spec.coeffs.check_ellipticity(mesh) {
        if spec.strict_ellipticity {
            return Err(err);
        }
        warn!("{err}");
    }
    if !(spec.garding_shift >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Gårding shift must be non-negative, got {}",
            spec.garding_shift
        )));
    }
    let dim = mesh.dim();
    let npe = dim + 1;
    let mut triplets = Vec::with_capacity(mesh.n_elements() * npe * npe);
    for e in 0..mesh.n_elements() {
        let el = mesh.element(e);
        let measure = mesh.element_measure(e);
        let mid = centroid(mesh, e);
        let q = (spec.coeffs.diffusion)(&mid[..dim]);
        let b = (spec.coeffs.advection)(&mid[..dim]);
        let grads = basis_gradients(mesh, e);
        for i in 0..npe {
            for j in 0..npe {
                let mut diff = 0.0;
                for k in 0..dim {
                    for l in 0..dim {
                        diff += q[k][l] * grads[j][k] * grads[i][l];
                    }
                }
                let adv: f64 = (0..dim).map(|k| b[k] * grads[j][k]).sum::<f64>() * measure / npe as f64;
                let shift = spec.garding_shift * local_mass(dim, measure, i, j);
                push_restricted(&mut triplets, dofs, el[i], el[j], diff * measure + adv + shift);
            }
        }
    }
    let alpha0 = spec.bc.alpha0();
    if alpha0 != 0.0 {
        for f in 0..mesh.n_facets() {
            let nodes = mesh.facet(f);
            if dim == 1 {
                push_restricted(&mut triplets, dofs, nodes[0], nodes[0], alpha0);
            } else {
                let len = mesh.facet_measure(f);
                for i in 0..2 {
                    for j in 0..2 {
                        let w = if i == j { len / 3.0 } else { len / 6.0 };
                        push_restricted(&mut triplets, dofs, nodes[i], nodes[j], alpha0 * w);
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(dofs.n_dofs(), dofs.n_dofs(), triplets))
}

/// Assembled operators of one discretization. Immutable once built.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    mesh: Arc<Mesh>,
    dofs: DofMap,
    bc: BoundaryCondition,
    mass: CsrMatrix,
    lumped: Vec<f64>,
    stiffness: CsrMatrix,
    /// `S` with the shift realized as `c₀ M_L` instead of `c₀ M`, so that the
    /// lumped generator is exactly the unshifted one minus `c₀ I`.
    lumped_stiffness: CsrMatrix,
    lumped_norm: f64,
    cg: CgOptions,
}

impl DiscreteOperators {
    /// Assembles `M`, the lumped mass and `S`. For at most
    /// [`DENSE_CHECK_LIMIT`] dofs, coercivity of the shifted form is verified.
    pub fn assemble(mesh: Arc<Mesh>, spec: &BilinearFormSpec) -> Result<Self> {
        let ops = Self::assemble_unchecked(mesh, spec)?;
        if ops.n() <= DENSE_CHECK_LIMIT {
            ops.check_coercivity()?;
        }
        Ok(ops)
    }

    pub fn assemble_unchecked(mesh: Arc<Mesh>, spec: &BilinearFormSpec) -> Result<Self> {
        let dofs = DofMap::new(&mesh, spec.bc);
        if dofs.n_dofs() == 0 {
            return Err(Error::InvalidMesh("mesh has no free dofs".into()));
        }
        let mass = assemble_mass(&mesh, &dofs);
        let stiffness = assemble_stiffness(&mesh, spec, &dofs)?;
        // ∫ φ_i over the whole domain: row sums of the unconstrained mass matrix.
        let mut lumped = vec![0.0; dofs.n_dofs()];
        for e in 0..mesh.n_elements() {
            let share = mesh.element_measure(e) / (mesh.dim() + 1) as f64;
            for &i in mesh.element(e) {
                if let Some(d) = dofs.dof(i) {
                    lumped[d] += share;
                }
            }
        }
        let lumped_stiffness = if spec.garding_shift == 0.0 {
            stiffness.clone()
        } else {
            let n = dofs.n_dofs();
            let diag = CsrMatrix::from_triplets(n, n, lumped.iter().enumerate().map(|(i, &m)| (i, i, m)).collect());
            stiffness
                .add_scaled(1.0, &mass, -spec.garding_shift)
                .add_scaled(1.0, &diag, spec.garding_shift)
        };
        let lumped_norm = (0..lumped_stiffness.nrows())
            .map(|r| lumped_stiffness.row(r).map(|(_, v)| v.abs()).sum::<f64>() / lumped[r])
            .fold(0.0, f64::max);
        Ok(Self {
            mesh,
            dofs,
            bc: spec.bc,
            mass,
            lumped,
            stiffness,
            lumped_stiffness,
            lumped_norm,
            cg: CgOptions::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.dofs.n_dofs()
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn boundary_condition(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Stiffness used by the lumped generator.
    pub fn lumped_stiffness(&self) -> &CsrMatrix {
        &self.lumped_stiffness
    }

    pub fn cg_options(&self) -> CgOptions {
        self.cg
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Solves `M x = b` with the consistent mass matrix.
    pub fn solve_mass(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b)?;
        conjugate_gradient(&self.mass, b, self.cg)
    }

    /// `b_i = ∫ g φ_i` by element quadrature.
    pub fn load_vector(&self, g: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
        let mut b = vec![0.0; self.n()];
        self.accumulate_quadrature(&mut b, |x, _| g(x), &[]);
        b
    }

    /// `b_i = ∫ w(x, u_h(x)) φ_i` where `u_h` has the given nodal values
    /// (empty slice: `u_h ≡ 0`).
    fn accumulate_quadrature(&self, b: &mut [f64], w: impl Fn(&[f64], f64) -> f64, nodal: &[f64]) {
        let mesh = &self.mesh;
        let dim = mesh.dim();
        for e in 0..mesh.n_elements() {
            let el = mesh.element(e);
            for (bary, weight) in element_quadrature(mesh, e) {
                let x = physical_point(mesh, e, &bary);
                let uh: f64 = if nodal.is_empty() {
                    0.0
                } else {
                    el.iter().enumerate().map(|(k, &i)| bary[k] * nodal[i]).sum()
                };
                let val = w(&x[..dim], uh) * weight;
                for (k, &i) in el.iter().enumerate() {
                    if let Some(d) = self.dofs.dof(i) {
                        b[d] += val * bary[k];
                    }
                }
            }
        }
    }

    /// L2 projection `P_h g`: solves `M c = b`, `b_i = ∫ g φ_i`.
    pub fn l2_project(&self, g: &dyn Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
        let b = self.load_vector(g);
        self.solve_mass(&b).map_err(|e| e.context("L2 projection"))
    }

    /// L2 projection of `x -> f(u_h(x))` for the P1 function with dof values `u`.
    pub fn project_composition(&self, u: &[f64], f: &dyn Fn(f64) -> f64) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let nodal = self.to_nodal(u);
        let mut b = vec![0.0; self.n()];
        self.accumulate_quadrature(&mut b, |_, uh| f(uh), &nodal);
        self.solve_mass(&b)
    }

    /// Weighted mass matrix `W_ij = ∫ w(u_h) φ_i φ_j` by element quadrature.
    pub fn weighted_mass(&self, u: &[f64], w: &dyn Fn(f64) -> f64) -> Result<CsrMatrix> {
        self.check_len(u)?;
        let nodal = self.to_nodal(u);
        let mesh = &self.mesh;
        let npe = mesh.dim() + 1;
        let mut triplets = Vec::with_capacity(mesh.n_elements() * npe * npe);
        for e in 0..mesh.n_elements() {
            let el = mesh.element(e);
            for (bary, weight) in element_quadrature(mesh, e) {
                let uh: f64 = el.iter().enumerate().map(|(k, &i)| bary[k] * nodal[i]).sum();
                let val = w(uh) * weight;
                for i in 0..npe {
                    for j in 0..npe {
                        push_restricted(&mut triplets, &self.dofs, el[i], el[j], val * bary[i] * bary[j]);
                    }
                }
            }
        }
        Ok(CsrMatrix::from_triplets(self.n(), self.n(), triplets))
    }

    /// `‖v_h - g‖_{L²}` by high-order element quadrature.
    pub fn l2_error(&self, v: &[f64], g: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
        self.check_len(v)?;
        let nodal = self.to_nodal(v);
        let mesh = &self.mesh;
        let dim = mesh.dim();
        let mut sum = 0.0;
        for e in 0..mesh.n_elements() {
            let el = mesh.element(e);
            for (bary, weight) in error_quadrature(mesh, e) {
                let x = physical_point(mesh, e, &bary);
                let vh: f64 = el.iter().enumerate().map(|(k, &i)| bary[k] * nodal[i]).sum();
                let d = vh - g(&x[..dim]);
                sum += weight * d * d;
            }
        }
        Ok(sum.sqrt())
    }

    /// Nodal interpolant restricted to the dofs.
    pub fn interpolate(&self, g: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.n()).map(|d| g(self.mesh.node(self.dofs.node(d)))).collect()
    }

    /// Expands dof values to all mesh nodes (zero on Dirichlet nodes).
    pub fn to_nodal(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.n_nodes()];
        for (d, &x) in v.iter().enumerate() {
            out[self.dofs.node(d)] = x;
        }
        out
    }

    pub fn from_nodal(&self, nodal: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|d| nodal[self.dofs.node(d)]).collect()
    }

    /// `A_h v = M⁻¹ (-S v)` with the selected mass matrix.
    pub fn apply_ah(&self, v: &[f64], mode: MassMode) -> Result<Vec<f64>> {
        self.check_len(v)?;
        let mut out = vec![0.0; self.n()];
        self.apply_ah_into(v, &mut out, mode)?;
        Ok(out)
    }

    fn apply_ah_into(&self, v: &[f64], out: &mut [f64], mode: MassMode) -> Result<()> {
        match mode {
            MassMode::Lumped => {
                self.lumped_stiffness.matvec(v, out);
                out.iter_mut().zip(&self.lumped).for_each(|(o, m)| *o = -*o / m);
            }
            MassMode::Consistent => {
                self.stiffness.matvec(v, out);
                out.iter_mut().for_each(|o| *o = -*o);
                let x = conjugate_gradient(&self.mass, out, self.cg)?;
                out.copy_from_slice(&x);
            }
        }
        Ok(())
    }

    /// `A_h` as an operator action.
    pub fn generator(&self, mode: MassMode) -> Generator<'_> {
        Generator { ops: self, mode }
    }

    /// `sqrt(vᵀ M v)` with the consistent mass.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        let mv = self.mass.mul_vec(v);
        dot(v, &mv).max(0.0).sqrt()
    }

    /// `Σ_i m_i v_i = ∫ v_h` (exact for P1 functions).
    pub fn integral(&self, v: &[f64]) -> f64 {
        dot(&self.lumped, v)
    }

    /// Smallest eigenvalue of `(S + Sᵀ) / 2` (dense).
    pub fn coercivity_margin(&self) -> f64 {
        let s = self.stiffness.to_dense();
        let sym: DMatrix<f64> = (&s + s.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn check_coercivity(&self) -> Result<f64> {
        let margin = self.coercivity_margin();
        if margin < -1e-10 * self.stiffness.norm_inf().max(1.0) {
            return Err(Error::NotCoercive { min_eigenvalue: margin });
        }
        Ok(margin)
    }
}

/// `A_h = -M⁻¹ S` as a [`LinearOperator`].
pub struct Generator<'a> {
    ops: &'a DiscreteOperators,
    mode: MassMode,
}

impl LinearOperator for Generator<'_> {
    fn dim(&self) -> usize {
        self.ops.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.ops.apply_ah_into(x, y, self.mode)
    }

    fn norm_estimate(&self) -> f64 {
        match self.mode {
            MassMode::Lumped => self.ops.lumped_norm,
            // the consistent mass is spectrally equivalent to the lumped one
            // with ratio at least 1/(d+2)
            MassMode::Consistent => (self.ops.mesh.dim() + 2) as f64 * self.ops.lumped_norm,
        }
    }
}
