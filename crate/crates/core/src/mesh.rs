//! 1D P1 finite elements on `(0, L)` with the Dirichlet node at `x = 0` and
//! the dynamic node at `x = L`: mesh, nodal fields, assembled mass and
//! stiffness matrices, and the norms and traces every functional is built
//! from.

use crate::error::{CoreError, Result};
use crate::linalg::Tridiagonal;
use crate::quadrature::{points_for_exponent, GaussRule};
use std::sync::Arc;

/// Partition of `(0, L)` into `N >= 2` elements. Node 0 carries the
/// Dirichlet constraint, node N the dynamic boundary condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    pub length: f64,
    pub nodes: Vec<f64>,
    pub uniform: bool,
}

impl Mesh1D {
    /// Uniform mesh with `n_elements` elements.
    pub fn uniform(length: f64, n_elements: usize) -> Result<Arc<Self>> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(CoreError::InvalidArgument(format!("mesh length {length} must be positive")));
        }
        if n_elements < 2 {
            return Err(CoreError::InvalidArgument(format!(
                "mesh needs at least 2 elements, got {n_elements}"
            )));
        }
        let nodes = (0..=n_elements)
            .map(|i| length * i as f64 / n_elements as f64)
            .collect();
        Ok(Arc::new(Mesh1D { length, nodes, uniform: true }))
    }

    /// Mesh from explicit node coordinates; must start at 0 and increase.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Arc<Self>> {
        if nodes.len() < 3 {
            return Err(CoreError::InvalidArgument("need at least 3 nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(CoreError::InvalidArgument("first node must sit at 0".into()));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::InvalidArgument("nodes must be strictly increasing".into()));
        }
        let length = *nodes.last().unwrap();
        let h0 = nodes[1] - nodes[0];
        let uniform = nodes.windows(2).all(|w| ((w[1] - w[0]) - h0).abs() <= 1e-12 * h0);
        Ok(Arc::new(Mesh1D { length, nodes, uniform }))
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_length(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    /// Refine by splitting every element in two; the old nodes are a subset
    /// of the new ones, so discrete spaces nest.
    pub fn refined(&self) -> Arc<Mesh1D> {
        let mut nodes = Vec::with_capacity(2 * self.n_elements() + 1);
        for e in 0..self.n_elements() {
            nodes.push(self.nodes[e]);
            nodes.push(0.5 * (self.nodes[e] + self.nodes[e + 1]));
        }
        nodes.push(self.length);
        Arc::new(Mesh1D { length: self.length, nodes, uniform: self.uniform })
    }

    /// A short digest of the geometry, used to tie well constants to the
    /// mesh they were computed on.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the node bit patterns
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in &self.nodes {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// P1 nodal field. A constrained field lives in the discrete analogue of
/// the Dirichlet-constrained energy space, i.e. its first coefficient is 0.
#[derive(Debug, Clone)]
pub struct FemField {
    pub mesh: Arc<Mesh1D>,
    pub coeffs: Vec<f64>,
    pub constrained: bool,
}

impl FemField {
    pub fn zeros(mesh: &Arc<Mesh1D>) -> Self {
        FemField { mesh: Arc::clone(mesh), coeffs: vec![0.0; mesh.n_nodes()], constrained: true }
    }

    pub fn from_coeffs(mesh: &Arc<Mesh1D>, coeffs: Vec<f64>, constrained: bool) -> Result<Self> {
        if coeffs.len() != mesh.n_nodes() {
            return Err(CoreError::MeshMismatch(format!(
                "{} coefficients for a mesh with {} nodes",
                coeffs.len(),
                mesh.n_nodes()
            )));
        }
        if constrained && coeffs[0] != 0.0 {
            return Err(CoreError::InvalidArgument(
                "constrained field must vanish at the Dirichlet node".into(),
            ));
        }
        Ok(FemField { mesh: Arc::clone(mesh), coeffs, constrained })
    }

    /// Interpolate a function at the nodes; the Dirichlet node is forced
    /// to zero when `constrained`.
    pub fn interpolate<F: Fn(f64) -> f64>(mesh: &Arc<Mesh1D>, f: F, constrained: bool) -> Self {
        let mut coeffs: Vec<f64> = mesh.nodes.iter().map(|&x| f(x)).collect();
        if constrained {
            coeffs[0] = 0.0;
        }
        FemField { mesh: Arc::clone(mesh), coeffs, constrained }
    }

    /// Point evaluation of the piecewise-linear interpolant.
    pub fn eval(&self, x: f64) -> f64 {
        let nodes = &self.mesh.nodes;
        if x <= nodes[0] {
            return self.coeffs[0];
        }
        if x >= *nodes.last().unwrap() {
            return *self.coeffs.last().unwrap();
        }
        let e = nodes.partition_point(|&n| n <= x) - 1;
        let h = nodes[e + 1] - nodes[e];
        let s = (x - nodes[e]) / h;
        self.coeffs[e] * (1.0 - s) + self.coeffs[e + 1] * s
    }

    /// Trace at the dynamic boundary point, i.e. the last coefficient.
    pub fn trace_gamma1(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    /// Inject this field into a once-refined mesh (exact: P1 spaces nest).
    pub fn prolong(&self, fine: &Arc<Mesh1D>) -> Result<FemField> {
        if fine.n_elements() != 2 * self.mesh.n_elements() {
            return Err(CoreError::MeshMismatch("prolongation expects a once-refined mesh".into()));
        }
        let coeffs = fine.nodes.iter().map(|&x| self.eval(x)).collect();
        FemField::from_coeffs(fine, coeffs, self.constrained)
    }
}

/// Assembled P1 operators: consistent tridiagonal mass matrix, stiffness
/// matrix, and the same pair with the Dirichlet row/column replaced by the
/// identity (the form used in solves).
#[derive(Debug, Clone)]
pub struct AssembledOperators {
    pub mesh: Arc<Mesh1D>,
    /// Consistent mass matrix (h/6 [1 4 1] pattern on uniform meshes).
    pub mass: Tridiagonal,
    /// Stiffness matrix (1/h [-1 2 -1] pattern); annihilates constants.
    pub stiffness: Tridiagonal,
    /// Stiffness with the Dirichlet constraint applied (identity row 0);
    /// positive definite.
    pub stiffness_constrained: Tridiagonal,
    /// Row-sum lumped mass, exposed for stiffness experiments.
    pub mass_lumped: Vec<f64>,
}

/// Assemble mass and stiffness on a mesh.
pub fn assemble(mesh: &Arc<Mesh1D>) -> AssembledOperators {
    let n = mesh.n_nodes();
    let mut mass = Tridiagonal::zeros(n);
    let mut stiffness = Tridiagonal::zeros(n);
    for e in 0..mesh.n_elements() {
        let h = mesh.element_length(e);
        mass.diag[e] += h / 3.0;
        mass.diag[e + 1] += h / 3.0;
        mass.sub[e] += h / 6.0;
        mass.sup[e] += h / 6.0;
        stiffness.diag[e] += 1.0 / h;
        stiffness.diag[e + 1] += 1.0 / h;
        stiffness.sub[e] -= 1.0 / h;
        stiffness.sup[e] -= 1.0 / h;
    }
    let mut stiffness_constrained = stiffness.clone();
    stiffness_constrained.diag[0] = 1.0;
    stiffness_constrained.sup[0] = 0.0;
    stiffness_constrained.sub[0] = 0.0;
    let mass_lumped = {
        let mut l = vec![0.0; n];
        for i in 0..n {
            l[i] = mass.diag[i];
            if i > 0 {
                l[i] += mass.sub[i - 1];
            }
            if i + 1 < n {
                l[i] += mass.sup[i];
            }
        }
        l
    };
    AssembledOperators { mesh: Arc::clone(mesh), mass, stiffness, stiffness_constrained, mass_lumped }
}

impl AssembledOperators {
    /// `sqrt(u^T A u)`, exact for P1 fields.
    pub fn norm_grad_l2(&self, field: &FemField) -> f64 {
        self.stiffness.quad_form(&field.coeffs, &field.coeffs).max(0.0).sqrt()
    }

    /// `sqrt(u^T M u)`, exact for P1 fields.
    pub fn norm_l2(&self, field: &FemField) -> f64 {
        self.mass.quad_form(&field.coeffs, &field.coeffs).max(0.0).sqrt()
    }

    pub fn norm_h1(&self, field: &FemField) -> f64 {
        let l2 = self.mass.quad_form(&field.coeffs, &field.coeffs).max(0.0);
        let g = self.stiffness.quad_form(&field.coeffs, &field.coeffs).max(0.0);
        (l2 + g).sqrt()
    }

    /// `(u, v)` in the L2 inner product.
    pub fn l2_inner(&self, a: &FemField, b: &FemField) -> f64 {
        self.mass.quad_form(&a.coeffs, &b.coeffs)
    }
}

/// `||u||_p` with per-element Gauss quadrature on `|u_h|^p` using
/// `ceil((p+2)/2)` points (at least 3).
pub fn norm_lp(field: &FemField, p: f64) -> f64 {
    assert!(p >= 1.0, "Lp norm needs p >= 1");
    lp_power_integral(field, p).powf(1.0 / p)
}

/// `int |u_h|^p dx` by the same rule; the building block of the Lp norm,
/// the K functional, and the potential integral.
pub fn lp_power_integral(field: &FemField, p: f64) -> f64 {
    let rule = GaussRule::new(points_for_exponent(p));
    let mesh = &field.mesh;
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        let (a, b) = (mesh.nodes[e], mesh.nodes[e + 1]);
        let (ua, ub) = (field.coeffs[e], field.coeffs[e + 1]);
        let h = b - a;
        total += rule.integrate(a, b, |x| {
            let s = (x - a) / h;
            let u = ua * (1.0 - s) + ub * s;
            u.abs().powf(p)
        });
    }
    total
}

/// `int w(x, u_h(x)) dx` by per-element Gauss quadrature with `n_points`.
pub fn element_integral<F: FnMut(f64, f64) -> f64>(field: &FemField, n_points: usize, mut w: F) -> f64 {
    let rule = GaussRule::new(n_points);
    let mesh = &field.mesh;
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        let (a, b) = (mesh.nodes[e], mesh.nodes[e + 1]);
        let (ua, ub) = (field.coeffs[e], field.coeffs[e + 1]);
        let h = b - a;
        total += rule.integrate(a, b, |x| {
            let s = (x - a) / h;
            w(x, ua * (1.0 - s) + ub * s)
        });
    }
    total
}

/// Consistent load vector `b_i = int w(x, u_h) phi_i dx` assembled with
/// `n_points` Gauss points per element.
pub fn load_vector<F: Fn(f64, f64) -> f64>(field: &FemField, n_points: usize, w: F) -> Vec<f64> {
    let rule = GaussRule::new(n_points);
    let mesh = &field.mesh;
    let mut out = vec![0.0; mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        let (a, b) = (mesh.nodes[e], mesh.nodes[e + 1]);
        let (ua, ub) = (field.coeffs[e], field.coeffs[e + 1]);
        let h = b - a;
        let half = 0.5 * h;
        let mid = 0.5 * (a + b);
        for (xi, wt) in rule.nodes.iter().zip(&rule.weights) {
            let x = mid + half * xi;
            let s = (x - a) / h;
            let val = w(x, ua * (1.0 - s) + ub * s) * wt * half;
            out[e] += val * (1.0 - s);
            out[e + 1] += val * s;
        }
    }
    out
}

/// Tridiagonal Jacobian block `J_ij = int dw(x, u_h) phi_i phi_j dx` of a
/// state-dependent load vector.
pub fn load_jacobian<F: Fn(f64, f64) -> f64>(field: &FemField, n_points: usize, dw: F) -> Tridiagonal {
    let rule = GaussRule::new(n_points);
    let mesh = &field.mesh;
    let mut jac = Tridiagonal::zeros(mesh.n_nodes());
    for e in 0..mesh.n_elements() {
        let (a, b) = (mesh.nodes[e], mesh.nodes[e + 1]);
        let (ua, ub) = (field.coeffs[e], field.coeffs[e + 1]);
        let h = b - a;
        let half = 0.5 * h;
        let mid = 0.5 * (a + b);
        for (xi, wt) in rule.nodes.iter().zip(&rule.weights) {
            let x = mid + half * xi;
            let s = (x - a) / h;
            let d = dw(x, ua * (1.0 - s) + ub * s) * wt * half;
            jac.diag[e] += d * (1.0 - s) * (1.0 - s);
            jac.diag[e + 1] += d * s * s;
            jac.sub[e] += d * s * (1.0 - s);
            jac.sup[e] += d * s * (1.0 - s);
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_mesh_nodes() {
        let mesh = Mesh1D::uniform(1.0, 4).unwrap();
        assert_eq!(mesh.nodes, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let mesh = Mesh1D::uniform(2.0, 2).unwrap();
        assert_eq!(mesh.nodes, vec![0.0, 1.0, 2.0]);
        assert!(Mesh1D::uniform(1.0, 1).is_err());
        assert!(Mesh1D::uniform(-1.0, 4).is_err());
    }

    #[test]
    fn assembled_patterns_on_h_half() {
        let mesh = Mesh1D::uniform(1.0, 2).unwrap();
        let ops = assemble(&mesh);
        // interior stiffness diagonal 2/h = 4, mass diagonal 2h/3 = 1/3
        assert_relative_eq!(ops.stiffness.diag[1], 4.0);
        assert_relative_eq!(ops.mass.diag[1], 1.0 / 3.0);
        assert_relative_eq!(ops.mass.sub[0], 0.5 / 6.0);
        assert_eq!(ops.mass.asymmetry(), 0.0);
        assert_eq!(ops.stiffness.asymmetry(), 0.0);
        // mass row sums recover element-length weights (integral of phi_i)
        let ones = vec![1.0; 3];
        let row_sums = ops.mass.matvec(&ones);
        assert_relative_eq!(row_sums[0], 0.25);
        assert_relative_eq!(row_sums[1], 0.5);
        assert_relative_eq!(row_sums[2], 0.25);
        // stiffness annihilates constants before the constraint
        let a_ones = ops.stiffness.matvec(&ones);
        for v in a_ones {
            assert_relative_eq!(v, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn constrained_stiffness_is_positive_definite() {
        // smallest matrix eigenvalue via inverse power iteration with the
        // Thomas solve: strictly positive on the constrained subspace
        let mesh = Mesh1D::uniform(1.0, 8).unwrap();
        let ops = assemble(&mesh);
        let a = &ops.stiffness_constrained;
        let mut v: Vec<f64> = (0..mesh.n_nodes()).map(|i| 1.0 + (i as f64).sin()).collect();
        v[0] = 0.0;
        let mut lambda = 0.0;
        for _ in 0..400 {
            let mut w = a.solve(&v).unwrap();
            w[0] = 0.0;
            let norm = crate::linalg::norm2(&w);
            for x in w.iter_mut() {
                *x /= norm;
            }
            lambda = a.quad_form(&w, &w);
            v = w;
        }
        assert!(lambda > 0.0, "smallest eigenvalue {lambda}");

        // generalized pencil A x = mu M x: smallest eigenvalue approaches
        // the first mixed eigenvalue (pi/2)^2 of the continuum operator
        let mesh = Mesh1D::uniform(1.0, 64).unwrap();
        let ops = assemble(&mesh);
        let a = &ops.stiffness_constrained;
        let mut v: Vec<f64> = mesh.nodes.iter().map(|&x| x).collect();
        let mut mu = 0.0;
        for _ in 0..200 {
            let mut rhs = ops.mass.matvec(&v);
            rhs[0] = 0.0;
            let mut w = a.solve(&rhs).unwrap();
            w[0] = 0.0;
            let norm = crate::linalg::norm2(&w);
            for x in w.iter_mut() {
                *x /= norm;
            }
            mu = ops.stiffness.quad_form(&w, &w) / ops.mass.quad_form(&w, &w);
            v = w;
        }
        let exact = (std::f64::consts::PI / 2.0).powi(2);
        assert_relative_eq!(mu, exact, max_relative = 1e-3);
    }

    #[test]
    fn norms_of_linear_ramp() {
        let mesh = Mesh1D::uniform(1.0, 64).unwrap();
        let ops = assemble(&mesh);
        let u = FemField::interpolate(&mesh, |x| x, true);
        assert_relative_eq!(ops.norm_grad_l2(&u), 1.0, epsilon = 1e-12);
        assert_relative_eq!(u.trace_gamma1(), 1.0);
        assert_relative_eq!(ops.norm_l2(&u), 1.0 / 3.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(ops.norm_h1(&u), (1.0 + 1.0 / 3.0f64).sqrt(), epsilon = 1e-12);
        // exact interpolant: quadrature integrates |x|^4 elementwise exactly
        assert_relative_eq!(norm_lp(&u, 4.0), 0.2f64.powf(0.25), epsilon = 1e-12);
        assert_relative_eq!(norm_lp(&u, 2.0), ops.norm_l2(&u), epsilon = 1e-13);
        let zero = FemField::zeros(&mesh);
        assert_eq!(norm_lp(&zero, 3.0), 0.0);
    }

    #[test]
    fn lp_quadrature_matches_mass_form_at_p2() {
        let mesh = Mesh1D::uniform(1.7, 31).unwrap();
        let ops = assemble(&mesh);
        let u = FemField::interpolate(&mesh, |x| (3.1 * x).sin() - 0.4 * x, true);
        let a = norm_lp(&u, 2.0);
        let b = ops.norm_l2(&u);
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn discrete_poincare_constant_below_length() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for &(length, n) in &[(1.0, 17), (2.5, 40)] {
            let mesh = Mesh1D::uniform(length, n).unwrap();
            let ops = assemble(&mesh);
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                let mut coeffs: Vec<f64> =
                    (0..mesh.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                coeffs[0] = 0.0;
                let u = FemField::from_coeffs(&mesh, coeffs, true).unwrap();
                let g = ops.norm_grad_l2(&u);
                if g > 0.0 {
                    worst = worst.max(ops.norm_l2(&u) / g);
                }
            }
            assert!(worst <= length, "Poincare ratio {worst} exceeds L = {length}");
        }
    }

    #[test]
    fn load_vector_consistency() {
        // for w(x,u) = 1 the load is the integral of each hat: mass row sums
        let mesh = Mesh1D::uniform(1.0, 5).unwrap();
        let u = FemField::zeros(&mesh);
        let load = load_vector(&u, 3, |_, _| 1.0);
        let ops = assemble(&mesh);
        let row_sums = ops.mass.matvec(&vec![1.0; mesh.n_nodes()]);
        for (a, b) in load.iter().zip(&row_sums) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn load_jacobian_matches_finite_difference() {
        let mesh = Mesh1D::uniform(1.0, 6).unwrap();
        let coeffs: Vec<f64> = (0..7).map(|i| 0.3 * (i as f64) - 0.8).collect();
        let u = FemField::from_coeffs(&mesh, coeffs.clone(), false).unwrap();
        let w = |_x: f64, v: f64| v * v * v;
        let dw = |_x: f64, v: f64| 3.0 * v * v;
        let jac = load_jacobian(&u, 4, dw);
        let base = load_vector(&u, 4, w);
        let h = 1e-6;
        for j in [0usize, 3, 6] {
            let mut cp = coeffs.clone();
            cp[j] += h;
            let up = FemField::from_coeffs(&mesh, cp, false).unwrap();
            let lp = load_vector(&up, 4, w);
            for i in 0..7 {
                let fd = (lp[i] - base[i]) / h;
                let an = if i == j {
                    jac.diag[i]
                } else if i + 1 == j {
                    jac.sup[i]
                } else if j + 1 == i {
                    jac.sub[j]
                } else {
                    0.0
                };
                assert_relative_eq!(an, fd, epsilon = 1e-5, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn prolongation_preserves_norms() {
        let mesh = Mesh1D::uniform(1.0, 10).unwrap();
        let fine = mesh.refined();
        let ops_c = assemble(&mesh);
        let ops_f = assemble(&fine);
        let u = FemField::interpolate(&mesh, |x| x * (1.0 - 0.3 * x), true);
        let uf = u.prolong(&fine).unwrap();
        assert_relative_eq!(ops_c.norm_grad_l2(&u), ops_f.norm_grad_l2(&uf), epsilon = 1e-12);
        assert_relative_eq!(ops_c.norm_l2(&u), ops_f.norm_l2(&uf), epsilon = 1e-12);
        assert_relative_eq!(norm_lp(&u, 3.0), norm_lp(&uf, 3.0), epsilon = 1e-12);
    }
}
