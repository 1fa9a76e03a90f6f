//! Moving least squares shape functions.
//!
//! Classical MLS builds, at every evaluation point x, the weighted fit
//!
//!   u_h(x) = p'(x) (P W P' )^-1 P W u,
//!
//! which fails when the moment matrix is singular (degenerate node sets).
//! The modified form (MMLS) adds small penalties on the second-degree
//! coefficients, turning the moment matrix into P' W P + H with H diagonal on
//! the quadratic monomials. Combined with the regularized weight the shape
//! functions become interpolating (IMMLS): phi_i(x_j) ~ delta_ij, so
//! essential boundary conditions can be imposed directly on nodal values.
//!
//! Shape functions are assembled in a support-local frame y = (x - c)/r_sd
//! (c the support centroid): pure shifts leave the MMLS fit unchanged, while
//! the scaling keeps the moment matrix well conditioned and makes the
//! trace-relative penalties scale-invariant. Gradients are mapped back by
//! the 1/r_sd chain rule.

mod weight;

pub use weight::{weight_regularized, WeightKind};

use std::io::Write;

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use rand::SeedableRng;

use crate::cloud::{
    find_support, initial_support_radius, support_r_min, NodeCloud, SearchGrid, SupportParams,
    SupportQueryResult,
};
use crate::{Error, Result};

/// Default regularization parameter of the interpolating weight.
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Relative pivot threshold below which the moment matrix is treated as
/// rank deficient.
const RANK_TOL: f64 = 1e-13;

/// Monomial basis. The quadratic basis order is
/// [1, x, y, z, x^2, y^2, z^2, xy, xz, yz].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    Linear,
    Quadratic,
}

impl Basis {
    pub fn len(self) -> usize {
        match self {
            Basis::Linear => 4,
            Basis::Quadratic => 10,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn eval(self, p: &Vector3<f64>, out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = p.x;
        out[2] = p.y;
        out[3] = p.z;
        if self == Basis::Quadratic {
            out[4] = p.x * p.x;
            out[5] = p.y * p.y;
            out[6] = p.z * p.z;
            out[7] = p.x * p.y;
            out[8] = p.x * p.z;
            out[9] = p.y * p.z;
        }
    }

    /// Row of monomial derivatives with respect to the given axis.
    pub fn grad(self, p: &Vector3<f64>, axis: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[axis + 1] = 1.0;
        if self == Basis::Quadratic {
            match axis {
                0 => {
                    out[4] = 2.0 * p.x;
                    out[7] = p.y;
                    out[8] = p.z;
                }
                1 => {
                    out[5] = 2.0 * p.y;
                    out[7] = p.x;
                    out[9] = p.z;
                }
                _ => {
                    out[6] = 2.0 * p.z;
                    out[8] = p.x;
                    out[9] = p.y;
                }
            }
        }
    }
}

/// Stabilization penalties on the second-degree coefficients,
/// mu = [mu_x2, mu_y2, mu_z2, mu_xy, mu_xz, mu_yz].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MmlsConstraints {
    /// No stabilization: classical MLS.
    None,
    /// Each penalty equals `factor` times the mean diagonal of the moment
    /// matrix, making the penalty invariant under coordinate rescaling.
    ScaledByMoment(f64),
    /// Explicit penalties.
    Explicit([f64; 6]),
}

impl Default for MmlsConstraints {
    fn default() -> Self {
        MmlsConstraints::ScaledByMoment(1e-7)
    }
}

impl MmlsConstraints {
    fn penalties(&self, mean_diag: f64) -> [f64; 6] {
        match self {
            MmlsConstraints::None => [0.0; 6],
            MmlsConstraints::ScaledByMoment(f) => [f * mean_diag; 6],
            MmlsConstraints::Explicit(mu) => *mu,
        }
    }

    /// True when every penalty is strictly positive, which guarantees the
    /// regularized moment matrix admits a (possibly rank-truncated) solve.
    fn strictly_positive(&self) -> bool {
        match self {
            MmlsConstraints::None => false,
            MmlsConstraints::ScaledByMoment(f) => *f > 0.0,
            MmlsConstraints::Explicit(mu) => mu.iter().all(|&m| m > 0.0),
        }
    }
}

/// Constraint matrix H for the 3D quadratic basis (Eq.-(22) structure):
/// 10 x 10, zero everywhere except the last six diagonal entries.
pub fn constraint_matrix(mu: &[f64; 6]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(10, 10);
    for (k, &m) in mu.iter().enumerate() {
        h[(4 + k, 4 + k)] = m;
    }
    h
}

/// 2D analogue on the basis [1, x, y, x^2, y^2, xy]: 6 x 6 with the last
/// three diagonal entries equal to the penalties. Only exercised by unit
/// tests; full 2D solves are out of scope.
pub fn constraint_matrix_2d(mu: &[f64; 3]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(6, 6);
    for (k, &m) in mu.iter().enumerate() {
        h[(3 + k, 3 + k)] = m;
    }
    h
}

/// All approximation parameters needed to evaluate shape functions.
#[derive(Clone, Copy, Debug)]
pub struct ApproxParams {
    pub basis: Basis,
    pub weight: WeightKind,
    pub constraints: MmlsConstraints,
    pub support: SupportParams,
}

impl Default for ApproxParams {
    fn default() -> Self {
        Self {
            basis: Basis::Quadratic,
            weight: WeightKind::Regularized {
                epsilon: DEFAULT_EPSILON,
            },
            constraints: MmlsConstraints::default(),
            support: SupportParams::default(),
        }
    }
}

/// Shape function evaluation at one point.
#[derive(Debug, Clone)]
pub struct ShapeEval {
    /// Support node ids (ascending) that carry nonzero weight.
    pub nodes: Vec<usize>,
    pub phi: Vec<f64>,
    /// Reference-configuration gradients (1/m).
    pub grad: Vec<Vector3<f64>>,
    /// Pivot-ratio diagnostic of the regularized moment matrix.
    pub condition: f64,
    /// Effective stabilization penalties applied at this point.
    pub penalties: [f64; 6],
}

impl ShapeEval {
    /// Diagnostic CSV dump: node_id, phi, dphidx, dphidy, dphidz.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node_id,phi,dphidx,dphidy,dphidz")?;
        for (k, &id) in self.nodes.iter().enumerate() {
            let g = self.grad[k];
            writeln!(out, "{id},{:e},{:e},{:e},{:e}", self.phi[k], g.x, g.y, g.z)?;
        }
        Ok(())
    }
}

struct LocalSystem {
    nodes: Vec<usize>,
    penalties: [f64; 6],
    weights: Vec<f64>,
    /// Gradient factor per node: grad_y w_i = slope_i * (y - y_i).
    slopes: Vec<f64>,
    /// Column i holds p(y_i).
    p_nodes: DMatrix<f64>,
    y_eval: Vector3<f64>,
    y_nodes: Vec<Vector3<f64>>,
    scale: f64,
    eval_point: Point3<f64>,
}

/// Factored moment matrix, kept in square-root form.
///
/// M = P' W P + H is never formed: a column-pivoted QR of the stacked matrix
/// [sqrt(W) P'; sqrt(H)] gives M = Perm R' R Perm', and every quantity the
/// shape functions need is a quadratic form b1' M^-1 b2, evaluated as the dot
/// product of the two triangular half-solves R^-T Perm' b. The regularized
/// weight spans many orders of magnitude across a support, which makes the
/// normal equations lose the reproduction identities at the 1e-9 level even
/// under exact solves; the square-root route halves the condition number and
/// keeps those identities near machine precision.
struct MomentFactor {
    /// Upper-triangular R (m x m; zero-padded when the stack has fewer rows).
    r: DMatrix<f64>,
    /// Monomial permutation: column j of the pivoted system is monomial
    /// perm[j].
    perm: Vec<usize>,
    rank: usize,
    /// Pivot-ratio estimate of cond(M) (squared R-pivot ratio).
    condition: f64,
}

impl MomentFactor {
    fn forward_substitute(&self, b: &DVector<f64>, z: &mut DVector<f64>) {
        for j in 0..self.rank {
            let mut s = b[self.perm[j]];
            for k in 0..j {
                s -= self.r[(k, j)] * z[k];
            }
            z[j] = s / self.r[(j, j)];
        }
    }

    /// Half-solve z = R^-T Perm' b, truncated at the numerical rank, so that
    /// b1' M^-1 b2 = half(b1) . half(b2). One step of iterative refinement
    /// with a compensated residual removes the cond(R) amplification of the
    /// forward error, which the reproduction identities are sensitive to.
    fn half_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = self.r.nrows();
        let mut z = DVector::zeros(m);
        self.forward_substitute(b, &mut z);

        let mut resid = DVector::zeros(m);
        for j in 0..self.rank {
            // (R' z)_j with a compensated dot, against b in permuted order.
            let mut sum = 0.0f64;
            let mut err = 0.0f64;
            for k in 0..=j {
                let (hi, lo) = two_prod(self.r[(k, j)], z[k]);
                let (s, e) = two_sum(sum, hi);
                sum = s;
                err += e + lo;
            }
            let (d, e) = two_sum(b[self.perm[j]], -sum);
            resid[j] = d + (e - err);
        }
        let mut dz = DVector::zeros(m);
        // The residual is already permuted; substitute without re-indexing.
        for j in 0..self.rank {
            let mut s = resid[j];
            for k in 0..j {
                s -= self.r[(k, j)] * dz[k];
            }
            dz[j] = s / self.r[(j, j)];
        }
        z + dz
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

fn singular_at(x: &Point3<f64>) -> Error {
    Error::SingularMoment {
        x: x.x,
        y: x.y,
        z: x.z,
    }
}

fn assemble_local(
    x: &Point3<f64>,
    support: &SupportQueryResult,
    cloud: &NodeCloud,
    params: &ApproxParams,
) -> Result<LocalSystem> {
    let scale = support.r_sd;
    // Fixed local origin: centroid of the support in physical space.
    let mut centroid = Vector3::zeros();
    for &i in &support.nodes {
        centroid += cloud.coord(i).coords;
    }
    centroid /= support.nodes.len().max(1) as f64;

    let y_eval = (x.coords - centroid) / scale;

    let mut nodes = Vec::with_capacity(support.nodes.len());
    let mut weights = Vec::with_capacity(support.nodes.len());
    let mut slopes = Vec::with_capacity(support.nodes.len());
    let mut y_nodes = Vec::with_capacity(support.nodes.len());
    for &i in &support.nodes {
        let y_i = (cloud.coord(i).coords - centroid) / scale;
        let q = (y_eval - y_i).norm_squared();
        // Nodes at or beyond the cutoff carry zero weight and are dropped
        // before assembly so W stays positive on the diagonal.
        if q >= 1.0 {
            continue;
        }
        let (w, g) = params.weight.eval(q);
        if w <= 0.0 {
            continue;
        }
        nodes.push(i);
        weights.push(w);
        slopes.push(g);
        y_nodes.push(y_i);
    }
    if nodes.is_empty() {
        return Err(singular_at(x));
    }

    let m = params.basis.len();
    let n = nodes.len();
    let mut p_nodes = DMatrix::zeros(m, n);
    let mut row = vec![0.0; m];
    for (col, y_i) in y_nodes.iter().enumerate() {
        params.basis.eval(y_i, &mut row);
        for j in 0..m {
            p_nodes[(j, col)] = row[j];
        }
    }

    // Penalties are scaled to the moment matrix trace,
    // tr(P' W P) = sum_i w_i |p(y_i)|^2, computed without forming it.
    let mut penalties = [0.0; 6];
    if params.basis == Basis::Quadratic {
        let mut trace = 0.0;
        for col in 0..n {
            let mut norm_sq = 0.0;
            for j in 0..m {
                norm_sq += p_nodes[(j, col)] * p_nodes[(j, col)];
            }
            trace += weights[col] * norm_sq;
        }
        penalties = params.constraints.penalties(trace / m as f64);
    }

    Ok(LocalSystem {
        nodes,
        penalties,
        weights,
        slopes,
        p_nodes,
        y_eval,
        y_nodes,
        scale,
        eval_point: *x,
    })
}

fn factor(sys: &LocalSystem, params: &ApproxParams) -> Result<MomentFactor> {
    let m = sys.p_nodes.nrows();
    let n = sys.nodes.len();
    let extra = if params.basis == Basis::Quadratic { 6 } else { 0 };
    let rows = (n + extra).max(m);
    let mut stack = DMatrix::zeros(rows, m);
    for i in 0..n {
        let sw = sys.weights[i].sqrt();
        for j in 0..m {
            stack[(i, j)] = sw * sys.p_nodes[(j, i)];
        }
    }
    for k in 0..extra {
        stack[(n + k, 4 + k)] = sys.penalties[k].sqrt();
    }

    let qr = stack.col_piv_qr();
    // Extract the column permutation by applying it to the index row.
    let mut cols = DMatrix::from_fn(1, m, |_, j| j as f64);
    qr.p().permute_columns(&mut cols);
    let perm: Vec<usize> = (0..m).map(|j| cols[(0, j)] as usize).collect();
    let r_packed = qr.r();
    let mut r = DMatrix::zeros(m, m);
    for j in 0..r_packed.nrows().min(m) {
        for k in j..m {
            r[(j, k)] = r_packed[(j, k)];
        }
    }

    let pivot_max = r[(0, 0)].abs();
    let mut rank = 0;
    for j in 0..m {
        if r[(j, j)].abs() > RANK_TOL * pivot_max {
            rank = j + 1;
        } else {
            break;
        }
    }
    if rank == 0 {
        return Err(singular_at(&sys.eval_point));
    }
    if rank < m && !(params.basis == Basis::Quadratic && params.constraints.strictly_positive()) {
        // Degenerate node configuration and nothing to regularize it:
        // inadmissible for classical MLS.
        return Err(singular_at(&sys.eval_point));
    }
    let ratio = pivot_max / r[(rank - 1, rank - 1)].abs();
    Ok(MomentFactor {
        r,
        perm,
        rank,
        condition: ratio * ratio,
    })
}

/// Half-solves of the monomial columns: z_i = R^-T Perm' p(y_i), plus the
/// evaluation-point column. phi_i = w_i <z_i, z_eval>.
fn half_columns(sys: &LocalSystem, factor: &MomentFactor) -> (Vec<DVector<f64>>, DVector<f64>) {
    let m = sys.p_nodes.nrows();
    let n = sys.nodes.len();
    let mut z_nodes = Vec::with_capacity(n);
    let mut b = DVector::zeros(m);
    for col in 0..n {
        for j in 0..m {
            b[j] = sys.p_nodes[(j, col)];
        }
        z_nodes.push(factor.half_solve(&b));
    }
    (z_nodes, DVector::zeros(m))
}

/// Shape function values only (no derivatives); used by audits and the
/// boundary-condition reconstruction.
pub fn shape_values(
    x: &Point3<f64>,
    support: &SupportQueryResult,
    cloud: &NodeCloud,
    params: &ApproxParams,
) -> Result<ShapeEval> {
    let sys = assemble_local(x, support, cloud, params)?;
    let factor = factor(&sys, params)?;

    let n = sys.nodes.len();
    let (z_nodes, mut p_eval) = half_columns(&sys, &factor);
    params.basis.eval(&sys.y_eval, p_eval.as_mut_slice());
    let z_eval = factor.half_solve(&p_eval);

    let mut phi = Vec::with_capacity(n);
    for col in 0..n {
        phi.push(sys.weights[col] * z_nodes[col].dot(&z_eval));
    }
    if phi.iter().any(|p| !p.is_finite()) {
        return Err(singular_at(x));
    }
    Ok(ShapeEval {
        nodes: sys.nodes,
        phi,
        grad: Vec::new(),
        condition: factor.condition,
        penalties: sys.penalties,
    })
}

/// Shape functions and their reference-configuration gradients.
///
/// Values follow phi = p'(x) (P'WP + H)^-1 P'W; gradients expand the
/// derivative of the fitted coefficients with the product rule, using
/// d(M^-1)/dx_k = -M^-1 dM/dx_k M^-1 with H constant, so only the weight
/// derivatives enter dM/dx_k. All inverse applications reuse the one
/// factorization per evaluation point.
pub fn shape_mmls(
    x: &Point3<f64>,
    support: &SupportQueryResult,
    cloud: &NodeCloud,
    params: &ApproxParams,
) -> Result<ShapeEval> {
    let sys = assemble_local(x, support, cloud, params)?;
    let factor = factor(&sys, params)?;

    let m = params.basis.len();
    let n = sys.nodes.len();
    let (z_nodes, mut p_eval) = half_columns(&sys, &factor);
    params.basis.eval(&sys.y_eval, p_eval.as_mut_slice());
    let z_eval = factor.half_solve(&p_eval);

    let mut phi = Vec::with_capacity(n);
    for col in 0..n {
        phi.push(sys.weights[col] * z_nodes[col].dot(&z_eval));
    }

    // Per-axis pieces of the product rule, all in the local y frame:
    // phi_i,k = w_i <z_i, z_pk> - w_i <z_i, z_b> + dw_i <z_i, z_eval>
    // with b = (dA/dy_k) M^-1 p accumulated from dw_i <z_i, z_eval> p_i.
    let mut grad = vec![Vector3::zeros(); n];
    let mut p_grad = vec![0.0; m];
    let mut b = DVector::zeros(m);
    for axis in 0..3 {
        params.basis.grad(&sys.y_eval, axis, &mut p_grad);
        let pk = DVector::from_column_slice(&p_grad);
        let z_pk = factor.half_solve(&pk);

        b.fill(0.0);
        for col in 0..n {
            let dw = sys.slopes[col] * (sys.y_eval[axis] - sys.y_nodes[col][axis]);
            let f = dw * z_nodes[col].dot(&z_eval);
            for j in 0..m {
                b[j] += f * sys.p_nodes[(j, col)];
            }
        }
        let z_b = factor.half_solve(&b);

        for col in 0..n {
            let dw = sys.slopes[col] * (sys.y_eval[axis] - sys.y_nodes[col][axis]);
            let d1 = z_nodes[col].dot(&z_pk);
            let d2 = z_nodes[col].dot(&z_b);
            let dv = z_nodes[col].dot(&z_eval);
            // chain rule back to physical coordinates
            grad[col][axis] = (sys.weights[col] * (d1 - d2) + dw * dv) / sys.scale;
        }
    }

    if phi.iter().any(|p| !p.is_finite())
        || grad
            .iter()
            .any(|g| !(g.x.is_finite() && g.y.is_finite() && g.z.is_finite()))
    {
        return Err(singular_at(x));
    }

    Ok(ShapeEval {
        nodes: sys.nodes,
        phi,
        grad,
        condition: factor.condition,
        penalties: sys.penalties,
    })
}

/// Interpolation-property audit (Kronecker-delta deviation).
#[derive(Debug, Clone)]
pub struct KroneckerAudit {
    pub max_deviation: f64,
    pub max_bound: f64,
    pub samples: Vec<AuditSample>,
}

#[derive(Debug, Clone, Copy)]
pub struct AuditSample {
    pub node: usize,
    pub deviation: f64,
    /// Analytic weight-deviation bound ((r_min / r_sd)^-4 - 1) eps^2.
    pub bound: f64,
    pub support_size: usize,
}

/// Evaluates shape functions at `n_sample` randomly chosen nodes and reports
/// the worst |phi_i(x_j) - delta_ij| together with the analytic bound per
/// sample. Requires the regularized weight.
pub fn kronecker_audit(
    cloud: &NodeCloud,
    index: &SearchGrid,
    n_sample: usize,
    params: &ApproxParams,
    seed: u64,
) -> Result<KroneckerAudit> {
    let epsilon = params.weight.epsilon().ok_or_else(|| {
        Error::Config("interpolation audit requires the regularized weight".into())
    })?;

    let ids: Vec<usize> = if n_sample >= cloud.len() {
        (0..cloud.len()).collect()
    } else {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, cloud.len(), n_sample).into_vec();
        picked.sort_unstable();
        picked
    };

    let mut samples = Vec::with_capacity(ids.len());
    let mut max_deviation = 0.0f64;
    let mut max_bound = 0.0f64;
    for &j in &ids {
        let x = cloud.coord(j);
        let r_init = initial_support_radius(index, x, params.support.r_init_factor);
        let support = find_support(x, cloud, index, params.support.n_min, r_init)?;
        let eval = shape_values(x, &support, cloud, params)?;
        let mut deviation = 0.0f64;
        for (k, &i) in eval.nodes.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            deviation = deviation.max((eval.phi[k] - target).abs());
        }
        let r_min = support_r_min(cloud, &support);
        let ratio = r_min / support.r_sd;
        let bound = (ratio.powi(-4) - 1.0) * epsilon * epsilon;
        max_deviation = max_deviation.max(deviation);
        max_bound = max_bound.max(bound);
        samples.push(AuditSample {
            node: j,
            deviation,
            bound,
            support_size: eval.nodes.len(),
        });
    }
    Ok(KroneckerAudit {
        max_deviation,
        max_bound,
        samples,
    })
}

/// Compares analytic shape gradients against central finite differences of
/// the shape values themselves. Returns the worst discrepancy over neighbours
/// and axes, relative to the largest analytic gradient entry.
pub fn gradient_check(
    x: &Point3<f64>,
    support: &SupportQueryResult,
    cloud: &NodeCloud,
    params: &ApproxParams,
    step: f64,
) -> Result<f64> {
    let eval = shape_mmls(x, support, cloud, params)?;
    // H is constant per evaluation point by design; freeze the centre
    // penalties so the differenced values sample the same functional.
    let frozen = ApproxParams {
        constraints: MmlsConstraints::Explicit(eval.penalties),
        ..*params
    };
    let scale = eval
        .grad
        .iter()
        .flat_map(|g| [g.x.abs(), g.y.abs(), g.z.abs()])
        .fold(0.0f64, f64::max)
        .max(1e-300);

    let mut worst = 0.0f64;
    for axis in 0..3 {
        let mut dx = Vector3::zeros();
        dx[axis] = step;
        let plus = shape_values(&(x + dx), support, cloud, &frozen)?;
        let minus = shape_values(&(x - dx), support, cloud, &frozen)?;
        let lookup = |eval: &ShapeEval, id: usize| -> f64 {
            eval.nodes
                .binary_search(&id)
                .map(|k| eval.phi[k])
                .unwrap_or(0.0)
        };
        for (k, &id) in eval.nodes.iter().enumerate() {
            let fd = (lookup(&plus, id) - lookup(&minus, id)) / (2.0 * step);
            worst = worst.max((eval.grad[k][axis] - fd).abs() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::generate_cube_grid;
    use approx::assert_relative_eq;

    fn lattice_patch(spacing: f64) -> NodeCloud {
        // 3 x 3 x 3 patch around the origin.
        let mut coords = Vec::new();
        for k in -1..=1 {
            for j in -1..=1 {
                for i in -1..=1 {
                    coords.push(Point3::new(
                        i as f64 * spacing,
                        j as f64 * spacing,
                        k as f64 * spacing,
                    ));
                }
            }
        }
        NodeCloud::new(coords).unwrap()
    }

    fn full_support(cloud: &NodeCloud, r_sd: f64) -> SupportQueryResult {
        SupportQueryResult {
            nodes: (0..cloud.len()).collect(),
            r_sd,
        }
    }

    #[test]
    fn quadratic_basis_order_is_fixed() {
        let mut out = [0.0; 10];
        Basis::Quadratic.eval(&Vector3::new(2.0, 3.0, 5.0), &mut out);
        assert_eq!(out, [1.0, 2.0, 3.0, 5.0, 4.0, 9.0, 25.0, 6.0, 10.0, 15.0]);
    }

    #[test]
    fn constraint_matrix_matches_block_structure() {
        let mu = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let h = constraint_matrix(&mu);
        for j in 0..10 {
            for k in 0..10 {
                let expected = if j == k && j >= 4 { mu[j - 4] } else { 0.0 };
                assert_eq!(h[(j, k)], expected, "H[{j},{k}]");
            }
        }
    }

    #[test]
    fn constraint_matrix_2d_matches_block_structure() {
        let mu = [1.0, 2.0, 3.0];
        let h = constraint_matrix_2d(&mu);
        for j in 0..6 {
            for k in 0..6 {
                let expected = if j == k && j >= 3 { mu[j - 3] } else { 0.0 };
                assert_eq!(h[(j, k)], expected, "H[{j},{k}]");
            }
        }
    }

    #[test]
    fn partition_of_unity_on_lattice_patch() {
        let cloud = lattice_patch(0.02);
        let support = full_support(&cloud, 0.05);
        let params = ApproxParams::default();
        for x in [
            Point3::new(0.003, -0.007, 0.011),
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.019, 0.019, 0.019),
        ] {
            let eval = shape_mmls(&x, &support, &cloud, &params).unwrap();
            let sum: f64 = eval.phi.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10, "sum phi = {sum}");
        }
    }

    #[test]
    fn linear_and_quadratic_reproduction() {
        let cloud = lattice_patch(0.02);
        let support = full_support(&cloud, 0.05);
        let params = ApproxParams::default();
        let x = Point3::new(0.004, -0.006, 0.002);
        let eval = shape_mmls(&x, &support, &cloud, &params).unwrap();
        // Linear fields are reproduced essentially exactly; penalties touch
        // only the second-degree coefficients.
        for axis in 0..3 {
            let recon: f64 = eval
                .nodes
                .iter()
                .zip(&eval.phi)
                .map(|(&i, &p)| p * cloud.coord(i)[axis])
                .sum();
            assert_relative_eq!(recon, x[axis], max_relative = 1e-8, epsilon = 1e-12);
        }
        // Quadratic monomials degrade only by the small penalty.
        let recon_x2: f64 = eval
            .nodes
            .iter()
            .zip(&eval.phi)
            .map(|(&i, &p)| p * cloud.coord(i).x * cloud.coord(i).x)
            .sum();
        assert_relative_eq!(recon_x2, x.x * x.x, max_relative = 1e-4);
    }

    #[test]
    fn coplanar_nodes_need_positive_penalties() {
        // All nodes on z = 0.01: inadmissible for plain MLS.
        let mut coords = Vec::new();
        for j in -2..=2 {
            for i in -2..=2 {
                coords.push(Point3::new(i as f64 * 0.01, j as f64 * 0.01, 0.01));
            }
        }
        let cloud = NodeCloud::new(coords).unwrap();
        let support = full_support(&cloud, 0.05);
        let x = Point3::new(0.002, 0.003, 0.01);

        let mut params = ApproxParams {
            constraints: MmlsConstraints::None,
            ..ApproxParams::default()
        };
        let err = shape_mmls(&x, &support, &cloud, &params).unwrap_err();
        assert!(matches!(err, Error::SingularMoment { .. }));

        params.constraints = MmlsConstraints::ScaledByMoment(1e-7);
        let eval = shape_mmls(&x, &support, &cloud, &params).unwrap();
        let sum: f64 = eval.phi.iter().sum();
        assert!(sum.is_finite());
        assert!((sum - 1.0).abs() < 1e-9, "sum phi = {sum}");
    }

    #[test]
    fn at_node_deviation_tracks_interpolation_bound() {
        let cloud = lattice_patch(0.02);
        let r_sd = 1.8 * 0.02;
        let support = full_support(&cloud, r_sd);
        let params = ApproxParams::default();
        let center = 13; // (0,0,0)
        let x = *cloud.coord(center);
        let eval = shape_mmls(&x, &support, &cloud, &params).unwrap();
        let r_min = support_r_min(&cloud, &support);
        let bound = ((r_min / r_sd).powi(-4) - 1.0) * 1e-5f64.powi(2);
        // The bound is stated for the weights: the largest off-node weight is
        // w(r_min), which the bound approximates to first order in epsilon.
        for &i in &eval.nodes {
            let r = (cloud.coord(i) - x).norm();
            let target = if i == center { 1.0 } else { 0.0 };
            let w = weight_regularized(r, r_sd, 1e-5);
            assert!(
                (w - target).abs() <= bound * 1.01,
                "weight at node {i} deviates {} vs bound {bound}",
                (w - target).abs()
            );
        }
        // The shape functions inherit the near-delta property up to a small
        // factor (the audit criterion uses 10x for the same reason).
        for (k, &i) in eval.nodes.iter().enumerate() {
            let target = if i == center { 1.0 } else { 0.0 };
            assert!(
                (eval.phi[k] - target).abs() <= 10.0 * bound,
                "phi[{i}] = {} deviates more than 10x bound {bound}",
                eval.phi[k]
            );
        }
    }

    #[test]
    fn single_node_support_is_exact() {
        let cloud = NodeCloud::new(vec![Point3::new(0.5, 0.5, 0.5)]).unwrap();
        let support = full_support(&cloud, 0.1);
        let params = ApproxParams::default();
        let eval = shape_mmls(&Point3::new(0.5, 0.5, 0.5), &support, &cloud, &params).unwrap();
        assert_eq!(eval.nodes.len(), 1);
        assert!((eval.phi[0] - 1.0).abs() < 1e-12);
        assert!(eval.grad[0].norm() < 1e-9);
    }

    #[test]
    fn mls_equals_mmls_with_zero_penalties() {
        let cloud = lattice_patch(0.02);
        let support = full_support(&cloud, 0.05);
        let x = Point3::new(0.004, -0.006, 0.002);
        let none = ApproxParams {
            constraints: MmlsConstraints::None,
            ..ApproxParams::default()
        };
        let zero = ApproxParams {
            constraints: MmlsConstraints::Explicit([0.0; 6]),
            ..ApproxParams::default()
        };
        let a = shape_mmls(&x, &support, &cloud, &none).unwrap();
        let b = shape_mmls(&x, &support, &cloud, &zero).unwrap();
        for (pa, pb) in a.phi.iter().zip(&b.phi) {
            assert_relative_eq!(pa, pb, max_relative = 1e-10, epsilon = 1e-15);
        }
    }

    #[test]
    fn default_penalties_track_classical_mls_on_admissible_supports() {
        let cloud = lattice_patch(0.02);
        let support = full_support(&cloud, 0.05);
        let x = Point3::new(0.004, -0.006, 0.002);
        let mls = ApproxParams {
            constraints: MmlsConstraints::None,
            ..ApproxParams::default()
        };
        let mmls = ApproxParams::default();
        let a = shape_mmls(&x, &support, &cloud, &mls).unwrap();
        let b = shape_mmls(&x, &support, &cloud, &mmls).unwrap();
        // The trace-scaled default penalties perturb the classical values at
        // the same order as the quadratic-reproduction degradation.
        for (pa, pb) in a.phi.iter().zip(&b.phi) {
            assert!((pa - pb).abs() < 1e-5, "|{pa} - {pb}|");
        }
    }

    #[test]
    fn gradient_check_examples() {
        let cloud = lattice_patch(0.02);
        let support = full_support(&cloud, 0.05);
        let params = ApproxParams::default();
        let x = Point3::new(0.0031, -0.0052, 0.0017);
        let worst = gradient_check(&x, &support, &cloud, &params, 1e-6 * 0.05).unwrap();
        assert!(worst < 1e-5, "gradient discrepancy {worst}");

        let eval = shape_mmls(&x, &support, &cloud, &params).unwrap();
        // Gradient of the partition of unity vanishes.
        let sum_grad: Vector3<f64> = eval.grad.iter().sum();
        assert!(sum_grad.norm() < 1e-8, "sum grad = {sum_grad:?}");
        // Differentiated linear completeness: sum_i dphi_i/dx * x_i = 1.
        let mut jac = [[0.0f64; 3]; 3];
        for (k, &i) in eval.nodes.iter().enumerate() {
            for a in 0..3 {
                for b in 0..3 {
                    jac[a][b] += eval.grad[k][a] * cloud.coord(i)[b];
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (jac[a][b] - expected).abs() < 1e-8,
                    "d(x_{b})/dx_{a} = {}",
                    jac[a][b]
                );
            }
        }
    }

    #[test]
    fn audit_deviation_grows_with_epsilon() {
        let (cloud, _) = generate_cube_grid(0.1, 6).unwrap();
        let index = SearchGrid::new(&cloud);
        let mut params = ApproxParams::default();
        let coarse = {
            params.weight = WeightKind::Regularized { epsilon: 1e-3 };
            kronecker_audit(&cloud, &index, 20, &params, 11).unwrap()
        };
        let fine = {
            params.weight = WeightKind::Regularized { epsilon: 1e-5 };
            kronecker_audit(&cloud, &index, 20, &params, 11).unwrap()
        };
        assert!(
            coarse.max_deviation > fine.max_deviation,
            "eps=1e-3 deviation {} should exceed eps=1e-5 deviation {}",
            coarse.max_deviation,
            fine.max_deviation
        );
    }

    #[test]
    fn audit_on_cube_lattice_within_ten_times_bound() {
        let (cloud, _) = generate_cube_grid(0.1, 6).unwrap();
        let index = SearchGrid::new(&cloud);
        let params = ApproxParams::default();
        let audit = kronecker_audit(&cloud, &index, 40, &params, 3).unwrap();
        for s in &audit.samples {
            assert!(
                s.deviation <= 10.0 * s.bound,
                "node {}: deviation {} vs bound {}",
                s.node,
                s.deviation,
                s.bound
            );
        }
    }

    #[test]
    fn exponential_weight_is_not_interpolating() {
        let cloud = lattice_patch(0.02);
        let support = full_support(&cloud, 0.05);
        let regular = ApproxParams::default();
        let exponential = ApproxParams {
            weight: WeightKind::Exponential,
            ..ApproxParams::default()
        };
        let x = *cloud.coord(13);
        let a = shape_values(&x, &support, &cloud, &regular).unwrap();
        let b = shape_values(&x, &support, &cloud, &exponential).unwrap();
        let dev = |eval: &ShapeEval| -> f64 {
            eval.nodes
                .iter()
                .zip(&eval.phi)
                .map(|(&i, &p)| (p - if i == 13 { 1.0 } else { 0.0 }).abs())
                .fold(0.0, f64::max)
        };
        assert!(dev(&a) < 1e-6);
        assert!(dev(&b) > 1e-2, "exponential deviation {}", dev(&b));
    }

    #[test]
    fn shape_eval_csv_dump_has_expected_layout() {
        let cloud = lattice_patch(0.02);
        let support = full_support(&cloud, 0.05);
        let params = ApproxParams::default();
        let eval = shape_mmls(&Point3::new(0.001, 0.002, 0.003), &support, &cloud, &params).unwrap();
        let mut buf = Vec::new();
        eval.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("node_id,phi,dphidx,dphidy,dphidz"));
        assert_eq!(text.lines().count(), eval.nodes.len() + 1);
    }
}
