//! Ground-truth engine on 1D/2D grid discretizations: gauge-covariant
//! finite-difference matrices for `H_V = nabla^dagger nabla / 2 + V`,
//! `e^{-tH}` and `cos(t sqrt(H))` by Hermitian eigendecomposition,
//! Davies-Gaffney and finite-propagation-speed checks, and Friedrichs
//! mollifiers with their graph-norm convergence tables.
//!
//! Hopping terms use one-step unitary transports `expm(-A h)` between
//! neighbors, which keeps the matrix Hermitian for every connection. Under
//! `H = -Delta/2 + V` the sharp propagation cone expands at speed
//! `1/sqrt(2)`, while the Davies-Gaffney exponent stays the standard
//! `d^2/(4t)` (the weaker of the two normalizations).

use crate::bundle::{BundleSpec, PotentialField};
use crate::error::{Error, Result};
use crate::geometry::{ManifoldModel, ModelKind, Point};
use crate::linalg::{expm_anti_hermitian, hermitian_defect, CMatrix, CVector};
use num_complex::Complex64;
use serde_json::json;
use std::io::Write;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    Dirichlet,
}

/// Monotone potential approximations from the convergence arguments:
/// `min(V, n)` caps from above, `max(-n, V)` from below (fiberwise
/// spectral calculus).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialClamp {
    None,
    CapAbove(f64),
    CapBelow(f64),
}

/// The discretization grid: an ordered list of nodes with uniform spacing
/// per direction.
#[derive(Debug, Clone)]
pub struct OracleGrid {
    pub model: ManifoldModel,
    pub points: Vec<Point>,
    /// spacing per direction
    pub h: Vec<f64>,
    /// nodes per direction (n2 = 1 for 1D grids)
    pub shape: (usize, usize),
    pub boundary: Boundary,
}

impl OracleGrid {
    pub fn n_nodes(&self) -> usize {
        self.points.len()
    }

    /// `min_{i in a, j in b} d(x_i, x_j)`.
    pub fn set_distance(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        let mut best = f64::INFINITY;
        for &i in a {
            for &j in b {
                let d = self.model.distance(&self.points[i], &self.points[j])?;
                best = best.min(d);
            }
        }
        Ok(best)
    }

    /// Geodesic distance from a node to a node set.
    pub fn distance_to_set(&self, i: usize, set: &[usize]) -> Result<f64> {
        self.set_distance(&[i], set)
    }
}

/// Hermitian matrix of `H_V` on the grid, with a cached eigendecomposition.
pub struct OperatorMatrix {
    pub grid: OracleGrid,
    pub rank: usize,
    pub matrix: CMatrix,
    /// potential values at the nodes (for applying `V` alone)
    pub v_nodes: Vec<CMatrix>,
    eig: OnceLock<(Vec<f64>, CMatrix)>,
}

fn clamp_matrix(v: &CMatrix, clamp: PotentialClamp) -> CMatrix {
    match clamp {
        PotentialClamp::None => v.clone(),
        PotentialClamp::CapAbove(n) => {
            crate::linalg::hermitian_map(v, |lam| lam.min(n))
        }
        PotentialClamp::CapBelow(n) => {
            crate::linalg::hermitian_map(v, |lam| lam.max(-n))
        }
    }
}

/// Second-order covariant finite differences on the circle, the absorbing
/// interval (Dirichlet) or the 2D flat torus. `nodes` counts grid points
/// per direction.
pub fn discretize(
    model: &ManifoldModel,
    spec: &BundleSpec,
    v: &PotentialField,
    nodes: usize,
) -> Result<OperatorMatrix> {
    discretize_clamped(model, spec, v, nodes, PotentialClamp::None)
}

pub fn discretize_clamped(
    model: &ManifoldModel,
    spec: &BundleSpec,
    v: &PotentialField,
    nodes: usize,
    clamp: PotentialClamp,
) -> Result<OperatorMatrix> {
    if nodes < 8 {
        return Err(Error::Domain("oracle grids need >= 8 nodes".into()));
    }
    if spec.base() != model {
        return Err(Error::Contract("bundle base differs from the model".into()));
    }
    let k = spec.rank();
    if v.rank() != k {
        return Err(Error::Contract(format!(
            "potential rank {} vs bundle rank {k}",
            v.rank()
        )));
    }
    match model.kind() {
        ModelKind::Circle { length } => {
            let n = nodes;
            let h = length / n as f64;
            let points: Vec<Point> = (0..n).map(|j| Point::from_scalar(j as f64 * h)).collect();
            let grid = OracleGrid {
                model: model.clone(),
                points,
                h: vec![h],
                shape: (n, 1),
                boundary: Boundary::Periodic,
            };
            build_1d(grid, spec, v, clamp, true)
        }
        ModelKind::IntervalAbsorbing { length } => {
            let h = length / nodes as f64;
            let points: Vec<Point> = (1..nodes)
                .map(|j| Point::from_scalar(j as f64 * h))
                .collect();
            let grid = OracleGrid {
                model: model.clone(),
                points,
                h: vec![h],
                shape: (nodes - 1, 1),
                boundary: Boundary::Dirichlet,
            };
            build_1d(grid, spec, v, clamp, false)
        }
        ModelKind::FlatTorus { lengths } if lengths.len() == 2 => {
            let n = nodes;
            let h1 = lengths[0] / n as f64;
            let h2 = lengths[1] / n as f64;
            let mut points = Vec::with_capacity(n * n);
            for j2 in 0..n {
                for j1 in 0..n {
                    points.push(Point::new(&[j1 as f64 * h1, j2 as f64 * h2]));
                }
            }
            let grid = OracleGrid {
                model: model.clone(),
                points,
                h: vec![h1, h2],
                shape: (n, n),
                boundary: Boundary::Periodic,
            };
            build_torus2(grid, spec, v, clamp)
        }
        _ => Err(Error::Domain(
            "the oracle discretizes circle, interval_absorbing and 2D flat_torus models".into(),
        )),
    }
}

fn build_1d(
    grid: OracleGrid,
    spec: &BundleSpec,
    v: &PotentialField,
    clamp: PotentialClamp,
    periodic: bool,
) -> Result<OperatorMatrix> {
    let k = spec.rank();
    let n = grid.n_nodes();
    let h = grid.h[0];
    let dim = n * k;
    let mut m = CMatrix::zeros(dim, dim);
    let kin = 1.0 / (2.0 * h * h);
    // unitary link from node j to node j+1
    let link = |j: usize| -> CMatrix {
        let a = grid.points[j];
        let b = if periodic && j + 1 == n {
            grid.model
                .exp_map(&a, &[h])
                .expect("valid step")
        } else if j + 1 < n {
            grid.points[j + 1]
        } else {
            grid.model.exp_map(&a, &[h]).expect("valid step")
        };
        let mid = grid.model.chart_midpoint(&a, &b);
        let dx = grid.model.chart_displacement(&a, &b);
        let a_form = spec.connection_form(&mid, &dx[..1]);
        expm_anti_hermitian(&a_form.map(|z| -z))
    };
    let mut v_nodes = Vec::with_capacity(n);
    for j in 0..n {
        let (vm, _) = v.eval_at(&grid.points[j]);
        let vm = clamp_matrix(&vm, clamp);
        if hermitian_defect(&vm) > 1e-10 * (1.0 + vm.norm()) {
            return Err(Error::Contract("potential not Hermitian at a node".into()));
        }
        for a in 0..k {
            for b in 0..k {
                m[(j * k + a, j * k + b)] += vm[(a, b)];
            }
            m[(j * k + a, j * k + a)] += Complex64::new(2.0 * kin, 0.0);
        }
        v_nodes.push(vm);
    }
    let edges = if periodic { n } else { n - 1 };
    for j in 0..edges {
        let w = link(j);
        let jn = (j + 1) % n;
        // H[j, j+1] = -W^dagger / (2h^2), H[j+1, j] = -W / (2h^2)
        for a in 0..k {
            for b in 0..k {
                m[(j * k + a, jn * k + b)] += -w[(b, a)].conj() * kin;
                m[(jn * k + a, j * k + b)] += -w[(a, b)] * kin;
            }
        }
    }
    Ok(OperatorMatrix {
        grid,
        rank: k,
        matrix: m,
        v_nodes,
        eig: OnceLock::new(),
    })
}

fn build_torus2(
    grid: OracleGrid,
    spec: &BundleSpec,
    v: &PotentialField,
    clamp: PotentialClamp,
) -> Result<OperatorMatrix> {
    let k = spec.rank();
    let (n1, n2) = grid.shape;
    let n = n1 * n2;
    let dim = n * k;
    let mut m = CMatrix::zeros(dim, dim);
    let mut v_nodes = Vec::with_capacity(n);
    let idx = |j1: usize, j2: usize| (j2 * n1 + j1) * k;
    for j2 in 0..n2 {
        for j1 in 0..n1 {
            let node = j2 * n1 + j1;
            let (vm, _) = v.eval_at(&grid.points[node]);
            let vm = clamp_matrix(&vm, clamp);
            for a in 0..k {
                for b in 0..k {
                    m[(node * k + a, node * k + b)] += vm[(a, b)];
                }
                let kin_tot = 1.0 / (grid.h[0] * grid.h[0]) + 1.0 / (grid.h[1] * grid.h[1]);
                m[(node * k + a, node * k + a)] += Complex64::new(kin_tot, 0.0);
            }
            v_nodes.push(vm);
        }
    }
    // links in both directions
    for j2 in 0..n2 {
        for j1 in 0..n1 {
            let a_pt = grid.points[j2 * n1 + j1];
            for (dir, (i1, i2)) in [((j1 + 1) % n1, j2), (j1, (j2 + 1) % n2)]
                .into_iter()
                .enumerate()
            {
                let h = grid.h[dir];
                let kin = 1.0 / (2.0 * h * h);
                let mut step = [0.0; 2];
                step[dir] = h;
                let b_pt = grid.model.exp_map(&a_pt, &step).expect("valid step");
                let mid = grid.model.chart_midpoint(&a_pt, &b_pt);
                let dx = grid.model.chart_displacement(&a_pt, &b_pt);
                let a_form = spec.connection_form(&mid, &dx[..2]);
                let w = expm_anti_hermitian(&a_form.map(|z| -z));
                let from = idx(j1, j2);
                let to = idx(i1, i2);
                for a in 0..k {
                    for b in 0..k {
                        m[(from + a, to + b)] += -w[(b, a)].conj() * kin;
                        m[(to + a, from + b)] += -w[(a, b)] * kin;
                    }
                }
            }
        }
    }
    Ok(OperatorMatrix {
        grid,
        rank: k,
        matrix: m,
        v_nodes,
        eig: OnceLock::new(),
    })
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigendecomposition (cached): ascending eigenvalues and a unitary
    /// matrix of eigenvectors. Real-symmetric matrices take the real path.
    pub fn eig(&self) -> &(Vec<f64>, CMatrix) {
        self.eig.get_or_init(|| {
            let max_im = self
                .matrix
                .iter()
                .map(|z| z.im.abs())
                .fold(0.0_f64, f64::max);
            if max_im < 1e-14 {
                let hr = self.matrix.map(|z| z.re);
                let se = hr.symmetric_eigen();
                let n = se.eigenvalues.len();
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| {
                    se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap()
                });
                let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
                let mut vecs = CMatrix::zeros(n, n);
                for (c, &i) in order.iter().enumerate() {
                    for r in 0..n {
                        vecs[(r, c)] = Complex64::new(se.eigenvectors[(r, i)], 0.0);
                    }
                }
                (vals, vecs)
            } else {
                crate::linalg::eigh(&self.matrix)
            }
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig().0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig().0[0]
    }

    /// Shift making `H + shift` positive semidefinite.
    pub fn nonneg_shift(&self) -> f64 {
        (-self.min_eigenvalue()).max(0.0)
    }

    /// Plain matrix-vector application of `H`.
    pub fn apply(&self, f: &CVector) -> CVector {
        &self.matrix * f
    }

    /// Application of the potential part alone.
    pub fn apply_potential(&self, f: &CVector) -> CVector {
        let k = self.rank;
        let mut out = CVector::zeros(self.dim());
        for (node, vm) in self.v_nodes.iter().enumerate() {
            for a in 0..k {
                let mut acc = Complex64::new(0.0, 0.0);
                for b in 0..k {
                    acc += vm[(a, b)] * f[node * k + b];
                }
                out[node * k + a] = acc;
            }
        }
        out
    }

    /// Discrete `L^2` norm with the volume weight `h^m`.
    pub fn grid_norm(&self, f: &CVector) -> f64 {
        let vol: f64 = self.grid.h.iter().product();
        (f.iter().map(|z| z.norm_sqr()).sum::<f64>() * vol).sqrt()
    }

    fn spectral_apply(&self, f: &CVector, weight: impl Fn(f64) -> f64) -> CVector {
        let (vals, vecs) = self.eig();
        let coeffs = vecs.adjoint() * f;
        let weighted = CVector::from_iterator(
            vals.len(),
            coeffs
                .iter()
                .zip(vals)
                .map(|(c, &lam)| c * weight(lam)),
        );
        vecs * weighted
    }

    pub fn eigenvalue_table_json(&self, count: usize) -> serde_json::Value {
        let vals = self.eigenvalues();
        json!({
            "nodes": self.grid.n_nodes(),
            "rank": self.rank,
            "eigenvalues": vals.iter().take(count).collect::<Vec<_>>(),
        })
    }
}

/// `e^{-tH} f` by spectral calculus; exact to linear-algebra precision.
pub fn semigroup_apply(op: &OperatorMatrix, t: f64, f: &CVector) -> Result<CVector> {
    if t < 0.0 {
        return Err(Error::Domain("semigroup needs t >= 0".into()));
    }
    Ok(op.spectral_apply(f, |lam| (-t * lam).exp()))
}

/// `cos(t sqrt(H + shift)) f`; the caller supplies the nonnegativity shift
/// (see [`OperatorMatrix::nonneg_shift`]).
pub fn wave_cosine(op: &OperatorMatrix, t: f64, f: &CVector, shift: f64) -> Result<CVector> {
    if op.min_eigenvalue() + shift < -1e-9 {
        return Err(Error::Contract(format!(
            "H + shift has negative eigenvalue {:.3e}; apply the configured shift",
            op.min_eigenvalue() + shift
        )));
    }
    Ok(op.spectral_apply(f, |lam| ((lam + shift).max(0.0).sqrt() * t).cos()))
}

#[derive(Debug, Clone, Serialize)]
pub struct DaviesGaffneyReport {
    pub distance: f64,
    pub rate_constant: f64,
    pub worst_ratio: f64,
    /// (t, ratio) per probed time
    pub per_time: Vec<(f64, f64)>,
}

use serde::Serialize;

/// Checks `|<e^{-tH} f1, f2>| <= e^{Dt} e^{-d(U1,U2)^2/(4t)} ||f1|| ||f2||`
/// over disjoint node sets, sweeping the extremal (top singular) pair of
/// the restricted propagator block; `D = max(0, -min spec V)`.
pub fn davies_gaffney_check(
    op: &OperatorMatrix,
    u1: &[usize],
    u2: &[usize],
    t_list: &[f64],
) -> Result<DaviesGaffneyReport> {
    if u1.is_empty() || u2.is_empty() {
        return Err(Error::Domain("davies-gaffney needs nonempty sets".into()));
    }
    if u1.iter().any(|i| u2.contains(i)) {
        return Err(Error::Domain("node sets overlap".into()));
    }
    let d = op.grid.set_distance(u1, u2)?;
    if !(d > 0.0) {
        return Err(Error::Domain("node sets have zero distance".into()));
    }
    // D = 0 for V >= 0, else -min eigenvalue of V over the nodes
    let mut vmin = f64::INFINITY;
    for vm in &op.v_nodes {
        let (lo, _) = crate::linalg::eig_range(vm);
        vmin = vmin.min(lo);
    }
    let big_d = (-vmin).max(0.0);
    let k = op.rank;
    let (vals, vecs) = op.eig();
    let rows: Vec<usize> = u2
        .iter()
        .flat_map(|&node| (0..k).map(move |a| node * k + a))
        .collect();
    let cols: Vec<usize> = u1
        .iter()
        .flat_map(|&node| (0..k).map(move |a| node * k + a))
        .collect();
    let mut per_time = Vec::with_capacity(t_list.len());
    let mut worst: f64 = 0.0;
    for &t in t_list {
        if !(t > 0.0) {
            return Err(Error::Domain("davies-gaffney needs t > 0".into()));
        }
        // block (e^{-tH})_{U2 x U1}
        let mut block = CMatrix::zeros(rows.len(), cols.len());
        for (bi, &r) in rows.iter().enumerate() {
            for (bj, &c) in cols.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (m, &lam) in vals.iter().enumerate() {
                    acc += vecs[(r, m)] * (-t * lam).exp() * vecs[(c, m)].conj();
                }
                block[(bi, bj)] = acc;
            }
        }
        let sigma = crate::linalg::operator_norm(&block);
        let bound = (big_d * t).exp() * (-d * d / (4.0 * t)).exp();
        let ratio = sigma / bound;
        per_time.push((t, ratio));
        worst = worst.max(ratio);
    }
    Ok(DaviesGaffneyReport {
        distance: d,
        rate_constant: big_d,
        worst_ratio: worst,
        per_time,
    })
}

/// Fraction of `||f||^2` found outside the `t/sqrt(2) + margin` fattening
/// of `supp(f)` after applying `cos(t sqrt(H + shift))`.
pub fn finite_speed_check(
    op: &OperatorMatrix,
    f: &CVector,
    t: f64,
    margin: f64,
) -> Result<f64> {
    let h_max = op.grid.h.iter().cloned().fold(0.0, f64::max);
    if margin < 3.0 * h_max {
        return Err(Error::Precision(format!(
            "margin {margin} below 3h = {}",
            3.0 * h_max
        )));
    }
    let k = op.rank;
    let support: Vec<usize> = (0..op.grid.n_nodes())
        .filter(|&node| (0..k).any(|a| f[node * k + a].norm_sqr() > 0.0))
        .collect();
    if support.is_empty() {
        return Err(Error::Domain("finite speed check needs f != 0".into()));
    }
    let g = wave_cosine(op, t, f, op.nonneg_shift())?;
    let radius = t / std::f64::consts::SQRT_2 + margin;
    let mut outside = 0.0;
    let mut total = 0.0;
    for node in 0..op.grid.n_nodes() {
        let mass: f64 = (0..k).map(|a| g[node * k + a].norm_sqr()).sum();
        let fmass: f64 = (0..k).map(|a| f[node * k + a].norm_sqr()).sum();
        total += fmass;
        if op.grid.distance_to_set(node, &support)? > radius {
            outside += mass;
        }
    }
    Ok(outside / total)
}

/// The mollifier profile `j(z) = c exp(-1/(1 - z^2))` on `|z| < 1`.
fn bump_profile(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - z * z)).exp()
    }
}

/// Discrete convolution with `j_r` on a 1D grid, normalized on the stencil
/// so constants are preserved exactly (and with them the sup-norm bound).
/// Off-grid values are treated as 0 (Dirichlet) or wrapped (periodic).
pub fn mollify(grid: &OracleGrid, f: &CVector, r: f64, rank: usize) -> Result<CVector> {
    if grid.shape.1 != 1 {
        return Err(Error::Domain("mollify runs on 1D grids".into()));
    }
    let h = grid.h[0];
    if r < 2.0 * h {
        return Err(Error::Precision(format!(
            "mollifier radius {r} below 2h = {}",
            2.0 * h
        )));
    }
    let n = grid.n_nodes();
    let reach = (r / h).ceil() as isize;
    let mut weights = Vec::with_capacity(2 * reach as usize + 1);
    for k in -reach..=reach {
        weights.push(bump_profile(k as f64 * h / r));
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let periodic = grid.boundary == Boundary::Periodic;
    let mut out = CVector::zeros(n * rank);
    for node in 0..n as isize {
        for a in 0..rank {
            let mut acc = Complex64::new(0.0, 0.0);
            for (wi, k) in (-reach..=reach).enumerate() {
                let j = node + k;
                let j = if periodic {
                    Some(j.rem_euclid(n as isize) as usize)
                } else if (0..n as isize).contains(&j) {
                    Some(j as usize)
                } else {
                    None // outside the interval: section vanishes
                };
                if let Some(j) = j {
                    acc += f[j * rank + a] * weights[wi];
                }
            }
            out[node as usize * rank + a] = acc;
        }
    }
    Ok(out)
}

/// One row of the graph-norm convergence table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GraphNormRow {
    pub r: f64,
    pub err_f: f64,
    pub err_h: f64,
    pub err_v: f64,
}

/// Tabulates `(||f_r - f||, ||H f_r - H f||, ||V f_r - V f||)` along a list
/// of mollification radii; all three columns must decrease toward 0 for the
/// smooth-core property to hold on the grid.
pub fn graph_norm_convergence(
    op: &OperatorMatrix,
    f: &CVector,
    radii: &[f64],
) -> Result<Vec<GraphNormRow>> {
    let hf = op.apply(f);
    let vf = op.apply_potential(f);
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let fr = mollify(&op.grid, f, r, op.rank)?;
        let hfr = op.apply(&fr);
        let vfr = op.apply_potential(&fr);
        rows.push(GraphNormRow {
            r,
            err_f: op.grid_norm(&(&fr - f)),
            err_h: op.grid_norm(&(&hfr - &hf)),
            err_v: op.grid_norm(&(&vfr - &vf)),
        });
    }
    Ok(rows)
}

/// CSV dump of a grid vector: node index, chart coordinates, then re/im
/// per component.
pub fn dump_vector_csv(out: &mut impl Write, op: &OperatorMatrix, f: &CVector) -> std::io::Result<()> {
    write!(out, "node")?;
    for d in 0..op.grid.model.chart_dim() {
        write!(out, ",x{d}")?;
    }
    for a in 0..op.rank {
        write!(out, ",re{a},im{a}")?;
    }
    writeln!(out)?;
    for node in 0..op.grid.n_nodes() {
        write!(out, "{node}")?;
        for c in op.grid.points[node].coords() {
            write!(out, ",{c}")?;
        }
        for a in 0..op.rank {
            let z = f[node * op.rank + a];
            write!(out, ",{},{}", z.re, z.im)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Smooth compactly supported bump of the given half-width centered at a
/// chart coordinate, sampled on the grid (rank-1).
pub fn grid_bump(grid: &OracleGrid, center: f64, half_width: f64) -> CVector {
    let n = grid.n_nodes();
    CVector::from_iterator(
        n,
        (0..n).map(|j| {
            let d = grid
                .model
                .distance(&grid.points[j], &Point::from_scalar(center))
                .unwrap_or(f64::INFINITY);
            Complex64::new(bump_profile(d / half_width), 0.0)
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feynman_kac::{estimate_semigroup, SectionField};
    use crate::paths::SamplerConfig;

    fn circle() -> ManifoldModel {
        ManifoldModel::circle(2.0 * std::f64::consts::PI)
    }

    #[test]
    fn circle_free_spectrum() {
        let model = circle();
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        let v = PotentialField::zero(1);
        let op = discretize(&model, &spec, &v, 256).unwrap();
        assert!(hermitian_defect(&op.matrix) < 1e-12);
        let vals = op.eigenvalues();
        // k^2/2 for k = 0, +-1, +-2
        let expect = [0.0, 0.5, 0.5, 2.0, 2.0];
        for (got, want) in vals.iter().zip(expect) {
            assert!(
                (got - want).abs() < 1e-3,
                "eigenvalue {got} vs {want} (h^2 accuracy)"
            );
        }
        assert!(op.min_eigenvalue() > -1e-10);
    }

    #[test]
    fn spectral_flow_under_abelian_connection() {
        let model = circle();
        let beta = 0.5;
        let spec = BundleSpec::circle_abelian(model.clone(), beta).unwrap();
        let v = PotentialField::zero(1);
        let op = discretize(&model, &spec, &v, 256).unwrap();
        assert!(hermitian_defect(&op.matrix) < 1e-12);
        let vals = op.eigenvalues();
        // (k + beta)^2 / 2: 0.125, 0.125, 1.125, 1.125
        let expect = [0.125, 0.125, 1.125, 1.125];
        for (got, want) in vals.iter().zip(expect) {
            assert!((got - want).abs() < 2e-3, "eigenvalue {got} vs {want}");
        }
    }

    #[test]
    fn interval_dirichlet_spectrum() {
        let l = std::f64::consts::PI;
        let model = ManifoldModel::interval_absorbing(l);
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        let v = PotentialField::zero(1);
        let op = discretize(&model, &spec, &v, 128).unwrap();
        let vals = op.eigenvalues();
        // k^2 pi^2/(2 L^2) = k^2/2 for L = pi
        for (i, want) in [0.5, 2.0, 4.5].iter().enumerate() {
            assert!(
                (vals[i] - want).abs() < 6e-3,
                "dirichlet eigenvalue {} vs {want}",
                vals[i]
            );
        }
    }

    #[test]
    fn torus2_spectrum_and_hermiticity() {
        let model = ManifoldModel::flat_torus(&[2.0 * std::f64::consts::PI, std::f64::consts::PI]);
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        let v = PotentialField::zero(1);
        let op = discretize(&model, &spec, &v, 24).unwrap();
        assert!(hermitian_defect(&op.matrix) < 1e-12);
        let vals = op.eigenvalues();
        // modes k1^2/2 + 2 k2^2: 0, 0.5, 0.5, 2, 2, 2, ...
        assert!(vals[0].abs() < 1e-10);
        assert!((vals[1] - 0.5).abs() < 5e-3 && (vals[2] - 0.5).abs() < 5e-3);
    }

    #[test]
    fn semigroup_identity_and_eigenvector_decay() {
        let model = circle();
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        let v = PotentialField::scalar(1, |x: &Point| 1.0 + x.coords()[0].cos());
        let op = discretize(&model, &spec, &v, 64).unwrap();
        let f = CVector::from_fn(op.dim(), |i, _| {
            Complex64::new((i as f64 * 0.1).sin(), 0.3)
        });
        let g = semigroup_apply(&op, 0.0, &f).unwrap();
        assert!((&g - &f).norm() < 1e-10);

        let (vals, vecs) = op.eig();
        let u1 = CVector::from_column_slice(vecs.column(1).as_slice());
        let gu = semigroup_apply(&op, 0.7, &u1).unwrap();
        let expect = u1.map(|z| z * Complex64::new((-0.7 * vals[1]).exp(), 0.0));
        assert!((&gu - &expect).norm() < 1e-10);
    }

    #[test]
    fn constant_shift_commutes() {
        let model = circle();
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        let v0 = PotentialField::scalar(1, |x: &Point| x.coords()[0].sin());
        let c = 0.8;
        let v1 = PotentialField::scalar(1, move |x: &Point| x.coords()[0].sin() + c);
        let op0 = discretize(&model, &spec, &v0, 48).unwrap();
        let op1 = discretize(&model, &spec, &v1, 48).unwrap();
        let f = CVector::from_fn(op0.dim(), |i, _| Complex64::new(1.0 / (1.0 + i as f64), 0.0));
        let t = 0.9;
        let a = semigroup_apply(&op1, t, &f).unwrap();
        let b = semigroup_apply(&op0, t, &f).unwrap() * Complex64::new((-c * t).exp(), 0.0);
        assert!((&a - &b).norm() < 1e-11);
    }

    #[test]
    fn wave_cosine_basics() {
        let model = circle();
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        let v = PotentialField::constant_scalar(1, -0.5);
        let op = discretize(&model, &spec, &v, 64).unwrap();
        let f = grid_bump(&op.grid, 1.0, 0.5);
        // t = 0 returns f for the properly shifted operator
        let g = wave_cosine(&op, 0.0, &f, op.nonneg_shift()).unwrap();
        assert!((&g - &f).norm() < 1e-10);
        // unshifted negative operator is a contract error
        assert!(matches!(
            wave_cosine(&op, 0.1, &f, 0.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn dalembert_cone_on_circle() {
        let model = circle();
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        let v = PotentialField::zero(1);
        let op = discretize(&model, &spec, &v, 512).unwrap();
        let h = op.grid.h[0];
        let f = grid_bump(&op.grid, std::f64::consts::PI, 0.3);
        let leaked = finite_speed_check(&op, &f, 1.0, 5.0 * h).unwrap();
        assert!(leaked < 1e-3, "leaked mass {leaked}");

        // zeroth-order terms do not move the light cone
        let vb = PotentialField::scalar(1, |x: &Point| x.coords()[0].cos());
        let opb = discretize(&model, &spec, &vb, 512).unwrap();
        let leaked = finite_speed_check(&opb, &f, 1.0, 10.0 * h).unwrap();
        assert!(leaked < 1e-2, "leaked mass with potential {leaked}");

        // t -> 0 leaks only rounding noise
        let z = finite_speed_check(&op, &f, 1e-12, 5.0 * h).unwrap();
        assert!(z < 1e-20);

        // too-small margin is a precision error
        assert!(matches!(
            finite_speed_check(&op, &f, 1.0, 2.0 * h),
            Err(Error::Precision(_))
        ));
    }

    #[test]
    fn davies_gaffney_on_circle() {
        let model = circle();
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        let v = PotentialField::zero(1);
        let op = discretize(&model, &spec, &v, 256).unwrap();
        let n = op.grid.n_nodes();
        let h = op.grid.h[0];
        let width = (0.4 / h) as usize;
        let sep = (1.0 / h) as usize;
        let u1: Vec<usize> = (0..width).collect();
        let u2: Vec<usize> = (width + sep..width + sep + width).collect();
        let report = davies_gaffney_check(&op, &u1, &u2, &[0.02, 0.05, 0.1, 0.2, 0.5]).unwrap();
        assert!((report.distance - 1.0).abs() < 2.0 * h);
        assert!(
            report.worst_ratio <= 1.05,
            "worst ratio {}",
            report.worst_ratio
        );
        // tightening the separation increases the measured ratios
        let closer: Vec<usize> = (width + sep / 3..width + sep / 3 + width).collect();
        let rep2 = davies_gaffney_check(&op, &u1, &closer, &[0.05]).unwrap();
        assert!(rep2.worst_ratio > report.per_time[1].1);

        // adjacent sets: bound collapses to e^{Dt}, ratio stays near 1
        let adj: Vec<usize> = (width + 1..width + 3).collect();
        let rep3 = davies_gaffney_check(&op, &u1, &adj, &[0.05, 0.2]).unwrap();
        assert!(rep3.worst_ratio <= 1.0 + 10.0 * h, "{}", rep3.worst_ratio);

        // overlap is a domain error
        assert!(matches!(
            davies_gaffney_check(&op, &u1, &u1, &[0.1]),
            Err(Error::Domain(_))
        ));
        let _ = n;
    }

    #[test]
    fn mollifier_properties() {
        let l = std::f64::consts::PI;
        let model = ManifoldModel::interval_absorbing(l);
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        let v = PotentialField::zero(1);
        let op = discretize(&model, &spec, &v, 256).unwrap();
        let h = op.grid.h[0];
        let n = op.grid.n_nodes();

        // constants are reproduced exactly away from the boundary
        let ones = CVector::from_element(n, Complex64::new(1.0, 0.0));
        let r = 8.0 * h;
        let smooth = mollify(&op.grid, &ones, r, 1).unwrap();
        let interior = (n / 2 - 5)..(n / 2 + 5);
        for i in interior {
            assert_eq!(smooth[i], Complex64::new(1.0, 0.0));
        }
        // sup bound holds exactly
        let f = CVector::from_fn(n, |i, _| Complex64::new((i as f64 * 0.2).sin(), 0.0));
        let sup = f.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let fr = mollify(&op.grid, &f, r, 1).unwrap();
        let sup_r = fr.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(sup_r <= sup + 1e-15);
        // L2 distance decreases toward 0 as r shrinks
        let mut prev = f64::INFINITY;
        for rr in [8.0 * h, 4.0 * h, 2.0 * h] {
            let fr = mollify(&op.grid, &f, rr, 1).unwrap();
            let e = op.grid_norm(&(&fr - &f));
            assert!(e < prev, "not decreasing at r = {rr}");
            prev = e;
        }
        // r below 2h is a precision error
        assert!(matches!(
            mollify(&op.grid, &f, 1.5 * h, 1),
            Err(Error::Precision(_))
        ));
    }

    #[test]
    fn graph_norm_table() {
        let l = std::f64::consts::PI;
        let model = ManifoldModel::interval_absorbing(l);
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        let v = PotentialField::harmonic(1);
        let op = discretize(&model, &spec, &v, 2048).unwrap();
        let h = op.grid.h[0];
        let n = op.grid.n_nodes();

        // smooth bump: all three columns small already at r = 4h
        let f = grid_bump(&op.grid, l / 2.0, 1.5);
        let radii = [16.0 * h, 8.0 * h, 4.0 * h, 2.0 * h];
        let rows = graph_norm_convergence(&op, &f, &radii).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].err_f < w[0].err_f);
            assert!(w[1].err_h < w[0].err_h);
            assert!(w[1].err_v < w[0].err_v);
        }
        assert!(rows[2].err_f < 1e-3 && rows[2].err_h < 1e-3 && rows[2].err_v < 1e-3);

        // indicator: err_f decreases like sqrt(r)
        let ind = CVector::from_fn(n, |i, _| {
            let x = op.grid.points[i].coords()[0];
            if (1.0..2.0).contains(&x) {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let rows = graph_norm_convergence(&op, &ind, &radii).unwrap();
        for w in rows.windows(2) {
            let slope = (w[0].err_f / w[1].err_f).log2();
            assert!(
                (0.3..0.8).contains(&slope),
                "sqrt(r) law violated: slope {slope}"
            );
        }

        // V = 0: third column identically zero
        let op0 = discretize(&model, &spec, &PotentialField::zero(1), 2048).unwrap();
        let rows = graph_norm_convergence(&op0, &f, &radii).unwrap();
        assert!(rows.iter().all(|r| r.err_v == 0.0));
    }

    #[test]
    fn clamped_potentials_converge() {
        // e^{-t H_{V_n}} -> e^{-t H_V} as the cap grows (strong convergence
        // shadow on the grid)
        let l = std::f64::consts::PI;
        let model = ManifoldModel::interval_absorbing(l);
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        // steep but bounded potential with both signs
        let v = PotentialField::scalar(1, |x: &Point| {
            let c = x.coords()[0];
            8.0 / (0.1 + c * c) - 4.0
        });
        let op_full = discretize(&model, &spec, &v, 128).unwrap();
        let f = grid_bump(&op_full.grid, 2.0, 0.5);
        let reference = semigroup_apply(&op_full, 0.3, &f).unwrap();
        let errs: Vec<f64> = [2.0, 8.0, 32.0, 128.0]
            .iter()
            .map(|&cap| {
                let op_n =
                    discretize_clamped(&model, &spec, &v, 128, PotentialClamp::CapAbove(cap))
                        .unwrap();
                let gn = semigroup_apply(&op_n, 0.3, &f).unwrap();
                (&gn - &reference).norm()
            })
            .collect();
        assert!(errs[3] < errs[0] * 1e-3, "no convergence: {errs:?}");
        assert!(errs[3] < 1e-8, "not converged: {errs:?}");

        // cap from below likewise
        let opb = discretize_clamped(&model, &spec, &v, 128, PotentialClamp::CapBelow(1e6))
            .unwrap();
        let gb = semigroup_apply(&opb, 0.3, &f).unwrap();
        assert!((&gb - &reference).norm() < 1e-9);
    }

    #[test]
    fn lowest_eigenvalue_second_order_convergence() {
        let model = circle();
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        let v = PotentialField::scalar(1, |x: &Point| 1.0 + x.coords()[0].cos());
        let lam = |n: usize| {
            discretize(&model, &spec, &v, n).unwrap().eigenvalues()[0]
        };
        let (l1, l2, l3) = (lam(32), lam(64), lam(128));
        let ratio = (l1 - l2) / (l2 - l3);
        assert!(
            (3.0..5.0).contains(&ratio),
            "convergence ratio {ratio} not second order"
        );
    }

    #[test]
    fn semibounded_with_bounded_negative_part() {
        let model = circle();
        let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
        let c = 2.5;
        let v = PotentialField::scalar(1, move |x: &Point| -c + x.coords()[0].sin());
        let op = discretize(&model, &spec, &v, 64).unwrap();
        let h = op.grid.h[0];
        assert!(op.min_eigenvalue() >= -c - 1.0 - 10.0 * h);
    }

    #[test]
    fn oracle_agrees_with_monte_carlo_scalar() {
        // small smoke version of the full acceptance comparison
        let model = circle();
        let beta = 0.5;
        let spec = BundleSpec::circle_abelian(model.clone(), beta).unwrap();
        let v = PotentialField::scalar(1, |x: &Point| 1.0 + x.coords()[0].cos());
        let op = discretize(&model, &spec, &v, 256).unwrap();
        let f = SectionField::scalar(|x: &Point| 1.0 + 0.5 * x.coords()[0].cos());
        let fvec = CVector::from_iterator(
            op.grid.n_nodes(),
            op.grid
                .points
                .iter()
                .map(|p| f.scalar_at(p).unwrap()),
        );
        let t = 0.25;
        let oracle = semigroup_apply(&op, t, &fvec).unwrap();
        let cfg = SamplerConfig::new(1e-3, 515);
        let node = 64; // theta = pi/2
        let est = estimate_semigroup(
            &model,
            &spec,
            &v,
            &f,
            t,
            &op.grid.points[node],
            30_000,
            &cfg,
        )
        .unwrap();
        let diff = (est.value[0] - oracle[node]).norm();
        assert!(
            diff <= 3.0 * est.stderr[0] + 0.02,
            "MC {} vs oracle {} (se {})",
            est.value[0],
            oracle[node],
            est.stderr[0]
        );
    }
}
