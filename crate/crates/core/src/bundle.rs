//! Hermitian vector bundles in a global trivialization: connection 1-forms,
//! single-step stochastic parallel transport, matrix potentials `V = V1 - V2`
//! with nonnegative splits, Clifford data and the Pauli potential
//! `V(c, nabla) = scal/4 + (1/2) sum_{i<j} tr[nabla^2](e_i, e_j) c(e_i^*) c(e_j^*)`.

use crate::error::{Error, Result};
use crate::geometry::{random_point, ManifoldModel, ModelKind, Point};
use crate::linalg::{
    anti_hermitian_defect, eigh, expm_anti_hermitian, hermitian_defect, reunitarize,
    unitarity_defect, CMatrix, C_I,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

pub type ConnectionFn = Arc<dyn Fn(&Point, &[f64]) -> CMatrix + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&Point) -> CMatrix + Send + Sync>;

/// Connection data in increasing generality; the estimator fast paths
/// dispatch on the variant.
#[derive(Clone)]
pub(crate) enum ConnectionKind {
    Flat,
    /// `A = i beta d theta` on the circle
    CircleAbelian { beta: f64 },
    /// `A = i * form(x, v)`, rank 1
    Abelian(Arc<dyn Fn(&Point, &[f64]) -> f64 + Send + Sync>),
    General(ConnectionFn),
}

/// Rank-k Hermitian bundle over a base model, described by an
/// anti-Hermitian-matrix-valued connection 1-form in the global
/// trivialization.
#[derive(Clone)]
pub struct BundleSpec {
    base: ManifoldModel,
    rank: usize,
    pub(crate) connection: ConnectionKind,
}

impl BundleSpec {
    /// Product bundle with the flat connection.
    pub fn trivial(base: ManifoldModel, rank: usize) -> Result<Self> {
        check_rank(&base, rank)?;
        Ok(BundleSpec {
            base,
            rank,
            connection: ConnectionKind::Flat,
        })
    }

    /// Rank-1 bundle over the circle with `A = i beta d theta`.
    pub fn circle_abelian(base: ManifoldModel, beta: f64) -> Result<Self> {
        if !matches!(base.kind(), ModelKind::Circle { .. }) {
            return Err(Error::Contract(
                "circle_abelian connection needs a circle base".into(),
            ));
        }
        Ok(BundleSpec {
            base,
            rank: 1,
            connection: ConnectionKind::CircleAbelian { beta },
        })
    }

    /// Rank-1 bundle with `A = i * form`, `form` a real-valued 1-form given
    /// as `(x, direction) -> R`, linear in the direction.
    pub fn abelian(
        base: ManifoldModel,
        form: impl Fn(&Point, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_rank(&base, 1)?;
        if matches!(base.kind(), ModelKind::Sphere2 { .. }) {
            return Err(Error::Contract(
                "nontrivial connections need a globally trivializable base".into(),
            ));
        }
        Ok(BundleSpec {
            base,
            rank: 1,
            connection: ConnectionKind::Abelian(Arc::new(form)),
        })
    }

    /// General connection form. Validated (anti-Hermiticity and linearity in
    /// the direction) on a deterministic sample of points and directions.
    pub fn with_connection(base: ManifoldModel, rank: usize, form: ConnectionFn) -> Result<Self> {
        check_rank(&base, rank)?;
        if matches!(base.kind(), ModelKind::Sphere2 { .. }) {
            return Err(Error::Contract(
                "nontrivial connections need a globally trivializable base".into(),
            ));
        }
        let spec = BundleSpec {
            base,
            rank,
            connection: ConnectionKind::General(form),
        };
        spec.validate_connection()?;
        Ok(spec)
    }

    fn validate_connection(&self) -> Result<()> {
        let form = match &self.connection {
            ConnectionKind::General(f) => f,
            _ => return Ok(()),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        use rand::Rng;
        for _ in 0..8 {
            let x = random_point(&self.base, &mut rng);
            let v: Vec<f64> = (0..self.base.dim())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let w: Vec<f64> = (0..self.base.dim())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let av = form(&x, &v);
            if av.nrows() != self.rank || av.ncols() != self.rank {
                return Err(Error::Contract(format!(
                    "connection form returned a {}x{} matrix for rank {}",
                    av.nrows(),
                    av.ncols(),
                    self.rank
                )));
            }
            let scale = 1.0 + av.norm();
            if anti_hermitian_defect(&av) > 1e-12 * scale {
                return Err(Error::Contract(
                    "connection form is not anti-Hermitian; the connection would not be Hermitian"
                        .into(),
                ));
            }
            // linearity in the direction argument
            let aw = form(&x, &w);
            let vw: Vec<f64> = v.iter().zip(&w).map(|(a, b)| 0.5 * a + 2.0 * b).collect();
            let avw = form(&x, &vw);
            let lin_defect = (&avw - (av.map(|z| z * 0.5) + aw.map(|z| z * 2.0))).norm();
            if lin_defect > 1e-10 * scale {
                return Err(Error::Contract(
                    "connection form is not linear in the direction argument".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn base(&self) -> &ManifoldModel {
        &self.base
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.connection, ConnectionKind::Flat)
    }

    /// The connection 1-form `A(x)(v)` as a rank x rank anti-Hermitian matrix.
    pub fn connection_form(&self, x: &Point, v: &[f64]) -> CMatrix {
        match &self.connection {
            ConnectionKind::Flat => CMatrix::zeros(self.rank, self.rank),
            ConnectionKind::CircleAbelian { beta } => {
                CMatrix::from_element(1, 1, C_I * (beta * v[0]))
            }
            ConnectionKind::Abelian(form) => CMatrix::from_element(1, 1, C_I * form(x, v)),
            ConnectionKind::General(form) => form(x, v),
        }
    }

    /// Whether the rank-1 scalar estimator route applies.
    pub(crate) fn has_scalar_route(&self) -> bool {
        self.rank == 1 && !matches!(self.connection, ConnectionKind::General(_))
    }

    /// Single-step stochastic parallel transport across a short segment:
    /// applies `expm(-A(x_mid)(dx))` to `frame` at the chart midpoint and
    /// re-unitarizes the product by its polar factor.
    pub fn transport_segment(&self, x0: &Point, x1: &Point, frame: &CMatrix) -> Result<CMatrix> {
        if frame.nrows() != self.rank || frame.ncols() != self.rank {
            return Err(Error::Contract(format!(
                "frame is {}x{}, bundle rank is {}",
                frame.nrows(),
                frame.ncols(),
                self.rank
            )));
        }
        if unitarity_defect(frame) > 1e-8 {
            return Err(Error::Contract(format!(
                "input frame deviates from unitarity by {:.3e}",
                unitarity_defect(frame)
            )));
        }
        if self.is_flat() {
            return Ok(frame.clone());
        }
        let dx = self.base.chart_displacement(x0, x1);
        let mid = self.base.chart_midpoint(x0, x1);
        let step = self.connection_form(&mid, &dx[..self.base.dim()]);
        let u = expm_anti_hermitian(&step.map(|z| -z));
        Ok(reunitarize(&(u * frame)))
    }
}

fn check_rank(base: &ManifoldModel, rank: usize) -> Result<()> {
    if rank == 0 || rank > 4 {
        return Err(Error::Contract(format!("bundle rank {rank} not in 1..=4")));
    }
    if matches!(base.kind(), ModelKind::Sphere2 { .. }) && rank != 1 {
        return Err(Error::Contract(
            "the sphere base supports scalar (rank 1) potentials only".into(),
        ));
    }
    Ok(())
}

/// Splits a Hermitian matrix into its canonical nonnegative parts
/// `(V^+, V^-)` through the fiberwise spectral calculus.
pub fn split_hermitian(v: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    if hermitian_defect(v) > 1e-10 * (1.0 + v.norm()) {
        return Err(Error::Contract(format!(
            "matrix is not Hermitian (defect {:.3e})",
            hermitian_defect(v)
        )));
    }
    let n = v.nrows();
    let (vals, vecs) = eigh(v);
    let mut plus = CMatrix::zeros(n, n);
    let mut minus = CMatrix::zeros(n, n);
    for k in 0..n {
        let col = vecs.column(k);
        let (wp, wm) = (vals[k].max(0.0), (-vals[k]).max(0.0));
        for i in 0..n {
            for j in 0..n {
                let proj = col[i] * col[j].conj();
                plus[(i, j)] += Complex64::new(wp, 0.0) * proj;
                minus[(i, j)] += Complex64::new(wm, 0.0) * proj;
            }
        }
    }
    Ok((plus, minus))
}

enum PotentialKind {
    /// `V = f(x) I_k`; `f` returns `(value, clamped)`.
    Scalar(Arc<dyn Fn(&Point) -> (f64, bool) + Send + Sync>),
    /// Full Hermitian matrix with an explicit nonnegative split.
    Matrix {
        eval: MatrixFn,
        v1: MatrixFn,
        v2: MatrixFn,
    },
}

/// Hermitian-matrix-valued potential with a nonnegative split `V = V1 - V2`.
/// Declared singular points are evaluated through a distance cutoff
/// `d -> max(d, cutoff)`; evaluations inside the cutoff are flagged as
/// clamped so estimators can report the clamped fraction.
pub struct PotentialField {
    rank: usize,
    kind: PotentialKind,
    singular_points: Vec<Point>,
    cutoff_radius: f64,
}

impl PotentialField {
    /// Zero potential.
    pub fn zero(rank: usize) -> Self {
        PotentialField {
            rank,
            kind: PotentialKind::Scalar(Arc::new(|_| (0.0, false))),
            singular_points: Vec::new(),
            cutoff_radius: 0.0,
        }
    }

    /// Constant Hermitian matrix.
    pub fn constant(matrix: CMatrix) -> Result<Self> {
        let rank = matrix.nrows();
        let (v1, v2) = split_hermitian(&matrix)?;
        Ok(PotentialField {
            rank,
            kind: PotentialKind::Matrix {
                eval: Arc::new(move |_| matrix.clone()),
                v1: Arc::new(move |_| v1.clone()),
                v2: Arc::new(move |_| v2.clone()),
            },
            singular_points: Vec::new(),
            cutoff_radius: 0.0,
        })
    }

    /// Constant multiple of the identity.
    pub fn constant_scalar(rank: usize, c: f64) -> Self {
        PotentialField {
            rank,
            kind: PotentialKind::Scalar(Arc::new(move |_| (c, false))),
            singular_points: Vec::new(),
            cutoff_radius: 0.0,
        }
    }

    /// Scalar potential `V = f(x) I_k` from an everywhere-finite function.
    pub fn scalar(rank: usize, f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        PotentialField {
            rank,
            kind: PotentialKind::Scalar(Arc::new(move |x| (f(x), false))),
            singular_points: Vec::new(),
            cutoff_radius: 0.0,
        }
    }

    /// Harmonic potential `|x|^2 / 2` (chart origin on flat models).
    pub fn harmonic(rank: usize) -> Self {
        PotentialField::scalar(rank, |x| {
            0.5 * x.coords().iter().map(|c| c * c).sum::<f64>()
        })
    }

    /// Attractive Coulomb potential `-kappa G(x, center) I` on a
    /// nonparabolic base, clamped at `cutoff` around the singularity.
    pub fn coulomb(
        model: &ManifoldModel,
        center: Point,
        kappa: f64,
        rank: usize,
        cutoff: f64,
    ) -> Result<Self> {
        if !(cutoff > 0.0) {
            return Err(Error::Contract("coulomb cutoff must be positive".into()));
        }
        // reject parabolic bases up front
        let probe = model.exp_map(&center, &vec![0.1; model.dim()])?;
        model.green_function(&center, &probe)?;
        let m = model.clone();
        let f = move |x: &Point| -> (f64, bool) {
            let d = m.distance(&center, x).expect("invalid point in coulomb eval");
            let clamped = d < cutoff;
            let g = green_radial(&m, d.max(cutoff));
            (-kappa * g, clamped)
        };
        Ok(PotentialField {
            rank,
            kind: PotentialKind::Scalar(Arc::new(f)),
            singular_points: vec![center],
            cutoff_radius: cutoff,
        })
    }

    /// Full matrix potential from a Hermitian-matrix function; the split is
    /// the canonical `V = V^+ - V^-`. Hermiticity is checked at the probe
    /// points.
    pub fn from_matrix_fn(
        rank: usize,
        f: impl Fn(&Point) -> CMatrix + Send + Sync + 'static,
        probes: &[Point],
    ) -> Result<Self> {
        let eval: MatrixFn = Arc::new(f);
        for p in probes {
            let m = eval(p);
            if m.nrows() != rank || m.ncols() != rank {
                return Err(Error::Contract(format!(
                    "potential returned {}x{} for rank {rank}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if hermitian_defect(&m) > 1e-10 * (1.0 + m.norm()) {
                return Err(Error::Contract(format!(
                    "potential is not Hermitian at probe (defect {:.3e})",
                    hermitian_defect(&m)
                )));
            }
        }
        let e1 = eval.clone();
        let e2 = eval.clone();
        Ok(PotentialField {
            rank,
            kind: PotentialKind::Matrix {
                eval,
                v1: Arc::new(move |x| split_hermitian(&e1(x)).expect("hermitian eval").0),
                v2: Arc::new(move |x| split_hermitian(&e2(x)).expect("hermitian eval").1),
            },
            singular_points: Vec::new(),
            cutoff_radius: 0.0,
        })
    }

    /// Matrix potential with a caller-supplied (not necessarily canonical)
    /// nonnegative split.
    pub fn with_split(rank: usize, eval: MatrixFn, v1: MatrixFn, v2: MatrixFn) -> Self {
        PotentialField {
            rank,
            kind: PotentialKind::Matrix { eval, v1, v2 },
            singular_points: Vec::new(),
            cutoff_radius: 0.0,
        }
    }

    /// Values tabulated on a uniform chart grid over `[lo, hi]`, linear
    /// interpolation in between, constant extrapolation outside.
    pub fn tabulated_1d(rank: usize, lo: f64, hi: f64, values: Vec<CMatrix>) -> Result<Self> {
        if values.len() < 2 || !(hi > lo) {
            return Err(Error::Contract(
                "tabulated potential needs >= 2 nodes and hi > lo".into(),
            ));
        }
        for v in &values {
            if v.nrows() != rank || hermitian_defect(v) > 1e-10 * (1.0 + v.norm()) {
                return Err(Error::Contract(
                    "tabulated values must be Hermitian rank x rank".into(),
                ));
            }
        }
        let n = values.len();
        let h = (hi - lo) / (n - 1) as f64;
        let vals = Arc::new(values);
        let vv = vals.clone();
        let eval: MatrixFn = Arc::new(move |x: &Point| {
            let s = ((x.coords()[0] - lo) / h).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            let w = s - i as f64;
            vv[i].map(|z| z * (1.0 - w)) + vv[i + 1].map(|z| z * w)
        });
        let e1 = eval.clone();
        let e2 = eval.clone();
        Ok(PotentialField {
            rank,
            kind: PotentialKind::Matrix {
                eval,
                v1: Arc::new(move |x| split_hermitian(&e1(x)).expect("hermitian eval").0),
                v2: Arc::new(move |x| split_hermitian(&e2(x)).expect("hermitian eval").1),
            },
            singular_points: Vec::new(),
            cutoff_radius: 0.0,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn singular_points(&self) -> &[Point] {
        &self.singular_points
    }

    pub fn cutoff_radius(&self) -> f64 {
        self.cutoff_radius
    }

    /// `(V(x), clamped)`.
    pub fn eval_at(&self, x: &Point) -> (CMatrix, bool) {
        match &self.kind {
            PotentialKind::Scalar(f) => {
                let (v, clamped) = f(x);
                let mut m = CMatrix::zeros(self.rank, self.rank);
                for i in 0..self.rank {
                    m[(i, i)] = Complex64::new(v, 0.0);
                }
                (m, clamped)
            }
            PotentialKind::Matrix { eval, .. } => (eval(x), false),
        }
    }

    /// Scalar value when the potential is a multiple of the identity.
    pub fn scalar_at(&self, x: &Point) -> Option<(f64, bool)> {
        match &self.kind {
            PotentialKind::Scalar(f) => Some(f(x)),
            PotentialKind::Matrix { .. } => None,
        }
    }

    pub fn v1_at(&self, x: &Point) -> CMatrix {
        match &self.kind {
            PotentialKind::Scalar(f) => {
                let (v, _) = f(x);
                CMatrix::identity(self.rank, self.rank).map(|z| z * v.max(0.0))
            }
            PotentialKind::Matrix { v1, .. } => v1(x),
        }
    }

    pub fn v2_at(&self, x: &Point) -> CMatrix {
        match &self.kind {
            PotentialKind::Scalar(f) => {
                let (v, _) = f(x);
                CMatrix::identity(self.rank, self.rank).map(|z| z * (-v).max(0.0))
            }
            PotentialKind::Matrix { v2, .. } => v2(x),
        }
    }

    /// `(min spec(V1(x)), max spec(V2(x)))`; guarantees
    /// `V(x) >= (v1 - v2) I` in the semidefinite order.
    pub fn scalar_bounds(&self, x: &Point) -> Result<(f64, f64)> {
        for s in &self.singular_points {
            let d2: f64 = s
                .coords()
                .iter()
                .zip(x.coords())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2.sqrt() <= f64::EPSILON {
                return Err(Error::Domain(
                    "scalar bounds are undefined at a singular point".into(),
                ));
            }
        }
        match &self.kind {
            PotentialKind::Scalar(f) => {
                let (v, _) = f(x);
                Ok((v.max(0.0), (-v).max(0.0)))
            }
            PotentialKind::Matrix { v1, v2, .. } => {
                let (lo1, _) = crate::linalg::eig_range(&v1(x));
                let (_, hi2) = crate::linalg::eig_range(&v2(x));
                Ok((lo1, hi2))
            }
        }
    }

    /// Fast path for `max spec(V2(x))` used in pathwise certificates.
    pub fn v2_bound_at(&self, x: &Point) -> f64 {
        match &self.kind {
            PotentialKind::Scalar(f) => (-f(x).0).max(0.0),
            PotentialKind::Matrix { v2, .. } => crate::linalg::eig_range(&v2(x)).1,
        }
    }
}

/// Green function as a function of distance on the nonparabolic catalog
/// models (`1/(2 pi d)` on `R^3`, `e^{-d}/(2 pi sinh d)` on `H^3`).
pub fn green_radial(model: &ManifoldModel, d: f64) -> f64 {
    match model.kind() {
        ModelKind::Euclidean { dim: 3 } => 1.0 / (2.0 * std::f64::consts::PI * d),
        ModelKind::Hyperbolic3 => (-d).exp() / (2.0 * std::f64::consts::PI * d.sinh()),
        _ => f64::NAN,
    }
}

/// Anti-self-adjoint rank-2 Clifford generators over an orthonormal coframe
/// of a 3-dimensional base: `c(a)^* = -c(a)`, `c(a)^* c(a) = |a|^2`.
#[derive(Clone)]
pub struct CliffordData {
    gens: [CMatrix; 3],
}

impl CliffordData {
    /// The convention used by the catalog: `c(e_j^*) = i sigma_j`.
    pub fn standard() -> Self {
        let mut g1 = CMatrix::zeros(2, 2);
        g1[(0, 1)] = C_I;
        g1[(1, 0)] = C_I;
        let mut g2 = CMatrix::zeros(2, 2);
        g2[(0, 1)] = Complex64::new(1.0, 0.0); // i * (-i)
        g2[(1, 0)] = Complex64::new(-1.0, 0.0);
        let mut g3 = CMatrix::zeros(2, 2);
        g3[(0, 0)] = C_I;
        g3[(1, 1)] = -C_I;
        CliffordData { gens: [g1, g2, g3] }
    }

    /// User generators; validates the Clifford relations on random coframes.
    pub fn new(gens: [CMatrix; 3]) -> Result<Self> {
        let cl = CliffordData { gens };
        cl.validate()?;
        Ok(cl)
    }

    pub fn validate(&self) -> Result<()> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(0xc11f);
        for g in &self.gens {
            if g.nrows() != 2 || g.ncols() != 2 {
                return Err(Error::Contract("clifford generators must be 2x2".into()));
            }
            if anti_hermitian_defect(g) > 1e-12 * (1.0 + g.norm()) {
                return Err(Error::Contract(
                    "clifford generators must be anti-self-adjoint".into(),
                ));
            }
        }
        for _ in 0..16 {
            let mut a: [f64; 3] = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            if n < 1e-3 {
                continue;
            }
            for c in a.iter_mut() {
                *c /= n;
            }
            let ca = self.apply(&a);
            let gram = ca.adjoint() * &ca;
            let defect = (&gram - CMatrix::identity(2, 2)).norm();
            if defect > 1e-10 {
                return Err(Error::Contract(format!(
                    "clifford relation c(a)^* c(a) = |a|^2 violated (defect {defect:.3e})"
                )));
            }
        }
        Ok(())
    }

    /// `c(alpha) = sum_j alpha_j c(e_j^*)`.
    pub fn apply(&self, alpha: &[f64; 3]) -> CMatrix {
        let mut out = CMatrix::zeros(2, 2);
        for (j, g) in self.gens.iter().enumerate() {
            out += g.map(|z| z * alpha[j]);
        }
        out
    }

    pub fn generator(&self, j: usize) -> &CMatrix {
        &self.gens[j]
    }
}

/// Pauli potential of a Pauli-Dirac structure:
/// `V(x) = scal(x)/4 * I + (1/2) sum_{i<j} tr[nabla^2](e_i,e_j)(x) c_i c_j`,
/// with the curvature handed over as the real antisymmetric matrix
/// `F_ij = tr[nabla^2](e_i, e_j) / (2i)` per unit rank-2 trace (only the
/// upper triangle is read).
pub fn pauli_potential(
    cl: &CliffordData,
    curvature: impl Fn(&Point) -> [[f64; 3]; 3] + Send + Sync + 'static,
    scal: impl Fn(&Point) -> f64 + Send + Sync + 'static,
) -> Result<PotentialField> {
    cl.validate()?;
    let cl = cl.clone();
    let eval = move |x: &Point| -> CMatrix {
        let f = curvature(x);
        let mut v = CMatrix::identity(2, 2).map(|z| z * (0.25 * scal(x)));
        for i in 0..3 {
            for j in (i + 1)..3 {
                // (1/2) tr[nabla^2](e_i, e_j) = i F_ij
                let w = C_I * f[i][j];
                let prod = cl.generator(i) * cl.generator(j);
                v += prod.map(|z| z * w);
            }
        }
        v
    };
    let eval: MatrixFn = Arc::new(eval);
    let e1 = eval.clone();
    let e2 = eval.clone();
    Ok(PotentialField::with_split(
        2,
        eval,
        Arc::new(move |x| {
            split_hermitian(&e1(x))
                .expect("pauli potential is hermitian")
                .0
        }),
        Arc::new(move |x| {
            split_hermitian(&e2(x))
                .expect("pauli potential is hermitian")
                .1
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::operator_norm;
    use rand::prelude::*;

    fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
    }

    #[test]
    fn flat_transport_is_identity() {
        let base = ManifoldModel::euclidean(2);
        let spec = BundleSpec::trivial(base, 3).unwrap();
        let frame = CMatrix::identity(3, 3);
        let u = spec
            .transport_segment(&Point::new(&[0.0, 0.0]), &Point::new(&[0.1, -0.2]), &frame)
            .unwrap();
        assert_eq!(u, frame);
    }

    #[test]
    fn circle_abelian_loop_holonomy() {
        let l = 2.0 * std::f64::consts::PI;
        let base = ManifoldModel::circle(l);
        let spec = BundleSpec::circle_abelian(base, 0.5).unwrap();
        let steps = 10_000usize;
        let h = l / steps as f64;
        let mut frame = CMatrix::identity(1, 1);
        for i in 0..steps {
            let x0 = Point::from_scalar((i as f64 * h).rem_euclid(l));
            let x1 = Point::from_scalar(((i + 1) as f64 * h).rem_euclid(l));
            frame = spec.transport_segment(&x0, &x1, &frame).unwrap();
        }
        // holonomy e^{-i beta L} = e^{-i pi} = -1
        let expected = CMatrix::identity(1, 1);
        assert!(
            (&frame + &expected).norm() < 1e-6,
            "loop holonomy {:?}",
            frame[(0, 0)]
        );
        assert!((frame[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transport_unitarity_and_contract_errors() {
        let base = ManifoldModel::euclidean(1);
        let form: ConnectionFn = Arc::new(|x: &Point, v: &[f64]| {
            let c = x.coords()[0];
            let mut a = CMatrix::zeros(2, 2);
            a[(0, 1)] = Complex64::new(0.3 * c.sin(), 0.4);
            a[(1, 0)] = Complex64::new(-0.3 * c.sin(), 0.4);
            a[(0, 0)] = Complex64::new(0.0, 0.2 * c.cos());
            a[(1, 1)] = Complex64::new(0.0, -0.1);
            a.map(|z| z * v[0])
        });
        let spec = BundleSpec::with_connection(base, 2, form).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut frame = CMatrix::identity(2, 2);
        let mut x = Point::from_scalar(0.0);
        for _ in 0..500 {
            let step = rng.gen_range(-0.05..0.05);
            let y = Point::from_scalar(x.coords()[0] + step);
            frame = spec.transport_segment(&x, &y, &frame).unwrap();
            assert!(unitarity_defect(&frame) < 1e-12);
            assert!((frame.determinant().norm() - 1.0).abs() < 1e-12);
            x = y;
        }
        // non-unitary input frame is rejected
        let bad = CMatrix::identity(2, 2) * Complex64::new(1.1, 0.0);
        assert!(matches!(
            spec.transport_segment(&x, &x, &bad),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn transport_refinement_order() {
        // two half steps approach the single step at order >= 1.9
        let base = ManifoldModel::euclidean(1);
        let form: ConnectionFn = Arc::new(|x: &Point, v: &[f64]| {
            let c = x.coords()[0];
            let mut a = CMatrix::zeros(2, 2);
            a[(0, 0)] = Complex64::new(0.0, 0.9 * c.cos());
            a[(1, 1)] = Complex64::new(0.0, -0.5 * c.cos());
            a[(0, 1)] = Complex64::new(0.8 * c.sin(), 0.3);
            a[(1, 0)] = Complex64::new(-0.8 * c.sin(), 0.3);
            a.map(|z| z * v[0])
        });
        let spec = BundleSpec::with_connection(base, 2, form).unwrap();
        let frame = CMatrix::identity(2, 2);
        let x0 = 0.4;
        let errs: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&h| {
                let a = Point::from_scalar(x0);
                let m = Point::from_scalar(x0 + h / 2.0);
                let b = Point::from_scalar(x0 + h);
                let single = spec.transport_segment(&a, &b, &frame).unwrap();
                let half = spec.transport_segment(&a, &m, &frame).unwrap();
                let two = spec.transport_segment(&m, &b, &half).unwrap();
                (&single - &two).norm()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "refinement order {order} from errors {errs:?}");
        }
    }

    #[test]
    fn clifford_standard_satisfies_relations() {
        let cl = CliffordData::standard();
        cl.validate().unwrap();
        let g3 = cl.generator(2);
        assert_eq!(g3[(0, 0)], C_I);
        assert_eq!(g3[(1, 1)], -C_I);
    }

    #[test]
    fn pauli_potential_examples() {
        let cl = CliffordData::standard();
        let x = Point::new(&[0.0, 0.0, 0.0]);

        // flat, zero field
        let v = pauli_potential(&cl, |_| [[0.0; 3]; 3], |_| 0.0).unwrap();
        assert!(v.eval_at(&x).0.norm() < 1e-15);

        // constant magnetic 2-form F_12 = b: eigenvalues {+b, -b}
        let b = 0.7;
        let v = pauli_potential(
            &cl,
            move |_| {
                let mut f = [[0.0; 3]; 3];
                f[0][1] = b;
                f[1][0] = -b;
                f
            },
            |_| 0.0,
        )
        .unwrap();
        let (m, _) = v.eval_at(&x);
        assert!(hermitian_defect(&m) < 1e-12);
        let (vals, _) = eigh(&m);
        assert!((vals[0] + b).abs() < 1e-12 && (vals[1] - b).abs() < 1e-12);

        // pure scalar curvature term
        let v = pauli_potential(&cl, |_| [[0.0; 3]; 3], |_| 2.0).unwrap();
        let (m, _) = v.eval_at(&x);
        assert!((m - CMatrix::identity(2, 2).map(|z| z * 0.5)).norm() < 1e-14);
    }

    #[test]
    fn split_examples_and_properties() {
        let d = CMatrix::from_fn(2, 2, |i, j| {
            if i == j {
                Complex64::new(if i == 0 { 3.0 } else { -2.0 }, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let (p, m) = split_hermitian(&d).unwrap();
        assert!((p[(0, 0)].re - 3.0).abs() < 1e-14 && p[(1, 1)].norm() < 1e-14);
        assert!((m[(1, 1)].re - 2.0).abs() < 1e-14 && m[(0, 0)].norm() < 1e-14);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        for n in 1..=4 {
            for _ in 0..25 {
                let v = random_hermitian(&mut rng, n);
                let (p, m) = split_hermitian(&v).unwrap();
                assert!((&p - &m - &v).norm() < 1e-10);
                assert!((&p * &m).norm() < 1e-10, "V+ V- = 0");
                assert!(operator_norm(&p) <= operator_norm(&v) + 1e-10);
                assert!(operator_norm(&m) <= operator_norm(&v) + 1e-10);
                let (lo_p, _) = eigh(&p);
                assert!(lo_p[0] >= -1e-10);
                // idempotence: splitting V+ - V- again returns the same pair
                let (p2, m2) = split_hermitian(&(&p - &m)).unwrap();
                assert!((&p2 - &p).norm() < 1e-10 && (&m2 - &m).norm() < 1e-10);
            }
        }

        // positive semidefinite input has no negative part
        let a = random_hermitian(&mut rng, 3);
        let psd = &a * a.adjoint();
        let (_, neg) = split_hermitian(&psd).unwrap();
        assert!(neg.norm() < 1e-9);

        // non-Hermitian input rejected
        let mut bad = random_hermitian(&mut rng, 2);
        bad[(0, 1)] += Complex64::new(1e-3, 0.0);
        assert!(matches!(split_hermitian(&bad), Err(Error::Contract(_))));
    }

    #[test]
    fn scalar_bounds_examples() {
        let v1 = CMatrix::from_fn(2, 2, |i, j| {
            Complex64::new(if i == j { [1.0, 4.0][i] } else { 0.0 }, 0.0)
        });
        let v2 = CMatrix::from_fn(2, 2, |i, j| {
            Complex64::new(if i == j { [0.0, 2.0][i] } else { 0.0 }, 0.0)
        });
        let eval = &v1 - &v2;
        let f = PotentialField::with_split(
            2,
            Arc::new(move |_| eval.clone()),
            Arc::new(move |_| v1.clone()),
            Arc::new(move |_| v2.clone()),
        );
        let x = Point::new(&[0.0]);
        let (a, b) = f.scalar_bounds(&x).unwrap();
        assert!((a - 1.0).abs() < 1e-14 && (b - 2.0).abs() < 1e-14);

        // V(x) - (v1 - v2) I is positive semidefinite for random splits
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..40 {
            let v = random_hermitian(&mut rng, 3);
            let field = PotentialField::from_matrix_fn(3, move |_| v.clone(), &[x]).unwrap();
            let (lo1, hi2) = field.scalar_bounds(&x).unwrap();
            let shifted =
                field.eval_at(&x).0 - CMatrix::identity(3, 3).map(|z| z * (lo1 - hi2));
            let (vals, _) = eigh(&shifted);
            assert!(vals[0] >= -1e-10);
        }
    }

    #[test]
    fn coulomb_clamps_near_singularity() {
        let model = ManifoldModel::euclidean(3);
        let center = Point::new(&[0.0, 0.0, 0.0]);
        let v =
            PotentialField::coulomb(&model, center, 2.0 * std::f64::consts::PI, 1, 1e-6).unwrap();
        let (val, clamped) = v.scalar_at(&Point::new(&[1.0, 0.0, 0.0])).unwrap();
        assert!((val + 1.0).abs() < 1e-12); // kappa G = 1/r at r = 1
        assert!(!clamped);
        let (val, clamped) = v.scalar_at(&Point::new(&[1e-9, 0.0, 0.0])).unwrap();
        assert!(clamped);
        assert!((val + 1e6).abs() < 1.0);
        // parabolic base rejected
        assert!(PotentialField::coulomb(
            &ManifoldModel::euclidean(2),
            Point::new(&[0.0, 0.0]),
            1.0,
            1,
            1e-6
        )
        .is_err());
    }

    #[test]
    fn sphere_rejects_nontrivial_bundles() {
        let s = ManifoldModel::sphere2(1.0);
        assert!(BundleSpec::trivial(s.clone(), 2).is_err());
        assert!(BundleSpec::trivial(s, 1).is_ok());
    }

    #[test]
    fn non_anti_hermitian_connection_rejected() {
        let base = ManifoldModel::euclidean(1);
        let form: ConnectionFn = Arc::new(|_: &Point, v: &[f64]| {
            CMatrix::from_fn(2, 2, |i, j| {
                if i == j {
                    Complex64::new(v[0], 0.0) // real diagonal: Hermitian, not anti
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
        });
        assert!(matches!(
            BundleSpec::with_connection(base, 2, form),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn tabulated_1d_interpolates() {
        let vals = vec![
            CMatrix::from_element(1, 1, Complex64::new(0.0, 0.0)),
            CMatrix::from_element(1, 1, Complex64::new(2.0, 0.0)),
            CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
        ];
        let f = PotentialField::tabulated_1d(1, 0.0, 2.0, vals).unwrap();
        let at = |x: f64| f.eval_at(&Point::from_scalar(x)).0[(0, 0)].re;
        assert!((at(0.5) - 1.0).abs() < 1e-14);
        assert!((at(1.0) - 2.0).abs() < 1e-14);
        assert!((at(1.5) - 1.5).abs() < 1e-14);
        assert!((at(5.0) - 1.0).abs() < 1e-14); // clamped extrapolation
    }
}
