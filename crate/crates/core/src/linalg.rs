//! Small dense complex-matrix helpers shared by the bundle, holonomy and
//! oracle modules: Hermitian eigendecompositions, unitary matrix exponentials,
//! operator norms and polar re-unitarization.
//!
//! Bundle ranks are at most 4, so everything here targets tiny matrices;
//! the oracle reuses the same entry points for its (nodes * rank)-sized
//! Hermitian matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const C_I: Complex64 = Complex64::new(0.0, 1.0);

/// Max absolute entry of `m - m^*`; zero iff Hermitian.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// Max absolute entry of `m + m^*`; zero iff anti-Hermitian.
pub fn anti_hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let d = (m[(i, j)] + m[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// Frobenius-norm deviation of `u` from unitarity, `||u^* u - I||_F`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    let mut g = u.adjoint() * u;
    for i in 0..n {
        g[(i, i)] -= C_ONE;
    }
    g.norm()
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues ascending, columns
/// of the returned matrix the matching orthonormal eigenvectors.
///
/// Computed through the realification `A + iB -> [[A, -B], [B, A]]` and the
/// real symmetric solver; every eigenvalue of the doubled matrix appears
/// twice, and each complex eigenvector is recovered from the real pair.
/// (nalgebra's complex `symmetric_eigen` mispairs eigenvectors at larger
/// sizes, so the complex path is avoided entirely.)
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    eigh_impl(m, 1e-5)
}

fn eigh_impl(m: &CMatrix, merge_factor: f64) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 1 {
        return (vec![m[(0, 0)].re], CMatrix::identity(1, 1));
    }
    let mut big = nalgebra::DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            big[(i, j)] = z.re;
            big[(i, j + n)] = -z.im;
            big[(i + n, j)] = z.im;
            big[(i + n, j + n)] = z.re;
        }
    }
    let se = big.symmetric_eigen();
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let scale = sorted
        .iter()
        .map(|v| v.abs())
        .fold(1.0_f64, f64::max);

    let mut vals = Vec::with_capacity(n);
    let mut vecs = CMatrix::zeros(n, n);
    let mut col = 0usize;
    let mut i = 0usize;
    while i < 2 * n {
        // cluster of near-equal eigenvalues; merging aggressively is safe
        // because a Rayleigh-Ritz rotation resolves merged clusters, while
        // narrow gaps would leak J-plane mixing into the extracted basis
        let mut j = i + 1;
        while j < 2 * n
            && ((sorted[j] - sorted[j - 1]).abs() <= (merge_factor * scale).max(1e-12)
                || (j - i) % 2 == 1)
        {
            j += 1;
        }
        let target = (j - i) / 2;
        // candidates: complex images of the cluster's real eigenvectors
        let mut cands: Vec<CVector> = order[i..j]
            .iter()
            .map(|&idx| {
                let w = se.eigenvectors.column(idx);
                CVector::from_fn(n, |r, _| Complex64::new(w[r], w[r + n]))
            })
            .collect();
        // pivoted modified Gram-Schmidt: take the largest residual each round
        let mut basis: Vec<CVector> = Vec::with_capacity(target);
        for _ in 0..target {
            let (best, norm) = cands
                .iter()
                .enumerate()
                .map(|(k, z)| (k, z.norm()))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .expect("nonempty candidate set");
            assert!(
                norm > 1e-6,
                "hermitian eigendecomposition: complex basis extraction failed"
            );
            let picked = cands.swap_remove(best).map(|c| c / norm);
            for z in cands.iter_mut() {
                let inner: Complex64 = picked
                    .iter()
                    .zip(z.iter())
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                *z -= picked.map(|c| c * inner);
            }
            basis.push(picked);
        }
        if target == 1 || target == n {
            // a whole-space cluster means H is (numerically) a multiple of
            // the identity on it; any orthonormal basis serves
            for z in &basis {
                let hz = m * z;
                let rayleigh: Complex64 =
                    z.iter().zip(hz.iter()).map(|(a, b)| a.conj() * b).sum();
                vals.push(rayleigh.re);
                vecs.set_column(col, z);
                col += 1;
            }
        } else {
            // Rayleigh-Ritz within the cluster subspace
            let mut zmat = CMatrix::zeros(n, target);
            for (k, z) in basis.iter().enumerate() {
                zmat.set_column(k, z);
            }
            let hz = m * &zmat;
            let small = zmat.adjoint() * hz;
            // narrow merging in the recursion: wide enough to absorb the
            // solver's backward error, far below the parent cluster width
            let (svals, svecs) = eigh_impl(&small, 1e-9);
            let rotated = zmat * svecs;
            for k in 0..target {
                vals.push(svals[k]);
                vecs.set_column(col, &rotated.column(k));
                col += 1;
            }
        }
        i = j;
    }
    debug_assert_eq!(col, n);
    // strict orthonormalization in eigenvalue order; residual rotations act
    // within near-degenerate directions only, so the reconstruction error
    // stays at the backward-error level
    for c in 0..n {
        for k in 0..c {
            let inner: Complex64 = vecs
                .column(k)
                .iter()
                .zip(vecs.column(c).iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            let correction = vecs.column(k).into_owned().map(|z| z * inner);
            let mut col_c = vecs.column_mut(c);
            col_c -= correction;
        }
        let norm = vecs.column(c).norm();
        let mut col_c = vecs.column_mut(c);
        col_c /= Complex64::new(norm, 0.0);
    }
    (vals, vecs)
}

/// Applies a scalar function to a Hermitian matrix through its spectrum.
pub fn hermitian_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = eigh(m);
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for k in 0..n {
        let col = vecs.column(k);
        let w = Complex64::new(f(vals[k]), 0.0);
        // out += f(lambda_k) v_k v_k^*
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += w * col[i] * col[j].conj();
            }
        }
    }
    out
}

/// `exp(s)` for anti-Hermitian `s`, computed as `exp(-i h)` with `h = i s`
/// Hermitian; the result is unitary to rounding.
pub fn expm_anti_hermitian(s: &CMatrix) -> CMatrix {
    let n = s.nrows();
    if n == 1 {
        return CMatrix::from_element(1, 1, s[(0, 0)].exp());
    }
    if n == 2 {
        return expm_anti_hermitian_2x2(s);
    }
    let h = s.map(|z| C_I * z); // Hermitian
    let (vals, vecs) = eigh(&h);
    let mut out = CMatrix::zeros(n, n);
    for k in 0..n {
        let col = vecs.column(k);
        let w = Complex64::from_polar(1.0, -vals[k]);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += w * col[i] * col[j].conj();
            }
        }
    }
    out
}

// Closed form via the Pauli decomposition s = i(a0 I + a.sigma), a real.
fn expm_anti_hermitian_2x2(s: &CMatrix) -> CMatrix {
    let a0 = 0.5 * (s[(0, 0)].im + s[(1, 1)].im);
    let a3 = 0.5 * (s[(0, 0)].im - s[(1, 1)].im);
    // off-diagonal entries of i(a.sigma): s01 = i a1 + a2, s10 = i a1 - a2
    let a1 = 0.5 * (s[(0, 1)].im + s[(1, 0)].im);
    let a2 = 0.5 * (s[(0, 1)].re - s[(1, 0)].re);
    let r = (a1 * a1 + a2 * a2 + a3 * a3).sqrt();
    let phase = Complex64::from_polar(1.0, a0);
    let (c, sn) = if r > 0.0 {
        (r.cos(), r.sin() / r)
    } else {
        (1.0, 1.0)
    };
    let mut out = CMatrix::zeros(2, 2);
    out[(0, 0)] = phase * Complex64::new(c, sn * a3);
    out[(1, 1)] = phase * Complex64::new(c, -sn * a3);
    out[(0, 1)] = phase * Complex64::new(sn * a2, sn * a1);
    out[(1, 0)] = phase * Complex64::new(-sn * a2, sn * a1);
    out
}

/// General matrix exponential by scaling and squaring on a Taylor core.
/// Fine for the tiny (rank <= 4) matrices the holonomy integrator feeds it.
pub fn expm(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    let norm = m.norm();
    let scale = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let factor = Complex64::new(1.0 / f64::powi(2.0, scale as i32), 0.0);
    let a = m.map(|z| z * factor);
    let mut term = CMatrix::identity(n, n);
    let mut sum = CMatrix::identity(n, n);
    for k in 1..=14 {
        term = (&term * &a) / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    let mut out = sum;
    for _ in 0..scale {
        out = &out * &out;
    }
    out
}

/// Spectral (operator) norm, `sqrt(lambda_max(m^* m))`.
pub fn operator_norm(m: &CMatrix) -> f64 {
    let g = m.adjoint() * m;
    let (vals, _) = eigh(&g);
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Smallest and largest eigenvalue of a Hermitian matrix.
pub fn eig_range(m: &CMatrix) -> (f64, f64) {
    let (vals, _) = eigh(m);
    (vals[0], *vals.last().unwrap())
}

/// Nearest unitary to an almost-unitary matrix (polar factor), by Newton
/// iteration `x <- (x + x^{-*})/2`. Converges quadratically near unitarity.
pub fn reunitarize(u: &CMatrix) -> CMatrix {
    let mut x = u.clone();
    for _ in 0..4 {
        if unitarity_defect(&x) < 1e-14 {
            break;
        }
        let inv = x
            .clone()
            .try_inverse()
            .expect("polar step: matrix is singular");
        x = (x + inv.adjoint()) * Complex64::new(0.5, 0.0);
    }
    x
}

/// Deterministic pairwise sum; the reduction order is fixed by the index
/// order of the input, independent of thread scheduling.
pub fn pairwise_sum_complex(values: &[Complex64]) -> Complex64 {
    match values.len() {
        0 => C_ZERO,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum_complex(a) + pairwise_sum_complex(b)
        }
    }
}

pub fn pairwise_sum_f64(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum_f64(a) + pairwise_sum_f64(b)
        }
    }
}
