//! Quadrature helpers: adaptive Simpson on the line and volume integration
//! on the model manifolds. Used by the Kato diagnostics, the matrix-element
//! normalizations and the heat-kernel consistency checks.

use super::{ManifoldModel, ModelKind, Point};
use crate::error::{Error, Result};

/// Adaptive Simpson. Subdivision stops at a minimal step (relative to the
/// initial span); residuals that still exceed the budget there are
/// accumulated, and a budget blow-up is reported as `Undecided`, which is
/// how divergent integrands (e.g. non-integrable potential singularities)
/// surface.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(b > a) {
        return Err(Error::Domain(format!("bad interval [{a}, {b}]")));
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    if !(fa.is_finite() && fb.is_finite() && fm.is_finite()) {
        return Err(Error::Undecided(format!(
            "integrand not finite on [{a}, {b}]"
        )));
    }
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let h_min = (b - a) * 2.0_f64.powi(-40);
    let mut residual = 0.0;
    let value = simpson_step(f, a, b, fa, fm, fb, whole, tol, h_min, &mut residual)?;
    if residual > (10.0 * tol).max(1e-12 * value.abs()) {
        return Err(Error::Undecided(format!(
            "quadrature residual {residual:.3e} exceeds budget {tol:.3e}; integral may diverge"
        )));
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    h_min: f64,
    residual: &mut f64,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !(flm.is_finite() && frm.is_finite()) {
        return Err(Error::Undecided(format!(
            "integrand not finite near {lm} / {rm}"
        )));
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a) <= h_min {
        if delta.abs() > 15.0 * tol {
            *residual += delta.abs() / 15.0;
        }
        return Ok(left + right + delta / 15.0);
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, h_min, residual)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, h_min, residual)?;
    Ok(l + r)
}

/// Adaptive Simpson with a tolerance relative to a coarse-scan estimate of
/// the integrand scale; the right default when magnitudes vary over many
/// orders across calls.
pub fn adaptive_simpson_rel(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(b > a) {
        return Err(Error::Domain(format!("bad interval [{a}, {b}]")));
    }
    let n = 32;
    let mut fmax = 0.0_f64;
    for k in 0..=n {
        let x = a + (b - a) * k as f64 / n as f64;
        let v = f(x).abs();
        if v.is_finite() {
            fmax = fmax.max(v);
        }
    }
    let scale = fmax * (b - a);
    adaptive_simpson(f, a, b, rel_tol * (scale + 1e-14))
}

/// Trapezoid rule on a uniform periodic grid (spectrally accurate for
/// smooth periodic integrands).
pub fn periodic_trapezoid(f: &dyn Fn(f64) -> f64, length: f64, n: usize) -> f64 {
    let h = length / n as f64;
    (0..n).map(|i| f(i as f64 * h)).sum::<f64>() * h
}

/// Integral of `f` against the Riemannian volume over an entire compact
/// model (circle, torus, sphere, interval chart).
pub fn integrate_model(
    model: &ManifoldModel,
    f: &dyn Fn(&Point) -> f64,
    tol: f64,
) -> Result<f64> {
    match model.kind() {
        ModelKind::Circle { length } => {
            // refine the periodic trapezoid until stable
            let mut n = 64;
            let g = |x: f64| f(&Point::from_scalar(x));
            let mut prev = periodic_trapezoid(&g, *length, n);
            loop {
                n *= 2;
                let next = periodic_trapezoid(&g, *length, n);
                if (next - prev).abs() <= tol * (1.0 + next.abs()) || n >= 1 << 16 {
                    return Ok(next);
                }
                prev = next;
            }
        }
        ModelKind::FlatTorus { lengths } => match lengths.len() {
            1 => {
                let l = lengths[0];
                let mut n = 64;
                let g = |x: f64| f(&Point::from_scalar(x));
                let mut prev = periodic_trapezoid(&g, l, n);
                loop {
                    n *= 2;
                    let next = periodic_trapezoid(&g, l, n);
                    if (next - prev).abs() <= tol * (1.0 + next.abs()) || n >= 1 << 16 {
                        return Ok(next);
                    }
                    prev = next;
                }
            }
            2 => {
                let (l1, l2) = (lengths[0], lengths[1]);
                let mut n = 32;
                let eval = |n: usize| {
                    let h1 = l1 / n as f64;
                    let h2 = l2 / n as f64;
                    let mut s = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            s += f(&Point::new(&[i as f64 * h1, j as f64 * h2]));
                        }
                    }
                    s * h1 * h2
                };
                let mut prev = eval(n);
                loop {
                    n *= 2;
                    let next = eval(n);
                    if (next - prev).abs() <= tol * (1.0 + next.abs()) || n >= 2048 {
                        return Ok(next);
                    }
                    prev = next;
                }
            }
            _ => unreachable!(),
        },
        ModelKind::Sphere2 { radius } => {
            let r = *radius;
            // latitude by adaptive simpson in theta, longitude by periodic trapezoid
            let n_phi = 256;
            let g = |theta: f64| -> f64 {
                let lon = |phi: f64| {
                    f(&Point::new(&[
                        r * theta.sin() * phi.cos(),
                        r * theta.sin() * phi.sin(),
                        r * theta.cos(),
                    ]))
                };
                periodic_trapezoid(&lon, 2.0 * std::f64::consts::PI, n_phi) * r * r * theta.sin()
            };
            adaptive_simpson(&g, 0.0, std::f64::consts::PI, tol)
        }
        ModelKind::IntervalAbsorbing { length } => {
            let g = |x: f64| f(&Point::from_scalar(x.clamp(1e-12, length - 1e-12)));
            adaptive_simpson(&g, 0.0, *length, tol)
        }
        ModelKind::Euclidean { .. } | ModelKind::Hyperbolic3 => Err(Error::Domain(
            "whole-model integration needs a compact model; use integrate_chart_box".into(),
        )),
    }
}

/// Integral of `f` over an axis-aligned chart box against the Riemannian
/// volume element (Lebesgue on the flat models, `dx dy dz / z^3` on
/// hyperbolic space).
pub fn integrate_chart_box(
    model: &ManifoldModel,
    lo: &[f64],
    hi: &[f64],
    f: &dyn Fn(&Point) -> f64,
    tol: f64,
) -> Result<f64> {
    let cd = model.chart_dim();
    if lo.len() != cd || hi.len() != cd {
        return Err(Error::Domain(format!("box must have {cd} coordinates")));
    }
    if matches!(model.kind(), ModelKind::Sphere2 { .. }) {
        return Err(Error::Domain(
            "chart boxes are not defined on the sphere's ambient chart".into(),
        ));
    }
    let weight = |p: &Point| -> f64 {
        match model.kind() {
            ModelKind::Hyperbolic3 => {
                let z = p.coords()[2];
                1.0 / (z * z * z)
            }
            _ => 1.0,
        }
    };
    match cd {
        1 => {
            let g = |x: f64| {
                let p = Point::from_scalar(x);
                f(&p) * weight(&p)
            };
            adaptive_simpson(&g, lo[0], hi[0], tol)
        }
        2 => {
            let g = |x: f64| {
                let inner = |y: f64| {
                    let p = Point::new(&[x, y]);
                    f(&p) * weight(&p)
                };
                adaptive_simpson(&inner, lo[1], hi[1], tol / (hi[0] - lo[0]).max(1.0))
                    .unwrap_or(f64::NAN)
            };
            let v = adaptive_simpson(&g, lo[0], hi[0], tol)?;
            if v.is_nan() {
                return Err(Error::Undecided("inner quadrature failed".into()));
            }
            Ok(v)
        }
        3 => {
            // fixed-order tensor Simpson with one Richardson refinement;
            // adequate for the smooth box integrands this is used for
            let eval = |n: usize| -> f64 {
                let mut s = 0.0;
                let steps: Vec<f64> = (0..3).map(|i| (hi[i] - lo[i]) / n as f64).collect();
                let w1 = |i: usize, n: usize| -> f64 {
                    if i == 0 || i == n {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    }
                };
                for i in 0..=n {
                    for j in 0..=n {
                        for k in 0..=n {
                            let p = Point::new(&[
                                lo[0] + i as f64 * steps[0],
                                lo[1] + j as f64 * steps[1],
                                lo[2] + k as f64 * steps[2],
                            ]);
                            s += w1(i, n) * w1(j, n) * w1(k, n) * f(&p) * weight(&p);
                        }
                    }
                }
                s * steps.iter().product::<f64>() / 27.0
            };
            let a = eval(32);
            let b = eval(64);
            // gross-divergence guard only; Richardson handles the rest
            if (b - a).abs() > 1e-3 * (1.0 + b.abs()) {
                return Err(Error::Undecided(format!(
                    "3d box quadrature unstable: {a} vs {b}"
                )));
            }
            Ok(b + (b - a) / 15.0)
        }
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_exact() {
        let v = adaptive_simpson(&|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - (4.0 - 4.0)).abs() < 1e-10);
    }

    #[test]
    fn simpson_flags_divergence() {
        let r = adaptive_simpson(&|x| 1.0 / x, 0.0, 1.0, 1e-8);
        assert!(matches!(r, Err(Error::Undecided(_))));
    }

    #[test]
    fn circle_volume() {
        let model = ManifoldModel::circle(5.0);
        let v = integrate_model(&model, &|_| 1.0, 1e-10).unwrap();
        assert!((v - 5.0).abs() < 1e-9);
    }

    #[test]
    fn sphere_volume() {
        let model = ManifoldModel::sphere2(2.0);
        let v = integrate_model(&model, &|_| 1.0, 1e-9).unwrap();
        assert!((v - 16.0 * std::f64::consts::PI).abs() < 1e-6);
    }

    #[test]
    fn torus2_volume() {
        let model = ManifoldModel::flat_torus(&[2.0, 3.0]);
        let v = integrate_model(&model, &|_| 1.0, 1e-10).unwrap();
        assert!((v - 6.0).abs() < 1e-9);
    }

    #[test]
    fn hyperbolic_box_weight() {
        // int over z in [1, 2] of 1/z^3, unit base square
        let model = ManifoldModel::hyperbolic3();
        let v = integrate_chart_box(
            &model,
            &[0.0, 0.0, 1.0],
            &[1.0, 1.0, 2.0],
            &|_| 1.0,
            1e-8,
        )
        .unwrap();
        assert!((v - (0.5 - 0.125)).abs() < 1e-6, "v = {v}");
    }
}
