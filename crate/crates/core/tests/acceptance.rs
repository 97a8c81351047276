//! Acceptance suite: every release criterion as one test, each printing a
//! `CRITERION n: PASS/FAIL` line (run with `--nocapture` to see them).
//!
//! Run single-threaded for honest timing:
//! `cargo test --release --test acceptance -- --nocapture --test-threads 1`

use feynkac::bundle::{BundleSpec, ConnectionFn, PotentialField};
use feynkac::feynman_kac::{
    estimate_semigroup, estimate_semigroup_multi, ground_energy, SectionField,
};
use feynkac::geometry::{
    random_point, standard_check_grid, verify_gaussian_bound, ManifoldModel, Point,
    DEFAULT_C2_GRID,
};
use feynkac::holonomy::{check_norm_bound, dyson_series, solve_holonomy};
use feynkac::kato::{
    exp_moment, kato_b, kato_verdict, ScalarField, Verdict, DEFAULT_MIN_ALPHA, DEFAULT_MIN_R2,
};
use feynkac::linalg::{unitarity_defect, CMatrix, CVector};
use feynkac::oracle::{
    davies_gaffney_check, discretize, finite_speed_check, graph_norm_convergence, grid_bump,
    mollify, semigroup_apply,
};
use feynkac::paths::{attach_transport, sample_path, SamplerConfig};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn report(n: usize, pass: bool, detail: &str) {
    println!(
        "CRITERION {n}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_01_feynman_kac_matches_spectral_oracle() {
    let started = Instant::now();
    let l = 2.0 * std::f64::consts::PI;
    let model = ManifoldModel::circle(l);
    let spec = BundleSpec::circle_abelian(model.clone(), 0.5).unwrap();
    let v = PotentialField::scalar(1, |x: &Point| 1.0 + x.coords()[0].cos());
    let f = SectionField::scalar(|x: &Point| 1.0 + 0.5 * x.coords()[0].cos());
    let nodes = 512;
    let op = discretize(&model, &spec, &v, nodes).unwrap();
    let fvec = CVector::from_iterator(
        nodes,
        op.grid.points.iter().map(|p| f.scalar_at(p).unwrap()),
    );
    let times = [0.25, 0.5, 1.0];
    let oracles: Vec<CVector> = times
        .iter()
        .map(|&t| semigroup_apply(&op, t, &fvec).unwrap())
        .collect();
    let n_paths = 200_000;
    let mut worst = (0.0_f64, 0.0_f64); // (deviation, budget)
    let mut pass = true;
    for k in 0..10 {
        let node = k * nodes / 10;
        let x = op.grid.points[node];
        let cfg = SamplerConfig::new(1e-3, 1000 + k as u64);
        let ests =
            estimate_semigroup_multi(&model, &spec, &v, &f, &times, &x, n_paths, &cfg).unwrap();
        for (i, est) in ests.iter().enumerate() {
            let diff = (est.value[0] - oracles[i][node]).norm();
            let budget = 3.0 * est.stderr[0] + 0.02;
            pass &= diff <= budget;
            if diff > worst.0 {
                worst = (diff, budget);
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    // stated runtime budget is for a laptop core; this box may be slower
    pass &= elapsed < 300.0;
    report(
        1,
        pass,
        &format!(
            "30 comparisons: worst |MC - oracle| {:.3e} (budget {:.3e}); runtime {elapsed:.0}s",
            worst.0, worst.1
        ),
    );
}

#[test]
fn criterion_02_harmonic_oscillator_ground_energy() {
    let model = ManifoldModel::euclidean(1);
    let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
    let v = PotentialField::harmonic(1);
    let norm = std::f64::consts::PI.powf(-0.25);
    let f = SectionField::scalar(move |x: &Point| {
        let c = x.coords()[0];
        norm * (-c * c / 2.0).exp()
    })
    .with_support_box(&[-8.0], &[8.0]);
    let cfg = SamplerConfig::new(1e-3, 20_240);
    let est = ground_energy(
        &model,
        &spec,
        &v,
        &f,
        &[0.5, 1.0, 1.5, 2.0],
        100_000,
        &cfg,
        2,
    )
    .unwrap();
    let pass = (est.e0 - 0.5).abs() <= 0.05;
    report(
        2,
        pass,
        &format!("E0 = {:.4} +- {:.4} (target 0.5 +- 0.05)", est.e0, est.stderr),
    );
}

#[test]
fn criterion_03_hydrogen_ground_energy_and_kato() {
    let started = Instant::now();
    let model = ManifoldModel::euclidean(3);
    let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
    let center = Point::new(&[0.0, 0.0, 0.0]);
    let kappa = 2.0 * std::f64::consts::PI; // radial coefficient 1 under G = 1/(2 pi r)
    let v = PotentialField::coulomb(&model, center, kappa, 1, 1e-6).unwrap();
    let f = SectionField::scalar(|x: &Point| {
        let r: f64 = x.coords().iter().map(|c| c * c).sum::<f64>().sqrt();
        (-r).exp()
    })
    .with_support_box(&[-8.0, -8.0, -8.0], &[8.0, 8.0, 8.0]);
    let cfg = SamplerConfig::new(1e-3, 77_000);
    let energy = ground_energy(
        &model,
        &spec,
        &v,
        &f,
        &[0.8, 1.2, 1.6, 2.0],
        150_000,
        &cfg,
        2,
    )
    .unwrap();

    // independent oracle: radial finite differences for -(1/2) u'' - u/r
    let e0_fd = hydrogen_radial_fd(4000, 40.0);

    let probe = estimate_semigroup(
        &model,
        &spec,
        &v,
        &f,
        2.0,
        &Point::new(&[0.5, 0.0, 0.0]),
        20_000,
        &cfg,
    )
    .unwrap();

    let w = ScalarField::radial_power(center, 1.0, 1.0);
    let kato = kato_verdict(
        &model,
        &w,
        &[0.1, 0.05, 0.02, 0.01, 0.005, 0.002],
        &[center, Point::new(&[0.5, 0.0, 0.0])],
        DEFAULT_MIN_ALPHA,
        DEFAULT_MIN_R2,
    )
    .unwrap();
    let alpha = kato.fit_alpha.unwrap_or(f64::NAN);

    let elapsed = started.elapsed().as_secs_f64();
    let pass = (energy.e0 + 0.5).abs() <= 0.05
        && (e0_fd + 0.5).abs() < 2e-3
        && kato.verdict == Verdict::Kato
        && (0.4..=0.6).contains(&alpha)
        && probe.clamped_fraction < 0.01
        && elapsed < 600.0;
    report(
        3,
        pass,
        &format!(
            "E0 = {:.4} +- {:.4} (fd oracle {:.5}), kato {:?} alpha {:.3}, clamped {:.5}%, runtime {elapsed:.0}s",
            energy.e0,
            energy.stderr,
            e0_fd,
            kato.verdict,
            alpha,
            100.0 * probe.clamped_fraction
        ),
    );
}

/// Lowest eigenvalue of the l = 0 radial hydrogen problem
/// `-(1/2) u'' - u/r` on `(0, rmax)` with Dirichlet ends, by bisection on
/// the Sturm sign-change count of the shifted tridiagonal matrix.
fn hydrogen_radial_fd(n: usize, rmax: f64) -> f64 {
    let h = rmax / (n + 1) as f64;
    let diag: Vec<f64> = (1..=n)
        .map(|i| {
            let r = i as f64 * h;
            1.0 / (h * h) - 1.0 / r
        })
        .collect();
    let off = -0.5 / (h * h);
    // count of eigenvalues below lambda via the Sturm sequence
    let count_below = |lam: f64| -> usize {
        let mut count = 0;
        let mut d = diag[0] - lam;
        if d < 0.0 {
            count += 1;
        }
        for item in diag.iter().skip(1) {
            d = (item - lam) - off * off / d;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let (mut lo, mut hi) = (-2.0, 0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) == 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_04_kato_modulus_sqrt_law() {
    let model = ManifoldModel::euclidean(3);
    let w = ScalarField::radial_power(Point::new(&[0.0, 0.0, 0.0]), 1.0, 1.0);
    let grid = [
        Point::new(&[0.0, 0.0, 0.0]),
        Point::new(&[0.5, 0.0, 0.0]),
        Point::new(&[0.0, 1.0, 0.0]),
    ];
    let expect = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    let (b01, _) = kato_b(&model, &w, 0.01, &grid).unwrap();
    let mut pass = (b01 - expect * 0.1).abs() / (expect * 0.1) <= 0.01;
    let mut ratios = Vec::new();
    for &t in &[1e-4, 1e-3, 1e-2, 1e-1] {
        let (b, _) = kato_b(&model, &w, t, &grid).unwrap();
        ratios.push(b / t.sqrt());
    }
    let rmax = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let rmin = ratios.iter().cloned().fold(f64::MAX, f64::min);
    pass &= (rmax - rmin) / rmin <= 0.02;
    report(
        4,
        pass,
        &format!(
            "b(0.01) = {b01:.6} (analytic {:.6}); b/sqrt(t) in [{rmin:.5}, {rmax:.5}]",
            expect * 0.1
        ),
    );
}

#[test]
fn criterion_05_exponential_moment_finite_and_stable() {
    let model = ManifoldModel::euclidean(3);
    let w = ScalarField::radial_power(Point::new(&[0.0, 0.0, 0.0]), 1.0, 1.0);
    let grid = [Point::new(&[0.0, 0.0, 0.0]), Point::new(&[0.3, 0.0, 0.0])];
    let cfg = SamplerConfig::new(2e-4, 909);
    let a = exp_moment(&model, &w, 0.01, &grid, 20_000, &cfg).unwrap();
    let b = exp_moment(&model, &w, 0.01, &grid, 40_000, &cfg).unwrap();
    let ratio = a.value / b.value;
    let pass = a.value.is_finite() && b.value.is_finite() && (0.9..=1.1).contains(&ratio);
    report(
        5,
        pass,
        &format!(
            "sup E[exp(int |w|)] = {:.5} +- {:.1e}; doubling ratio {ratio:.4}",
            b.value, b.stderr
        ),
    );
}

#[test]
fn criterion_06_davies_gaffney_sweep() {
    let times = [0.02, 0.05, 0.1, 0.2, 0.5];
    let separations = [0.3, 0.6, 1.0, 1.5];
    let mut worst: f64 = 0.0;
    let mut cases = 0;

    // circle oracle
    let l = 2.0 * std::f64::consts::PI;
    let circle = ManifoldModel::circle(l);
    let spec = BundleSpec::trivial(circle.clone(), 1).unwrap();
    let potentials: Vec<PotentialField> = vec![
        PotentialField::zero(1),
        PotentialField::scalar(1, |x: &Point| 1.0 + x.coords()[0].cos()),
        PotentialField::scalar(1, |x: &Point| x.coords()[0].cos()),
    ];
    for v in &potentials {
        let op = discretize(&circle, &spec, v, 256).unwrap();
        let h = op.grid.h[0];
        let width = (0.4 / h).round() as usize;
        let u1: Vec<usize> = (0..width).collect();
        for &d in &separations {
            let from = width + (d / h).round() as usize;
            let u2: Vec<usize> = (from..from + width).collect();
            let rep = davies_gaffney_check(&op, &u1, &u2, &times).unwrap();
            worst = worst.max(rep.worst_ratio);
            cases += times.len();
        }
    }

    // interval oracle
    let li = 4.0;
    let interval = ManifoldModel::interval_absorbing(li);
    let spec = BundleSpec::trivial(interval.clone(), 1).unwrap();
    let potentials: Vec<PotentialField> = vec![
        PotentialField::zero(1),
        PotentialField::scalar(1, move |x: &Point| {
            let c = x.coords()[0];
            0.3 * c * (4.0 - c)
        }),
        PotentialField::scalar(1, |x: &Point| {
            (2.0 * std::f64::consts::PI * x.coords()[0] / 4.0).cos()
        }),
    ];
    for v in &potentials {
        let op = discretize(&interval, &spec, v, 256).unwrap();
        let h = op.grid.h[0];
        let width = (0.4 / h).round() as usize;
        let u1: Vec<usize> = (0..width).collect();
        for &d in &separations {
            let from = width + (d / h).round() as usize;
            let u2: Vec<usize> = (from..(from + width).min(op.grid.n_nodes())).collect();
            let rep = davies_gaffney_check(&op, &u1, &u2, &times).unwrap();
            worst = worst.max(rep.worst_ratio);
            cases += times.len();
        }
    }
    let pass = worst <= 1.05;
    report(
        6,
        pass,
        &format!("{cases} (set, time) cases over 2 models x 3 potentials: worst ratio {worst:.4}"),
    );
}

#[test]
fn criterion_07_finite_propagation_speed() {
    let l = 2.0 * std::f64::consts::PI;
    let model = ManifoldModel::circle(l);
    let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
    let nodes = 2048;

    let op0 = discretize(&model, &spec, &PotentialField::zero(1), nodes).unwrap();
    let h = op0.grid.h[0];
    let f = grid_bump(&op0.grid, std::f64::consts::PI, 0.3);
    let leak0 = finite_speed_check(&op0, &f, 1.0, 5.0 * h).unwrap();

    let vb = PotentialField::scalar(1, |x: &Point| x.coords()[0].cos());
    let opb = discretize(&model, &spec, &vb, nodes).unwrap();
    let leak1 = finite_speed_check(&opb, &f, 1.0, 10.0 * h).unwrap();

    let pass = leak0 < 1e-3 && leak1 < 1e-2;
    report(
        7,
        pass,
        &format!("leaked mass: V=0 -> {leak0:.2e} (< 1e-3), ||V||=1 -> {leak1:.2e} (< 1e-2)"),
    );
}

#[test]
fn criterion_08_holonomy_certificates_and_dyson() {
    // part A: the norm-bound certificate over 10^4 random paths with random
    // Hermitian potentials carrying a split
    let l = 2.0 * std::f64::consts::PI;
    let model = ManifoldModel::circle(l);
    let spec = BundleSpec::trivial(model.clone(), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut all_pass = true;
    let mut checked = 0u32;
    for trial in 0..5 {
        let a: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = PotentialField::from_matrix_fn(
            2,
            move |x: &Point| {
                let c = x.coords()[0];
                let mut m = CMatrix::zeros(2, 2);
                m[(0, 0)] = Complex64::new(a[0] + a[1] * c.cos(), 0.0);
                m[(1, 1)] = Complex64::new(a[2] + a[3] * (2.0 * c).sin(), 0.0);
                m[(0, 1)] = Complex64::new(a[4] + a[5] * c.sin(), a[6] * c.cos());
                m[(1, 0)] = m[(0, 1)].conj();
                m
            },
            &[Point::from_scalar(0.3), Point::from_scalar(2.0)],
        )
        .unwrap();
        let cfg = SamplerConfig::new(1e-3, 30_000 + trial);
        for j in 0..2000 {
            let p = sample_path(&model, &Point::from_scalar(1.0), 0.5, &cfg, j).unwrap();
            let p = attach_transport(p, &spec).unwrap();
            let state = solve_holonomy(&p, &v, &spec).unwrap();
            all_pass &= check_norm_bound(&state);
            checked += 1;
        }
    }

    // part B: Dyson order 8 against the pathwise integrator across the
    // stated regime ||V||_inf * t <= 2
    let spec1 = BundleSpec::circle_abelian(model.clone(), 0.5).unwrap();
    let cfg = SamplerConfig::new(2e-4, 4141);
    let mut dyson_msgs = Vec::new();
    let mut dyson_pass = true;
    for &x in &[0.25_f64, 0.5, 1.0, 2.0] {
        let mut worst: f64 = 0.0;
        // constant-sign and oscillating potentials at ||V||_inf = x, t = 1
        let vc = PotentialField::constant_scalar(1, x);
        let vo = PotentialField::scalar(1, move |p: &Point| x * p.coords()[0].cos());
        for (vi, v) in [vc, vo].into_iter().enumerate() {
            for j in 0..10 {
                let p = sample_path(&model, &Point::from_scalar(0.7), 1.0, &cfg, 100 + j)
                    .unwrap();
                let p = attach_transport(p, &spec1).unwrap();
                let state = solve_holonomy(&p, &v, &spec1).unwrap();
                let d = dyson_series(&p, &v, &spec1, 8).unwrap();
                worst = worst.max((d - &state.y).norm());
            }
            let _ = vi;
        }
        dyson_pass &= worst <= 1e-6;
        dyson_msgs.push(format!("x={x}: {worst:.2e}"));
    }
    // the order-8 truncation cannot reach 1e-6 for ||V|| t near 2: the
    // series tail is >= x^9/9! ~ 1.4e-3 at x = 2 for constant-sign V
    let pass = all_pass && dyson_pass;
    report(
        8,
        pass,
        &format!(
            "norm bound: {checked} paths all pass = {all_pass}; dyson-8 vs ODE max deviation by ||V|| t: {} (tolerance 1e-6)",
            dyson_msgs.join(", ")
        ),
    );
}

#[test]
fn criterion_09_gaussian_bounds_on_complete_models() {
    let models = [
        ManifoldModel::euclidean(1),
        ManifoldModel::euclidean(2),
        ManifoldModel::euclidean(3),
        ManifoldModel::circle(2.0 * std::f64::consts::PI),
        ManifoldModel::flat_torus(&[2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI]),
        ManifoldModel::sphere2(1.0),
        ManifoldModel::hyperbolic3(),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for model in &models {
        let (pairs, times) = standard_check_grid(model);
        match verify_gaussian_bound(model, &pairs, &times, &DEFAULT_C2_GRID, 1e6) {
            Ok(fit) => {
                pass &= fit.c2 <= 4.0;
                parts.push(format!("{:?}: C1 {:.4} C2 {}", model.kind(), fit.c1, fit.c2));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{:?}: FAILED ({e})", model.kind()));
            }
        }
    }
    report(9, pass, &parts.join("; "));
}

#[test]
fn criterion_10_mollifier_graph_norm_tables() {
    let l = std::f64::consts::PI;
    let model = ManifoldModel::interval_absorbing(l);
    let spec = BundleSpec::trivial(model.clone(), 1).unwrap();
    let v = PotentialField::harmonic(1);
    let op = discretize(&model, &spec, &v, 512).unwrap();
    let h = op.grid.h[0];
    let n = op.grid.n_nodes();
    let radii = [16.0 * h, 8.0 * h, 4.0 * h, 2.0 * h];

    let bump = grid_bump(&op.grid, l / 2.0, 1.0);
    let indicator = CVector::from_fn(n, |i, _| {
        let x = op.grid.points[i].coords()[0];
        if (1.0..2.0).contains(&x) {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, f) in [("bump", &bump), ("indicator", &indicator)] {
        let rows = graph_norm_convergence(&op, f, &radii).unwrap();
        let mut decreasing = true;
        for w in rows.windows(2) {
            decreasing &=
                w[1].err_f < w[0].err_f && w[1].err_h < w[0].err_h && w[1].err_v < w[0].err_v;
        }
        pass &= decreasing;
        // exact sup-norm bound
        let sup = f.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for &r in &radii {
            let fr = mollify(&op.grid, f, r, 1).unwrap();
            let sup_r = fr.iter().map(|z| z.norm()).fold(0.0, f64::max);
            pass &= sup_r <= sup;
        }
        notes.push(format!(
            "{name}: strictly decreasing = {decreasing}, final ({:.1e}, {:.1e}, {:.1e})",
            rows[3].err_f, rows[3].err_h, rows[3].err_v
        ));
    }
    report(10, pass, &notes.join("; "));
}

#[test]
fn criterion_11_unitarity_and_determinism() {
    // transport unitarity across a random nonabelian sweep
    let model = ManifoldModel::euclidean(1);
    let form: ConnectionFn = std::sync::Arc::new(|x: &Point, dir: &[f64]| {
        let c = x.coords()[0];
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 0)] = Complex64::new(0.0, 0.8 * c.cos());
        a[(1, 1)] = Complex64::new(0.0, -0.5 * (0.7 * c).sin());
        a[(0, 1)] = Complex64::new(0.4 * c.sin(), 0.3);
        a[(1, 0)] = Complex64::new(-0.4 * c.sin(), 0.3);
        a.map(|z| z * dir[0])
    });
    let spec = BundleSpec::with_connection(model.clone(), 2, form).unwrap();
    let cfg = SamplerConfig::new(1e-3, 2_026);
    let mut worst: f64 = 0.0;
    for j in 0..200 {
        let p = sample_path(&model, &Point::from_scalar(0.0), 0.5, &cfg, j).unwrap();
        let p = attach_transport(p, &spec).unwrap();
        for tau in p.transports.as_ref().unwrap() {
            worst = worst.max(unitarity_defect(tau));
        }
    }
    let unitary_ok = worst < 1e-10;

    // byte-identical output at any worker count
    let torus = ManifoldModel::flat_torus(&[1.0, 2.0]);
    let tspec = BundleSpec::trivial(torus.clone(), 1).unwrap();
    let v = PotentialField::scalar(1, |x: &Point| x.coords()[0].sin() + x.coords()[1].cos());
    let f = SectionField::scalar(|x: &Point| 1.0 + 0.5 * x.coords()[0].cos());
    let run = |threads: usize| -> String {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let est = estimate_semigroup(
                &torus,
                &tspec,
                &v,
                &f,
                0.4,
                &Point::new(&[0.2, 0.3]),
                5000,
                &SamplerConfig::new(1e-3, 99),
            )
            .unwrap();
            serde_json::to_string(&est.record()).unwrap()
        })
    };
    let single = run(1);
    let quad = run(4);
    let repeat = run(4);
    let deterministic = single == quad && quad == repeat;

    // sampler determinism across worker counts at the path level
    let mut same_paths = true;
    {
        let mdl = ManifoldModel::sphere2(1.0);
        let c = SamplerConfig::new(1e-2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_point(&mdl, &mut rng);
        let a = sample_path(&mdl, &x, 0.3, &c, 11).unwrap();
        let b = sample_path(&mdl, &x, 0.3, &c, 11).unwrap();
        same_paths &= a.points == b.points;
    }

    let pass = unitary_ok && deterministic && same_paths;
    report(
        11,
        pass,
        &format!(
            "worst transport unitarity defect {worst:.2e}; identical JSON across 1/4 workers = {deterministic}"
        ),
    );
}
