use feynkac::bundle::{BundleSpec, PotentialField};
use feynkac::geometry::{ManifoldModel, Point};
use feynkac::linalg::{eig_range, expm, operator_norm, CMatrix};
use feynkac::paths::{attach_transport, sample_path, SamplerConfig};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[test]
fn probe_stepwise() {
    let l = 2.0 * std::f64::consts::PI;
    let model = ManifoldModel::circle(l);
    let spec = BundleSpec::trivial(model.clone(), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(88);
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
        &[Point::from_scalar(0.3)],
    )
    .unwrap();
    let cfg = SamplerConfig::new(1e-3, 30_000);
    let p = sample_path(&model, &Point::from_scalar(1.0), 0.5, &cfg, 140).unwrap();
    let p = attach_transport(p, &spec).unwrap();
    let taus = p.transports.as_ref().unwrap();
    let mut y = CMatrix::identity(2, 2);
    let mut cert = 0.0_f64;
    let mut worst_step = (0usize, 0.0f64);
    for i in 0..p.points.len() - 1 {
        let dt = p.times[i + 1] - p.times[i];
        let f0 = taus[i].adjoint() * v.eval_at(&p.points[i]).0 * &taus[i];
        let f1 = taus[i + 1].adjoint() * v.eval_at(&p.points[i + 1]).0 * &taus[i + 1];
        let half = (&f0 + &f1).map(|z| z * Complex64::new(-dt / 2.0, 0.0));
        let comm = (&f0 * &f1 - &f1 * &f0).map(|z| z * Complex64::new(-dt * dt / 12.0, 0.0));
        let step = expm(&(half + comm));
        let step_norm = operator_norm(&step);
        let v2a = v.v2_bound_at(&p.points[i]);
        let v2b = v.v2_bound_at(&p.points[i + 1]);
        let budget = (0.5 * dt * (v2a + v2b)).exp();
        let excess = step_norm / budget - 1.0;
        if excess > worst_step.1 {
            worst_step = (i, excess);
            if excess > 1e-12 {
                let (lo0, _) = eig_range(&f0);
                let (lo1, _) = eig_range(&f1);
                println!("step {i}: ||step|| {step_norm:.15}, budget {budget:.15}, excess {excess:.3e}; -lam_min(F0) {:.6} v2a {v2a:.6}; -lam_min(F1) {:.6} v2b {v2b:.6}", -lo0, -lo1);
            }
        }
        y = &y * step;
        cert += 0.5 * dt * (v2a + v2b);
    }
    println!("final ||Y|| {} vs e^cert {}", operator_norm(&y), cert.exp());
    println!("worst step {} excess {:.3e}", worst_step.0, worst_step.1);
}
