//! Monte Carlo evaluation of Schrodinger semigroups: pointwise estimates
//! `e^{-tH_V} f(x) = E[1_{t<zeta} Y_t tau_t^* f(B_t)]`, matrix elements
//! `<e^{-tH_V} f1, f2>` with importance-sampled starting points, the
//! Cauchy-Schwarz local-sup certificate, and ground-energy extraction from
//! the decay of `<f, e^{-tH_V} f>`.

use crate::bundle::{BundleSpec, PotentialField};
use crate::error::{Error, Result};
use crate::geometry::quadrature::{adaptive_simpson, integrate_model};
use crate::geometry::{ManifoldModel, ModelKind, Point};
use crate::holonomy::magnus_step;
use crate::linalg::{pairwise_sum_complex, pairwise_sum_f64, CMatrix, CVector};
use crate::paths::{path_rng, walk_path_with_rng, SamplerConfig};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use std::sync::Arc;

const MAX_RANK: usize = 4;

/// Where a section lives for quadrature and importance sampling purposes.
#[derive(Debug, Clone)]
pub enum SupportRegion {
    /// The whole model (compact models only).
    FullModel,
    /// Axis-aligned chart box; sections are treated as negligible outside.
    ChartBox { lo: Vec<f64>, hi: Vec<f64> },
}

/// Section of the bundle: a k-vector field on the base, with optional
/// precomputed norms over its declared support.
#[derive(Clone)]
pub struct SectionField {
    rank: usize,
    eval: Arc<dyn Fn(&Point) -> CVector + Send + Sync>,
    scalar: Option<Arc<dyn Fn(&Point) -> Complex64 + Send + Sync>>,
    support: SupportRegion,
    pub l2_norm: Option<f64>,
    pub inf_norm: Option<f64>,
}

impl SectionField {
    /// Real scalar section (rank 1).
    pub fn scalar(f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        let g = Arc::new(move |x: &Point| Complex64::new(f(x), 0.0));
        let g2 = g.clone();
        SectionField {
            rank: 1,
            eval: Arc::new(move |x| CVector::from_element(1, g2(x))),
            scalar: Some(g),
            support: SupportRegion::FullModel,
            l2_norm: None,
            inf_norm: None,
        }
    }

    /// Constant section with all components 1.
    pub fn one(rank: usize) -> Self {
        if rank == 1 {
            return SectionField::scalar(|_| 1.0);
        }
        SectionField::vector(rank, move |_x| {
            CVector::from_element(rank, Complex64::new(1.0, 0.0))
        })
    }

    /// General k-vector section.
    pub fn vector(rank: usize, f: impl Fn(&Point) -> CVector + Send + Sync + 'static) -> Self {
        assert!(rank >= 1 && rank <= MAX_RANK);
        SectionField {
            rank,
            eval: Arc::new(f),
            scalar: None,
            support: SupportRegion::FullModel,
            l2_norm: None,
            inf_norm: None,
        }
    }

    pub fn with_support_box(mut self, lo: &[f64], hi: &[f64]) -> Self {
        self.support = SupportRegion::ChartBox {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        };
        self
    }

    pub fn with_l2_norm(mut self, n: f64) -> Self {
        self.l2_norm = Some(n);
        self
    }

    pub fn with_inf_norm(mut self, n: f64) -> Self {
        self.inf_norm = Some(n);
        self
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn support(&self) -> &SupportRegion {
        &self.support
    }

    pub fn eval_at(&self, x: &Point) -> CVector {
        (self.eval)(x)
    }

    pub fn scalar_at(&self, x: &Point) -> Option<Complex64> {
        self.scalar.as_ref().map(|f| f(x))
    }

    /// Squared fiber norm `|f(x)|^2`.
    pub fn norm_sq_at(&self, x: &Point) -> f64 {
        if let Some(f) = &self.scalar {
            return f(x).norm_sqr();
        }
        self.eval_at(x).iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Monte Carlo estimate of `(e^{-tH_V} f)(x)`.
#[derive(Debug, Clone)]
pub struct SemigroupEstimate {
    pub value: Vec<Complex64>,
    pub stderr: Vec<f64>,
    pub paths_used: u64,
    pub clamped_fraction: f64,
    /// every path was absorbed before `t`; the estimate is the literal 0
    pub all_absorbed: bool,
    pub t: f64,
    pub x: Point,
    pub dt: f64,
    pub seed: u64,
}

impl SemigroupEstimate {
    /// Stable JSON record (fields documented in the README).
    pub fn record(&self) -> serde_json::Value {
        json!({
            "value": self.value.iter().map(|z| vec![z.re, z.im]).collect::<Vec<_>>(),
            "stderr": self.stderr,
            "paths": self.paths_used,
            "t": self.t,
            "x": self.x.coords(),
            "dt": self.dt,
            "seed": self.seed,
            "clamped_fraction": self.clamped_fraction,
            "all_absorbed": self.all_absorbed,
        })
    }

    /// Modulus of the (vector) value.
    pub fn value_norm(&self) -> f64 {
        self.value.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

#[derive(Clone)]
struct PathOutcome {
    vec: [Complex64; MAX_RANK],
    alive: bool,
    clamped: u32,
    nodes: u32,
}

fn zero_outcome() -> PathOutcome {
    PathOutcome {
        vec: [Complex64::new(0.0, 0.0); MAX_RANK],
        alive: false,
        clamped: 0,
        nodes: 0,
    }
}

/// Runs one path and returns `1_alive Y_t tau_t^* f(B_t)` plus clamp
/// statistics. `rng` must already be positioned on the path's stream.
fn run_path(
    model: &ManifoldModel,
    spec: &BundleSpec,
    v: &PotentialField,
    f: &SectionField,
    t: f64,
    x: &Point,
    dt: f64,
    rng: &mut ChaCha8Rng,
    path_index: u64,
) -> Result<PathOutcome> {
    let outs = run_path_multi(model, spec, v, f, &[t], x, dt, rng, path_index)?;
    Ok(outs.into_iter().next().expect("one snapshot"))
}

/// Runs one path up to `times.last()` and snapshots the Feynman-Kac
/// contribution at every requested time (ascending, aligned with the step
/// grid). One ensemble then serves a whole time sweep.
#[allow(clippy::too_many_arguments)]
fn run_path_multi(
    model: &ManifoldModel,
    spec: &BundleSpec,
    v: &PotentialField,
    f: &SectionField,
    times: &[f64],
    x: &Point,
    dt: f64,
    rng: &mut ChaCha8Rng,
    path_index: u64,
) -> Result<Vec<PathOutcome>> {
    let rank = spec.rank();
    let scalar_route = spec.has_scalar_route() && v.scalar_at(x).is_some();
    let t_final = *times.last().expect("at least one time");
    // snapshot node indices on the walk grid
    let n_steps = (t_final / dt - 1e-9).ceil().max(1.0) as usize;
    let mut snap_index = Vec::with_capacity(times.len());
    for (k, &ti) in times.iter().enumerate() {
        if k + 1 == times.len() {
            snap_index.push(n_steps);
            continue;
        }
        let idx = (ti / dt).round();
        if ((idx * dt) - ti).abs() > 1e-9 * (1.0 + ti) {
            return Err(Error::Domain(format!(
                "snapshot time {ti} is not aligned with the step grid dt = {dt}"
            )));
        }
        snap_index.push(idx as usize);
    }
    let mut outs: Vec<PathOutcome> = (0..times.len()).map(|_| zero_outcome()).collect();

    if scalar_route {
        // scalar fast path: accumulate the connection phase and the
        // potential integral, exponentiate once at the end
        use crate::bundle::ConnectionKind;
        let mut phase = 0.0_f64;
        let mut pot_int = 0.0_f64;
        let mut prev_v = 0.0_f64;
        let mut prev_clamped = false;
        let mut clamped = 0u32;
        let mut nodes = 0u32;
        let mut cursor = 0usize;
        let mut overflow = false;
        walk_path_with_rng(model, x, t_final, dt, rng, |ev| {
            let (val, cl) = v.scalar_at(&ev.point).expect("scalar potential");
            clamped += u32::from(cl);
            nodes += 1;
            if ev.index > 0 && ev.alive {
                // the drawn tangent is the step displacement; the 1-form is
                // evaluated at the chart midpoint when it depends on position
                match &spec.connection {
                    ConnectionKind::Flat => {}
                    ConnectionKind::CircleAbelian { beta } => phase += beta * ev.step[0],
                    ConnectionKind::Abelian(form) => {
                        let mid = model.chart_midpoint(&ev.prev, &ev.point);
                        phase += form(&mid, &ev.step[..model.dim()]);
                    }
                    ConnectionKind::General(_) => unreachable!("scalar route"),
                }
                if ev.index == 1 && prev_clamped {
                    pot_int += ev.dt * val;
                } else {
                    pot_int += 0.5 * ev.dt * (prev_v + val);
                }
            }
            prev_v = val;
            prev_clamped = cl;
            while cursor < snap_index.len() && ev.index == snap_index[cursor] && ev.alive {
                let out = &mut outs[cursor];
                out.clamped = clamped;
                out.nodes = nodes;
                out.alive = true;
                if -pot_int > 700.0 {
                    overflow = true;
                } else {
                    // Y = e^{-int V}, tau^* = e^{+i phase_total}
                    let weight = Complex64::from_polar((-pot_int).exp(), phase);
                    let fval = f.scalar_at(&ev.point).unwrap_or_else(|| {
                        let v = f.eval_at(&ev.point);
                        v[0]
                    });
                    out.vec[0] = weight * fval;
                }
                cursor += 1;
            }
        })?;
        if overflow {
            return Err(Error::Overflow {
                path_index,
                msg: "holonomy exponent overflows".into(),
            });
        }
        return Ok(outs);
    }

    // generic matrix route
    let mut tau = CMatrix::identity(rank, rank);
    let mut y = CMatrix::identity(rank, rank);
    let mut prev_f: Option<CMatrix> = None;
    let mut clamped = 0u32;
    let mut nodes = 0u32;
    let mut cursor = 0usize;
    let mut step_err: Option<Error> = None;
    walk_path_with_rng(model, x, t_final, dt, rng, |ev| {
        if step_err.is_some() {
            return;
        }
        if ev.index > 0 && ev.alive {
            match spec.transport_segment(&ev.prev, &ev.point, &tau) {
                Ok(next) => tau = next,
                Err(e) => {
                    step_err = Some(e);
                    return;
                }
            }
        }
        let (vm, cl) = v.eval_at(&ev.point);
        if vm.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            step_err = Some(Error::Integration {
                node: ev.index,
                msg: "potential not finite along path".into(),
            });
            return;
        }
        clamped += u32::from(cl);
        nodes += 1;
        let f_here = tau.adjoint() * vm * &tau;
        if ev.index > 0 && ev.alive {
            if let Some(fp) = &prev_f {
                y = magnus_step(&y, fp, &f_here, ev.dt);
            }
        }
        prev_f = Some(f_here);
        while cursor < snap_index.len() && ev.index == snap_index[cursor] && ev.alive {
            let out = &mut outs[cursor];
            out.clamped = clamped;
            out.nodes = nodes;
            out.alive = true;
            let contrib = &y * tau.adjoint() * f.eval_at(&ev.point);
            for i in 0..rank {
                out.vec[i] = contrib[i];
            }
            cursor += 1;
        }
    })?;
    if let Some(e) = step_err {
        return Err(e);
    }
    Ok(outs)
}

fn reduce_outcomes(
    outcomes: &[PathOutcome],
    rank: usize,
) -> (Vec<Complex64>, Vec<f64>, f64, bool) {
    let n = outcomes.len();
    let mut value = Vec::with_capacity(rank);
    let mut stderr = Vec::with_capacity(rank);
    for i in 0..rank {
        let comps: Vec<Complex64> = outcomes.iter().map(|o| o.vec[i]).collect();
        let mean = pairwise_sum_complex(&comps) / n as f64;
        let var: f64 = comps
            .iter()
            .map(|z| {
                let d = z - mean;
                d.norm_sqr()
            })
            .sum::<f64>()
            / (n as f64 - 1.0).max(1.0);
        value.push(mean);
        stderr.push((var / n as f64).sqrt());
    }
    let clamped: u64 = outcomes.iter().map(|o| o.clamped as u64).sum();
    let nodes: u64 = outcomes.iter().map(|o| o.nodes as u64).sum();
    let clamped_fraction = if nodes > 0 {
        clamped as f64 / nodes as f64
    } else {
        0.0
    };
    let all_absorbed = outcomes.iter().all(|o| !o.alive);
    (value, stderr, clamped_fraction, all_absorbed)
}

/// Pointwise semigroup estimate at `x`: averages
/// `1_{alive} Y_t tau_t^* f(B_t)` over `n_paths` independent paths.
/// Absorbed paths contribute exactly 0.
pub fn estimate_semigroup(
    model: &ManifoldModel,
    spec: &BundleSpec,
    v: &PotentialField,
    f: &SectionField,
    t: f64,
    x: &Point,
    n_paths: u64,
    cfg: &SamplerConfig,
) -> Result<SemigroupEstimate> {
    let mut many = estimate_semigroup_multi(model, spec, v, f, &[t], x, n_paths, cfg)?;
    Ok(many.pop().expect("one snapshot"))
}

/// Semigroup estimates at several (ascending, grid-aligned) times from one
/// path ensemble: every estimate uses all `n_paths` paths; estimates at
/// different times share the underlying Brownian increments.
#[allow(clippy::too_many_arguments)]
pub fn estimate_semigroup_multi(
    model: &ManifoldModel,
    spec: &BundleSpec,
    v: &PotentialField,
    f: &SectionField,
    times: &[f64],
    x: &Point,
    n_paths: u64,
    cfg: &SamplerConfig,
) -> Result<Vec<SemigroupEstimate>> {
    if n_paths < 100 {
        return Err(Error::Domain("semigroup estimate needs >= 100 paths".into()));
    }
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || !(times[0] > 0.0) {
        return Err(Error::Domain(
            "snapshot times must be positive and ascending".into(),
        ));
    }
    if f.rank() != spec.rank() || v.rank() != spec.rank() {
        return Err(Error::Contract(
            "section / potential / bundle ranks disagree".into(),
        ));
    }
    model.validate_point(x)?;
    let per_path: Result<Vec<Vec<PathOutcome>>> = (0..n_paths)
        .into_par_iter()
        .map(|j| {
            let mut rng = path_rng(cfg.seed, j);
            run_path_multi(model, spec, v, f, times, x, cfg.dt, &mut rng, j)
        })
        .collect();
    let per_path = per_path?;
    let mut out = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let outcomes: Vec<PathOutcome> = per_path.iter().map(|o| o[k].clone()).collect();
        let (value, stderr, clamped_fraction, all_absorbed) =
            reduce_outcomes(&outcomes, spec.rank());
        out.push(SemigroupEstimate {
            value,
            stderr,
            paths_used: n_paths,
            clamped_fraction,
            all_absorbed,
            t,
            x: *x,
            dt: cfg.dt,
            seed: cfg.seed,
        });
    }
    Ok(out)
}

/// How starting points are drawn for matrix elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartSampling {
    /// Density proportional to `|f2|^2` on its support (grid-tabulated).
    WeightedByTarget,
    /// Uniform on the support box / model.
    Uniform,
}

/// Piecewise-constant sampler over a chart box with density proportional to
/// a given weight field.
struct GridSampler {
    lo: Vec<f64>,
    steps: Vec<f64>,
    cells_per_dim: usize,
    cdf: Vec<f64>,
    densities: Vec<f64>,
    dim: usize,
}

impl GridSampler {
    fn build(
        lo: &[f64],
        hi: &[f64],
        weight: &dyn Fn(&Point) -> f64,
        cells_per_dim: usize,
    ) -> Result<Self> {
        let dim = lo.len();
        let steps: Vec<f64> = (0..dim)
            .map(|i| (hi[i] - lo[i]) / cells_per_dim as f64)
            .collect();
        let cell_vol: f64 = steps.iter().product();
        let n_cells = cells_per_dim.pow(dim as u32);
        let mut masses = Vec::with_capacity(n_cells);
        let mut coords = vec![0usize; dim];
        for idx in 0..n_cells {
            let mut rem = idx;
            for c in coords.iter_mut() {
                *c = rem % cells_per_dim;
                rem /= cells_per_dim;
            }
            let center: Vec<f64> = (0..dim)
                .map(|i| lo[i] + (coords[i] as f64 + 0.5) * steps[i])
                .collect();
            let w = weight(&Point::new(&center)).max(0.0);
            masses.push(w * cell_vol);
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain(
                "importance sampler: the target section has zero mass on its support".into(),
            ));
        }
        let mut cdf = Vec::with_capacity(n_cells);
        let mut acc = 0.0;
        for m in &masses {
            acc += m / total;
            cdf.push(acc);
        }
        let densities: Vec<f64> = masses.iter().map(|m| m / (total * cell_vol)).collect();
        Ok(GridSampler {
            lo: lo.to_vec(),
            steps,
            cells_per_dim,
            cdf,
            densities,
            dim,
        })
    }

    /// Draws a point; returns it with its density w.r.t. the chart volume.
    fn sample(&self, rng: &mut ChaCha8Rng) -> (Point, f64) {
        let u: f64 = rng.gen();
        let cell = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        let mut rem = cell;
        let mut coords = vec![0.0; self.dim];
        for i in 0..self.dim {
            let ci = rem % self.cells_per_dim;
            rem /= self.cells_per_dim;
            coords[i] = self.lo[i] + (ci as f64 + rng.gen::<f64>()) * self.steps[i];
        }
        (Point::new(&coords), self.densities[cell])
    }
}

fn support_box(model: &ManifoldModel, region: &SupportRegion) -> Result<(Vec<f64>, Vec<f64>)> {
    match region {
        SupportRegion::ChartBox { lo, hi } => Ok((lo.clone(), hi.clone())),
        SupportRegion::FullModel => match model.kind() {
            ModelKind::Circle { length } => Ok((vec![0.0], vec![*length])),
            ModelKind::FlatTorus { lengths } => {
                Ok((vec![0.0; lengths.len()], lengths.clone()))
            }
            ModelKind::IntervalAbsorbing { length } => Ok((vec![0.0], vec![*length])),
            _ => Err(Error::Domain(
                "matrix elements need a compact chart or a declared support box".into(),
            )),
        },
    }
}

#[derive(Debug, Clone)]
pub struct MatrixElementEstimate {
    pub value: Complex64,
    pub stderr: f64,
    pub paths_used: u64,
    pub clamped_fraction: f64,
    pub t: f64,
}

impl MatrixElementEstimate {
    pub fn record(&self) -> serde_json::Value {
        json!({
            "value": [self.value.re, self.value.im],
            "stderr": self.stderr,
            "paths": self.paths_used,
            "t": self.t,
            "clamped_fraction": self.clamped_fraction,
        })
    }
}

/// Estimates `<e^{-tH_V} f1, f2>` by drawing starting points on the support
/// of `f2` (importance-corrected) and averaging the fiber inner product
/// `(Y_t tau_t^* f1(B_t), f2(x_0)) / q(x_0)`.
pub fn estimate_matrix_element(
    model: &ManifoldModel,
    spec: &BundleSpec,
    v: &PotentialField,
    f1: &SectionField,
    f2: &SectionField,
    t: f64,
    n_paths: u64,
    cfg: &SamplerConfig,
    sampling: StartSampling,
) -> Result<MatrixElementEstimate> {
    if n_paths < 100 {
        return Err(Error::Domain(
            "matrix element estimate needs >= 100 paths".into(),
        ));
    }
    if matches!(
        model.kind(),
        ModelKind::Sphere2 { .. } | ModelKind::Hyperbolic3
    ) {
        return Err(Error::Domain(
            "matrix elements are implemented on flat-chart models".into(),
        ));
    }
    let (lo, hi) = support_box(model, f2.support())?;
    let cells = match lo.len() {
        1 => 4096,
        2 => 128,
        _ => 48,
    };
    let sampler = match sampling {
        StartSampling::WeightedByTarget => {
            GridSampler::build(&lo, &hi, &|x| f2.norm_sq_at(x), cells)?
        }
        StartSampling::Uniform => GridSampler::build(&lo, &hi, &|_| 1.0, cells)?,
    };
    let rank = spec.rank();
    let results: Result<Vec<(Complex64, u32, u32)>> = (0..n_paths)
        .into_par_iter()
        .map(|j| {
            let mut rng = path_rng(cfg.seed, j);
            let (x0, q) = sampler.sample(&mut rng);
            let outcome = run_path(model, spec, v, f1, t, &x0, cfg.dt, &mut rng, j)?;
            let f2v = f2.eval_at(&x0);
            let mut inner = Complex64::new(0.0, 0.0);
            for i in 0..rank {
                inner += outcome.vec[i] * f2v[i].conj();
            }
            Ok((inner / q, outcome.clamped, outcome.nodes))
        })
        .collect();
    let results = results?;
    let vals: Vec<Complex64> = results.iter().map(|r| r.0).collect();
    let mean = pairwise_sum_complex(&vals) / n_paths as f64;
    let var: f64 = vals.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>()
        / (n_paths as f64 - 1.0);
    let clamped: u64 = results.iter().map(|r| r.1 as u64).sum();
    let nodes: u64 = results.iter().map(|r| r.2 as u64).sum::<u64>().max(1);
    Ok(MatrixElementEstimate {
        value: mean,
        stderr: (var / n_paths as f64).sqrt(),
        paths_used: n_paths,
        clamped_fraction: clamped as f64 / nodes as f64,
        t,
    })
}

/// Cauchy-Schwarz majorant for `sup_region |e^{-tH_V} f|`:
/// `max_x sqrt(E[1_{t<zeta} e^{2 int v2(B_s) ds}]) * sqrt(int |f|^2 p(t,x,.)
/// dvol)`, first factor by Monte Carlo, second by quadrature.
pub fn local_sup_certificate(
    model: &ManifoldModel,
    spec: &BundleSpec,
    v: &PotentialField,
    f: &SectionField,
    t: f64,
    region: &[Point],
    n_paths: u64,
    cfg: &SamplerConfig,
) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::Domain("certificate needs a nonempty region".into()));
    }
    let _ = spec;
    let mut best = 0.0_f64;
    for x in region {
        // factor 1: exponential moment of 2 int v2 along paths from x
        let samples: Result<Vec<f64>> = (0..n_paths)
            .into_par_iter()
            .map(|j| {
                let mut rng = path_rng(cfg.seed, j);
                let mut acc = 0.0;
                let mut prev = 0.0;
                let mut alive = true;
                walk_path_with_rng(model, x, t, cfg.dt, &mut rng, |ev| {
                    let v2 = v.v2_bound_at(&ev.point);
                    if ev.index > 0 && ev.alive {
                        acc += 0.5 * ev.dt * (prev + v2);
                    }
                    prev = v2;
                    alive = ev.alive;
                })?;
                if !alive {
                    return Ok(0.0);
                }
                if 2.0 * acc > 700.0 {
                    return Err(Error::Overflow {
                        path_index: j,
                        msg: "certificate exponential moment overflows".into(),
                    });
                }
                Ok((2.0 * acc).exp())
            })
            .collect();
        let samples = samples?;
        let moment = pairwise_sum_f64(&samples) / n_paths as f64;

        // factor 2: int |f|^2 p(t, x, .) dvol over the support
        let mass = match f.support() {
            SupportRegion::FullModel if model.is_compact() => integrate_model(
                model,
                &|y| f.norm_sq_at(y) * model.heat_kernel(t, x, y).unwrap_or(0.0),
                1e-8,
            )?,
            SupportRegion::FullModel
                if matches!(model.kind(), ModelKind::IntervalAbsorbing { .. }) =>
            {
                integrate_model(
                    model,
                    &|y| f.norm_sq_at(y) * model.heat_kernel(t, x, y).unwrap_or(0.0),
                    1e-8,
                )?
            }
            SupportRegion::ChartBox { lo, hi } if lo.len() == 1 => adaptive_simpson(
                &|c| {
                    let y = Point::from_scalar(c);
                    f.norm_sq_at(&y) * model.heat_kernel(t, x, &y).unwrap_or(0.0)
                },
                lo[0],
                hi[0],
                1e-10,
            )?,
            SupportRegion::ChartBox { lo, hi } => {
                crate::geometry::quadrature::integrate_chart_box(
                    model,
                    lo,
                    hi,
                    &|y| f.norm_sq_at(y) * model.heat_kernel(t, x, y).unwrap_or(0.0),
                    1e-8,
                )?
            }
            _ => {
                return Err(Error::Domain(
                    "certificate needs a compact model or a declared support box".into(),
                ))
            }
        };
        best = best.max(moment.sqrt() * mass.max(0.0).sqrt());
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct EnergyEstimate {
    pub e0: f64,
    pub stderr: f64,
    /// per-time matrix elements underlying the fit
    pub table: Vec<(f64, f64, f64)>,
    pub window: usize,
}

impl EnergyEstimate {
    pub fn record(&self) -> serde_json::Value {
        json!({
            "e0": self.e0,
            "stderr": self.stderr,
            "window": self.window,
            "table": self.table.iter().map(|(t, m, se)| json!({"t": t, "m": m, "stderr": se})).collect::<Vec<_>>(),
        })
    }
}

/// Extracts a ground-energy approximant as the weighted-least-squares slope
/// of `-log <f, e^{-tH_V} f>` over the largest `window` grid times.
#[allow(clippy::too_many_arguments)]
pub fn ground_energy(
    model: &ManifoldModel,
    spec: &BundleSpec,
    v: &PotentialField,
    f: &SectionField,
    t_grid: &[f64],
    n_paths: u64,
    cfg: &SamplerConfig,
    window: usize,
) -> Result<EnergyEstimate> {
    if t_grid.len() < 3 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(
            "energy extraction needs >= 3 increasing times".into(),
        ));
    }
    let window = window.max(2).min(t_grid.len());
    let mut table = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        let cfg_i = SamplerConfig {
            seed: cfg.seed.wrapping_add(7919 * i as u64),
            ..*cfg
        };
        let est = estimate_matrix_element(
            model,
            spec,
            v,
            f,
            f,
            t,
            n_paths,
            &cfg_i,
            StartSampling::WeightedByTarget,
        )?;
        table.push((t, est.value.re, est.stderr));
    }
    // weighted least squares on log m over the fit window
    let tail = &table[table.len() - window..];
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    for &(t, m, se) in tail {
        if !(m > 0.0) {
            return Err(Error::Fit(format!(
                "matrix element {m} at t = {t} is not positive; cannot take logs"
            )));
        }
        let y = m.ln();
        let var = (se / m).powi(2).max(1e-300);
        let w = 1.0 / var;
        sw += w;
        swx += w * t;
        swy += w * y;
        swxx += w * t * t;
        swxy += w * t * y;
    }
    let denom = sw * swxx - swx * swx;
    if denom <= 0.0 {
        return Err(Error::Fit("degenerate time grid for the energy fit".into()));
    }
    let slope = (sw * swxy - swx * swy) / denom;
    let slope_var = sw / denom;
    Ok(EnergyEstimate {
        e0: -slope,
        stderr: slope_var.sqrt(),
        table,
        window,
    })
}
