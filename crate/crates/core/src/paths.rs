//! Brownian paths on model manifolds by fixed-step geodesic random walk,
//! with lifetime tracking on the absorbing interval and stochastic parallel
//! transport along sampled paths.
//!
//! Reproducibility contract: the random stream of path `j` is derived from
//! `(seed, j)` through a counter-based generator, so results are identical
//! for any worker count and scheduling order.

use crate::bundle::BundleSpec;
use crate::error::{Error, Result};
use crate::geometry::{ManifoldModel, ModelKind, Point};
use crate::linalg::CMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    GeodesicWalk,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SamplerConfig {
    pub fn new(dt: f64, seed: u64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        SamplerConfig {
            dt,
            seed,
            scheme: Scheme::GeodesicWalk,
        }
    }
}

/// Independent deterministic stream for one path.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// One node of a streamed walk.
#[derive(Debug, Clone, Copy)]
pub struct StepEvent {
    pub index: usize,
    pub time: f64,
    pub point: Point,
    pub prev: Point,
    /// tangent drawn for the step into this node (chart-frame coordinates)
    pub step: [f64; 3],
    /// time step into this node; 0 at the starting node
    pub dt: f64,
    pub alive: bool,
}

/// Streams the geodesic random walk without materializing the path.
/// The visitor sees the starting node first (index 0, dt 0); on absorption
/// the exit node is delivered with `alive = false` and the walk stops.
/// Returns whether the path survived to time `t`.
pub fn walk_path(
    model: &ManifoldModel,
    x: &Point,
    t: f64,
    cfg: &SamplerConfig,
    path_index: u64,
    visit: impl FnMut(&StepEvent),
) -> Result<bool> {
    let mut rng = path_rng(cfg.seed, path_index);
    walk_path_with_rng(model, x, t, cfg.dt, &mut rng, visit)
}

/// Same walk, driven by an externally positioned stream (used when other
/// per-path draws, e.g. importance-sampled starting points, must share the
/// path's stream).
pub fn walk_path_with_rng(
    model: &ManifoldModel,
    x: &Point,
    t: f64,
    dt: f64,
    rng: &mut ChaCha8Rng,
    mut visit: impl FnMut(&StepEvent),
) -> Result<bool> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("walk needs t > 0, got {t}")));
    }
    model.validate_point(x)?;
    let n_steps = (t / dt - 1e-9).ceil().max(1.0) as usize;
    let dim = model.dim();
    let absorbing = !model.is_stochastically_complete();
    let length = match model.kind() {
        ModelKind::IntervalAbsorbing { length } => *length,
        _ => f64::INFINITY,
    };

    let mut current = *x;
    visit(&StepEvent {
        index: 0,
        time: 0.0,
        point: current,
        prev: current,
        step: [0.0; 3],
        dt: 0.0,
        alive: true,
    });
    let mut v = [0.0_f64; 3];
    for i in 0..n_steps {
        let t_prev = i as f64 * dt;
        let t_next = if i + 1 == n_steps { t } else { (i + 1) as f64 * dt };
        let step_dt = t_next - t_prev;
        let sigma = step_dt.sqrt();
        for item in v.iter_mut().take(dim) {
            let g: f64 = rng.sample(StandardNormal);
            *item = sigma * g;
        }
        let next = model.exp_map_raw(&current, &v[..dim]);
        if absorbing {
            let c = next.coords()[0];
            if c <= 0.0 || c >= length {
                visit(&StepEvent {
                    index: i + 1,
                    time: t_next,
                    point: next,
                    prev: current,
                    step: v,
                    dt: step_dt,
                    alive: false,
                });
                return Ok(false);
            }
        }
        visit(&StepEvent {
            index: i + 1,
            time: t_next,
            point: next,
            prev: current,
            step: v,
            dt: step_dt,
            alive: true,
        });
        current = next;
    }
    Ok(true)
}

/// Materialized Brownian path: uniform grid (last step possibly shorter),
/// survival flag and, once attached, per-node cumulative parallel transports.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub model: ManifoldModel,
    pub path_index: u64,
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub alive: bool,
    /// index of the first absorbed step if `alive` is false
    pub exit_index: Option<usize>,
    /// cumulative transports tau_i : E_{x_0} -> E_{x_i}; tau_0 = 1
    pub transports: Option<Vec<CMatrix>>,
}

impl PathSample {
    /// Builds a path from externally supplied nodes (refinement studies and
    /// tests); the nodes are trusted to lie on the model.
    pub fn from_nodes(model: ManifoldModel, times: Vec<f64>, points: Vec<Point>) -> Self {
        assert_eq!(times.len(), points.len());
        PathSample {
            model,
            path_index: 0,
            times,
            points,
            alive: true,
            exit_index: None,
            transports: None,
        }
    }

    pub fn final_point(&self) -> &Point {
        self.points.last().expect("path has at least one node")
    }

    pub fn final_transport(&self) -> Option<&CMatrix> {
        self.transports.as_ref().and_then(|t| t.last())
    }
}

/// Samples one path on the model's grid; deterministic in
/// `(cfg.seed, path_index)`.
pub fn sample_path(
    model: &ManifoldModel,
    x: &Point,
    t: f64,
    cfg: &SamplerConfig,
    path_index: u64,
) -> Result<PathSample> {
    let mut times = Vec::new();
    let mut points = Vec::new();
    let mut exit_index = None;
    let alive = walk_path(model, x, t, cfg, path_index, |ev| {
        times.push(ev.time);
        points.push(ev.point);
        if !ev.alive {
            exit_index = Some(ev.index);
        }
    })?;
    Ok(PathSample {
        model: model.clone(),
        path_index,
        times,
        points,
        alive,
        exit_index,
        transports: None,
    })
}

/// Fills the cumulative stochastic parallel transports along the path by
/// composing single-segment transports; `tau^{-1} = tau^*` pathwise.
pub fn attach_transport(mut path: PathSample, spec: &BundleSpec) -> Result<PathSample> {
    if path.model != *spec.base() {
        return Err(Error::Contract(
            "path was sampled on a different base model".into(),
        ));
    }
    let mut taus = Vec::with_capacity(path.points.len());
    let mut tau = CMatrix::identity(spec.rank(), spec.rank());
    taus.push(tau.clone());
    let last = match path.exit_index {
        // no data is used beyond the absorbed node
        Some(exit) => exit.saturating_sub(1),
        None => path.points.len() - 1,
    };
    for i in 0..last {
        tau = spec.transport_segment(&path.points[i], &path.points[i + 1], &tau)?;
        taus.push(tau.clone());
    }
    path.transports = Some(taus);
    Ok(path)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SurvivalEstimate {
    pub value: f64,
    pub stderr: f64,
    pub paths: u64,
}

/// Monte Carlo estimate of `P(t < zeta(x))` with binomial standard error.
pub fn survival_probability(
    model: &ManifoldModel,
    x: &Point,
    t: f64,
    n_paths: u64,
    cfg: &SamplerConfig,
) -> Result<SurvivalEstimate> {
    if n_paths < 100 {
        return Err(Error::Domain("survival estimate needs >= 100 paths".into()));
    }
    use rayon::prelude::*;
    let alive: u64 = (0..n_paths)
        .into_par_iter()
        .map(|j| {
            let survived = walk_path(model, x, t, cfg, j, |_| {}).expect("valid walk inputs");
            u64::from(survived)
        })
        .sum();
    let p = alive as f64 / n_paths as f64;
    let stderr = (p * (1.0 - p) / n_paths as f64).sqrt();
    Ok(SurvivalEstimate {
        value: p,
        stderr,
        paths: n_paths,
    })
}

/// Binary debug dump. Per path: seed, path index (u64 LE), dt (f64 LE),
/// node count and chart dimension (u32 LE), then the node coordinates as
/// little-endian f64 in node order.
pub fn dump_paths(
    out: &mut impl Write,
    seed: u64,
    paths: &[PathSample],
    dt: f64,
) -> std::io::Result<()> {
    for p in paths {
        out.write_all(&seed.to_le_bytes())?;
        out.write_all(&p.path_index.to_le_bytes())?;
        out.write_all(&dt.to_le_bytes())?;
        out.write_all(&(p.points.len() as u32).to_le_bytes())?;
        let dim = p.points.first().map_or(0, |q| q.chart_dim()) as u32;
        out.write_all(&dim.to_le_bytes())?;
        for q in &p.points {
            for c in q.coords() {
                out.write_all(&c.to_le_bytes())?;
            }
        }
    }
    Ok(())
}
