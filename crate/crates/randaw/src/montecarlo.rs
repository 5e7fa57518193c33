//! Simulation-based checks of certified designs: ℒ₂ gain, reachable-set
//! containment and domain-of-attraction convergence.

use rand::Rng;
use rand_distr::StandardNormal;
use randaw_core::antiwindup::{AntiWindupGain, ClosedLoopModel, SaturationLimits};
use randaw_core::scenario::ParallelMap;
use randaw_core::sim::{l2_norm, shaped_disturbance, simulate, SaturatedLoop, Signal, SimError};
use randaw_core::{Mat, Vector};
use serde::{Deserialize, Serialize};

use crate::sampler::{stream_rng, Purpose};

/// Slowest and fastest closed-loop time constants, taken over the
/// unsaturated loop and the loop with every input saturated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeScales {
    pub slow: f64,
    pub fast: f64,
}

impl TimeScales {
    pub fn of(cl: &ClosedLoopModel, gain: &AntiWindupGain) -> Self {
        let (b_q, d_uq, _) = cl.with_gain(gain);
        let n_u = cl.n_u();
        let mut mats = vec![cl.a.clone()];
        if let Some(inv) = (Mat::identity(n_u, n_u) - &d_uq).try_inverse() {
            mats.push(&cl.a + &b_q * inv * &cl.c_u);
        }
        let rates: Vec<f64> = mats
            .iter()
            .flat_map(|m| m.complex_eigenvalues().iter().map(|l| l.re.hypot(l.im)).collect::<Vec<_>>())
            .filter(|r| *r > 1e-9)
            .collect();
        // Decay rates of the unsaturated loop set the slow scale.
        let slow_rate =
            cl.a.complex_eigenvalues().iter().map(|l| -l.re).filter(|r| *r > 1e-9).fold(f64::INFINITY, f64::min);
        let fast_rate = rates.iter().copied().fold(0.0, f64::max);
        Self {
            slow: if slow_rate.is_finite() { 1.0 / slow_rate } else { 1.0 },
            fast: if fast_rate > 0.0 { 1.0 / fast_rate } else { 1.0 },
        }
    }

    /// RK4 step resolving the fastest mode, capped at 10 ms.
    pub fn step(&self) -> f64 {
        let dt = 0.05 * self.fast;
        let dt = if dt > 1e-2 { 1e-2 } else { dt };
        // Round down to a value with a short decimal expansion.
        let e = 10f64.powf(dt.log10().floor());
        let m = (dt / e).floor().max(1.0);
        m * e
    }
}

/// Random bounded-energy inputs: Gaussian levels held for `hold` seconds,
/// smoothed by a first-order lag with time constant `tau`, active for
/// `active` seconds and zero afterwards until `horizon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceShape {
    pub active: f64,
    pub hold: f64,
    pub tau: f64,
    pub horizon: f64,
    pub dt: f64,
}

impl DisturbanceShape {
    /// Inputs acting for five slow time constants, observed for twenty.
    pub fn for_loop(ts: &TimeScales) -> Self {
        Self { active: 5.0 * ts.slow, hold: 0.5 * ts.slow, tau: 0.1 * ts.slow, horizon: 20.0 * ts.slow, dt: ts.step() }
    }

    fn steps(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }

    /// A shaped random input with ℒ₂ norm `target`.
    pub fn random(&self, rng: &mut impl Rng, n_w: usize, target: f64) -> Result<Signal, SimError> {
        let hold = self.steps(self.hold).max(1);
        let active = self.steps(self.active).max(1);
        let n_levels = active.div_ceil(hold);
        let levels: Vec<Vector> =
            (0..n_levels).map(|_| Vector::from_fn(n_w, |_, _| rng.sample(StandardNormal))).collect();
        let shaped = shaped_disturbance(&levels, hold, self.tau, self.dt, active, target)?;
        Ok(self.pad(shaped, target))
    }

    /// A rectangular pulse of random width and direction with ℒ₂ norm
    /// `target`.
    pub fn pulse(&self, rng: &mut impl Rng, n_w: usize, target: f64) -> Result<Signal, SimError> {
        let active = self.steps(self.active).max(2);
        let width = rng.random_range(2..=active);
        let mut dir = Vector::from_fn(n_w, |_, _| rng.sample::<f64, _>(StandardNormal));
        if dir.norm() == 0.0 {
            dir[0] = 1.0;
        }
        let dir = dir.normalize();
        let values: Vec<Vector> = (0..width).map(|_| dir.clone()).collect();
        Ok(self.pad(Signal::new(self.dt, values)?, target))
    }

    /// Appends zeros up to the horizon (plus one sample for interpolation)
    /// and rescales to ℒ₂ norm `target`.
    fn pad(&self, sig: Signal, target: f64) -> Signal {
        let n_total = self.steps(self.horizon) + 2;
        let width = sig.width();
        let mut values = sig.values().to_vec();
        values.resize(n_total.max(values.len()), Vector::zeros(width));
        let padded = Signal::new(self.dt, values).expect("padding keeps a valid signal");
        let norm = l2_norm(&padded);
        if norm > 0.0 {
            padded.scaled(target / norm)
        } else {
            padded
        }
    }
}

fn sample_for(samples: &[ClosedLoopModel], trial: usize) -> &ClosedLoopModel {
    &samples[trial % samples.len()]
}

// ---------------------------------------------------------------------------
// ℒ₂ gain

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainTrial {
    pub trial: usize,
    pub sample: usize,
    pub l2_w: f64,
    pub l2_z: f64,
    pub ratio: f64,
    pub violated: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainCheckReport {
    pub gamma: f64,
    pub s: f64,
    pub trials: Vec<GainTrial>,
}

impl GainCheckReport {
    pub fn violations(&self) -> usize {
        self.trials.iter().filter(|t| t.violated).count()
    }

    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.error.is_some()).count()
    }

    pub fn violation_fraction(&self) -> f64 {
        if self.trials.is_empty() {
            0.0
        } else {
            self.violations() as f64 / self.trials.len() as f64
        }
    }

    pub fn max_ratio(&self) -> f64 {
        self.trials.iter().map(|t| t.ratio).filter(|r| r.is_finite()).fold(0.0, f64::max)
    }
}

/// Relative slack for comparing simulated norms, covering trapezoid and RK4
/// discretization error.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct McSettings {
    pub seed: u64,
    pub trials: usize,
    /// `None` picks a shape from the first sample's time scales.
    pub shape: Option<DisturbanceShape>,
}

/// Simulates `trials` zero-state responses to random inputs with
/// `0 < ‖w‖₂ ≤ s`, trial `i` using `samples[i mod len]`, and counts
/// violations of `‖z‖₂ ≤ γ ‖w‖₂`.
pub fn gain_check<M: ParallelMap>(
    samples: &[ClosedLoopModel],
    gain: &AntiWindupGain,
    limits: &SaturationLimits,
    gamma: f64,
    s: f64,
    settings: &McSettings,
    par: &M,
) -> GainCheckReport {
    assert!(!samples.is_empty(), "gain_check needs at least one sample");
    let shape = settings.shape.unwrap_or_else(|| DisturbanceShape::for_loop(&TimeScales::of(&samples[0], gain)));
    let trials = par.map_indexed(settings.trials, |trial| {
        let sample = trial % samples.len();
        let mut rng = stream_rng(settings.seed, Purpose::Disturbance, trial as u64);
        let target = s * (1.0 - rng.random::<f64>());
        let mut run = || -> Result<(f64, f64), SimError> {
            let w = if trial % 4 == 3 {
                shape.pulse(&mut rng, samples[sample].n_w(), target)?
            } else {
                shape.random(&mut rng, samples[sample].n_w(), target)?
            };
            let lp = SaturatedLoop::new(sample_for(samples, trial), gain, limits)?;
            let res = simulate(&lp, &w, &Vector::zeros(lp.n_x()), shape.horizon, shape.dt)?;
            Ok((res.l2_w, res.l2_z))
        };
        match run() {
            Ok((l2_w, l2_z)) => {
                let ratio = if l2_w > 0.0 { l2_z / l2_w } else { 0.0 };
                let violated = gamma.is_finite() && l2_z > gamma * l2_w * (1.0 + NORM_TOLERANCE);
                GainTrial { trial, sample, l2_w, l2_z, ratio, violated, error: None }
            }
            Err(e) => GainTrial {
                trial,
                sample,
                l2_w: f64::NAN,
                l2_z: f64::NAN,
                ratio: f64::NAN,
                violated: gamma.is_finite(),
                error: Some(e.to_string()),
            },
        }
    });
    GainCheckReport { gamma, s, trials }
}

// ---------------------------------------------------------------------------
// Reachable set

/// Inverse of a symmetric positive definite matrix, or `None`.
fn spd_inverse(q: &Mat) -> Option<Mat> {
    q.clone().cholesky().map(|c| c.inverse())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReachSample {
    pub sample: usize,
    /// Largest `xᵀQ̄⁻¹x` over all trajectories of this sample.
    pub max_form: f64,
    pub contained: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReachCloudReport {
    pub s: f64,
    pub inputs_per_sample: usize,
    pub samples: Vec<ReachSample>,
    /// Subsampled state trajectories `(sample, input, states)` when requested.
    #[serde(skip)]
    pub clouds: Vec<(usize, usize, Vec<Vector>)>,
}

impl ReachCloudReport {
    pub fn failures(&self) -> usize {
        self.samples.iter().filter(|s| !s.contained).count()
    }

    pub fn max_form(&self) -> f64 {
        self.samples.iter().map(|s| s.max_form).fold(0.0, f64::max)
    }
}

/// Inputs that drive the linear part of the loop furthest along `Q̄⁻¹`: for
/// `ẋ = A x + B w` over `[0, T]` the energy-`s` input reaching `x_f` is
/// `w(t) = Bᵀ e^{Aᵀ(T-t)} W⁻¹ x_f`. The end points are the extreme directions
/// of the controllability ellipsoid measured by `Q̄⁻¹`.
fn extremal_inputs(cl: &ClosedLoopModel, qbar_inv: &Mat, shape: &DisturbanceShape, s: f64) -> Vec<Signal> {
    let n = cl.n_x();
    let steps = (shape.active / shape.dt).round() as usize;
    let dt = shape.dt;
    // Transition over one step via RK4 on the matrix ODE.
    let phi_step = {
        let a = &cl.a;
        let i = Mat::identity(n, n);
        let a2 = a * a;
        let a3 = &a2 * a;
        let a4 = &a3 * a;
        i + a * dt + a2 * (dt * dt / 2.0) + a3 * (dt.powi(3) / 6.0) + a4 * (dt.powi(4) / 24.0)
    };
    // Φ(T - t_k) for every grid time, built backwards.
    let mut phis = vec![Mat::identity(n, n); steps + 1];
    for k in (0..steps).rev() {
        phis[k] = &phis[k + 1] * &phi_step;
    }
    let bw = &cl.b_w;
    let mut gram = Mat::zeros(n, n);
    for (k, p) in phis.iter().enumerate() {
        let weight = if k == 0 || k == steps { 0.5 } else { 1.0 };
        let pb = p * bw;
        gram += &pb * pb.transpose() * (weight * dt);
    }
    let Some(l) = gram.clone().cholesky().map(|c| c.l()) else {
        return Vec::new();
    };
    // Directions d maximizing dᵀ Lᵀ Q̄⁻¹ L d.
    let m = l.transpose() * qbar_inv * &l;
    let eig = m.symmetric_eigen();
    let mut out = Vec::new();
    for j in 0..n {
        let d = eig.eigenvectors.column(j).into_owned();
        for sign in [1.0, -1.0] {
            let x_f = &l * &d * (sign * s);
            let Some(g) = gram.clone().cholesky().map(|c| c.solve(&x_f)) else { continue };
            let values: Vec<Vector> = phis.iter().map(|p| bw.transpose() * p.transpose() * &g).collect();
            if let Ok(sig) = Signal::new(dt, values) {
                out.push(shape.pad(sig, s));
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct ReachSettings {
    pub seed: u64,
    /// Random inputs per sample, on top of the extremal ones.
    pub random_inputs: usize,
    pub shape: Option<DisturbanceShape>,
    /// Keep every `k`-th state of each trajectory for plotting.
    pub cloud_stride: Option<usize>,
}

/// Largest `xᵀQ̄⁻¹x` of one sample and its stored trajectory pieces
/// `(input, start step, states)`.
type CloudRun = (f64, Vec<(usize, usize, Vec<Vector>)>);

/// Simulates zero-state responses of every sample to inputs with
/// `‖w‖₂ = s` and checks `xᵀQ̄⁻¹x ≤ 1` along the trajectories. A sample fails
/// when any of its trajectories leaves the ellipsoid.
pub fn reach_cloud<M: ParallelMap>(
    samples: &[ClosedLoopModel],
    gain: &AntiWindupGain,
    limits: &SaturationLimits,
    qbar: &Mat,
    s: f64,
    settings: &ReachSettings,
    par: &M,
) -> ReachCloudReport {
    let qbar_inv = spd_inverse(qbar).unwrap_or_else(|| Mat::from_element(qbar.nrows(), qbar.ncols(), f64::INFINITY));
    let results = par.map_indexed(samples.len(), |i| {
        let cl = &samples[i];
        let shape = settings.shape.unwrap_or_else(|| DisturbanceShape::for_loop(&TimeScales::of(cl, gain)));
        let mut rng = stream_rng(settings.seed, Purpose::Disturbance, i as u64);
        let mut run = || -> Result<CloudRun, SimError> {
            let lp = SaturatedLoop::new(cl, gain, limits)?;
            let mut inputs = extremal_inputs(cl, &qbar_inv, &shape, s);
            for k in 0..settings.random_inputs {
                inputs.push(if k % 2 == 0 {
                    shape.random(&mut rng, cl.n_w(), s)?
                } else {
                    shape.pulse(&mut rng, cl.n_w(), s)?
                });
            }
            let mut max_form = 0.0f64;
            let mut clouds = Vec::new();
            for (j, w) in inputs.iter().enumerate() {
                let res = simulate(&lp, w, &Vector::zeros(lp.n_x()), shape.horizon, shape.dt)?;
                for x in res.x.values() {
                    max_form = max_form.max((x.transpose() * &qbar_inv * x)[(0, 0)]);
                }
                if let Some(stride) = settings.cloud_stride {
                    clouds.push((i, j, res.x.values().iter().step_by(stride.max(1)).cloned().collect()));
                }
            }
            Ok((max_form, clouds))
        };
        match run() {
            Ok((max_form, clouds)) => {
                (ReachSample { sample: i, max_form, contained: max_form <= 1.0 + NORM_TOLERANCE, error: None }, clouds)
            }
            Err(e) => (
                ReachSample { sample: i, max_form: f64::INFINITY, contained: false, error: Some(e.to_string()) },
                Vec::new(),
            ),
        }
    });
    let inputs_per_sample = 2 * qbar.nrows() + settings.random_inputs;
    let mut report = ReachCloudReport { s, inputs_per_sample, samples: Vec::new(), clouds: Vec::new() };
    for (sample, clouds) in results {
        report.samples.push(sample);
        report.clouds.extend(clouds);
    }
    report
}

// ---------------------------------------------------------------------------
// Domain of attraction

/// Points `x` with `xᵀQ̄⁻¹x = 1`. In two dimensions these are evenly spaced in
/// angle; otherwise random directions from `seed`.
pub fn boundary_points(qbar: &Mat, count: usize, seed: u64) -> Vec<Vector> {
    let n = qbar.nrows();
    let Some(l) = qbar.clone().cholesky().map(|c| c.l()) else {
        return Vec::new();
    };
    let mut rng = stream_rng(seed, Purpose::InitialState, 0);
    (0..count)
        .map(|k| {
            let d = if n == 2 {
                let th = std::f64::consts::TAU * k as f64 / count as f64;
                Vector::from_vec(vec![th.cos(), th.sin()])
            } else {
                let v = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                if v.norm() == 0.0 {
                    Vector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 })
                } else {
                    v.normalize()
                }
            };
            &l * d
        })
        .collect()
}

/// Projection of `{x: xᵀQ̄⁻¹x ≤ 1}` on the `(i, j)` coordinate plane as a
/// closed polyline of `points` vertices.
pub fn ellipse_boundary(qbar: &Mat, i: usize, j: usize, points: usize) -> Vec<(f64, f64)> {
    let sub = Mat::from_row_slice(2, 2, &[qbar[(i, i)], qbar[(i, j)], qbar[(j, i)], qbar[(j, j)]]);
    let Some(l) = sub.cholesky().map(|c| c.l()) else {
        return Vec::new();
    };
    (0..points)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / points as f64;
            let p = &l * Vector::from_vec(vec![th.cos(), th.sin()]);
            (p[0], p[1])
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoaTrial {
    pub sample: usize,
    pub point: usize,
    pub final_ratio: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoaProbeReport {
    pub t_end: f64,
    pub trials: Vec<DoaTrial>,
}

impl DoaProbeReport {
    pub fn convergence_fraction(&self) -> f64 {
        if self.trials.is_empty() {
            return 1.0;
        }
        self.trials.iter().filter(|t| t.converged).count() as f64 / self.trials.len() as f64
    }
}

/// Relative state norm below which a trajectory counts as converged.
pub const CONVERGENCE_RATIO: f64 = 1e-4;

/// Releases every sample from every point with `w ≡ 0` and checks
/// `|x(t_end)| < 10⁻⁴ |x(0)|`. Without an explicit `t_end` the horizon is 50
/// slow time constants of each sample.
pub fn doa_probe<M: ParallelMap>(
    samples: &[ClosedLoopModel],
    gain: &AntiWindupGain,
    limits: &SaturationLimits,
    points: &[Vector],
    t_end: Option<f64>,
    par: &M,
) -> DoaProbeReport {
    let n_pts = points.len();
    let cases = samples.len() * n_pts;
    let trials = par.map_indexed(cases, |c| {
        let (sample, point) = (c / n_pts, c % n_pts);
        let cl = &samples[sample];
        let x0 = &points[point];
        let ts = TimeScales::of(cl, gain);
        let t = t_end.unwrap_or(50.0 * ts.slow);
        let run = || -> Result<f64, SimError> {
            let lp = SaturatedLoop::new(cl, gain, limits)?;
            let n = (t / ts.step()).round() as usize + 2;
            let w = Signal::zeros(ts.step(), n, cl.n_w())?;
            let res = simulate(&lp, &w, x0, t, ts.step())?;
            let last = res.x.values().last().expect("simulation records the initial state");
            Ok(if x0.norm() == 0.0 { 0.0 } else { last.norm() / x0.norm() })
        };
        match run() {
            Ok(r) => DoaTrial { sample, point, final_ratio: r, converged: r < CONVERGENCE_RATIO, error: None },
            Err(e) => DoaTrial { sample, point, final_ratio: f64::NAN, converged: false, error: Some(e.to_string()) },
        }
    });
    let horizon = t_end.or_else(|| samples.first().map(|cl| 50.0 * TimeScales::of(cl, gain).slow)).unwrap_or(0.0);
    DoaProbeReport { t_end: horizon, trials }
}
