//! Time-domain simulation of the saturated anti-windup loop.

use alloc::vec::Vec;

use crate::antiwindup::{AntiWindupGain, ClosedLoopModel, SaturationLimits};
use crate::{Mat, Vector};

/// Accepted residual of the algebraic loop, relative to `max(1, |c|)`.
pub const LOOP_TOLERANCE: f64 = 1e-10;
const MAX_LOOP_ITERATIONS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("{what}: expected length {expected}, found {found}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("algebraic loop u = c + M dz(u) is not well posed (residual {residual:e})")]
    IllPosedLoop { residual: f64 },
    #[error("algebraic loop failed at t = {time}: {source}")]
    LoopAt {
        time: f64,
        #[source]
        source: alloc::boxed::Box<SimError>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// `dz(u) = u - sat(u)` componentwise.
pub fn deadzone(u: &Vector, limits: &[f64]) -> Vector {
    Vector::from_iterator(u.len(), u.iter().zip(limits).map(|(v, ub)| v - v.clamp(-*ub, *ub)))
}

/// Solves `u = c + M dz(u)`.
///
/// A single input is solved exactly by checking the three deadzone branches;
/// in that case the loop is well posed iff `M < 1`. With several inputs the
/// fixed-point iteration is used, which converges whenever `‖M‖ < 1`.
pub fn solve_input_loop(c: &Vector, m: &Mat, limits: &[f64]) -> Result<Vector, SimError> {
    let n = c.len();
    if m.shape() != (n, n) {
        return Err(SimError::Dimension { what: "loop matrix M", expected: n, found: m.nrows() });
    }
    if limits.len() != n {
        return Err(SimError::Dimension { what: "saturation limits", expected: n, found: limits.len() });
    }
    let scale = c.amax().max(1.0);
    let residual = |u: &Vector| (u - c - m * deadzone(u, limits)).amax();
    if m.iter().all(|v| *v == 0.0) {
        return Ok(c.clone());
    }
    if n == 1 {
        let (c0, m0, ub) = (c[0], m[(0, 0)], limits[0]);
        if !(m0 < 1.0) {
            return Err(SimError::IllPosedLoop { residual: f64::INFINITY });
        }
        let u = if c0.abs() <= ub {
            c0
        } else if c0 > ub {
            // Upper branch: u = c + m (u - ū).
            (c0 - m0 * ub) / (1.0 - m0)
        } else {
            (c0 + m0 * ub) / (1.0 - m0)
        };
        let u = Vector::from_element(1, u);
        let r = residual(&u);
        if r > LOOP_TOLERANCE * scale {
            return Err(SimError::IllPosedLoop { residual: r });
        }
        return Ok(u);
    }
    let mut u = c.clone();
    for _ in 0..MAX_LOOP_ITERATIONS {
        let next = c + m * deadzone(&u, limits);
        let step = (&next - &u).amax();
        u = next;
        if step <= 0.1 * LOOP_TOLERANCE * scale {
            break;
        }
    }
    let r = residual(&u);
    if !(r <= LOOP_TOLERANCE * scale) {
        return Err(SimError::IllPosedLoop { residual: r });
    }
    Ok(u)
}

/// Uniformly sampled vector signal; sample `k` sits at `t = k·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    dt: f64,
    values: Vec<Vector>,
}

impl Signal {
    pub fn new(dt: f64, values: Vec<Vector>) -> Result<Self, SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::InvalidArgument("signal step must be positive"));
        }
        if let Some(first) = values.first() {
            if let Some(bad) = values.iter().find(|v| v.len() != first.len()) {
                return Err(SimError::Dimension { what: "signal sample", expected: first.len(), found: bad.len() });
            }
        }
        Ok(Self { dt, values })
    }

    /// Samples `f(k·dt)` for `k = 0..n`.
    pub fn from_fn(dt: f64, n: usize, f: impl Fn(f64) -> Vector) -> Result<Self, SimError> {
        Self::new(dt, (0..n).map(|k| f(k as f64 * dt)).collect())
    }

    pub fn zeros(dt: f64, n: usize, width: usize) -> Result<Self, SimError> {
        Self::new(dt, (0..n).map(|_| Vector::zeros(width)).collect())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    /// Time of the last sample.
    pub fn duration(&self) -> f64 {
        self.dt * self.values.len().saturating_sub(1) as f64
    }

    /// Linear interpolation, held constant past the last sample.
    pub fn at(&self, t: f64) -> Vector {
        let last = self.values.len() - 1;
        let pos = (t / self.dt).max(0.0);
        let k = libm::floor(pos) as usize;
        if k >= last {
            return self.values[last].clone();
        }
        let frac = pos - k as f64;
        &self.values[k] * (1.0 - frac) + &self.values[k + 1] * frac
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { dt: self.dt, values: self.values.iter().map(|v| v * k).collect() }
    }

    /// One column per entry.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }
}

/// `(∫ ‖x(t)‖² dt)^(1/2)` by the trapezoidal rule.
pub fn l2_norm(sig: &Signal) -> f64 {
    let sq: Vec<f64> = sig.values.iter().map(|v| v.norm_squared()).collect();
    if sq.len() < 2 {
        return 0.0;
    }
    let inner: f64 = sq[1..sq.len() - 1].iter().sum();
    libm::sqrt(sig.dt * (inner + 0.5 * (sq[0] + sq[sq.len() - 1])))
}

/// Trajectories of one simulation; sample `k` is at `t = k·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub x: Signal,
    pub u: Signal,
    /// Saturated input `sat(u) = u - dz(u)`.
    pub sigma: Signal,
    pub z: Signal,
    pub w: Signal,
    pub l2_w: f64,
    pub l2_z: f64,
    /// Largest algebraic-loop residual over all recorded samples.
    pub max_loop_residual: f64,
}

/// The anti-windup loop with a fixed gain, ready for integration.
#[derive(Clone, Debug)]
pub struct SaturatedLoop {
    cl: ClosedLoopModel,
    limits: Vec<f64>,
    b_q: Mat,
    d_uq: Mat,
    d_zq: Mat,
}

/// Algebraic variables at one time instant.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopOutputs {
    pub u: Vector,
    pub dz: Vector,
    pub z: Vector,
    pub x_dot: Vector,
}

impl SaturatedLoop {
    pub fn new(cl: &ClosedLoopModel, gain: &AntiWindupGain, limits: &SaturationLimits) -> Result<Self, SimError> {
        if gain.matrix().shape() != (cl.n_aw(), cl.n_u()) {
            return Err(SimError::Dimension {
                what: "anti-windup gain rows",
                expected: cl.n_aw(),
                found: gain.matrix().nrows(),
            });
        }
        if limits.len() != cl.n_u() {
            return Err(SimError::Dimension { what: "saturation limits", expected: cl.n_u(), found: limits.len() });
        }
        let (b_q, d_uq, d_zq) = cl.with_gain(gain);
        Ok(Self { cl: cl.clone(), limits: limits.values().to_vec(), b_q, d_uq, d_zq })
    }

    pub fn n_x(&self) -> usize {
        self.cl.n_x()
    }

    pub fn eval(&self, x: &Vector, w: &Vector) -> Result<LoopOutputs, SimError> {
        let c = &self.cl.c_u * x + &self.cl.d_uw * w;
        let u = solve_input_loop(&c, &self.d_uq, &self.limits)?;
        let dz = deadzone(&u, &self.limits);
        let x_dot = &self.cl.a * x + &self.b_q * &dz + &self.cl.b_w * w;
        let z = &self.cl.c_z * x + &self.d_zq * &dz + &self.cl.d_zw * w;
        Ok(LoopOutputs { u, dz, z, x_dot })
    }

    fn residual(&self, x: &Vector, w: &Vector, u: &Vector) -> f64 {
        let c = &self.cl.c_u * x + &self.cl.d_uw * w;
        (u - c - &self.d_uq * deadzone(u, &self.limits)).amax()
    }
}

/// Fixed-step RK4 from `x0` over `[0, t_end]`, solving the algebraic loop at
/// every stage. The disturbance is interpolated linearly between samples.
pub fn simulate(lp: &SaturatedLoop, w: &Signal, x0: &Vector, t_end: f64, dt: f64) -> Result<SimResult, SimError> {
    if !(dt > 0.0 && dt.is_finite() && t_end >= 0.0) {
        return Err(SimError::InvalidArgument("dt must be positive and t_end nonnegative"));
    }
    if w.is_empty() || w.width() != lp.cl.n_w() {
        return Err(SimError::Dimension { what: "disturbance width", expected: lp.cl.n_w(), found: w.width() });
    }
    if w.duration() + 0.5 * w.dt() < t_end {
        return Err(SimError::InvalidArgument("disturbance does not cover [0, t_end]"));
    }
    if x0.len() != lp.n_x() {
        return Err(SimError::Dimension { what: "initial state", expected: lp.n_x(), found: x0.len() });
    }
    let steps = libm::round(t_end / dt) as usize;
    let at = |time: f64, e: SimError| SimError::LoopAt { time, source: alloc::boxed::Box::new(e) };
    let f = |t: f64, x: &Vector| lp.eval(x, &w.at(t)).map_err(|e| at(t, e));

    let mut xs = Vec::with_capacity(steps + 1);
    let mut us = Vec::with_capacity(steps + 1);
    let mut sig = Vec::with_capacity(steps + 1);
    let mut zs = Vec::with_capacity(steps + 1);
    let mut ws = Vec::with_capacity(steps + 1);
    let mut max_res = 0.0f64;
    let mut x = x0.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        let wt = w.at(t);
        let out = f(t, &x)?;
        max_res = max_res.max(lp.residual(&x, &wt, &out.u));
        sig.push(&out.u - &out.dz);
        xs.push(x.clone());
        us.push(out.u);
        zs.push(out.z);
        ws.push(wt);
        if k == steps {
            break;
        }
        let k1 = out.x_dot;
        let k2 = f(t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)))?.x_dot;
        let k3 = f(t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)))?.x_dot;
        let k4 = f(t + dt, &(&x + &k3 * dt))?.x_dot;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    let z = Signal::new(dt, zs)?;
    let w_rec = Signal::new(dt, ws)?;
    Ok(SimResult {
        l2_w: l2_norm(&w_rec),
        l2_z: l2_norm(&z),
        x: Signal::new(dt, xs)?,
        u: Signal::new(dt, us)?,
        sigma: Signal::new(dt, sig)?,
        z,
        w: w_rec,
        max_loop_residual: max_res,
    })
}

/// Bounded-energy test input: piecewise-constant levels (each held for
/// `hold` steps) passed through the lag `τ ẏ = -y + v`, then rescaled so the
/// trapezoidal ℒ₂ norm equals `target`. `levels` holds one vector per hold
/// interval; the output has `n` samples.
pub fn shaped_disturbance(
    levels: &[Vector],
    hold: usize,
    tau: f64,
    dt: f64,
    n: usize,
    target: f64,
) -> Result<Signal, SimError> {
    if hold == 0 || levels.is_empty() || !(tau > 0.0) || !(target >= 0.0) {
        return Err(SimError::InvalidArgument("invalid disturbance shape parameters"));
    }
    let width = levels[0].len();
    // Exact discretization of the lag for a piecewise-constant input.
    let a = libm::exp(-dt / tau);
    let mut y = Vector::zeros(width);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        values.push(y.clone());
        let v = &levels[(k / hold).min(levels.len() - 1)];
        y = &y * a + v * (1.0 - a);
    }
    let sig = Signal::new(dt, values)?;
    let norm = l2_norm(&sig);
    if norm == 0.0 {
        return Ok(sig);
    }
    Ok(sig.scaled(target / norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::antiwindup::{assemble_closed_loop, ControllerModel, PlantModel};
    use alloc::vec;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn deadzone_examples() {
        assert_eq!(deadzone(&v(&[0.5, 2.0, -3.0]), &[1.0, 1.0, 1.0]), v(&[0.0, 1.0, -2.0]));
    }

    #[test]
    fn scalar_loop_branches() {
        let m = Mat::from_element(1, 1, 0.5);
        assert_eq!(solve_input_loop(&v(&[3.0]), &m, &[1.0]).unwrap(), v(&[5.0]));
        assert_eq!(solve_input_loop(&v(&[0.5]), &m, &[1.0]).unwrap(), v(&[0.5]));
        assert_eq!(solve_input_loop(&v(&[-3.0]), &m, &[1.0]).unwrap(), v(&[-5.0]));
        assert_eq!(solve_input_loop(&v(&[7.0]), &Mat::zeros(1, 1), &[1.0]).unwrap(), v(&[7.0]));
        assert!(solve_input_loop(&v(&[3.0]), &Mat::from_element(1, 1, 1.0), &[1.0]).is_err());
    }

    #[test]
    fn vector_loop_contraction() {
        let m = Mat::from_row_slice(2, 2, &[0.3, -0.2, 0.1, 0.4]);
        let c = v(&[4.0, -2.5]);
        let lim = [1.0, 0.5];
        let u = solve_input_loop(&c, &m, &lim).unwrap();
        assert!((&u - &c - &m * deadzone(&u, &lim)).amax() <= 1e-10 * 4.0);
    }

    #[test]
    fn l2_norm_of_decaying_exponential() {
        let s = Signal::from_fn(1e-3, 10_001, |t| v(&[libm::exp(-t)])).unwrap();
        assert!((l2_norm(&s) - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
        assert_eq!(l2_norm(&Signal::zeros(0.1, 10, 2).unwrap()), 0.0);
        assert!((l2_norm(&s.scaled(-3.0)) - 3.0 * l2_norm(&s)).abs() < 1e-12);
    }

    fn first_order() -> ClosedLoopModel {
        let m = |x: f64| Mat::from_element(1, 1, x);
        let plant = PlantModel {
            a_p: m(-1.0),
            b_pu: m(1.0),
            b_pw: m(0.0),
            c_py: m(1.0),
            d_pyu: m(0.0),
            d_pyw: m(0.0),
            c_pz: m(-1.0),
            d_pzu: m(0.0),
            d_pzw: m(1.0),
        };
        let ctrl =
            ControllerModel { a_c: m(0.0), b_cy: m(-1.0), b_cw: m(1.0), c_c: m(1.0), d_cy: m(-1.0), d_cw: m(1.0) };
        assemble_closed_loop(&plant, &ctrl).unwrap()
    }

    #[test]
    fn zero_input_stays_at_rest() {
        let cl = first_order();
        let lp =
            SaturatedLoop::new(&cl, &AntiWindupGain::zero(1, 1), &SaturationLimits::new(vec![1.0]).unwrap()).unwrap();
        let w = Signal::zeros(0.01, 101, 1).unwrap();
        let r = simulate(&lp, &w, &Vector::zeros(2), 1.0, 0.01).unwrap();
        assert!(r.x.values().iter().all(|x| x.amax() == 0.0));
        assert_eq!(r.l2_z, 0.0);
    }

    /// Scaling and squaring with a truncated Taylor series.
    fn expm(a: &Mat) -> Mat {
        let squarings = 10;
        let small = a / f64::from(1u32 << squarings);
        let n = a.nrows();
        let (mut term, mut sum) = (Mat::identity(n, n), Mat::identity(n, n));
        for k in 1..20 {
            term = &term * &small / k as f64;
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn unsaturated_response_matches_matrix_exponential() {
        let cl = first_order();
        let lp =
            SaturatedLoop::new(&cl, &AntiWindupGain::zero(1, 1), &SaturationLimits::new(vec![1e9]).unwrap()).unwrap();
        let w = Signal::zeros(1e-3, 3001, 1).unwrap();
        let x0 = v(&[1.0, -0.5]);
        let r = simulate(&lp, &w, &x0, 3.0, 1e-3).unwrap();
        let exact = expm(&(&cl.a * 3.0)) * &x0;
        assert!((r.x.values().last().unwrap() - exact).amax() < 1e-6);
    }

    #[test]
    fn shaped_disturbance_has_target_norm() {
        let lv = [v(&[1.0]), v(&[-2.0]), v(&[0.5])];
        let s = shaped_disturbance(&lv, 100, 0.05, 1e-3, 400, 0.003).unwrap();
        assert!((l2_norm(&s) - 0.003).abs() < 1e-15);
        assert_eq!(s.len(), 400);
    }

    #[test]
    fn saturated_loop_identity_holds() {
        let cl = first_order();
        let lp =
            SaturatedLoop::new(&cl, &AntiWindupGain::zero(1, 1), &SaturationLimits::new(vec![0.2]).unwrap()).unwrap();
        let w = Signal::from_fn(1e-2, 501, |t| v(&[if t < 1.0 { 1.0 } else { 0.0 }])).unwrap();
        let r = simulate(&lp, &w, &Vector::zeros(2), 5.0, 1e-2).unwrap();
        assert!(r.max_loop_residual <= 1e-10);
        assert!(r.sigma.values().iter().all(|s| s[0].abs() <= 0.2 + 1e-15));
        assert!(r.u.values().iter().any(|u| u[0].abs() > 0.2));
    }
}
