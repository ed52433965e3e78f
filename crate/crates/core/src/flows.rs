//! Geodesic flow, parallel transport, and Jacobi fields across a multi-chart
//! atlas.
//!
//! One adaptive embedded Runge–Kutta 5(4) integrator (Dormand–Prince
//! coefficients) drives a joint state block:
//!
//! - position `x` and velocity `v` (the geodesic equation),
//! - two parallel normal vectors `w1, w2` (so transport of any tangent
//!   vector is exact linear algebra on stored samples),
//! - optionally the fundamental system of the normal Jacobi equation
//!   `y'' = -M(t) y` written in the `{w1, w2}` frame, where
//!   `M_ab = <R(w_b, v) v, w_a>`,
//! - optionally the scalar comparison ODE `f'' = -M_22 f`, `f(0) = 0`,
//!   `f'(0) = 1` (the curvature seen by the second normal direction).
//!
//! Everything is integrated together, so chart transitions act on the whole
//! block at once: positions map through the transition, tangent blocks
//! multiply by the exact Jacobian, and frame-coordinate blocks (Jacobi
//! fundamental system, `f`) are invariant because the frame itself carries
//! them across. Trigger crossings are localized by bisection with fresh
//! Runge–Kutta sub-steps; interior crossings are also probed on a cubic
//! Hermite interpolant so a step cannot silently hop over a thin trigger
//! band. Requested sample times are hit exactly by clipping step sizes.

use thiserror::Error;

use crate::atlas::{Atlas, AtlasPoint};
use crate::chart::ChartMetric;
use crate::linalg::{complete_frame, gdot, gnorm, M2, M3, V2, V3};
use crate::metric::{christoffel_at, curvature_operator_at, metric_at, MetricError};
use crate::tol;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("trajectory left the atlas at t = {t_exit:.6}")]
    LeftAtlas {
        t_exit: f64,
        trace: Box<GeodesicTrace>,
    },
    #[error("step size underflow at t = {t:.6} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("initial velocity is not unit speed (|v|_g = {0})")]
    NotUnitSpeed(f64),
    #[error("vector is not normal to the velocity (component {0:.3e})")]
    NotNormal(f64),
    #[error("trace was built without the {0} block")]
    MissingBlock(&'static str),
    #[error("no transition from chart {from} to chart {to} covers a path segment")]
    NoTransitionPath { from: usize, to: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Adaptive step control for the embedded pair.
#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on step size; also bounds how far a step can overshoot a
    /// trigger surface, so keep it below the narrowest overlap band.
    pub max_step: f64,
    pub min_step: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rtol: tol::ODE_TOL,
            atol: 1e-12,
            max_step: 0.1,
            min_step: 1e-13,
        }
    }
}

/// What to carry along a trace besides position, velocity, and the frame.
#[derive(Clone, Debug, Default)]
pub struct TraceOptions {
    /// Times (in `[0, horizon]`) at which to record samples. Empty means 33
    /// uniform samples. 0 and the horizon are always recorded.
    pub sample_times: Vec<f64>,
    /// Initial parallel normal pair; defaults to a completion of `v`.
    pub frame_seed: Option<(V3, V3)>,
    /// Integrate the normal Jacobi fundamental system.
    pub jacobi: bool,
    /// Integrate the scalar comparison ODE `f'' = -sec(v ^ w2) f`.
    pub f_ode: bool,
    pub step: StepControl,
}

/// Fundamental system of the normal Jacobi equation at one sample:
/// `y(t) = a y(0) + b y'(0)`, `y'(t) = ap y(0) + bp y'(0)` in the
/// transported `{w1, w2}` frame.
#[derive(Clone, Copy, Debug)]
pub struct JacFund {
    pub a: M2,
    pub ap: M2,
    pub b: M2,
    pub bp: M2,
}

#[derive(Clone, Copy, Debug)]
pub struct TraceSample {
    pub t: f64,
    pub chart: usize,
    pub x: V3,
    pub v: V3,
    pub w1: V3,
    pub w2: V3,
    pub jac: Option<JacFund>,
    /// `(f, f')` of the comparison ODE.
    pub f: Option<(f64, f64)>,
}

impl TraceSample {
    pub fn point(&self) -> AtlasPoint {
        AtlasPoint::new(self.chart, self.x)
    }
}

/// A chart hand-off: the state at `t` was mapped from `from` to `to`.
#[derive(Clone, Copy, Debug)]
pub struct TransitionEvent {
    pub t: f64,
    pub transition: usize,
    pub from: usize,
    pub to: usize,
    pub x_before: V3,
    pub x_after: V3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Reached the requested horizon.
    Time,
    /// Ran out of atlas.
    LeftAtlas,
}

#[derive(Clone, Debug)]
pub struct GeodesicTrace {
    pub samples: Vec<TraceSample>,
    pub events: Vec<TransitionEvent>,
    pub termination: Termination,
    /// Time actually reached (equals the horizon unless the trace left).
    pub horizon: f64,
    /// Worst observed `| |v|_g - 1 |` across samples (diagnostic only; the
    /// integrator never renormalizes).
    pub energy_drift: f64,
    has_jacobi: bool,
}

impl GeodesicTrace {
    pub fn start(&self) -> &TraceSample {
        &self.samples[0]
    }
    pub fn end(&self) -> &TraceSample {
        self.samples.last().expect("traces have samples")
    }
    /// Sample recorded at time `t` (exact hit within 1e-9).
    pub fn sample_at(&self, t: f64) -> Option<&TraceSample> {
        self.samples.iter().find(|s| (s.t - t).abs() < 1e-9)
    }
}

// ---------------------------------------------------------------------------
// Joint state block

const NDIM: usize = 30;
type State = [f64; NDIM];

const IX: usize = 0;
const IV: usize = 3;
const IW1: usize = 6;
const IW2: usize = 9;
const IJA: usize = 12; // A, row-major 2x2
const IJAP: usize = 16;
const IJB: usize = 20;
const IJBP: usize = 24;
const IF: usize = 28;
const IFP: usize = 29;

fn get3(y: &State, at: usize) -> V3 {
    V3::new(y[at], y[at + 1], y[at + 2])
}
fn set3(y: &mut State, at: usize, v: &V3) {
    y[at] = v[0];
    y[at + 1] = v[1];
    y[at + 2] = v[2];
}
fn get2x2(y: &State, at: usize) -> M2 {
    M2::new(y[at], y[at + 1], y[at + 2], y[at + 3])
}
fn set2x2(y: &mut State, at: usize, m: &M2) {
    y[at] = m[(0, 0)];
    y[at + 1] = m[(0, 1)];
    y[at + 2] = m[(1, 0)];
    y[at + 3] = m[(1, 1)];
}

/// Frame sectional matrix `M_ab = <R(w_b, v) v, w_a>` of a recorded sample:
/// diagonal entries are the sectional curvatures of the frame planes
/// `v ^ w1` and `v ^ w2`.
pub fn sample_sectional(atlas: &Atlas, s: &TraceSample) -> Result<M2, MetricError> {
    frame_jacobi_matrix(atlas.chart(s.chart), &s.x, &s.v, &s.w1, &s.w2)
}

/// Frame sectional matrix `M_ab = <R(w_b, v) v, w_a>`, symmetrized.
fn frame_jacobi_matrix(chart: &ChartMetric, x: &V3, v: &V3, w1: &V3, w2: &V3) -> Result<M2, MetricError> {
    let g = metric_at(chart, x)?;
    let curv = curvature_operator_at(chart, x)?;
    let r1 = curv.jacobi_apply(&g, v, w1);
    let r2 = curv.jacobi_apply(&g, v, w2);
    let m11 = gdot(&g, &r1, w1);
    let m21 = gdot(&g, &r1, w2);
    let m12 = gdot(&g, &r2, w1);
    let m22 = gdot(&g, &r2, w2);
    let off = 0.5 * (m12 + m21);
    Ok(M2::new(m11, off, off, m22))
}

fn eval_deriv(chart: &ChartMetric, y: &State, need_curv: bool) -> Result<State, MetricError> {
    let x = get3(y, IX);
    let v = get3(y, IV);
    let w1 = get3(y, IW1);
    let w2 = get3(y, IW2);
    let gamma = christoffel_at(chart, &x)?;
    let mut d = [0.0; NDIM];
    set3(&mut d, IX, &v);
    set3(&mut d, IV, &(-gamma.apply(&v, &v)));
    set3(&mut d, IW1, &(-gamma.apply(&v, &w1)));
    set3(&mut d, IW2, &(-gamma.apply(&v, &w2)));
    if need_curv {
        let m = frame_jacobi_matrix(chart, &x, &v, &w1, &w2)?;
        let a = get2x2(y, IJA);
        let ap = get2x2(y, IJAP);
        let b = get2x2(y, IJB);
        let bp = get2x2(y, IJBP);
        set2x2(&mut d, IJA, &ap);
        set2x2(&mut d, IJAP, &(-m * a));
        set2x2(&mut d, IJB, &bp);
        set2x2(&mut d, IJBP, &(-m * b));
        d[IF] = y[IFP];
        d[IFP] = -m[(1, 1)] * y[IF];
    }
    Ok(d)
}

// Dormand–Prince 5(4) tableau (the system is autonomous, so the stage
// times are not needed).
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One fixed-size Dormand–Prince step: returns the 5th-order endpoint and
/// the embedded error estimate (weighted RMS; accept at <= 1).
fn dp_step_full(
    chart: &ChartMetric,
    y: &State,
    h: f64,
    need_curv: bool,
    ctrl: &StepControl,
) -> Result<(State, f64), MetricError> {
    let mut k: [State; 7] = [[0.0; NDIM]; 7];
    k[0] = eval_deriv(chart, y, need_curv)?;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = DP_A[s][j];
            if a != 0.0 {
                for i in 0..NDIM {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k[s] = eval_deriv(chart, &ys, need_curv)?;
    }
    let mut y5 = *y;
    let mut y4 = *y;
    for (s, ks) in k.iter().enumerate() {
        for i in 0..NDIM {
            y5[i] += h * DP_B5[s] * ks[i];
            y4[i] += h * DP_B4[s] * ks[i];
        }
    }
    let mut err2 = 0.0;
    for i in 0..NDIM {
        let sc = ctrl.atol + ctrl.rtol * y[i].abs().max(y5[i].abs());
        let e = (y5[i] - y4[i]) / sc;
        err2 += e * e;
    }
    Ok((y5, (err2 / NDIM as f64).sqrt()))
}

/// Cubic Hermite position interpolant across an accepted step.
fn hermite_x(x0: &V3, v0: &V3, x1: &V3, v1: &V3, h: f64, tau: f64) -> V3 {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + tau;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * x0 + (h10 * h) * v0 + h01 * x1 + (h11 * h) * v1
}

// ---------------------------------------------------------------------------
// Geodesic driver

struct Integrator<'a> {
    atlas: &'a Atlas,
    opts: &'a TraceOptions,
    need_curv: bool,
    chart: usize,
    t: f64,
    y: State,
    h: f64,
    events: Vec<TransitionEvent>,
}

enum StepOutcome {
    /// Advanced to the returned time (possibly with a transition applied).
    Advanced,
    /// Could not advance: the trajectory exits the atlas at time `t_exit`.
    Exited { t_exit: f64 },
}

impl<'a> Integrator<'a> {
    fn chart_ref(&self) -> &ChartMetric {
        self.atlas.chart(self.chart)
    }

    fn trigger_values(&self, x: &V3) -> Vec<f64> {
        self.atlas
            .outgoing(self.chart)
            .iter()
            .map(|&ti| self.atlas.transition(ti).trigger.value(x))
            .collect()
    }

    /// Advance by at most `h_goal` (exact hit), handling rejections,
    /// transitions, and atlas exits. Updates `self` in place.
    fn advance(&mut self, h_goal: f64) -> Result<StepOutcome, FlowError> {
        let ctrl = &self.opts.step;
        let h_free = self.h.min(ctrl.max_step);
        let mut h = h_free.min(h_goal);
        let mut rejects = 0usize;
        loop {
            if h < ctrl.min_step {
                // Distinguish "ran out of manifold" from stiffness: probe a
                // small move along the velocity.
                let x = get3(&self.y, IX);
                let v = get3(&self.y, IV);
                let probe = x + 1e-9 * v;
                if !self.chart_ref().domain.contains(&probe) {
                    return Ok(StepOutcome::Exited { t_exit: self.t });
                }
                return Err(FlowError::StepUnderflow { t: self.t, h });
            }
            match dp_step_full(self.chart_ref(), &self.y, h, self.need_curv, ctrl) {
                Err(_) => {
                    // A stage left the chart domain (or hit a singular
                    // metric): shrink and retry.
                    h *= 0.5;
                    rejects += 1;
                    if rejects > 200 {
                        return Err(FlowError::StepUnderflow { t: self.t, h });
                    }
                }
                Ok((y_new, err)) => {
                    if err > 1.0 {
                        h *= (0.9 * err.powf(-0.2)).clamp(0.2, 0.9);
                        rejects += 1;
                        if rejects > 200 {
                            return Err(FlowError::StepUnderflow { t: self.t, h });
                        }
                        continue;
                    }
                    // Accepted. Next-step suggestion; a step that was merely
                    // clipped to hit a sample time must not shrink the
                    // adaptive step size.
                    let grow = if err > 0.0 {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    } else {
                        5.0
                    };
                    let h_next = if rejects == 0 && h < h_free {
                        self.h
                    } else {
                        (h * grow).min(ctrl.max_step)
                    };

                    let x0 = get3(&self.y, IX);
                    let v0 = get3(&self.y, IV);
                    let x1 = get3(&y_new, IX);
                    let v1 = get3(&y_new, IV);

                    // Earliest trigger crossing within the step, if any.
                    let vals0 = self.trigger_values(&x0);
                    let mut crossing: Option<(f64, usize)> = None; // (tau, transition idx)
                    for (slot, &ti) in self.atlas.outgoing(self.chart).iter().enumerate() {
                        if vals0[slot] > 0.0 {
                            continue; // already past: hysteresis, ignore
                        }
                        let trig = &self.atlas.transition(ti).trigger;
                        let crossed_at = [0.25, 0.5, 0.75, 1.0].iter().copied().find(|&tau| {
                            let x = if tau == 1.0 {
                                x1
                            } else {
                                hermite_x(&x0, &v0, &x1, &v1, h, tau)
                            };
                            trig.value(&x) > 0.0
                        });
                        if let Some(hint) = crossed_at {
                            let tau = self.bisect_trigger(h, ti, hint)?;
                            if crossing.map_or(true, |(best, _)| tau < best) {
                                crossing = Some((tau, ti));
                            }
                        }
                    }

                    // Domain exit within the step (only matters if it happens
                    // before any trigger).
                    let exit_tau = if !self.chart_ref().domain.contains(&x1) {
                        Some(self.bisect_exit(h))
                    } else {
                        None
                    };

                    match (crossing, exit_tau) {
                        (Some((tau_t, ti)), ext)
                            if ext.map_or(true, |tau_d| tau_t <= tau_d) =>
                        {
                            // Land just past the trigger, then hand off.
                            let h_cross = tau_t * h;
                            let (y_cross, _) = dp_step_full(
                                self.chart_ref(),
                                &self.y,
                                h_cross,
                                self.need_curv,
                                ctrl,
                            )?;
                            self.t += h_cross;
                            self.apply_transition(ti, &y_cross);
                            self.h = h_next;
                            return Ok(StepOutcome::Advanced);
                        }
                        (_, Some(tau_d)) => {
                            let h_exit = tau_d * h;
                            if h_exit > 0.0 {
                                let (y_exit, _) = dp_step_full(
                                    self.chart_ref(),
                                    &self.y,
                                    h_exit,
                                    self.need_curv,
                                    ctrl,
                                )?;
                                self.y = y_exit;
                                self.t += h_exit;
                            }
                            return Ok(StepOutcome::Exited { t_exit: self.t });
                        }
                        _ => {
                            self.y = y_new;
                            self.t += h;
                            self.h = h_next;
                            return Ok(StepOutcome::Advanced);
                        }
                    }
                }
            }
        }
    }

    /// Bisect the step fraction at which transition `ti`'s trigger value
    /// crosses zero, using fresh sub-steps from the current state. `hint`
    /// is a fraction known to be past the trigger.
    fn bisect_trigger(&self, h: f64, ti: usize, hint: f64) -> Result<f64, FlowError> {
        let trig = &self.atlas.transition(ti).trigger;
        let ctrl = &self.opts.step;
        let value_at = |tau: f64| -> Option<f64> {
            if tau == 0.0 {
                return Some(trig.value(&get3(&self.y, IX)));
            }
            dp_step_full(self.chart_ref(), &self.y, tau * h, self.need_curv, ctrl)
                .ok()
                .map(|(y, _)| trig.value(&get3(&y, IX)))
        };
        let mut lo = 0.0;
        let mut hi = hint;
        // Sub-step evaluation failures count as "past" (conservative).
        for _ in 0..80 {
            if (hi - lo) * h < tol::EVENT_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            match value_at(mid) {
                Some(v) if v <= 0.0 => lo = mid,
                _ => hi = mid,
            }
        }
        Ok(hi)
    }

    /// Bisect the step fraction at which the trajectory leaves the chart
    /// domain; returns the largest fraction still inside.
    fn bisect_exit(&self, h: f64) -> f64 {
        let ctrl = &self.opts.step;
        let inside = |tau: f64| -> bool {
            if tau == 0.0 {
                return true;
            }
            dp_step_full(self.chart_ref(), &self.y, tau * h, self.need_curv, ctrl)
                .map(|(y, _)| self.chart_ref().domain.contains(&get3(&y, IX)))
                .unwrap_or(false)
        };
        let mut lo = 0.0;
        let mut hi = 1.0;
        for _ in 0..80 {
            if (hi - lo) * h < tol::EVENT_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if inside(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn apply_transition(&mut self, ti: usize, y_cross: &State) {
        let x_before = get3(y_cross, IX);
        let (to, x_after, j) = self.atlas.cross(ti, &x_before);
        let mut y = *y_cross;
        set3(&mut y, IX, &x_after);
        set3(&mut y, IV, &(j * get3(y_cross, IV)));
        set3(&mut y, IW1, &(j * get3(y_cross, IW1)));
        set3(&mut y, IW2, &(j * get3(y_cross, IW2)));
        // Frame-coordinate blocks (Jacobi fundamental system, f) ride along
        // unchanged: their basis vectors were just mapped.
        self.events.push(TransitionEvent {
            t: self.t,
            transition: ti,
            from: self.chart,
            to,
            x_before,
            x_after,
        });
        self.chart = to;
        self.y = y;
    }

    fn sample(&self) -> TraceSample {
        TraceSample {
            t: self.t,
            chart: self.chart,
            x: get3(&self.y, IX),
            v: get3(&self.y, IV),
            w1: get3(&self.y, IW1),
            w2: get3(&self.y, IW2),
            jac: if self.opts.jacobi {
                Some(JacFund {
                    a: get2x2(&self.y, IJA),
                    ap: get2x2(&self.y, IJAP),
                    b: get2x2(&self.y, IJB),
                    bp: get2x2(&self.y, IJBP),
                })
            } else {
                None
            },
            f: if self.opts.f_ode {
                Some((self.y[IF], self.y[IFP]))
            } else {
                None
            },
        }
    }
}

/// Integrate the unit-speed geodesic from `start` with initial velocity `v`
/// up to `horizon`, recording samples and transition events.
pub fn geodesic(
    atlas: &Atlas,
    start: AtlasPoint,
    v: V3,
    horizon: f64,
    opts: &TraceOptions,
) -> Result<GeodesicTrace, FlowError> {
    let chart = atlas.chart(start.chart);
    let g0 = metric_at(chart, &start.x)?;
    let speed = gnorm(&g0, &v);
    if (speed - 1.0).abs() > 1e-6 {
        return Err(FlowError::NotUnitSpeed(speed));
    }
    let (w1, w2) = match opts.frame_seed {
        Some(seed) => seed,
        None => complete_frame(&g0, &v),
    };

    let mut y: State = [0.0; NDIM];
    set3(&mut y, IX, &start.x);
    set3(&mut y, IV, &v);
    set3(&mut y, IW1, &w1);
    set3(&mut y, IW2, &w2);
    set2x2(&mut y, IJA, &M2::identity());
    set2x2(&mut y, IJBP, &M2::identity());
    y[IFP] = 1.0;

    let mut times: Vec<f64> = if opts.sample_times.is_empty() {
        (0..=32).map(|i| horizon * i as f64 / 32.0).collect()
    } else {
        opts.sample_times.clone()
    };
    times.retain(|&t| t > 0.0 && t < horizon);
    times.push(horizon);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let need_curv = opts.jacobi || opts.f_ode;
    let mut integ = Integrator {
        atlas,
        opts,
        need_curv,
        chart: start.chart,
        t: 0.0,
        y,
        h: opts.step.max_step.min(0.01),
        events: Vec::new(),
    };

    let mut samples = vec![integ.sample()];
    let mut exited: Option<f64> = None;

    'outer: for &t_target in &times {
        while integ.t < t_target - 1e-14 {
            match integ.advance(t_target - integ.t)? {
                StepOutcome::Advanced => {}
                StepOutcome::Exited { t_exit } => {
                    exited = Some(t_exit);
                    break 'outer;
                }
            }
        }
        integ.t = t_target;
        samples.push(integ.sample());
    }

    if let Some(t_exit) = exited {
        // Record the exit state if it advanced past the last sample.
        if t_exit > samples.last().map_or(0.0, |s| s.t) + 1e-12 {
            samples.push(integ.sample());
        }
    }

    let mut drift = 0.0f64;
    for s in &samples {
        let g = metric_at(atlas.chart(s.chart), &s.x)?;
        drift = drift.max((gnorm(&g, &s.v) - 1.0).abs());
    }

    let reached = samples.last().map_or(0.0, |s| s.t);
    let trace = GeodesicTrace {
        samples,
        events: integ.events,
        termination: if exited.is_some() {
            Termination::LeftAtlas
        } else {
            Termination::Time
        },
        horizon: reached,
        energy_drift: drift,
        has_jacobi: opts.jacobi,
    };
    match exited {
        Some(t_exit) => Err(FlowError::LeftAtlas {
            t_exit,
            trace: Box::new(trace),
        }),
        None => Ok(trace),
    }
}

// ---------------------------------------------------------------------------
// Transport and Jacobi evaluation on finished traces

/// Coordinates of `w` in the basis `(v, w1, w2)` of the given sample.
fn basis_coords(s: &TraceSample, w: &V3) -> V3 {
    let basis = M3::from_columns(&[s.v, s.w1, s.w2]);
    basis
        .lu()
        .solve(w)
        .expect("trace basis (v, w1, w2) is invertible")
}

/// Parallel-transport `w0` (a tangent at the trace start) to the trace end.
/// Exact linear algebra on the jointly integrated frame.
pub fn transport(trace: &GeodesicTrace, w0: &V3) -> V3 {
    transport_to(trace, w0, trace.samples.len() - 1)
}

/// Parallel-transport `w0` from the trace start to sample `idx`.
pub fn transport_to(trace: &GeodesicTrace, w0: &V3, idx: usize) -> V3 {
    let c = basis_coords(trace.start(), w0);
    let s = &trace.samples[idx];
    c[0] * s.v + c[1] * s.w1 + c[2] * s.w2
}

#[derive(Clone, Copy, Debug)]
pub struct JacobiSample {
    pub t: f64,
    pub chart: usize,
    /// Jacobi field value in chart coordinates.
    pub j: V3,
    /// Covariant derivative of the field in chart coordinates.
    pub jp: V3,
}

/// Evaluate the normal Jacobi field with initial value `j0` and initial
/// covariant derivative `j0p` (both normal to the velocity) at every sample
/// of a trace built with the Jacobi block enabled.
pub fn jacobi_evolve(
    trace: &GeodesicTrace,
    j0: &V3,
    j0p: &V3,
) -> Result<Vec<JacobiSample>, FlowError> {
    if !trace.has_jacobi {
        return Err(FlowError::MissingBlock("jacobi"));
    }
    let start = trace.start();
    let c0 = basis_coords(start, j0);
    let c0p = basis_coords(start, j0p);
    let worst = c0[0].abs().max(c0p[0].abs());
    if worst > 1e-6 {
        return Err(FlowError::NotNormal(worst));
    }
    let y0 = V2::new(c0[1], c0[2]);
    let y0p = V2::new(c0p[1], c0p[2]);
    Ok(trace
        .samples
        .iter()
        .map(|s| {
            let jf = s.jac.expect("has_jacobi implies jac samples");
            let y = jf.a * y0 + jf.b * y0p;
            let yp = jf.ap * y0 + jf.bp * y0p;
            JacobiSample {
                t: s.t,
                chart: s.chart,
                j: y[0] * s.w1 + y[1] * s.w2,
                jp: yp[0] * s.w1 + yp[1] * s.w2,
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Prescribed-path transport

/// Parallel-transport `w0` along a polyline of atlas points: straight
/// coordinate segments within a chart, exact transition maps between
/// consecutive points in different charts (which must be joined by a
/// registered transition and sit inside its overlap band). Each segment is
/// integrated by classical RK4 with sub-steps of at most `max_sub`.
pub fn transport_polyline(
    atlas: &Atlas,
    pts: &[AtlasPoint],
    w0: &V3,
    max_sub: f64,
) -> Result<V3, FlowError> {
    transport_polyline_full(atlas, pts, w0, max_sub).map(|(w, _)| w)
}

/// Like [`transport_polyline`], but also returns where the walk ended (the
/// last waypoint expressed in the chart reached after all transitions, with
/// wrapped coordinates accumulated rather than canonicalized). Callers that
/// transport around closed loops can compare this against the start point to
/// confirm the loop actually closed.
pub fn transport_polyline_full(
    atlas: &Atlas,
    pts: &[AtlasPoint],
    w0: &V3,
    max_sub: f64,
) -> Result<(V3, AtlasPoint), FlowError> {
    let mut w = *w0;
    let mut cur = pts[0];
    for target in &pts[1..] {
        if target.chart != cur.chart {
            let (ti, _) = atlas
                .transitions()
                .iter()
                .enumerate()
                .find(|(_, t)| t.from == cur.chart && t.to == target.chart)
                .ok_or(FlowError::NoTransitionPath {
                    from: cur.chart,
                    to: target.chart,
                })?;
            let (to, x_after, j) = atlas.cross(ti, &cur.x);
            w = j * w;
            cur = AtlasPoint::new(to, x_after);
        }
        let chart = atlas.chart(cur.chart);
        let delta = crate::atlas::wrap_diff(chart, &target.x, &cur.x);
        let len = delta.norm();
        if len > 1e-15 {
            let n = (len / max_sub).ceil().max(1.0) as usize;
            let h = 1.0 / n as f64;
            // w' = -Gamma(x(s))(dx, w), x(s) straight from cur.x by delta.
            let deriv = |s: f64, w: &V3| -> Result<V3, MetricError> {
                let x = cur.x + s * delta;
                let gamma = christoffel_at(chart, &x)?;
                Ok(-gamma.apply(&delta, w))
            };
            for k in 0..n {
                let s = k as f64 * h;
                let k1 = deriv(s, &w)?;
                let k2 = deriv(s + 0.5 * h, &(w + 0.5 * h * k1))?;
                let k3 = deriv(s + 0.5 * h, &(w + 0.5 * h * k2))?;
                let k4 = deriv(s + h, &(w + h * k3))?;
                w += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        cur = AtlasPoint::new(cur.chart, cur.x + delta);
    }
    Ok((w, cur))
}

// ---------------------------------------------------------------------------
// Rank estimation

/// Verdict of the parallel-flat-field search along a geodesic.
#[derive(Clone, Debug)]
pub struct RankWitness {
    pub v: V3,
    /// 1 + estimated dimension of normal parallel directions that span flat
    /// planes with the velocity at every sampled time.
    pub estimated_rank: usize,
    /// Best candidate direction (tangent at the base point), present when
    /// the estimated rank is at least 2.
    pub witness: Option<V3>,
    /// Smallest singular value of the stacked constraint system — the
    /// residual of the best candidate.
    pub min_singular: f64,
    /// Both singular values, ascending.
    pub singular: [f64; 2],
    /// Times actually reached backward and forward.
    pub reached: (f64, f64),
    /// True if either direction left the atlas before the horizon, in which
    /// case the rank is only certified up to the reached window.
    pub truncated: bool,
}

/// Estimate the rank of the geodesic through (`p`, `v`): transport a normal
/// frame over `[-horizon, horizon]`, sample the frame sectional matrix
/// `M(t)` at `k_times` Chebyshev-spaced times, and count near-kernel
/// directions of the stacked system. A normal parallel field `w` spans flat
/// planes with the velocity at all sampled times exactly when its frame
/// coordinates lie in the kernel of every `M(t)` (the sectional curvature
/// form is positive semidefinite on each candidate plane family under
/// pointwise signed curvature, so zero value means zero section).
pub fn rank_estimate(
    atlas: &Atlas,
    p: AtlasPoint,
    v: V3,
    horizon: f64,
    k_times: usize,
    tol: f64,
) -> Result<RankWitness, FlowError> {
    let g0 = atlas.metric(&p)?;
    let (w1, w2) = complete_frame(&g0, &v);
    let k_times = k_times.max(3);

    // Chebyshev–Lobatto nodes on [-horizon, horizon].
    let nodes: Vec<f64> = (0..k_times)
        .map(|j| horizon * (std::f64::consts::PI * j as f64 / (k_times - 1) as f64).cos())
        .collect();
    let fwd: Vec<f64> = nodes.iter().copied().filter(|&t| t > 1e-12).collect();
    let bwd: Vec<f64> = nodes
        .iter()
        .copied()
        .filter(|&t| t < -1e-12)
        .map(f64::abs)
        .collect();

    let mut truncated = false;
    let mut run = |dir: V3, times: &[f64]| -> Result<(Vec<TraceSample>, f64), FlowError> {
        let opts = TraceOptions {
            sample_times: times.to_vec(),
            frame_seed: Some((w1, w2)),
            ..TraceOptions::default()
        };
        let horizon_dir = times.iter().copied().fold(0.0f64, f64::max);
        match geodesic(atlas, p, dir, horizon_dir, &opts) {
            Ok(trace) => {
                let reached = trace.horizon;
                Ok((trace.samples, reached))
            }
            Err(FlowError::LeftAtlas { t_exit, trace }) => {
                truncated = true;
                Ok((trace.samples, t_exit))
            }
            Err(e) => Err(e),
        }
    };
    let (fwd_samples, reach_fwd) = run(v, &fwd)?;
    let (bwd_samples, reach_bwd) = run(-v, &bwd)?;

    let mut mats: Vec<M2> = Vec::new();
    for s in fwd_samples.iter().chain(bwd_samples.iter()) {
        let chart = atlas.chart(s.chart);
        mats.push(frame_jacobi_matrix(chart, &s.x, &s.v, &s.w1, &s.w2)?);
    }
    let scale = 1.0 + mats.iter().map(|m| m.norm()).fold(0.0, f64::max);

    // Singular values of the stacked (2n x 2) system, normalized so they
    // read as root-mean-square constraint violations.
    let mut ata = M2::zeros();
    for m in &mats {
        ata += m.transpose() * m;
    }
    ata /= mats.len() as f64;
    let eig = crate::linalg::sym_eigen2_sorted(&ata); // by |lambda| desc
    let sigma_hi = eig[0].0.max(0.0).sqrt();
    let sigma_lo = eig[1].0.max(0.0).sqrt();
    let thr = tol * scale;
    let deficiency = (sigma_lo < thr) as usize + (sigma_hi < thr) as usize;

    let witness = if deficiency >= 1 {
        let y = eig[1].1;
        Some(y[0] * w1 + y[1] * w2)
    } else {
        None
    };

    Ok(RankWitness {
        v,
        estimated_rank: 1 + deficiency,
        witness,
        min_singular: sigma_lo,
        singular: [sigma_lo, sigma_hi],
        reached: (reach_bwd, reach_fwd),
        truncated,
    })
}

// ---------------------------------------------------------------------------
// CSV output

/// Render a trace as CSV with header `t,chart,x,y,z,vx,vy,vz`.
pub fn trace_csv(atlas: &Atlas, trace: &GeodesicTrace) -> String {
    let mut out = String::from("t,chart,x,y,z,vx,vy,vz\n");
    for s in &trace.samples {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.t,
            atlas.chart(s.chart).id,
            s.x[0],
            s.x[1],
            s.x[2],
            s.v[0],
            s.v[1],
            s.v[2]
        ));
    }
    out
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{build_round3, build_two_disk_graph, Atlas};
    use crate::charts::{flat_chart, flat_polar_chart, product_sphere_chart, twisted_chart};
    use approx::assert_relative_eq;

    fn flat_atlas() -> Atlas {
        Atlas::single("flat3", flat_chart())
    }

    #[test]
    fn flat_geodesic_is_a_straight_line() {
        let atlas = flat_atlas();
        let trace = geodesic(
            &atlas,
            AtlasPoint::new(0, V3::new(0.0, 0.0, 0.0)),
            V3::new(1.0, 0.0, 0.0),
            2.0,
            &TraceOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(trace.end().x, V3::new(2.0, 0.0, 0.0), epsilon = 1e-10);
        assert!(trace.events.is_empty());
        assert!(trace.energy_drift < 1e-12);
    }

    #[test]
    fn flat_polar_geodesic_matches_euclidean_line() {
        // Straight line tangent to the unit circle, written in polar
        // coordinates: strong nonlinearity test with an exact answer.
        let atlas = Atlas::single("flat-polar", flat_polar_chart());
        let trace = geodesic(
            &atlas,
            AtlasPoint::new(0, V3::new(1.0, 0.3, 0.0)),
            V3::new(0.0, 1.0, 0.0),
            0.5,
            &TraceOptions::default(),
        )
        .unwrap();
        let end = trace.end();
        assert_relative_eq!(end.x[0], (1.0f64 + 0.25).sqrt(), epsilon = 1e-9);
        assert_relative_eq!(end.x[1], 0.3 + 0.5f64.atan(), epsilon = 1e-9);
        assert!(trace.energy_drift < 1e-9, "drift {}", trace.energy_drift);
    }

    #[test]
    fn round3_great_circle_closes() {
        let atlas = build_round3(1.0);
        let p = AtlasPoint::new(0, V3::new(0.0, 0.0, 0.0));
        // Conformal factor at the origin is 2, so unit speed means
        // coordinate speed 1/2.
        let v = V3::new(0.5, 0.0, 0.0);
        let trace = geodesic(
            &atlas,
            p,
            v,
            2.0 * std::f64::consts::PI,
            &TraceOptions::default(),
        )
        .unwrap();
        assert_eq!(trace.events.len(), 2, "events: {:?}", trace.events);
        assert_eq!(trace.end().chart, 0);
        assert!(
            trace.end().x.norm() < 1e-6,
            "end {:?} should close the great circle",
            trace.end().x
        );
        assert!(trace.energy_drift < 1e-7);
    }

    #[test]
    fn graph_radial_geodesic_crosses_all_interfaces() {
        let atlas = build_two_disk_graph(0.1, 0.22).unwrap();
        let cap0 = atlas.find_chart("v0-cap").unwrap();
        let trace = geodesic(
            &atlas,
            AtlasPoint::new(cap0, V3::new(0.0, 0.0, 0.3)),
            V3::new(1.0, 0.0, 0.0),
            1.2,
            &TraceOptions::default(),
        )
        .unwrap();
        // cap0 -> polar0 -> polar1 -> cap1 -> polar1 again.
        assert_eq!(trace.events.len(), 4, "events: {:#?}", trace.events);
        let end = trace.end();
        assert_eq!(atlas.chart(end.chart).id, "v1-polar");
        // Radial distance bookkeeping: 1.2 of arclength from the center of
        // disk 0 is 0.36 past the center of disk 2 (seam at r = 0.42).
        assert_relative_eq!(end.x[0], 0.36, epsilon = 1e-6);
        assert!(trace.energy_drift < 1e-8, "drift {}", trace.energy_drift);
    }

    #[test]
    fn handoff_agrees_with_single_chart_integration() {
        let atlas = build_two_disk_graph(0.1, 0.22).unwrap();
        let cap0 = atlas.find_chart("v0-cap").unwrap();
        let opts = TraceOptions {
            sample_times: vec![0.6],
            ..TraceOptions::default()
        };
        let full = geodesic(
            &atlas,
            AtlasPoint::new(cap0, V3::new(0.0, 0.0, 0.3)),
            V3::new(1.0, 0.0, 0.0),
            1.2,
            &opts,
        )
        .unwrap();
        // Restart from the mid-trace state and integrate the remaining time.
        let mid = full.sample_at(0.6).unwrap();
        let rest = geodesic(
            &atlas,
            mid.point(),
            mid.v,
            0.6,
            &TraceOptions {
                frame_seed: Some((mid.w1, mid.w2)),
                ..TraceOptions::default()
            },
        )
        .unwrap();
        let a = full.end();
        let b = rest.end();
        assert_eq!(a.chart, b.chart);
        assert_relative_eq!(a.x, b.x, epsilon = 1e-6);
        assert_relative_eq!(a.v, b.v, epsilon = 1e-6);
    }

    #[test]
    fn transport_preserves_products_and_fixed_directions() {
        // Product metric: the line direction is parallel along everything.
        let atlas = Atlas::single("prod-s2r", product_sphere_chart(1.0));
        let p = AtlasPoint::new(0, V3::new(0.7, 0.3, 0.0));
        let trace = geodesic(
            &atlas,
            p,
            V3::new(1.0, 0.0, 0.0), // theta direction, unit
            1.5,
            &TraceOptions::default(),
        )
        .unwrap();
        let z = transport(&trace, &V3::new(0.0, 0.0, 1.0));
        assert_relative_eq!(z, V3::new(0.0, 0.0, 1.0), epsilon = 1e-9);

        // Orthonormality of the transported frame over a long twisted run.
        let atlas = Atlas::single("twisted", twisted_chart());
        let pt = AtlasPoint::new(0, V3::new(1.0, 0.2, 0.0));
        let g = atlas.metric(&pt).unwrap();
        let v = crate::linalg::gnormalize(&g, &V3::new(0.7, 0.1, 0.5)).unwrap();
        let trace = geodesic(&atlas, pt, v, 2.5, &TraceOptions::default()).unwrap();
        let end = trace.end();
        let ge = atlas.metric(&end.point()).unwrap();
        let gram = M3::from_columns(&[end.v, end.w1, end.w2]);
        let gmat = gram.transpose() * ge * gram;
        assert!(
            (gmat - M3::identity()).norm() < 1e-7,
            "gram defect {:.3e}",
            (gmat - M3::identity()).norm()
        );
    }

    #[test]
    fn latitude_loop_holonomy_matches_cone_angle() {
        // Transport around the non-geodesic latitude circle at polar angle
        // theta rotates the normal bundle by 2 pi (1 - cos theta). At
        // theta = pi/3 that is a rotation by pi: the transported vector
        // comes back flipped.
        let atlas = Atlas::single("prod-s2r", product_sphere_chart(1.0));
        let theta = std::f64::consts::FRAC_PI_3;
        let n = 600;
        let pts: Vec<AtlasPoint> = (0..=n)
            .map(|k| {
                AtlasPoint::new(
                    0,
                    V3::new(theta, 2.0 * std::f64::consts::PI * k as f64 / n as f64, 0.0),
                )
            })
            .collect();
        let w = transport_polyline(&atlas, &pts, &V3::new(1.0, 0.0, 0.0), 0.005).unwrap();
        assert_relative_eq!(w, V3::new(-1.0, 0.0, 0.0), epsilon = 1e-5);
    }

    #[test]
    fn jacobi_fields_match_closed_forms() {
        // Flat: J(t) = t w.
        let atlas = flat_atlas();
        let opts = TraceOptions {
            jacobi: true,
            ..TraceOptions::default()
        };
        let trace = geodesic(
            &atlas,
            AtlasPoint::new(0, V3::zeros()),
            V3::new(1.0, 0.0, 0.0),
            2.0,
            &opts,
        )
        .unwrap();
        let start = trace.start();
        let fields = jacobi_evolve(&trace, &V3::zeros(), &start.w1).unwrap();
        for js in &fields {
            assert_relative_eq!(js.j, js.t * start.w1, epsilon = 1e-9);
        }

        // Round sphere: |J(t)| = sin t, direction transported; crosses a
        // chart transition on the way.
        let atlas = build_round3(1.0);
        let trace = geodesic(
            &atlas,
            AtlasPoint::new(0, V3::zeros()),
            V3::new(0.5, 0.0, 0.0),
            2.0,
            &opts,
        )
        .unwrap();
        assert!(!trace.events.is_empty());
        let start = trace.start();
        let fields = jacobi_evolve(&trace, &V3::zeros(), &start.w1).unwrap();
        for (js, s) in fields.iter().zip(trace.samples.iter()) {
            // w1 is itself parallel, so sin(t) w1(t) is the closed form.
            assert_relative_eq!(js.j, js.t.sin() * s.w1, epsilon = 1e-7);
        }

        // Product: a normal field along the line factor is parallel:
        // J(t) = P_t(J0) with J0 the line direction.
        let atlas = Atlas::single("prod-s2r", product_sphere_chart(1.0));
        let trace = geodesic(
            &atlas,
            AtlasPoint::new(0, V3::new(0.7, 0.3, 0.0)),
            V3::new(1.0, 0.0, 0.0),
            1.5,
            &opts,
        )
        .unwrap();
        let zdir = V3::new(0.0, 0.0, 1.0);
        let fields = jacobi_evolve(&trace, &zdir, &V3::zeros()).unwrap();
        for js in &fields {
            assert_relative_eq!(js.j, zdir, epsilon = 1e-8);
            assert!(js.jp.norm() < 1e-8);
        }
    }

    #[test]
    fn left_atlas_reports_exit_time_and_partial_trace() {
        let atlas = Atlas::single("prod-s2r", product_sphere_chart(1.0));
        // Theta-direction geodesic marches out of the belt.
        let err = geodesic(
            &atlas,
            AtlasPoint::new(0, V3::new(1.2, 0.3, 0.0)),
            V3::new(1.0, 0.0, 0.0),
            5.0,
            &TraceOptions::default(),
        )
        .unwrap_err();
        match err {
            FlowError::LeftAtlas { t_exit, trace } => {
                // Belt edge at theta = pi - 0.3, start at 1.2.
                let expect = (std::f64::consts::PI - 0.3) - 1.2;
                assert!(
                    (t_exit - expect).abs() < 1e-6,
                    "exit at {t_exit}, expected {expect}"
                );
                assert_eq!(trace.termination, Termination::LeftAtlas);
                assert!(trace.horizon <= t_exit + 1e-12);
            }
            other => panic!("expected LeftAtlas, got {other}"),
        }
    }

    #[test]
    fn rank_estimates_match_model_geometry() {
        let tol = 1e-5;
        // Flat space: every direction has rank 3.
        let atlas = flat_atlas();
        let rw = rank_estimate(
            &atlas,
            AtlasPoint::new(0, V3::zeros()),
            V3::new(1.0, 0.0, 0.0),
            3.0,
            33,
            tol,
        )
        .unwrap();
        assert_eq!(rw.estimated_rank, 3);

        // Round sphere: rank 1, residual about the curvature.
        let atlas = build_round3(1.0);
        let rw = rank_estimate(
            &atlas,
            AtlasPoint::new(0, V3::zeros()),
            V3::new(0.5, 0.0, 0.0),
            3.0,
            33,
            tol,
        )
        .unwrap();
        assert_eq!(rw.estimated_rank, 1);
        assert!(rw.witness.is_none());
        assert!(rw.min_singular > 0.3, "sigma {}", rw.min_singular);

        // Product: sphere-tangent direction has rank 2 with the line
        // direction as witness.
        let atlas = Atlas::single("prod-s2r", product_sphere_chart(1.0));
        let p = AtlasPoint::new(0, V3::new(1.2, 0.3, 0.0));
        let rw = rank_estimate(&atlas, p, V3::new(1.0, 0.0, 0.0), 2.0, 33, tol).unwrap();
        assert_eq!(rw.estimated_rank, 2);
        assert!(rw.truncated, "belt exit truncates the run");
        let w = rw.witness.unwrap();
        let g = atlas.metric(&p).unwrap();
        let ang = crate::linalg::line_angle(&g, &w, &V3::new(0.0, 0.0, 1.0));
        assert!(ang < 1e-4, "witness angle {ang}");

        // Tilted direction: still rank 2 (witness = normal part of the
        // line direction).
        let g = atlas.metric(&p).unwrap();
        let v = crate::linalg::gnormalize(&g, &V3::new(1.0, 0.0, 1.0)).unwrap();
        let rw = rank_estimate(&atlas, p, v, 2.0, 33, tol).unwrap();
        assert_eq!(rw.estimated_rank, 2);

        // Exactly along the line: every normal plane is flat, rank 3.
        let rw = rank_estimate(&atlas, p, V3::new(0.0, 0.0, 1.0), 2.0, 33, tol).unwrap();
        assert_eq!(rw.estimated_rank, 3);
    }

    #[test]
    fn rank_is_monotone_in_the_horizon() {
        let atlas = Atlas::single("prod-s2r", product_sphere_chart(1.0));
        let p = AtlasPoint::new(0, V3::new(1.2, 0.3, 0.0));
        let g = atlas.metric(&p).unwrap();
        let v = crate::linalg::gnormalize(&g, &V3::new(1.0, 0.4, 0.2)).unwrap();
        let mut prev = 3;
        for horizon in [0.25, 0.5, 1.0, 2.0] {
            let rw = rank_estimate(&atlas, p, v, horizon, 33, 1e-5).unwrap();
            assert!(
                rw.estimated_rank <= prev,
                "rank grew from {prev} to {} at horizon {horizon}",
                rw.estimated_rank
            );
            prev = rw.estimated_rank;
        }
    }

    #[test]
    fn csv_trace_has_expected_shape() {
        let atlas = flat_atlas();
        let trace = geodesic(
            &atlas,
            AtlasPoint::new(0, V3::zeros()),
            V3::new(0.0, 1.0, 0.0),
            1.0,
            &TraceOptions {
                sample_times: vec![0.5],
                ..TraceOptions::default()
            },
        )
        .unwrap();
        let csv = trace_csv(&atlas, &trace);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,chart,x,y,z,vx,vy,vz");
        assert_eq!(lines.len(), 4); // header + t = 0, 0.5, 1.
        assert!(lines[1].starts_with("0,flat,"));
    }
}
