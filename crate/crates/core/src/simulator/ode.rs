//! Explicit Runge-Kutta integrators for autonomous or time-varying systems.
//!
//! [`dopri5`] is the Dormand-Prince 5(4) pair with step-size control and the
//! fourth-order continuous extension used for evenly spaced output.
//! [`rk4`] is a classical fixed-step scheme kept as a reference.

use crate::error::Result;

pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()>;

    /// Whether `x` lies in the domain where the model is meaningful.
    fn admissible(&self, _x: &[f64]) -> bool {
        true
    }
}

/// Wraps a closure `f(t, x, dx)` as an [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        (self.f)(t, x, dx);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorControls {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Spacing of the returned samples, seconds.
    pub sample_interval: f64,
    /// Any |x_i| above this terminates the run as a blow-up.
    pub blowup_limit: f64,
}

impl Default for IntegratorControls {
    fn default() -> Self {
        Self {
            rtol: 1e-7,
            atol: 1e-9,
            max_step: 1e-4,
            sample_interval: 1e-4,
            blowup_limit: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    /// State exceeded the blow-up limit or left the admissible domain at `t`.
    Blowup {
        t: f64,
    },
    /// Step size collapsed while trying to advance past `t`.
    StepUnderflow {
        t: f64,
    },
}

impl Termination {
    pub fn is_divergent(&self) -> bool {
        !matches!(self, Termination::Completed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub termination: Termination,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

// Dormand-Prince coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

struct Workspace {
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
    cont: [Vec<f64>; 5],
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            stage: vec![0.0; dim],
            y_new: vec![0.0; dim],
            cont: std::array::from_fn(|_| vec![0.0; dim]),
        }
    }
}

/// Weighted RMS norm used for both the initial step guess and error control.
fn wrms(v: &[f64], y0: &[f64], y1: &[f64], ctrl: &IntegratorControls) -> f64 {
    let sum: f64 = v
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = ctrl.atol + ctrl.rtol * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    (sum / v.len().max(1) as f64).sqrt()
}

fn initial_step<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    ctrl: &IntegratorControls,
) -> f64 {
    let d0 = wrms(y0, y0, y0, ctrl);
    let d1 = wrms(f0, y0, y0, ctrl);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(ctrl.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    if sys.rhs(t0 + h0, &y1, &mut f1).is_err() {
        return h0 * 1e-3;
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = wrms(&diff, y0, y0, ctrl) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(ctrl.max_step)
}

/// One trial Dormand-Prince step from `(t, y)` with `k[0] = f(t, y)`.
/// Leaves the candidate in `ws.y_new`, `f(t+h, y_new)` in `ws.k[6]`, and
/// returns the scaled error norm.
fn trial_step<S: OdeSystem>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    ws: &mut Workspace,
    ctrl: &IntegratorControls,
) -> Result<f64> {
    let n = y.len();
    let Workspace {
        k, stage, y_new, ..
    } = ws;

    for i in 0..n {
        stage[i] = y[i] + h * A21 * k[0][i];
    }
    sys.rhs(t + C2 * h, stage, &mut k[1])?;

    for i in 0..n {
        stage[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
    }
    sys.rhs(t + C3 * h, stage, &mut k[2])?;

    for i in 0..n {
        stage[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
    }
    sys.rhs(t + C4 * h, stage, &mut k[3])?;

    for i in 0..n {
        stage[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
    }
    sys.rhs(t + C5 * h, stage, &mut k[4])?;

    for i in 0..n {
        stage[i] = y[i]
            + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
    }
    sys.rhs(t + h, stage, &mut k[5])?;

    for i in 0..n {
        y_new[i] = y[i]
            + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
    }
    sys.rhs(t + h, y_new, &mut k[6])?;

    for i in 0..n {
        stage[i] = h
            * (E1 * k[0][i]
                + E3 * k[2][i]
                + E4 * k[3][i]
                + E5 * k[4][i]
                + E6 * k[5][i]
                + E7 * k[6][i]);
    }
    Ok(wrms(stage, y, y_new, ctrl))
}

fn prepare_dense(y: &[f64], h: f64, ws: &mut Workspace) {
    let Workspace { k, y_new, cont, .. } = ws;
    for i in 0..y.len() {
        let ydiff = y_new[i] - y[i];
        let bspl = h * k[0][i] - ydiff;
        cont[0][i] = y[i];
        cont[1][i] = ydiff;
        cont[2][i] = bspl;
        cont[3][i] = ydiff - h * k[6][i] - bspl;
        cont[4][i] = h
            * (D1 * k[0][i]
                + D3 * k[2][i]
                + D4 * k[3][i]
                + D5 * k[4][i]
                + D6 * k[5][i]
                + D7 * k[6][i]);
    }
}

fn dense_eval(cont: &[Vec<f64>; 5], theta: f64) -> Vec<f64> {
    let theta1 = 1.0 - theta;
    (0..cont[0].len())
        .map(|i| {
            cont[0][i]
                + theta
                    * (cont[1][i]
                        + theta1 * (cont[2][i] + theta * (cont[3][i] + theta1 * cont[4][i])))
        })
        .collect()
}

fn out_of_bounds<S: OdeSystem>(sys: &S, y: &[f64], limit: f64) -> bool {
    y.iter().any(|x| !x.is_finite() || x.abs() > limit) || !sys.admissible(y)
}

/// Adaptive Dormand-Prince 5(4) from `t0` to `t_end`.
///
/// Samples are returned at `t0 + k * sample_interval` plus `t_end`. A run that
/// leaves the admissible domain or exceeds the blow-up limit stops early and
/// includes the offending state as its last sample.
pub fn dopri5<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    ctrl: &IntegratorControls,
) -> Result<Solution> {
    let n = sys.dim();
    let mut ws = Workspace::new(n);
    let mut y = y0.to_vec();
    let mut t = t0;

    let mut times = vec![t0];
    let mut states = vec![y.clone()];
    let mut next_sample = 1usize;
    let sample_time = |k: usize| t0 + k as f64 * ctrl.sample_interval;

    let mut accepted_steps = 0;
    let mut rejected_steps = 0;

    sys.rhs(t, &y, &mut ws.k[0])?;
    let mut h = initial_step(sys, t, &y, &ws.k[0].clone(), ctrl);
    let mut last_rejected = false;

    let termination = loop {
        if t >= t_end {
            break Termination::Completed;
        }
        let min_h = 1e-14 * t.abs().max(1e-3);
        h = h.min(ctrl.max_step);
        if t + h > t_end {
            h = t_end - t;
        }
        if h < min_h {
            break Termination::StepUnderflow { t };
        }

        let err = match trial_step(sys, t, &y, h, &mut ws, ctrl) {
            Ok(e) if e.is_finite() => e,
            // A stage left the model domain or overflowed: shrink and retry.
            _ => {
                rejected_steps += 1;
                h *= 0.25;
                last_rejected = true;
                continue;
            }
        };

        if err <= 1.0 {
            accepted_steps += 1;
            let t_new = if t + h >= t_end { t_end } else { t + h };
            prepare_dense(&y, h, &mut ws);

            loop {
                let ts = sample_time(next_sample);
                if ts >= t_new || ts >= t_end {
                    break;
                }
                let theta = (ts - t) / h;
                times.push(ts);
                states.push(dense_eval(&ws.cont, theta));
                next_sample += 1;
            }

            t = t_new;
            std::mem::swap(&mut y, &mut ws.y_new);
            let k7 = std::mem::take(&mut ws.k[6]);
            ws.k[6] = std::mem::replace(&mut ws.k[0], k7);

            if out_of_bounds(sys, &y, ctrl.blowup_limit) {
                times.push(t);
                states.push(y.clone());
                break Termination::Blowup { t };
            }
            if t >= t_end || (sample_time(next_sample) - t).abs() <= 1e-12 * t.abs().max(1.0) {
                times.push(t);
                states.push(y.clone());
                next_sample += 1;
            }

            let mut fac = SAFETY * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            rejected_steps += 1;
            let fac = (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            last_rejected = true;
        }
    };

    Ok(Solution {
        times,
        states,
        termination,
        accepted_steps,
        rejected_steps,
    })
}

/// Classical fourth-order Runge-Kutta with a fixed step; returns `x(t_end)`.
pub fn rk4<S: OdeSystem>(sys: &S, t0: f64, y0: &[f64], t_end: f64, h: f64) -> Result<Vec<f64>> {
    let n = y0.len();
    let steps = ((t_end - t0) / h).round().max(1.0) as usize;
    let h = (t_end - t0) / steps as f64;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        sys.rhs(t, &y, &mut k1)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.rhs(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        sys.rhs(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        sys.rhs(t + h, &tmp, &mut k4)?;
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(y)
}
