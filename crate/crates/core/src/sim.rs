//! Fixed-step RK4 simulation of the plant under open-loop input or the
//! linearising controller, with trajectory logging and tracking metrics.

use serde::{Deserialize, Serialize};

use crate::controller::{ControlDecision, ControlLaw, Gains};
use crate::error::{MoldError, Result};
use crate::model::{rhs, PlantParams, State, Vec5};
use crate::reference::Profile;

/// Default integration step, s. `dt·w0 ≈ 0.013` for the nominal drive.
pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_T_END: f64 = 20.0;
pub const DEFAULT_X1_FLOOR: f64 = 1e-6;
pub const DEFAULT_DIVERGENCE_LIMIT: f64 = 1e12;
/// Initial screw position when none is configured.
pub const DEFAULT_X1_INIT: f64 = 10.0;
/// Settling band as a fraction of the setpoint.
pub const SETTLING_BAND: f64 = 0.02;

/// Default initial state: screw charged at `x1 = 10`, everything else at rest.
pub fn default_x0() -> State {
    State::new([DEFAULT_X1_INIT, 0.0, 0.0, 0.0, 0.0]).expect("valid default state")
}

/// One classic Runge–Kutta step of `ẏ = f(t, y)`.
pub fn rk4<const N: usize, F>(y: &[f64; N], t: f64, dt: f64, mut f: F) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let axpy = |a: &[f64; N], s: f64, b: &[f64; N]| -> [f64; N] {
        std::array::from_fn(|i| a[i] + s * b[i])
    };
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * dt, &axpy(y, 0.5 * dt, &k1))?;
    let k3 = f(t + 0.5 * dt, &axpy(y, 0.5 * dt, &k2))?;
    let k4 = f(t + dt, &axpy(y, dt, &k3))?;
    Ok(std::array::from_fn(|i| {
        y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}

/// RK4 step of the plant with the input held at `u` for the whole step.
pub fn rk4_step(x: &State, u: f64, dt: f64, params: &PlantParams) -> Result<State> {
    if !(dt > 0.0) {
        return Err(MoldError::param("dt > 0", dt));
    }
    let next = rk4(x.as_array(), 0.0, dt, |_, y| {
        rhs(&State::raw(*y), u, params)
    })?;
    State::new(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum ControlMode {
    /// Control law evaluated at every Runge–Kutta stage.
    Continuous,
    /// Control computed at sampling instants and held in between.
    Zoh { sample_period: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub x0: State,
    pub profile: Profile,
    /// `None` runs open loop at `open_loop_u`.
    pub gains: Option<Gains>,
    pub open_loop_u: f64,
    pub dt: f64,
    pub t_end: f64,
    pub control_mode: ControlMode,
    pub log_stride: usize,
    /// Abort with `SingularityAbort` once `x1` drops to this value.
    pub x1_floor: f64,
    /// Abort with `Diverged` once any `|x_i|` exceeds this value.
    pub divergence_limit: f64,
}

impl SimConfig {
    pub fn new(x0: State, profile: Profile, gains: Option<Gains>) -> Self {
        SimConfig {
            x0,
            profile,
            gains,
            open_loop_u: 0.0,
            dt: DEFAULT_DT,
            t_end: DEFAULT_T_END,
            control_mode: ControlMode::Continuous,
            log_stride: 1,
            x1_floor: DEFAULT_X1_FLOOR,
            divergence_limit: DEFAULT_DIVERGENCE_LIMIT,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    fn zoh_ratio(&self) -> Option<usize> {
        match self.control_mode {
            ControlMode::Continuous => None,
            ControlMode::Zoh { sample_period } => Some((sample_period / self.dt).round() as usize),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(MoldError::param("dt > 0", self.dt));
        }
        if !(self.t_end > self.dt && self.t_end.is_finite()) {
            return Err(MoldError::param("t_end > dt", self.t_end));
        }
        if let ControlMode::Zoh { sample_period } = self.control_mode {
            if !(sample_period >= self.dt) {
                return Err(MoldError::param("sample_period >= dt", sample_period));
            }
            let ratio = sample_period / self.dt;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio {
                return Err(MoldError::param(
                    "sample_period is an integer multiple of dt",
                    sample_period,
                ));
            }
        }
        if self.log_stride == 0 {
            return Err(MoldError::param("log_stride >= 1", 0.0));
        }
        if !(self.x1_floor >= 0.0) {
            return Err(MoldError::param("x1_floor >= 0", self.x1_floor));
        }
        if !(self.x0.x1() > self.x1_floor) {
            return Err(MoldError::param("x0.x1 > x1_floor", self.x0.x1()));
        }
        if !(self.divergence_limit > 0.0) {
            return Err(MoldError::param(
                "divergence_limit > 0",
                self.divergence_limit,
            ));
        }
        if !self.open_loop_u.is_finite() {
            return Err(MoldError::param("open_loop_u finite", self.open_loop_u));
        }
        self.profile.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Row {
    pub t: f64,
    pub x: Vec5,
    pub yd: f64,
    pub e: f64,
    pub u: f64,
    /// Synthetic input; NaN in open loop.
    pub v: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SimStatus {
    Completed,
    SingularityAbort,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// `f64::INFINITY` when the output never stays inside the band.
    pub settling_time_2pct: f64,
    pub overshoot_pct: f64,
    pub ise: f64,
    pub iae: f64,
    pub final_error: f64,
}

impl Metrics {
    pub fn settled(&self) -> bool {
        self.settling_time_2pct.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub rows: Vec<Row>,
    pub status: SimStatus,
    /// Present only for completed runs.
    pub metrics: Option<Metrics>,
    /// Time of the last successfully reached state.
    pub t_stop: f64,
    pub message: Option<String>,
}

impl SimResult {
    pub fn saturated_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.saturated).count() as f64 / self.rows.len() as f64
    }
}

fn abort_status(err: &MoldError) -> SimStatus {
    match err {
        MoldError::Singularity { .. } | MoldError::DegenerateDecoupling { .. } => {
            SimStatus::SingularityAbort
        }
        _ => SimStatus::Diverged,
    }
}

fn open_loop_decision(u: f64, params: &PlantParams, e: f64) -> ControlDecision {
    let (u, saturated) = match params.u_limit() {
        Some(lim) if u.abs() > lim => (u.clamp(-lim, lim), true),
        _ => (u, false),
    };
    ControlDecision {
        u,
        v: f64::NAN,
        e_derivs: [e, f64::NAN, f64::NAN, f64::NAN],
        saturated,
    }
}

/// Runs `cfg` to completion or to the first abort. Aborts are reported through
/// `status`; only an invalid configuration is an `Err`.
pub fn simulate(cfg: &SimConfig, params: &PlantParams) -> Result<SimResult> {
    cfg.validate()?;
    let n = cfg.steps();
    let law = cfg.gains.map(ControlLaw::new);
    let zoh = cfg.zoh_ratio();
    let profile = cfg.profile;

    let decide = |x: &State, t: f64| -> Result<ControlDecision> {
        match &law {
            Some(law) => law.decide(x, &profile.eval(t), params),
            None => Ok(open_loop_decision(
                cfg.open_loop_u,
                params,
                x.output() - profile.eval(t).yd,
            )),
        }
    };

    let mut rows = Vec::with_capacity(n / cfg.log_stride + 2);
    let mut x = cfg.x0;
    let mut held: Option<ControlDecision> = None;

    let abort = |rows: Vec<Row>, t: f64, status: SimStatus, message: String| SimResult {
        rows,
        status,
        metrics: None,
        t_stop: t,
        message: Some(message),
    };

    for i in 0..=n {
        let t = i as f64 * cfg.dt;

        // Sampled-data and open-loop modes hold the input across the step.
        let hold_step = law.is_none() || zoh.is_some();
        if hold_step && (held.is_none() || zoh.is_some_and(|m| i % m == 0)) {
            match decide(&x, t) {
                Ok(d) => held = Some(d),
                Err(e) => return Ok(abort(rows, t, abort_status(&e), e.to_string())),
            }
        }

        if i % cfg.log_stride == 0 || i == n {
            let d = match held {
                Some(d) if hold_step => d,
                _ => match decide(&x, t) {
                    Ok(d) => d,
                    Err(e) => return Ok(abort(rows, t, abort_status(&e), e.to_string())),
                },
            };
            let yd = profile.eval(t).yd;
            rows.push(Row {
                t,
                x: *x.as_array(),
                yd,
                e: x.output() - yd,
                u: d.u,
                v: d.v,
                saturated: d.saturated,
            });
        }
        if i == n {
            break;
        }

        let step = match held {
            Some(d) if hold_step => rk4(x.as_array(), t, cfg.dt, |_, y| {
                rhs(&State::raw(*y), d.u, params)
            }),
            _ => rk4(x.as_array(), t, cfg.dt, |ts, y| {
                let xs = State::raw(*y);
                let d = decide(&xs, ts)?;
                rhs(&xs, d.u, params)
            }),
        };
        let next = match step {
            Ok(v) => v,
            Err(e) => return Ok(abort(rows, t, abort_status(&e), e.to_string())),
        };
        let t_next = (i + 1) as f64 * cfg.dt;
        if next
            .iter()
            .any(|v| !v.is_finite() || v.abs() > cfg.divergence_limit)
        {
            return Ok(abort(
                rows,
                t,
                SimStatus::Diverged,
                format!(
                    "state left |x_i| <= {:e} at t = {t_next}",
                    cfg.divergence_limit
                ),
            ));
        }
        if next[0] <= cfg.x1_floor {
            return Ok(abort(
                rows,
                t,
                SimStatus::SingularityAbort,
                format!(
                    "x1 = {} fell to the floor {} at t = {t_next}",
                    next[0], cfg.x1_floor
                ),
            ));
        }
        x = State::raw(next);
    }

    let metrics = metrics(&rows, &profile);
    Ok(SimResult {
        rows,
        status: SimStatus::Completed,
        metrics: Some(metrics),
        t_stop: n as f64 * cfg.dt,
        message: None,
    })
}

/// Tracking metrics over logged rows.
///
/// Settling and overshoot are measured against the profile's final level;
/// `ise`/`iae` are left Riemann sums of the tracking error over the log spacing.
pub fn metrics(rows: &[Row], profile: &Profile) -> Metrics {
    let setpoint = profile.final_level();
    let band = SETTLING_BAND * setpoint.abs();

    let settling_time_2pct = match rows.iter().rposition(|r| (r.x[4] - setpoint).abs() > band) {
        None => rows.first().map_or(0.0, |r| r.t),
        Some(last) if last + 1 < rows.len() => rows[last + 1].t,
        Some(_) => f64::INFINITY,
    };

    let overshoot_pct = match rows.first() {
        Some(first) if first.x[4] != setpoint => {
            let step = setpoint - first.x[4];
            let peak = rows
                .iter()
                .map(|r| (r.x[4] - setpoint) * step.signum())
                .fold(0.0f64, f64::max);
            100.0 * peak / step.abs()
        }
        _ => 0.0,
    };

    let (mut ise, mut iae) = (0.0, 0.0);
    for w in rows.windows(2) {
        let dt = w[1].t - w[0].t;
        ise += w[0].e * w[0].e * dt;
        iae += w[0].e.abs() * dt;
    }

    Metrics {
        settling_time_2pct,
        overshoot_pct,
        ise,
        iae,
        final_error: rows.last().map_or(0.0, |r| r.e),
    }
}
