//! Cavity-pressure reference trajectories with analytic derivatives through order 4.

use serde::{Deserialize, Serialize};

use crate::error::{MoldError, Result};

/// Reference value and its first four time derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ReferenceSample {
    pub yd: f64,
    pub yd1: f64,
    pub yd2: f64,
    pub yd3: f64,
    pub yd4: f64,
}

impl ReferenceSample {
    pub fn constant(level: f64) -> Self {
        ReferenceSample {
            yd: level,
            ..Default::default()
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.yd, self.yd1, self.yd2, self.yd3, self.yd4]
    }

    fn from_array(v: [f64; 5]) -> Self {
        ReferenceSample {
            yd: v[0],
            yd1: v[1],
            yd2: v[2],
            yd3: v[3],
            yd4: v[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum Profile {
    Constant {
        level: f64,
    },
    /// Linear ramp from `start` at t = 0 to `end` at `t_ramp`, then hold.
    RampHold {
        start: f64,
        end: f64,
        t_ramp: f64,
    },
    /// Degree-9 blend from `start` to `end` over `[t0, t1]`, with derivatives
    /// up to order 4 vanishing at both ends.
    SmoothStep {
        start: f64,
        end: f64,
        t0: f64,
        t1: f64,
    },
}

/// `s(τ) = 126τ⁵ - 420τ⁶ + 540τ⁷ - 315τ⁸ + 70τ⁹`, coefficients by ascending power.
const BLEND: [f64; 10] = [0.0, 0.0, 0.0, 0.0, 0.0, 126.0, -420.0, 540.0, -315.0, 70.0];

/// k-th derivative of the blend polynomial at `tau`.
fn blend_derivative(tau: f64, k: usize) -> f64 {
    let mut coeffs = BLEND.to_vec();
    for _ in 0..k {
        coeffs = coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c * i as f64)
            .collect();
    }
    coeffs.iter().rev().fold(0.0, |acc, c| acc * tau + c)
}

impl Profile {
    /// Level the reference settles to.
    pub fn final_level(&self) -> f64 {
        match *self {
            Profile::Constant { level } => level,
            Profile::RampHold { end, .. } | Profile::SmoothStep { end, .. } => end,
        }
    }

    pub fn initial_level(&self) -> f64 {
        match *self {
            Profile::Constant { level } => level,
            Profile::RampHold { start, .. } | Profile::SmoothStep { start, .. } => start,
        }
    }

    /// Whether every derivative through order 4 is continuous.
    pub fn is_c4(&self) -> bool {
        !matches!(self, Profile::RampHold { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(MoldError::InvalidProfile(format!("{name} must be finite")))
            }
        };
        match *self {
            Profile::Constant { level } => finite("level", level),
            Profile::RampHold { start, end, t_ramp } => {
                finite("start", start)?;
                finite("end", end)?;
                if !(t_ramp > 0.0 && t_ramp.is_finite()) {
                    return Err(MoldError::InvalidProfile(format!(
                        "t_ramp > 0 (got {t_ramp})"
                    )));
                }
                Ok(())
            }
            Profile::SmoothStep { start, end, t0, t1 } => {
                finite("start", start)?;
                finite("end", end)?;
                finite("t0", t0)?;
                finite("t1", t1)?;
                if !(t1 > t0) {
                    return Err(MoldError::InvalidProfile(format!(
                        "t1 > t0 (got t0 = {t0}, t1 = {t1})"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Sample at time `t`. Before the profile starts the initial level is held.
    /// `RampHold` returns right-sided derivatives at its corners.
    pub fn eval(&self, t: f64) -> ReferenceSample {
        match *self {
            Profile::Constant { level } => ReferenceSample::constant(level),
            Profile::RampHold { start, end, t_ramp } => {
                if t < 0.0 {
                    ReferenceSample::constant(start)
                } else if t < t_ramp {
                    let slope = (end - start) / t_ramp;
                    ReferenceSample {
                        yd: start + slope * t,
                        yd1: slope,
                        ..Default::default()
                    }
                } else {
                    ReferenceSample::constant(end)
                }
            }
            Profile::SmoothStep { start, end, t0, t1 } => {
                if t <= t0 {
                    ReferenceSample::constant(start)
                } else if t >= t1 {
                    ReferenceSample::constant(end)
                } else {
                    let dur = t1 - t0;
                    let tau = (t - t0) / dur;
                    let span = end - start;
                    let mut v = [0.0; 5];
                    let mut time_scale = 1.0;
                    for (k, slot) in v.iter_mut().enumerate() {
                        *slot = span * blend_derivative(tau, k) / time_scale;
                        time_scale *= dur;
                    }
                    v[0] += start;
                    ReferenceSample::from_array(v)
                }
            }
        }
    }

    /// Time span over which the profile changes; used to size sampling grids.
    fn active_span(&self) -> (f64, f64) {
        match *self {
            Profile::Constant { .. } => (0.0, 1.0),
            Profile::RampHold { t_ramp, .. } => (0.0, t_ramp),
            Profile::SmoothStep { t0, t1, .. } => (t0.max(0.0), t1),
        }
    }

    /// Times where derivatives jump.
    fn corners(&self) -> Vec<f64> {
        match *self {
            Profile::RampHold { t_ramp, .. } => vec![0.0, t_ramp],
            _ => Vec::new(),
        }
    }
}

pub fn eval_profile(p: &Profile, t: f64) -> ReferenceSample {
    p.eval(t)
}

/// Number of sample times used by [`validate_profile`].
pub const PROFILE_CHECK_SAMPLES: usize = 50;
/// Relative tolerance of the derivative-consistency check.
pub const PROFILE_CHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    /// False for profiles whose higher derivatives jump (`RampHold`).
    pub c4_smooth: bool,
    /// Worst relative mismatch between the finite difference of channel k-1 and channel k.
    pub max_rel_dev: [f64; 4],
    pub samples: usize,
    pub pass: bool,
}

/// Checks invariants and cross-checks each derivative channel against a
/// central difference of the channel below it.
pub fn validate_profile(p: &Profile) -> Result<ProfileReport> {
    p.validate()?;
    let (lo, hi) = p.active_span();
    let dur = hi - lo;
    let h = 1e-4 * dur;
    let span = (p.final_level() - p.initial_level()).abs();
    let horizon = hi + 0.5 * dur;
    let corners = p.corners();

    let mut max_rel_dev = [0.0f64; 4];
    let mut samples = 0;
    for i in 0..PROFILE_CHECK_SAMPLES {
        let t = horizon * (i as f64 + 0.5) / PROFILE_CHECK_SAMPLES as f64;
        if corners.iter().any(|c| (t - c).abs() <= 2.0 * h) {
            continue;
        }
        samples += 1;
        let plus = p.eval(t + h).as_array();
        let minus = p.eval(t - h).as_array();
        let exact = p.eval(t).as_array();
        for k in 1..=4 {
            let fd = (plus[k - 1] - minus[k - 1]) / (2.0 * h);
            let scale = exact[k].abs().max(span / dur.powi(k as i32)).max(1.0);
            max_rel_dev[k - 1] = max_rel_dev[k - 1].max((fd - exact[k]).abs() / scale);
        }
    }
    Ok(ProfileReport {
        c4_smooth: p.is_c4(),
        max_rel_dev,
        samples,
        pass: max_rel_dev.iter().all(|d| *d <= PROFILE_CHECK_TOLERANCE),
    })
}
