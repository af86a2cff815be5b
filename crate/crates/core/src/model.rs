//! Five-state input-affine model of a servo-electric injection unit.
//!
//! States: screw position `x1`, drive velocity `x2`, drive acceleration `x3`,
//! screw pressure `x4` and cavity pressure `x5`. The input is the servo voltage `U`:
//!
//! ```text
//! ẋ = f(x) + g·U
//! f(x) = [ x2,
//!          x3,
//!          -2·D·w0·x3 - w0²·x2,
//!          -(βs/x1)·x2 - (Q·βs/x1)·(x4 - x5),
//!          (Q·βc/v0)·(x4 - x5) ]
//! g    = [ 0, 0, K·w0², 0, 0 ]
//! Q    = π·R⁴ / (8·v_sp·L·μ)
//! ```
//!
//! All constants are used verbatim in "model units". The mix of bar, cm and SI
//! in the nominal values is not dimensionally consistent; no unit conversion is
//! applied so that the nominal values reproduce the reference simulation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{MoldError, Result};

/// Number of plant states.
pub const NX: usize = 5;

pub type Vec5 = [f64; NX];

/// Raw plant constants as they appear in configuration files.
///
/// `Default` gives the nominal machine: K = 23.4, D = 0.79, w0 = 133 1/s,
/// βs = βc = 8662 bar, R = 0.2 cm, L = 8 cm, μ = 60 kg/(m·s). The specific
/// volume and cavity reference volume are not known for the nominal machine and
/// default to 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantConstants {
    #[serde(rename = "K")]
    pub drive_gain: f64,
    #[serde(rename = "D")]
    pub damping: f64,
    /// Drive cut-off frequency, 1/s.
    pub w0: f64,
    pub beta_s: f64,
    pub beta_c: f64,
    #[serde(rename = "R")]
    pub nozzle_radius: f64,
    #[serde(rename = "L")]
    pub nozzle_length: f64,
    pub mu: f64,
    /// Specific volume shared by screw and cavity melt.
    pub v_sp: f64,
    /// Cavity reference volume.
    pub v0: f64,
    /// Symmetric voltage bound; `None` means unlimited.
    pub u_limit: Option<f64>,
}

impl Default for PlantConstants {
    fn default() -> Self {
        PlantConstants {
            drive_gain: 23.4,
            damping: 0.79,
            w0: 133.0,
            beta_s: 8662.0,
            beta_c: 8662.0,
            nozzle_radius: 0.2,
            nozzle_length: 8.0,
            mu: 60.0,
            v_sp: 1.0,
            v0: 1.0,
            u_limit: None,
        }
    }
}

/// Validated, immutable plant parameters with the nozzle conductance cached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlantParams {
    constants: PlantConstants,
    q: f64,
}

/// Nozzle conductance `π·R⁴ / (8·v_sp·L·μ)` of a Newtonian melt.
pub fn derive_q(c: &PlantConstants) -> f64 {
    PI * c.nozzle_radius.powi(4) / (8.0 * c.v_sp * c.nozzle_length * c.mu)
}

impl PlantParams {
    pub fn new(constants: PlantConstants) -> Result<Self> {
        let positive = [
            ("K > 0", constants.drive_gain),
            ("D > 0", constants.damping),
            ("w0 > 0", constants.w0),
            ("beta_s > 0", constants.beta_s),
            ("beta_c > 0", constants.beta_c),
            ("R > 0", constants.nozzle_radius),
            ("L > 0", constants.nozzle_length),
            ("mu > 0", constants.mu),
            ("v_sp > 0", constants.v_sp),
            ("v0 > 0", constants.v0),
        ];
        for (constraint, value) in positive {
            // NaN fails this comparison too.
            if !(value > 0.0 && value.is_finite()) {
                return Err(MoldError::param(constraint, value));
            }
        }
        if let Some(limit) = constants.u_limit {
            if !(limit > 0.0 && limit.is_finite()) {
                return Err(MoldError::param("u_limit > 0", limit));
            }
        }
        let q = derive_q(&constants);
        if !(q > 0.0 && q.is_finite()) {
            return Err(MoldError::param("Q > 0 and finite", q));
        }
        Ok(PlantParams { constants, q })
    }

    /// Nominal parameters with the drive gain forced to zero, for exercising
    /// degenerate-input paths in tests.
    #[cfg(test)]
    pub(crate) fn with_zero_drive_gain() -> Self {
        let mut params = Self::nominal();
        params.constants.drive_gain = 0.0;
        params
    }

    pub fn nominal() -> Self {
        Self::new(PlantConstants::default()).expect("nominal constants are valid")
    }

    pub fn constants(&self) -> &PlantConstants {
        &self.constants
    }

    /// Cached nozzle conductance.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn u_limit(&self) -> Option<f64> {
        self.constants.u_limit
    }

    /// `Q·βc/v0`, the cavity pressure rate per unit pressure drop across the nozzle.
    pub(crate) fn cavity_rate(&self) -> f64 {
        self.q * self.constants.beta_c / self.constants.v0
    }

    /// `K·w0²`, the only nonzero entry of `g`.
    pub(crate) fn input_gain(&self) -> f64 {
        self.constants.drive_gain * self.constants.w0 * self.constants.w0
    }
}

/// Plant state `(x1, x2, x3, x4, x5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec5", into = "Vec5")]
pub struct State(Vec5);

impl State {
    /// Builds a state, rejecting non-finite entries and `x1 <= 0`.
    pub fn new(x: Vec5) -> Result<Self> {
        let s = State(x);
        s.check()?;
        Ok(s)
    }

    /// Unvalidated constructor for intermediate integrator and stencil points.
    /// Every evaluation through `f_of`/`rhs` re-checks the singularity guard.
    pub(crate) fn raw(x: Vec5) -> Self {
        State(x)
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(MoldError::NonFinite { what: "state" });
        }
        if self.0[0] <= 0.0 {
            return Err(MoldError::Singularity { x1: self.0[0] });
        }
        Ok(())
    }

    pub fn as_array(&self) -> &Vec5 {
        &self.0
    }

    pub fn x1(&self) -> f64 {
        self.0[0]
    }
    pub fn x2(&self) -> f64 {
        self.0[1]
    }
    pub fn x3(&self) -> f64 {
        self.0[2]
    }
    pub fn x4(&self) -> f64 {
        self.0[3]
    }
    pub fn x5(&self) -> f64 {
        self.0[4]
    }

    /// Cavity pressure, the controlled output.
    pub fn output(&self) -> f64 {
        self.0[4]
    }
}

impl TryFrom<Vec5> for State {
    type Error = MoldError;
    fn try_from(x: Vec5) -> Result<Self> {
        State::new(x)
    }
}

impl From<State> for Vec5 {
    fn from(s: State) -> Vec5 {
        s.0
    }
}

/// Drift vector field `f(x)`.
pub fn f_of(x: &State, params: &PlantParams) -> Result<Vec5> {
    x.check()?;
    let c = &params.constants;
    let [x1, x2, x3, x4, x5] = x.0;
    let q = params.q;
    let dp = x4 - x5;
    let out = [
        x2,
        x3,
        -2.0 * c.damping * c.w0 * x3 - c.w0 * c.w0 * x2,
        -(c.beta_s / x1) * x2 - (q * c.beta_s / x1) * dp,
        (q * c.beta_c / c.v0) * dp,
    ];
    if out.iter().any(|v| !v.is_finite()) {
        return Err(MoldError::Singularity { x1 });
    }
    Ok(out)
}

/// Input vector field `g`, constant in the state.
pub fn g_of(params: &PlantParams) -> Vec5 {
    [0.0, 0.0, params.input_gain(), 0.0, 0.0]
}

/// `f(x) + g·u`.
pub fn rhs(x: &State, u: f64, params: &PlantParams) -> Result<Vec5> {
    if !u.is_finite() {
        return Err(MoldError::NonFinite { what: "input" });
    }
    let mut dx = f_of(x, params)?;
    let g = g_of(params);
    for (d, gi) in dx.iter_mut().zip(g) {
        *d += gi * u;
    }
    Ok(dx)
}
