//! Input-output linearising cavity-pressure controller.
//!
//! With relative degree 4 the output obeys `y⁗ = L_f⁴h + L_gL_f³h·U`, so
//! `U = (v - L_f⁴h) / L_gL_f³h` turns the loop into `y⁗ = v`. The synthetic
//! input `v` is the reference fourth derivative minus gain-weighted error
//! derivatives, and the tracking error then follows a linear fourth-order ODE
//! whose stability is decided by [`routh_hurwitz`].

use serde::{Deserialize, Serialize};

use crate::error::{MoldError, Result};
use crate::lie::{lie_chain, LieChain};
use crate::model::{PlantParams, State};
use crate::reference::ReferenceSample;

/// Which error derivative each of `k1..k4` multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GainMapping {
    /// `v = yd⁗ - k1·e⃛ - k2·ë - k3·ė - k4·e`
    Descending,
    /// `v = yd⁗ - k4·e⃛ - k3·ë - k2·ė - k1·e`
    Ascending,
}

impl GainMapping {
    pub const ALL: [GainMapping; 2] = [GainMapping::Descending, GainMapping::Ascending];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub mapping: GainMapping,
}

impl Gains {
    pub fn new(k: [f64; 4], mapping: GainMapping) -> Result<Self> {
        for (i, v) in k.iter().enumerate() {
            if !v.is_finite() {
                return Err(MoldError::param(format!("k{} finite", i + 1), *v));
            }
        }
        Ok(Gains {
            k1: k[0],
            k2: k[1],
            k3: k[2],
            k4: k[3],
            mapping,
        })
    }

    /// The constant-setpoint gain set k1 = 0.7, k2 = 2, k3 = 30, k4 = 2.5.
    pub fn baseline(mapping: GainMapping) -> Self {
        Gains {
            k1: 0.7,
            k2: 2.0,
            k3: 30.0,
            k4: 2.5,
            mapping,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.k1, self.k2, self.k3, self.k4]
    }

    /// Weights on `(e, ė, ë, e⃛)`. These are also `(a0, a1, a2, a3)` of the
    /// closed-loop error polynomial `s⁴ + a3·s³ + a2·s² + a1·s + a0`.
    pub fn error_weights(&self) -> [f64; 4] {
        match self.mapping {
            GainMapping::Descending => [self.k4, self.k3, self.k2, self.k1],
            GainMapping::Ascending => [self.k1, self.k2, self.k3, self.k4],
        }
    }
}

/// `(e, ė, ë, e⃛)` reconstructed from the state through the Lie chain.
pub fn error_derivatives(x: &State, r: &ReferenceSample, params: &PlantParams) -> Result<[f64; 4]> {
    let chain = lie_chain(x, params)?;
    Ok(errors_from_chain(&chain, r))
}

fn errors_from_chain(chain: &LieChain, r: &ReferenceSample) -> [f64; 4] {
    [
        chain.lf[0] - r.yd,
        chain.lf[1] - r.yd1,
        chain.lf[2] - r.yd2,
        chain.lf[3] - r.yd3,
    ]
}

pub fn synthetic_input(e: &[f64; 4], yd4: f64, gains: &Gains) -> f64 {
    let w = gains.error_weights();
    yd4 - (w[0] * e[0] + w[1] * e[1] + w[2] * e[2] + w[3] * e[3])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlDecision {
    pub u: f64,
    pub v: f64,
    pub e_derivs: [f64; 4],
    pub saturated: bool,
}

/// Default relative threshold below which the input coefficient is treated as zero.
pub const DEFAULT_DECOUPLING_EPS: f64 = 1e-12;

/// Feedback-linearising control law.
///
/// Decoupling is declared degenerate when
/// `|L_gL_f³h| < eps · max(|v - L_f⁴h|, 1)`, i.e. when the commanded voltage
/// would exceed `1/eps` times the correction it has to produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlLaw {
    pub gains: Gains,
    pub decoupling_eps: f64,
}

impl ControlLaw {
    pub fn new(gains: Gains) -> Self {
        ControlLaw {
            gains,
            decoupling_eps: DEFAULT_DECOUPLING_EPS,
        }
    }

    pub fn decide(
        &self,
        x: &State,
        r: &ReferenceSample,
        params: &PlantParams,
    ) -> Result<ControlDecision> {
        let chain = lie_chain(x, params)?;
        let e = errors_from_chain(&chain, r);
        let v = synthetic_input(&e, r.yd4, &self.gains);
        let numerator = v - chain.lf[4];
        let threshold = self.decoupling_eps * numerator.abs().max(1.0);
        if !(chain.lglf3.abs() >= threshold) {
            return Err(MoldError::DegenerateDecoupling {
                value: chain.lglf3,
                threshold,
            });
        }
        let raw = numerator / chain.lglf3;
        if !raw.is_finite() {
            return Err(MoldError::NonFinite { what: "control" });
        }
        let (u, saturated) = match params.u_limit() {
            Some(lim) if raw.abs() > lim => (raw.clamp(-lim, lim), true),
            _ => (raw, false),
        };
        Ok(ControlDecision {
            u,
            v,
            e_derivs: e,
            saturated,
        })
    }
}

pub fn control_law(
    x: &State,
    r: &ReferenceSample,
    gains: &Gains,
    params: &PlantParams,
) -> Result<ControlDecision> {
    ControlLaw::new(*gains).decide(x, r, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stability {
    Stable,
    Unstable,
    /// A Routh pivot was exactly zero.
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouthReport {
    pub mapping: GainMapping,
    /// Characteristic polynomial coefficients, highest power first.
    pub polynomial: Vec<f64>,
    pub first_column: Vec<f64>,
    /// Number of sign changes in the first column (right half-plane roots).
    pub sign_changes: usize,
    pub verdict: Stability,
}

/// First column of the Routh array of `coeffs` (highest power first).
/// Stops early at the first zero pivot.
pub fn routh_first_column(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    if n == 0 {
        return Vec::new();
    }
    let width = n.div_ceil(2);
    let row = |start: usize| -> Vec<f64> {
        let mut r: Vec<f64> = coeffs.iter().skip(start).step_by(2).copied().collect();
        r.resize(width, 0.0);
        r
    };
    let mut prev = row(0);
    let mut cur = row(1);
    let mut column = vec![prev[0]];
    for _ in 1..n {
        column.push(cur[0]);
        if cur[0] == 0.0 {
            break;
        }
        let mut next = vec![0.0; width];
        for j in 0..width - 1 {
            next[j] = (cur[0] * prev[j + 1] - prev[0] * cur[j + 1]) / cur[0];
        }
        prev = cur;
        cur = next;
    }
    column
}

/// Routh–Hurwitz classification of a real polynomial (highest power first).
pub fn classify_polynomial(coeffs: &[f64]) -> (Vec<f64>, usize, Stability) {
    let column = routh_first_column(coeffs);
    let sign_changes = column
        .windows(2)
        .filter(|w| w[0] != 0.0 && w[1] != 0.0 && w[0].signum() != w[1].signum())
        .count();
    let verdict = if column.len() < coeffs.len() || column.contains(&0.0) {
        Stability::Marginal
    } else if sign_changes == 0 {
        Stability::Stable
    } else {
        Stability::Unstable
    };
    (column, sign_changes, verdict)
}

/// Stability of the closed-loop error dynamics `s⁴ + a3·s³ + a2·s² + a1·s + a0`.
pub fn routh_hurwitz(gains: &Gains) -> RouthReport {
    let [a0, a1, a2, a3] = gains.error_weights();
    let polynomial = vec![1.0, a3, a2, a1, a0];
    let (first_column, sign_changes, verdict) = classify_polynomial(&polynomial);
    RouthReport {
        mapping: gains.mapping,
        polynomial,
        first_column,
        sign_changes,
        verdict,
    }
}
