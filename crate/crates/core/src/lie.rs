//! Lie derivatives of the cavity-pressure output `h(x) = x5`.
//!
//! Closed forms come from repeated chain rule on the model. Writing
//! `d = x4 - x5`, `a = Q·βc/v0`, `p = βs`, `s = Q·βs`:
//!
//! ```text
//! ḋ   = -p·x2/x1 - s·d/x1 - a·d
//! d̈   = -p·x3/x1 + p·x2²/x1² - (s/x1 + a)·ḋ + s·d·x2/x1²
//! d⃛   = -p·f3/x1 + 3p·x2·x3/x1² - 2p·x2³/x1³ + 2s·x2·ḋ/x1²
//!        - (s/x1 + a)·d̈ + s·d·x3/x1² - 2s·d·x2²/x1³
//! L_f^k h = a·d^(k-1)          (k = 1..4)
//! L_g L_f³ h = -a·p·K·w0² / x1
//! ```
//!
//! `ḋ` is free of `x3`, so the input first reaches the output at the fourth
//! derivative (relative degree 4).

use serde::Serialize;

use crate::error::{MoldError, Result};
use crate::model::{f_of, g_of, PlantParams, State, Vec5, NX};

/// Highest Lie derivative order handled here.
pub const MAX_ORDER: usize = 4;

/// Relative tolerances of the analytic chain against [`fd_lie`], indexed by order - 1.
pub const FD_LIE_TOLERANCE: [f64; MAX_ORDER] = [1e-7, 1e-6, 1e-5, 1e-4];
/// Relative tolerance of [`lglf3`] against [`fd_lglf3`].
pub const FD_LGLF3_TOLERANCE: f64 = 1e-6;
/// Bound on `|L_g L_f^k h|`, k < 3, relative to `max(|L_g L_f³ h|, 1)`.
pub const STRUCTURAL_ZERO_TOLERANCE: f64 = 1e-8;

/// Finite-difference step control. Per-coordinate step is
/// `max(max(|x_i|, 1)·step_rel, step_floor)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdConfig {
    pub step_rel: f64,
    pub step_floor: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            step_rel: 1e-5,
            step_floor: 1e-8,
        }
    }
}

impl FdConfig {
    fn step(&self, xi: f64) -> f64 {
        (xi.abs().max(1.0) * self.step_rel).max(self.step_floor)
    }
}

/// Values of `L_f^k h` for k = 0..4 and `L_g L_f³ h` at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LieChain {
    pub lf: [f64; MAX_ORDER + 1],
    pub lglf3: f64,
}

/// Evaluates the full chain at once; this is what the controller uses.
pub fn lie_chain(x: &State, params: &PlantParams) -> Result<LieChain> {
    x.check()?;
    let c = params.constants();
    let [x1, x2, x3, x4, x5] = *x.as_array();
    let a = params.cavity_rate();
    let p = c.beta_s;
    let s = params.q() * c.beta_s;
    let f3 = -2.0 * c.damping * c.w0 * x3 - c.w0 * c.w0 * x2;

    let inv = 1.0 / x1;
    let inv2 = inv * inv;
    let inv3 = inv2 * inv;
    let leak = s * inv + a;

    let d0 = x4 - x5;
    let d1 = -p * x2 * inv - s * d0 * inv - a * d0;
    let d2 = -p * x3 * inv + p * x2 * x2 * inv2 - leak * d1 + s * d0 * x2 * inv2;
    let d3 = -p * f3 * inv + 3.0 * p * x2 * x3 * inv2 - 2.0 * p * x2 * x2 * x2 * inv3
        + 2.0 * s * x2 * d1 * inv2
        - leak * d2
        + s * d0 * x3 * inv2
        - 2.0 * s * d0 * x2 * x2 * inv3;

    let chain = LieChain {
        lf: [x5, a * d0, a * d1, a * d2, a * d3],
        lglf3: -a * p * params.input_gain() * inv,
    };
    if chain.lf.iter().any(|v| !v.is_finite()) || !chain.lglf3.is_finite() {
        return Err(MoldError::Singularity { x1 });
    }
    Ok(chain)
}

/// Analytic `L_f^order h`, order in 0..=4.
pub fn lie_f(x: &State, params: &PlantParams, order: usize) -> Result<f64> {
    if order > MAX_ORDER {
        return Err(MoldError::OrderOutOfRange(order));
    }
    Ok(lie_chain(x, params)?.lf[order])
}

/// Analytic `L_g L_f³ h = -K·w0²·Q·βs·βc / (v0·x1)`.
pub fn lglf3(x: &State, params: &PlantParams) -> Result<f64> {
    Ok(lie_chain(x, params)?.lglf3)
}

/// Central-difference estimate of `∇φ(x)·dir`. Components with `dir_i == 0`
/// contribute exactly zero and are skipped.
fn fd_directional<F>(x: &State, dir: &Vec5, cfg: &FdConfig, phi: F) -> Result<f64>
where
    F: Fn(&State) -> Result<f64>,
{
    let base = *x.as_array();
    let mut acc = 0.0;
    for i in 0..NX {
        if dir[i] == 0.0 {
            continue;
        }
        let h = cfg.step(base[i]);
        let mut plus = base;
        let mut minus = base;
        plus[i] += h;
        minus[i] -= h;
        let (plus, minus) = (State::raw(plus), State::raw(minus));
        plus.check()?;
        minus.check()?;
        let slope = (phi(&plus)? - phi(&minus)?) / (2.0 * h);
        acc += slope * dir[i];
    }
    Ok(acc)
}

/// Finite-difference estimate of `L_f^order h`, order in 1..=4.
///
/// Differentiates the analytic order-(k-1) form along `f(x)`; at order 1 the
/// differentiated function is `h = x5` itself. Agreement at every order
/// therefore certifies the chain inductively from `h`.
pub fn fd_lie(x: &State, params: &PlantParams, order: usize, cfg: &FdConfig) -> Result<f64> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(MoldError::OrderOutOfRange(order));
    }
    let f = f_of(x, params)?;
    if order == 1 {
        fd_directional(x, &f, cfg, |y| Ok(y.output()))
    } else {
        fd_directional(x, &f, cfg, |y| lie_f(y, params, order - 1))
    }
}

/// Finite-difference estimate of `L_g L_f^order h` from the analytic `L_f^order h`.
pub fn fd_lg_lie(x: &State, params: &PlantParams, order: usize, cfg: &FdConfig) -> Result<f64> {
    let g = g_of(params);
    fd_directional(x, &g, cfg, |y| lie_f(y, params, order))
}

/// Finite-difference estimate of `L_g L_f³ h`.
pub fn fd_lglf3(x: &State, params: &PlantParams, cfg: &FdConfig) -> Result<f64> {
    fd_lg_lie(x, params, 3, cfg)
}

/// `|a - b| / max(|b|, 1)`.
pub fn rel_err(estimate: f64, reference: f64) -> f64 {
    (estimate - reference).abs() / reference.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeDegreeReport {
    /// `L_g h, L_g L_f h, L_g L_f² h` from the closed forms (zero by structure).
    pub analytic_lower: [f64; 3],
    /// Finite-difference estimates of the same three quantities.
    pub fd_lower: [f64; 3],
    /// `max(|L_g L_f³ h|, 1)`, the scale for the structural-zero test.
    pub scale: f64,
    pub lglf3: f64,
    pub fd_lglf3: f64,
    pub lglf3_rel_err: f64,
    /// 4 when the check passes, otherwise the first order with a nonzero input coefficient, if any.
    pub relative_degree: Option<usize>,
    pub pass: bool,
}

/// Confirms that the input first appears in the fourth output derivative.
pub fn relative_degree_check(
    x: &State,
    params: &PlantParams,
    cfg: &FdConfig,
) -> Result<RelativeDegreeReport> {
    let chain = lie_chain(x, params)?;
    // g only drives x3, and h, L_f h and L_f² h do not depend on x3.
    let analytic_lower = [0.0; 3];
    let mut fd_lower = [0.0; 3];
    for (k, slot) in fd_lower.iter_mut().enumerate() {
        *slot = fd_lg_lie(x, params, k, cfg)?;
    }
    let fd3 = fd_lglf3(x, params, cfg)?;
    let scale = chain.lglf3.abs().max(1.0);
    let lglf3_rel_err = (fd3 - chain.lglf3).abs() / chain.lglf3.abs().max(f64::MIN_POSITIVE);

    let lower_vanish = fd_lower
        .iter()
        .map(|v| v.abs() < STRUCTURAL_ZERO_TOLERANCE * scale)
        .collect::<Vec<_>>();
    let fourth_ok = chain.lglf3 != 0.0
        && fd3.signum() == chain.lglf3.signum()
        && lglf3_rel_err <= FD_LGLF3_TOLERANCE;
    let relative_degree = match lower_vanish.iter().position(|ok| !ok) {
        Some(k) => Some(k + 1),
        None if fourth_ok => Some(4),
        None => None,
    };
    Ok(RelativeDegreeReport {
        analytic_lower,
        fd_lower,
        scale,
        lglf3: chain.lglf3,
        fd_lglf3: fd3,
        lglf3_rel_err,
        relative_degree,
        pass: relative_degree == Some(4),
    })
}

/// Literature closed forms for `L_g L_f³ h` and `L_f⁴ h`, transcribed term by term.
///
/// Only used to measure their deviation from the derived chain, never for control.
pub mod published {
    use super::*;

    /// Literature input coefficient `K·βs·w0²/x1`.
    pub fn lglf3(x: &State, params: &PlantParams) -> Result<f64> {
        x.check()?;
        let c = params.constants();
        Ok(c.drive_gain * c.beta_s * c.w0 * c.w0 / x.x1())
    }

    /// Literature fourth Lie derivative.
    pub fn lf4(x: &State, params: &PlantParams) -> Result<f64> {
        x.check()?;
        let c = params.constants();
        let [x1, x2, x3, x4, x5] = *x.as_array();
        let (q, bs, bc, v0) = (params.q(), c.beta_s, c.beta_c, c.v0);
        let (d, w0) = (c.damping, c.w0);

        let t1 = q.powi(2) * bs.powi(2) / v0 * (x3 / x1.powi(2) - 2.0 * x2.powi(2) / x1.powi(3));
        let t2 = (q.powi(3) * bs.powi(3) * bc / (v0 * x1.powi(3))
            + q.powi(2) * bs.powi(2) * bc / (v0.powi(2) * x1.powi(3)) * x2
            + q.powi(3) * bc.powi(2) * bs.powi(2) / (v0.powi(2) * x1.powi(2)) * x2
            + q.powi(3) * bc.powi(3) * bs / (v0.powi(3) * x1))
            * (-x2 - q * (x4 - x5));
        let t3 = (2.0 * q.powi(3) * bs.powi(2) * bc / (v0 * x1.powi(3))
            + q.powi(3) * bc.powi(2) * bs / (v0.powi(2) * x1.powi(2)))
            * (x2 * x5 - x4 * x2);
        let t4 = -(q.powi(4) * bs.powi(3) * bc.powi(2) / (v0.powi(2) * x1.powi(2))
            + q.powi(4) * bc.powi(3) * bs / (v0.powi(3) * x1)
            - q.powi(4) * bc.powi(4) / v0.powi(4))
            * (x4 - x5);
        let t5 = q.powi(2) * bs * bc / (v0.powi(2) * x1.powi(2)) * (x4 * x3 - x2.powi(2) * x4 / x1);
        let t6 = q.powi(2) * bc.powi(2) * bs / (v0.powi(2) * x1) * (x3 - x2.powi(2) / x1);
        let t7 = -(bs / x1)
            * (-2.0 * d * w0 * x3 - w0.powi(2) * x2 - x2 * x3 / x1 + 2.0 * x2 * x3 / x1
                - x2.powi(3) / x1.powi(2));
        Ok(t1 + t2 + t3 + t4 + t5 + t6 + t7)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PlantConstants;
    use approx::assert_relative_eq;

    fn st(x: Vec5) -> State {
        State::new(x).unwrap()
    }

    #[test]
    fn order_zero_is_output() {
        let p = PlantParams::nominal();
        assert_eq!(
            lie_f(&st([3.0, 1.0, -2.0, 10.0, 400.0]), &p, 0).unwrap(),
            400.0
        );
    }

    #[test]
    fn order_one_vanishes_without_pressure_drop() {
        let p = PlantParams::nominal();
        assert_eq!(
            lie_f(&st([3.0, 1.0, -2.0, 400.0, 400.0]), &p, 1).unwrap(),
            0.0
        );
    }

    #[test]
    fn order_one_is_cavity_rate_times_drop() {
        // Choose v0 so that Q·βc/v0 = 2 exactly up to rounding.
        let base = PlantParams::nominal();
        let c = PlantConstants {
            v0: base.q() * base.constants().beta_c / 2.0,
            ..*base.constants()
        };
        let p = PlantParams::new(c).unwrap();
        let v = lie_f(&st([1.0, 0.0, 0.0, 13.0, 10.0]), &p, 1).unwrap();
        assert_relative_eq!(v, 6.0, max_relative = 1e-14);
    }

    #[test]
    fn order_out_of_range() {
        let p = PlantParams::nominal();
        let x = st([1.0; 5]);
        assert_eq!(lie_f(&x, &p, 5), Err(MoldError::OrderOutOfRange(5)));
        assert!(fd_lie(&x, &p, 0, &FdConfig::default()).is_err());
    }

    #[test]
    fn order_one_is_antisymmetric_in_pressure_drop() {
        let p = PlantParams::nominal();
        let a = lie_f(&st([2.0, 0.5, 1.0, 430.0, 400.0]), &p, 1).unwrap();
        let b = lie_f(&st([2.0, 0.5, 1.0, 400.0, 430.0]), &p, 1).unwrap();
        assert_eq!(a, -b);
    }

    #[test]
    fn lglf3_closed_form_and_scaling() {
        let p = PlantParams::nominal();
        let c = p.constants();
        let x = st([4.0, 1.0, 2.0, 300.0, 200.0]);
        let expected = -c.drive_gain * c.w0 * c.w0 * p.q() * c.beta_s * c.beta_c / (c.v0 * 4.0);
        assert_relative_eq!(lglf3(&x, &p).unwrap(), expected, max_relative = 1e-14);
        let x2 = st([8.0, 1.0, 2.0, 300.0, 200.0]);
        assert_relative_eq!(
            lglf3(&x2, &p).unwrap(),
            0.5 * lglf3(&x, &p).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn fd_order_one_at_zero_drop() {
        let p = PlantParams::nominal();
        let x = st([2.0, 3.0, -1.0, 500.0, 500.0]);
        let v = fd_lie(&x, &p, 1, &FdConfig::default()).unwrap();
        assert!(v.abs() <= 1e-8 * 500.0, "{v}");
    }

    #[test]
    fn fd_matches_chain_at_reference_state() {
        let p = PlantParams::nominal();
        let x = st([10.0, -0.3, 2.0, 420.0, 380.0]);
        let cfg = FdConfig::default();
        for k in 1..=4 {
            let a = lie_f(&x, &p, k).unwrap();
            let n = fd_lie(&x, &p, k, &cfg).unwrap();
            assert!(
                rel_err(n, a) <= FD_LIE_TOLERANCE[k - 1],
                "order {k}: {n} vs {a}"
            );
        }
    }

    #[test]
    fn fd_lglf3_zero_input_gain() {
        let p = PlantParams::with_zero_drive_gain();
        let x = st([2.0, 1.0, 1.0, 100.0, 50.0]);
        assert_eq!(fd_lglf3(&x, &p, &FdConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn fd_lglf3_halves_with_doubled_x1() {
        let p = PlantParams::nominal();
        let cfg = FdConfig::default();
        let a = fd_lglf3(&st([3.0, 1.0, 1.0, 100.0, 50.0]), &p, &cfg).unwrap();
        let b = fd_lglf3(&st([6.0, 1.0, 1.0, 100.0, 50.0]), &p, &cfg).unwrap();
        assert_relative_eq!(b, 0.5 * a, max_relative = 1e-6);
    }

    #[test]
    fn stencil_crossing_singularity_is_an_error() {
        let p = PlantParams::nominal();
        let cfg = FdConfig {
            step_rel: 2.0,
            step_floor: 1e-8,
        };
        let x = st([0.5, 1.0, 0.0, 1.0, 0.0]);
        assert!(matches!(
            fd_lie(&x, &p, 2, &cfg),
            Err(MoldError::Singularity { .. })
        ));
    }

    #[test]
    fn relative_degree_is_four() {
        let p = PlantParams::nominal();
        let r = relative_degree_check(&st([0.7, -4.0, 9.0, 800.0, 20.0]), &p, &FdConfig::default())
            .unwrap();
        assert_eq!(r.analytic_lower, [0.0; 3]);
        assert!(r.pass, "{r:?}");
        assert_eq!(r.relative_degree, Some(4));
        assert!(r.lglf3 < 0.0);
    }

    #[test]
    fn published_input_coefficient_differs_from_derived() {
        let p = PlantParams::nominal();
        let x = st([10.0, 0.0, 0.0, 0.0, 0.0]);
        let derived = lglf3(&x, &p).unwrap();
        let printed = published::lglf3(&x, &p).unwrap();
        // Missing factor -Q·βc/v0.
        assert_relative_eq!(derived, -printed * p.cavity_rate(), max_relative = 1e-14);
    }
}
