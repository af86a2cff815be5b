//! Derivative-free tuning of the four feedback gains against a simulated scenario.
//!
//! Candidates that fail the Routh–Hurwitz test are penalised without being
//! simulated. Nelder–Mead works on `ln k` so that gains spanning several
//! decades are searched evenly; the grid is logarithmic for the same reason.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{routh_hurwitz, Gains, Stability};
use crate::error::{MoldError, Result};
use crate::model::PlantParams;
use crate::sim::{simulate, SimConfig, SimStatus};

/// Cost assigned to unstable, marginal, aborted or diverged candidates.
pub const PENALTY: f64 = 1e9;
pub const DEFAULT_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const DEFAULT_BUDGET: usize = 500;
pub const DEFAULT_GRID_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TuneMethod {
    NelderMead,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub w_ise: f64,
    pub w_settle: f64,
    pub w_sat: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            w_ise: 1e-4,
            w_settle: 1.0,
            w_sat: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneConfig {
    pub scenario: SimConfig,
    pub initial_gains: Gains,
    pub method: TuneMethod,
    /// Per-gain `(min, max)`, for `k1..k4`.
    pub bounds: [(f64, f64); 4],
    pub budget: usize,
    pub weights: CostWeights,
    pub grid_points: usize,
}

impl TuneConfig {
    pub fn new(scenario: SimConfig, initial_gains: Gains, method: TuneMethod) -> Self {
        TuneConfig {
            scenario,
            initial_gains,
            method,
            bounds: [DEFAULT_BOUNDS; 4],
            budget: DEFAULT_BUDGET,
            weights: CostWeights::default(),
            grid_points: DEFAULT_GRID_POINTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            if !(*lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(MoldError::param(
                    format!("0 < k{}_min < k{}_max", i + 1, i + 1),
                    *lo,
                ));
            }
        }
        if self.budget == 0 {
            return Err(MoldError::param("budget >= 1", 0.0));
        }
        let w = [
            self.weights.w_ise,
            self.weights.w_settle,
            self.weights.w_sat,
        ];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || !w.iter().any(|v| *v > 0.0) {
            return Err(MoldError::InvalidConfig(
                "weights must be >= 0 with at least one positive".into(),
            ));
        }
        if self.method == TuneMethod::Grid && self.grid_points < 1 {
            return Err(MoldError::param("grid_points >= 1", 0.0));
        }
        self.scenario.validate()
    }
}

/// Composite cost of one gain set. Never fails; infeasible candidates get [`PENALTY`]-class values.
///
/// A stable run that never enters the settling band is charged `2·t_end` for settling.
pub fn objective(gains: &Gains, cfg: &TuneConfig, params: &PlantParams) -> f64 {
    let routh = routh_hurwitz(gains);
    if routh.verdict != Stability::Stable {
        let distance: f64 = routh.first_column.iter().map(|c| (-c).max(0.0)).sum();
        return PENALTY + distance.min(PENALTY);
    }
    let mut scenario = cfg.scenario.clone();
    scenario.gains = Some(*gains);
    let result = match simulate(&scenario, params) {
        Ok(r) => r,
        Err(_) => return PENALTY,
    };
    match (result.status, result.metrics) {
        (SimStatus::Completed, Some(m)) => {
            let settle = if m.settled() {
                m.settling_time_2pct
            } else {
                2.0 * scenario.t_end
            };
            let w = &cfg.weights;
            let cost =
                w.w_ise * m.ise + w.w_settle * settle + w.w_sat * result.saturated_fraction();
            if cost.is_finite() {
                cost.min(PENALTY)
            } else {
                PENALTY
            }
        }
        _ => PENALTY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub eval: usize,
    pub gains: [f64; 4],
    pub cost: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneOutcome {
    /// Best feasible candidate and its cost; `None` when every candidate was infeasible.
    pub best: Option<(Gains, f64)>,
    pub trace: Vec<TraceEntry>,
    pub budget_exhausted: bool,
}

struct Recorder<'a> {
    cfg: &'a TuneConfig,
    params: &'a PlantParams,
    trace: Vec<TraceEntry>,
    best: Option<(Gains, f64)>,
}

impl<'a> Recorder<'a> {
    fn remaining(&self) -> usize {
        self.cfg.budget - self.trace.len()
    }

    fn gains(&self, k: [f64; 4]) -> Gains {
        Gains {
            k1: k[0],
            k2: k[1],
            k3: k[2],
            k4: k[3],
            mapping: self.cfg.initial_gains.mapping,
        }
    }

    fn record(&mut self, k: [f64; 4], cost: f64) {
        let g = self.gains(k);
        if cost < PENALTY && self.best.is_none_or(|(_, c)| cost < c) {
            self.best = Some((g, cost));
        }
        let prev = self.trace.last().map_or(f64::INFINITY, |e| e.best_so_far);
        self.trace.push(TraceEntry {
            eval: self.trace.len(),
            gains: k,
            cost,
            best_so_far: prev.min(cost),
        });
    }

    /// Evaluates `k`, or returns `None` once the budget is spent.
    fn eval(&mut self, k: [f64; 4]) -> Option<f64> {
        if self.remaining() == 0 {
            return None;
        }
        let cost = objective(&self.gains(k), self.cfg, self.params);
        self.record(k, cost);
        Some(cost)
    }
}

pub fn tune(cfg: &TuneConfig, params: &PlantParams) -> Result<TuneOutcome> {
    cfg.validate()?;
    let mut rec = Recorder {
        cfg,
        params,
        trace: Vec::with_capacity(cfg.budget),
        best: None,
    };
    let exhausted = match cfg.method {
        TuneMethod::NelderMead => nelder_mead(&mut rec),
        TuneMethod::Grid => grid(&mut rec),
    };
    Ok(TuneOutcome {
        best: rec.best,
        trace: rec.trace,
        budget_exhausted: exhausted,
    })
}

/// Logarithmic lattice of `points` values per axis; `k1` varies slowest.
pub fn grid_lattice(bounds: &[(f64, f64); 4], points: usize) -> Vec<[f64; 4]> {
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        if points == 1 {
            return vec![(lo * hi).sqrt()];
        }
        let (a, b) = (lo.ln(), hi.ln());
        (0..points)
            .map(|i| {
                if i == 0 {
                    lo
                } else if i == points - 1 {
                    hi
                } else {
                    (a + (b - a) * i as f64 / (points - 1) as f64).exp()
                }
            })
            .collect()
    };
    let axes: Vec<Vec<f64>> = bounds.iter().map(|b| axis(*b)).collect();
    let mut out = Vec::with_capacity(points.pow(4));
    for &a in &axes[0] {
        for &b in &axes[1] {
            for &c in &axes[2] {
                for &d in &axes[3] {
                    out.push([a, b, c, d]);
                }
            }
        }
    }
    out
}

fn grid(rec: &mut Recorder) -> bool {
    let lattice = grid_lattice(&rec.cfg.bounds, rec.cfg.grid_points);
    let take = lattice.len().min(rec.cfg.budget);
    let (cfg, params, mapping) = (rec.cfg, rec.params, rec.cfg.initial_gains.mapping);
    let costs: Vec<f64> = lattice[..take]
        .par_iter()
        .map(|k| {
            let g = Gains {
                k1: k[0],
                k2: k[1],
                k3: k[2],
                k4: k[3],
                mapping,
            };
            objective(&g, cfg, params)
        })
        .collect();
    for (k, c) in lattice[..take].iter().zip(costs) {
        rec.record(*k, c);
    }
    take < lattice.len()
}

const NM_REFLECT: f64 = 1.0;
const NM_EXPAND: f64 = 2.0;
const NM_CONTRACT: f64 = 0.5;
const NM_SHRINK: f64 = 0.5;
/// Stop when both the cost spread and the simplex diameter (in ln k) fall below these.
const NM_FTOL: f64 = 1e-10;
const NM_XTOL: f64 = 1e-8;

type LogPoint = [f64; 4];

fn project(z: LogPoint, log_bounds: &[(f64, f64); 4]) -> LogPoint {
    std::array::from_fn(|i| z[i].clamp(log_bounds[i].0, log_bounds[i].1))
}

/// Returns true if the budget ran out before convergence.
fn nelder_mead(rec: &mut Recorder) -> bool {
    let log_bounds: [(f64, f64); 4] =
        std::array::from_fn(|i| (rec.cfg.bounds[i].0.ln(), rec.cfg.bounds[i].1.ln()));
    let seed = rec.cfg.initial_gains.as_array();
    let x0 = project(std::array::from_fn(|i| seed[i].ln()), &log_bounds);

    let eval = |rec: &mut Recorder, z: &LogPoint| rec.eval(z.map(f64::exp));

    let mut simplex: Vec<(LogPoint, f64)> = Vec::with_capacity(5);
    let Some(f0) = eval(rec, &x0) else {
        return true;
    };
    simplex.push((x0, f0));
    for i in 0..4 {
        let mut z = x0;
        z[i] += 1.1f64.ln();
        let mut z = project(z, &log_bounds);
        if z == x0 {
            // Seed sits on the upper bound; perturb downwards instead.
            z[i] -= 1.1f64.ln();
            z = project(z, &log_bounds);
        }
        let Some(f) = eval(rec, &z) else { return true };
        simplex.push((z, f));
    }

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[4].1);
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(z, _)| z.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if (worst - best).abs() <= NM_FTOL * (1.0 + best.abs()) && diameter <= NM_XTOL {
            return false;
        }

        let centroid: LogPoint =
            std::array::from_fn(|i| simplex[..4].iter().map(|(z, _)| z[i]).sum::<f64>() / 4.0);
        let along = |s: f64| -> LogPoint {
            project(
                std::array::from_fn(|i| centroid[i] + s * (simplex[4].0[i] - centroid[i])),
                &log_bounds,
            )
        };

        let xr = along(-NM_REFLECT);
        let Some(fr) = eval(rec, &xr) else {
            return true;
        };
        if fr < simplex[0].1 {
            let xe = along(-NM_EXPAND);
            let Some(fe) = eval(rec, &xe) else {
                return true;
            };
            simplex[4] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[3].1 {
            simplex[4] = (xr, fr);
            continue;
        }
        if fr < simplex[4].1 {
            let xc = along(-NM_CONTRACT);
            let Some(fc) = eval(rec, &xc) else {
                return true;
            };
            if fc <= fr {
                simplex[4] = (xc, fc);
                continue;
            }
        } else {
            let xc = along(NM_CONTRACT);
            let Some(fc) = eval(rec, &xc) else {
                return true;
            };
            if fc < simplex[4].1 {
                simplex[4] = (xc, fc);
                continue;
            }
        }
        let anchor = simplex[0].0;
        for vertex in simplex.iter_mut().skip(1) {
            let z = project(
                std::array::from_fn(|i| anchor[i] + NM_SHRINK * (vertex.0[i] - anchor[i])),
                &log_bounds,
            );
            let Some(f) = eval(rec, &z) else { return true };
            *vertex = (z, f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::GainMapping;
    use crate::reference::Profile;
    use crate::sim::default_x0;

    fn short_scenario() -> SimConfig {
        let mut s = SimConfig::new(default_x0(), Profile::Constant { level: 400.0 }, None);
        s.dt = 1e-3;
        s.t_end = 2.0;
        s.log_stride = 10;
        s
    }

    #[test]
    fn unstable_gains_are_penalised_without_simulation() {
        let cfg = TuneConfig::new(
            short_scenario(),
            Gains::baseline(GainMapping::Descending),
            TuneMethod::NelderMead,
        );
        let c = objective(
            &Gains::baseline(GainMapping::Descending),
            &cfg,
            &PlantParams::nominal(),
        );
        assert!(c >= PENALTY, "{c}");
    }

    #[test]
    fn ise_weight_is_linear() {
        let p = PlantParams::nominal();
        let g = Gains::baseline(GainMapping::Ascending);
        let mut cfg = TuneConfig::new(short_scenario(), g, TuneMethod::NelderMead);
        cfg.weights = CostWeights {
            w_ise: 1e-4,
            w_settle: 0.0,
            w_sat: 0.0,
        };
        let a = objective(&g, &cfg, &p);
        cfg.weights.w_ise = 2e-4;
        let b = objective(&g, &cfg, &p);
        assert!((b - 2.0 * a).abs() <= 1e-12 * b, "{a} {b}");
        assert!(a > 0.0);
    }

    #[test]
    fn two_point_grid_has_sixteen_evaluations() {
        let p = PlantParams::nominal();
        let mut cfg = TuneConfig::new(
            short_scenario(),
            Gains::baseline(GainMapping::Ascending),
            TuneMethod::Grid,
        );
        cfg.grid_points = 2;
        let out = tune(&cfg, &p).unwrap();
        assert_eq!(out.trace.len(), 16);
        assert!(!out.budget_exhausted);
        let lattice = grid_lattice(&cfg.bounds, 2);
        assert_eq!(lattice[0], [1e-3; 4]);
        assert_eq!(lattice[15], [1e3; 4]);
    }

    #[test]
    fn grid_respects_budget() {
        let p = PlantParams::nominal();
        let mut cfg = TuneConfig::new(
            short_scenario(),
            Gains::baseline(GainMapping::Ascending),
            TuneMethod::Grid,
        );
        cfg.grid_points = 3;
        cfg.budget = 10;
        let out = tune(&cfg, &p).unwrap();
        assert_eq!(out.trace.len(), 10);
        assert!(out.budget_exhausted);
    }

    #[test]
    fn nelder_mead_trace_is_monotone_and_deterministic() {
        let p = PlantParams::nominal();
        let mut cfg = TuneConfig::new(
            short_scenario(),
            Gains::baseline(GainMapping::Ascending),
            TuneMethod::NelderMead,
        );
        cfg.budget = 40;
        let a = tune(&cfg, &p).unwrap();
        let b = tune(&cfg, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace.len(), 40);
        assert!(a
            .trace
            .windows(2)
            .all(|w| w[1].best_so_far <= w[0].best_so_far));
        let (best, cost) = a.best.unwrap();
        assert!(cost <= a.trace[0].cost);
        assert_eq!(routh_hurwitz(&best).verdict, Stability::Stable);
        for (k, (lo, hi)) in best.as_array().iter().zip(cfg.bounds) {
            assert!(*k >= lo && *k <= hi);
        }
    }

    #[test]
    fn all_unstable_reports_no_best() {
        let p = PlantParams::nominal();
        let mut cfg = TuneConfig::new(
            short_scenario(),
            Gains::baseline(GainMapping::Descending),
            TuneMethod::NelderMead,
        );
        // k4 multiplies e; a tiny box around an unstable point.
        cfg.bounds = [(0.69, 0.71), (1.9, 2.1), (29.0, 31.0), (2.4, 2.6)];
        cfg.budget = 30;
        let out = tune(&cfg, &p).unwrap();
        assert!(out.best.is_none());
        assert!(out.trace.iter().all(|e| e.cost >= PENALTY));
    }

    #[test]
    fn invalid_tune_config() {
        let mut cfg = TuneConfig::new(
            short_scenario(),
            Gains::baseline(GainMapping::Ascending),
            TuneMethod::Grid,
        );
        cfg.bounds[2] = (5.0, 1.0);
        assert!(cfg.validate().is_err());
        cfg.bounds[2] = DEFAULT_BOUNDS;
        cfg.weights = CostWeights {
            w_ise: 0.0,
            w_settle: 0.0,
            w_sat: 0.0,
        };
        assert!(cfg.validate().is_err());
    }
}
