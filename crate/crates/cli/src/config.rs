//! Strict JSON run configuration.
//!
//! Every block rejects unknown keys. Optional fields fall back to documented
//! defaults, and each fallback is recorded in [`RunConfig::assumed`] so that
//! command outputs can echo it.

use std::collections::BTreeMap;
use std::path::PathBuf;

use moldctl_core::sim::{
    default_x0, DEFAULT_DIVERGENCE_LIMIT, DEFAULT_DT, DEFAULT_T_END, DEFAULT_X1_FLOOR,
};
use moldctl_core::tune::{DEFAULT_BOUNDS, DEFAULT_BUDGET, DEFAULT_GRID_POINTS};
use moldctl_core::{
    ControlMode, CostWeights, GainMapping, Gains, PlantConstants, PlantParams, Profile, SimConfig,
    State, TuneConfig, TuneMethod,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    #[serde(rename = "K")]
    drive_gain: Option<f64>,
    #[serde(rename = "D")]
    damping: Option<f64>,
    w0: Option<f64>,
    beta_s: Option<f64>,
    beta_c: Option<f64>,
    #[serde(rename = "R")]
    nozzle_radius: Option<f64>,
    #[serde(rename = "L")]
    nozzle_length: Option<f64>,
    mu: Option<f64>,
    v_sp: Option<f64>,
    v0: Option<f64>,
    u_limit: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    x0: Option<[f64; 5]>,
    profile: Profile,
    dt: Option<f64>,
    t_end: Option<f64>,
    control_mode: Option<ControlMode>,
    log_stride: Option<usize>,
    x1_floor: Option<f64>,
    divergence_limit: Option<f64>,
    open_loop_u: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGains {
    k1: f64,
    k2: f64,
    k3: f64,
    k4: f64,
    mapping: Option<GainMapping>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTune {
    method: Option<TuneMethod>,
    bounds: Option<[(f64, f64); 4]>,
    budget: Option<usize>,
    weights: Option<CostWeights>,
    grid_points: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(default)]
    plant: Option<RawPlant>,
    sim: RawSim,
    gains: Option<RawGains>,
    tune: Option<RawTune>,
    output_dir: Option<PathBuf>,
}

/// Tuning settings; the scenario and seed gains come from the `sim` and `gains` blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneSettings {
    pub method: TuneMethod,
    pub bounds: [(f64, f64); 4],
    pub budget: usize,
    pub weights: CostWeights,
    pub grid_points: usize,
}

/// Fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub plant: PlantParams,
    /// Scenario; its `gains` field mirrors the `gains` block (absent means open loop).
    pub sim: SimConfig,
    pub gains: Option<Gains>,
    pub tune: TuneSettings,
    pub output_dir: PathBuf,
    /// Dotted key → value for every field that was filled from a default.
    pub assumed: BTreeMap<String, Value>,
}

impl RunConfig {
    /// Tuning problem seeded at the configured gains.
    pub fn tune_config(&self) -> Result<TuneConfig, CliError> {
        let gains = self
            .gains
            .ok_or_else(|| CliError::Validation("tune requires a gains block".into()))?;
        let t = &self.tune;
        let cfg = TuneConfig {
            scenario: self.sim.clone(),
            initial_gains: gains,
            method: t.method,
            bounds: t.bounds,
            budget: t.budget,
            weights: t.weights,
            grid_points: t.grid_points,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assumed defaults, optionally without the `tune.*` entries.
    pub fn assumed_for(&self, include_tune: bool) -> BTreeMap<String, Value> {
        self.assumed
            .iter()
            .filter(|(k, _)| include_tune || !k.starts_with("tune."))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// JSON echo of the resolved configuration.
    pub fn echo(&self, include_tune: bool) -> Value {
        let mut v = serde_json::json!({
            "plant": self.plant.constants(),
            "q": self.plant.q(),
            "sim": self.sim,
            "gains": self.gains,
            "output_dir": self.output_dir,
        });
        if include_tune {
            v["tune"] = serde_json::to_value(&self.tune).expect("tune settings serialise");
        }
        v
    }
}

struct Defaults<'a>(&'a mut BTreeMap<String, Value>);

impl Defaults<'_> {
    fn take<T: Serialize + Clone>(&mut self, key: &str, given: Option<T>, default: T) -> T {
        match given {
            Some(v) => v,
            None => {
                self.0.insert(
                    key.to_string(),
                    serde_json::to_value(default.clone()).expect("default serialises"),
                );
                default
            }
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawRun = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        CliError::Parse {
            path: e.path().to_string(),
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    resolve(raw)
}

fn resolve(raw: RawRun) -> Result<RunConfig, CliError> {
    let mut assumed = BTreeMap::new();
    let mut d = Defaults(&mut assumed);

    let base = PlantConstants::default();
    let rp = raw.plant.unwrap_or_default();
    let constants = PlantConstants {
        drive_gain: d.take("plant.K", rp.drive_gain, base.drive_gain),
        damping: d.take("plant.D", rp.damping, base.damping),
        w0: d.take("plant.w0", rp.w0, base.w0),
        beta_s: d.take("plant.beta_s", rp.beta_s, base.beta_s),
        beta_c: d.take("plant.beta_c", rp.beta_c, base.beta_c),
        nozzle_radius: d.take("plant.R", rp.nozzle_radius, base.nozzle_radius),
        nozzle_length: d.take("plant.L", rp.nozzle_length, base.nozzle_length),
        mu: d.take("plant.mu", rp.mu, base.mu),
        v_sp: d.take("plant.v_sp", rp.v_sp, base.v_sp),
        v0: d.take("plant.v0", rp.v0, base.v0),
        u_limit: match rp.u_limit {
            Some(v) => Some(v),
            None => {
                d.0.insert("plant.u_limit".into(), Value::Null);
                None
            }
        },
    };
    let plant = PlantParams::new(constants)?;

    let rs = raw.sim;
    let x0 = d.take("sim.x0", rs.x0, *default_x0().as_array());
    let x0 = State::new(x0)?;
    let gains = match raw.gains {
        Some(g) => {
            let mapping = d.take("gains.mapping", g.mapping, GainMapping::Ascending);
            Some(Gains::new([g.k1, g.k2, g.k3, g.k4], mapping)?)
        }
        None => None,
    };
    let sim = SimConfig {
        x0,
        profile: rs.profile,
        gains,
        open_loop_u: d.take("sim.open_loop_u", rs.open_loop_u, 0.0),
        dt: d.take("sim.dt", rs.dt, DEFAULT_DT),
        t_end: d.take("sim.t_end", rs.t_end, DEFAULT_T_END),
        control_mode: d.take("sim.control_mode", rs.control_mode, ControlMode::Continuous),
        log_stride: d.take("sim.log_stride", rs.log_stride, 1),
        x1_floor: d.take("sim.x1_floor", rs.x1_floor, DEFAULT_X1_FLOOR),
        divergence_limit: d.take(
            "sim.divergence_limit",
            rs.divergence_limit,
            DEFAULT_DIVERGENCE_LIMIT,
        ),
    };
    sim.validate()?;

    let rt = raw.tune.unwrap_or_default();
    let tune = TuneSettings {
        method: d.take("tune.method", rt.method, TuneMethod::NelderMead),
        bounds: d.take("tune.bounds", rt.bounds, [DEFAULT_BOUNDS; 4]),
        budget: d.take("tune.budget", rt.budget, DEFAULT_BUDGET),
        weights: d.take("tune.weights", rt.weights, CostWeights::default()),
        grid_points: d.take("tune.grid_points", rt.grid_points, DEFAULT_GRID_POINTS),
    };
    let output_dir = d.take(
        "output_dir",
        raw.output_dir,
        PathBuf::from(DEFAULT_OUTPUT_DIR),
    );

    let cfg = RunConfig {
        plant,
        sim,
        gains,
        tune,
        output_dir,
        assumed,
    };
    if cfg.gains.is_some() {
        cfg.tune_config()?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "sim": { "profile": { "type": "CONSTANT", "level": 400 } },
        "gains": { "k1": 0.7, "k2": 2, "k3": 30, "k4": 2.5, "mapping": "ASCENDING" }
    }"#;

    #[test]
    fn minimal_config() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.gains, Some(Gains::baseline(GainMapping::Ascending)));
        assert_eq!(cfg.plant, PlantParams::nominal());
        assert_eq!(cfg.sim.x0, default_x0());
        assert_eq!(cfg.sim.dt, 1e-4);
        for key in [
            "plant.v_sp",
            "plant.v0",
            "sim.x0",
            "sim.dt",
            "plant.u_limit",
            "tune.budget",
        ] {
            assert!(cfg.assumed.contains_key(key), "{key}");
        }
        assert!(!cfg.assumed.contains_key("sim.profile"));
        assert!(!cfg.assumed_for(false).contains_key("tune.budget"));
    }

    #[test]
    fn negative_radius_names_constraint() {
        let text = MINIMAL.replace(r#""sim""#, r#""plant": { "R": -1 }, "sim""#);
        match parse_config(&text) {
            Err(CliError::Validation(msg)) => assert!(msg.contains("R > 0"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace(r#""sim""#, r#""foo": 1, "sim""#);
        match parse_config(&text) {
            Err(CliError::Parse { message, line, .. }) => {
                assert!(message.contains("foo"), "{message}");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace(r#""k1""#, r#""kk": 3, "k1""#);
        match parse_config(&text) {
            Err(CliError::Parse { path, line, .. }) => {
                assert_eq!(path, "gains.kk");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mapping_defaults_to_ascending() {
        assert!(!parse_config(MINIMAL)
            .unwrap()
            .assumed
            .contains_key("gains.mapping"));
        let text = MINIMAL.replace(r#", "mapping": "ASCENDING""#, "");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.gains.unwrap().mapping, GainMapping::Ascending);
        assert_eq!(cfg.assumed["gains.mapping"], "ASCENDING");
        let text = MINIMAL.replace("ASCENDING", "SIDEWAYS");
        assert!(matches!(parse_config(&text), Err(CliError::Parse { .. })));
    }

    #[test]
    fn bad_sim_and_profile_values() {
        let text = MINIMAL.replace(r#""level": 400 }"#, r#""level": 400 }, "dt": -1"#);
        assert!(matches!(parse_config(&text), Err(CliError::Validation(_))));
        let text = MINIMAL.replace(
            r#"{ "type": "CONSTANT", "level": 400 }"#,
            r#"{ "type": "RAMP_HOLD", "start": 0, "end": 400, "t_ramp": 0 }"#,
        );
        match parse_config(&text) {
            Err(CliError::Validation(msg)) => assert!(msg.contains("t_ramp"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace(
            r#""level": 400 }"#,
            r#""level": 400 }, "x0": [0, 0, 0, 0, 0]"#,
        );
        assert!(matches!(parse_config(&text), Err(CliError::Validation(_))));
    }

    #[test]
    fn explicit_values_are_not_assumed() {
        let text = r#"{
            "plant": { "v_sp": 2.0, "v0": 0.5, "u_limit": 10 },
            "sim": {
                "x0": [5, 0, 0, 0, 0],
                "profile": { "type": "SMOOTH_STEP", "start": 0, "end": 300, "t0": 0.5, "t1": 2.5 },
                "control_mode": { "type": "ZOH", "sample_period": 0.001 },
                "t_end": 3, "log_stride": 5
            },
            "tune": { "method": "GRID", "grid_points": 2, "bounds": [[0.1, 10], [0.1, 10], [0.1, 100], [0.1, 10]] },
            "gains": { "k1": 1, "k2": 2, "k3": 3, "k4": 4, "mapping": "DESCENDING" },
            "output_dir": "runs/a"
        }"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.plant.u_limit(), Some(10.0));
        assert_eq!(
            cfg.sim.control_mode,
            ControlMode::Zoh {
                sample_period: 0.001
            }
        );
        assert_eq!(cfg.tune.method, TuneMethod::Grid);
        for key in [
            "plant.v_sp",
            "plant.v0",
            "plant.u_limit",
            "sim.x0",
            "output_dir",
            "tune.method",
        ] {
            assert!(!cfg.assumed.contains_key(key), "{key}");
        }
        assert_eq!(cfg.output_dir, PathBuf::from("runs/a"));
    }

    #[test]
    fn malformed_json_reports_position() {
        match parse_config("{\n  \"sim\": [\n") {
            Err(CliError::Parse { line, .. }) => assert!(line >= 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
