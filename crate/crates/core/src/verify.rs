//! Batch verification of the Lie chain against its finite-difference oracle
//! at randomly sampled states, plus the deviation of the published closed forms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::lie::{
    fd_lie, lie_chain, published, rel_err, relative_degree_check, FdConfig, FD_LGLF3_TOLERANCE,
    FD_LIE_TOLERANCE, MAX_ORDER, STRUCTURAL_ZERO_TOLERANCE,
};
use crate::model::{PlantParams, State};

pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_SEED: u64 = 0x5eed;

/// Box the verification states are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleBox {
    pub x1: (f64, f64),
    pub velocity: (f64, f64),
    pub pressure: (f64, f64),
}

impl Default for SampleBox {
    fn default() -> Self {
        SampleBox {
            x1: (0.1, 20.0),
            velocity: (-10.0, 10.0),
            pressure: (0.0, 1000.0),
        }
    }
}

/// Deterministic uniform samples; `x2` and `x3` share the velocity range.
pub fn sample_states(n: usize, seed: u64, bx: &SampleBox) -> Vec<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = [
                rng.random_range(bx.x1.0..bx.x1.1),
                rng.random_range(bx.velocity.0..bx.velocity.1),
                rng.random_range(bx.velocity.0..bx.velocity.1),
                rng.random_range(bx.pressure.0..bx.pressure.1),
                rng.random_range(bx.pressure.0..bx.pressure.1),
            ];
            State::new(x).expect("sample box keeps x1 > 0")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderCheck {
    pub order: usize,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeDegreeSummary {
    pub states: usize,
    pub passed: usize,
    /// Worst `|fd L_g L_f^k h| / max(|L_g L_f³ h|, 1)` for k = 0, 1, 2.
    pub max_lower_ratio: [f64; 3],
    pub lower_tolerance: f64,
    pub max_lglf3_rel_err: f64,
    pub lglf3_tolerance: f64,
    pub sign_agreement: bool,
    pub pass: bool,
}

/// Relative deviation statistics of a printed closed form from the derived one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub max_rel: f64,
    pub median_rel: f64,
    /// Fraction of states where the printed value has the opposite sign.
    pub sign_mismatch_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublishedFormReport {
    pub lglf3: Deviation,
    pub lf4: Deviation,
    /// True when the printed forms reproduce the derived chain within the order-4 tolerance.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub samples: usize,
    pub sample_box: SampleBox,
    pub fd: FdConfig,
    pub relative_degree: RelativeDegreeSummary,
    pub lie_chain: Vec<OrderCheck>,
    pub published_forms: PublishedFormReport,
    pub pass: bool,
}

fn deviation(pairs: &[(f64, f64)]) -> Deviation {
    let mut rel: Vec<f64> = pairs
        .iter()
        .map(|(printed, derived)| (printed - derived).abs() / derived.abs().max(f64::MIN_POSITIVE))
        .collect();
    rel.sort_by(f64::total_cmp);
    let mismatch = pairs
        .iter()
        .filter(|(p, d)| p.signum() != d.signum() && *p != 0.0 && *d != 0.0)
        .count();
    Deviation {
        max_rel: rel.last().copied().unwrap_or(0.0),
        median_rel: rel.get(rel.len() / 2).copied().unwrap_or(0.0),
        sign_mismatch_fraction: mismatch as f64 / pairs.len().max(1) as f64,
    }
}

pub fn verify(
    params: &PlantParams,
    states: &[State],
    seed: u64,
    fd: &FdConfig,
) -> Result<VerificationReport> {
    let mut max_err = [0.0f64; MAX_ORDER];
    let mut passed = 0;
    let mut max_lower_ratio = [0.0f64; 3];
    let mut max_lglf3_rel_err = 0.0f64;
    let mut sign_agreement = true;
    let mut lglf3_pairs = Vec::with_capacity(states.len());
    let mut lf4_pairs = Vec::with_capacity(states.len());

    for x in states {
        let chain = lie_chain(x, params)?;
        for k in 1..=MAX_ORDER {
            let est = fd_lie(x, params, k, fd)?;
            max_err[k - 1] = max_err[k - 1].max(rel_err(est, chain.lf[k]));
        }
        let rd = relative_degree_check(x, params, fd)?;
        if rd.pass {
            passed += 1;
        }
        for (slot, v) in max_lower_ratio.iter_mut().zip(rd.fd_lower) {
            *slot = slot.max(v.abs() / rd.scale);
        }
        max_lglf3_rel_err = max_lglf3_rel_err.max(rd.lglf3_rel_err);
        sign_agreement &= rd.fd_lglf3.signum() == rd.lglf3.signum();

        lglf3_pairs.push((published::lglf3(x, params)?, chain.lglf3));
        lf4_pairs.push((published::lf4(x, params)?, chain.lf[4]));
    }

    let lie_chain: Vec<OrderCheck> = (1..=MAX_ORDER)
        .map(|k| OrderCheck {
            order: k,
            tolerance: FD_LIE_TOLERANCE[k - 1],
            max_rel_err: max_err[k - 1],
            pass: max_err[k - 1] <= FD_LIE_TOLERANCE[k - 1],
        })
        .collect();
    let relative_degree = RelativeDegreeSummary {
        states: states.len(),
        passed,
        max_lower_ratio,
        lower_tolerance: STRUCTURAL_ZERO_TOLERANCE,
        max_lglf3_rel_err,
        lglf3_tolerance: FD_LGLF3_TOLERANCE,
        sign_agreement,
        pass: passed == states.len() && sign_agreement,
    };
    let lglf3 = deviation(&lglf3_pairs);
    let lf4 = deviation(&lf4_pairs);
    let consistent = lglf3.max_rel <= FD_LIE_TOLERANCE[3] && lf4.max_rel <= FD_LIE_TOLERANCE[3];
    let pass = relative_degree.pass && lie_chain.iter().all(|c| c.pass);
    Ok(VerificationReport {
        seed,
        samples: states.len(),
        sample_box: SampleBox::default(),
        fd: *fd,
        relative_degree,
        lie_chain,
        published_forms: PublishedFormReport {
            lglf3,
            lf4,
            consistent,
        },
        pass,
    })
}

/// `verify` over [`DEFAULT_SAMPLES`] states drawn with `seed` from the default box.
pub fn verify_default(params: &PlantParams, seed: u64) -> Result<VerificationReport> {
    let states = sample_states(DEFAULT_SAMPLES, seed, &SampleBox::default());
    verify(params, &states, seed, &FdConfig::default())
}
