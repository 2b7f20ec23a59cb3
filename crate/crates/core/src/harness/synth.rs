//! Synthetic price fixtures for verification.
//!
//! `Gaussian` is a plain i.i.d. log-return random walk. `Planted` hides a
//! deterministic trigger pattern that is always followed by a large positive
//! return, giving a learnability oracle: pattern-reading models can rank the
//! payoff days, while the RSI benchmark reads the trigger's three gains as
//! overbought and scores them the wrong way.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::market_data::PriceSeries;
use crate::seeding;

use super::HarnessError;

/// Daily log-return scale of the synthetic walk.
pub const SYNTH_BASE_SIGMA: f64 = 0.01;
/// The three pattern returns preceding each planted payoff.
pub const PLANT_PATTERN: f64 = 2.0 * SYNTH_BASE_SIGMA;
/// The planted significant move itself.
pub const PLANT_PAYOFF: f64 = 8.0 * SYNTH_BASE_SIGMA;
/// Planted payoff positions: every PLANT_STRIDE-th return.
pub const PLANT_STRIDE: usize = 14;

const TRIGGER_LO: f64 = 1.5 * SYNTH_BASE_SIGMA;
const TRIGGER_HI: f64 = 2.5 * SYNTH_BASE_SIGMA;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Gaussian,
    Planted,
}

impl std::str::FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(SynthKind::Gaussian),
            "planted" => Ok(SynthKind::Planted),
            other => Err(format!("unknown synthetic kind `{other}` (use gaussian|planted)")),
        }
    }
}

/// True when the three returns before a position form the planted trigger:
/// three consecutive moderate gains, each in (1.5, 2.5] base sigmas. The
/// payoff (8 sigmas) sits outside the band, so payoffs can never chain into
/// new triggers.
pub fn planted_trigger(prev3: &[f64]) -> bool {
    prev3.len() == 3 && prev3.iter().all(|&r| r > TRIGGER_LO && r <= TRIGGER_HI)
}

/// Builds an `n`-day synthetic price series (weekday dates from 2010-01-04,
/// first close 100). Deterministic in `seed`.
pub fn generate_synthetic(kind: SynthKind, n: usize, seed: u64) -> Result<PriceSeries, HarnessError> {
    if n < 200 {
        return Err(HarnessError::Synth(format!("need n >= 200 days, got {n}")));
    }
    let mut rng = seeding::stream_rng(seed, "synth");
    let n_returns = n - 1;
    let mut returns: Vec<f64> = (0..n_returns)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * SYNTH_BASE_SIGMA
        })
        .collect();

    if kind == SynthKind::Planted {
        let mut t = PLANT_STRIDE;
        while t < n_returns {
            returns[t - 3] = PLANT_PATTERN;
            returns[t - 2] = PLANT_PATTERN;
            returns[t - 1] = PLANT_PATTERN;
            returns[t] = PLANT_PAYOFF;
            t += PLANT_STRIDE;
        }
        // naturally occurring triggers get the payoff too, so the pattern
        // is followed by a significant move everywhere in the final series
        for t in 3..n_returns {
            if planted_trigger(&returns[t - 3..t]) {
                returns[t] = PLANT_PAYOFF;
            }
        }
    }

    let mut closes = Vec::with_capacity(n);
    let mut price = 100.0;
    closes.push(price);
    for r in &returns {
        price *= r.exp();
        closes.push(price);
    }

    let mut dates = Vec::with_capacity(n);
    let mut date = NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date");
    while dates.len() < n {
        if !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            dates.push(date);
        }
        date = date + Days::new(1);
    }

    let ticker = match kind {
        SynthKind::Gaussian => "SYNTH-G",
        SynthKind::Planted => "SYNTH-P",
    };
    Ok(PriceSeries { ticker: ticker.to_owned(), dates, closes })
}
