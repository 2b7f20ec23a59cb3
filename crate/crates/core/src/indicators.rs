//! Wilder's relative strength index, as a binary 30/70 rule and as a
//! continuous score comparable to classifier probabilities under AUC.
//!
//! RSI is computed on adjusted-close differences. The first average gain and
//! loss are simple means of the first `n` changes (Wilder's original seed);
//! thereafter `avg_t = (avg_{t-1} * (n-1) + x_t) / n`.

use thiserror::Error;

use crate::features::Direction;
use crate::market_data::PriceSeries;

/// RSI values aligned to the price index; the first `lookback` entries are
/// undefined (the smoother needs `lookback` price changes).
#[derive(Debug, Clone, PartialEq)]
pub struct RsiSeries {
    pub ticker: String,
    pub lookback: usize,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Error)]
pub enum IndicatorError {
    #[error("series too short: {len} closes, need at least {need} for lookback {lookback}")]
    SeriesTooShort { len: usize, need: usize, lookback: usize },
    #[error("lookback must be positive")]
    ZeroLookback,
}

/// Wilder RSI over the whole series.
///
/// `RSI = 100 - 100 / (1 + avgGain/avgLoss)`; a zero average loss with any
/// gain pins RSI at 100, and a perfectly flat window (both averages zero)
/// reads 50, the neutral point.
pub fn wilder_rsi(series: &PriceSeries, lookback: usize) -> Result<RsiSeries, IndicatorError> {
    if lookback == 0 {
        return Err(IndicatorError::ZeroLookback);
    }
    if series.len() < lookback + 1 {
        return Err(IndicatorError::SeriesTooShort {
            len: series.len(),
            need: lookback + 1,
            lookback,
        });
    }

    let n = lookback as f64;
    let mut values = vec![None; series.len()];
    let mut avg_gain = 0.0;
    let mut avg_loss = 0.0;
    for t in 1..series.len() {
        let delta = series.closes[t] - series.closes[t - 1];
        let gain = delta.max(0.0);
        let loss = (-delta).max(0.0);
        if t <= lookback {
            avg_gain += gain / n;
            avg_loss += loss / n;
            if t == lookback {
                values[t] = Some(rsi_from_averages(avg_gain, avg_loss));
            }
        } else {
            avg_gain = (avg_gain * (n - 1.0) + gain) / n;
            avg_loss = (avg_loss * (n - 1.0) + loss) / n;
            values[t] = Some(rsi_from_averages(avg_gain, avg_loss));
        }
    }

    Ok(RsiSeries { ticker: series.ticker.clone(), lookback, values })
}

fn rsi_from_averages(avg_gain: f64, avg_loss: f64) -> f64 {
    if avg_loss == 0.0 {
        if avg_gain > 0.0 {
            100.0
        } else {
            50.0
        }
    } else {
        100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    }
}

/// Binary 30/70 rule. Negative task: overbought (RSI >= 70) predicts a
/// significant drop. Positive task: oversold (RSI <= 30) predicts a
/// significant rise. Warmup indices signal 0.
pub fn rsi_signal(rsi: &RsiSeries, direction: Direction) -> Vec<u8> {
    rsi.values
        .iter()
        .map(|v| match (v, direction) {
            (Some(x), Direction::Negative) => u8::from(*x >= 70.0),
            (Some(x), Direction::Positive) => u8::from(*x <= 30.0),
            (None, _) => 0,
        })
        .collect()
}

/// Continuous score in [0,1] so the AUC metric applies to the RSI benchmark:
/// negative task scores RSI/100, positive task (100-RSI)/100. Warmup
/// indices score 0.5 (no information).
pub fn rsi_score(rsi: &RsiSeries, direction: Direction) -> Vec<f64> {
    rsi.values
        .iter()
        .map(|v| match (v, direction) {
            (Some(x), Direction::Negative) => *x / 100.0,
            (Some(x), Direction::Positive) => (100.0 - *x) / 100.0,
            (None, _) => 0.5,
        })
        .collect()
}

/// CSV dump `date,rsi`, defined indices only.
pub fn rsi_csv_string(series: &PriceSeries, rsi: &RsiSeries) -> String {
    let mut out = String::from("date,rsi\n");
    for (d, v) in series.dates.iter().zip(&rsi.values) {
        if let Some(x) = v {
            out.push_str(&format!("{d},{x}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn series(closes: &[f64]) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2009, 1, 2).unwrap();
        PriceSeries {
            ticker: "T".into(),
            dates: (0..closes.len() as u64).map(|i| start + chrono::Days::new(i)).collect(),
            closes: closes.to_vec(),
        }
    }

    /// 15-close fixture; oracle values computed with an independent
    /// spreadsheet-style re-implementation of Wilder smoothing.
    pub(crate) const FIXTURE_CLOSES: [f64; 15] = [
        44.34, 44.09, 44.15, 43.61, 44.33, 44.83, 45.10, 45.42, 45.84, 46.08, 45.89, 46.03,
        45.61, 46.28, 46.28,
    ];
    pub(crate) const FIXTURE_RSI_14: f64 = 70.46413502109705;

    #[test]
    fn all_gain_series_reads_100() {
        let closes: Vec<f64> = (0..15).map(|i| 100.0 + i as f64).collect();
        let rsi = wilder_rsi(&series(&closes), 14).unwrap();
        assert_eq!(rsi.values[14], Some(100.0));
        assert!(rsi.values[..14].iter().all(Option::is_none));
    }

    #[test]
    fn balanced_alternating_series_reads_50() {
        let closes: Vec<f64> = (0..15).map(|i| if i % 2 == 0 { 100.0 } else { 101.0 }).collect();
        let rsi = wilder_rsi(&series(&closes), 14).unwrap();
        let v = rsi.values[14].unwrap();
        assert!((v - 50.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn flat_series_reads_neutral_50() {
        let rsi = wilder_rsi(&series(&[5.0; 16]), 14).unwrap();
        assert_eq!(rsi.values[14], Some(50.0));
        assert_eq!(rsi.values[15], Some(50.0));
    }

    #[test]
    fn fixture_matches_spreadsheet_oracle() {
        let rsi = wilder_rsi(&series(&FIXTURE_CLOSES), 14).unwrap();
        let v = rsi.values[14].unwrap();
        assert!((v - FIXTURE_RSI_14).abs() < 1e-9, "got {v}, want {FIXTURE_RSI_14}");

        // one Wilder step further, oracle-computed the same way
        let mut extended = FIXTURE_CLOSES.to_vec();
        extended.push(46.00);
        let rsi = wilder_rsi(&series(&extended), 14).unwrap();
        let v = rsi.values[15].unwrap();
        assert!((v - 66.24961855355505).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn too_short_series_is_error() {
        assert!(matches!(
            wilder_rsi(&series(&[1.0; 14]), 14),
            Err(IndicatorError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn signal_thresholds_inclusive() {
        let rsi = RsiSeries {
            ticker: "T".into(),
            lookback: 2,
            values: vec![None, None, Some(70.0), Some(30.0), Some(50.0)],
        };
        assert_eq!(rsi_signal(&rsi, Direction::Negative), vec![0, 0, 1, 0, 0]);
        assert_eq!(rsi_signal(&rsi, Direction::Positive), vec![0, 0, 0, 1, 0]);
    }

    #[test]
    fn score_mapping_and_warmup() {
        let rsi = RsiSeries {
            ticker: "T".into(),
            lookback: 2,
            values: vec![None, None, Some(70.0), Some(30.0), Some(50.0)],
        };
        let neg = rsi_score(&rsi, Direction::Negative);
        let pos = rsi_score(&rsi, Direction::Positive);
        assert_eq!(neg, vec![0.5, 0.5, 0.70, 0.30, 0.50]);
        assert_eq!(pos, vec![0.5, 0.5, 0.30, 0.70, 0.50]);
    }

    #[test]
    fn signal_consistent_with_score() {
        // negative signal fires exactly when the negative score reaches 0.70
        let closes: Vec<f64> = (0..60)
            .map(|i| 100.0 + 10.0 * ((i as f64) * 0.71).sin() + i as f64 * 0.2)
            .collect();
        let rsi = wilder_rsi(&series(&closes), 14).unwrap();
        let signal = rsi_signal(&rsi, Direction::Negative);
        let score = rsi_score(&rsi, Direction::Negative);
        for i in rsi.lookback..closes.len() {
            assert_eq!(signal[i] == 1, score[i] >= 0.70, "index {i}");
        }
    }

    #[test]
    fn monotone_in_average_gain() {
        let mut last = rsi_from_averages(0.0, 0.5);
        for step in 1..50 {
            let v = rsi_from_averages(step as f64 * 0.1, 0.5);
            assert!(v > last);
            last = v;
        }
    }

    proptest! {
        #[test]
        fn rsi_bounded_on_random_walks(
            steps in proptest::collection::vec(-1.0f64..1.0, 20..120),
            lookback in 2usize..20,
        ) {
            let mut closes = vec![100.0];
            for s in &steps {
                let next = (closes.last().unwrap() + s).max(0.01);
                closes.push(next);
            }
            if closes.len() >= lookback + 1 {
                let rsi = wilder_rsi(&series(&closes), lookback).unwrap();
                for v in rsi.values.iter().flatten() {
                    prop_assert!((0.0..=100.0).contains(v));
                }
            }
        }

        #[test]
        fn scale_invariant(
            steps in proptest::collection::vec(-0.04f64..0.04, 30..80),
            scale in 0.1f64..10.0,
        ) {
            let mut closes = vec![50.0];
            for s in &steps {
                let next = closes.last().unwrap() * (1.0 + s);
                closes.push(next);
            }
            let scaled: Vec<f64> = closes.iter().map(|c| c * scale).collect();
            let a = wilder_rsi(&series(&closes), 14).unwrap();
            let b = wilder_rsi(&series(&scaled), 14).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                match (x, y) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                    (None, None) => {}
                    _ => prop_assert!(false, "alignment mismatch"),
                }
            }
        }
    }
}
