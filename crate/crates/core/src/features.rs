//! Log returns, significance labeling, sliding-window datasets, and the
//! temporal train/test split.
//!
//! A daily move is *significant* when its log return exceeds `fraction *
//! sigma_train`, where `sigma_train` is the sample standard deviation of the
//! returns in the training period only. Positive and negative tasks are two
//! independent binary problems over the same features.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::market_data::PriceSeries;

/// Which tail of the return distribution the binary task targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Positive,
    Negative,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" | "pos" => Ok(Direction::Positive),
            "negative" | "neg" => Ok(Direction::Negative),
            other => Err(format!("unknown direction `{other}` (use pos|neg)")),
        }
    }
}

/// Daily log returns; `dates[t]` is the calendar date of the *later* day of
/// the pair, so `returns[t]` is the move realized on `dates[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub ticker: String,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// Significance threshold for one (direction, fraction) task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignificanceSpec {
    pub direction: Direction,
    pub fraction: f64,
    pub sigma_train: f64,
    /// Always exactly `fraction * sigma_train`.
    pub threshold: f64,
}

impl SignificanceSpec {
    pub fn new(direction: Direction, fraction: f64, sigma_train: f64) -> Result<Self, FeatureError> {
        if !(fraction > 0.0) || !fraction.is_finite() {
            return Err(FeatureError::BadFraction { fraction });
        }
        if !(sigma_train >= 0.0) || !sigma_train.is_finite() {
            return Err(FeatureError::BadSigma { sigma: sigma_train });
        }
        Ok(Self { direction, fraction, sigma_train, threshold: fraction * sigma_train })
    }
}

/// Dense row-major matrix of feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_cols..(k + 1) * self.n_cols]
    }

    /// Copies the given rows into a new matrix (batch gathering).
    pub fn gather(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FeatureMatrix { n_rows: rows.len(), n_cols: self.n_cols, data }
    }

    /// Copies rows `[start, end)` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> FeatureMatrix {
        FeatureMatrix {
            n_rows: end - start,
            n_cols: self.n_cols,
            data: self.data[start * self.n_cols..end * self.n_cols].to_vec(),
        }
    }
}

/// Sliding-window feature matrix with binary significance labels and the
/// temporal split boundary. Sample `k` holds the `window` returns ending at
/// return index `k + window - 1`; its label derives from return `k + window`,
/// so features strictly precede the label in time.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub window: usize,
    pub direction: Direction,
    pub fraction: f64,
    pub features: FeatureMatrix,
    pub labels: Vec<u8>,
    /// Samples `[0, split_index)` train; `[split_index, n_samples)` test.
    pub split_index: usize,
    pub sample_dates: Vec<NaiveDate>,
}

impl LabeledDataset {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn train_features(&self) -> FeatureMatrix {
        self.features.slice_rows(0, self.split_index)
    }

    pub fn test_features(&self) -> FeatureMatrix {
        self.features.slice_rows(self.split_index, self.n_samples())
    }

    pub fn train_labels(&self) -> &[u8] {
        &self.labels[..self.split_index]
    }

    pub fn test_labels(&self) -> &[u8] {
        &self.labels[self.split_index..]
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("series too short: {len} return(s), need more than {need}")]
    SeriesTooShort { len: usize, need: usize },
    #[error("train ratio {ratio} not in (0,1)")]
    BadRatio { ratio: f64 },
    #[error("degenerate split: {split} of {n} samples in training")]
    DegenerateSplit { split: usize, n: usize },
    #[error("zero variance: training returns are constant")]
    ZeroVariance,
    #[error("need at least 2 training returns, have {have}")]
    TooFewTrainingReturns { have: usize },
    #[error("split index {split} out of range for {len} returns")]
    SplitOutOfRange { split: usize, len: usize },
    #[error("labels length {labels} does not match returns length {returns}")]
    LabelLengthMismatch { labels: usize, returns: usize },
    #[error("fraction {fraction} must be a positive finite real")]
    BadFraction { fraction: f64 },
    #[error("sigma {sigma} must be a non-negative finite real")]
    BadSigma { sigma: f64 },
}

/// `returns[t] = ln(closes[t+1] / closes[t])`.
pub fn compute_log_returns(series: &PriceSeries) -> Result<ReturnSeries, FeatureError> {
    if series.len() < 2 {
        return Err(FeatureError::SeriesTooShort { len: series.len(), need: 2 });
    }
    let returns = series
        .closes
        .windows(2)
        .map(|w| (w[1] / w[0]).ln())
        .collect();
    Ok(ReturnSeries {
        ticker: series.ticker.clone(),
        dates: series.dates[1..].to_vec(),
        returns,
    })
}

/// Boundary of the temporal 75/25-style split on the sample axis:
/// `floor(train_ratio * n_samples)`. Train = `[0, idx)`, test = `[idx, n)`.
pub fn temporal_split_index(n_samples: usize, train_ratio: f64) -> Result<usize, FeatureError> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(FeatureError::BadRatio { ratio: train_ratio });
    }
    let idx = (train_ratio * n_samples as f64).floor() as usize;
    if idx == 0 || idx >= n_samples {
        return Err(FeatureError::DegenerateSplit { split: idx, n: n_samples });
    }
    Ok(idx)
}

/// Sample standard deviation (denominator n-1) of the returns strictly
/// before `split_index_in_returns`. Constant training returns are an error:
/// every threshold would be degenerate.
pub fn training_sigma(
    returns: &ReturnSeries,
    split_index_in_returns: usize,
) -> Result<f64, FeatureError> {
    if split_index_in_returns > returns.len() {
        return Err(FeatureError::SplitOutOfRange {
            split: split_index_in_returns,
            len: returns.len(),
        });
    }
    let train = &returns.returns[..split_index_in_returns];
    if train.len() < 2 {
        return Err(FeatureError::TooFewTrainingReturns { have: train.len() });
    }
    // exact check; the float mean of equal values can be off by an ulp
    if train.iter().all(|&r| r == train[0]) {
        return Err(FeatureError::ZeroVariance);
    }
    let n = train.len() as f64;
    let mean = train.iter().sum::<f64>() / n;
    let ss = train.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>();
    let sigma = (ss / (n - 1.0)).sqrt();
    if sigma == 0.0 {
        return Err(FeatureError::ZeroVariance);
    }
    Ok(sigma)
}

/// Binary significance labels under strict inequality: positive direction
/// marks `r > +threshold`, negative marks `r < -threshold`. Boundary values
/// are insignificant.
pub fn label_returns(returns: &ReturnSeries, spec: &SignificanceSpec) -> Vec<u8> {
    returns
        .returns
        .iter()
        .map(|&r| {
            let hit = match spec.direction {
                Direction::Positive => r > spec.threshold,
                Direction::Negative => r < -spec.threshold,
            };
            u8::from(hit)
        })
        .collect()
}

/// Builds the sliding-window dataset: `n_samples = len(returns) - window`,
/// stride 1, sample `k` = `returns[k .. k+window)` with label
/// `labels[k + window]`. The split index is computed on the sample axis.
pub fn make_windows(
    returns: &ReturnSeries,
    labels: &[u8],
    window: usize,
    train_ratio: f64,
    direction: Direction,
    fraction: f64,
) -> Result<LabeledDataset, FeatureError> {
    if labels.len() != returns.len() {
        return Err(FeatureError::LabelLengthMismatch {
            labels: labels.len(),
            returns: returns.len(),
        });
    }
    if returns.len() <= window + 4 {
        return Err(FeatureError::SeriesTooShort { len: returns.len(), need: window + 4 });
    }
    let n_samples = returns.len() - window;
    let split_index = temporal_split_index(n_samples, train_ratio)?;

    let mut features = FeatureMatrix::zeros(n_samples, window);
    let mut sample_labels = Vec::with_capacity(n_samples);
    let mut sample_dates = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        features.data[k * window..(k + 1) * window]
            .copy_from_slice(&returns.returns[k..k + window]);
        sample_labels.push(labels[k + window]);
        sample_dates.push(returns.dates[k + window]);
    }

    Ok(LabeledDataset {
        window,
        direction,
        fraction,
        features,
        labels: sample_labels,
        split_index,
        sample_dates,
    })
}

/// Everything `run_experiment` needs from the labeling stage.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub dataset: LabeledDataset,
    pub spec: SignificanceSpec,
}

/// Full labeling pipeline: returns -> sample split -> training sigma ->
/// labels -> windows. `sigma_train` is computed over the returns whose label
/// index falls in the training partition, i.e. `returns[..window + split]`,
/// so no test-period value can influence a training artifact.
///
/// With `standardize` set, features are z-scored with the training-period
/// return mean and sigma (the paper's pipeline does not scale features;
/// off by default).
pub fn build_dataset(
    returns: &ReturnSeries,
    direction: Direction,
    fraction: f64,
    window: usize,
    train_ratio: f64,
    standardize: bool,
) -> Result<DatasetBundle, FeatureError> {
    if returns.len() <= window + 4 {
        return Err(FeatureError::SeriesTooShort { len: returns.len(), need: window + 4 });
    }
    let n_samples = returns.len() - window;
    let split_index = temporal_split_index(n_samples, train_ratio)?;
    let split_in_returns = window + split_index;
    let sigma = training_sigma(returns, split_in_returns)?;
    let spec = SignificanceSpec::new(direction, fraction, sigma)?;
    let labels = label_returns(returns, &spec);
    let mut dataset = make_windows(returns, &labels, window, train_ratio, direction, fraction)?;
    debug_assert_eq!(dataset.split_index, split_index);
    if standardize {
        let train = &returns.returns[..split_in_returns];
        let mean = train.iter().sum::<f64>() / train.len() as f64;
        standardize_in_place(&mut dataset, mean, sigma);
    }
    Ok(DatasetBundle { dataset, spec })
}

/// Z-scores every feature entry with the given center and scale.
pub fn standardize_in_place(dataset: &mut LabeledDataset, mean: f64, sigma: f64) {
    if sigma > 0.0 {
        for v in &mut dataset.features.data {
            *v = (*v - mean) / sigma;
        }
    }
}

/// CSV dump `feature_1..feature_p,label,date` for external inspection.
pub fn dataset_csv_string(dataset: &LabeledDataset) -> String {
    let p = dataset.window;
    let mut out = String::new();
    for j in 1..=p {
        out.push_str(&format!("feature_{j},"));
    }
    out.push_str("label,date\n");
    for k in 0..dataset.n_samples() {
        for v in dataset.features.row(k) {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{},{}\n", dataset.labels[k], dataset.sample_dates[k]));
    }
    out
}

/// CSV dump `date,log_return`.
pub fn returns_csv_string(returns: &ReturnSeries) -> String {
    let mut out = String::from("date,log_return\n");
    for (d, r) in returns.dates.iter().zip(&returns.returns) {
        out.push_str(&format!("{d},{r}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series_from_closes(closes: &[f64]) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2009, 1, 2).unwrap();
        PriceSeries {
            ticker: "T".into(),
            dates: (0..closes.len() as i64).map(|i| start + chrono::Days::new(i as u64)).collect(),
            closes: closes.to_vec(),
        }
    }

    fn returns_from(values: &[f64]) -> ReturnSeries {
        let start = NaiveDate::from_ymd_opt(2009, 1, 3).unwrap();
        ReturnSeries {
            ticker: "T".into(),
            dates: (0..values.len() as i64).map(|i| start + chrono::Days::new(i as u64)).collect(),
            returns: values.to_vec(),
        }
    }

    #[test]
    fn identity_price_gives_zero_return() {
        let rs = compute_log_returns(&series_from_closes(&[100.0, 100.0])).unwrap();
        assert_eq!(rs.returns, vec![0.0]);
    }

    #[test]
    fn five_percent_move_matches_oracle() {
        // Independent calculator oracle: ln(1.05) = 0.04879016416943205.
        let rs = compute_log_returns(&series_from_closes(&[100.0, 105.0])).unwrap();
        assert_eq!(rs.returns.len(), 1);
        assert!((rs.returns[0] - 0.04879016416943205).abs() < 1e-15);
    }

    #[test]
    fn returns_telescope_back_to_last_close() {
        let closes = [100.0, 103.2, 99.7, 104.95, 101.3, 108.0];
        let rs = compute_log_returns(&series_from_closes(&closes)).unwrap();
        let rebuilt = closes[0] * rs.returns.iter().sum::<f64>().exp();
        assert!((rebuilt - closes[closes.len() - 1]).abs() / closes[closes.len() - 1] < 1e-12);
    }

    #[test]
    fn split_index_examples() {
        assert_eq!(temporal_split_index(1000, 0.75).unwrap(), 750);
        assert_eq!(temporal_split_index(10, 0.75).unwrap(), 7);
        assert_eq!(temporal_split_index(4, 0.75).unwrap(), 3);
    }

    #[test]
    fn split_rejects_degenerate_and_bad_ratio() {
        assert!(matches!(temporal_split_index(1, 0.75), Err(FeatureError::DegenerateSplit { .. })));
        assert!(matches!(temporal_split_index(3, 0.2), Err(FeatureError::DegenerateSplit { .. })));
        assert!(matches!(temporal_split_index(10, 0.0), Err(FeatureError::BadRatio { .. })));
        assert!(matches!(temporal_split_index(10, 1.0), Err(FeatureError::BadRatio { .. })));
    }

    #[test]
    fn sigma_matches_hand_evaluation() {
        // sqrt(((0.01)^2 + (-0.01)^2) / 1) = 0.01414213562373095
        let rs = returns_from(&[0.01, -0.01, 5.0, -5.0]);
        let sigma = training_sigma(&rs, 2).unwrap();
        assert!((sigma - 0.01414213562373095).abs() < 1e-15);
    }

    #[test]
    fn sigma_constant_returns_is_error() {
        let rs = returns_from(&[0.003, 0.003, 0.003, 1.0]);
        assert!(matches!(training_sigma(&rs, 3), Err(FeatureError::ZeroVariance)));
    }

    #[test]
    fn sigma_permutation_invariant() {
        let a = returns_from(&[0.01, -0.02, 0.005, 0.03]);
        let b = returns_from(&[0.03, 0.005, -0.02, 0.01]);
        assert_eq!(training_sigma(&a, 4).unwrap(), training_sigma(&b, 4).unwrap());
    }

    #[test]
    fn labeling_strict_inequality() {
        let spec = SignificanceSpec::new(Direction::Positive, 1.2, 0.02).unwrap();
        let rs = returns_from(&[0.025, 0.024, -0.025]);
        assert_eq!(label_returns(&rs, &spec), vec![1, 0, 0]);

        let neg = SignificanceSpec::new(Direction::Negative, 1.2, 0.02).unwrap();
        assert_eq!(label_returns(&rs, &neg), vec![0, 0, 1]);
    }

    #[test]
    fn windows_index_arithmetic() {
        let values: Vec<f64> = (0..100).map(|i| i as f64 / 1000.0).collect();
        let rs = returns_from(&values);
        let labels: Vec<u8> = (0..100).map(|i| (i % 3 == 0) as u8).collect();
        let ds = make_windows(&rs, &labels, 7, 0.75, Direction::Positive, 1.2).unwrap();
        assert_eq!(ds.n_samples(), 93);
        assert_eq!(ds.features.row(0), &values[0..7]);
        assert_eq!(ds.labels[0], labels[7]);
        assert_eq!(ds.sample_dates[0], rs.dates[7]);
        assert_eq!(ds.split_index, temporal_split_index(93, 0.75).unwrap());
        // every row equals a direct slice of the return vector
        for k in 0..ds.n_samples() {
            assert_eq!(ds.features.row(k), &values[k..k + 7]);
            assert_eq!(ds.labels[k], labels[k + 7]);
        }
    }

    #[test]
    fn windows_too_short_is_error() {
        let rs = returns_from(&vec![0.01; 60]);
        let labels = vec![0u8; 60];
        assert!(matches!(
            make_windows(&rs, &labels, 60, 0.75, Direction::Positive, 1.0),
            Err(FeatureError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn paper_window_grid_accepted() {
        let values: Vec<f64> = (0..200).map(|i| ((i * 37) % 19) as f64 / 100.0 - 0.09).collect();
        let rs = returns_from(&values);
        let labels = vec![0u8; 200];
        for p in [7usize, 14, 30, 60] {
            let ds = make_windows(&rs, &labels, p, 0.75, Direction::Positive, 1.0).unwrap();
            assert_eq!(ds.n_samples(), 200 - p);
        }
    }

    #[test]
    fn no_leakage_sigma_ignores_test_mutations() {
        let mut values: Vec<f64> = (0..120).map(|i| (i as f64 * 0.713).sin() / 50.0).collect();
        let rs = returns_from(&values);
        let bundle = build_dataset(&rs, Direction::Positive, 1.2, 7, 0.75, false).unwrap();
        let split_in_returns = 7 + bundle.dataset.split_index;
        let sigma_before = bundle.spec.sigma_train;

        // mutate every test-period return and recompute
        for v in values.iter_mut().skip(split_in_returns) {
            *v += 123.456;
        }
        let mutated = returns_from(&values);
        let sigma_after = training_sigma(&mutated, split_in_returns).unwrap();
        assert_eq!(sigma_before.to_bits(), sigma_after.to_bits());
    }

    #[test]
    fn standardize_uses_training_moments() {
        let values: Vec<f64> = (0..50).map(|i| (i as f64 * 1.37).sin() / 30.0).collect();
        let rs = returns_from(&values);
        let raw = build_dataset(&rs, Direction::Positive, 1.0, 7, 0.75, false).unwrap();
        let scaled = build_dataset(&rs, Direction::Positive, 1.0, 7, 0.75, true).unwrap();
        let split_in_returns = 7 + raw.dataset.split_index;
        let train = &values[..split_in_returns];
        let mean = train.iter().sum::<f64>() / train.len() as f64;
        let sigma = raw.spec.sigma_train;
        for k in 0..raw.dataset.n_samples() {
            for j in 0..7 {
                let want = (raw.dataset.features.row(k)[j] - mean) / sigma;
                assert!((scaled.dataset.features.row(k)[j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dataset_csv_has_expected_shape() {
        let values: Vec<f64> = (0..30).map(|i| i as f64 / 100.0 - 0.14).collect();
        let rs = returns_from(&values);
        let labels: Vec<u8> = values.iter().map(|&v| (v > 0.1) as u8).collect();
        let ds = make_windows(&rs, &labels, 7, 0.75, Direction::Positive, 1.2).unwrap();
        let csv = dataset_csv_string(&ds);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "feature_1,feature_2,feature_3,feature_4,feature_5,feature_6,feature_7,label,date"
        );
        assert_eq!(lines.count(), ds.n_samples());
    }

    proptest! {
        #[test]
        fn raising_fraction_never_adds_labels(
            values in proptest::collection::vec(-0.1f64..0.1, 30..120),
            direction in prop_oneof![Just(Direction::Positive), Just(Direction::Negative)],
        ) {
            let rs = returns_from(&values);
            let mut previous = usize::MAX;
            for step in 0..=5 {
                let fraction = 1.0 + 0.1 * step as f64;
                if let Ok(spec) = SignificanceSpec::new(direction, fraction, 0.03) {
                    let count = label_returns(&rs, &spec).iter().map(|&l| l as usize).sum::<usize>();
                    prop_assert!(count <= previous);
                    previous = count;
                }
            }
        }

        #[test]
        fn window_rows_equal_direct_slices(
            values in proptest::collection::vec(-0.2f64..0.2, 20..80),
            window in 2usize..10,
        ) {
            let rs = returns_from(&values);
            let labels = vec![0u8; values.len()];
            if let Ok(ds) = make_windows(&rs, &labels, window, 0.75, Direction::Positive, 1.0) {
                for k in 0..ds.n_samples() {
                    prop_assert_eq!(ds.features.row(k), &values[k..k + window]);
                }
            }
        }
    }
}
