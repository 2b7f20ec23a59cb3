//! Grid configuration and its key-value file format.
//!
//! The file accepts exactly these keys (unknown keys are errors):
//!
//! ```text
//! # comment
//! data KO=data/ko.csv          # repeatable, ticker=path
//! windows 7,14,30,60
//! fractions 1.0,1.1,1.2,1.3,1.4,1.5
//! directions positive,negative
//! models mlp,cnn,lstm,rf,rsi
//! master_seed 42
//! output_dir out
//! parallelism 2
//! ```
//!
//! Training/forest overrides, repeats, and timing suppression are
//! code-level fields for harness embedders; they are not grid-file keys.

use std::path::PathBuf;

use crate::features::Direction;
use crate::forest::ForestConfig;
use crate::neuralnet::TrainConfig;

use super::{HarnessError, ModelKind};

#[derive(Debug, Clone)]
pub struct GridConfig {
    /// ticker -> price CSV path
    pub data: Vec<(String, PathBuf)>,
    pub windows: Vec<usize>,
    pub fractions: Vec<f64>,
    pub directions: Vec<Direction>,
    pub models: Vec<ModelKind>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// worker threads; 0 picks the rayon default
    pub parallelism: usize,
    pub train_ratio: f64,
    pub train: TrainConfig,
    pub forest: ForestConfig,
    /// runs per cell with derived seeds; rows report the mean AUC
    pub repeats: usize,
    /// when false, `train_seconds` is written as zero so result files are
    /// bit-reproducible
    pub record_timing: bool,
    pub standardize: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            data: Vec::new(),
            windows: vec![7, 14, 30, 60],
            fractions: vec![1.0, 1.1, 1.2, 1.3, 1.4, 1.5],
            directions: vec![Direction::Positive, Direction::Negative],
            models: vec![ModelKind::Mlp, ModelKind::Cnn, ModelKind::Lstm, ModelKind::Rf, ModelKind::Rsi],
            master_seed: 42,
            output_dir: PathBuf::from("out"),
            parallelism: 0,
            train_ratio: 0.75,
            train: TrainConfig::default(),
            forest: ForestConfig::default(),
            repeats: 1,
            record_timing: true,
            standardize: false,
        }
    }
}

impl GridConfig {
    pub fn cell_count(&self) -> usize {
        self.data.len()
            * self.models.len()
            * self.windows.len()
            * self.fractions.len()
            * self.directions.len()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |message: String| HarnessError::Config { line: 0, message };
        if self.data.is_empty() {
            return Err(bad("no data files configured".into()));
        }
        if self.windows.is_empty() || self.fractions.is_empty() || self.directions.is_empty() || self.models.is_empty() {
            return Err(bad("empty grid axis".into()));
        }
        if let Some(w) = self.windows.iter().find(|&&w| w < 2) {
            return Err(bad(format!("window {w} must be at least 2")));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0) || !f.is_finite()) {
            return Err(bad(format!("fraction {f} must be a positive real")));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(bad(format!("train_ratio {} not in (0,1)", self.train_ratio)));
        }
        if self.repeats == 0 {
            return Err(bad("repeats must be positive".into()));
        }
        Ok(())
    }
}

/// Parses the grid-file format above on top of the defaults.
pub fn parse_grid_config(text: &str) -> Result<GridConfig, HarnessError> {
    let mut config = GridConfig::default();
    let mut saw_data = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(char::is_whitespace).ok_or(HarnessError::Config {
            line: lineno,
            message: format!("expected `key value`, found `{line}`"),
        })?;
        let value = value.trim();
        let bad = |message: String| HarnessError::Config { line: lineno, message };

        match key {
            "data" => {
                let (ticker, path) = value
                    .split_once('=')
                    .ok_or_else(|| bad(format!("expected `TICKER=path`, found `{value}`")))?;
                if !saw_data {
                    config.data.clear();
                    saw_data = true;
                }
                config.data.push((ticker.trim().to_owned(), PathBuf::from(path.trim())));
            }
            "windows" => {
                config.windows = split_list(value)
                    .map(|v| v.parse::<usize>().map_err(|_| bad(format!("bad window `{v}`"))))
                    .collect::<Result<_, _>>()?;
            }
            "fractions" => {
                config.fractions = split_list(value)
                    .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad fraction `{v}`"))))
                    .collect::<Result<_, _>>()?;
            }
            "directions" => {
                config.directions = split_list(value)
                    .map(|v| v.parse::<Direction>().map_err(|e| bad(e)))
                    .collect::<Result<_, _>>()?;
            }
            "models" => {
                config.models = split_list(value)
                    .map(|v| v.parse::<ModelKind>().map_err(|e| bad(e)))
                    .collect::<Result<_, _>>()?;
            }
            "master_seed" => {
                config.master_seed =
                    value.parse().map_err(|_| bad(format!("bad master_seed `{value}`")))?;
            }
            "output_dir" => {
                config.output_dir = PathBuf::from(value);
            }
            "parallelism" => {
                config.parallelism =
                    value.parse().map_err(|_| bad(format!("bad parallelism `{value}`")))?;
            }
            other => {
                return Err(bad(format!("unknown key `{other}`")));
            }
        }
    }

    config.validate()?;
    Ok(config)
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# demo grid
data KO=data/ko.csv
data CSCO=data/csco.csv
windows 7,14
fractions 1.0, 1.2, 1.5
directions positive,negative
models mlp,rsi
master_seed 7
output_dir results
parallelism 3
";

    #[test]
    fn parses_all_keys() {
        let c = parse_grid_config(SAMPLE).unwrap();
        assert_eq!(c.data.len(), 2);
        assert_eq!(c.data[0].0, "KO");
        assert_eq!(c.windows, vec![7, 14]);
        assert_eq!(c.fractions, vec![1.0, 1.2, 1.5]);
        assert_eq!(c.models, vec![ModelKind::Mlp, ModelKind::Rsi]);
        assert_eq!(c.master_seed, 7);
        assert_eq!(c.output_dir, PathBuf::from("results"));
        assert_eq!(c.parallelism, 3);
        assert_eq!(c.cell_count(), 2 * 2 * 2 * 3 * 2);
    }

    #[test]
    fn unknown_key_is_an_error_with_line() {
        let text = "data A=a.csv\nepochs 3\n";
        match parse_grid_config(text) {
            Err(HarnessError::Config { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("unknown key"), "{message}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_data_is_an_error() {
        assert!(parse_grid_config("windows 7\n").is_err());
    }

    #[test]
    fn defaults_fill_unspecified_axes() {
        let c = parse_grid_config("data A=a.csv\n").unwrap();
        assert_eq!(c.windows, vec![7, 14, 30, 60]);
        assert_eq!(c.fractions.len(), 6);
        assert_eq!(c.directions.len(), 2);
        assert_eq!(c.models.len(), 5);
        assert_eq!(c.cell_count(), 240);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse_grid_config("data A=a.csv\nwindows 1\n").is_err());
        assert!(parse_grid_config("data A=a.csv\nfractions -0.5\n").is_err());
        assert!(parse_grid_config("data A=a.csv\nmodels gru\n").is_err());
        assert!(parse_grid_config("data A=a.csv\ndirections sideways\n").is_err());
    }
}
