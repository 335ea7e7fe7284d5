//! Experiment files.
//!
//! A config is a TOML document:
//!
//! ```toml
//! mode = "experiment"          # experiment | verify | mechanism
//! trials = 100000
//! seed = 7
//!
//! [submodular]
//! kind = "uniform_rank"
//! n = 2
//! k = 1
//!
//! [[distributions]]
//! kind = "discrete"
//! support = [[1.0, 1.0]]
//!
//! [[distributions]]
//! kind = "discrete"
//! support = [[0.0, 0.99], [100.0, 0.01]]
//!
//! [adversary]
//! kind = "fixed_order"
//! order = [0, 1]
//!
//! [estimator]
//! kind = "exact"
//!
//! [verify]                     # optional, verify mode
//! budget = 1000
//!
//! [[sweep.axes]]               # optional, for `sweep`
//! path = "distributions.1.support"
//! values = [[[0.0, 0.9], [10.0, 0.1]], [[0.0, 0.99], [100.0, 0.01]]]
//! ```
//!
//! Unknown keys are rejected. A sweep axis replaces the value at a dotted
//! path (array positions are numbers) and the grid is the cross product of
//! all axes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::harness::adversary::AdversaryPolicy;
use crate::harness::experiment::ExperimentConfig;
use crate::harness::verify::DEFAULT_BUDGET;
use crate::prophet::ThresholdEstimator;
use crate::submodular::SubmodularSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Experiment,
    Verify,
    Mechanism,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default = "default_budget")]
    pub budget: u64,
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub mode: Mode,
    pub trials: u64,
    pub seed: u64,
    pub submodular: SubmodularSpec,
    pub distributions: Vec<DistributionSpec>,
    pub adversary: AdversaryPolicy,
    pub estimator: ThresholdEstimator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
}

/// One cell of a sweep: the substituted values and the resulting config.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub assignment: Vec<(String, toml::Value)>,
    pub config: ConfigFile,
}

impl ConfigFile {
    /// Parses and validates.
    pub fn parse(text: &str) -> Result<Self> {
        let config: ConfigFile = toml::from_str(text).map_err(parse_error)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment().validate()?;
        if let Some(sweep) = &self.sweep {
            for (k, axis) in sweep.axes.iter().enumerate() {
                if axis.path.is_empty() || axis.path.starts_with("sweep") {
                    return Err(Error::validation(
                        format!("sweep.axes[{k}].path"),
                        "must name a config value outside the sweep table",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            submodular: self.submodular.clone(),
            distributions: self.distributions.clone(),
            adversary: self.adversary.clone(),
            estimator: self.estimator,
            trials: self.trials,
            seed: self.seed,
        }
    }

    pub fn budget(&self) -> u64 {
        self.verify.as_ref().map_or(DEFAULT_BUDGET, |v| v.budget)
    }

    /// Cross product of the sweep axes, first axis varying slowest. Every
    /// cell is validated; an absent or empty grid is an error.
    pub fn expand_sweep(&self) -> Result<Vec<SweepCell>> {
        let axes = match &self.sweep {
            Some(grid) if !grid.axes.is_empty() => &grid.axes,
            _ => return Err(Error::validation("sweep.axes", "grid is empty")),
        };
        for (k, axis) in axes.iter().enumerate() {
            if axis.values.is_empty() {
                return Err(Error::validation(
                    format!("sweep.axes[{k}].values"),
                    "axis has no values",
                ));
            }
        }
        let mut base = self.clone();
        base.sweep = None;
        let base = toml::Value::try_from(&base).expect("config serializes");

        let mut cells = vec![Vec::new()];
        for axis in axes {
            cells = cells
                .into_iter()
                .flat_map(|prefix: Vec<(String, toml::Value)>| {
                    axis.values.iter().map(move |v| {
                        let mut next = prefix.clone();
                        next.push((axis.path.clone(), v.clone()));
                        next
                    })
                })
                .collect();
        }
        cells
            .into_iter()
            .enumerate()
            .map(|(c, assignment)| {
                let mut doc = base.clone();
                for (path, value) in &assignment {
                    set_path(&mut doc, path, value.clone())?;
                }
                let config: ConfigFile = doc.try_into().map_err(|e: toml::de::Error| {
                    Error::validation(format!("sweep cell {c}"), e.message().to_string())
                })?;
                config.validate().map_err(|e| match e {
                    Error::Validation { field, message } => {
                        Error::validation(format!("sweep cell {c}: {field}"), message)
                    }
                    other => other,
                })?;
                Ok(SweepCell { assignment, config })
            })
            .collect()
    }
}

fn parse_error(e: toml::de::Error) -> Error {
    let field = e
        .span()
        .map(|s| format!("config (bytes {}..{})", s.start, s.end))
        .unwrap_or_else(|| "config".to_string());
    Error::validation(field, e.message().to_string())
}

fn set_path(doc: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let missing = || Error::validation("sweep.axes.path", format!("{path:?} does not exist"));
    let mut at = doc;
    for key in path.split('.') {
        at = match at {
            toml::Value::Table(t) => t.get_mut(key).ok_or_else(missing)?,
            toml::Value::Array(a) => {
                let i: usize = key.parse().map_err(|_| missing())?;
                a.get_mut(i).ok_or_else(missing)?
            }
            _ => return Err(missing()),
        };
    }
    *at = value;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TIGHT: &str = r#"
trials = 1000
seed = 7

[submodular]
kind = "uniform_rank"
n = 2
k = 1

[[distributions]]
kind = "discrete"
support = [[1.0, 1.0]]

[[distributions]]
kind = "discrete"
support = [[0.0, 0.99], [100.0, 0.01]]

[adversary]
kind = "fixed_order"
order = [0, 1]

[estimator]
kind = "exact"

[[sweep.axes]]
path = "distributions.1.support"
values = [[[0.0, 0.9], [10.0, 0.1]], [[0.0, 0.99], [100.0, 0.01]]]

[[sweep.axes]]
path = "seed"
values = [1, 2, 3]
"#;

    #[test]
    fn round_trip() {
        let c = ConfigFile::parse(TIGHT).unwrap();
        assert_eq!(c.mode, Mode::Experiment);
        let again = ConfigFile::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn unknown_keys_rejected() {
        for (from, to) in [
            ("seed = 7", "seed = 7\ncolour = 1"),
            ("kind = \"exact\"", "kind = \"exact\"\nbogus = 1"),
            ("k = 1", "k = 1\nm = 2"),
            ("order = [0, 1]", "order = [0, 1]\nx = 0"),
        ] {
            let text = TIGHT.replacen(from, to, 1);
            assert!(
                ConfigFile::parse(&text).unwrap_err().is_validation(),
                "{to}"
            );
        }
    }

    #[test]
    fn bad_probabilities_point_at_the_field() {
        let text = TIGHT.replace("[[0.0, 0.99], [100.0, 0.01]]\n\n[adversary]", "[[0.0, 0.89], [100.0, 0.01]]\n\n[adversary]");
        match ConfigFile::parse(&text).unwrap_err() {
            Error::Validation { field, .. } => assert_eq!(field, "distributions[1].support"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn sweep_cross_product() {
        let c = ConfigFile::parse(TIGHT).unwrap();
        let cells = c.expand_sweep().unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0].config.seed, 1);
        assert_eq!(cells[5].config.seed, 3);
        assert_eq!(
            cells[0].config.distributions[1],
            DistributionSpec::Discrete {
                support: vec![(0.0, 0.9), (10.0, 0.1)]
            }
        );
        assert!(cells.iter().all(|cell| cell.config.sweep.is_none()));

        let mut empty = c.clone();
        empty.sweep = Some(SweepGrid { axes: vec![] });
        assert!(empty.expand_sweep().unwrap_err().is_validation());
        empty.sweep = None;
        assert!(empty.expand_sweep().unwrap_err().is_validation());
    }
}
