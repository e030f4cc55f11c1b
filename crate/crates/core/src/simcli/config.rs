//! Campaign files.
//!
//! A campaign is a TOML file with up to four sections, all optional:
//!
//! ```toml
//! [network]            # geometry, radio and traffic; defaults are Table-1 values
//! devices = 200
//! clusters = 10
//!
//! [sim]                # engine settings
//! mode = "clustered"   # or "unclustered"
//! capped = true
//!
//! [sweep]              # grid axes; an absent axis holds the base value
//! devices = [50, 100, 150, 200]
//! clusters = [10, 25]
//! periods = [1.0, 1.5]
//! modes = ["clustered"]
//! capped = [true, false]
//!
//! [output]
//! dir = "results"
//! ```
//!
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgen::NetworkConfig;
use crate::sim::{Mode, SimOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub devices: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<Mode>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capped: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "results".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Campaign {
    pub network: NetworkConfig,
    pub sim: SimOptions,
    pub sweep: SweepAxes,
    pub output: OutputConfig,
}

/// One grid point of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub network: NetworkConfig,
    pub sim: SimOptions,
    /// Periods evaluated on the same channel draws.
    pub periods: Vec<f64>,
}

fn axis<T: Clone>(name: &str, values: &Option<Vec<T>>, base: T) -> Result<Vec<T>> {
    match values {
        None => Ok(vec![base]),
        Some(v) if v.is_empty() => Err(Error::Config(format!("sweep axis {name} is empty"))),
        Some(v) => Ok(v.clone()),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Campaign {
    /// Parses campaign text; errors carry the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        let campaign: Campaign = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        Ok(campaign)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// The effective configuration as campaign text.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize campaign: {e}")))
    }

    /// Sets `section.key` to `value`, parsed as a TOML value when possible
    /// and as a string otherwise.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("override key `{path}` is not section.key")))?;
        let raw = raw.trim();
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut table: toml::Table = toml::from_str(&self.to_toml()?)
            .map_err(|e| Error::Config(format!("cannot re-read campaign: {e}")))?;
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let sec = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{section}` is not a section")))?;
        sec.insert(key.trim().to_string(), value);
        *self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override `{assignment}`: {}", e.message())))?;
        Ok(())
    }

    /// Expands the sweep axes into grid points, in axis order
    /// mode, capped, clusters, devices.
    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        let devices = axis("devices", &self.sweep.devices, self.network.devices)?;
        let clusters = axis("clusters", &self.sweep.clusters, self.network.clusters)?;
        let periods = axis("periods", &self.sweep.periods, self.network.period_s)?;
        let modes = axis("modes", &self.sweep.modes, self.sim.mode)?;
        let capped = axis("capped", &self.sweep.capped, self.sim.capped)?;
        let mut out = Vec::new();
        for &mode in &modes {
            let capped_axis: &[bool] = if mode == Mode::Unclustered { &capped[..1] } else { &capped };
            let cluster_axis: &[usize] = if mode == Mode::Unclustered { &clusters[..1] } else { &clusters };
            for &cap in capped_axis {
                for &c in cluster_axis {
                    for &k in &devices {
                        let network = NetworkConfig {
                            devices: k,
                            clusters: if mode == Mode::Unclustered { c.min(k).max(1) } else { c },
                            ..self.network.clone()
                        };
                        let sim = SimOptions {
                            mode,
                            capped: cap,
                            ..self.sim.clone()
                        };
                        out.push(GridPoint {
                            network,
                            sim,
                            periods: periods.clone(),
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Checks every grid point without simulating.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if grid.is_empty() {
            return Err(Error::Config("campaign has no grid points".into()));
        }
        for p in &grid {
            p.validate()?;
        }
        Ok(())
    }
}

impl GridPoint {
    pub fn validate(&self) -> Result<()> {
        let ctx = |e: Error| {
            Error::Config(format!(
                "K={} C={} ({:?}): {e}",
                self.network.devices, self.network.clusters, self.sim.mode
            ))
        };
        self.network.validate().map_err(ctx)?;
        self.sim.validate(&self.network).map_err(ctx)?;
        if let Some(p) = self.periods.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::Config(format!("period {p} must be positive")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_table_defaults() {
        let c = Campaign::parse("").unwrap();
        assert_eq!(c.network, NetworkConfig::default());
        assert_eq!(c.network.cells, 16);
        assert_eq!(c.network.antennas, 64);
        assert_eq!(c.network.coherence_samples, 200);
        assert_eq!(c.sim, SimOptions::default());
        c.validate().unwrap();
    }

    #[test]
    fn zero_clusters_fail_validation() {
        let c = Campaign::parse("[network]\nclusters = 0\n").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let err = Campaign::parse("[network]\ndevices = 20\nbogus = 1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Campaign::parse("[nonsense]\n").is_err());
    }

    #[test]
    fn unclustered_needs_data_samples() {
        let c = Campaign::parse("[network]\ndevices = 200\n[sim]\nmode = \"unclustered\"\n").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn round_trip_is_identity() {
        let text = "[network]\ndevices = 120\nperiod_s = 1.5\n[sim]\ncapped = false\ncap = 20\n\
                    [sweep]\nclusters = [10, 20]\nmodes = [\"clustered\", \"unclustered\"]\n";
        let c = Campaign::parse(text).unwrap();
        let again = Campaign::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn overrides_edit_sections() {
        let mut c = Campaign::default();
        c.apply_override("network.antennas=32").unwrap();
        c.apply_override("sim.mode=unclustered").unwrap();
        c.apply_override("sweep.devices=[10, 20]").unwrap();
        assert_eq!(c.network.antennas, 32);
        assert_eq!(c.sim.mode, Mode::Unclustered);
        assert_eq!(c.sweep.devices, Some(vec![10, 20]));
        assert!(c.apply_override("network.nope=1").is_err());
        assert!(c.apply_override("antennas=1").is_err());
    }

    #[test]
    fn grid_expands_axes() {
        let c = Campaign::parse(
            "[sweep]\ndevices = [20, 40]\nclusters = [5, 10]\ncapped = [true, false]\n\
             modes = [\"clustered\", \"unclustered\"]\nperiods = [1.0, 1.5]\n",
        )
        .unwrap();
        let g = c.grid().unwrap();
        // 2 capped x 2 clusters x 2 devices clustered, then 2 devices unclustered
        assert_eq!(g.len(), 10);
        assert!(g.iter().all(|p| p.periods == vec![1.0, 1.5]));
        assert!(Campaign::parse("[sweep]\ndevices = []\n").unwrap().grid().is_err());
    }
}
