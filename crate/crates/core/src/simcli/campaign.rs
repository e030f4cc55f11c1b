//! Running campaigns and writing their results.
//!
//! CSV columns (all files have a header row, `.` decimal separator):
//!
//! * `results.csv`: mode, capped, devices, clusters, tau_p, period_s, trials,
//!   cell_se_mean, cell_se_std, omitted_mean, omitted_std, omit_rate, nmse_mean
//! * `fig2_omitted_capped.csv`: devices, clusters, period_s, omitted_capped,
//!   omitted_uncapped, omit_rate_capped, omit_rate_uncapped
//! * `fig3_omitted.csv`: clusters, devices, period_s, omitted_mean,
//!   omitted_std, omit_rate, cell_se_mean
//! * `fig4_se.csv`: devices, se_unclustered, se_unclustered_std,
//!   se_clustered, se_clustered_std (empty where a series has no point)
//!
//! Omitted counts are per cell, averaged over trials. Wall-clock times go to
//! `timing.txt` so the CSV files and `summary.txt` depend only on the inputs.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Campaign, GridPoint};
use crate::error::{Error, Result};
use crate::sim::{run_point, Mode, PointResult};

pub const RESULTS_HEADER: [&str; 13] = [
    "mode",
    "capped",
    "devices",
    "clusters",
    "tau_p",
    "period_s",
    "trials",
    "cell_se_mean",
    "cell_se_std",
    "omitted_mean",
    "omitted_std",
    "omit_rate",
    "nmse_mean",
];
pub const FIG2_HEADER: [&str; 7] = [
    "devices",
    "clusters",
    "period_s",
    "omitted_capped",
    "omitted_uncapped",
    "omit_rate_capped",
    "omit_rate_uncapped",
];
pub const FIG3_HEADER: [&str; 7] = [
    "clusters",
    "devices",
    "period_s",
    "omitted_mean",
    "omitted_std",
    "omit_rate",
    "cell_se_mean",
];
pub const FIG4_HEADER: [&str; 5] = [
    "devices",
    "se_unclustered",
    "se_unclustered_std",
    "se_clustered",
    "se_clustered_std",
];

/// One grid point and one period.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub mode: Mode,
    pub capped: bool,
    pub devices: usize,
    pub clusters: usize,
    pub tau_p: usize,
    pub period_s: f64,
    pub trials: usize,
    pub cell_se_mean: f64,
    pub cell_se_std: f64,
    pub omitted_mean: f64,
    pub omitted_std: f64,
    pub omit_rate: f64,
    pub nmse_mean: f64,
    pub wall_s: f64,
}

#[derive(Debug, Default)]
pub struct CampaignOutcome {
    pub rows: Vec<ResultRow>,
    /// Grid points that failed, with the reason.
    pub failures: Vec<String>,
    pub wall_s: f64,
}

impl CampaignOutcome {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

fn rows_of(point: &GridPoint, r: &PointResult, wall_s: f64) -> Vec<ResultRow> {
    r.periods
        .iter()
        .map(|p| ResultRow {
            mode: point.sim.mode,
            capped: point.sim.capped,
            devices: r.devices,
            clusters: r.clusters,
            tau_p: r.tau_p,
            period_s: p.period_s,
            trials: r.trials,
            cell_se_mean: r.cell_se_mean,
            cell_se_std: r.cell_se_std,
            omitted_mean: p.omitted_mean,
            omitted_std: p.omitted_std,
            omit_rate: p.omit_rate,
            nmse_mean: r.nmse_mean,
            wall_s,
        })
        .collect()
}

fn describe(p: &GridPoint) -> String {
    format!(
        "{:?} capped={} K={} C={}",
        p.sim.mode, p.sim.capped, p.network.devices, p.network.clusters
    )
}

/// Simulates every grid point; a failing point is reported and skipped.
pub fn run_grid(points: &[GridPoint], quiet: bool) -> CampaignOutcome {
    let start = Instant::now();
    let results: Vec<std::result::Result<Vec<ResultRow>, String>> = points
        .par_iter()
        .map(|p| {
            let t = Instant::now();
            let out = p
                .validate()
                .and_then(|_| run_point::<f64>(&p.network, &p.sim, &p.periods))
                .map(|r| rows_of(p, &r, t.elapsed().as_secs_f64()))
                .map_err(|e| format!("{}: {e}", describe(p)));
            if !quiet {
                match &out {
                    Ok(_) => eprintln!("done {} in {:.1} s", describe(p), t.elapsed().as_secs_f64()),
                    Err(e) => eprintln!("failed {e}"),
                }
            }
            out
        })
        .collect();
    let mut outcome = CampaignOutcome::default();
    for r in results {
        match r {
            Ok(rows) => outcome.rows.extend(rows),
            Err(e) => outcome.failures.push(e),
        }
    }
    outcome.wall_s = start.elapsed().as_secs_f64();
    outcome
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Clustered => "clustered",
        Mode::Unclustered => "unclustered",
    }
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            mode_name(r.mode).to_string(),
            r.capped.to_string(),
            r.devices.to_string(),
            r.clusters.to_string(),
            r.tau_p.to_string(),
            num(r.period_s),
            r.trials.to_string(),
            num(r.cell_se_mean),
            num(r.cell_se_std),
            num(r.omitted_mean),
            num(r.omitted_std),
            num(r.omit_rate),
            num(r.nmse_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Canonical sweeps behind the three result figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Omitted devices with and without the cluster size cap.
    Fig2,
    /// Omitted devices against devices, clusters and period.
    Fig3,
    /// Cell SE of clustered and unclustered operation.
    Fig4,
}

pub const OMISSION_DEVICES: [usize; 7] = [50, 75, 100, 125, 150, 175, 200];
pub const OMISSION_CLUSTERS: [usize; 4] = [10, 15, 20, 25];
pub const FIG4_CLUSTERED_DEVICES: [usize; 4] = [50, 100, 150, 200];
pub const FIG4_CLUSTERS: usize = 25;

/// `10, 14, ..., 190`.
pub fn unclustered_devices() -> Vec<usize> {
    (10..=190).step_by(4).collect()
}

impl std::str::FromStr for Figure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Self::Fig2),
            "fig3" => Ok(Self::Fig3),
            "fig4" => Ok(Self::Fig4),
            other => Err(Error::Config(format!("unknown figure `{other}`"))),
        }
    }
}

impl Figure {
    pub fn file_name(self) -> &'static str {
        match self {
            Self::Fig2 => "fig2_omitted_capped.csv",
            Self::Fig3 => "fig3_omitted.csv",
            Self::Fig4 => "fig4_se.csv",
        }
    }

    /// Campaigns of the figure's series, built on `base`.
    pub fn campaigns(self, base: &Campaign) -> Vec<Campaign> {
        let with = |f: &dyn Fn(&mut Campaign)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            Self::Fig2 => vec![with(&|c| {
                c.sim.mode = Mode::Clustered;
                c.sweep.modes = Some(vec![Mode::Clustered]);
                c.sweep.devices = Some(OMISSION_DEVICES.to_vec());
                c.sweep.clusters = Some(vec![10]);
                c.sweep.capped = Some(vec![true, false]);
                c.sweep.periods = Some(vec![1.0]);
            })],
            Self::Fig3 => vec![with(&|c| {
                c.sim.mode = Mode::Clustered;
                c.sweep.modes = Some(vec![Mode::Clustered]);
                c.sweep.devices = Some(OMISSION_DEVICES.to_vec());
                c.sweep.clusters = Some(OMISSION_CLUSTERS.to_vec());
                c.sweep.capped = Some(vec![true]);
                c.sweep.periods = Some(vec![1.0, 1.5]);
            })],
            Self::Fig4 => vec![
                with(&|c| {
                    c.sim.mode = Mode::Unclustered;
                    c.sweep.modes = Some(vec![Mode::Unclustered]);
                    c.sweep.devices = Some(unclustered_devices());
                    c.sweep.clusters = None;
                    c.sweep.capped = Some(vec![true]);
                    c.sweep.periods = Some(vec![1.0]);
                }),
                with(&|c| {
                    c.sim.mode = Mode::Clustered;
                    c.sweep.modes = Some(vec![Mode::Clustered]);
                    c.sweep.devices = Some(FIG4_CLUSTERED_DEVICES.to_vec());
                    c.sweep.clusters = Some(vec![FIG4_CLUSTERS]);
                    c.sweep.capped = Some(vec![true]);
                    c.sweep.periods = Some(vec![1.0]);
                }),
            ],
        }
    }

    pub fn write_csv(self, path: &Path, rows: &[ResultRow]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        match self {
            Self::Fig2 => {
                w.write_record(FIG2_HEADER)?;
                let capped: Vec<&ResultRow> = rows.iter().filter(|r| r.capped).collect();
                for c in capped {
                    let free = rows.iter().find(|r| {
                        !r.capped && r.devices == c.devices && r.clusters == c.clusters && r.period_s == c.period_s
                    });
                    w.write_record([
                        c.devices.to_string(),
                        c.clusters.to_string(),
                        num(c.period_s),
                        num(c.omitted_mean),
                        free.map_or(String::new(), |f| num(f.omitted_mean)),
                        num(c.omit_rate),
                        free.map_or(String::new(), |f| num(f.omit_rate)),
                    ])?;
                }
            }
            Self::Fig3 => {
                w.write_record(FIG3_HEADER)?;
                for r in rows {
                    w.write_record([
                        r.clusters.to_string(),
                        r.devices.to_string(),
                        num(r.period_s),
                        num(r.omitted_mean),
                        num(r.omitted_std),
                        num(r.omit_rate),
                        num(r.cell_se_mean),
                    ])?;
                }
            }
            Self::Fig4 => {
                w.write_record(FIG4_HEADER)?;
                let mut devices: Vec<usize> = rows.iter().map(|r| r.devices).collect();
                devices.sort_unstable();
                devices.dedup();
                for k in devices {
                    let of = |m: Mode| rows.iter().find(|r| r.mode == m && r.devices == k);
                    let pair = |r: Option<&ResultRow>| match r {
                        Some(r) => [num(r.cell_se_mean), num(r.cell_se_std)],
                        None => [String::new(), String::new()],
                    };
                    let [u, us] = pair(of(Mode::Unclustered));
                    let [c, cs] = pair(of(Mode::Clustered));
                    w.write_record([k.to_string(), u, us, c, cs])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Headline numbers of the figure.
    pub fn summary(self, rows: &[ResultRow]) -> String {
        let mut s = String::new();
        match self {
            Self::Fig2 => {
                let _ = writeln!(s, "fig2: omitted devices per cell, capped vs uncapped");
                for r in rows.iter().filter(|r| r.capped) {
                    if let Some(f) = rows.iter().find(|f| !f.capped && f.devices == r.devices) {
                        let _ = writeln!(
                            s,
                            "  K={:<4} capped {:7.2}  uncapped {:7.2}",
                            r.devices, r.omitted_mean, f.omitted_mean
                        );
                    }
                }
            }
            Self::Fig3 => {
                let _ = writeln!(s, "fig3: omission rate by clusters, devices and period");
                for r in rows {
                    let _ = writeln!(
                        s,
                        "  C={:<3} K={:<4} period {:.1} s  omitted {:7.2}  rate {:6.2}%",
                        r.clusters,
                        r.devices,
                        r.period_s,
                        r.omitted_mean,
                        100.0 * r.omit_rate
                    );
                }
            }
            Self::Fig4 => {
                let unc: Vec<&ResultRow> = rows.iter().filter(|r| r.mode == Mode::Unclustered).collect();
                if let Some(best) = unc
                    .iter()
                    .max_by(|a, b| a.cell_se_mean.total_cmp(&b.cell_se_mean))
                {
                    let _ = writeln!(
                        s,
                        "fig4: unclustered peak {:.2} bit/s/Hz/cell at K={}",
                        best.cell_se_mean, best.devices
                    );
                }
                let clu: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.mode == Mode::Clustered)
                    .map(|r| r.cell_se_mean)
                    .collect();
                if !clu.is_empty() {
                    let lo = clu.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = clu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mean = clu.iter().sum::<f64>() / clu.len() as f64;
                    let _ = writeln!(
                        s,
                        "fig4: clustered mean {mean:.2} bit/s/Hz/cell, range {lo:.2}..{hi:.2}"
                    );
                }
            }
        }
        s
    }
}

/// Runs the series of a figure (see [`Figure::campaigns`]) and writes its CSV.
pub fn run_figure(figure: Figure, series: &[Campaign], out_dir: &Path, quiet: bool) -> Result<CampaignOutcome> {
    let mut points = Vec::new();
    for c in series {
        points.extend(c.grid()?);
    }
    let outcome = run_grid(&points, quiet);
    std::fs::create_dir_all(out_dir)?;
    figure.write_csv(&out_dir.join(figure.file_name()), &outcome.rows)?;
    let mut summary = figure.summary(&outcome.rows);
    append_failures(&mut summary, &outcome);
    std::fs::write(out_dir.join("summary.txt"), summary)?;
    write_timing(out_dir, &outcome)?;
    Ok(outcome)
}

/// Runs a campaign file's grid and writes `results.csv`.
pub fn run_campaign(campaign: &Campaign, out_dir: &Path, quiet: bool) -> Result<CampaignOutcome> {
    let points = campaign.grid()?;
    let outcome = run_grid(&points, quiet);
    std::fs::create_dir_all(out_dir)?;
    write_results_csv(&out_dir.join("results.csv"), &outcome.rows)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "grid points: {}", points.len());
    for r in &outcome.rows {
        let _ = writeln!(
            summary,
            "  {} capped={} K={} C={} period {:.2} s: cell SE {:.2}, omitted {:.2} ({:.2}%), NMSE {:.4}",
            mode_name(r.mode),
            r.capped,
            r.devices,
            r.clusters,
            r.period_s,
            r.cell_se_mean,
            r.omitted_mean,
            100.0 * r.omit_rate,
            r.nmse_mean
        );
    }
    append_failures(&mut summary, &outcome);
    std::fs::write(out_dir.join("summary.txt"), summary)?;
    write_timing(out_dir, &outcome)?;
    Ok(outcome)
}

fn append_failures(summary: &mut String, outcome: &CampaignOutcome) {
    if !outcome.failures.is_empty() {
        let _ = writeln!(summary, "failed points: {}", outcome.failures.len());
        for f in &outcome.failures {
            let _ = writeln!(summary, "  {f}");
        }
    }
}

fn write_timing(out_dir: &Path, outcome: &CampaignOutcome) -> Result<()> {
    let mut t = String::new();
    let _ = writeln!(t, "total {:.2} s", outcome.wall_s);
    for r in &outcome.rows {
        let _ = writeln!(
            t,
            "{} capped={} K={} C={} period {:.2}: {:.2} s",
            mode_name(r.mode),
            r.capped,
            r.devices,
            r.clusters,
            r.period_s,
            r.wall_s
        );
    }
    std::fs::write(out_dir.join("timing.txt"), t)?;
    Ok(())
}
