//! Command-line front end: campaign files, canonical figure sweeps and the
//! self-test.
//!
//! ```text
//! pilotsim [flags] run <config> [section.key=value ...]
//! pilotsim [flags] validate <config> [section.key=value ...]
//! pilotsim [flags] figure <fig2|fig3|fig4> [section.key=value ...]
//! pilotsim [flags] selftest
//! ```
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

pub mod campaign;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use campaign::{run_campaign, run_figure, CampaignOutcome, Figure, ResultRow};
pub use config::{Campaign, GridPoint};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "pilotsim", version, about = "Clustered pilot allocation for multicell massive-MIMO IoT uplinks")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Channel realizations per grid point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Directory for CSV and summary files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// No progress messages.
    #[arg(long, global = true)]
    quiet: bool,
    /// Scaled-down parameter set.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 4 cells, 32 antennas, 10 trials, a new layout every trial.
    Desk,
}

impl Preset {
    pub fn apply(self, c: &mut Campaign) {
        match self {
            Self::Desk => {
                c.network.cells = 4;
                c.network.antennas = 32;
                c.network.trials = 10;
                c.sim.layout_every = 1;
            }
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate every grid point of a campaign file.
    Run {
        config: PathBuf,
        /// `section.key=value` settings, e.g. `network.trials=10` or `sweep.devices=[50,100]`
        overrides: Vec<String>,
    },
    /// Check a campaign file and print the effective configuration.
    Validate {
        config: PathBuf,
        /// `section.key=value` settings, e.g. `network.trials=10` or `sweep.devices=[50,100]`
        overrides: Vec<String>,
    },
    /// Run the canonical sweep behind a result figure.
    Figure {
        #[arg(value_parser = ["fig2", "fig3", "fig4"])]
        name: String,
        /// `section.key=value` settings, e.g. `network.trials=10` or `sweep.devices=[50,100]`
        overrides: Vec<String>,
    },
    /// Check every stage against brute-force oracles on tiny instances.
    Selftest,
}

impl Cli {
    /// Preset, then overrides, then flags, each on top of the previous.
    fn configure(&self, c: &mut Campaign, overrides: &[String]) -> Result<()> {
        if let Some(p) = self.preset {
            p.apply(c);
        }
        for o in overrides {
            c.apply_override(o)?;
        }
        if let Some(s) = self.seed {
            c.network.seed = s;
        }
        if let Some(t) = self.trials {
            c.network.trials = t;
        }
        if let Some(d) = &self.out_dir {
            c.output.dir = d.to_string_lossy().into_owned();
        }
        Ok(())
    }

    fn execute(&self) -> Result<bool> {
        match &self.command {
            Command::Run { config, overrides } => {
                let mut c = Campaign::load(config)?;
                self.configure(&mut c, overrides)?;
                // invalid points are reported by the run without stopping it
                let out = run_campaign(&c, c.output.dir.as_ref(), self.quiet)?;
                report(&out, self.quiet);
                Ok(out.succeeded())
            }
            Command::Validate { config, overrides } => {
                let mut c = Campaign::load(config)?;
                self.configure(&mut c, overrides)?;
                c.validate()?;
                if !self.quiet {
                    print!("{}", c.to_toml()?);
                    println!("# {} grid point(s)", c.grid()?.len());
                }
                Ok(true)
            }
            Command::Figure { name, overrides } => {
                let figure: Figure = name.parse()?;
                let mut series = figure.campaigns(&Campaign::default());
                let mut points = 0;
                for c in &mut series {
                    self.configure(c, overrides)?;
                    c.validate()?;
                    points += c.grid()?.len();
                }
                if !self.quiet {
                    eprintln!("{name}: {points} grid point(s), {} trial(s) each", series[0].network.trials);
                }
                let out = run_figure(figure, &series, series[0].output.dir.as_ref(), self.quiet)?;
                report(&out, self.quiet);
                Ok(out.succeeded())
            }
            Command::Selftest => {
                let seed = self.seed.unwrap_or(1);
                let reports = crate::oracle::run_all(seed);
                for r in &reports {
                    if !self.quiet || !r.ok() {
                        println!("{r}");
                    }
                }
                Ok(reports.iter().all(|r| r.ok()))
            }
        }
    }
}

fn report(out: &CampaignOutcome, quiet: bool) {
    for f in &out.failures {
        eprintln!("error: {f}");
    }
    if !quiet {
        eprintln!("{} row(s) in {:.1} s", out.rows.len(), out.wall_s);
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(args) {
        Ok(p) => p,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(parsed.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    };
    match pool.install(|| parsed.execute()) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(cli(["pilotsim"]), 2);
        assert_eq!(cli(["pilotsim", "frobnicate"]), 2);
        assert_eq!(cli(["pilotsim", "figure", "fig9"]), 2);
        assert_eq!(cli(["pilotsim", "--bogus", "selftest"]), 2);
        assert_eq!(cli(["pilotsim", "--help"]), 0);
    }

    #[test]
    fn validate_defaults_and_broken_files() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.toml");
        std::fs::write(&good, "").unwrap();
        assert_eq!(cli(["pilotsim", "--quiet", "validate", good.to_str().unwrap()]), 0);
        let bad = dir.path().join("bad.toml");
        std::fs::write(&bad, "[network]\nclusters = 0\n").unwrap();
        assert_eq!(cli(["pilotsim", "--quiet", "validate", bad.to_str().unwrap()]), 1);
        let missing = dir.path().join("missing.toml");
        assert_eq!(cli(["pilotsim", "--quiet", "validate", missing.to_str().unwrap()]), 1);
    }

    #[test]
    fn desk_preset_values() {
        let mut c = Campaign::default();
        Preset::Desk.apply(&mut c);
        assert_eq!((c.network.cells, c.network.antennas, c.network.trials), (4, 32, 10));
    }
}
