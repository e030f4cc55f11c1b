//! Monte-Carlo engine: layout, clustering, pilots, blocks, schedule.
//!
//! Trials are grouped by layout: every `layout_every` trials share device
//! positions, shadowing, clustering and pilot assignment, and only the fast
//! fading is redrawn. Inside a layout the reporting period is split into
//! rounds; in round `r` the `r`-th device (in turn order) of every cluster
//! is active. The pilot-group statistics and the interference floor depend
//! only on who is active, so they are computed once per round and reused by
//! every trial and block of that round.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chanest::{pilot_group_stats, PilotGroupStats};
use crate::clusterer::{cluster, default_cap, Clustering, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, complex_gaussian, CMatrix};
use crate::netgen::{build_correlation_set, build_layout, CorrelationSet, NetworkConfig};
use crate::pilotgraph::{assign_pilots, random_partition, InterferenceWeights, PilotPartition};
use crate::receiver::{mmmse_sinrs_split, spectral_efficiency};
use crate::rng::{self, Purpose};
use crate::scalar::Real;
use crate::scheduler::{run_period, turn_order, TrafficModel, TurnOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Devices share cluster pilots and take turns.
    #[default]
    Clustered,
    /// Every device has its own pilot and transmits every block.
    Unclustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PilotStrategy {
    /// Greedy max-k-cut over the cluster interference graph.
    #[default]
    Greedy,
    /// Independent random map per cell.
    Random,
    /// Cluster `c` uses pilot `c` everywhere.
    Identity,
}

/// Engine settings beyond the network parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub mode: Mode,
    /// Enforce the cluster size cap during assignment.
    pub capped: bool,
    /// Cluster size cap; `ceil(K / C)` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    /// Pilot sequences per cell; the cluster count when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilots: Option<usize>,
    pub pilot_assignment: PilotStrategy,
    pub turn_order: TurnOrder,
    /// Trials sharing one layout.
    pub layout_every: usize,
    /// Coherence blocks averaged into a device's SE.
    pub blocks_per_round: usize,
    /// Devices below this SE are not scheduled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_se: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Clustered,
            capped: true,
            cap: None,
            pilots: None,
            pilot_assignment: PilotStrategy::Greedy,
            turn_order: TurnOrder::Gain,
            layout_every: 10,
            blocks_per_round: 4,
            min_se: None,
        }
    }
}

impl SimOptions {
    pub fn validate(&self, net: &NetworkConfig) -> Result<()> {
        if self.layout_every == 0 || self.blocks_per_round == 0 {
            return Err(Error::Config(
                "layout_every and blocks_per_round must be at least 1".into(),
            ));
        }
        let tau_p = self.tau_p(net);
        if tau_p >= net.coherence_samples {
            return Err(Error::Config(format!(
                "{tau_p} pilots leave no data samples in a block of {} (use fewer {})",
                net.coherence_samples,
                if self.mode == Mode::Unclustered { "devices" } else { "pilots" }
            )));
        }
        if self.mode == Mode::Clustered {
            if tau_p < net.clusters {
                return Err(Error::Config(format!(
                    "{} clusters need at least as many pilots, got {tau_p}",
                    net.clusters
                )));
            }
            let cap = self.effective_cap(net);
            if self.capped && cap * net.clusters < net.devices {
                return Err(Error::Config(format!(
                    "{} clusters of at most {cap} devices cannot hold {} devices",
                    net.clusters, net.devices
                )));
            }
        }
        if self.min_se.is_some_and(|m| !(m >= 0.0)) {
            return Err(Error::Config("min_se must be non-negative".into()));
        }
        Ok(())
    }

    pub fn tau_p(&self, net: &NetworkConfig) -> usize {
        match self.mode {
            Mode::Unclustered => net.devices,
            Mode::Clustered => self.pilots.unwrap_or(net.clusters),
        }
    }

    pub fn effective_cap(&self, net: &NetworkConfig) -> usize {
        self.cap.unwrap_or_else(|| default_cap(net.devices, net.clusters))
    }
}

/// Clustering, pilots and turn order of one layout.
#[derive(Debug, Clone)]
pub struct LayoutPlan {
    pub clusterings: Vec<Clustering>,
    pub partition: PilotPartition,
    /// `turns[cell][cluster]`: devices in transmit order.
    pub turns: Vec<Vec<Vec<usize>>>,
}

impl LayoutPlan {
    pub fn rounds(&self) -> usize {
        self.turns
            .iter()
            .flat_map(|cell| cell.iter().map(|t| t.len()))
            .max()
            .unwrap_or(0)
    }
}

pub fn plan_layout<T: Real>(
    net: &NetworkConfig,
    opts: &SimOptions,
    corr: &CorrelationSet<T>,
    group: u64,
) -> Result<LayoutPlan> {
    let cells = corr.cells();
    let devices = corr.devices();
    let tau_p = opts.tau_p(net);
    if opts.mode == Mode::Unclustered {
        let clusterings = vec![Clustering::singletons(devices); cells];
        let partition = PilotPartition::identity(&vec![devices; cells], tau_p)?;
        let turns = (0..cells)
            .map(|_| (0..devices).map(|k| vec![k]).collect())
            .collect();
        return Ok(LayoutPlan {
            clusterings,
            partition,
            turns,
        });
    }
    let cap = opts.effective_cap(net);
    let clusterings = (0..cells)
        .map(|j| {
            let serving: Vec<_> = (0..devices).map(|k| corr.toeplitz(j, j, k)).collect();
            let s = SimilarityMatrix::from_correlations(&serving)?;
            let seed = rng::sub_seed(net.seed, Purpose::Clustering, &[group, j as u64]);
            cluster(&s, net.clusters, cap, opts.capped, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = net.grid();
    let neighbors = |a: usize, b: usize| grid.are_neighbors(a, b);
    let sizes: Vec<usize> = clusterings.iter().map(|c| c.clusters()).collect();
    let pilot_seed = rng::sub_seed(net.seed, Purpose::PilotAssignment, &[group]);
    let partition = match opts.pilot_assignment {
        PilotStrategy::Greedy => {
            let weights = InterferenceWeights::build(corr, &clusterings, neighbors)?;
            assign_pilots(&weights, &sizes, tau_p, neighbors, pilot_seed)?
        }
        PilotStrategy::Random => random_partition(&sizes, tau_p, pilot_seed)?,
        PilotStrategy::Identity => PilotPartition::identity(&sizes, tau_p)?,
    };
    let turns = clusterings
        .iter()
        .enumerate()
        .map(|(j, cl)| {
            let key: Vec<f64> = (0..devices)
                .map(|k| corr.beta(j, j, k).to_f64_lossy())
                .collect();
            (0..cl.clusters())
                .map(|c| turn_order(&cl.members(c), &key, opts.turn_order))
                .collect()
        })
        .collect();
    Ok(LayoutPlan {
        clusterings,
        partition,
        turns,
    })
}

/// Omission statistics for one reporting period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodResult {
    pub period_s: f64,
    /// Mean omitted devices per cell.
    pub omitted_mean: f64,
    pub omitted_std: f64,
    pub omit_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub devices: usize,
    pub clusters: usize,
    pub tau_p: usize,
    pub trials: usize,
    /// Sum SE of the active devices of a cell per block.
    pub cell_se_mean: f64,
    pub cell_se_std: f64,
    /// Mean NMSE of the active devices at their serving BS.
    pub nmse_mean: f64,
    pub periods: Vec<PeriodResult>,
}

/// One trial of a layout group.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    /// Mean over rounds and cells of the per-block cell sum SE.
    pub cell_se: f64,
    /// `se[cell][device]`, averaged over the blocks of the device's round.
    pub se: Vec<Vec<f64>>,
}

/// Trials sharing one layout.
#[derive(Debug, Clone)]
pub struct GroupOutcome {
    pub trials: Vec<TrialOutcome>,
    pub plan: LayoutPlan,
    pub nmse_sum: f64,
    pub nmse_count: usize,
}

/// Statistics of BS `bs` for the active set of one round.
struct BsRound<T: Real> {
    /// `(pilot group stats, members as (cell, device))`, one per used pilot.
    groups: Vec<(PilotGroupStats<T>, Vec<(usize, usize)>)>,
    z: CMatrix<T>,
}

fn bs_round<T: Real>(
    corr: &CorrelationSet<T>,
    active: &[Vec<(usize, usize)>],
    bs: usize,
    tau_p: usize,
    noise_over_power: T,
) -> Result<BsRound<T>> {
    let m = corr.antennas();
    let mut z = CMatrix::zeros(m, m);
    let mut groups = Vec::new();
    for members in active.iter().filter(|g| !g.is_empty()) {
        let rs: Vec<_> = members
            .iter()
            .map(|&(cell, k)| corr.toeplitz(bs, cell, k))
            .collect();
        let stats = pilot_group_stats(&rs, tau_p, noise_over_power)?;
        z += &stats.error_cov_sum;
        groups.push((stats, members.clone()));
    }
    linalg::add_scaled_identity(&mut z, noise_over_power);
    Ok(BsRound {
        groups,
        z: linalg::hermitian_part(&z),
    })
}

/// Simulates `trials` trials on the layout of trial group `group`.
pub fn simulate_layout<T: Real>(
    net: &NetworkConfig,
    opts: &SimOptions,
    group: u64,
    trials: usize,
) -> Result<GroupOutcome> {
    let placement = build_layout(net, rng::sub_seed(net.seed, Purpose::Layout, &[group]))?;
    let corr: CorrelationSet<T> =
        build_correlation_set(net, &placement, rng::sub_seed(net.seed, Purpose::Shadowing, &[group]))?;
    let plan = plan_layout(net, opts, &corr, group)?;
    let cells = corr.cells();
    let devices = corr.devices();
    let tau_p = opts.tau_p(net);
    let tau_c = net.coherence_samples;
    let rounds = plan.rounds();
    let blocks = opts.blocks_per_round;
    let nop = T::lit(net.noise_over_power());

    let mut outcomes = vec![
        TrialOutcome {
            cell_se: 0.0,
            se: vec![vec![0.0; devices]; cells],
        };
        trials
    ];
    let mut nmse_sum = 0.0;
    let mut nmse_count = 0;

    for r in 0..rounds {
        // active[pilot] = (cell, device) sharing that pilot this round
        let mut active: Vec<Vec<(usize, usize)>> = vec![Vec::new(); tau_p];
        for (j, cell_turns) in plan.turns.iter().enumerate() {
            for (c, turn) in cell_turns.iter().enumerate() {
                if let Some(&k) = turn.get(r) {
                    active[plan.partition.pilot_of[j][c]].push((j, k));
                }
            }
        }
        for bs in 0..cells {
            let stats = bs_round(&corr, &active, bs, tau_p, nop)?;
            for (g, members) in &stats.groups {
                for (n, &(cell, _)) in members.iter().enumerate() {
                    if cell == bs {
                        nmse_sum += g.nmse[n].to_f64_lossy();
                        nmse_count += 1;
                    }
                }
            }
            let n_serving: usize = stats
                .groups
                .iter()
                .map(|(_, members)| members.iter().filter(|&&(cell, _)| cell == bs).count())
                .sum();
            if n_serving == 0 {
                continue;
            }
            // column of every estimate in the stacked channel matrix, serving
            // cell first so its devices are the leading columns
            let mut serving = Vec::with_capacity(n_serving);
            let mut next_other = n_serving;
            let columns: Vec<Vec<usize>> = stats
                .groups
                .iter()
                .map(|(_, members)| {
                    members
                        .iter()
                        .map(|&(cell, k)| {
                            if cell == bs {
                                serving.push(k);
                                serving.len() - 1
                            } else {
                                next_other += 1;
                                next_other - 1
                            }
                        })
                        .collect()
                })
                .collect();
            let total = next_other;
            let m = corr.antennas();
            let draws = trials * blocks;

            let mut g_draws: Vec<CMatrix<T>> =
                stats.groups.iter().map(|_| CMatrix::zeros(m, draws)).collect();
            for t in 0..trials {
                for b in 0..blocks {
                    let mut fading = rng::stream(
                        net.seed,
                        Purpose::FastFading,
                        &[group, t as u64, r as u64, bs as u64, b as u64],
                    );
                    for gd in g_draws.iter_mut() {
                        gd.set_column(t * blocks + b, &complex_gaussian::<T, _>(&mut fading, m));
                    }
                }
            }
            // estimates of group members: R_j psi^{-1} L g for every draw
            let estimates: Vec<(DMatrix<T>, DMatrix<T>)> = stats
                .groups
                .iter()
                .zip(&g_draws)
                .map(|((g, members), gd)| {
                    let white = linalg::matmul(&linalg::matmul(&g.psi_inv, &g.factor), gd);
                    let mut rr = DMatrix::zeros(members.len() * m, m);
                    let mut ri = DMatrix::zeros(members.len() * m, m);
                    for (n, &(cell, k)) in members.iter().enumerate() {
                        let r = corr.toeplitz(bs, cell, k);
                        for a in 0..m {
                            for c in 0..m {
                                let z = r.entry(a, c);
                                rr[(n * m + a, c)] = z.re;
                                ri[(n * m + a, c)] = z.im;
                            }
                        }
                    }
                    let (wr, wi) = linalg::split(&white);
                    linalg::matmul_split((&rr, &ri), (&wr, &wi))
                })
                .collect();

            let mut round_se = vec![vec![0.0; n_serving]; trials];
            let mut hr = DMatrix::zeros(m, total);
            let mut hi = DMatrix::zeros(m, total);
            for d in 0..draws {
                for ((er, ei), cols) in estimates.iter().zip(&columns) {
                    for (n, &col) in cols.iter().enumerate() {
                        hr.column_mut(col).copy_from(&er.view((n * m, d), (m, 1)));
                        hi.column_mut(col).copy_from(&ei.view((n * m, d), (m, 1)));
                    }
                }
                let gammas = mmmse_sinrs_split(&hr, &hi, n_serving, &stats.z)?;
                for (n, g) in gammas.iter().enumerate() {
                    round_se[d / blocks][n] += spectral_efficiency(g.to_f64_lossy(), tau_p, tau_c)?.se;
                }
            }
            for (outcome, se_t) in outcomes.iter_mut().zip(&round_se) {
                let mut sum = 0.0;
                for (n, &k) in serving.iter().enumerate() {
                    let se = se_t[n] / blocks as f64;
                    outcome.se[bs][k] = se;
                    sum += se;
                }
                outcome.cell_se += sum;
            }
        }
    }
    for o in outcomes.iter_mut() {
        o.cell_se /= (rounds.max(1) * cells) as f64;
    }
    Ok(GroupOutcome {
        trials: outcomes,
        plan,
        nmse_sum,
        nmse_count,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `net.trials` trials and schedules each for every period in `periods`.
pub fn run_point<T: Real>(net: &NetworkConfig, opts: &SimOptions, periods: &[f64]) -> Result<PointResult> {
    net.validate()?;
    opts.validate(net)?;
    if periods.is_empty() {
        return Err(Error::Config("at least one period is needed".into()));
    }
    let traffic: Vec<TrafficModel> = periods
        .iter()
        .map(|&p| TrafficModel::new(net.payload_bytes as f64 * 8.0, p, net.bandwidth_hz))
        .collect::<Result<_>>()?;
    let groups = net.trials.div_ceil(opts.layout_every);
    let outcomes = (0..groups)
        .into_par_iter()
        .map(|g| {
            let n = opts.layout_every.min(net.trials - g * opts.layout_every);
            simulate_layout::<T>(net, opts, g as u64, n)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cell_se = Vec::with_capacity(net.trials);
    let mut omitted: Vec<Vec<f64>> = vec![Vec::with_capacity(net.trials); periods.len()];
    let (mut nmse_sum, mut nmse_count) = (0.0, 0);
    for g in &outcomes {
        nmse_sum += g.nmse_sum;
        nmse_count += g.nmse_count;
        for t in &g.trials {
            cell_se.push(t.cell_se);
            for (p, tr) in traffic.iter().enumerate() {
                let report = run_period(&g.plan.turns, &t.se, tr, opts.min_se)?;
                omitted[p].push(report.omitted_per_cell());
            }
        }
    }
    let (cell_se_mean, cell_se_std) = mean_std(&cell_se);
    let periods = periods
        .iter()
        .zip(&omitted)
        .map(|(&period_s, o)| {
            let (omitted_mean, omitted_std) = mean_std(o);
            PeriodResult {
                period_s,
                omitted_mean,
                omitted_std,
                omit_rate: omitted_mean / net.devices as f64,
            }
        })
        .collect();
    Ok(PointResult {
        devices: net.devices,
        clusters: if opts.mode == Mode::Unclustered { net.devices } else { net.clusters },
        tau_p: opts.tau_p(net),
        trials: net.trials,
        cell_se_mean,
        cell_se_std,
        nmse_mean: if nmse_count == 0 { 0.0 } else { nmse_sum / nmse_count as f64 },
        periods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetworkConfig {
        NetworkConfig {
            cells: 4,
            devices: 6,
            clusters: 3,
            antennas: 8,
            trials: 3,
            ..NetworkConfig::default()
        }
    }

    fn opts() -> SimOptions {
        SimOptions {
            layout_every: 2,
            blocks_per_round: 2,
            ..SimOptions::default()
        }
    }

    #[test]
    fn plan_respects_caps_and_pilots() {
        let net = small();
        let placement = build_layout(&net, 5).unwrap();
        let corr: CorrelationSet<f64> = build_correlation_set(&net, &placement, 6).unwrap();
        let plan = plan_layout(&net, &opts(), &corr, 0).unwrap();
        plan.partition.validate().unwrap();
        assert_eq!(plan.rounds(), 2);
        for cell in &plan.turns {
            let mut all: Vec<usize> = cell.iter().flatten().copied().collect();
            all.sort();
            assert_eq!(all, (0..6).collect::<Vec<_>>());
            assert!(cell.iter().all(|t| t.len() <= 2));
        }
    }

    #[test]
    fn point_is_reproducible_and_bounded() {
        let net = small();
        let a = run_point::<f64>(&net, &opts(), &[1.0, 1.5]).unwrap();
        let b = run_point::<f64>(&net, &opts(), &[1.0, 1.5]).unwrap();
        assert_eq!(a, b);
        assert!(a.cell_se_mean > 0.0);
        assert!(a.nmse_mean > 0.0 && a.nmse_mean < 1.0);
        assert!(a.periods[1].omitted_mean <= a.periods[0].omitted_mean);
        for p in &a.periods {
            assert!((0.0..=1.0).contains(&p.omit_rate));
        }
    }

    #[test]
    fn unclustered_mode_uses_one_pilot_per_device() {
        let net = small();
        let o = SimOptions { mode: Mode::Unclustered, ..opts() };
        let r = run_point::<f64>(&net, &o, &[1.0]).unwrap();
        assert_eq!(r.tau_p, 6);
        let f = run_point::<f32>(&net, &o, &[1.0]).unwrap();
        assert!((f.cell_se_mean - r.cell_se_mean).abs() < 1e-2 * r.cell_se_mean);
    }

    #[test]
    fn block_too_short_is_rejected() {
        let net = NetworkConfig { coherence_samples: 6, ..small() };
        let o = SimOptions { mode: Mode::Unclustered, ..opts() };
        assert!(matches!(run_point::<f64>(&net, &o, &[1.0]), Err(Error::Config(_))));
        let few = SimOptions { pilots: Some(2), ..opts() };
        assert!(matches!(run_point::<f64>(&small(), &few, &[1.0]), Err(Error::Config(_))));
    }
}
