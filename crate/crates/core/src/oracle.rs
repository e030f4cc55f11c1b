//! Brute-force checks on tiny instances, run by `pilotsim selftest`.
//!
//! Each suite compares a pipeline stage against a direct (slow) evaluation
//! of the quantity it computes and counts the instances that agree.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chanest::{mmse_estimate, nmse, pilot_group_stats, psi_matrix};
use crate::clusterer::{cluster, default_cap, SimilarityMatrix};
use crate::error::Result;
use crate::linalg::{complex_gaussian, CMatrix, CVector, HermitianToeplitz};
use crate::netgen::{build_correlation_set, build_layout, spatial_correlation, CorrelationSet, NetworkConfig};
use crate::pilotgraph::{assign_pilots, partition_weight, random_partition, InterferenceWeights, PilotPartition};
use crate::receiver::{mmmse_sinrs, sinr};
use crate::scheduler::{run_period, tx_time, TrafficModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: usize,
    pub total: usize,
    /// Instances that must pass.
    pub required: usize,
    pub note: String,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.passed >= self.required
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:4} {:<12} {}/{} (need {}) {}",
            if self.ok() { "PASS" } else { "FAIL" },
            self.name,
            self.passed,
            self.total,
            self.required,
            self.note
        )
    }
}

fn random_hpd(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> CMatrix<f64> {
    let b = CMatrix::from_iterator(m, m, complex_gaussian::<f64, _>(rng, m * m).iter().copied());
    let mut a = (&b * b.adjoint()).scale(scale / m as f64);
    for i in 0..m {
        a[(i, i)].re += 0.1 * scale;
    }
    a
}

fn rel_err(a: &CMatrix<f64>, b: &CMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Estimates against `R_j psi^{-1} y` with an explicitly inverted `psi`.
pub fn estimator_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let m = rng.gen_range(2..=6);
        let n = rng.gen_range(1..=3);
        let tau_p = rng.gen_range(1..=8);
        let rho = rng.gen_range(0.5..2.0);
        let sigma2 = rng.gen_range(0.05..1.0);
        let group: Vec<CMatrix<f64>> = (0..n)
            .map(|_| {
                let scale = rng.gen_range(0.2..3.0);
                random_hpd(&mut rng, m, scale)
            })
            .collect();
        let y = CMatrix::from_iterator(m, 1, complex_gaussian::<f64, _>(&mut rng, m).iter().copied());
        let y = CVector::from_column_slice(y.as_slice());
        let Ok(est) = mmse_estimate(&group, &y, tau_p, rho, sigma2) else {
            continue;
        };
        let mut psi = CMatrix::zeros(m, m);
        for r in &group {
            psi += r;
        }
        for i in 0..m {
            psi[(i, i)].re += sigma2 / (tau_p as f64 * rho);
        }
        let Some(inv) = psi.clone().try_inverse() else {
            continue;
        };
        let mut e = 0.0f64;
        for (j, r) in group.iter().enumerate() {
            let h = r * &inv * &y;
            let got = CMatrix::from_column_slice(m, 1, est.h_hat[j].as_slice());
            e = e.max(rel_err(&got, &CMatrix::from_column_slice(m, 1, h.as_slice())));
            let c = r - r * &inv * r;
            e = e.max(rel_err(&est.err_cov[j], &c));
        }
        worst = worst.max(e);
        if e <= 1e-10 {
            passed += 1;
        }
    }
    // two unit-gain channels on one pilot without noise: half the energy is lost
    let eye = CMatrix::<f64>::identity(4, 4);
    let half = psi_matrix(&[eye.clone(), eye.clone()], 1, 1.0, 0.0)
        .and_then(|psi| nmse(&eye, &psi))
        .map_or(false, |v| (v - 0.5).abs() < 1e-14);
    // compact statistics against the dense estimator
    let stats_ok = (|| -> Result<bool> {
        let members: Vec<HermitianToeplitz<f64>> = [0.3, -0.7, 1.1]
            .iter()
            .map(|&a| spatial_correlation(a, 10.0, 6, 0.8))
            .collect();
        let refs: Vec<&HermitianToeplitz<f64>> = members.iter().collect();
        let stats = pilot_group_stats(&refs, 3, 0.4)?;
        let dense: Vec<CMatrix<f64>> = members.iter().map(|t| t.to_matrix()).collect();
        let psi = psi_matrix(&dense, 3, 1.0, 0.4)?;
        let mut ok = true;
        for (j, r) in dense.iter().enumerate() {
            ok &= (stats.nmse[j] - nmse(r, &psi)?).abs() < 1e-10;
        }
        Ok(ok)
    })()
    .unwrap_or(false);
    SuiteReport {
        name: "estimator",
        passed: passed + usize::from(half) + usize::from(stats_ok),
        total: instances + 2,
        required: instances + 2,
        note: format!("worst relative error {worst:.1e}"),
    }
}

/// Closed-form M-MMSE SINR against the explicit combiner, plus the two
/// structural properties of the SINR.
pub fn sinr_suite(seed: u64, instances: usize) -> SuiteReport {
    let (cells, m, k) = (2, 8, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let est: Vec<CMatrix<f64>> = (0..cells)
            .map(|_| {
                let g = rng.gen_range(0.1..3.0f64);
                CMatrix::from_iterator(m, k, complex_gaussian::<f64, _>(&mut rng, m * k).iter().map(|z| z * g.sqrt()))
            })
            .collect();
        let scale = rng.gen_range(0.1..2.0);
        let z = random_hpd(&mut rng, m, scale);
        let serving = rng.gen_range(0..cells);
        let Ok(fast) = mmmse_sinrs(&est, serving, &z) else {
            continue;
        };
        let mut a = z.clone();
        for h in &est {
            a += h * h.adjoint();
        }
        let Some(inv) = a.try_inverse() else {
            continue;
        };
        let mut ok = true;
        for d in 0..k {
            let h = est[serving].column(d).into_owned();
            let w = &inv * &h;
            let (Ok(g), Ok(g2), Ok(mr)) = (
                sinr(&w, &est, serving, d, &z),
                sinr(&w.scale(-3.7), &est, serving, d, &z),
                sinr(&h, &est, serving, d, &z),
            ) else {
                ok = false;
                continue;
            };
            let e = (fast[d] - g).abs() / g;
            worst = worst.max(e);
            ok &= e <= 1e-12;
            ok &= (g2 - g).abs() <= 1e-12 * g;
            ok &= mr <= g * (1.0 + 1e-12);
        }
        if ok {
            passed += 1;
        }
    }
    SuiteReport {
        name: "sinr",
        passed,
        total: instances,
        required: instances,
        note: format!("worst relative error {worst:.1e}"),
    }
}

/// Lowest total distance of any clustering into `clusters` groups of at most
/// `cap` devices, each scored from its best member as medoid.
pub fn exhaustive_capped_td(s: &SimilarityMatrix<f64>, clusters: usize, cap: usize) -> Option<f64> {
    let n = s.len();
    let mut labels = vec![0usize; n];
    let mut best: Option<f64> = None;
    let total = clusters.checked_pow(n as u32)?;
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % clusters;
            c /= clusters;
        }
        let mut sizes = vec![0; clusters];
        for &l in &labels {
            sizes[l] += 1;
        }
        if sizes.iter().any(|&z| z == 0 || z > cap) {
            continue;
        }
        let mut td = 0.0;
        for g in 0..clusters {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == g).collect();
            td += members
                .iter()
                .map(|&med| members.iter().map(|&i| s.distance(i, med)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
        }
        if best.map_or(true, |b| td < b) {
            best = Some(td);
        }
    }
    best
}

fn random_similarity(rng: &mut ChaCha8Rng, n: usize) -> Result<SimilarityMatrix<f64>> {
    let corr: Vec<HermitianToeplitz<f64>> = (0..n)
        .map(|_| spatial_correlation(rng.gen_range(-1.4..1.4), 10.0, 8, 1.0))
        .collect();
    let refs: Vec<&HermitianToeplitz<f64>> = corr.iter().collect();
    SimilarityMatrix::from_correlations(&refs)
}

/// Capped clustering against the exhaustive capped optimum.
pub fn clustering_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut near = 0;
    let mut caps_ok = true;
    for t in 0..instances {
        let n = rng.gen_range(4..=8);
        let cap = default_cap(n, 2);
        let Ok(s) = random_similarity(&mut rng, n) else {
            caps_ok = false;
            continue;
        };
        let Ok(got) = cluster(&s, 2, cap, true, seed ^ t as u64) else {
            caps_ok = false;
            continue;
        };
        caps_ok &= got.sizes().iter().all(|&z| z <= cap);
        if let Some(opt) = exhaustive_capped_td(&s, 2, cap) {
            if got.td <= 1.1 * opt + 1e-12 {
                near += 1;
            }
        }
    }
    SuiteReport {
        name: "clustering",
        passed: if caps_ok { near } else { 0 },
        total: instances,
        required: (instances * 4).div_ceil(5),
        note: format!("caps respected: {caps_ok}"),
    }
}

/// Lowest interference weight over every pilot map, cell 0 held fixed.
pub fn brute_force_partition(
    weights: &InterferenceWeights<f64>,
    clusters_per_cell: &[usize],
    tau_p: usize,
) -> Result<(PilotPartition, f64)> {
    let mut current = PilotPartition::identity(clusters_per_cell, tau_p)?;
    let mut best = (current.clone(), partition_weight(weights, &current));
    fn injections(n: usize, tau_p: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut used = vec![false; tau_p];
        let mut cur = Vec::with_capacity(n);
        fn rec(n: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == n {
                out.push(cur.clone());
                return;
            }
            for p in 0..used.len() {
                if !used[p] {
                    used[p] = true;
                    cur.push(p);
                    rec(n, used, cur, out);
                    cur.pop();
                    used[p] = false;
                }
            }
        }
        rec(n, &mut used, &mut cur, &mut out);
        out
    }
    let options: Vec<Vec<Vec<usize>>> = clusters_per_cell.iter().map(|&n| injections(n, tau_p)).collect();
    let mut idx = vec![0usize; clusters_per_cell.len()];
    loop {
        // odometer over cells 1..L
        let mut cell = 1;
        while cell < idx.len() {
            idx[cell] += 1;
            if idx[cell] < options[cell].len() {
                break;
            }
            idx[cell] = 0;
            cell += 1;
        }
        if cell >= idx.len() {
            break;
        }
        for c in 1..idx.len() {
            current.pilot_of[c] = options[c][idx[c]].clone();
        }
        let w = partition_weight(weights, &current);
        if w < best.1 {
            best = (current.clone(), w);
        }
    }
    Ok(best)
}

/// Interference weights of a random two-cell geometry.
pub fn two_cell_weights(seed: u64, clusters: usize) -> Result<(InterferenceWeights<f64>, Vec<usize>)> {
    let net = NetworkConfig {
        cells: 2,
        devices: 8,
        clusters,
        antennas: 8,
        ..NetworkConfig::default()
    };
    let placement = build_layout(&net, seed)?;
    let corr: CorrelationSet<f64> = build_correlation_set(&net, &placement, seed.wrapping_add(1))?;
    let cap = default_cap(net.devices, clusters);
    let clusterings = (0..2)
        .map(|j| {
            let serving: Vec<_> = (0..net.devices).map(|k| corr.toeplitz(j, j, k)).collect();
            cluster(&SimilarityMatrix::from_correlations(&serving)?, clusters, cap, true, seed ^ j as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    let sizes = clusterings.iter().map(|c| c.clusters()).collect();
    let w = InterferenceWeights::build(&corr, &clusterings, |a, b| a != b)?;
    Ok((w, sizes))
}

/// Results of the greedy pilot assignment on one geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotCheck {
    pub valid: bool,
    pub greedy: f64,
    pub optimum: f64,
    pub random_median: f64,
}

pub fn check_pilots(seed: u64, clusters: usize) -> Result<PilotCheck> {
    let (w, sizes) = two_cell_weights(seed, clusters)?;
    let greedy = assign_pilots(&w, &sizes, clusters, |a, b| a != b, seed)?;
    let valid = greedy.validate().is_ok();
    let (_, optimum) = brute_force_partition(&w, &sizes, clusters)?;
    let mut random: Vec<f64> = (0..100)
        .map(|r| random_partition(&sizes, clusters, seed.wrapping_mul(101).wrapping_add(r)).map(|p| partition_weight(&w, &p)))
        .collect::<Result<_>>()?;
    random.sort_by(f64::total_cmp);
    Ok(PilotCheck {
        valid,
        greedy: partition_weight(&w, &greedy),
        optimum,
        random_median: 0.5 * (random[49] + random[50]),
    })
}

/// Greedy pilots against the brute-force optimum and random maps.
pub fn pilot_suite(seed: u64, instances: usize) -> Vec<SuiteReport> {
    let mut valid = 0;
    let mut near = 0;
    let mut beats = 0;
    for t in 0..instances {
        let clusters = 2 + t % 3;
        if let Ok(c) = check_pilots(seed.wrapping_add(t as u64 * 7919), clusters) {
            valid += usize::from(c.valid);
            near += usize::from(c.greedy <= 1.5 * c.optimum + 1e-12);
            beats += usize::from(c.greedy <= c.random_median);
        }
    }
    vec![
        SuiteReport {
            name: "pilot-valid",
            passed: valid,
            total: instances,
            required: instances,
            note: String::new(),
        },
        SuiteReport {
            name: "pilot-opt",
            passed: near,
            total: instances,
            required: (instances * 9).div_ceil(10),
            note: "within 1.5x of the optimum".into(),
        },
        SuiteReport {
            name: "pilot-random",
            passed: beats,
            total: instances,
            required: (instances * 19).div_ceil(20),
            note: "at most the median of 100 random maps".into(),
        },
    ]
}

/// Served counts against the longest prefix that fits the period.
pub fn scheduler_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    for _ in 0..instances {
        let traffic = TrafficModel::new(4000.0, rng.gen_range(0.5..2.0), 12500.0).expect("positive traffic");
        let devices = rng.gen_range(1..12);
        let se: Vec<f64> = (0..devices).map(|_| rng.gen_range(0.0..4.0)).collect();
        let mut order: Vec<usize> = (0..devices).collect();
        for i in (1..devices).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let split = rng.gen_range(0..=devices);
        let turns = vec![vec![order[..split].to_vec(), order[split..].to_vec()]];
        let Ok(r) = run_period(&turns, &[se.clone()], &traffic, None) else {
            continue;
        };
        let expect: usize = turns[0]
            .iter()
            .map(|t| {
                (0..=t.len())
                    .filter(|&n| t[..n].iter().map(|&k| tx_time(se[k], &traffic)).sum::<f64>() <= traffic.period_s)
                    .max()
                    .unwrap_or(0)
            })
            .sum();
        if r.served[0] == expect && r.omitted[0] == devices - expect {
            passed += 1;
        }
    }
    SuiteReport {
        name: "scheduler",
        passed,
        total: instances,
        required: instances,
        note: String::new(),
    }
}

/// Every suite at its default size.
pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    let mut out = vec![
        estimator_suite(seed, 50),
        sinr_suite(seed.wrapping_add(1), 100),
        clustering_suite(seed.wrapping_add(2), 50),
    ];
    out.extend(pilot_suite(seed.wrapping_add(3), 50));
    out.push(scheduler_suite(seed.wrapping_add(4), 100));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn exhaustive_search_on_two_blocks() {
        let mut m = DMatrix::from_element(4, 4, 0.1);
        for (a, b) in [(0, 1), (2, 3)] {
            m[(a, b)] = 0.9;
            m[(b, a)] = 0.9;
        }
        for i in 0..4 {
            m[(i, i)] = 1.0;
        }
        let s = SimilarityMatrix::new(m).unwrap();
        let td = exhaustive_capped_td(&s, 2, 2).unwrap();
        assert!((td - 0.2).abs() < 1e-12);
    }

    #[test]
    fn all_suites_pass_on_small_sizes() {
        for r in [
            estimator_suite(3, 10),
            sinr_suite(4, 10),
            clustering_suite(5, 10),
            scheduler_suite(6, 20),
        ] {
            assert!(r.ok(), "{r}");
        }
        for r in pilot_suite(7, 6) {
            assert!(r.passed + 1 >= r.total, "{r}");
        }
    }
}
