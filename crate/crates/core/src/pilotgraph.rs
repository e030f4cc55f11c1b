//! Inter-cell cluster interference weights and greedy pilot assignment.
//!
//! Every cluster is a vertex; an edge between clusters of neighbouring cells
//! carries the average cross-to-serving gain ratio in both directions.
//! Clusters that share a pilot form one subgroup, and the assignment tries to
//! keep heavy edges between different subgroups (a greedy max-k-cut).

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clusterer::Clustering;
use crate::error::{Error, Result};
use crate::netgen::CorrelationSet;
use crate::scalar::Real;

/// Weight between cluster `c` of cell `i` and cluster `c2` of cell `j`.
///
/// `beta(bs, cell, device)` is the large-scale gain of a device at a BS.
pub fn cluster_pair_weight<T: Real>(
    beta: &impl Fn(usize, usize, usize) -> T,
    i: usize,
    c: &[usize],
    j: usize,
    c2: &[usize],
) -> Result<T> {
    if c.is_empty() || c2.is_empty() {
        return Err(Error::Structural("empty cluster".into()));
    }
    let mean = |bs: usize, cell: usize, members: &[usize]| {
        members.iter().fold(T::zero(), |acc, &k| acc + beta(bs, cell, k))
            / T::lit(members.len() as f64)
    };
    let serve_i = mean(i, i, c);
    let serve_j = mean(j, j, c2);
    if !(serve_i > T::zero() && serve_j > T::zero()) {
        return Err(Error::Domain("cluster has zero serving gain".into()));
    }
    Ok((mean(i, j, c2) / serve_i + mean(j, i, c) / serve_j).abs())
}

/// Cluster-to-cluster weights for every ordered pair of neighbouring cells.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceWeights<T: Real> {
    cells: usize,
    w: Vec<Option<DMatrix<T>>>,
}

impl<T: Real> InterferenceWeights<T> {
    /// Empty weight table; pairs are added with [`Self::set`].
    pub fn empty(cells: usize) -> Self {
        Self {
            cells,
            w: vec![None; cells * cells],
        }
    }

    /// Stores `w` for `(i, j)` and its transpose for `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, w: DMatrix<T>) -> Result<()> {
        if i == j || i >= self.cells || j >= self.cells {
            return Err(Error::Structural(format!("invalid cell pair ({i}, {j})")));
        }
        if w.iter().any(|x| !(x.is_finite() && *x >= T::zero())) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        self.w[j * self.cells + i] = Some(w.transpose());
        self.w[i * self.cells + j] = Some(w);
        Ok(())
    }

    pub fn build(
        corr: &CorrelationSet<T>,
        clusterings: &[Clustering],
        neighbors: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        let cells = corr.cells();
        if clusterings.len() != cells {
            return Err(Error::Structural("one clustering per cell expected".into()));
        }
        let beta = |bs: usize, cell: usize, k: usize| corr.beta(bs, cell, k);
        let members: Vec<Vec<Vec<usize>>> = clusterings
            .iter()
            .map(|cl| (0..cl.clusters()).map(|c| cl.members(c)).collect())
            .collect();
        let mut out = Self::empty(cells);
        for i in 0..cells {
            for j in i + 1..cells {
                if !neighbors(i, j) {
                    continue;
                }
                let (ci, cj) = (&members[i], &members[j]);
                let mut w = DMatrix::zeros(ci.len(), cj.len());
                for (a, ma) in ci.iter().enumerate() {
                    for (b, mb) in cj.iter().enumerate() {
                        w[(a, b)] = cluster_pair_weight(&beta, i, ma, j, mb)?;
                    }
                }
                out.set(i, j, w)?;
            }
        }
        Ok(out)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Weights with clusters of `i` as rows and clusters of `j` as columns.
    pub fn get(&self, i: usize, j: usize) -> Option<&DMatrix<T>> {
        self.w.get(i * self.cells + j).and_then(|w| w.as_ref())
    }
}

/// Pilot of every cluster of every cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotPartition {
    pub tau_p: usize,
    /// `pilot_of[cell][cluster]`.
    pub pilot_of: Vec<Vec<usize>>,
}

impl PilotPartition {
    /// Checks that no two clusters of a cell share a pilot.
    pub fn validate(&self) -> Result<()> {
        for (cell, pilots) in self.pilot_of.iter().enumerate() {
            let mut used = vec![false; self.tau_p];
            for &p in pilots {
                if p >= self.tau_p || used[p] {
                    return Err(Error::Structural(format!(
                        "cell {cell} does not map clusters to distinct pilots"
                    )));
                }
                used[p] = true;
            }
        }
        Ok(())
    }

    /// `(cell, cluster)` pairs on pilot `s`.
    pub fn subgroup(&self, s: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (cell, pilots) in self.pilot_of.iter().enumerate() {
            for (c, &p) in pilots.iter().enumerate() {
                if p == s {
                    out.push((cell, c));
                }
            }
        }
        out
    }

    /// Cluster of `cell` on pilot `s`, if any.
    pub fn cluster_on(&self, cell: usize, s: usize) -> Option<usize> {
        self.pilot_of[cell].iter().position(|&p| p == s)
    }

    /// Same pilot for cluster `c` in every cell: the identity map.
    pub fn identity(clusters_per_cell: &[usize], tau_p: usize) -> Result<Self> {
        check_sizes(clusters_per_cell, tau_p)?;
        Ok(Self {
            tau_p,
            pilot_of: clusters_per_cell.iter().map(|&n| (0..n).collect()).collect(),
        })
    }
}

fn check_sizes(clusters_per_cell: &[usize], tau_p: usize) -> Result<()> {
    if let Some(&n) = clusters_per_cell.iter().find(|&&n| n > tau_p) {
        return Err(Error::Config(format!(
            "{n} clusters need more than {tau_p} pilots"
        )));
    }
    Ok(())
}

fn random_injection(rng: &mut ChaCha8Rng, clusters: usize, tau_p: usize) -> Vec<usize> {
    let mut pilots: Vec<usize> = (0..tau_p).collect();
    pilots.shuffle(rng);
    pilots.truncate(clusters);
    pilots
}

/// Independent random pilot map per cell.
pub fn random_partition(clusters_per_cell: &[usize], tau_p: usize, seed: u64) -> Result<PilotPartition> {
    check_sizes(clusters_per_cell, tau_p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(PilotPartition {
        tau_p,
        pilot_of: clusters_per_cell
            .iter()
            .map(|&n| random_injection(&mut rng, n, tau_p))
            .collect(),
    })
}

/// Total weight of same-pilot cluster pairs over all neighbouring cell pairs.
pub fn partition_weight<T: Real>(weights: &InterferenceWeights<T>, partition: &PilotPartition) -> f64 {
    let cells = weights.cells();
    let mut total = 0.0;
    for i in 0..cells {
        for j in i + 1..cells {
            let Some(w) = weights.get(i, j) else { continue };
            for (a, &p) in partition.pilot_of[i].iter().enumerate() {
                if let Some(b) = partition.cluster_on(j, p) {
                    total += w[(a, b)].to_f64_lossy();
                }
            }
        }
    }
    total
}

/// Greedy pilot assignment, cell by cell in index order.
///
/// The first cell gets a seeded random map. Each later cell sorts its
/// clusters by their total weight towards already assigned neighbours and
/// gives each, heaviest first, the free pilot with the least accumulated
/// weight.
pub fn assign_pilots<T: Real>(
    weights: &InterferenceWeights<T>,
    clusters_per_cell: &[usize],
    tau_p: usize,
    neighbors: impl Fn(usize, usize) -> bool,
    seed: u64,
) -> Result<PilotPartition> {
    check_sizes(clusters_per_cell, tau_p)?;
    let cells = clusters_per_cell.len();
    if cells != weights.cells() {
        return Err(Error::Structural("weights cover a different number of cells".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pilot_of: Vec<Vec<usize>> = Vec::with_capacity(cells);
    // cluster_on[cell][pilot]
    let mut on_pilot: Vec<Vec<Option<usize>>> = Vec::with_capacity(cells);
    for i in 0..cells {
        let n = clusters_per_cell[i];
        let pilots = if i == 0 {
            random_injection(&mut rng, n, tau_p)
        } else {
            let mut cost = vec![vec![0.0f64; tau_p]; n];
            for j in 0..i {
                if !neighbors(i, j) {
                    continue;
                }
                let w = weights.get(i, j).ok_or_else(|| {
                    Error::Structural(format!("no weights for neighbours ({i}, {j})"))
                })?;
                for (c, row) in cost.iter_mut().enumerate() {
                    for (s, slot) in row.iter_mut().enumerate() {
                        if let Some(c2) = on_pilot[j][s] {
                            *slot += w[(c, c2)].to_f64_lossy();
                        }
                    }
                }
            }
            let totals: Vec<f64> = cost.iter().map(|row| row.iter().sum()).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                totals[b]
                    .partial_cmp(&totals[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut free = vec![true; tau_p];
            let mut pilots = vec![0; n];
            for c in order {
                let mut best: Option<usize> = None;
                for s in (0..tau_p).filter(|&s| free[s]) {
                    if best.map_or(true, |b| cost[c][s] < cost[c][b]) {
                        best = Some(s);
                    }
                }
                let s = best.expect("a free pilot remains for every cluster");
                free[s] = false;
                pilots[c] = s;
            }
            pilots
        };
        let mut slots = vec![None; tau_p];
        for (c, &p) in pilots.iter().enumerate() {
            slots[p] = Some(c);
        }
        on_pilot.push(slots);
        pilot_of.push(pilots);
    }
    let partition = PilotPartition { tau_p, pilot_of };
    partition.validate()?;
    Ok(partition)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn always(_: usize, _: usize) -> bool {
        true
    }

    #[test]
    fn colocated_cluster_weighs_two() {
        let beta = |_: usize, _: usize, _: usize| 3.0f64;
        let w = cluster_pair_weight(&beta, 0, &[0, 1], 1, &[2]).unwrap();
        assert!((w - 2.0).abs() < 1e-15);
        assert!(cluster_pair_weight(&beta, 0, &[], 1, &[2]).is_err());
        let dead = |_: usize, _: usize, _: usize| 0.0f64;
        assert!(matches!(cluster_pair_weight(&dead, 0, &[0], 1, &[0]), Err(Error::Domain(_))));
    }

    #[test]
    fn mirrored_clusters_give_equal_terms() {
        // serving gain 4, cross gain 1 in both directions
        let beta = |bs: usize, cell: usize, _: usize| if bs == cell { 4.0f64 } else { 1.0 };
        let w = cluster_pair_weight(&beta, 0, &[0], 1, &[0]).unwrap();
        assert!((w - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_cell_is_any_bijection() {
        let weights = InterferenceWeights::<f64>::empty(1);
        let p = assign_pilots(&weights, &[4], 4, always, 9).unwrap();
        p.validate().unwrap();
        let mut sorted = p.pilot_of[0].clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn conflicting_cluster_avoids_the_heavy_subgroup() {
        let mut weights = InterferenceWeights::<f64>::empty(2);
        weights.set(0, 1, DMatrix::from_row_slice(2, 2, &[10.0, 0.1, 0.2, 0.3])).unwrap();
        for seed in 0..8 {
            let p = assign_pilots(&weights, &[2, 2], 2, always, seed).unwrap();
            assert_ne!(p.pilot_of[1][0], p.pilot_of[0][0]);
            let best = [vec![0, 1], vec![1, 0]]
                .into_iter()
                .map(|m| {
                    let q = PilotPartition { tau_p: 2, pilot_of: vec![p.pilot_of[0].clone(), m] };
                    partition_weight(&weights, &q)
                })
                .fold(f64::INFINITY, f64::min);
            assert_eq!(partition_weight(&weights, &p), best);
        }
    }

    #[test]
    fn too_many_clusters_is_a_config_error() {
        let weights = InterferenceWeights::<f64>::empty(2);
        assert!(matches!(
            assign_pilots(&weights, &[3, 3], 2, always, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn extra_pilots_stay_distinct() {
        let mut weights = InterferenceWeights::<f64>::empty(3);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            weights.set(i, j, DMatrix::from_fn(2, 2, |a, b| (1 + a + 2 * b) as f64)).unwrap();
        }
        let p = assign_pilots(&weights, &[2, 2, 2], 5, always, 3).unwrap();
        p.validate().unwrap();
    }

    #[test]
    fn missing_neighbour_weights_are_structural() {
        let weights = InterferenceWeights::<f64>::empty(2);
        assert!(matches!(
            assign_pilots(&weights, &[2, 2], 2, always, 0),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn weights_are_stored_both_ways() {
        let mut w = InterferenceWeights::<f64>::empty(2);
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        w.set(0, 1, m.clone()).unwrap();
        assert_eq!(w.get(1, 0).unwrap(), &m.transpose());
        assert!(w.set(0, 0, m.clone()).is_err());
        assert!(w.set(0, 1, m * -1.0).is_err());
    }

    #[test]
    fn partition_weight_counts_same_pilot_pairs() {
        let mut w = InterferenceWeights::<f64>::empty(2);
        w.set(0, 1, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let id = PilotPartition::identity(&[2, 2], 2).unwrap();
        assert_eq!(partition_weight(&w, &id), 5.0);
        let swapped = PilotPartition { tau_p: 2, pilot_of: vec![vec![0, 1], vec![1, 0]] };
        assert_eq!(partition_weight(&w, &swapped), 5.0);
        assert_eq!(swapped.subgroup(0), vec![(0, 0), (1, 1)]);
    }
}
