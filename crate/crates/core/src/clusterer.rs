//! Correlation-based device clustering with a cardinality cap.
//!
//! Similarity between two devices is the normalized Frobenius inner product
//! of their correlation matrices at the serving BS; the clustering distance
//! is `1 - S`. Medoids are improved by FasterPAM's eager swap loop on the
//! uncapped nearest/second-nearest caches. The cap applies when devices are
//! handed to clusters: a device goes to its nearest medoid whose cluster still
//! has room.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, HermitianToeplitz};
use crate::scalar::Real;

/// Residual imaginary part tolerated in a similarity before it is dropped.
const IMAG_TOLERANCE: f64 = 1e-12;

/// Swap candidates evaluated per device before the loop is cut off.
const EVALUATIONS_PER_DEVICE: usize = 100;

/// `Re tr(Ra Rb^H) / (|Ra|_F |Rb|_F)`.
pub fn similarity<T: Real>(ra: &CMatrix<T>, rb: &CMatrix<T>) -> Result<T> {
    let na = linalg::frobenius_norm(ra);
    let nb = linalg::frobenius_norm(rb);
    if !(na > T::zero() && nb > T::zero()) {
        return Err(Error::Domain("similarity of a zero matrix".into()));
    }
    let ip = linalg::frobenius_inner(ra, rb);
    let s = ip.re / (na * nb);
    if ip.im.abs() > T::lit(IMAG_TOLERANCE).max(T::lit(1e-9) * na * nb) {
        return Err(Error::Domain("correlation matrices are not Hermitian".into()));
    }
    Ok(s)
}

/// Symmetric device similarity matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T: Real> {
    s: DMatrix<T>,
}

impl<T: Real> SimilarityMatrix<T> {
    /// Wraps `s` after checking symmetry, unit diagonal and `0 < s <= 1`
    /// (entries within `1e-12` of the bounds are accepted and clamped).
    pub fn new(mut s: DMatrix<T>) -> Result<Self> {
        let n = s.nrows();
        if s.ncols() != n {
            return Err(Error::Structural("similarity matrix must be square".into()));
        }
        let tol = T::lit(1e-12);
        for i in 0..n {
            if (s[(i, i)] - T::one()).abs() > tol {
                return Err(Error::Domain(format!("similarity diagonal {i} is not 1")));
            }
            s[(i, i)] = T::one();
            for j in 0..i {
                if (s[(i, j)] - s[(j, i)]).abs() > tol {
                    return Err(Error::Domain(format!("similarity not symmetric at ({i}, {j})")));
                }
                let v = s[(i, j)];
                if !(v >= -tol && v <= T::one() + tol) {
                    return Err(Error::Domain(format!("similarity {v} outside (0, 1]")));
                }
                let v = v.max(T::zero()).min(T::one());
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Ok(Self { s })
    }

    /// Pairwise similarity of the given correlation matrices.
    pub fn from_correlations(corr: &[&HermitianToeplitz<T>]) -> Result<Self> {
        let norms: Vec<T> = corr.iter().map(|r| r.frobenius_norm()).collect();
        if norms.iter().any(|n| !(*n > T::zero())) {
            return Err(Error::Domain("similarity of a zero matrix".into()));
        }
        let n = corr.len();
        let mut s = DMatrix::from_element(n, n, T::one());
        for i in 0..n {
            for j in 0..i {
                let v = (corr[i].inner(corr[j]) / (norms[i] * norms[j]))
                    .max(T::zero())
                    .min(T::one());
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Self::new(s)
    }

    pub fn len(&self) -> usize {
        self.s.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, a: usize, b: usize) -> T {
        self.s[(a, b)]
    }

    #[inline]
    pub fn distance(&self, a: usize, b: usize) -> T {
        T::one() - self.s[(a, b)]
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.s
    }
}

/// Partition of one cell's devices.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Medoid device of each cluster.
    pub medoids: Vec<usize>,
    /// Cluster of each device.
    pub assign: Vec<usize>,
    pub cap: Option<usize>,
    /// Total distance of devices to their assigned medoid.
    pub td: f64,
    /// Uncapped total distance after random initialization.
    pub initial_swap_td: f64,
    /// Uncapped total distance after the swap loop.
    pub swap_td: f64,
    pub swaps: usize,
    pub evaluations: usize,
}

impl Clustering {
    pub fn clusters(&self) -> usize {
        self.medoids.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assign.len())
            .filter(|&k| self.assign[k] == cluster)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.clusters()];
        for &c in &self.assign {
            sizes[c] += 1;
        }
        sizes
    }

    /// One device per cluster, every device its own pilot group.
    pub fn singletons(devices: usize) -> Self {
        Self {
            medoids: (0..devices).collect(),
            assign: (0..devices).collect(),
            cap: Some(1),
            td: 0.0,
            initial_swap_td: 0.0,
            swap_td: 0.0,
            swaps: 0,
            evaluations: 0,
        }
    }
}

/// Tightest cap that keeps `devices` assignable to `clusters` clusters.
pub fn default_cap(devices: usize, clusters: usize) -> usize {
    devices.div_ceil(clusters.max(1))
}

#[derive(Debug, Clone, Copy)]
struct Slot<T> {
    cluster: usize,
    d: T,
}

#[derive(Debug, Clone, Copy)]
struct Cache<T> {
    near: Slot<T>,
    second: Slot<T>,
}

struct SwapState<'a, T: Real> {
    s: &'a SimilarityMatrix<T>,
    medoids: Vec<usize>,
    cache: Vec<Cache<T>>,
    removal_loss: Vec<T>,
}

impl<'a, T: Real> SwapState<'a, T> {
    fn new(s: &'a SimilarityMatrix<T>, medoids: Vec<usize>) -> Self {
        let mut state = Self {
            s,
            cache: Vec::with_capacity(s.len()),
            removal_loss: vec![T::zero(); medoids.len()],
            medoids,
        };
        for o in 0..s.len() {
            let near = state.nearest_excluding(o, None);
            let second = state.nearest_excluding(o, Some(near.cluster));
            state.cache.push(Cache { near, second });
        }
        state.update_removal_loss();
        state
    }

    /// Nearest medoid of `o`, skipping cluster `skip`; lowest index on ties.
    fn nearest_excluding(&self, o: usize, skip: Option<usize>) -> Slot<T> {
        let mut best: Option<Slot<T>> = None;
        for (c, &m) in self.medoids.iter().enumerate() {
            if Some(c) == skip {
                continue;
            }
            let d = if m == o { T::zero() } else { self.s.distance(o, m) };
            if best.map_or(true, |b| d < b.d) {
                best = Some(Slot { cluster: c, d });
            }
        }
        best.expect("at least two medoids")
    }

    fn total(&self) -> T {
        self.cache.iter().fold(T::zero(), |acc, c| acc + c.near.d)
    }

    fn update_removal_loss(&mut self) {
        self.removal_loss.fill(T::zero());
        for c in &self.cache {
            self.removal_loss[c.near.cluster] += c.second.d - c.near.d;
        }
    }

    fn is_medoid(&self, o: usize) -> bool {
        self.medoids.contains(&o)
    }

    /// Best medoid to replace by `j` and the resulting change of the total.
    fn best_swap(&self, j: usize) -> (T, usize) {
        let mut loss = self.removal_loss.clone();
        let mut shared = T::zero();
        for (o, c) in self.cache.iter().enumerate() {
            let d = if o == j { T::zero() } else { self.s.distance(j, o) };
            if d < c.near.d {
                shared += d - c.near.d;
                loss[c.near.cluster] += c.near.d - c.second.d;
            } else if d < c.second.d {
                loss[c.near.cluster] += d - c.second.d;
            }
        }
        let mut best = 0;
        for (c, &l) in loss.iter().enumerate() {
            if l < loss[best] {
                best = c;
            }
        }
        (loss[best] + shared, best)
    }

    fn swap(&mut self, b: usize, j: usize) {
        self.medoids[b] = j;
        for o in 0..self.cache.len() {
            let mut c = self.cache[o];
            if o == j {
                if c.near.cluster != b {
                    c.second = c.near;
                }
                c.near = Slot { cluster: b, d: T::zero() };
                self.cache[o] = c;
                continue;
            }
            let d = self.s.distance(j, o);
            if c.near.cluster == b {
                if d < c.second.d {
                    c.near = Slot { cluster: b, d };
                } else {
                    c.near = c.second;
                    self.cache[o] = c;
                    c.second = self.nearest_excluding(o, Some(c.near.cluster));
                }
            } else if d < c.near.d {
                c.second = c.near;
                c.near = Slot { cluster: b, d };
            } else if c.second.cluster == b {
                c.second = self.nearest_excluding(o, Some(c.near.cluster));
            } else if d < c.second.d {
                c.second = Slot { cluster: b, d };
            }
            self.cache[o] = c;
        }
        self.update_removal_loss();
    }
}

/// Hands devices to clusters: medoids first, then the other devices to the
/// nearest medoid whose cluster is below `cap`. Devices that lose most by
/// missing their nearest medoid choose first.
pub fn assign_to_medoids<T: Real>(
    s: &SimilarityMatrix<T>,
    medoids: &[usize],
    cap: Option<usize>,
) -> Result<Vec<usize>> {
    let n = s.len();
    let limit = cap.unwrap_or(usize::MAX);
    let mut assign = vec![usize::MAX; n];
    let mut sizes = vec![0usize; medoids.len()];
    for (c, &m) in medoids.iter().enumerate() {
        assign[m] = c;
        sizes[c] += 1;
    }
    let by_distance = |o: usize| {
        let mut order: Vec<usize> = (0..medoids.len()).collect();
        order.sort_by(|&a, &b| {
            s.distance(o, medoids[a])
                .partial_cmp(&s.distance(o, medoids[b]))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order
    };
    let mut pending: Vec<(f64, usize, Vec<usize>)> = (0..n)
        .filter(|&o| assign[o] == usize::MAX)
        .map(|o| {
            let order = by_distance(o);
            let regret = match order.get(1) {
                Some(&c2) => (s.distance(o, medoids[c2]) - s.distance(o, medoids[order[0]])).to_f64_lossy(),
                None => 0.0,
            };
            (regret, o, order)
        })
        .collect();
    if cap.is_some() {
        pending.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    }
    for (_, o, order) in pending {
        let c = order
            .iter()
            .copied()
            .find(|&c| sizes[c] < limit)
            .ok_or_else(|| Error::Infeasible(format!("no cluster has room for device {o}")))?;
        assign[o] = c;
        sizes[c] += 1;
    }
    Ok(assign)
}

fn assignment_cost<T: Real>(s: &SimilarityMatrix<T>, medoids: &[usize], assign: &[usize]) -> f64 {
    assign
        .iter()
        .enumerate()
        .map(|(o, &c)| {
            if medoids[c] == o {
                0.0
            } else {
                s.distance(o, medoids[c]).to_f64_lossy()
            }
        })
        .sum()
}

/// Clusters the devices of one cell into `clusters` groups.
///
/// With `capped`, no cluster exceeds `cap` devices.
pub fn cluster<T: Real>(
    s: &SimilarityMatrix<T>,
    clusters: usize,
    cap: usize,
    capped: bool,
    seed: u64,
) -> Result<Clustering> {
    let n = s.len();
    if clusters == 0 || clusters > n {
        return Err(Error::Config(format!(
            "cannot form {clusters} clusters from {n} devices"
        )));
    }
    if capped && cap.saturating_mul(clusters) < n {
        return Err(Error::Infeasible(format!(
            "{clusters} clusters of at most {cap} devices cannot hold {n} devices"
        )));
    }
    let cap = capped.then_some(cap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids = rand::seq::index::sample(&mut rng, n, clusters).into_vec();

    let nearest_td = |meds: &[usize]| -> f64 {
        (0..n)
            .map(|o| {
                meds.iter()
                    .map(|&m| if m == o { 0.0 } else { s.distance(o, m).to_f64_lossy() })
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    };
    let initial_swap_td = nearest_td(&medoids);
    let mut swaps = 0;
    let mut evaluations = 0;

    if clusters == 1 {
        // the single-medoid optimum is found directly
        let best = (0..n)
            .min_by(|&a, &b| {
                let ta: f64 = (0..n).map(|o| s.distance(o, a).to_f64_lossy()).sum();
                let tb: f64 = (0..n).map(|o| s.distance(o, b).to_f64_lossy()).sum();
                ta.partial_cmp(&tb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
            })
            .expect("non-empty");
        if best != medoids[0] {
            medoids[0] = best;
            swaps = 1;
        }
        evaluations = n;
    } else if clusters < n {
        let mut state = SwapState::new(s, medoids);
        let budget = EVALUATIONS_PER_DEVICE * n;
        let mut last: Option<usize> = None;
        'passes: loop {
            for j in 0..n {
                if last == Some(j) {
                    break 'passes;
                }
                if state.is_medoid(j) {
                    continue;
                }
                if evaluations >= budget {
                    break 'passes;
                }
                evaluations += 1;
                let (delta, b) = state.best_swap(j);
                if delta < T::zero() {
                    let before = state.total();
                    state.swap(b, j);
                    debug_assert!(state.total() <= before + T::lit(1e-9));
                    swaps += 1;
                    last = Some(j);
                }
            }
            if last.is_none() {
                break;
            }
        }
        medoids = state.medoids;
    }

    let swap_td = nearest_td(&medoids);
    let assign = assign_to_medoids(s, &medoids, cap)?;
    let td = assignment_cost(s, &medoids, &assign);
    Ok(Clustering {
        medoids,
        assign,
        cap,
        td,
        initial_swap_td,
        swap_td,
        swaps,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::spatial_correlation;

    fn blocks() -> SimilarityMatrix<f64> {
        // devices 0..3 and 3..6 form two tight groups
        SimilarityMatrix::new(DMatrix::from_fn(6, 6, |i, j| {
            if i == j {
                1.0
            } else if (i < 3) == (j < 3) {
                0.9
            } else {
                0.1
            }
        }))
        .unwrap()
    }

    #[test]
    fn self_and_scaled_similarity_are_one() {
        let r = spatial_correlation::<f64>(0.3, 10.0, 8, 2.0).to_matrix();
        assert!((similarity(&r, &r).unwrap() - 1.0).abs() < 1e-12);
        let scaled = &r * crate::linalg::c(7.5, 0.0);
        assert!((similarity(&r, &scaled).unwrap() - 1.0).abs() < 1e-12);
        let zero = CMatrix::<f64>::zeros(8, 8);
        assert!(matches!(similarity(&r, &zero), Err(Error::Domain(_))));
    }

    #[test]
    fn orthogonal_bearings_decorrelate() {
        let a = spatial_correlation::<f64>(0.0, 0.0, 16, 1.0).to_matrix();
        let b = spatial_correlation::<f64>(std::f64::consts::FRAC_PI_2, 0.0, 16, 1.0).to_matrix();
        assert!(similarity(&a, &b).unwrap() < 0.2);
    }

    #[test]
    fn toeplitz_similarity_matches_dense() {
        let rs: Vec<_> = [0.1, 0.5, 1.4]
            .iter()
            .map(|&t| spatial_correlation::<f64>(t, 10.0, 12, 1.0 + t))
            .collect();
        let refs: Vec<_> = rs.iter().collect();
        let s = SimilarityMatrix::from_correlations(&refs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = similarity(&rs[i].to_matrix(), &rs[j].to_matrix()).unwrap();
                assert!((s.get(i, j) - d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_malformed_similarity() {
        let mut m = DMatrix::from_element(2, 2, 0.5);
        assert!(SimilarityMatrix::new(m.clone()).is_err());
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        m[(0, 1)] = 0.4;
        assert!(SimilarityMatrix::new(m.clone()).is_err());
        m[(0, 1)] = 0.5;
        assert!(SimilarityMatrix::new(m).is_ok());
    }

    #[test]
    fn every_device_a_medoid() {
        let s = blocks();
        let c = cluster(&s, 6, 1, true, 3).unwrap();
        assert_eq!(c.td, 0.0);
        let mut m = c.medoids.clone();
        m.sort();
        assert_eq!(m, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn recovers_two_blocks() {
        let s = blocks();
        for seed in 0..10 {
            let c = cluster(&s, 2, 3, true, seed).unwrap();
            assert_eq!(c.assign[0], c.assign[1]);
            assert_eq!(c.assign[1], c.assign[2]);
            assert_eq!(c.assign[3], c.assign[4]);
            assert_eq!(c.assign[4], c.assign[5]);
            assert_ne!(c.assign[0], c.assign[3]);
            assert!((c.td - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn infeasible_cap_is_reported() {
        let s = blocks();
        assert!(matches!(cluster(&s, 2, 2, true, 0), Err(Error::Infeasible(_))));
        assert!(cluster(&s, 2, 2, false, 0).is_ok());
        assert!(matches!(cluster(&s, 7, 1, true, 0), Err(Error::Config(_))));
    }

    #[test]
    fn cap_overrides_nearest_medoid() {
        // device 0 is the first medoid's nearest for everyone
        let s = SimilarityMatrix::new(DMatrix::from_fn(4, 4, |i, j| {
            if i == j { 1.0 } else if i == 0 || j == 0 { 0.9 } else { 0.2 }
        }))
        .unwrap();
        let assign = assign_to_medoids(&s, &[0, 3], Some(2)).unwrap();
        assert_eq!(assign, vec![0, 0, 1, 1]);
        let free = assign_to_medoids(&s, &[0, 3], None).unwrap();
        assert_eq!(free, vec![0, 0, 0, 1]);
    }

    #[test]
    fn single_cluster_picks_best_medoid() {
        let s = blocks();
        let c = cluster(&s, 1, 6, true, 1).unwrap();
        assert!(c.assign.iter().all(|&a| a == 0));
        assert!((c.td - (0.2 + 0.9 * 3.0)).abs() < 1e-12);
    }
}
