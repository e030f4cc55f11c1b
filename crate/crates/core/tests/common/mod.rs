//! Reference implementations used by the integration tests.
//!
//! These are written from the defining formulas with dense linear algebra
//! and exhaustive search, sharing no code with the library paths they check.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type CM = DMatrix<Complex64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard circularly symmetric complex Gaussian matrix.
pub fn cgauss(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CM {
    use rand_distr::{Distribution, StandardNormal};
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CM::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    })
}

/// Random Hermitian positive definite matrix with trace about `scale * m`.
pub fn hpd(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> CM {
    let b = cgauss(rng, m, m);
    let mut a = (&b * b.adjoint()).map(|z| z * (scale / m as f64));
    for i in 0..m {
        a[(i, i)] += Complex64::new(0.05 * scale, 0.0);
    }
    a
}

pub fn eye(m: usize) -> CM {
    CM::identity(m, m)
}

pub fn inv(a: &CM) -> CM {
    a.clone().try_inverse().expect("invertible")
}

pub fn rel(a: &CM, b: &CM) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Gaussian local scattering correlation written entry by entry.
pub fn local_scattering(theta: f64, asd_deg: f64, m: usize, beta: f64) -> CM {
    let asd = asd_deg.to_radians();
    CM::from_fn(m, m, |r, c| {
        let d = r as f64 - c as f64;
        let pi = std::f64::consts::PI;
        let phase = Complex64::from_polar(1.0, pi * d * theta.sin());
        let damp = (-0.5 * asd * asd * (pi * d * theta.cos()).powi(2)).exp();
        phase * damp * beta
    })
}

/// `R psi^{-1} y` with `psi = sum R + noise/(tau_p rho) I`.
pub fn mmse_reference(group: &[CM], y: &CM, tau_p: usize, rho: f64, sigma2: f64) -> (Vec<CM>, Vec<CM>) {
    let m = y.nrows();
    let mut psi = eye(m) * Complex64::new(sigma2 / (tau_p as f64 * rho), 0.0);
    for r in group {
        psi += r;
    }
    let pinv = inv(&psi);
    let est = group.iter().map(|r| r * &pinv * y).collect();
    let err = group.iter().map(|r| r - r * &pinv * r).collect();
    (est, err)
}

/// SINR of column `d` of `est[serving]` under combiner `w`, by direct sums.
pub fn sinr_reference(w: &CM, est: &[CM], serving: usize, d: usize, z: &CM) -> f64 {
    let wh = w.adjoint();
    let mut interference = 0.0;
    let mut desired = 0.0;
    for (j, h) in est.iter().enumerate() {
        for k in 0..h.ncols() {
            let g = (&wh * h.column(k))[(0, 0)].norm_sqr();
            if j == serving && k == d {
                desired = g;
            } else {
                interference += g;
            }
        }
    }
    let floor = (&wh * z * w)[(0, 0)].re;
    desired / (interference + floor)
}

/// Optimal combiner `(sum H H^H + Z)^{-1} h`.
pub fn mmse_combiner(est: &[CM], serving: usize, d: usize, z: &CM) -> CM {
    let mut a = z.clone();
    for h in est {
        a += h * h.adjoint();
    }
    inv(&a) * est[serving].columns(d, 1)
}

/// Symmetric similarity matrix with unit diagonal from random bearings.
pub fn random_similarity(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    let rs: Vec<CM> = (0..n)
        .map(|_| local_scattering(rng.gen_range(-1.3..1.3), 10.0, m, 1.0))
        .collect();
    DMatrix::from_fn(n, n, |a, b| {
        if a == b {
            1.0
        } else {
            let ip: Complex64 = rs[a].iter().zip(rs[b].iter()).map(|(x, y)| x * y.conj()).sum();
            (ip.re / (rs[a].norm() * rs[b].norm())).clamp(0.0, 1.0)
        }
    })
}

/// Exhaustive capped k-medoids: every labeling with nonempty clusters of at
/// most `cap`, each cluster scored from its best medoid.
pub fn capped_optimum(s: &DMatrix<f64>, clusters: usize, cap: usize) -> f64 {
    fn rec(
        i: usize,
        s: &DMatrix<f64>,
        groups: &mut Vec<Vec<usize>>,
        clusters: usize,
        cap: usize,
        best: &mut f64,
    ) {
        let n = s.nrows();
        let empty = groups.iter().filter(|g| g.is_empty()).count();
        if n - i < empty {
            return;
        }
        if i == n {
            let td: f64 = groups
                .iter()
                .map(|g| {
                    g.iter()
                        .map(|&m| g.iter().map(|&o| 1.0 - s[(o, m)]).sum::<f64>())
                        .fold(f64::INFINITY, f64::min)
                })
                .sum();
            *best = best.min(td);
            return;
        }
        for c in 0..clusters {
            if groups[c].len() < cap {
                groups[c].push(i);
                rec(i + 1, s, groups, clusters, cap, best);
                groups[c].pop();
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(0, s, &mut vec![Vec::new(); clusters], clusters, cap, &mut best);
    best
}

/// Every permutation of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Weight of a two-cell map where cluster `a` of cell 0 and cluster
/// `perm[a]` of cell 1 share a pilot.
pub fn two_cell_weight(w: &DMatrix<f64>, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(a, &b)| w[(a, b)]).sum()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Random two-cell geometry: library weights, cluster counts, and the same
/// weights recomputed here from the link gains.
pub fn two_cell_geometry(
    seed: u64,
    clusters: usize,
) -> (pilotsim::InterferenceWeights64, Vec<usize>, DMatrix<f64>) {
    use pilotsim::clusterer::{cluster, default_cap, SimilarityMatrix};
    use pilotsim::netgen::{build_correlation_set, build_layout, NetworkConfig};
    let net = NetworkConfig {
        cells: 2,
        devices: 8,
        clusters,
        antennas: 8,
        ..NetworkConfig::default()
    };
    let placement = build_layout(&net, seed).unwrap();
    let corr: pilotsim::CorrelationSet64 = build_correlation_set(&net, &placement, seed ^ 0xabc).unwrap();
    let cl: Vec<_> = (0..2)
        .map(|j| {
            let serving: Vec<_> = (0..8).map(|k| corr.toeplitz(j, j, k)).collect();
            let s = SimilarityMatrix::from_correlations(&serving).unwrap();
            cluster(&s, clusters, default_cap(8, clusters), true, seed + j as u64).unwrap()
        })
        .collect();
    let w = pilotsim::InterferenceWeights64::build(&corr, &cl, |a, b| a != b).unwrap();
    let mean = |bs: usize, cell: usize, members: &[usize]| {
        members.iter().map(|&k| corr.beta(bs, cell, k)).sum::<f64>() / members.len() as f64
    };
    let dense = DMatrix::from_fn(clusters, clusters, |a, b| {
        let (ma, mb) = (cl[0].members(a), cl[1].members(b));
        mean(0, 1, &mb) / mean(0, 0, &ma) + mean(1, 0, &ma) / mean(1, 1, &mb)
    });
    (w, cl.iter().map(|c| c.clusters()).collect(), dense)
}

/// Same-pilot weight of a two-cell partition, summed over pilots.
pub fn two_cell_partition_weight(dense: &DMatrix<f64>, pilot_of: &[Vec<usize>]) -> f64 {
    let mut total = 0.0;
    for (a, &p) in pilot_of[0].iter().enumerate() {
        for (b, &q) in pilot_of[1].iter().enumerate() {
            if p == q {
                total += dense[(a, b)];
            }
        }
    }
    total
}
