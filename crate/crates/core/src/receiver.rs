//! Multicell MMSE combining, SINR and spectral efficiency.
//!
//! The SINR treats every estimated channel (own cell and all other cells)
//! as interference, and the estimation-error covariances of the active
//! devices plus the normalized noise as the floor `Z`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::scalar::Real;

/// Combining vectors of one BS, one column per active device of its cell.
#[derive(Debug, Clone)]
pub struct CombinerSet<T: Real> {
    pub w: CMatrix<T>,
}

/// SINR and the spectral efficiency it supports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub gamma: f64,
    pub se: f64,
    pub tau_up: usize,
    pub prelog: f64,
}

/// `Z = sum(error covariances) + (sigma^2 / rho) I`.
pub fn interference_floor<'a, T: Real>(
    error_covs: impl IntoIterator<Item = &'a CMatrix<T>>,
    antennas: usize,
    noise_over_power: T,
) -> Result<CMatrix<T>> {
    let mut z = CMatrix::zeros(antennas, antennas);
    for e in error_covs {
        if e.nrows() != antennas || e.ncols() != antennas {
            return Err(Error::Structural(format!(
                "error covariance is {}x{}, expected {antennas}x{antennas}",
                e.nrows(),
                e.ncols()
            )));
        }
        z += e;
    }
    linalg::add_scaled_identity(&mut z, noise_over_power);
    Ok(linalg::hermitian_part(&z))
}

fn stacked<T: Real>(estimates: &[CMatrix<T>]) -> Result<CMatrix<T>> {
    let m = estimates
        .first()
        .map(|h| h.nrows())
        .ok_or_else(|| Error::Structural("no estimates".into()))?;
    let total: usize = estimates.iter().map(|h| h.ncols()).sum();
    let mut all = CMatrix::zeros(m, total);
    let mut col = 0;
    for h in estimates {
        if h.nrows() != m {
            return Err(Error::Structural("estimate dimensions differ".into()));
        }
        all.columns_mut(col, h.ncols()).copy_from(h);
        col += h.ncols();
    }
    Ok(all)
}

/// `sum_j H_j H_j^H + Z`.
pub fn combiner_system<T: Real>(estimates: &[CMatrix<T>], z: &CMatrix<T>) -> Result<CMatrix<T>> {
    let all = stacked(estimates)?;
    if z.nrows() != all.nrows() {
        return Err(Error::Structural("Z does not match the array size".into()));
    }
    Ok(linalg::gram(&all) + z)
}

/// M-MMSE combiners `(sum_j H_j H_j^H + Z)^{-1} H_serving` for one BS.
///
/// `estimates[j]` holds the estimated channels (as columns) of the active
/// devices of cell `j` at this BS.
pub fn mmmse_combiner<T: Real>(
    estimates: &[CMatrix<T>],
    serving: usize,
    z: &CMatrix<T>,
) -> Result<CombinerSet<T>> {
    let a = combiner_system(estimates, z)?;
    let chol = linalg::cholesky(&a)?;
    let h = estimates
        .get(serving)
        .ok_or_else(|| Error::Structural(format!("no serving cell {serving}")))?;
    Ok(CombinerSet { w: chol.solve(h) })
}

/// SINR of device `device` of cell `serving` under combiner `w`.
pub fn sinr<T: Real>(
    w: &CVector<T>,
    estimates: &[CMatrix<T>],
    serving: usize,
    device: usize,
    z: &CMatrix<T>,
) -> Result<T> {
    if w.iter().all(|x| x.norm_sqr() == T::zero()) {
        return Err(Error::Domain("zero combining vector".into()));
    }
    let gain = |h: nalgebra::DVectorView<'_, num_complex::Complex<T>>| w.dotc(&h).norm_sqr();
    let desired = gain(estimates[serving].column(device));
    let mut interference = T::zero();
    for (j, h) in estimates.iter().enumerate() {
        for k in 0..h.ncols() {
            if j == serving && k == device {
                continue;
            }
            interference += gain(h.column(k));
        }
    }
    let floor = w.dotc(&(z * w)).re;
    Ok(desired / (interference + floor))
}

/// SINR of every serving-cell device under M-MMSE combining.
///
/// With `A = sum H H^H + Z` and `q = h^H A^{-1} h`, the optimal combiner
/// gives `gamma = q / (1 - q)`, so no combining vector is formed.
pub fn mmmse_sinrs<T: Real>(
    estimates: &[CMatrix<T>],
    serving: usize,
    z: &CMatrix<T>,
) -> Result<Vec<T>> {
    let a = combiner_system(estimates, z)?;
    let chol = linalg::cholesky(&a)?;
    let h = &estimates[serving];
    let u = chol
        .l_dirty()
        .solve_lower_triangular(h)
        .ok_or_else(|| Error::Numeric("singular combiner system".into()))?;
    let eps = T::epsilon();
    Ok((0..h.ncols())
        .map(|k| {
            let q = u.column(k).norm_squared();
            q / (T::one() - q).max(eps)
        })
        .collect())
}

/// [`mmmse_sinrs`] for channels already stacked and split into real and
/// imaginary parts, the desired devices being the first `desired` columns.
pub fn mmmse_sinrs_split<T: Real>(
    hr: &DMatrix<T>,
    hi: &DMatrix<T>,
    desired: usize,
    z: &CMatrix<T>,
) -> Result<Vec<T>> {
    if z.nrows() != hr.nrows() || desired > hr.ncols() {
        return Err(Error::Structural("stacked channels do not match Z".into()));
    }
    let a = linalg::gram_split(hr, hi) + z;
    let chol = linalg::cholesky(&a)?;
    let h = linalg::join(&hr.columns(0, desired).into_owned(), &hi.columns(0, desired).into_owned());
    let u = chol
        .l_dirty()
        .solve_lower_triangular(&h)
        .ok_or_else(|| Error::Numeric("singular combiner system".into()))?;
    let eps = T::epsilon();
    Ok((0..desired)
        .map(|k| {
            let q = u.column(k).norm_squared();
            q / (T::one() - q).max(eps)
        })
        .collect())
}

/// `SE = (tau_up / tau_c) log2(1 + gamma)` with `tau_up = tau_c - tau_p`.
pub fn spectral_efficiency(gamma: f64, tau_p: usize, tau_c: usize) -> Result<RatePoint> {
    if tau_p >= tau_c {
        return Err(Error::Config(format!(
            "pilot length {tau_p} leaves no data samples in a block of {tau_c}"
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("negative SINR {gamma}")));
    }
    let tau_up = tau_c - tau_p;
    let prelog = tau_up as f64 / tau_c as f64;
    Ok(RatePoint {
        gamma,
        se: prelog * (1.0 + gamma).log2(),
        tau_up,
        prelog,
    })
}

/// Sum SE of the active devices of a cell in one block.
pub fn cell_se(gammas: &[f64], tau_p: usize, tau_c: usize) -> Result<f64> {
    if gammas.is_empty() {
        return Ok(0.0);
    }
    gammas
        .iter()
        .map(|&g| spectral_efficiency(g, tau_p, tau_c).map(|r| r.se))
        .sum()
}
