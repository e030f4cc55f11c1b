//! Uplink pilot training and MMSE channel estimation.
//!
//! Devices sharing a pilot are indistinguishable after despreading: the BS
//! observes the sum of their channels plus noise, and the MMSE estimate of
//! each of them is `R_j psi^{-1} y` with `psi = sum_j R_j + sigma^2/(tau_p rho) I`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    self, c, complex_gaussian, hermitian_sqrt, split, CMatrix, CVector,
    HermitianToeplitz,
};
use crate::netgen::CorrelationSet;
use crate::scalar::Real;
use nalgebra::DMatrix;

/// Mutually orthogonal unit-modulus pilot sequences (rows of the DFT matrix).
#[derive(Debug, Clone)]
pub struct PilotBook<T: Real> {
    tau_p: usize,
    sequences: Vec<CVector<T>>,
}

impl<T: Real> PilotBook<T> {
    pub fn tau_p(&self) -> usize {
        self.tau_p
    }

    pub fn sequence(&self, pilot: usize) -> &CVector<T> {
        &self.sequences[pilot]
    }

    /// `phi_a phi_b^H` for every pair.
    pub fn gram(&self) -> CMatrix<T> {
        CMatrix::from_fn(self.tau_p, self.tau_p, |a, b| {
            self.sequences[a].dotc(&self.sequences[b])
        })
        .transpose()
    }
}

pub fn make_pilot_book<T: Real>(tau_p: usize) -> Result<PilotBook<T>> {
    if tau_p == 0 {
        return Err(Error::Config("pilot length must be at least 1".into()));
    }
    let sequences = (0..tau_p)
        .map(|a| {
            CVector::from_fn(tau_p, |n, _| {
                // (a * n) mod tau_p keeps the phase argument small and exact.
                let angle =
                    -2.0 * std::f64::consts::PI * ((a * n) % tau_p) as f64 / tau_p as f64;
                c(T::lit(angle.cos()), T::lit(angle.sin()))
            })
        })
        .collect();
    Ok(PilotBook { tau_p, sequences })
}

/// Pilot index of every device, `None` for devices silent in this block.
pub type PilotMap = Vec<Vec<Option<usize>>>;

/// One coherence block of small-scale fading, `h[(bs, cell, device)]`.
#[derive(Debug, Clone)]
pub struct ChannelRealization<T: Real> {
    cells: usize,
    devices: usize,
    h: Vec<CVector<T>>,
}

impl<T: Real> ChannelRealization<T> {
    pub fn h(&self, bs: usize, cell: usize, device: usize) -> &CVector<T> {
        &self.h[(bs * self.cells + cell) * self.devices + device]
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn devices(&self) -> usize {
        self.devices
    }
}

/// Hermitian square roots of every link correlation, reusable across blocks.
#[derive(Debug, Clone)]
pub struct CorrelationRoots<T: Real> {
    cells: usize,
    devices: usize,
    roots: Vec<CMatrix<T>>,
}

impl<T: Real> CorrelationRoots<T> {
    pub fn new(corr: &CorrelationSet<T>) -> Self {
        let (l, k) = (corr.cells(), corr.devices());
        let mut roots = Vec::with_capacity(l * l * k);
        for i in 0..l {
            for j in 0..l {
                for d in 0..k {
                    roots.push(hermitian_sqrt(&corr.r(i, j, d)));
                }
            }
        }
        Self {
            cells: l,
            devices: k,
            roots,
        }
    }

    /// `h = R^{1/2} g` for every link with fresh `g ~ CN(0, I)`.
    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization<T> {
        let h = self
            .roots
            .iter()
            .map(|root| root * complex_gaussian::<T, _>(rng, root.nrows()))
            .collect();
        ChannelRealization {
            cells: self.cells,
            devices: self.devices,
            h,
        }
    }
}

/// Draws one independent channel realization for every link.
pub fn realize_channels<T: Real>(corr: &CorrelationSet<T>, seed: u64) -> ChannelRealization<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CorrelationRoots::new(corr).realize(&mut rng)
}

/// Pilot observation `Y'_i` (`M x tau_p`) at every BS.
pub fn receive_pilots<T: Real, R: Rng + ?Sized>(
    ch: &ChannelRealization<T>,
    book: &PilotBook<T>,
    pilot_of: &PilotMap,
    rho: T,
    sigma2: T,
    rng: &mut R,
) -> Result<Vec<CMatrix<T>>> {
    let (cells, devices) = (ch.cells(), ch.devices());
    if pilot_of.len() != cells || pilot_of.iter().any(|row| row.len() != devices) {
        return Err(Error::Structural(format!(
            "pilot map must be {cells} x {devices}"
        )));
    }
    if let Some(p) = pilot_of
        .iter()
        .flatten()
        .flatten()
        .find(|&&p| p >= book.tau_p())
    {
        return Err(Error::Structural(format!(
            "pilot index {p} outside a book of {}",
            book.tau_p()
        )));
    }
    let m = ch.h(0, 0, 0).len();
    let tau = book.tau_p();
    let amp = rho.sqrt();
    let noise_std = sigma2.sqrt();
    let mut out = Vec::with_capacity(cells);
    for bs in 0..cells {
        let noise = complex_gaussian::<T, _>(rng, m * tau);
        let mut y = CMatrix::from_iterator(m, tau, noise.iter().map(|z| z.scale(noise_std)));
        for (cell, row) in pilot_of.iter().enumerate() {
            for (dev, pilot) in row.iter().enumerate() {
                if let Some(p) = *pilot {
                    let phi = book.sequence(p);
                    let h = ch.h(bs, cell, dev);
                    for col in 0..tau {
                        let s = phi[col].scale(amp);
                        for r in 0..m {
                            y[(r, col)] += h[r] * s;
                        }
                    }
                }
            }
        }
        out.push(y);
    }
    Ok(out)
}

/// `y = Y' phi^H / (tau_p sqrt(rho))`.
pub fn despread<T: Real>(yp: &CMatrix<T>, phi: &CVector<T>, tau_p: usize, rho: T) -> CVector<T> {
    let scale = T::one() / (T::lit(tau_p as f64) * rho.sqrt());
    let mut out = CVector::from_element(yp.nrows(), linalg::czero());
    for col in 0..yp.ncols() {
        let w = phi[col].conj();
        for r in 0..yp.nrows() {
            out[r] += yp[(r, col)] * w;
        }
    }
    out.scale(scale)
}

/// Despread observation and MMSE estimates for one pilot at one BS.
#[derive(Debug, Clone)]
pub struct ChannelEstimate<T: Real> {
    pub y: CVector<T>,
    pub psi: CMatrix<T>,
    /// `R_j psi^{-1} y` for each member of the pilot group, in input order.
    pub h_hat: Vec<CVector<T>>,
    /// `R_j - R_j psi^{-1} R_j`.
    pub err_cov: Vec<CMatrix<T>>,
}

/// `psi = sum_j R_j + sigma^2 / (tau_p rho) I`.
pub fn psi_matrix<T: Real>(group: &[CMatrix<T>], tau_p: usize, rho: T, sigma2: T) -> Result<CMatrix<T>> {
    let m = group
        .first()
        .map(|r| r.nrows())
        .ok_or_else(|| Error::Structural("empty pilot group".into()))?;
    let mut psi = CMatrix::zeros(m, m);
    for r in group {
        if r.nrows() != m || r.ncols() != m {
            return Err(Error::Structural("correlation sizes differ in group".into()));
        }
        psi += r;
    }
    linalg::add_scaled_identity(&mut psi, sigma2 / (T::lit(tau_p as f64) * rho));
    Ok(psi)
}

/// MMSE estimates of every channel in a pilot group from the shared
/// despread observation `y`.
pub fn mmse_estimate<T: Real>(
    group: &[CMatrix<T>],
    y: &CVector<T>,
    tau_p: usize,
    rho: T,
    sigma2: T,
) -> Result<ChannelEstimate<T>> {
    let psi = psi_matrix(group, tau_p, rho, sigma2)?;
    let chol = linalg::cholesky(&psi)
        .map_err(|e| Error::Numeric(format!("psi not invertible: {e}")))?;
    let x = chol.solve(y);
    let h_hat = group.iter().map(|r| r * &x).collect();
    let err_cov = group
        .iter()
        .map(|r| {
            let s = chol.solve(r);
            linalg::hermitian_part(&(r - r * s))
        })
        .collect();
    Ok(ChannelEstimate {
        y: y.clone(),
        psi,
        h_hat,
        err_cov,
    })
}

/// Normalized MSE `1 - tr(R psi^{-1} R) / tr(R)`.
pub fn nmse<T: Real>(r: &CMatrix<T>, psi: &CMatrix<T>) -> Result<T> {
    let tr = linalg::trace(r).re;
    if !(tr > T::zero()) {
        return Err(Error::Domain("NMSE of a zero-trace correlation".into()));
    }
    let chol = linalg::cholesky(psi)?;
    let s = chol.solve(r);
    let captured = linalg::trace(&(r * s)).re;
    Ok((T::one() - captured / tr).max(T::zero()).min(T::one()))
}

/// Precomputed statistics of one pilot group at one BS.
///
/// Despread observations of the group are `CN(0, psi)`; `factor` is the
/// Cholesky factor of `psi`, so `factor * g` with `g ~ CN(0, I)` is a draw
/// of the observation without simulating the individual channels.
#[derive(Debug, Clone)]
pub struct PilotGroupStats<T: Real> {
    pub psi_inv: CMatrix<T>,
    pub factor: CMatrix<T>,
    /// `sum_j (R_j - R_j psi^{-1} R_j)` over the group.
    pub error_cov_sum: CMatrix<T>,
    /// NMSE of each member, in input order.
    pub nmse: Vec<T>,
}

impl<T: Real> PilotGroupStats<T> {
    /// `psi^{-1} y`, shared by every estimate in the group.
    pub fn whiten(&self, y: &CVector<T>) -> CVector<T> {
        &self.psi_inv * y
    }

    pub fn draw_observation<R: Rng + ?Sized>(&self, rng: &mut R) -> CVector<T> {
        &self.factor * complex_gaussian::<T, _>(rng, self.factor.nrows())
    }
}

/// Statistics of the pilot group formed by `members` at one BS.
pub fn pilot_group_stats<T: Real>(
    members: &[&HermitianToeplitz<T>],
    tau_p: usize,
    noise_over_power: T,
) -> Result<PilotGroupStats<T>> {
    let first = members
        .first()
        .ok_or_else(|| Error::Structural("empty pilot group".into()))?;
    let m = first.dim();
    let n = members.len();
    let mut sum = HermitianToeplitz::zeros(m);
    for r in members {
        sum.add_assign(r);
    }
    let mut psi = sum.to_matrix();
    linalg::add_scaled_identity(&mut psi, noise_over_power / T::lit(tau_p as f64));
    let chol = linalg::cholesky(&psi)?;
    let factor = chol.l();
    let psi_inv = linalg::hermitian_part(&chol.inverse());

    // V = psi^{-1} [R_1 .. R_n], then sum_j R_j V_j as one wide product.
    let mut gr = DMatrix::zeros(m, n * m);
    let mut gi = DMatrix::zeros(m, n * m);
    for (j, r) in members.iter().enumerate() {
        r.write_split(&mut gr, &mut gi, j * m);
    }
    let (pr, pi) = split(&psi_inv);
    let (vr, vi) = linalg::matmul_split((&pr, &pi), (&gr, &gi));
    let mut sr = DMatrix::zeros(n * m, m);
    let mut si = DMatrix::zeros(n * m, m);
    for j in 0..n {
        sr.view_mut((j * m, 0), (m, m)).copy_from(&vr.view((0, j * m), (m, m)));
        si.view_mut((j * m, 0), (m, m)).copy_from(&vi.view((0, j * m), (m, m)));
    }
    let (cr, ci) = linalg::matmul_split((&gr, &gi), (&sr, &si));
    let captured = linalg::join(&cr, &ci);

    let nmse = members
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let mut tr = T::zero();
            for a in 0..m {
                for b in 0..m {
                    let z = r.entry(a, b);
                    tr += z.re * vr[(b, j * m + a)] - z.im * vi[(b, j * m + a)];
                }
            }
            let total = r.trace();
            if total > T::zero() {
                (T::one() - tr / total).max(T::zero()).min(T::one())
            } else {
                T::one()
            }
        })
        .collect();

    let mut error_cov_sum = sum.to_matrix() - captured;
    error_cov_sum = linalg::hermitian_part(&error_cov_sum);
    Ok(PilotGroupStats {
        psi_inv,
        factor,
        error_cov_sum,
        nmse,
    })
}
