//! Network layout and large-scale channel statistics.
//!
//! Cells are squares on a `rows x cols` grid (4 x 4 for the 16-cell default)
//! folded onto a torus, so every cell sees the same interference geometry.
//! Each base station carries a half-wavelength uniform linear array; the
//! spatial correlation of every device-BS link follows the Gaussian local
//! scattering model around the bearing of the link.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, HermitianToeplitz};
use crate::scalar::Real;
use num_complex::Complex;

pub type Point = [f64; 2];

const MAX_REJECTIONS: usize = 1000;

/// Geometry, radio and traffic parameters of one simulated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Number of cells `L`.
    pub cells: usize,
    /// Devices per cell `K`.
    pub devices: usize,
    /// Clusters, and hence pilots, per cell `C`.
    pub clusters: usize,
    /// BS antennas `M`.
    pub antennas: usize,
    /// Side of a square cell in meters.
    pub cell_edge: f64,
    pub min_bs_distance: f64,
    pub pathloss_exponent: f64,
    /// Channel gain at 1 km in dB.
    pub gain_ref_db: f64,
    pub shadow_std_db: f64,
    pub noise_dbm: f64,
    pub ul_power_dbm: f64,
    /// Samples per coherence block `tau_c`.
    pub coherence_samples: usize,
    pub bandwidth_hz: f64,
    pub payload_bytes: usize,
    /// Reporting period of every device in seconds.
    pub period_s: f64,
    /// Angular standard deviation of the local scattering model in degrees.
    pub asd_deg: f64,
    /// Redraw a device's shadowing until its own BS has the largest gain.
    pub serving_strongest: bool,
    pub trials: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            cells: 16,
            devices: 50,
            clusters: 10,
            antennas: 64,
            cell_edge: 250.0,
            min_bs_distance: 35.0,
            pathloss_exponent: 3.76,
            gain_ref_db: -148.1,
            shadow_std_db: 10.0,
            noise_dbm: -94.0,
            ul_power_dbm: 20.0,
            coherence_samples: 200,
            bandwidth_hz: 12_500.0,
            payload_bytes: 500,
            period_s: 1.0,
            asd_deg: 10.0,
            serving_strongest: true,
            trials: 50,
            seed: 1,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.cells == 0 {
            return fail("cells must be at least 1".into());
        }
        if self.clusters == 0 {
            return fail("clusters must be at least 1".into());
        }
        if self.clusters > self.devices {
            return fail(format!(
                "clusters ({}) exceed devices per cell ({})",
                self.clusters, self.devices
            ));
        }
        if self.clusters > self.coherence_samples {
            return fail(format!(
                "clusters ({}) exceed coherence block length ({})",
                self.clusters, self.coherence_samples
            ));
        }
        if self.antennas == 0 {
            return fail("antennas must be at least 1".into());
        }
        let reals = [
            ("cell_edge", self.cell_edge),
            ("min_bs_distance", self.min_bs_distance),
            ("pathloss_exponent", self.pathloss_exponent),
            ("gain_ref_db", self.gain_ref_db),
            ("shadow_std_db", self.shadow_std_db),
            ("noise_dbm", self.noise_dbm),
            ("ul_power_dbm", self.ul_power_dbm),
            ("bandwidth_hz", self.bandwidth_hz),
            ("period_s", self.period_s),
            ("asd_deg", self.asd_deg),
        ];
        if let Some((name, _)) = reals.iter().find(|(_, v)| !v.is_finite()) {
            return fail(format!("{name} must be finite"));
        }
        if self.cell_edge <= 0.0 || self.min_bs_distance <= 0.0 {
            return fail("cell_edge and min_bs_distance must be positive".into());
        }
        if self.min_bs_distance >= self.cell_edge / 2.0 {
            return fail(format!(
                "min_bs_distance ({}) must be below half the cell edge ({})",
                self.min_bs_distance,
                self.cell_edge / 2.0
            ));
        }
        if self.shadow_std_db < 0.0 || self.asd_deg < 0.0 {
            return fail("shadow_std_db and asd_deg must be non-negative".into());
        }
        if self.bandwidth_hz <= 0.0 || self.period_s <= 0.0 || self.payload_bytes == 0 {
            return fail("bandwidth_hz, period_s and payload_bytes must be positive".into());
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        Ok(())
    }

    /// Uplink transmit power in mW.
    pub fn ul_power_mw(&self) -> f64 {
        10f64.powf(self.ul_power_dbm / 10.0)
    }

    /// Receiver noise power in mW.
    pub fn noise_mw(&self) -> f64 {
        10f64.powf(self.noise_dbm / 10.0)
    }

    /// `sigma^2 / rho`, the noise floor relative to the transmit power.
    pub fn noise_over_power(&self) -> f64 {
        self.noise_mw() / self.ul_power_mw()
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.cells, self.cell_edge)
    }
}

/// Square cells on a torus, indexed row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub cell_edge: f64,
}

impl Grid {
    /// Most square `rows x cols` factorization of `cells`.
    pub fn new(cells: usize, cell_edge: f64) -> Self {
        let mut rows = 1;
        for r in 1..=cells {
            if r * r > cells {
                break;
            }
            if cells % r == 0 {
                rows = r;
            }
        }
        Self {
            rows,
            cols: cells / rows.max(1),
            cell_edge,
        }
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn width(&self) -> f64 {
        self.cols as f64 * self.cell_edge
    }

    pub fn height(&self) -> f64 {
        self.rows as f64 * self.cell_edge
    }

    pub fn center(&self, cell: usize) -> Point {
        let (r, c) = (cell / self.cols, cell % self.cols);
        [
            (c as f64 + 0.5) * self.cell_edge,
            (r as f64 + 0.5) * self.cell_edge,
        ]
    }

    /// Cells sharing an edge or a corner on the torus.
    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        let dist = |x: usize, y: usize, n: usize| {
            let d = x.abs_diff(y);
            d.min(n - d)
        };
        dist(a / self.cols, b / self.cols, self.rows) <= 1
            && dist(a % self.cols, b % self.cols, self.cols) <= 1
    }

    /// The nine translations (identity included) that tile the torus.
    pub fn wrap_offsets(&self) -> Vec<Point> {
        let (w, h) = (self.width(), self.height());
        let mut out = Vec::with_capacity(9);
        for dy in [-1.0, 0.0, 1.0] {
            for dx in [-1.0, 0.0, 1.0] {
                out.push([dx * w, dy * h]);
            }
        }
        out
    }
}

/// BS and device positions of one layout draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub grid: Grid,
    pub bs_positions: Vec<Point>,
    /// `device_positions[cell][k]`.
    pub device_positions: Vec<Vec<Point>>,
    pub wrap_offsets: Vec<Point>,
}

impl Placement {
    pub fn devices_per_cell(&self) -> usize {
        self.device_positions.first().map_or(0, Vec::len)
    }
}

fn euclid(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Distance between `a` and the closest wrapped image of `b`, and that image.
pub fn nearest_image(a: Point, b: Point, wrap_offsets: &[Point]) -> (f64, Point) {
    let mut best = (euclid(a, b), b);
    for o in wrap_offsets {
        let img = [b[0] + o[0], b[1] + o[1]];
        let d = euclid(a, img);
        if d < best.0 {
            best = (d, img);
        }
    }
    best
}

/// Torus distance `min_o |a - (b + o)|`.
pub fn wrap_distance(a: Point, b: Point, wrap_offsets: &[Point]) -> f64 {
    nearest_image(a, b, wrap_offsets).0
}

/// Random stream of device `k` in cell `j`, so a device keeps its draws when
/// the device count changes.
fn device_stream(seed: u64, j: usize, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((j as u64) << 32) | k as u64);
    rng
}

/// Places one BS at each cell center and `cfg.devices` uniform devices per
/// cell, each at least `min_bs_distance` from its BS.
pub fn build_layout(cfg: &NetworkConfig, seed: u64) -> Result<Placement> {
    cfg.validate()?;
    let grid = cfg.grid();
    let half = cfg.cell_edge / 2.0;
    let bs_positions: Vec<Point> = (0..grid.cells()).map(|i| grid.center(i)).collect();
    let mut device_positions = Vec::with_capacity(grid.cells());
    for (j, bs) in bs_positions.iter().enumerate() {
        let mut cell = Vec::with_capacity(cfg.devices);
        for k in 0..cfg.devices {
            let mut rng = device_stream(seed, j, k);
            let mut placed = None;
            for _ in 0..MAX_REJECTIONS {
                let p = [
                    bs[0] + rng.gen_range(-half..half),
                    bs[1] + rng.gen_range(-half..half),
                ];
                if euclid(p, *bs) >= cfg.min_bs_distance {
                    placed = Some(p);
                    break;
                }
            }
            cell.push(placed.ok_or_else(|| {
                Error::Config(format!(
                    "no device position at least {} m from its BS after {MAX_REJECTIONS} draws",
                    cfg.min_bs_distance
                ))
            })?);
        }
        device_positions.push(cell);
    }
    Ok(Placement {
        grid,
        bs_positions,
        device_positions,
        wrap_offsets: grid.wrap_offsets(),
    })
}

/// Channel gain in dB at `distance` meters with `shadow_db` of shadowing.
pub fn large_scale_gain_db(cfg: &NetworkConfig, distance: f64, shadow_db: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!(
            "distance must be positive, got {distance}"
        )));
    }
    Ok(cfg.gain_ref_db - 10.0 * cfg.pathloss_exponent * (distance / 1000.0).log10() + shadow_db)
}

/// Linear channel gain at `distance` meters with `shadow_db` of shadowing.
pub fn large_scale_gain(cfg: &NetworkConfig, distance: f64, shadow_db: f64) -> Result<f64> {
    Ok(10f64.powf(large_scale_gain_db(cfg, distance, shadow_db)? / 10.0))
}

/// Gaussian local scattering correlation of a half-wavelength ULA:
/// entry `(m, n)` is
/// `beta * exp(j pi (m-n) sin theta) * exp(-(asd^2 / 2) (pi (m-n) cos theta)^2)`.
pub fn spatial_correlation<T: Real>(
    theta: f64,
    asd_deg: f64,
    antennas: usize,
    beta: T,
) -> HermitianToeplitz<T> {
    let asd = asd_deg.to_radians();
    let (s, c) = theta.sin_cos();
    let col = (0..antennas)
        .map(|d| {
            let x = std::f64::consts::PI * d as f64;
            let amp = (-(asd * asd) / 2.0 * (x * c).powi(2)).exp();
            let phase = x * s;
            Complex::new(T::lit(amp * phase.cos()), T::lit(amp * phase.sin())) * beta
        })
        .collect();
    HermitianToeplitz::new(col)
}

/// Large-scale statistics of every device-BS link.
///
/// Indexed as `(bs, cell, device)`: link `(i, j, k)` is device `k` of cell `j`
/// as seen by BS `i`.
#[derive(Debug, Clone)]
pub struct CorrelationSet<T: Real> {
    cells: usize,
    devices: usize,
    antennas: usize,
    beta: Vec<T>,
    angles: Vec<f64>,
    corr: Vec<HermitianToeplitz<T>>,
}

impl<T: Real> CorrelationSet<T> {
    /// Assembles a set from per-link gains and bearings.
    pub fn from_links(
        cells: usize,
        devices: usize,
        antennas: usize,
        asd_deg: f64,
        beta: Vec<T>,
        angles: Vec<f64>,
    ) -> Result<Self> {
        let n = cells * cells * devices;
        if beta.len() != n || angles.len() != n {
            return Err(Error::Structural(format!(
                "expected {n} links, got {} gains and {} angles",
                beta.len(),
                angles.len()
            )));
        }
        let corr = beta
            .iter()
            .zip(&angles)
            .map(|(&b, &theta)| spatial_correlation(theta, asd_deg, antennas, b))
            .collect();
        Ok(Self {
            cells,
            devices,
            antennas,
            beta,
            angles,
            corr,
        })
    }

    #[inline]
    fn index(&self, bs: usize, cell: usize, device: usize) -> usize {
        debug_assert!(bs < self.cells && cell < self.cells && device < self.devices);
        (bs * self.cells + cell) * self.devices + device
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    #[inline]
    pub fn beta(&self, bs: usize, cell: usize, device: usize) -> T {
        self.beta[self.index(bs, cell, device)]
    }

    pub fn angle(&self, bs: usize, cell: usize, device: usize) -> f64 {
        self.angles[self.index(bs, cell, device)]
    }

    /// Compact form of `R` for the link.
    #[inline]
    pub fn toeplitz(&self, bs: usize, cell: usize, device: usize) -> &HermitianToeplitz<T> {
        &self.corr[self.index(bs, cell, device)]
    }

    /// Dense `M x M` correlation matrix of the link.
    pub fn r(&self, bs: usize, cell: usize, device: usize) -> CMatrix<T> {
        self.toeplitz(bs, cell, device).to_matrix()
    }
}

/// Draws shadowing for every link and fills gains and correlation matrices.
///
/// Bearings and distances use the wrap image nearest to the BS.
pub fn build_correlation_set<T: Real>(
    cfg: &NetworkConfig,
    placement: &Placement,
    seed: u64,
) -> Result<CorrelationSet<T>> {
    let cells = placement.bs_positions.len();
    let devices = placement.devices_per_cell();
    let shadow = Normal::new(0.0, cfg.shadow_std_db)
        .map_err(|e| Error::Config(format!("shadow fading: {e}")))?;
    let n = cells * cells * devices;
    let mut beta_db = vec![0.0; n];
    let mut angles = vec![0.0; n];
    let idx = |i: usize, j: usize, k: usize| (i * cells + j) * devices + k;
    let mut path_db = vec![0.0; cells];
    let mut shadow_db = vec![0.0; cells];
    for j in 0..cells {
        for (k, &dev) in placement.device_positions[j].iter().enumerate() {
            let mut rng = device_stream(seed, j, k);
            for i in 0..cells {
                let bs = placement.bs_positions[i];
                let (d, img) = nearest_image(bs, dev, &placement.wrap_offsets);
                angles[idx(i, j, k)] = (img[1] - bs[1]).atan2(img[0] - bs[0]);
                path_db[i] = large_scale_gain_db(cfg, d, 0.0)?;
            }
            let mut attempts = 0;
            loop {
                for s in shadow_db.iter_mut() {
                    *s = shadow.sample(&mut rng);
                }
                attempts += 1;
                let serving = path_db[j] + shadow_db[j];
                let strongest = (0..cells).all(|i| path_db[i] + shadow_db[i] <= serving);
                if !cfg.serving_strongest || strongest {
                    break;
                }
                if attempts >= MAX_REJECTIONS {
                    return Err(Error::Config(format!(
                        "serving BS never strongest for device {k} of cell {j}"
                    )));
                }
            }
            for i in 0..cells {
                beta_db[idx(i, j, k)] = path_db[i] + shadow_db[i];
            }
        }
    }
    let beta = beta_db
        .iter()
        .map(|db| T::lit(10f64.powf(db / 10.0)))
        .collect();
    CorrelationSet::from_links(cells, devices, cfg.antennas, cfg.asd_deg, beta, angles)
}
