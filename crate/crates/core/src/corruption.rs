//! The optimal corruption filter `psi_t = (1 - d^(1-t/T)) / (1 - d)` and the
//! forward process built from it, in frequency space and as dense
//! pixel-space matrices.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SpdMatrix};
use crate::rng::seeded;
use crate::scalar::Real;
use crate::spectrum::{frequency_grid, SpectrumFit};
use crate::tensor::{Fft2, FreqTensor, ImageTensor};

/// Floor applied to `psi_T`, which would otherwise be exactly zero.
pub const EPS_MIN: f64 = 1e-8;
/// Below this `|1 - d|` the filter uses its `d -> 1` limit.
pub const UNIT_POWER_TOL: f64 = 1e-6;

/// Retained signal fraction `(1 - d^s) / (1 - d)` for a bin of power `d`,
/// where `s = 1 - t/T` is the remaining exponent.
#[inline]
pub fn retention<T: Real>(d: T, s: T) -> T {
    if (T::one() - d).abs() < T::lit(UNIT_POWER_TOL) {
        return s;
    }
    let ln_d = d.ln();
    (s * ln_d).exp_m1() / ln_d.exp_m1()
}

/// Per-bin filter values for every step `t = 0..=T` of one `H x W` grid.
#[derive(Debug, Clone)]
pub struct FilterSchedule<T: Real> {
    steps: usize,
    height: usize,
    width: usize,
    eps_min: T,
    fit: Option<SpectrumFit<T>>,
    d_values: Arc<[T]>,
    frequencies: Arc<[T]>,
    // (T + 1) rows of H*W values.
    psi: Arc<[T]>,
    fft: Fft2<T>,
}

impl<T: Real> FilterSchedule<T> {
    /// Schedule for explicit per-bin powers `d` (row-major `H x W`).
    pub fn from_power(d_values: Vec<T>, height: usize, width: usize, steps: usize) -> Result<Self> {
        Self::with_eps(d_values, height, width, steps, T::lit(EPS_MIN))
    }

    fn with_eps(d_values: Vec<T>, height: usize, width: usize, steps: usize, eps_min: T) -> Result<Self> {
        if steps == 0 {
            return Err(Error::out_of_range("T", 0.0, "[1, inf)"));
        }
        if height == 0 || width == 0 || d_values.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "{} power values for a {height}x{width} grid",
                d_values.len()
            )));
        }
        if let Some(bad) = d_values.iter().find(|d| !(**d > T::zero() && d.is_finite())) {
            return Err(Error::InvalidArgument(format!("bin power must be positive and finite, got {bad}")));
        }
        if !(eps_min > T::zero() && eps_min < T::one()) {
            return Err(Error::out_of_range("eps_min", eps_min.as_f64(), "(0, 1)"));
        }
        let bins = d_values.len();
        let mut psi = Vec::with_capacity((steps + 1) * bins);
        let total = T::from_usize_lossy(steps);
        for t in 0..=steps {
            let s = T::one() - T::from_usize_lossy(t) / total;
            for &d in &d_values {
                let v = if t == 0 {
                    T::one()
                } else if t == steps {
                    eps_min
                } else {
                    retention(d, s)
                };
                psi.push(v);
            }
        }
        Ok(Self {
            steps,
            height,
            width,
            eps_min,
            fit: None,
            d_values: d_values.into(),
            frequencies: frequency_grid::<T>(height, width).into(),
            psi: psi.into(),
            fft: Fft2::new(height, width),
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bins(&self) -> usize {
        self.height * self.width
    }

    pub fn eps_min(&self) -> T {
        self.eps_min
    }

    /// The spectrum fit the schedule was built from, if any.
    pub fn fit(&self) -> Option<&SpectrumFit<T>> {
        self.fit.as_ref()
    }

    pub fn d_values(&self) -> &[T] {
        &self.d_values
    }

    pub fn frequencies(&self) -> &[T] {
        &self.frequencies
    }

    pub fn fft(&self) -> &Fft2<T> {
        &self.fft
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t > self.steps {
            return Err(Error::out_of_range("t", t as f64, format!("[0, {}]", self.steps)));
        }
        Ok(())
    }

    /// `psi_t` for every bin.
    pub fn psi(&self, t: usize) -> Result<&[T]> {
        self.check_t(t)?;
        let n = self.bins();
        Ok(&self.psi[t * n..(t + 1) * n])
    }

    pub fn psi_bin(&self, t: usize, bin: usize) -> Result<T> {
        Ok(self.psi(t)?[bin])
    }

    /// Exact per-bin variance `psi d + 1 - psi` of `u_t` when `u_0` has
    /// variance `d`; equal to `d^(1-t/T)` except at the floored last step.
    pub fn forward_variance(&self, t: usize) -> Result<Vec<T>> {
        Ok(self
            .psi(t)?
            .iter()
            .zip(self.d_values.iter())
            .map(|(&p, &d)| d * p + (T::one() - p))
            .collect())
    }

    /// Checks the boundary values, range, monotonicity in `t`, and ordering
    /// against `d` of every stored row.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(format!("schedule invariant violated: {msg}")));
        let n = self.bins();
        if self.psi(0)?.iter().any(|&p| p != T::one()) {
            return fail("psi(0) != 1".into());
        }
        if self.psi(self.steps)?.iter().any(|&p| p > self.eps_min) {
            return fail("psi(T) > eps_min".into());
        }
        let mut by_power: Vec<usize> = (0..n).collect();
        by_power.sort_by(|&a, &b| self.d_values[a].partial_cmp(&self.d_values[b]).unwrap());
        for t in 1..self.steps {
            let row = self.psi(t)?;
            let prev = self.psi(t - 1)?;
            for k in 0..n {
                if !(row[k] > T::zero() && row[k] < T::one()) {
                    return fail(format!("psi({t}) = {} at bin {k}", row[k]));
                }
                if !(row[k] < prev[k]) {
                    return fail(format!("psi not decreasing at t = {t}, bin {k}"));
                }
            }
            // Higher power retains less signal.
            for pair in by_power.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if self.d_values[a] < self.d_values[b] && !(row[a] >= row[b]) {
                    return fail(format!("psi({t}) out of order between bins {a} and {b}"));
                }
            }
        }
        if self.steps >= 1 && !(self.psi(self.steps)?.iter().zip(self.psi(self.steps - 1)?).all(|(a, b)| a < b)) {
            return fail("psi not decreasing at t = T".into());
        }
        Ok(())
    }

    /// The JSON description from which this schedule can be rebuilt.
    pub fn to_file(&self) -> Result<FilterFile<T>> {
        let fit = self
            .fit
            .ok_or_else(|| Error::InvalidArgument("schedule was not built from a spectrum fit".into()))?;
        Ok(FilterFile {
            height: self.height,
            width: self.width,
            steps: self.steps,
            c1: fit.c1,
            c2: fit.c2,
            m: fit.m,
            eps_min: self.eps_min,
        })
    }
}

/// Builds `psi_t` for `t = 0..=T` from the model power of every bin.
pub fn build_schedule<T: Real>(fit: &SpectrumFit<T>, height: usize, width: usize, steps: usize) -> Result<FilterSchedule<T>> {
    build_schedule_with_eps(fit, height, width, steps, T::lit(EPS_MIN))
}

pub fn build_schedule_with_eps<T: Real>(
    fit: &SpectrumFit<T>,
    height: usize,
    width: usize,
    steps: usize,
    eps_min: T,
) -> Result<FilterSchedule<T>> {
    let d = fit.grid_power(height, width)?;
    let mut schedule = FilterSchedule::with_eps(d, height, width, steps, eps_min)?;
    schedule.fit = Some(*fit);
    Ok(schedule)
}

/// On-disk filter: only the parameters, `psi` is recomputed on load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterFile<T> {
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "T")]
    pub steps: usize,
    pub c1: T,
    pub c2: T,
    pub m: T,
    pub eps_min: T,
}

impl<T: Real> FilterFile<T> {
    pub fn fit(&self) -> SpectrumFit<T> {
        SpectrumFit::new(self.c1, self.c2, self.m)
    }

    pub fn build(&self) -> Result<FilterSchedule<T>> {
        let schedule = build_schedule_with_eps(&self.fit(), self.height, self.width, self.steps, self.eps_min)?;
        schedule.check_invariants()?;
        Ok(schedule)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Reads a filter file and rebuilds its schedule.
pub fn load_schedule<T: Real>(path: &Path) -> Result<FilterSchedule<T>> {
    FilterFile::read(path)?.build()
}

/// One row of the `t,f,psi` table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiRow<T> {
    pub t: usize,
    pub f: T,
    pub psi: T,
}

/// `psi_t` for every `t` and every distinct frequency norm (ascending).
pub fn psi_rows<T: Real>(schedule: &FilterSchedule<T>) -> Vec<PsiRow<T>> {
    let f = schedule.frequencies();
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f[a].partial_cmp(&f[b]).unwrap_or(std::cmp::Ordering::Equal));
    order.dedup_by(|a, b| f[*a] == f[*b]);
    let mut rows = Vec::with_capacity((schedule.steps() + 1) * order.len());
    for t in 0..=schedule.steps() {
        let psi = &schedule.psi[t * schedule.bins()..(t + 1) * schedule.bins()];
        rows.extend(order.iter().map(|&k| PsiRow { t, f: f[k], psi: psi[k] }));
    }
    rows
}

pub fn psi_csv<T: Real>(rows: &[PsiRow<T>]) -> String {
    let mut out = String::from("t,f,psi\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.t, r.f, r.psi);
    }
    out
}

pub fn parse_psi_csv<T: Real>(text: &str) -> Result<Vec<PsiRow<T>>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("t,f,psi") {
        return Err(Error::Format("psi CSV: missing t,f,psi header".into()));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("psi CSV line {}: malformed", n + 2));
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(bad());
        }
        rows.push(PsiRow {
            t: cols[0].parse().map_err(|_| bad())?,
            f: T::from_str_radix(cols[1], 10).map_err(|_| bad())?,
            psi: T::from_str_radix(cols[2], 10).map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

/// `u_t = sqrt(psi_t) u_0 + sqrt(1 - psi_t) xi`, bin-wise on every channel.
pub fn corrupt_frequency<T: Real>(
    u0: &FreqTensor<T>,
    xi: &FreqTensor<T>,
    t: usize,
    schedule: &FilterSchedule<T>,
) -> Result<FreqTensor<T>> {
    if u0.shape() != xi.shape() {
        return Err(Error::ShapeMismatch {
            expected: u0.shape(),
            found: xi.shape(),
        });
    }
    check_grid(u0.shape(), schedule)?;
    let psi = schedule.psi(t)?;
    let n = psi.len();
    let data: Vec<Complex<T>> = u0
        .as_slice()
        .iter()
        .zip(xi.as_slice())
        .enumerate()
        .map(|(idx, (&a, &e))| {
            let p = psi[idx % n];
            a.scale(p.sqrt()) + e.scale((T::one() - p).sqrt())
        })
        .collect();
    let (c, h, w) = u0.shape();
    FreqTensor::new(c, h, w, data)
}

pub(crate) fn check_grid<T: Real>(shape: (usize, usize, usize), schedule: &FilterSchedule<T>) -> Result<()> {
    if shape.1 != schedule.height() || shape.2 != schedule.width() {
        return Err(Error::ShapeMismatch {
            expected: (shape.0, schedule.height(), schedule.width()),
            found: shape,
        });
    }
    Ok(())
}

/// Forward-corrupts `x0` to step `t` with white pixel noise drawn from
/// `noise_seed`. Returns `(x_t, eps)`.
pub fn corrupt<T: Real>(
    x0: &ImageTensor<T>,
    t: usize,
    schedule: &FilterSchedule<T>,
    noise_seed: u64,
) -> Result<(ImageTensor<T>, ImageTensor<T>)> {
    corrupt_with_rng(x0, t, schedule, &mut seeded(noise_seed))
}

pub fn corrupt_with_rng<T: Real, R: Rng + ?Sized>(
    x0: &ImageTensor<T>,
    t: usize,
    schedule: &FilterSchedule<T>,
    rng: &mut R,
) -> Result<(ImageTensor<T>, ImageTensor<T>)> {
    schedule.psi(t)?;
    check_grid(x0.shape(), schedule)?;
    let eps = ImageTensor::standard_normal(x0.shape(), rng);
    if t == 0 {
        return Ok((x0.clone(), eps));
    }
    let fft = schedule.fft();
    let u_t = corrupt_frequency(&fft.forward(x0)?, &fft.forward(&eps)?, t, schedule)?;
    Ok((fft.inverse(&u_t)?, eps))
}

/// Pixel-space filter `Phi_t = (I - S^(1-t)) (I - S)^-1` for continuous
/// `t` in `(0, 1)`, one eigenvalue at a time.
pub fn phi_pixel<T: Real>(sigma0: &SpdMatrix<T>, t: T) -> Result<SpdMatrix<T>> {
    if !(t > T::zero() && t < T::one()) {
        return Err(Error::out_of_range("t", t.as_f64(), "(0, 1)"));
    }
    let eig = sigma0.eigh()?;
    let s = T::one() - t;
    Ok(SpdMatrix::from_symmetric_unchecked(eig.map(|l| retention(l, s)).symmetrized()))
}

/// Covariance of `x_t = Phi^(1/2) x_0 + (I - Phi)^(1/2) eps` for
/// `x_0 ~ N(0, S)`, assembled from `Phi_t` and its square roots.
pub fn corrupted_covariance<T: Real>(sigma0: &SpdMatrix<T>, t: T) -> Result<SpdMatrix<T>> {
    let phi = phi_pixel(sigma0, t)?;
    let root = phi.power(T::lit(0.5))?;
    let dim = sigma0.dim();
    let signal = &(root.as_matrix() * sigma0.as_matrix()) * root.as_matrix();
    let noise = &Matrix::identity(dim) - phi.as_matrix();
    SpdMatrix::new((&signal + &noise).symmetrized())
}

/// Mean over bins of `1 - psi` at half time.
pub fn half_time_noise<T: Real>(fit: &SpectrumFit<T>, height: usize, width: usize) -> Result<T> {
    let d = fit.grid_power(height, width)?;
    let half = T::lit(0.5);
    let total = d.iter().fold(T::zero(), |acc, &v| acc + T::one() - retention(v, half));
    Ok(total / T::from_usize_lossy(d.len()))
}

pub const CALIBRATION_BRACKET: (f64, f64) = (1e-6, 1e6);
const CALIBRATION_TOL: f64 = 1e-10;

/// Picks `c1` for exponent `target_m` (keeping `c2`) so the half-time mean
/// noise variance matches the one of `reference`. Bisection on `ln c1`.
pub fn calibrate_c1_for_m<T: Real>(
    reference: &SpectrumFit<T>,
    target_m: T,
    height: usize,
    width: usize,
    steps: usize,
) -> Result<SpectrumFit<T>> {
    if !(target_m >= T::lit(-2.0) && target_m <= T::lit(4.0)) {
        return Err(Error::out_of_range("m", target_m.as_f64(), "[-2, 4]"));
    }
    if steps == 0 {
        return Err(Error::out_of_range("T", 0.0, "[1, inf)"));
    }
    if target_m == reference.m {
        return Ok(*reference);
    }
    let target = half_time_noise(reference, height, width)?;
    let noise_at = |log_c1: T| half_time_noise(&SpectrumFit::new(log_c1.exp(), reference.c2, target_m), height, width);

    let mut lo = T::lit(CALIBRATION_BRACKET.0).ln();
    let mut hi = T::lit(CALIBRATION_BRACKET.1).ln();
    if !(noise_at(lo)? <= target && target <= noise_at(hi)?) {
        return Err(Error::NoRoot("half-time noise calibration"));
    }
    while hi - lo > T::tol(CALIBRATION_TOL) {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if noise_at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c1 = ((lo + hi) * T::lit(0.5)).exp();
    Ok(SpectrumFit::new(c1, reference.c2, target_m))
}
