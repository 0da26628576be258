//! Dataset power spectra and the inverse-power model
//! `D(f) = c1 / |c2 + f|^m`.
//!
//! A translation-invariant image distribution has a covariance that is
//! diagonal in the Fourier basis; its eigenvalues are the power spectrum.
//! This module estimates that spectrum from images and fits the model to
//! it, in log space, pooling all channels.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Fft2, ImageTensor, Shape};

pub use crate::io::{load_image_files, load_images};

/// Signed frequency index of DFT position `i` on an axis of length `n`.
#[inline]
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Frequency norm `sqrt(fx^2 + fy^2)` of every bin, row-major `H x W`.
pub fn frequency_grid<T: Real>(height: usize, width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(height * width);
    for i in 0..height {
        let fx = signed_index(i, height) as f64;
        for j in 0..width {
            let fy = signed_index(j, width) as f64;
            out.push(T::lit((fx * fx + fy * fy).sqrt()));
        }
    }
    out
}

/// Mean squared magnitude of the unitary DFT, per channel and bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub count: usize,
    pub power: Vec<T>,
}

impl<T: Real> PowerSpectrum<T> {
    pub fn shape(&self) -> Shape {
        (self.channels, self.height, self.width)
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> T {
        self.power[(c * self.height + i) * self.width + j]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ps: Self = serde_json::from_str(text)?;
        if ps.power.len() != ps.channels * ps.height * ps.width {
            return Err(Error::Format("spectrum power length does not match its shape".into()));
        }
        Ok(ps)
    }

    /// CSV with header `channel,fx,fy,f,power`, one row per channel and bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel,fx,fy,f,power\n");
        let freqs = frequency_grid::<f64>(self.height, self.width);
        for c in 0..self.channels {
            for i in 0..self.height {
                for j in 0..self.width {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        c,
                        signed_index(i, self.height),
                        signed_index(j, self.width),
                        freqs[i * self.width + j],
                        self.get(c, i, j)
                    );
                }
            }
        }
        out
    }

    /// Parses [`PowerSpectrum::to_csv`] output. The CSV carries no image
    /// count, so `count` comes back as 0.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(Error::Format(format!("spectrum CSV line {}: expected 5 columns", n + 1)));
            }
            let bad = |_: std::num::ParseIntError| Error::Format(format!("spectrum CSV line {}: bad number", n + 1));
            let c: usize = cols[0].trim().parse().map_err(bad)?;
            let fx: i64 = cols[1].trim().parse().map_err(bad)?;
            let fy: i64 = cols[2].trim().parse().map_err(bad)?;
            let p: f64 = cols[4]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("spectrum CSV line {}: bad number", n + 1)))?;
            rows.push((c, fx, fy, p));
        }
        let channels = rows.iter().map(|r| r.0).max().map_or(0, |c| c + 1);
        let distinct = |sel: fn(&(usize, i64, i64, f64)) -> i64| {
            let mut v: Vec<i64> = rows.iter().map(sel).collect();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        let (height, width) = (distinct(|r| r.1), distinct(|r| r.2));
        if channels == 0 || rows.len() != channels * height * width {
            return Err(Error::Format("spectrum CSV does not cover a full grid".into()));
        }
        let mut power = vec![T::zero(); rows.len()];
        for (c, fx, fy, p) in rows {
            let i = fx.rem_euclid(height as i64) as usize;
            let j = fy.rem_euclid(width as i64) as usize;
            power[(c * height + i) * width + j] = T::lit(p);
        }
        Ok(Self {
            channels,
            height,
            width,
            count: 0,
            power,
        })
    }
}

/// Running sum of `|DFT|^2`; partial accumulators over disjoint parts of a
/// dataset can be merged.
#[derive(Debug, Clone)]
pub struct SpectrumAccumulator<T: Real> {
    shape: Shape,
    fft: Fft2<T>,
    sum: Vec<T>,
    count: usize,
}

impl<T: Real> SpectrumAccumulator<T> {
    pub fn new(shape: Shape) -> Self {
        Self {
            shape,
            fft: Fft2::new(shape.1, shape.2),
            sum: vec![T::zero(); shape.0 * shape.1 * shape.2],
            count: 0,
        }
    }

    pub fn add(&mut self, img: &ImageTensor<T>) -> Result<()> {
        img.expect_shape(self.shape)?;
        let u = self.fft.forward(img)?;
        for (s, v) in self.sum.iter_mut().zip(u.as_slice()) {
            *s += v.norm_sqr();
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.shape != self.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                found: other.shape,
            });
        }
        for (s, o) in self.sum.iter_mut().zip(&other.sum) {
            *s += *o;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn finish(self) -> Result<PowerSpectrum<T>> {
        if self.count == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = T::from_usize_lossy(self.count);
        let (channels, height, width) = self.shape;
        Ok(PowerSpectrum {
            channels,
            height,
            width,
            count: self.count,
            power: self.sum.into_iter().map(|s| s / n).collect(),
        })
    }
}

/// Per-channel mean of `|unitary DFT|^2` over `images`.
pub fn compute_power_spectrum<T: Real>(images: &[ImageTensor<T>]) -> Result<PowerSpectrum<T>> {
    let first = images.first().ok_or(Error::EmptyDataset)?;
    let mut acc = SpectrumAccumulator::new(first.shape());
    for img in images {
        acc.add(img)?;
    }
    acc.finish()
}

/// Fitted `D(f) = c1 / |c2 + f|^m`; `residual` is the RMS log-domain error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFit<T> {
    pub c1: T,
    pub c2: T,
    pub m: T,
    pub residual: T,
    pub fixed_m: bool,
}

/// `|c2 + f|` below this is a pole of the model.
pub const SINGULAR_TOL: f64 = 1e-6;
/// `|c2|` below this makes the DC value clamp to [`DC_CLAMP`].
pub const DC_C2_TOL: f64 = 1e-3;
pub const DC_CLAMP: f64 = 1e6;

impl<T: Real> SpectrumFit<T> {
    /// A model with the given parameters and no fit residual.
    pub fn new(c1: T, c2: T, m: T) -> Self {
        Self {
            c1,
            c2,
            m,
            residual: T::zero(),
            fixed_m: false,
        }
    }

    /// `c1 / |c2 + f|^m`.
    pub fn power_at(&self, f: T) -> Result<T> {
        let base = (self.c2 + f).abs();
        if !(base > T::lit(SINGULAR_TOL)) {
            return Err(Error::SingularBin {
                f: f.as_f64(),
                c2: self.c2.as_f64(),
            });
        }
        Ok(self.c1 / base.powf(self.m))
    }

    /// Model power at `f = 0`, which the fit never sees. With `|c2| < 1e-3`
    /// and `m > 0` the pole is replaced by `1e6`; for `m < 0` the base is
    /// floored at `1e-3` instead.
    pub fn dc_power(&self) -> T {
        if self.m == T::zero() {
            return self.c1;
        }
        let floor = T::lit(DC_C2_TOL);
        if self.c2.abs() < floor {
            if self.m > T::zero() {
                return T::lit(DC_CLAMP);
            }
            return self.c1 / floor.powf(self.m);
        }
        self.c1 / self.c2.abs().powf(self.m)
    }

    /// Model power for every bin of an `H x W` grid, DC included.
    pub fn grid_power(&self, height: usize, width: usize) -> Result<Vec<T>> {
        frequency_grid::<T>(height, width)
            .into_iter()
            .map(|f| if f == T::zero() { Ok(self.dc_power()) } else { self.power_at(f) })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let fit: Self = serde_json::from_str(text)?;
        if !(fit.c1 > T::zero()) {
            return Err(Error::Format(format!("fit has non-positive c1 = {}", fit.c1)));
        }
        Ok(fit)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `c1 / |c2 + f|^m`; fails on the model's pole.
pub fn model_power<T: Real>(fit: &SpectrumFit<T>, f: T) -> Result<T> {
    fit.power_at(f)
}

pub const MAX_FIT_ITERATIONS: usize = 200;
const STEP_TOL: f64 = 1e-10;

#[derive(Clone, Copy)]
struct Sample<T> {
    f: T,
    log_power: T,
}

enum Attempt<T> {
    Done(SpectrumFit<T>),
    Singular(T),
}

/// Least-squares fit of `ln P = ln c1 - m ln|c2 + f|` over every channel and
/// every bin with `f > 0` and positive power.
///
/// Gauss-Newton on `(ln c1, c2, m)` with backtracking line search, started
/// from the log-log regression with `c2 = 0`. `fix_m` holds `m` constant.
/// Converges when the accepted step is shorter than `1e-10`.
pub fn fit_spectrum<T: Real>(ps: &PowerSpectrum<T>, fix_m: Option<T>) -> Result<SpectrumFit<T>> {
    let freqs = frequency_grid::<T>(ps.height, ps.width);
    let bins = ps.height * ps.width;
    let mut samples: Vec<Sample<T>> = Vec::new();
    for c in 0..ps.channels {
        for (k, &f) in freqs.iter().enumerate() {
            let p = ps.power[c * bins + k];
            if f > T::zero() && p > T::zero() {
                samples.push(Sample { f, log_power: p.ln() });
            }
        }
    }
    let mut distinct: Vec<T> = samples.iter().map(|s| s.f).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} distinct nonzero frequencies with positive power; need 3",
            distinct.len()
        )));
    }

    match fit_samples(&samples, fix_m)? {
        Attempt::Done(fit) => Ok(fit),
        Attempt::Singular(c2) => {
            // Drop the bins sitting on the pole and try once more.
            let tol = T::lit(SINGULAR_TOL);
            samples.retain(|s| (c2 + s.f).abs() >= tol);
            match fit_samples(&samples, fix_m)? {
                Attempt::Done(fit) => Ok(fit),
                Attempt::Singular(c2) => {
                    let f = samples
                        .iter()
                        .map(|s| s.f)
                        .fold(T::infinity(), |best, f| if (c2 + f).abs() < (c2 + best).abs() { f } else { best });
                    Err(Error::SingularBin {
                        f: f.as_f64(),
                        c2: c2.as_f64(),
                    })
                }
            }
        }
    }
}

/// Sum of squared log residuals; `None` on a pole.
fn objective<T: Real>(samples: &[Sample<T>], log_c1: T, c2: T, m: T) -> Option<T> {
    let tol = T::lit(SINGULAR_TOL);
    let mut total = T::zero();
    for s in samples {
        let base = (c2 + s.f).abs();
        if base < tol {
            return None;
        }
        let r = s.log_power - log_c1 + m * base.ln();
        total += r * r;
    }
    Some(total)
}

fn initial_guess<T: Real>(samples: &[Sample<T>], fix_m: Option<T>) -> (T, T) {
    let n = T::from_usize_lossy(samples.len());
    if let Some(m) = fix_m {
        let mean = samples
            .iter()
            .fold(T::zero(), |acc, s| acc + s.log_power + m * s.f.ln())
            / n;
        return (mean, m);
    }
    // ln P = a - m ln f
    let (mut sx, mut sy, mut sxx, mut sxy) = (T::zero(), T::zero(), T::zero(), T::zero());
    for s in samples {
        let x = s.f.ln();
        sx += x;
        sy += s.log_power;
        sxx += x * x;
        sxy += x * s.log_power;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (intercept, -slope)
}

fn fit_samples<T: Real>(samples: &[Sample<T>], fix_m: Option<T>) -> Result<Attempt<T>> {
    let (mut log_c1, mut m) = initial_guess(samples, fix_m);
    let mut c2 = T::zero();
    let free_m = fix_m.is_none();
    let dims = if free_m { 3 } else { 2 };
    let mut obj = objective(samples, log_c1, c2, m).ok_or(Error::NoRoot("initial spectrum fit"))?;

    for _ in 0..MAX_FIT_ITERATIONS {
        let mut jtj = [[T::zero(); 3]; 3];
        let mut jtr = [T::zero(); 3];
        for s in samples {
            let shifted = c2 + s.f;
            let r = s.log_power - log_c1 + m * shifted.abs().ln();
            let grad = [-T::one(), m / shifted, shifted.abs().ln()];
            for a in 0..dims {
                jtr[a] += grad[a] * r;
                for b in 0..dims {
                    jtj[a][b] += grad[a] * grad[b];
                }
            }
        }
        let rhs: Vec<T> = jtr[..dims].iter().map(|&v| -v).collect();
        let Some(step) = solve_small(&jtj, &rhs) else {
            return Err(Error::NonConvergence(MAX_FIT_ITERATIONS));
        };
        let step_norm = step.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();

        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let (ta, tc, tm) = (
                log_c1 + alpha * step[0],
                c2 + alpha * step[1],
                if free_m { m + alpha * step[2] } else { m },
            );
            if let Some(val) = objective(samples, ta, tc, tm) {
                if val <= obj {
                    accepted = Some((ta, tc, tm, val));
                    break;
                }
            }
            alpha *= T::lit(0.5);
        }
        let Some((ta, tc, tm, val)) = accepted else {
            // No decrease at any step length: at the rounding floor.
            break;
        };
        log_c1 = ta;
        c2 = tc;
        m = tm;
        obj = val;
        if alpha * step_norm < T::lit(STEP_TOL) {
            return finish(samples, log_c1, c2, m, obj, fix_m);
        }
    }
    if obj.is_finite() && converged_at_floor(samples, log_c1, c2, m, obj) {
        return finish(samples, log_c1, c2, m, obj, fix_m);
    }
    Err(Error::NonConvergence(MAX_FIT_ITERATIONS))
}

/// A line search that cannot decrease the objective has converged only if
/// the objective is already at rounding level relative to the data.
fn converged_at_floor<T: Real>(samples: &[Sample<T>], _log_c1: T, _c2: T, _m: T, obj: T) -> bool {
    let scale = samples
        .iter()
        .fold(T::zero(), |acc, s| acc + s.log_power * s.log_power)
        .max(T::one());
    obj <= T::epsilon().sqrt() * scale
}

fn finish<T: Real>(
    samples: &[Sample<T>],
    log_c1: T,
    c2: T,
    m: T,
    obj: T,
    fix_m: Option<T>,
) -> Result<Attempt<T>> {
    let tol = T::lit(SINGULAR_TOL);
    if samples.iter().any(|s| (c2 + s.f).abs() < tol) {
        return Ok(Attempt::Singular(c2));
    }
    Ok(Attempt::Done(SpectrumFit {
        c1: log_c1.exp(),
        c2,
        m,
        residual: (obj / T::from_usize_lossy(samples.len())).sqrt(),
        fixed_m: fix_m.is_some(),
    }))
}

/// Solves the leading `rhs.len()` block of `a x = rhs` by Gaussian
/// elimination with partial pivoting.
fn solve_small<T: Real>(a: &[[T; 3]; 3], rhs: &[T]) -> Option<Vec<T>> {
    let n = rhs.len();
    let mut m: Vec<Vec<T>> = (0..n)
        .map(|i| {
            let mut row: Vec<T> = a[i][..n].to_vec();
            row.push(rhs[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[pivot][col].abs() <= T::min_positive_value() {
            return None;
        }
        m.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            for k in col..=n {
                let v = m[col][k];
                m[row][k] -= factor * v;
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = m[i][n];
        for k in (i + 1)..n {
            s -= m[i][k] * x[k];
        }
        x[i] = s / m[i][i];
    }
    Some(x)
}
