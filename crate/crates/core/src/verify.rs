//! Independent checks: synthetic Gaussian data, Monte Carlo moment reports,
//! frequency ordering of the filter, and Fisher lengths of per-bin variance
//! curves.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corruption::{corrupt_frequency, FilterSchedule};
use crate::diffusion::LinearDenoiser;
use crate::error::{Error, Result};
use crate::linalg::{geodesic_ode_residual, path_length, straight_line, GeodesicPath, Matrix, SpdMatrix};
use crate::rng::{seeded, stream};
use crate::scalar::Real;
use crate::spectrum::SpectrumFit;
use crate::tensor::{mirror_bin, FreqTensor, ImageTensor};

/// Random SPD matrix `Q diag(exp(a_i)) Q^T` with `Q` Haar-orthogonal and
/// `a_i` uniform on `[-log_spread, log_spread]`.
pub fn random_spd<T: Real, R: Rng + ?Sized>(dim: usize, log_spread: f64, rng: &mut R) -> SpdMatrix<T> {
    let q = random_orthogonal::<T, R>(dim, rng);
    let eig: Vec<T> = (0..dim)
        .map(|_| {
            let a = if log_spread > 0.0 { rng.random_range(-log_spread..=log_spread) } else { 0.0 };
            T::lit(a.exp())
        })
        .collect();
    SpdMatrix::from_symmetric_unchecked(q.congruence_diag(&eig))
}

/// Gram-Schmidt on a Gaussian matrix, columns as the orthonormal basis.
fn random_orthogonal<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Matrix<T> {
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<T> = (0..dim).map(|_| T::standard_normal(rng)).collect();
        // Two passes for numerical orthogonality.
        for _ in 0..2 {
            for c in &cols {
                let dot = v.iter().zip(c).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                v.iter_mut().zip(c).for_each(|(a, &b)| *a -= dot * b);
            }
        }
        let norm = v.iter().fold(T::zero(), |acc, &a| acc + a * a).sqrt();
        if norm > T::lit(1e-6) {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    Matrix::from_fn(dim, |i, j| cols[j][i])
}

/// Zero-mean Gaussian images whose DFT has variance `d` in every bin,
/// generated directly in frequency space.
#[derive(Debug, Clone)]
pub struct GaussianSource<T: Real> {
    channels: usize,
    height: usize,
    width: usize,
    d_values: Vec<T>,
    fft: crate::tensor::Fft2<T>,
}

impl<T: Real> GaussianSource<T> {
    pub fn new(schedule: &FilterSchedule<T>, channels: usize) -> Self {
        Self::from_power(schedule.d_values().to_vec(), schedule.height(), schedule.width(), channels)
    }

    pub fn from_power(d_values: Vec<T>, height: usize, width: usize, channels: usize) -> Self {
        assert_eq!(d_values.len(), height * width);
        Self {
            channels,
            height,
            width,
            d_values,
            fft: crate::tensor::Fft2::new(height, width),
        }
    }

    /// Hermitian `u_0` with `E|u_k|^2 = d_k`: self-mirrored bins are real,
    /// other bins split the variance between real and imaginary parts.
    pub fn sample_frequency<R: Rng + ?Sized>(&self, rng: &mut R) -> FreqTensor<T> {
        let (h, w) = (self.height, self.width);
        let n = h * w;
        let half = T::lit(0.5);
        let mut u = FreqTensor::zeros((self.channels, h, w));
        for c in 0..self.channels {
            let plane = &mut u.as_mut_slice()[c * n..(c + 1) * n];
            for k in 0..n {
                let m = mirror_bin(k, h, w);
                if m == k {
                    plane[k] = Complex::new(self.d_values[k].sqrt() * T::standard_normal(rng), T::zero());
                } else if k < m {
                    let sd = (self.d_values[k] * half).sqrt();
                    let v = Complex::new(sd * T::standard_normal(rng), sd * T::standard_normal(rng));
                    plane[k] = v;
                    plane[m] = v.conj();
                }
            }
        }
        u
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ImageTensor<T>> {
        self.fft.inverse(&self.sample_frequency(rng))
    }
}

/// Outcome of a Monte Carlo comparison of per-bin estimates with targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub quantity: String,
    pub estimate: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub target: Vec<f64>,
    /// Largest `|estimate - target| / standard_error`.
    pub max_deviation_se: f64,
    pub threshold_se: f64,
    pub pass: bool,
}

pub const DEFAULT_SE_THRESHOLD: f64 = 3.0;

impl McReport {
    pub fn new(quantity: impl Into<String>, estimate: Vec<f64>, standard_error: Vec<f64>, target: Vec<f64>) -> Self {
        Self::with_threshold(quantity, estimate, standard_error, target, DEFAULT_SE_THRESHOLD)
    }

    pub fn with_threshold(
        quantity: impl Into<String>,
        estimate: Vec<f64>,
        standard_error: Vec<f64>,
        target: Vec<f64>,
        threshold_se: f64,
    ) -> Self {
        let max_deviation_se = estimate
            .iter()
            .zip(&standard_error)
            .zip(&target)
            .map(|((&e, &se), &t)| {
                let dev = (e - t).abs();
                if dev == 0.0 {
                    0.0
                } else {
                    dev / se
                }
            })
            .fold(0.0, f64::max);
        Self {
            quantity: quantity.into(),
            estimate,
            standard_error,
            target,
            max_deviation_se,
            threshold_se,
            pass: max_deviation_se <= threshold_se,
        }
    }

    /// Largest `|estimate / target - 1|`.
    pub fn max_relative_error(&self) -> f64 {
        self.estimate
            .iter()
            .zip(&self.target)
            .map(|(&e, &t)| ((e - t) / t).abs())
            .fold(0.0, f64::max)
    }

    /// Sum of squared deviations in SE units; chi-square with `bins`
    /// degrees of freedom when every bin is independent and on target.
    pub fn chi_square(&self) -> f64 {
        self.estimate
            .iter()
            .zip(&self.standard_error)
            .zip(&self.target)
            .map(|((&e, &se), &t)| if e == t { 0.0 } else { ((e - t) / se).powi(2) })
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for McReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} bins={:<5} max_dev={:>7.3} SE (limit {:.1})  {}",
            self.quantity,
            self.estimate.len(),
            self.max_deviation_se,
            self.threshold_se,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Running per-bin sums of `x` and `x^2`.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    count: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(bins: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; bins],
            sum_sq: vec![0.0; bins],
        }
    }

    pub fn add(&mut self, values: impl IntoIterator<Item = f64>) {
        for ((s, q), v) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(values) {
            *s += v;
            *q += v * v;
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        for (s, o) in self.sum.iter_mut().zip(&other.sum) {
            *s += o;
        }
        for (s, o) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *s += o;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Standard error of each mean, from the unbiased sample variance.
    pub fn standard_error(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(&s, &q)| {
                let mean = s / n;
                let var = ((q - n * mean * mean) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
            .collect()
    }
}

/// Samples per parallel work unit; units are reduced in index order so the
/// result does not depend on the thread count.
pub const MC_CHUNK: usize = 1024;

/// Sums `per_sample(i)` for `i in 0..n` into per-bin moments, in parallel
/// over fixed chunks.
pub fn monte_carlo_moments<F>(n: usize, bins: usize, per_sample: F) -> Result<MomentAccumulator>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    let chunks = n.div_ceil(MC_CHUNK);
    let parts: Vec<MomentAccumulator> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = MomentAccumulator::new(bins);
            for i in c * MC_CHUNK..((c + 1) * MC_CHUNK).min(n) {
                acc.add(per_sample(i as u64)?);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = MomentAccumulator::new(bins);
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

/// Monte Carlo estimate of the per-bin variance `E|u_t|^2` of corrupted
/// synthetic Gaussian data against the exact schedule value
/// `psi d + 1 - psi` (which is `d^(1-t/T)` for `t < T`).
pub fn check_forward_covariance<T: Real>(schedule: &FilterSchedule<T>, t: usize, n: usize, seed: u64) -> Result<McReport> {
    let target: Vec<f64> = schedule.forward_variance(t)?.iter().map(|v| v.as_f64()).collect();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let source = GaussianSource::new(schedule, 1);
    let fft = schedule.fft();
    let shape = (1, schedule.height(), schedule.width());
    let acc = monte_carlo_moments(n, schedule.bins(), |i| {
        let mut rng = stream(seed, i);
        let u0 = source.sample_frequency(&mut rng);
        let eps = ImageTensor::standard_normal(shape, &mut rng);
        let u_t = corrupt_frequency(&u0, &fft.forward(&eps)?, t, schedule)?;
        Ok(u_t.as_slice().iter().map(|v| v.norm_sqr().as_f64()).collect())
    })?;
    Ok(McReport::new(
        format!("forward variance t={t}"),
        acc.mean(),
        acc.standard_error(),
        target,
    ))
}

/// How `psi_t` moves as the frequency norm grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrequencyTrend {
    /// Non-decreasing, strictly wherever `d` strictly decreases: low
    /// frequencies lose their signal first.
    Increasing,
    /// Non-increasing, strictly wherever `d` strictly increases.
    Decreasing,
    Flat,
    Mixed,
}

/// Distinct frequency norms in increasing order with one representative
/// bin each. `d` depends only on the norm, so one bin speaks for all.
fn frequency_levels<T: Real>(schedule: &FilterSchedule<T>) -> Vec<usize> {
    let f = schedule.frequencies();
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f[a].partial_cmp(&f[b]).unwrap());
    let mut levels: Vec<usize> = Vec::new();
    for k in order {
        match levels.last() {
            Some(&last) if (f[k] - f[last]).abs() <= T::tol(1e-12) * f[k].max(T::one()) => {}
            _ => levels.push(k),
        }
    }
    levels
}

pub fn frequency_trend<T: Real>(schedule: &FilterSchedule<T>, t: usize) -> Result<FrequencyTrend> {
    if t == 0 || t >= schedule.steps() {
        return Err(Error::out_of_range("t", t as f64, format!("(0, {})", schedule.steps())));
    }
    let psi = schedule.psi(t)?;
    let d = schedule.d_values();
    let levels = frequency_levels(schedule);
    let (mut up, mut down) = (true, true);
    let mut flat = true;
    for pair in levels.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if psi[b] < psi[a] || (d[b] < d[a] && !(psi[b] > psi[a])) {
            up = false;
        }
        if psi[b] > psi[a] || (d[b] > d[a] && !(psi[b] < psi[a])) {
            down = false;
        }
        if psi[b] != psi[a] {
            flat = false;
        }
    }
    Ok(if flat {
        FrequencyTrend::Flat
    } else if up {
        FrequencyTrend::Increasing
    } else if down {
        FrequencyTrend::Decreasing
    } else {
        FrequencyTrend::Mixed
    })
}

/// True iff `psi_t` is non-decreasing along increasing frequency norm and
/// strictly increasing wherever `d` strictly decreases.
pub fn check_frequency_ordering<T: Real>(schedule: &FilterSchedule<T>, t: usize) -> Result<bool> {
    Ok(matches!(
        frequency_trend(schedule, t)?,
        FrequencyTrend::Increasing | FrequencyTrend::Flat
    ))
}

/// A curve of per-bin variances `v(d, t)` from `v(d, 0) = d` to
/// `v(d, 1) = 1`.
#[derive(Clone)]
pub enum ScheduleCurve<T> {
    /// `d^(1-t)`
    Geodesic,
    /// `(1-t) d + t`
    Linear,
    /// `a d + 1 - a` with `a = cos^2(pi t / 2)`, the same for every bin.
    Cosine,
    Custom(String, Arc<dyn Fn(T, T) -> T + Send + Sync>),
}

impl<T: Real> ScheduleCurve<T> {
    pub fn name(&self) -> &str {
        match self {
            ScheduleCurve::Geodesic => "geodesic",
            ScheduleCurve::Linear => "linear",
            ScheduleCurve::Cosine => "cosine",
            ScheduleCurve::Custom(name, _) => name,
        }
    }

    pub fn variance(&self, d: T, t: T) -> T {
        match self {
            ScheduleCurve::Geodesic => d.powf(T::one() - t),
            ScheduleCurve::Linear => (T::one() - t) * d + t,
            ScheduleCurve::Cosine => {
                let a = (T::FRAC_PI_2() * t).cos().powi(2);
                a * d + T::one() - a
            }
            ScheduleCurve::Custom(_, f) => f(d, t),
        }
    }
}

impl<T> fmt::Debug for ScheduleCurve<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleCurve::Geodesic => f.write_str("Geodesic"),
            ScheduleCurve::Linear => f.write_str("Linear"),
            ScheduleCurve::Cosine => f.write_str("Cosine"),
            ScheduleCurve::Custom(name, _) => write!(f, "Custom({name})"),
        }
    }
}

/// Fisher length of a diagonal covariance curve on `[0, 1]`:
/// `(1/sqrt 2) integral sqrt(sum_bins (d/dt ln v)^2) dt`, midpoint rule with
/// the log-derivative differenced across each cell.
pub fn diag_path_length<T: Real>(curve: &ScheduleCurve<T>, d_values: &[T], n_steps: usize) -> Result<T> {
    if n_steps < 2 {
        return Err(Error::InvalidArgument(format!("need n_steps >= 2, got {n_steps}")));
    }
    let h = T::from_usize_lossy(n_steps).recip();
    let log_at = |t: T| -> Result<Vec<T>> {
        d_values
            .iter()
            .map(|&d| {
                let v = curve.variance(d, t);
                if !(v > T::zero()) {
                    return Err(Error::NotPositiveDefinite);
                }
                Ok(v.ln())
            })
            .collect()
    };
    let mut left = log_at(T::zero())?;
    let mut total = T::zero();
    for i in 1..=n_steps {
        let right = log_at(if i == n_steps { T::one() } else { h * T::from_usize_lossy(i) })?;
        let sq = left
            .iter()
            .zip(&right)
            .fold(T::zero(), |acc, (&a, &b)| acc + (b - a) * (b - a));
        total += sq.sqrt();
        left = right;
    }
    Ok(total / T::SQRT_2())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLengthRow {
    pub curve: String,
    pub length: f64,
}

/// Fisher length of each curve for the model spectrum of `fit` on an
/// `H x W` grid; the geodesic is always the first row.
pub fn compare_path_lengths<T: Real>(
    fit: &SpectrumFit<T>,
    height: usize,
    width: usize,
    alternatives: &[ScheduleCurve<T>],
    n_steps: usize,
) -> Result<Vec<PathLengthRow>> {
    let d = fit.grid_power(height, width)?;
    compare_path_lengths_for(&d, alternatives, n_steps)
}

pub fn compare_path_lengths_for<T: Real>(
    d_values: &[T],
    alternatives: &[ScheduleCurve<T>],
    n_steps: usize,
) -> Result<Vec<PathLengthRow>> {
    let mut curves = vec![ScheduleCurve::Geodesic];
    curves.extend(alternatives.iter().filter(|c| !matches!(c, ScheduleCurve::Geodesic)).cloned());
    curves
        .iter()
        .map(|c| {
            Ok(PathLengthRow {
                curve: c.name().to_string(),
                length: diag_path_length(c, d_values, n_steps)?.as_f64(),
            })
        })
        .collect()
}

/// Expected training gradient of the linear model's step-`t` weights on
/// data with spectrum `d`: `(2 C / N) (w v - sqrt(1 - psi))` per bin, where
/// `v = psi d + 1 - psi` and `N = C H W`.
pub fn expected_linear_gradient<T: Real>(model: &LinearDenoiser<T>, schedule: &FilterSchedule<T>, t: usize) -> Result<Vec<T>> {
    let w = model.weights(t)?;
    let psi = schedule.psi(t)?;
    let scale = T::lit(2.0) / T::from_usize_lossy(schedule.bins());
    Ok(w.iter()
        .zip(psi)
        .zip(schedule.d_values())
        .map(|((&w, &p), &d)| scale * (w * (d * p + (T::one() - p)) - (T::one() - p).sqrt()))
        .collect())
}

/// Geodesic checks on one random SPD pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicCheck {
    pub seed: u64,
    pub dim: usize,
    /// Largest ODE residual at `t in {0.25, 0.5, 0.75}`, step `h`.
    pub residual: f64,
    /// The same at `h / 2`.
    pub residual_half_step: f64,
    pub straight_line_residual: f64,
    pub boundary_error: f64,
    pub length: f64,
    pub straight_line_length: f64,
    pub pass: bool,
}

pub const GEODESIC_RESIDUAL_TOL: f64 = 1e-5;
pub const BOUNDARY_TOL: f64 = 1e-8;
/// Eigenvalues of the random endpoints lie in `[e^-1, e]`.
pub const RANDOM_SPD_LOG_SPREAD: f64 = 1.0;

pub fn check_geodesic(seed: u64, dim: usize, h: f64, n_steps: usize) -> Result<GeodesicCheck> {
    let mut rng = seeded(seed);
    let s0 = random_spd::<f64, _>(dim, RANDOM_SPD_LOG_SPREAD, &mut rng);
    let s1 = random_spd::<f64, _>(dim, RANDOM_SPD_LOG_SPREAD, &mut rng);
    let path = GeodesicPath::new(s0.clone(), s1.clone())?;
    let curve = |t: f64| path.point(t);
    let line = |t: f64| straight_line(&s0, &s1, t);
    let times = [0.25, 0.5, 0.75];
    let worst = |f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        times.iter().try_fold(0.0f64, |acc, &t| Ok(acc.max(f(t)?)))
    };
    let residual = worst(&|t| geodesic_ode_residual(curve, t, h))?;
    let residual_half_step = worst(&|t| geodesic_ode_residual(curve, t, h / 2.0))?;
    let straight_line_residual = worst(&|t| geodesic_ode_residual(line, t, h))?;
    let boundary_error = path
        .point(0.0)?
        .as_matrix()
        .relative_error(s0.as_matrix())
        .max(path.point(1.0)?.as_matrix().relative_error(s1.as_matrix()));
    let length = path_length(curve, 0.0, 1.0, n_steps)?;
    let straight_line_length = path_length(line, 0.0, 1.0, n_steps)?;
    let pass = residual <= GEODESIC_RESIDUAL_TOL && boundary_error <= BOUNDARY_TOL && length <= straight_line_length;
    Ok(GeodesicCheck {
        seed,
        dim,
        residual,
        residual_half_step,
        straight_line_residual,
        boundary_error,
        length,
        straight_line_length,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::build_schedule;

    fn schedule(m: f64, steps: usize) -> FilterSchedule<f64> {
        build_schedule(&SpectrumFit::new(7.7, -0.3, m), 8, 8, steps).unwrap()
    }

    #[test]
    fn random_spd_has_requested_spectrum() {
        let mut rng = seeded(1);
        for dim in 1..=6 {
            let a = random_spd::<f64, _>(dim, 1.0, &mut rng);
            assert!(a.as_matrix().asymmetry() == 0.0);
            let eig = a.eigh().unwrap();
            assert!(eig.eigvals.iter().all(|&l| l >= (-1.0f64).exp() - 1e-12 && l <= 1.0f64.exp() + 1e-12));
        }
    }

    #[test]
    fn source_spectrum_and_symmetry() {
        let sched = schedule(2.0, 10);
        let source = GaussianSource::new(&sched, 2);
        let mut rng = seeded(2);
        let u = source.sample_frequency(&mut rng);
        assert!(u.hermitian_defect() == 0.0);
        let n = 20_000;
        let acc = monte_carlo_moments(n, 64, |i| {
            let u = source.sample_frequency(&mut stream(3, i));
            Ok(u.channel(0).iter().map(|v| v.norm_sqr()).collect())
        })
        .unwrap();
        let report = McReport::new("source variance", acc.mean(), acc.standard_error(), sched.d_values().to_vec());
        assert!(report.max_deviation_se < 4.5, "{report}");
    }

    #[test]
    fn mc_reports_are_reproducible() {
        let sched = schedule(2.0, 20);
        let a = check_forward_covariance(&sched, 10, 3000, 5).unwrap();
        let b = check_forward_covariance(&sched, 10, 3000, 5).unwrap();
        assert_eq!(a, b);
        let json = a.to_json().unwrap();
        let back: McReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn forward_covariance_boundaries() {
        let sched = schedule(2.0, 20);
        let start = check_forward_covariance(&sched, 0, 20_000, 6).unwrap();
        assert_eq!(start.target, sched.d_values().to_vec());
        let end = check_forward_covariance(&sched, 20, 20_000, 7).unwrap();
        assert!(end.target.iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn ordering_examples() {
        for t in 1..50 {
            assert!(check_frequency_ordering(&schedule(2.0, 50), t).unwrap());
            assert_eq!(frequency_trend(&schedule(0.0, 50), t).unwrap(), FrequencyTrend::Flat);
            assert!(check_frequency_ordering(&schedule(0.0, 50), t).unwrap());
            assert_eq!(frequency_trend(&schedule(-2.0, 50), t).unwrap(), FrequencyTrend::Decreasing);
            assert!(!check_frequency_ordering(&schedule(-2.0, 50), t).unwrap());
        }
        assert!(check_frequency_ordering(&schedule(2.0, 50), 0).is_err());
        assert!(check_frequency_ordering(&schedule(2.0, 50), 50).is_err());
    }

    #[test]
    fn path_lengths_on_toys() {
        let toy = [1e-3, 1e3];
        let rows = compare_path_lengths_for(&toy, &[ScheduleCurve::Linear], 1000).unwrap();
        assert_eq!(rows[0].curve, "geodesic");
        assert!(rows[0].length < rows[1].length);
        let expected = (toy.iter().map(|d: &f64| d.ln().powi(2)).sum::<f64>()).sqrt() / 2f64.sqrt();
        assert!((rows[0].length - expected).abs() < 1e-9);

        let single = [0.05];
        let curves = [ScheduleCurve::Linear, ScheduleCurve::Cosine];
        for row in compare_path_lengths_for(&single, &curves, 1000).unwrap() {
            assert!((row.length - 0.05f64.ln().abs() / 2f64.sqrt()).abs() < 1e-6, "{row:?}");
        }
        for row in compare_path_lengths_for(&[1.0; 5], &curves, 100).unwrap() {
            assert!(row.length < 1e-12, "{row:?}");
        }
    }

    #[test]
    fn geodesic_is_shortest_on_model_spectra() {
        let curves = [ScheduleCurve::Linear, ScheduleCurve::Cosine];
        for fit in [SpectrumFit::new(7.7, -0.3, 2.0), SpectrumFit::new(96.79, 0.49, 2.0)] {
            let rows = compare_path_lengths(&fit, 8, 8, &curves, 1000).unwrap();
            assert!(rows[1..].iter().all(|r| r.length > rows[0].length), "{rows:?}");
        }
    }

    #[test]
    fn geodesic_check_runs() {
        let check = check_geodesic(3, 4, 1e-3, 200).unwrap();
        assert!(check.boundary_error < 1e-8);
        assert!(check.residual_half_step < check.residual);
    }
}
