//! Training (noise-prediction regression at a random step) and ancestral
//! sampling through the frequency-space reverse process.

use std::io::Write as _;
use std::path::Path;

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corruption::{check_grid, corrupt_frequency, FilterSchedule};
use crate::error::{Error, Result};
use crate::io::{decode_tensor, encode_tensor};
use crate::rng::stream;
use crate::scalar::Real;
use crate::tensor::{mirror_bin, Fft2, FreqTensor, ImageTensor};

/// Noise predictor `eps_hat = g(x_t, t)`.
pub trait Denoiser<T: Real>: Sync {
    /// Predicted pixel-space noise for `x_t` at step `t`.
    fn predict(&self, x_t: &ImageTensor<T>, t: usize) -> Result<ImageTensor<T>>;

    /// Same prediction for the DFT `u_t` of `x_t`, returned as a DFT.
    fn predict_frequency(&self, u_t: &FreqTensor<T>, t: usize, fft: &Fft2<T>) -> Result<FreqTensor<T>> {
        let x_t = fft.inverse(u_t)?;
        fft.forward(&self.predict(&x_t, t)?)
    }
}

fn apply_bin_weights<T: Real>(u: &FreqTensor<T>, weights: &[T]) -> FreqTensor<T> {
    let mut out = u.clone();
    out.scale_bins(weights);
    out
}

/// Exact posterior-mean noise predictor for Gaussian data whose spectrum
/// is the schedule's `d`.
#[derive(Debug, Clone)]
pub struct GaussianOracle<T: Real> {
    schedule: FilterSchedule<T>,
}

impl<T: Real> GaussianOracle<T> {
    pub fn new(schedule: &FilterSchedule<T>) -> Self {
        Self {
            schedule: schedule.clone(),
        }
    }

    /// Per-bin `sqrt(1 - psi) / (psi d + 1 - psi)`: the regression slope of
    /// the noise DFT on `u_t`.
    pub fn weights(&self, t: usize) -> Result<Vec<T>> {
        oracle_weights(&self.schedule, t)
    }
}

pub fn oracle_weights<T: Real>(schedule: &FilterSchedule<T>, t: usize) -> Result<Vec<T>> {
    let psi = schedule.psi(t)?;
    Ok(psi
        .iter()
        .zip(schedule.d_values())
        .map(|(&p, &d)| (T::one() - p).sqrt() / (d * p + (T::one() - p)))
        .collect())
}

impl<T: Real> Denoiser<T> for GaussianOracle<T> {
    fn predict(&self, x_t: &ImageTensor<T>, t: usize) -> Result<ImageTensor<T>> {
        let fft = self.schedule.fft();
        let u = fft.forward(x_t)?;
        fft.inverse(&self.predict_frequency(&u, t, fft)?)
    }

    fn predict_frequency(&self, u_t: &FreqTensor<T>, t: usize, _fft: &Fft2<T>) -> Result<FreqTensor<T>> {
        check_grid(u_t.shape(), &self.schedule)?;
        Ok(apply_bin_weights(u_t, &self.weights(t)?))
    }
}

pub const LINEAR_MODEL_NAME: &str = "linear-frequency";

/// Trainable `xi_hat = w_t(bin) * u_t` with one weight per step and bin,
/// shared by all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDenoiser<T: Real> {
    steps: usize,
    height: usize,
    width: usize,
    channels: usize,
    // t-major: row t - 1 holds step t.
    weights: Vec<T>,
    fft: Fft2Cache<T>,
}

// Fft2 has no PartialEq; compare models by parameters only.
#[derive(Debug, Clone)]
struct Fft2Cache<T: Real>(Fft2<T>);

impl<T: Real> PartialEq for Fft2Cache<T> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamsHeader {
    #[serde(rename = "T")]
    steps: usize,
    #[serde(rename = "H")]
    height: usize,
    #[serde(rename = "W")]
    width: usize,
    #[serde(rename = "C")]
    channels: usize,
    model: String,
}

impl<T: Real> LinearDenoiser<T> {
    pub fn zeros(steps: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            steps,
            height,
            width,
            channels,
            weights: vec![T::zero(); steps * height * width],
            fft: Fft2Cache(Fft2::new(height, width)),
        }
    }

    /// Initialized at the Gaussian-optimal coefficients.
    pub fn from_oracle(schedule: &FilterSchedule<T>, channels: usize) -> Result<Self> {
        let mut model = Self::zeros(schedule.steps(), schedule.height(), schedule.width(), channels);
        for t in 1..=schedule.steps() {
            let w = oracle_weights(schedule, t)?;
            model.weights_mut(t)?.copy_from_slice(&w);
        }
        Ok(model)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bins(&self) -> usize {
        self.height * self.width
    }

    pub fn all_weights(&self) -> &[T] {
        &self.weights
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::out_of_range("t", t as f64, format!("[1, {}]", self.steps)));
        }
        Ok(())
    }

    pub fn weights(&self, t: usize) -> Result<&[T]> {
        self.check_t(t)?;
        let n = self.bins();
        Ok(&self.weights[(t - 1) * n..t * n])
    }

    pub fn weights_mut(&mut self, t: usize) -> Result<&mut [T]> {
        self.check_t(t)?;
        let n = self.bins();
        Ok(&mut self.weights[(t - 1) * n..t * n])
    }

    /// Checks that this model fits `schedule` and images with `channels`.
    pub fn check_compatible(&self, schedule: &FilterSchedule<T>) -> Result<()> {
        if self.steps != schedule.steps() || self.height != schedule.height() || self.width != schedule.width() {
            return Err(Error::InvalidArgument(format!(
                "model is T={} {}x{}, filter is T={} {}x{}",
                self.steps,
                self.height,
                self.width,
                schedule.steps(),
                schedule.height(),
                schedule.width()
            )));
        }
        Ok(())
    }

    /// JSON header line followed by the weights as a tensor payload with
    /// dimensions `(T, H, W)`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = ParamsHeader {
            steps: self.steps,
            height: self.height,
            width: self.width,
            channels: self.channels,
            model: LINEAR_MODEL_NAME.into(),
        };
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        let payload = ImageTensor::new(self.steps, self.height, self.width, self.weights.clone())?;
        out.extend_from_slice(&encode_tensor(&payload));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("parameters file has no header line".into()))?;
        let header: ParamsHeader = serde_json::from_slice(&bytes[..split])?;
        if header.model != LINEAR_MODEL_NAME {
            return Err(Error::Format(format!("unknown model {:?}", header.model)));
        }
        let payload: ImageTensor<T> = decode_tensor(&bytes[split + 1..])?;
        if payload.shape() != (header.steps, header.height, header.width) {
            return Err(Error::Format(format!(
                "weights are {:?}, header says {:?}",
                payload.shape(),
                (header.steps, header.height, header.width)
            )));
        }
        let mut model = Self::zeros(header.steps, header.height, header.width, header.channels);
        model.weights = payload.into_vec();
        Ok(model)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

impl<T: Real> Denoiser<T> for LinearDenoiser<T> {
    fn predict(&self, x_t: &ImageTensor<T>, t: usize) -> Result<ImageTensor<T>> {
        let fft = &self.fft.0;
        let u = fft.forward(x_t)?;
        fft.inverse(&self.predict_frequency(&u, t, fft)?)
    }

    fn predict_frequency(&self, u_t: &FreqTensor<T>, t: usize, _fft: &Fft2<T>) -> Result<FreqTensor<T>> {
        let (_, h, w) = u_t.shape();
        if h != self.height || w != self.width {
            return Err(Error::ShapeMismatch {
                expected: (u_t.shape().0, self.height, self.width),
                found: u_t.shape(),
            });
        }
        Ok(apply_bin_weights(u_t, self.weights(t)?))
    }
}

/// Which reverse-step variance to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaVariant {
    /// `1 - psi_t / psi_{t-1}`
    Beta,
    /// `(1 - psi_{t-1}) / (1 - psi_t) * (1 - psi_t / psi_{t-1})`
    BetaTilde,
}

impl SigmaVariant {
    /// `Beta` for long chains (`T > 300`), `BetaTilde` otherwise.
    pub fn for_steps(steps: usize) -> Self {
        if steps > 300 {
            SigmaVariant::Beta
        } else {
            SigmaVariant::BetaTilde
        }
    }
}

impl std::str::FromStr for SigmaVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(SigmaVariant::Beta),
            "beta-tilde" => Ok(SigmaVariant::BetaTilde),
            other => Err(Error::InvalidArgument(format!("unknown sigma variant {other:?}"))),
        }
    }
}

/// Per-step, per-bin reverse noise variances for one schedule.
#[derive(Debug, Clone)]
pub struct SigmaSchedule<T> {
    variant: SigmaVariant,
    steps: usize,
    bins: usize,
    values: Vec<T>,
}

impl<T: Real> SigmaSchedule<T> {
    pub fn new(schedule: &FilterSchedule<T>, variant: SigmaVariant) -> Result<Self> {
        let steps = schedule.steps();
        let mut values = Vec::with_capacity(steps * schedule.bins());
        for t in 1..=steps {
            let (now, before) = (schedule.psi(t)?, schedule.psi(t - 1)?);
            for (&p, &q) in now.iter().zip(before) {
                let beta = T::one() - p / q;
                values.push(match variant {
                    SigmaVariant::Beta => beta,
                    SigmaVariant::BetaTilde => (T::one() - q) / (T::one() - p) * beta,
                });
            }
        }
        Ok(Self {
            variant,
            steps,
            bins: schedule.bins(),
            values,
        })
    }

    pub fn variant(&self) -> SigmaVariant {
        self.variant
    }

    /// Variance of every bin at step `t` in `1..=T`.
    pub fn values(&self, t: usize) -> Result<&[T]> {
        if t == 0 || t > self.steps {
            return Err(Error::out_of_range("t", t as f64, format!("[1, {}]", self.steps)));
        }
        Ok(&self.values[(t - 1) * self.bins..t * self.bins])
    }
}

/// Mean squared error over every element.
pub fn simple_loss<T: Real>(eps_hat: &ImageTensor<T>, eps: &ImageTensor<T>) -> Result<T> {
    if eps_hat.shape() != eps.shape() {
        return Err(Error::ShapeMismatch {
            expected: eps.shape(),
            found: eps_hat.shape(),
        });
    }
    let total = eps_hat
        .as_slice()
        .iter()
        .zip(eps.as_slice())
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    Ok(total / T::from_usize_lossy(eps.len()))
}

/// `u_{t-1}` from `u_t`, the predicted noise DFT `xi_hat`, and optional
/// frequency-space noise `zeta`; all coefficients are bin-wise.
pub fn reverse_step_frequency<T: Real>(
    u_t: &FreqTensor<T>,
    t: usize,
    xi_hat: &FreqTensor<T>,
    schedule: &FilterSchedule<T>,
    sigma: &SigmaSchedule<T>,
    zeta: Option<&FreqTensor<T>>,
) -> Result<FreqTensor<T>> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::out_of_range("t", t as f64, format!("[1, {}]", schedule.steps())));
    }
    check_grid(u_t.shape(), schedule)?;
    for other in std::iter::once(xi_hat).chain(zeta) {
        if other.shape() != u_t.shape() {
            return Err(Error::ShapeMismatch {
                expected: u_t.shape(),
                found: other.shape(),
            });
        }
    }
    let (now, before) = (schedule.psi(t)?, schedule.psi(t - 1)?);
    let var = sigma.values(t)?;
    let n = now.len();
    let coeffs: Vec<(T, T, T)> = (0..n)
        .map(|k| {
            let (p, q) = (now[k], before[k]);
            let c = (q / p).sqrt();
            let noise = c * (T::one() - p / q) / (T::one() - p).sqrt();
            (c, noise, var[k].sqrt())
        })
        .collect();
    let zero = Complex::new(T::zero(), T::zero());
    let data: Vec<Complex<T>> = (0..u_t.as_slice().len())
        .map(|idx| {
            let (c, noise, sd) = coeffs[idx % n];
            let z = zeta.map_or(zero, |z| z.as_slice()[idx]);
            u_t.as_slice()[idx].scale(c) - xi_hat.as_slice()[idx].scale(noise) + z.scale(sd)
        })
        .collect();
    let (ch, h, w) = u_t.shape();
    FreqTensor::new(ch, h, w, data)
}

/// Reverse step with a pixel-space noise prediction and pixel-space noise
/// `z` (`None` for zero).
pub fn reverse_step<T: Real>(
    u_t: &FreqTensor<T>,
    t: usize,
    eps_hat: &ImageTensor<T>,
    schedule: &FilterSchedule<T>,
    sigma: &SigmaSchedule<T>,
    z: Option<&ImageTensor<T>>,
) -> Result<FreqTensor<T>> {
    let fft = schedule.fft();
    let xi_hat = fft.forward(eps_hat)?;
    let zeta = z.map(|z| fft.forward(z)).transpose()?;
    reverse_step_frequency(u_t, t, &xi_hat, schedule, sigma, zeta.as_ref())
}

/// Runs the reverse chain from `x_T ~ N(0, I)` for one sample; returns the
/// final DFT `u_0`. Noise is drawn in pixel space, none at `t = 1`.
pub fn sample_one_frequency<T: Real, D: Denoiser<T> + ?Sized, R: Rng + ?Sized>(
    schedule: &FilterSchedule<T>,
    denoiser: &D,
    sigma: &SigmaSchedule<T>,
    channels: usize,
    rng: &mut R,
) -> Result<FreqTensor<T>> {
    let fft = schedule.fft();
    let shape = (channels, schedule.height(), schedule.width());
    let mut u = fft.forward(&ImageTensor::standard_normal(shape, rng))?;
    for t in (1..=schedule.steps()).rev() {
        let xi_hat = denoiser.predict_frequency(&u, t, fft)?;
        let zeta = if t > 1 {
            Some(fft.forward(&ImageTensor::standard_normal(shape, rng))?)
        } else {
            None
        };
        u = reverse_step_frequency(&u, t, &xi_hat, schedule, sigma, zeta.as_ref())?;
    }
    Ok(u)
}

/// `n` independent reverse chains in frequency space; sample `i` uses the
/// stream `(seed, i)`.
pub fn sample_frequency<T: Real, D: Denoiser<T> + ?Sized>(
    schedule: &FilterSchedule<T>,
    denoiser: &D,
    variant: SigmaVariant,
    seed: u64,
    n: usize,
    channels: usize,
) -> Result<Vec<FreqTensor<T>>> {
    let sigma = SigmaSchedule::new(schedule, variant)?;
    (0..n)
        .into_par_iter()
        .map(|i| sample_one_frequency(schedule, denoiser, &sigma, channels, &mut stream(seed, i as u64)))
        .collect()
}

/// `n` generated images.
pub fn sample<T: Real, D: Denoiser<T> + ?Sized>(
    schedule: &FilterSchedule<T>,
    denoiser: &D,
    variant: SigmaVariant,
    seed: u64,
    n: usize,
    channels: usize,
) -> Result<Vec<ImageTensor<T>>> {
    let fft = schedule.fft();
    sample_frequency(schedule, denoiser, variant, seed, n, channels)?
        .par_iter()
        .map(|u| fft.inverse(u))
        .collect()
}

/// Optimizer state for [`LinearDenoiser`] under plain gradient descent.
#[derive(Debug, Clone)]
pub struct TrainState<T: Real> {
    pub model: LinearDenoiser<T>,
    pub step: u64,
    pub learning_rate: T,
    /// Exponential moving average of the batch loss.
    pub running_loss: Option<T>,
    pub last_loss: T,
    /// Euclidean norm of the last parameter change.
    pub last_update_norm: T,
}

pub const DEFAULT_LEARNING_RATE: f64 = 1e-2;
const LOSS_SMOOTHING: f64 = 0.01;

impl<T: Real> TrainState<T> {
    pub fn new(model: LinearDenoiser<T>) -> Self {
        Self {
            model,
            step: 0,
            learning_rate: T::lit(DEFAULT_LEARNING_RATE),
            running_loss: None,
            last_loss: T::zero(),
            last_update_norm: T::zero(),
        }
    }

    pub fn with_learning_rate(mut self, lr: T) -> Self {
        self.learning_rate = lr;
        self
    }
}

/// Gradient of one training example: the sampled step and the loss
/// gradient for that step's weights.
#[derive(Debug, Clone)]
pub struct ExampleGradient<T> {
    pub t: usize,
    pub loss: T,
    pub grad: Vec<T>,
}

/// Draws `t` and the noise, corrupts `x0`, and differentiates the loss of
/// the linear model with respect to the weights of step `t`.
pub fn example_gradient<T: Real, R: Rng + ?Sized>(
    model: &LinearDenoiser<T>,
    x0: &ImageTensor<T>,
    schedule: &FilterSchedule<T>,
    rng: &mut R,
) -> Result<ExampleGradient<T>> {
    model.check_compatible(schedule)?;
    check_grid(x0.shape(), schedule)?;
    let t = rng.random_range(1..=schedule.steps());
    let eps = ImageTensor::standard_normal(x0.shape(), rng);
    let fft = schedule.fft();
    let xi = fft.forward(&eps)?;
    let u_t = corrupt_frequency(&fft.forward(x0)?, &xi, t, schedule)?;
    let w = model.weights(t)?;
    let n = w.len();
    let scale = T::lit(2.0) / T::from_usize_lossy(x0.len());
    let mut grad = vec![T::zero(); n];
    let mut loss = T::zero();
    for (idx, (&u, &e)) in u_t.as_slice().iter().zip(xi.as_slice()).enumerate() {
        let k = idx % n;
        let residual = u.scale(w[k]) - e;
        loss += residual.norm_sqr();
        grad[k] += scale * (residual.conj() * u).re;
    }
    // Mirror bins carry the same information; average away rounding.
    let (h, wd) = (schedule.height(), schedule.width());
    let sym: Vec<T> = (0..n)
        .map(|k| (grad[k] + grad[mirror_bin(k, h, wd)]) * T::lit(0.5))
        .collect();
    Ok(ExampleGradient {
        t,
        loss: loss / T::from_usize_lossy(x0.len()),
        grad: sym,
    })
}

/// One gradient-descent step on the batch-mean loss. Each example draws its
/// own `t` and noise from `rng`, in batch order.
pub fn train_step<T: Real, R: Rng + ?Sized>(
    state: &mut TrainState<T>,
    batch: &[ImageTensor<T>],
    schedule: &FilterSchedule<T>,
    rng: &mut R,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let examples: Vec<ExampleGradient<T>> = batch
        .iter()
        .map(|x0| example_gradient(&state.model, x0, schedule, rng))
        .collect::<Result<_>>()?;
    let count = T::from_usize_lossy(batch.len());
    let loss = examples.iter().fold(T::zero(), |acc, e| acc + e.loss) / count;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(state.step));
    }
    let n = state.model.bins();
    let mut update = vec![T::zero(); state.model.weights.len()];
    for e in &examples {
        let row = &mut update[(e.t - 1) * n..e.t * n];
        for (u, &g) in row.iter_mut().zip(&e.grad) {
            *u += state.learning_rate * g / count;
        }
    }
    let mut norm = T::zero();
    for (w, &u) in state.model.weights.iter_mut().zip(&update) {
        *w -= u;
        norm += u * u;
    }
    state.step += 1;
    state.last_loss = loss;
    state.last_update_norm = norm.sqrt();
    let alpha = T::lit(LOSS_SMOOTHING);
    state.running_loss = Some(match state.running_loss {
        None => loss,
        Some(avg) => avg + alpha * (loss - avg),
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::{build_schedule, EPS_MIN};
    use crate::rng::{seeded, stream};
    use crate::spectrum::SpectrumFit;
    use crate::verify::GaussianSource;

    fn cifar_schedule(steps: usize) -> FilterSchedule<f64> {
        build_schedule(&SpectrumFit::new(7.7, -0.3, 2.0), 8, 8, steps).unwrap()
    }

    #[test]
    fn loss_examples() {
        let mut rng = seeded(1);
        let eps = ImageTensor::<f64>::standard_normal((1, 100, 1000), &mut rng);
        assert_eq!(simple_loss(&eps, &eps).unwrap(), 0.0);
        let zero = ImageTensor::zeros(eps.shape());
        let loss = simple_loss(&zero, &eps).unwrap();
        // Var(e^2) = 2 for a standard normal.
        assert!((loss - 1.0).abs() < 3.0 * (2.0f64 / 1e5).sqrt(), "{loss}");
        let bad = ImageTensor::zeros((1, 10, 10));
        assert!(matches!(simple_loss(&bad, &eps), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = seeded(2);
        let eps = ImageTensor::<f64>::standard_normal((2, 3, 4), &mut rng);
        let hat = ImageTensor::<f64>::standard_normal((2, 3, 4), &mut rng);
        let n = eps.len() as f64;
        let h = 1e-6;
        for k in 0..eps.len() {
            let mut plus = hat.clone();
            let mut minus = hat.clone();
            plus.as_mut_slice()[k] += h;
            minus.as_mut_slice()[k] -= h;
            let numeric = (simple_loss(&plus, &eps).unwrap() - simple_loss(&minus, &eps).unwrap()) / (2.0 * h);
            let analytic = 2.0 * (hat.as_slice()[k] - eps.as_slice()[k]) / n;
            assert!((numeric - analytic).abs() < 1e-6);
        }
    }

    #[test]
    fn model_gradient_matches_finite_differences() {
        let schedule = cifar_schedule(4);
        let source = GaussianSource::new(&schedule, 2);
        let mut model = LinearDenoiser::zeros(4, 8, 8, 2);
        let mut rng = seeded(3);
        for t in 1..=4 {
            let w = model.weights_mut(t).unwrap();
            for k in 0..64 {
                let m = mirror_bin(k, 8, 8);
                if k <= m {
                    w[k] = rng.random_range(0.0..1.0);
                    w[m] = w[k];
                }
            }
        }
        let x0 = source.sample(&mut seeded(4)).unwrap();
        let ex = example_gradient(&model, &x0, &schedule, &mut seeded(5)).unwrap();
        let loss_for = |m: &LinearDenoiser<f64>| example_gradient(m, &x0, &schedule, &mut seeded(5)).unwrap().loss;
        let h = 1e-6;
        for k in [0, 1, 9, 27, 36, 63] {
            let idx = (ex.t - 1) * 64 + k;
            let mut plus = model.clone();
            let mut minus = model.clone();
            plus.weights[idx] += h;
            minus.weights[idx] -= h;
            let numeric = (loss_for(&plus) - loss_for(&minus)) / (2.0 * h);
            assert!((numeric - ex.grad[k]).abs() < 1e-6, "bin {k}: {numeric} vs {}", ex.grad[k]);
        }
    }

    #[test]
    fn oracle_examples() {
        let schedule = cifar_schedule(10);
        let oracle = GaussianOracle::new(&schedule);
        assert!(oracle.weights(0).unwrap().iter().all(|&w| w == 0.0));
        let flat = FilterSchedule::from_power(vec![1.0; 16], 4, 4, 10).unwrap();
        let flat_oracle = GaussianOracle::new(&flat);
        for t in 1..10 {
            let expected = (t as f64 / 10.0).sqrt();
            assert!(flat_oracle.weights(t).unwrap().iter().all(|&w| (w - expected).abs() < 1e-12));
        }
        let x = ImageTensor::standard_normal((3, 8, 8), &mut seeded(6));
        let pixel = oracle.predict(&x, 4).unwrap();
        let fft = schedule.fft();
        let freq = oracle.predict_frequency(&fft.forward(&x).unwrap(), 4, fft).unwrap();
        assert!(pixel.max_abs_diff(&fft.inverse(&freq).unwrap()) < 1e-12);
    }

    #[test]
    fn sigma_schedules() {
        let schedule = cifar_schedule(50);
        let beta = SigmaSchedule::new(&schedule, SigmaVariant::Beta).unwrap();
        let tilde = SigmaSchedule::new(&schedule, SigmaVariant::BetaTilde).unwrap();
        for t in 1..=50 {
            for (k, (&b, &bt)) in beta.values(t).unwrap().iter().zip(tilde.values(t).unwrap()).enumerate() {
                let (p, q) = (schedule.psi_bin(t, k).unwrap(), schedule.psi_bin(t - 1, k).unwrap());
                assert!((b - (1.0 - p / q)).abs() < 1e-15);
                assert!((0.0..1.0).contains(&b) && (0.0..1.0).contains(&bt));
                assert!(bt <= b);
            }
        }
        assert!(tilde.values(1).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(SigmaVariant::for_steps(300), SigmaVariant::BetaTilde);
        assert_eq!(SigmaVariant::for_steps(301), SigmaVariant::Beta);
        assert_eq!("beta-tilde".parse::<SigmaVariant>().unwrap(), SigmaVariant::BetaTilde);
        assert!("sigma".parse::<SigmaVariant>().is_err());
    }

    #[test]
    fn single_step_chain_inverts_the_noise() {
        let d = 0.6;
        let schedule = FilterSchedule::from_power(vec![d; 16], 4, 4, 1).unwrap();
        let sigma = SigmaSchedule::new(&schedule, SigmaVariant::BetaTilde).unwrap();
        let fft = schedule.fft();
        let x = ImageTensor::standard_normal((1, 4, 4), &mut seeded(7));
        let eps = ImageTensor::standard_normal((1, 4, 4), &mut seeded(8));
        let u1 = fft.forward(&x).unwrap();
        let out = reverse_step(&u1, 1, &eps, &schedule, &sigma, None).unwrap();
        let psi1 = EPS_MIN;
        let xi = fft.forward(&eps).unwrap();
        for (o, (&u, &e)) in out.as_slice().iter().zip(u1.as_slice().iter().zip(xi.as_slice())) {
            let expected = (u - e.scale((1.0 - psi1).sqrt())).unscale(psi1.sqrt());
            assert!((o - expected).norm() <= 1e-9 * expected.norm().max(1.0));
            assert!(o.re.is_finite() && o.im.is_finite());
        }
        assert!(matches!(
            reverse_step(&u1, 2, &eps, &schedule, &sigma, None),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_shaped() {
        let schedule = cifar_schedule(20);
        let oracle = GaussianOracle::new(&schedule);
        let a = sample(&schedule, &oracle, SigmaVariant::Beta, 9, 5, 3).unwrap();
        let b = sample(&schedule, &oracle, SigmaVariant::Beta, 9, 5, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.shape() == (3, 8, 8)));
        let u = sample_frequency(&schedule, &oracle, SigmaVariant::BetaTilde, 9, 4, 1).unwrap();
        for v in &u {
            let (_, residue) = schedule.fft().inverse_with_residue(v).unwrap();
            assert!(residue <= 1e-8);
        }
        assert!(sample(&schedule, &oracle, SigmaVariant::Beta, 9, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn params_file_round_trip() {
        let schedule = cifar_schedule(6);
        let model = LinearDenoiser::from_oracle(&schedule, 3).unwrap();
        let bytes = model.to_bytes().unwrap();
        let header_end = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..header_end]).unwrap();
        assert_eq!(header["model"], "linear-frequency");
        assert_eq!(header["T"], 6);
        assert_eq!(header["C"], 3);
        assert_eq!(&bytes[header_end + 1..header_end + 5], b"SPDT");
        let back = LinearDenoiser::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back.channels(), 3);
        for (a, b) in back.all_weights().iter().zip(model.all_weights()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert!(LinearDenoiser::<f64>::from_bytes(b"{\"T\":1}").is_err());
    }

    #[test]
    fn single_step_schedule_always_samples_t_one() {
        let schedule = cifar_schedule(1);
        let model = LinearDenoiser::zeros(1, 8, 8, 1);
        let x0 = ImageTensor::standard_normal((1, 8, 8), &mut seeded(10));
        let mut rng = stream(10, 1);
        for _ in 0..50 {
            assert_eq!(example_gradient(&model, &x0, &schedule, &mut rng).unwrap().t, 1);
        }
    }

    #[test]
    fn train_step_bookkeeping() {
        let schedule = cifar_schedule(5);
        let source = GaussianSource::new(&schedule, 1);
        let mut state = TrainState::new(LinearDenoiser::zeros(5, 8, 8, 1));
        let mut rng = seeded(11);
        for _ in 0..20 {
            let batch = vec![source.sample(&mut rng).unwrap(); 2];
            train_step(&mut state, &batch, &schedule, &mut rng).unwrap();
            assert!(state.last_loss.is_finite());
        }
        assert_eq!(state.step, 20);
        assert!(state.running_loss.is_some());
        assert!(train_step(&mut state, &[], &schedule, &mut rng).is_err());
        // One step, so the second update reuses the blown-up weights.
        let single = cifar_schedule(1);
        let mut blown = TrainState::new(LinearDenoiser::zeros(1, 8, 8, 1)).with_learning_rate(f64::INFINITY);
        let batch = vec![source.sample(&mut rng).unwrap()];
        train_step(&mut blown, &batch, &single, &mut rng).unwrap();
        assert!(matches!(
            train_step(&mut blown, &batch, &single, &mut rng),
            Err(Error::NonFiniteLoss(1))
        ));
    }
}
