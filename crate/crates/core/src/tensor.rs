//! Pixel-space images, their Hermitian-symmetric DFTs, and the unitary 2D
//! transform between them.

use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `(channels, height, width)`.
pub type Shape = (usize, usize, usize);

/// Real image tensor, `C x H x W`, row-major within each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> ImageTensor<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fill a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros((channels, height, width): Shape) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_fn((channels, height, width): Shape, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for i in 0..height {
                for j in 0..width {
                    data.push(f(c, i, j));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    /// Unit white Gaussian noise.
    pub fn standard_normal<R: Rng + ?Sized>(shape: Shape, rng: &mut R) -> Self {
        Self::from_fn(shape, |_, _, _| T::standard_normal(rng))
    }

    pub fn shape(&self) -> Shape {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> T {
        self.data[(c * self.height + i) * self.width + j]
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn sum_of_squares(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    pub(crate) fn expect_shape(&self, expected: Shape) -> Result<()> {
        if self.shape() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: self.shape(),
            });
        }
        Ok(())
    }
}

/// Complex frequency tensor, `C x H x W`; the DFT of an [`ImageTensor`].
#[derive(Debug, Clone, PartialEq)]
pub struct FreqTensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> FreqTensor<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != channels * height * width || channels * height * width == 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fill a {channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros((channels, height, width): Shape) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![Complex::new(T::zero(), T::zero()); channels * height * width],
        }
    }

    pub fn shape(&self) -> Shape {
        (self.channels, self.height, self.width)
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn bins(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[Complex<T>] {
        let n = self.bins();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> Complex<T> {
        self.data[(c * self.height + i) * self.width + j]
    }

    /// Largest `|u[c,i,j] - conj(u[c,-i,-j])|`.
    pub fn hermitian_defect(&self) -> T {
        let (h, w) = (self.height, self.width);
        let mut worst = T::zero();
        for c in 0..self.channels {
            let ch = self.channel(c);
            for i in 0..h {
                for j in 0..w {
                    let k = i * w + j;
                    let mirror = mirror_bin(k, h, w);
                    worst = worst.max((ch[k] - ch[mirror].conj()).norm());
                }
            }
        }
        worst
    }

    /// `sum |u|^2` over all bins and channels.
    pub fn energy(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, v| acc + v.norm_sqr())
    }

    /// Multiplies every channel bin-wise by a real `H x W` filter.
    pub fn scale_bins(&mut self, filter: &[T]) {
        assert_eq!(filter.len(), self.bins());
        for chunk in self.data.chunks_exact_mut(filter.len()) {
            for (v, &g) in chunk.iter_mut().zip(filter) {
                *v = v.scale(g);
            }
        }
    }
}

/// Flat index of the bin at `(-i mod H, -j mod W)`.
#[inline]
pub fn mirror_bin(k: usize, height: usize, width: usize) -> usize {
    let (i, j) = (k / width, k % width);
    ((height - i) % height) * width + (width - j) % width
}

/// Planned unitary 2D DFT for one `H x W` size. Both directions scale by
/// `1/sqrt(H W)`, so white pixel noise maps to unit-variance frequency noise.
#[derive(Clone)]
pub struct Fft2<T: Real> {
    height: usize,
    width: usize,
    rows_fwd: Arc<dyn Fft<T>>,
    cols_fwd: Arc<dyn Fft<T>>,
    rows_inv: Arc<dyn Fft<T>>,
    cols_inv: Arc<dyn Fft<T>>,
    norm: T,
}

impl<T: Real> std::fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

/// Relative Hermitian defect above which an inverse transform is refused.
const HERMITIAN_TOL: f64 = 1e-8;

impl<T: Real> Fft2<T> {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            rows_fwd: planner.plan_fft_forward(width),
            cols_fwd: planner.plan_fft_forward(height),
            rows_inv: planner.plan_fft_inverse(width),
            cols_inv: planner.plan_fft_inverse(height),
            norm: T::from_usize_lossy(height * width).sqrt().recip(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn transform_plane(&self, plane: &mut [Complex<T>], forward: bool) {
        let (h, w) = (self.height, self.width);
        let (rows, cols) = if forward {
            (&self.rows_fwd, &self.cols_fwd)
        } else {
            (&self.rows_inv, &self.cols_inv)
        };
        let scratch_len = rows
            .get_inplace_scratch_len()
            .max(cols.get_inplace_scratch_len());
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); scratch_len];
        for row in plane.chunks_exact_mut(w) {
            rows.process_with_scratch(row, &mut scratch);
        }
        let mut column = vec![Complex::new(T::zero(), T::zero()); h];
        for j in 0..w {
            for i in 0..h {
                column[i] = plane[i * w + j];
            }
            cols.process_with_scratch(&mut column, &mut scratch);
            for i in 0..h {
                plane[i * w + j] = column[i].scale(self.norm);
            }
        }
    }

    fn check(&self, shape: Shape) -> Result<()> {
        if shape.1 != self.height || shape.2 != self.width {
            return Err(Error::ShapeMismatch {
                expected: (shape.0, self.height, self.width),
                found: shape,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &ImageTensor<T>) -> Result<FreqTensor<T>> {
        self.check(x.shape())?;
        let mut data: Vec<Complex<T>> = x.as_slice().iter().map(|&v| Complex::new(v, T::zero())).collect();
        for plane in data.chunks_exact_mut(self.height * self.width) {
            self.transform_plane(plane, true);
        }
        FreqTensor::new(x.channels(), self.height, self.width, data)
    }

    /// Inverse transform without the Hermitian check; returns the complex
    /// pixel values.
    pub fn inverse_complex(&self, u: &FreqTensor<T>) -> Result<Vec<Complex<T>>> {
        self.check(u.shape())?;
        let mut data = u.as_slice().to_vec();
        for plane in data.chunks_exact_mut(self.height * self.width) {
            self.transform_plane(plane, false);
        }
        Ok(data)
    }

    /// Inverse transform to a real image. Fails with `NonHermitian` if the
    /// input's conjugate-symmetry defect exceeds `1e-8` relative to its
    /// largest coefficient (floored at 1).
    pub fn inverse(&self, u: &FreqTensor<T>) -> Result<ImageTensor<T>> {
        let (img, _) = self.inverse_with_residue(u)?;
        Ok(img)
    }

    /// Like [`Fft2::inverse`], also returning the largest discarded
    /// imaginary part.
    pub fn inverse_with_residue(&self, u: &FreqTensor<T>) -> Result<(ImageTensor<T>, T)> {
        let scale = u
            .as_slice()
            .iter()
            .fold(T::one(), |acc, v| acc.max(v.norm()));
        let defect = u.hermitian_defect();
        if defect > T::tol(HERMITIAN_TOL) * scale {
            return Err(Error::NonHermitian(defect.as_f64()));
        }
        let data = self.inverse_complex(u)?;
        let residue = data.iter().fold(T::zero(), |acc, v| acc.max(v.im.abs()));
        let (c, h, w) = u.shape();
        let img = ImageTensor::new(c, h, w, data.into_iter().map(|v| v.re).collect())?;
        Ok((img, residue))
    }
}

/// Unitary 2D DFT of every channel.
pub fn dft2<T: Real>(x: &ImageTensor<T>) -> Result<FreqTensor<T>> {
    Fft2::new(x.height(), x.width()).forward(x)
}

/// Inverse of [`dft2`]; rejects inputs that are not the DFT of a real image.
pub fn idft2<T: Real>(u: &FreqTensor<T>) -> Result<ImageTensor<T>> {
    let (_, h, w) = u.shape();
    Fft2::new(h, w).inverse(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn constant_image_has_only_dc() {
        let a = 0.37;
        let x = ImageTensor::from_fn((1, 4, 6), |_, _, _| a);
        let u = dft2(&x).unwrap();
        let dc = u.get(0, 0, 0);
        assert!((dc.re - a * 24f64.sqrt()).abs() < 1e-14);
        assert!(dc.im.abs() < 1e-14);
        for (k, v) in u.as_slice().iter().enumerate().skip(1) {
            assert!(v.norm() < 1e-14, "bin {k} = {v}");
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = seeded(1);
        let x = ImageTensor::<f64>::standard_normal((3, 8, 5), &mut rng);
        let u = dft2(&x).unwrap();
        assert!(u.hermitian_defect() < 1e-12);
        let back = idft2(&u).unwrap();
        assert!(back.max_abs_diff(&x) <= 1e-12);
        assert!((u.energy() - x.sum_of_squares()).abs() < 1e-10);
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = seeded(2);
        let (h, w) = (3, 4);
        let x = ImageTensor::<f64>::standard_normal((1, h, w), &mut rng);
        let u = dft2(&x).unwrap();
        let norm = 1.0 / ((h * w) as f64).sqrt();
        for p in 0..h {
            for q in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for i in 0..h {
                    for j in 0..w {
                        let phase = -2.0 * std::f64::consts::PI * ((p * i) as f64 / h as f64 + (q * j) as f64 / w as f64);
                        acc += Complex::from_polar(x.get(0, i, j), phase);
                    }
                }
                assert!((acc * norm - u.get(0, p, q)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_hermitian_input() {
        let mut u = FreqTensor::<f64>::zeros((1, 4, 4));
        u.as_mut_slice()[1] = Complex::new(1.0, 0.0);
        assert!(matches!(idft2(&u), Err(Error::NonHermitian(_))));
        // Conjugate partner restores realness.
        u.as_mut_slice()[3] = Complex::new(1.0, 0.0);
        assert!(idft2(&u).is_ok());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let fft = Fft2::<f64>::new(4, 4);
        let x = ImageTensor::zeros((1, 4, 5));
        assert!(matches!(fft.forward(&x), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn mirror_bin_is_an_involution() {
        for (h, w) in [(4, 4), (5, 3), (1, 6)] {
            for k in 0..h * w {
                assert_eq!(mirror_bin(mirror_bin(k, h, w), h, w), k);
            }
        }
    }

    proptest! {
        #[test]
        fn unitary_round_trip(seed in 0u64..500, h in 1usize..9, w in 1usize..9) {
            let mut rng = seeded(seed);
            let x = ImageTensor::<f64>::standard_normal((2, h, w), &mut rng);
            let fft = Fft2::new(h, w);
            let u = fft.forward(&x).unwrap();
            prop_assert!((u.energy() - x.sum_of_squares()).abs() < 1e-10);
            prop_assert!(fft.inverse(&u).unwrap().max_abs_diff(&x) <= 1e-12);
        }
    }
}
