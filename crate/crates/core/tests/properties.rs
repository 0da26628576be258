use proptest::prelude::*;

use spdiff::diffusion::{sample_frequency, SigmaSchedule, SigmaVariant};
use spdiff::rng::seeded;
use spdiff::tensor::Fft2;
use spdiff::verify::{check_forward_covariance, compare_path_lengths_for, random_spd, ScheduleCurve};
use spdiff::{
    build_schedule, check_frequency_ordering, compute_power_spectrum, corrupt, fit_spectrum, path_length,
    FilterSchedule, GaussianOracle, GeodesicPath, ImageTensor, PowerSpectrum, SpdMatrix, SpectrumFit,
};

fn sharpening_fit() -> impl Strategy<Value = SpectrumFit<f64>> {
    (0.5f64..50.0, -0.9f64..2.0, 0.5f64..3.5).prop_map(|(c1, c2, m)| SpectrumFit::new(c1, c2, m))
}

fn any_fit() -> impl Strategy<Value = SpectrumFit<f64>> {
    (0.5f64..50.0, -0.9f64..2.0, -2.0f64..4.0).prop_map(|(c1, c2, m)| SpectrumFit::new(c1, c2, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn geodesic_to_identity_powers_eigenvalues(seed in 0u64..10_000, dim in 1usize..7, t in 0.0f64..1.0) {
        let s0: SpdMatrix<f64> = random_spd(dim, 1.0, &mut seeded(seed));
        let path = GeodesicPath::new(s0.clone(), SpdMatrix::identity(dim)).unwrap();
        let mut got = path.point(t).unwrap().eigh().unwrap().eigvals;
        let mut want: Vec<f64> = s0.eigh().unwrap().eigvals.iter().map(|l| l.powf(1.0 - t)).collect();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-10 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn fisher_length_ignores_reparameterization(seed in 0u64..10_000, dim in 2usize..5) {
        let mut rng = seeded(seed);
        let a: SpdMatrix<f64> = random_spd(dim, 1.0, &mut rng);
        let b: SpdMatrix<f64> = random_spd(dim, 1.0, &mut rng);
        let path = GeodesicPath::new(a, b).unwrap();
        let plain = path_length(|t| path.point(t), 0.0, 1.0, 1000).unwrap();
        let cubed = path_length(|t: f64| path.point(t * t * t), 0.0, 1.0, 1000).unwrap();
        prop_assert!((plain - cubed).abs() <= 1e-4, "{plain} vs {cubed}");
        prop_assert!((plain - path.length()).abs() <= 1e-4);
    }

    #[test]
    fn spectrum_ignores_circular_shifts(seed in 0u64..10_000, dy in 0usize..6, dx in 0usize..6) {
        let shape = (2, 6, 6);
        let img = ImageTensor::<f64>::standard_normal(shape, &mut seeded(seed));
        let shifted = ImageTensor::from_fn(shape, |c, i, j| img.get(c, (i + dy) % 6, (j + dx) % 6));
        let a = compute_power_spectrum(std::slice::from_ref(&img)).unwrap();
        let b = compute_power_spectrum(&[shifted]).unwrap();
        for (x, y) in a.power.iter().zip(&b.power) {
            prop_assert!((x - y).abs() <= 1e-10 * x.max(1.0));
        }
        let energy: f64 = a.power.iter().sum();
        prop_assert!((energy - img.sum_of_squares()).abs() <= 1e-10 * energy);
    }

    #[test]
    fn fixed_m_fit_is_scale_equivariant(fit in sharpening_fit(), k in 0.01f64..100.0, seed in 0u64..1000) {
        // Multiplicative noise keeps the spectrum off the model surface.
        let mut rng = seeded(seed);
        let noise = ImageTensor::<f64>::standard_normal((1, 16, 16), &mut rng);
        let power: Vec<f64> = fit
            .grid_power(16, 16)
            .unwrap()
            .iter()
            .zip(noise.as_slice())
            .map(|(p, z)| p * (0.2 * z).exp())
            .collect();
        let base = PowerSpectrum { channels: 1, height: 16, width: 16, count: 1, power: power.clone() };
        let scaled = PowerSpectrum { power: power.iter().map(|p| p * k).collect(), ..base.clone() };
        let a = fit_spectrum(&base, Some(fit.m)).unwrap();
        let b = fit_spectrum(&scaled, Some(fit.m)).unwrap();
        prop_assert!((b.c1 / (k * a.c1) - 1.0).abs() <= 1e-6, "{a:?} {b:?}");
        prop_assert!((b.c2 - a.c2).abs() <= 1e-6);
    }

    #[test]
    fn dc_bin_does_not_move_the_fit(fit in sharpening_fit(), dc in 1e-3f64..1e3) {
        let mut power = fit.grid_power(8, 8).unwrap();
        let base = PowerSpectrum { channels: 1, height: 8, width: 8, count: 1, power: power.clone() };
        power[0] = dc;
        let moved = PowerSpectrum { power, ..base.clone() };
        let a = fit_spectrum(&base, None).unwrap();
        let b = fit_spectrum(&moved, None).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn schedule_is_bounded_monotone_and_composable(fit in any_fit(), steps in 2usize..60) {
        let sched = build_schedule(&fit, 8, 8, steps).unwrap();
        sched.check_invariants().unwrap();
        for t in 1..=steps {
            let (now, before) = (sched.psi(t).unwrap(), sched.psi(t - 1).unwrap());
            for k in 0..sched.bins() {
                prop_assert!(now[k] > 0.0 && now[k] < before[k] && before[k] <= 1.0);
                for s in t..=steps {
                    let later = sched.psi_bin(s, k).unwrap();
                    let composed = now[k].sqrt() * (later / now[k]).sqrt();
                    prop_assert!((composed - later.sqrt()).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn sharpening_fits_dissipate_low_frequencies_first(fit in sharpening_fit(), steps in 2usize..60) {
        let sched = build_schedule(&fit, 8, 8, steps).unwrap();
        let f = sched.frequencies();
        let mut order: Vec<usize> = (0..f.len()).filter(|&k| f[k] > 0.0).collect();
        order.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
        for t in 1..steps {
            let psi = sched.psi(t).unwrap();
            for pair in order.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if f[b] - f[a] > 1e-9 {
                    prop_assert!(psi[b] > psi[a], "t={t} f={} -> {}", f[a], f[b]);
                }
            }
            // The DC value c1/|c2|^m sits below d(1) once c2 < -1/2.
            if fit.c2 >= -0.5 {
                prop_assert!(check_frequency_ordering(&sched, t).unwrap());
            }
        }
    }

    #[test]
    fn corruption_is_real(fit in any_fit(), steps in 1usize..30, seed in 0u64..10_000) {
        let sched = build_schedule(&fit, 8, 8, steps).unwrap();
        let x0 = ImageTensor::<f64>::standard_normal((3, 8, 8), &mut seeded(seed));
        let t = (seed as usize) % (steps + 1);
        let (x_t, eps) = corrupt(&x0, t, &sched, seed).unwrap();
        let fft = Fft2::new(8, 8);
        let u = fft.forward(&x_t).unwrap();
        let (_, residue) = fft.inverse_with_residue(&u).unwrap();
        prop_assert!(residue <= 1e-10);
        prop_assert_eq!(x_t.shape(), x0.shape());
        prop_assert_eq!(eps.shape(), x0.shape());
    }

    #[test]
    fn beta_tilde_never_exceeds_beta(fit in any_fit(), steps in 1usize..80) {
        let sched = build_schedule(&fit, 8, 8, steps).unwrap();
        let beta = SigmaSchedule::new(&sched, SigmaVariant::Beta).unwrap();
        let tilde = SigmaSchedule::new(&sched, SigmaVariant::BetaTilde).unwrap();
        for t in 1..=steps {
            for (a, b) in tilde.values(t).unwrap().iter().zip(beta.values(t).unwrap()) {
                prop_assert!(*a <= *b && *a >= 0.0 && *b < 1.0);
            }
        }
    }

    #[test]
    fn geodesic_is_the_shortest_schedule(fit in sharpening_fit()) {
        let sched = build_schedule(&fit, 8, 8, 10).unwrap();
        let rows = compare_path_lengths_for(
            sched.d_values(),
            &[ScheduleCurve::Linear, ScheduleCurve::Cosine],
            1000,
        )
        .unwrap();
        prop_assert_eq!(rows[0].curve.as_str(), "geodesic");
        for row in &rows[1..] {
            prop_assert!(rows[0].length < row.length, "{rows:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn samples_keep_shape_and_stay_real(steps in 1usize..6, channels in 1usize..3, seed in 0u64..1000) {
        let sched = FilterSchedule::from_power(SpectrumFit::new(7.7, -0.3, 2.0).grid_power(4, 6).unwrap(), 4, 6, steps).unwrap();
        let oracle = GaussianOracle::new(&sched);
        let out = sample_frequency(&sched, &oracle, SigmaVariant::BetaTilde, seed, 3, channels).unwrap();
        prop_assert_eq!(out.len(), 3);
        for u in &out {
            prop_assert_eq!(u.shape(), (channels, 4, 6));
            let (_, residue) = sched.fft().inverse_with_residue(u).unwrap();
            prop_assert!(residue <= 1e-8);
        }
    }

    #[test]
    fn monte_carlo_reports_are_reproducible(seed in 0u64..1000, t in 0usize..=8) {
        let sched = build_schedule(&SpectrumFit::new(7.7, -0.3, 2.0), 8, 8, 8).unwrap();
        let a = check_forward_covariance(&sched, t, 2000, seed).unwrap();
        let b = check_forward_covariance(&sched, t, 2000, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
