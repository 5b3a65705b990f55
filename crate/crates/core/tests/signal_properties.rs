use std::f64::consts::PI;

use cohsync::signal::*;
use cohsync::spectral;
use num_complex::Complex64;
use proptest::prelude::*;

fn direct_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|m| {
            x.iter()
                .enumerate()
                .map(|(k, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (m * k) as f64 / n as f64))
                .sum()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval(f1 in 0.0..5e6f64, sep in 0.0..7e6f64, width in 2e-6..40e-6f64) {
        let p = generate_two_tone(TwoToneSpec::new(f1, f1 + sep).unwrap(), width, 25e6).unwrap();
        let mut spec = p.samples().to_vec();
        spectral::fft(&mut spec);
        let freq: f64 = spec.iter().map(|v| v.norm_sqr()).sum::<f64>() / spec.len() as f64;
        prop_assert!((freq - p.energy()).abs() <= 1e-9 * p.energy());
        prop_assert!(p.energy() > 0.0 && p.energy().is_finite());
    }

    #[test]
    fn tones_sit_on_the_positive_axis(c1 in 20usize..400, gap in 50usize..1500) {
        // whole numbers of cycles keep the spectrum free of leakage
        let n = 4000usize;
        let fs = 25e6;
        let (f1, f2) = (c1 as f64 * fs / n as f64, (c1 + gap) as f64 * fs / n as f64);
        let p = generate_two_tone(TwoToneSpec::new(f1, f2).unwrap(), n as f64 / fs, fs).unwrap();
        let mut spec = p.samples().to_vec();
        spectral::fft(&mut spec);
        let neg: f64 = spec[n / 2..].iter().map(|v| v.norm_sqr()).sum();
        let total: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!(neg <= 1e-20 * total);
    }

    #[test]
    fn crlb_times_root_snr_is_constant(df in 1e3..1e7f64, a in 1.0..1e9f64, b in 1.0..1e9f64) {
        let ka = crlb_sigma_r(df, a).unwrap() * a.sqrt();
        let kb = crlb_sigma_r(df, b).unwrap() * b.sqrt();
        prop_assert!((ka - kb).abs() <= 1e-12 * ka);
    }

    #[test]
    fn crlb_is_monotone(df in 1e3..1e7f64, rho in 1.0..1e9f64, s in 1.001..10.0f64) {
        let base = crlb_sigma_r(df, rho).unwrap();
        prop_assert!(crlb_sigma_r(df * s, rho).unwrap() < base);
        prop_assert!(crlb_sigma_r(df, rho * s).unwrap() < base);
    }

    #[test]
    fn bandwidth_matches_closed_form_for_long_pulses(cycles in 100usize..400, bins_per_cycle in 3usize..12) {
        // symmetric tones at ±δf completing whole cycles in the pulse
        let n = cycles * bins_per_cycle;
        let fs = 25e6;
        let df = fs / bins_per_cycle as f64;
        prop_assume!(df < fs / 2.0);
        let samples = (0..n).map(|k| {
            let w = 2.0 * PI * df * k as f64 / fs;
            Complex64::from_polar(1.0, -w) + Complex64::from_polar(1.0, w)
        }).collect();
        let sig = ComplexBasebandSignal::new(samples, fs).unwrap();
        let b2 = mean_squared_bandwidth(&sig).unwrap();
        let want = (2.0 * PI * df).powi(2);
        prop_assert!((b2 - want).abs() <= 0.01 * want, "ratio {}", b2 / want);
    }

    #[test]
    fn bandwidth_equals_direct_dft_oracle(seed in any::<u64>(), n in 8usize..64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let fs = 1e6;
        let spec = direct_dft(&x);
        let p: Vec<f64> = spec.iter().map(|v| v.norm_sqr()).collect();
        let f: Vec<f64> = (0..n).map(|m| if 2 * m < n { m as f64 } else { m as f64 - n as f64 } * fs / n as f64).collect();
        let total: f64 = p.iter().sum();
        let fc: f64 = f.iter().zip(&p).map(|(f, p)| f * p).sum::<f64>() / total;
        let oracle: f64 = f.iter().zip(&p).map(|(f, p)| (2.0 * PI * (f - fc)).powi(2) * p).sum::<f64>() / total;
        let got = mean_squared_bandwidth(&ComplexBasebandSignal::new(x, fs).unwrap()).unwrap();
        prop_assert!((got - oracle).abs() <= 1e-9 * oracle);
    }
}
