mod common;

use std::f64::consts::PI;

use evatrap_core::field::*;
use evatrap_core::modes::ModeLabel;
use num_complex::Complex64;
use proptest::prelude::*;

fn pair() -> (std::sync::Arc<evatrap_core::modes::GuidedMode>, std::sync::Arc<evatrap_core::modes::GuidedMode>) {
    let m = common::coarse();
    (m.red(ModeLabel::TE00), m.red(ModeLabel::TE01))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn two_mode_intensity_decomposes(p0 in 0.0f64..3e-3, p1 in 0.0f64..3e-3, t0 in -PI..PI, t1 in -PI..PI,
                                     z in 0.0f64..5e-6, x in -0.3e-6f64..0.3e-6, y in 0.0f64..0.4e-6) {
        let (a, b) = pair();
        let f = common::field(&[(a.clone(), p0, t0), (b.clone(), p1, t1)]);
        let i = f.intensity_at(x, y, z).unwrap();
        let e0 = a.field.sample_bicubic(x, y).unwrap();
        let e1 = b.field.sample_bicubic(x, y).unwrap();
        let c0 = Complex64::from_polar(p0.sqrt(), t0);
        let c1 = Complex64::from_polar(p1.sqrt(), t1);
        let cross = 2.0 * (c0 * c1.conj() * e0 * e1 * Complex64::from_polar(1.0, (a.beta - b.beta) * z)).re;
        let expected = INTENSITY_FACTOR * (c0.norm_sqr() * e0 * e0 + c1.norm_sqr() * e1 * e1 + cross);
        let scale = INTENSITY_FACTOR * (c0.norm() * e0.abs() + c1.norm() * e1.abs()).powi(2) + f64::MIN_POSITIVE;
        prop_assert!((i - expected).abs() <= 1e-12 * scale, "{} vs {}", i, expected);
    }

    #[test]
    fn superposition_is_linear(p0 in 1e-5f64..3e-3, p1 in 1e-5f64..3e-3, s in 0.1f64..10.0, z in 0.0f64..3e-6) {
        let (a, b) = pair();
        let one = superpose(&[ModeExcitation::new(a.clone(), p0, 0.2).unwrap(),
                              ModeExcitation::new(b.clone(), p1, -0.7).unwrap()], z).unwrap();
        let scaled = superpose(&[ModeExcitation::new(a.clone(), s * s * p0, 0.2).unwrap(),
                                 ModeExcitation::new(b.clone(), s * s * p1, -0.7).unwrap()], z).unwrap();
        let parts = [superpose(&[ModeExcitation::new(a, p0, 0.2).unwrap()], z).unwrap(),
                     superpose(&[ModeExcitation::new(b, p1, -0.7).unwrap()], z).unwrap()];
        for k in (0..one.values.len()).step_by(97) {
            let sum = parts[0].values[k] + parts[1].values[k];
            prop_assert!((one.values[k] - sum).norm() <= 1e-12 * (one.values[k].norm() + 1.0));
            prop_assert!((scaled.values[k] - one.values[k] * s).norm() <= 1e-12 * (scaled.values[k].norm() + 1.0));
        }
    }

    #[test]
    fn phase_offset_shifts_the_fringes(shift in 1usize..63) {
        let (a, b) = pair();
        let n = 64usize;
        let dbeta = a.beta - b.beta;
        let period = 2.0 * PI / dbeta.abs();
        let delta = 2.0 * PI * shift as f64 / n as f64;
        let trace = |dt: f64| -> Vec<f64> {
            let f = common::field(&[(a.clone(), 1e-3, 0.0), (b.clone(), 1e-3, dt)]);
            (0..n).map(|k| f.intensity_at(0.0, 0.04e-6, k as f64 * period / n as f64).unwrap()).collect()
        };
        let (base, moved) = (trace(0.0), trace(delta));
        // Cyclic cross-correlation peak gives the shift in samples.
        let lag = (0..n)
            .max_by(|&p, &q| {
                let c = |l: usize| (0..n).map(|k| base[k] * moved[(k + l) % n]).sum::<f64>();
                c(p).total_cmp(&c(q))
            })
            .unwrap();
        // I depends on Δβ·z + θ₀ − θ₁, so raising θ₁ by δ moves the pattern by δ/Δβ.
        let expected_z = delta / dbeta;
        let expected_lag = ((expected_z / period * n as f64).round() as i64).rem_euclid(n as i64) as usize;
        prop_assert_eq!(lag, expected_lag);
    }
}

#[test]
fn launched_power_is_recovered_by_quadrature() {
    let (a, b) = pair();
    let f = superpose(&[ModeExcitation::new(a, 0.75e-3, 0.0).unwrap(), ModeExcitation::new(b, 0.75e-3, 0.3).unwrap()], 0.4e-6)
        .unwrap();
    let p = integrated_power(&f);
    assert!((p - 1.5e-3).abs() < 0.01 * 1.5e-3, "{p}");
}

#[test]
fn beat_swaps_the_lobes_and_has_the_beat_period() {
    let (a, b) = pair();
    let f = common::field(&[(a.clone(), 1e-3, 0.0), (b.clone(), 1e-3, 0.0)]);
    let half = PI / (a.beta - b.beta).abs();
    let (top, bottom) = ((0.0, 0.04e-6), (0.0, -0.34e-6));
    let i = |p: (f64, f64), z: f64| f.intensity_at(p.0, p.1, z).unwrap();
    assert!((i(top, 0.0) > i(top, half)) != (i(bottom, 0.0) > i(bottom, half)));
    let z: Vec<f64> = (0..2000).map(|k| k as f64 * 5e-9).collect();
    let tr: Vec<f64> = z.iter().map(|&z| i(top, z)).collect();
    let fit = oscillation_period(&z, &tr).unwrap();
    let lam = beat_period(a.beta, b.beta).unwrap();
    assert!((fit - lam).abs() / lam < 1e-3, "{fit} vs {lam}");
}
