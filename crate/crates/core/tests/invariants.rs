use std::f64::consts::PI;

use hlblowup::biotsavart::{velocity_log_convolution, velocity_periodic, BiotSavartMethod, LogKernel};
use hlblowup::bounds::{entropy_envelope, fg_envelope, gengron_envelope};
use hlblowup::commands::{random_line_vorticity, random_periodic_vorticity};
use hlblowup::diagnostics::{PeriodicQuadform, QuadformLine, QuadformMethod};
use hlblowup::grid::{LogGrid, PeriodicGrid};
use hlblowup::kernels::{log_kernel_anti, log_kernel_sym, log_ratio, periodic_k, periodic_t};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn modes(c: &[f64], grid: &PeriodicGrid) -> Vec<f64> {
    grid.sample(|x| c.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * x).sin()).sum())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn velocity_is_linear_and_odd(a in prop::collection::vec(-1.0f64..1.0, 6), b in prop::collection::vec(-1.0f64..1.0, 6), s in -3.0f64..3.0) {
        let g = PeriodicGrid::new(2.0 * PI, 128).unwrap();
        let (wa, wb) = (modes(&a, &g), modes(&b, &g));
        let sum: Vec<f64> = wa.iter().zip(&wb).map(|(x, y)| x + s * y).collect();
        let ua = velocity_periodic(&wa, &g, BiotSavartMethod::Spectral).unwrap().u;
        let ub = velocity_periodic(&wb, &g, BiotSavartMethod::Spectral).unwrap().u;
        let us = velocity_periodic(&sum, &g, BiotSavartMethod::Spectral).unwrap().u;
        let n = g.n();
        for j in 0..n {
            prop_assert!((us[j] - ua[j] - s * ub[j]).abs() < 1e-12);
            prop_assert!((ua[j] + ua[(n - j) % n]).abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_commutes_with_grid_shifts(a in prop::collection::vec(-1.0f64..1.0, 6), shift in 1usize..127) {
        let g = PeriodicGrid::new(2.0 * PI, 128).unwrap();
        let w = modes(&a, &g);
        let n = g.n();
        let shifted: Vec<f64> = (0..n).map(|j| w[(j + n - shift) % n]).collect();
        for m in [BiotSavartMethod::Spectral, BiotSavartMethod::Direct] {
            let u = velocity_periodic(&w, &g, m).unwrap().u;
            let us = velocity_periodic(&shifted, &g, m).unwrap().u;
            for j in 0..n {
                prop_assert!((us[j] - u[(j + n - shift) % n]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn periodic_kernel_signs(x in 1e-3f64..(PI - 1e-3), y in 1e-3f64..(PI - 1e-3)) {
        prop_assume!((x - y).abs() > 1e-6);
        let mu = 0.5;
        let k = periodic_k(x, y, mu);
        prop_assert!(k >= -1e-12 * k.abs().max(1.0));
        if x < y {
            prop_assert!(k >= 2.0 - 1e-10 * k.max(1.0));
        }
        let t = periodic_t(x, y, mu);
        prop_assert!(t <= 1e-10 * t.abs().max(1.0));
    }

    #[test]
    fn log_kernel_parts(xi in -50.0f64..50.0, s in 1e-6f64..0.999) {
        prop_assert!(log_kernel_sym(xi) >= 1.0 / PI - 1e-15);
        prop_assert!(log_kernel_anti(xi).abs() <= 1.0 / PI + 1e-15);
        prop_assert!(log_ratio(s) >= 2.0 * s / (s * s + 1.0) - 1e-15);
    }

    #[test]
    fn hl_log_velocity_dominates_cky(seed in 0u64..1000) {
        let g = LogGrid::new(-8.0, 8.0, 3201).unwrap();
        let w = random_line_vorticity(&g, &mut ChaCha8Rng::seed_from_u64(seed));
        let hl = velocity_log_convolution(&w, &g, LogKernel::Hl).unwrap();
        let cky = velocity_log_convolution(&w, &g, LogKernel::Cky).unwrap();
        let scale = hl.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in hl.iter().zip(&cky) {
            prop_assert!(*b >= -1e-8 * scale);
            prop_assert!(a - b >= -1e-8 * scale);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn quadratic_forms_are_nonnegative(seed in 0u64..10_000, a in 0.0f64..=PI, xi in -6.0f64..6.0) {
        let g = PeriodicGrid::new(2.0 * PI, 1024).unwrap();
        let w = random_periodic_vorticity(&g, &mut ChaCha8Rng::seed_from_u64(seed));
        let norm2: f64 = w.iter().map(|v| v * v).sum::<f64>() * g.dx();
        let q = PeriodicQuadform::new(&g, QuadformMethod::Spectral).eval(&w, a).unwrap();
        prop_assert!(q >= -1e-6 * norm2, "periodic {q} at a = {a}");
        let lg = LogGrid::new(-8.0, 8.0, 1601).unwrap();
        let wl = random_line_vorticity(&lg, &mut ChaCha8Rng::seed_from_u64(seed));
        let norm2: f64 = wl.iter().map(|v| v * v).sum::<f64>() * lg.h();
        let q = QuadformLine::new(&lg).eval(&wl, xi).unwrap();
        prop_assert!(q >= -1e-6 * norm2, "line {q} at xi = {xi}");
    }

    #[test]
    fn envelopes_are_monotone_in_their_data(i0 in 0.2f64..2.0, c0 in 0.05f64..1.0) {
        let a = gengron_envelope(i0, 0.0, c0, 1e3).unwrap();
        let b = gengron_envelope(i0, 0.0, 4.0 * c0, 1e3).unwrap();
        prop_assert!(b.t_star.unwrap() < a.t_star.unwrap());
        prop_assert!(a.t_star.unwrap() <= a.t_star_upper.unwrap());
        let f = fg_envelope(i0, 0.0, 1e3).unwrap();
        let g = fg_envelope(0.5 * i0, 0.0, 1e3).unwrap();
        prop_assert!(g.t_star.unwrap() > f.t_star.unwrap());
        let e = entropy_envelope(i0, 0.0, 1e3).unwrap();
        let e2 = entropy_envelope(i0 + 0.5, 0.0, 1e3).unwrap();
        prop_assert!(e2.t_star.unwrap() < e.t_star.unwrap());
    }
}
