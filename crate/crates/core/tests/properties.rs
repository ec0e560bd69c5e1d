//! Randomized invariants of the transforms, the channel and the pilot algebra.

use num_complex::Complex64;
use otfs_core::channel::{apply_dd_kernel, apply_dd_kernel_direct, DdKernel};
use otfs_core::dd::*;
use otfs_core::linalg::{energy, CMat};
use otfs_core::pilots::{build_superimposed, helper_interference, make_pattern, PatternKind};
use proptest::prelude::*;

fn frame(m: usize, n: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), m * n)
        .prop_map(move |v| CMat::from_iterator(m, n, v.into_iter().map(|(a, b)| Complex64::new(a, b))))
}

fn shaped() -> impl Strategy<Value = (CMat, CMat)> {
    (1usize..=16, 1usize..=8).prop_flat_map(|(m, n)| (frame(m, n), frame(m, n)))
}

fn rel(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn isfft_is_unitary_and_invertible((x, _) in shaped()) {
        let d = DdFrame::from_matrix(x.clone());
        let tf = isfft(&d);
        prop_assert!((energy(tf.values()) - energy(&x)).abs() <= 1e-10 * energy(&x).max(1.0));
        prop_assert!(rel(sfft(&tf).values(), &x) < 1e-10);
        prop_assert!(rel(isfft(&sfft(&TfGrid::from_matrix(x.clone()))).values(), &x) < 1e-10);
    }

    #[test]
    fn isfft_is_linear((x, y) in shaped(), a in -2.0f64..2.0) {
        let s = Complex64::new(a, 0.5);
        let lhs = isfft(&DdFrame::from_matrix(&x * s + &y));
        let rhs = isfft(&DdFrame::from_matrix(x)).values() * s + isfft(&DdFrame::from_matrix(y)).values();
        prop_assert!((lhs.values() - rhs).norm() < 1e-10);
    }

    #[test]
    fn modem_round_trips((x, _) in shaped(), cp in 0usize..3, overlay in any::<bool>()) {
        let fs = if overlay { FrameStructure::Overlay } else { FrameStructure::Standalone };
        let cfg = WaveformConfig::new(x.nrows(), x.ncols(), 15e3, cp.min(x.nrows() - 1), fs).unwrap();
        let d = DdFrame::from_matrix(x.clone());
        let back = demodulate(&modulate(&d, &cfg).unwrap(), &cfg).unwrap();
        prop_assert!(rel(back.values(), &x) < 1e-10);
    }

    #[test]
    fn kernel_is_bilinear(
        (x, h, u, g) in (1usize..=16, 1usize..=8)
            .prop_flat_map(|(m, n)| (frame(m, n), frame(m, n), frame(m, n), frame(m, n)))
    ) {
        let apply = |a: &CMat, b: &CMat| {
            apply_dd_kernel(&DdFrame::from_matrix(a.clone()), &DdKernel::from_matrix(b.clone()).unwrap())
                .unwrap()
                .into_inner()
        };
        prop_assert!((apply(&(&x + &u), &h) - apply(&x, &h) - apply(&u, &h)).norm() < 1e-9);
        prop_assert!((apply(&x, &(&h + &g)) - apply(&x, &h) - apply(&x, &g)).norm() < 1e-9);
        let direct = apply_dd_kernel_direct(
            &DdFrame::from_matrix(x.clone()),
            &DdKernel::from_matrix(h.clone()).unwrap(),
        )
        .unwrap();
        prop_assert!((direct.values() - apply(&x, &h)).norm() < 1e-9);
    }

    #[test]
    fn superimposed_construction_identities(
        x in frame(16, 6),
        seed in 0u64..1000,
        oh in 0.05f64..0.5,
        rho in 0.05f64..0.95,
        scattered in any::<bool>(),
    ) {
        let kind = if scattered { PatternKind::Scattered } else { PatternKind::Staircase };
        let p = make_pattern(kind, 16, 6, oh, seed).unwrap();
        let d = DdFrame::from_matrix(x.clone());
        let f = build_superimposed(&d, &p, rho).unwrap();
        let tf = isfft(&f.frame).into_inner();
        let data_tf = isfft(&d).into_inner();
        for l in 0..16 {
            for k in 0..6 {
                let want = if p.is_pilot(l, k) { Complex64::new(f.amplitude, 0.0) } else { data_tf[(l, k)] };
                prop_assert!((tf[(l, k)] - want).norm() < 1e-12);
            }
        }
        let cleared = DdFrame::from_matrix(&x + helper_interference(&d, &p).values());
        prop_assert!(apply_mask(isfft(&cleared).values(), p.omega(), true).norm() < 1e-12);
        prop_assert!((energy(&f.parts.x_train) / f.frame.energy() - rho).abs() < 1e-10);
    }
}
