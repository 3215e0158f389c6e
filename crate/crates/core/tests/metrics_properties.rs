use proptest::collection::vec;
use proptest::prelude::*;

use gsm_hbt::gsm::{IndexWindow, ModeIndex, ModeSpectrum, Normalization, SchellModel};
use gsm_hbt::metrics::{fidelity_window, participation_ratio, schmidt_number, ComparisonReport};

fn spectrum(values: &[(ModeIndex, f64)]) -> ModeSpectrum {
    ModeSpectrum::from_values(1.0, Normalization::Raw, values.iter().copied()).unwrap()
}

fn grid_spectrum(size: usize, values: &[f64]) -> ModeSpectrum {
    let entries: Vec<(ModeIndex, f64)> = (0..size * size)
        .map(|k| (ModeIndex::new(k / size, k % size), values[k]))
        .collect();
    spectrum(&entries)
}

fn transposed(s: &ModeSpectrum) -> ModeSpectrum {
    let entries: Vec<(ModeIndex, f64)> = s.iter().map(|(i, v)| (ModeIndex::new(i.n, i.m), v)).collect();
    spectrum(&entries)
}

fn bhattacharyya(a: &[f64], b: &[f64]) -> f64 {
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    a.iter().zip(b).map(|(x, y)| (x / sa * y / sb).sqrt()).sum()
}

const SIZE: usize = 4;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn schmidt_number_at_least_one_and_scale_free(values in vec(0.0..10.0f64, 1..40), scale in 1e-6..1e6f64) {
        prop_assume!(values.iter().any(|v| *v > 1e-3));
        let k = participation_ratio(&values).unwrap();
        prop_assert!(k >= 1.0 - 1e-12 && k <= values.len() as f64 + 1e-9);
        let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
        prop_assert!((participation_ratio(&scaled).unwrap() - k).abs() < 1e-9 * k);
    }

    #[test]
    fn fidelity_symmetric_bounded_and_scale_free(
        a in vec(0.0..1.0f64, SIZE * SIZE),
        b in vec(0.0..1.0f64, SIZE * SIZE),
        sa in 1e-3..1e3f64,
        sb in 1e-3..1e3f64,
    ) {
        prop_assume!(a.iter().sum::<f64>() > 0.1 && b.iter().sum::<f64>() > 0.1);
        let window = IndexWindow::Rect { max_m: SIZE - 1, max_n: SIZE - 1 };
        let (ea, eb) = (grid_spectrum(SIZE, &a), grid_spectrum(SIZE, &b));
        let f = fidelity_window(&ea, &eb, window).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - bhattacharyya(&a, &b)).abs() < 1e-12);
        prop_assert!((f - fidelity_window(&eb, &ea, window).unwrap()).abs() < 1e-15);

        let a2: Vec<f64> = a.iter().map(|v| v * sa).collect();
        let b2: Vec<f64> = b.iter().map(|v| v * sb).collect();
        let scaled = fidelity_window(&grid_spectrum(SIZE, &a2), &grid_spectrum(SIZE, &b2), window).unwrap();
        prop_assert!((scaled - f).abs() < 1e-12);

        let permuted = fidelity_window(&transposed(&ea), &transposed(&eb), window).unwrap();
        prop_assert!((permuted - f).abs() < 1e-12);
        prop_assert!((fidelity_window(&ea, &ea, window).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_falls_as_noisy_orders_enter(t in 0.5..2.0f64) {
        prop_assume!((t - 1.0).abs() > 1e-3);
        let model = SchellModel::from_beta(1e-3, 0.24, 800e-9).unwrap();
        let full = IndexWindow::Triangle { max_order: 8 };
        let theory = ModeSpectrum::analytic_2d(&model, full, Normalization::RelativeToGround);
        let noisy: Vec<(ModeIndex, f64)> = theory
            .iter()
            .map(|(i, v)| (i, if i.order() >= 6 { v * t } else { v }))
            .collect();
        let measured = spectrum(&noisy);
        let curve: Vec<f64> = (0..=8)
            .map(|k| fidelity_window(&measured, &theory, IndexWindow::Triangle { max_order: k }).unwrap())
            .collect();
        prop_assert!(curve[..6].iter().all(|f| (f - 1.0).abs() < 1e-12));
        prop_assert!(curve.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{:?}", curve);
        prop_assert!(curve[8] < 1.0);

        let report = ComparisonReport::new(&measured, &theory, full).unwrap();
        prop_assert_eq!(report.curve.len(), 9);
        for (p, f) in report.curve.iter().zip(&curve) {
            prop_assert!((p.fidelity - f).abs() < 1e-15);
        }
    }

    #[test]
    fn separable_schmidt_number_squares(beta in 0.3..4.0f64) {
        let model = SchellModel::from_beta(1e-3, beta, 800e-9).unwrap();
        let count = 160;
        let k1 = schmidt_number(&ModeSpectrum::analytic_1d(&model, count, Normalization::Raw)).unwrap();
        let window = IndexWindow::Rect { max_m: count - 1, max_n: count - 1 };
        let k2 = schmidt_number(&ModeSpectrum::analytic_2d(&model, window, Normalization::Raw)).unwrap();
        prop_assert!((k2 - k1 * k1).abs() < 1e-9 * k2);
        // geometric spectrum: K = (1 + q) / (1 - q)
        let q = model.spectral_ratio();
        prop_assert!((k1 - (1.0 + q) / (1.0 - q)).abs() < 1e-9 * k1);
    }
}
