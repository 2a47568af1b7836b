use proptest::prelude::*;
use sstam_core::metrics::{average_ranks, plcc, psnr, srcc};
use sstam_core::video::Plane;

fn direct_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let below = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn varied(v: &[f64]) -> bool {
    v.iter().any(|a| *a != v[0])
}

fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..=50).prop_flat_map(|n| {
        let smooth = prop::collection::vec(-100.0f64..100.0, n);
        let tied = prop::collection::vec((0i32..5).prop_map(f64::from), n);
        (
            prop_oneof![smooth.clone(), tied.clone()],
            prop_oneof![smooth, tied],
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn plcc_matches_direct_formula((x, y) in series()) {
        prop_assume!(varied(&x) && varied(&y));
        prop_assert!((plcc(&x, &y).unwrap() - direct_pearson(&x, &y)).abs() < 1e-9);
    }

    #[test]
    fn srcc_matches_ranked_pearson((x, y) in series()) {
        prop_assume!(varied(&x) && varied(&y));
        prop_assert_eq!(average_ranks(&x), brute_ranks(&x));
        let direct = direct_pearson(&brute_ranks(&x), &brute_ranks(&y));
        prop_assert!((srcc(&x, &y).unwrap() - direct).abs() < 1e-9);
    }

    #[test]
    fn plcc_affine_invariance((x, y) in series(), a in 0.01f64..50.0, b in -100.0f64..100.0) {
        prop_assume!(varied(&x) && varied(&y));
        let r = plcc(&x, &y).unwrap();
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((plcc(&ax, &y).unwrap() - r).abs() < 1e-12);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        prop_assert!((plcc(&x, &neg).unwrap() + r).abs() < 1e-12);
    }

    #[test]
    fn srcc_monotone_invariance((x, y) in series()) {
        prop_assume!(varied(&x) && varied(&y));
        let t: Vec<f64> = x.iter().map(|v| (v / 40.0).exp() + v.powi(3)).collect();
        prop_assert_eq!(srcc(&t, &y).unwrap(), srcc(&x, &y).unwrap());
    }

    #[test]
    fn srcc_equals_plcc_on_rank_sequences(perm in Just((1..=20).map(f64::from).collect::<Vec<_>>()).prop_shuffle()) {
        let id: Vec<f64> = (1..=20).map(f64::from).collect();
        prop_assert_eq!(srcc(&id, &perm).unwrap(), plcc(&id, &perm).unwrap());
    }
}

#[test]
fn psnr_falls_as_noise_grows() {
    let base = Plane::from_fn(32, 32, |r, c| (64 + (r * 5 + c * 3) % 128) as u8);
    let mut last = f64::INFINITY;
    for amp in [1u32, 2, 4, 8, 16, 32] {
        let noisy = Plane::from_fn(32, 32, |r, c| {
            let h = (r as u32).wrapping_mul(73_856_093) ^ (c as u32).wrapping_mul(19_349_663);
            let n = (h % (2 * amp + 1)) as i32 - amp as i32;
            (base.get(r, c) as i32 + n).clamp(0, 255) as u8
        });
        let p = psnr(&base, &noisy).unwrap();
        assert!(p < last, "amp {amp}: {p} !< {last}");
        last = p;
    }
}
