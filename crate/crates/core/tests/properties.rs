use pairdrop_core::dropout::{sample_mask, DropoutMask};
use pairdrop_core::imageops::{blur_adjoint, gaussian_blur, ssim, BlurKernel};
use pairdrop_core::regularize::lambda_schedule;
use pairdrop_core::scene::{generate_synthetic_scene, split_views, GaussianField};
use pairdrop_core::Image;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn image(w: usize, h: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(-1.0f64..1.0, w * h * 3).prop_map(move |data| Image { width: w, height: h, data })
}

fn kernel() -> impl Strategy<Value = BlurKernel> {
    (0usize..6, 0.3f64..4.0).prop_map(|(r, s)| BlurKernel::new(2 * r + 1, s).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_partition(n in 2usize..40, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let k = 1 + ((n - 1) as f64 * frac) as usize % (n - 1);
        let (train, held) = split_views(n, k, seed).unwrap();
        prop_assert_eq!(train.len(), k);
        let mut all: Vec<usize> = train.iter().chain(&held).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_views(n, k, seed).unwrap(), (train, held));
    }

    #[test]
    fn blur_is_linear_and_adjoint(a in image(9, 7), b in image(9, 7), s in -2.0f64..2.0, k in kernel()) {
        let mut comb = a.clone();
        comb.add_scaled(&b, s);
        let lhs = gaussian_blur(&comb, &k);
        let mut rhs = gaussian_blur(&a, &k);
        rhs.add_scaled(&gaussian_blur(&b, &k), s);
        for (x, y) in lhs.data.iter().zip(&rhs.data) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        let ip1 = gaussian_blur(&a, &k).dot(&b);
        let ip2 = a.dot(&blur_adjoint(&b, &k));
        prop_assert!((ip1 - ip2).abs() < 1e-8);
    }

    #[test]
    fn ssim_symmetric_and_bounded(a in image(12, 12), b in image(12, 12)) {
        let a = a.map(|v| 0.5 + 0.5 * v);
        let b = b.map(|v| 0.5 + 0.5 * v);
        let ab = ssim(&a, &b).unwrap();
        prop_assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12 && ab >= -1.0 - 1e-12);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn masks_are_pure_functions_of_seed(n in 0usize..500, rate in 0.0f64..=1.0, seed in any::<u64>()) {
        let a = DropoutMask::from_seed(n, rate, seed).unwrap();
        let b = DropoutMask::from_seed(n, rate, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), n);
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(sample_mask(n, rate, &mut r1).unwrap(), sample_mask(n, rate, &mut r2).unwrap());
    }

    #[test]
    fn schedule_monotone_and_capped(lmax in 0.0f64..1.0, warm in 1usize..20000, t in 0usize..30000) {
        let a = lambda_schedule(t, lmax, warm).unwrap();
        let b = lambda_schedule(t + 1, lmax, warm).unwrap();
        prop_assert!(a <= b);
        prop_assert!(a <= lmax);
        if t >= warm {
            prop_assert_eq!(a, lmax);
        }
    }

    #[test]
    fn scene_json_roundtrips(seed in any::<u64>(), count in 1usize..30, extent in 0.1f64..10.0) {
        let f = generate_synthetic_scene(seed, count, extent);
        let back = GaussianField::from_json(&f.to_json()).unwrap();
        prop_assert_eq!(back.flat_params(), f.flat_params());
    }
}
