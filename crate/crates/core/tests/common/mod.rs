#![allow(dead_code)]

use nalgebra::Vector3;
use pairdrop_core::image::Image;
use pairdrop_core::scene::{logit, look_at_camera, Camera, GaussianField, GaussianPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Small random scene in front of a 16×16 camera for gradient checks.
pub fn gradient_scene(seed: u64, count: usize) -> (GaussianField, Camera) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = look_at_camera(
        Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), -3.0),
        Vector3::zeros(),
        16,
        16,
        50.0,
    );
    let primitives = (0..count)
        .map(|_| {
            let q: [f64; 4] = [(); 4].map(|_| rng.sample::<f64, _>(StandardNormal));
            let qs = rng.gen_range(0.7..1.4) / q.iter().map(|v| v * v).sum::<f64>().sqrt();
            GaussianPrimitive {
                position: [(); 3].map(|_| rng.gen_range(-0.45..0.45)),
                log_scale: [(); 3].map(|_| rng.gen_range(0.06f64..0.3).ln()),
                rotation: q.map(|v| v * qs),
                opacity_logit: logit(rng.gen_range(0.3..0.8)),
                color_logit: [(); 3].map(|_| logit(rng.gen_range(0.1..0.9))),
            }
        })
        .collect();
    (GaussianField::new(primitives), cam)
}

pub fn random_image(w: usize, h: usize, seed: u64, lo: f64, hi: f64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, |_, _, _| rng.gen_range(lo..hi))
}

/// `|analytic - fd| <= max(rel * max(|analytic|, |fd|), abs_floor)`
pub fn grad_close(analytic: f64, fd: f64, rel: f64, abs_floor: f64) -> bool {
    (analytic - fd).abs() <= (rel * analytic.abs().max(fd.abs())).max(abs_floor)
}

/// Central differences of `f` over every raw parameter of `field`.
pub fn finite_difference_grads(field: &GaussianField, h: f64, mut f: impl FnMut(&GaussianField) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(field.len() * 14);
    let mut probe = field.clone();
    for i in 0..field.len() {
        for k in 0..14 {
            let base = field.primitives[i].get(k);
            probe.primitives[i].set(k, base + h);
            let up = f(&probe);
            probe.primitives[i].set(k, base - h);
            let down = f(&probe);
            probe.primitives[i].set(k, base);
            out.push((up - down) / (2.0 * h));
        }
    }
    out
}

/// Ground truth kept at least `gap` away from every branch render per
/// channel, so the L1 terms stay differentiable under small perturbations.
pub fn separated_target(renders: &[Image], seed: u64, gap: f64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gt = renders[0].clone();
    for i in 0..gt.data.len() {
        let lo = renders.iter().map(|r| r.data[i]).fold(f64::INFINITY, f64::min);
        let hi = renders.iter().map(|r| r.data[i]).fold(f64::NEG_INFINITY, f64::max);
        let d = rng.gen_range(gap..3.0 * gap);
        gt.data[i] = if rng.gen_bool(0.5) { hi + d } else { lo - d };
    }
    gt
}

/// Analytic vs central-difference gradient of the full training objective
/// on a random 5-Gaussian 16×16 scene with fixed branch masks. Returns the
/// failing `(param, analytic, fd)` entries and the number of checked ones.
///
/// The oracle rebuilds the objective from its definition: photometric terms
/// against a target kept clear of every render, and each consistency pair
/// as `mean(sign(Φa₀ - Φb₀) · (Φ(a(θ)) - Φb₀))`, i.e. the L1 linearized at
/// the base point with the detached branch held at its base render. Its
/// value equals the library's loss at the base point, and its derivative is
/// the exact derivative of the stop-gradient objective there.
pub fn objective_gradient_case(seed: u64, branches: usize, lambda_max: f64) -> (Vec<(usize, f64, f64)>, usize) {
    use pairdrop_core::config::Config;
    use pairdrop_core::dropout::DropoutMask;
    use pairdrop_core::imageops::gaussian_blur;
    use pairdrop_core::regularize::rgb_loss;
    use pairdrop_core::trainer::Objective;

    let (mut field, cam) = gradient_scene(seed, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd0d0);
    let mut cfg = Config::desk();
    cfg.train.branches = branches;
    cfg.loss.lambda_max = lambda_max;
    cfg.dropout.rate = 0.1;
    cfg.image.background = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
    let obj = Objective::from_config(&cfg).unwrap();
    let masks: Vec<DropoutMask> = (0..branches)
        .map(|b| {
            let keep = (0..5).map(|_| !rng.gen_bool(0.25)).collect();
            DropoutMask { keep, rate: 0.1, seed: b as u64 }
        })
        .collect();
    let t = cfg.loss.t_warm;
    let lambda = lambda_max;
    let beta = cfg.loss.beta;
    let base = obj.render_branches(&field, &masks, &cam).unwrap();
    let gt = separated_target(&base, seed ^ 0x5eed, 0.02);
    let blurred: Vec<Image> = base.iter().map(|r| gaussian_blur(r, &obj.kernel)).collect();
    let pairs: Vec<(usize, usize)> = (0..branches).flat_map(|i| (i + 1..branches).map(move |j| (i, j))).collect();
    let signs: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(l, d)| {
            blurred[l]
                .data
                .iter()
                .zip(&blurred[d].data)
                .map(|(a, b)| if a > b { 1.0 } else if a < b { -1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let oracle = |f: &GaussianField| -> f64 {
        let r = obj.render_branches(f, &masks, &cam).unwrap();
        let mut total = 0.0;
        for (b, img) in r.iter().enumerate() {
            let w = if b == 0 { 1.0 } else { beta };
            total += w * rgb_loss(img, &gt, cfg.loss.lambda_dssim).unwrap().0;
        }
        if !pairs.is_empty() {
            let n = r[0].data.len() as f64;
            let mut cons = 0.0;
            for (&(l, d), sg) in pairs.iter().zip(&signs) {
                let phi = gaussian_blur(&r[l], &obj.kernel);
                cons += phi.data.iter().zip(&blurred[d].data).zip(sg).map(|((a, b), s)| s * (a - b)).sum::<f64>() / n;
            }
            total += lambda * cons / pairs.len() as f64;
        }
        total
    };
    let reported = obj.value(&field, &masks, &cam, &gt, t).unwrap().total;
    let rebuilt = oracle(&field);
    assert!((reported - rebuilt).abs() <= 1e-12 * reported.abs(), "{reported} vs {rebuilt}");

    obj.accumulate(&mut field, &masks, &cam, &gt, t).unwrap();
    let analytic = field.flat_grads();
    let fd = finite_difference_grads(&field, 1e-4, oracle);
    let bad = analytic
        .iter()
        .zip(&fd)
        .enumerate()
        .filter(|(_, (a, n))| !grad_close(**a, **n, 1e-4, 1e-7))
        .map(|(j, (a, n))| (j, *a, *n))
        .collect();
    (bad, analytic.len())
}
