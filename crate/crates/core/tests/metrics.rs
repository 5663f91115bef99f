use std::f64::consts::FRAC_PI_2;

use gisr_core::metrics::{ergas, psnr, q_index, rmse, sam, scc, ssim, MetricReport};
use gisr_core::CoreError;
use gisr_tensor::init::seeded_rng;
use gisr_tensor::Tensor;

mod common;
use common::{q_oracle, random, ssim_oracle};
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn t(shape: &[usize], v: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, v).unwrap()
}

#[test]
fn identical_images_hit_ideal_values() {
    let x = random(&[4, 16, 16], 1).add_const(0.1);
    let r = MetricReport::compute(&x, &x, 4).unwrap();
    assert_eq!(r.psnr, 100.0);
    assert!((r.ssim - 1.0).abs() < 1e-12);
    assert!(r.sam.abs() < 1e-7);
    assert_eq!(r.ergas, 0.0);
    assert!((r.scc - 1.0).abs() < 1e-12);
    assert!((r.q - 1.0).abs() < 1e-12);
    assert_eq!(r.rmse, 0.0);
}

#[test]
fn psnr_of_half_offset() {
    let a = Tensor::zeros(&[1, 8, 8]);
    let b = Tensor::full(&[1, 8, 8], 0.5);
    assert!((psnr(&a, &b, 1.0).unwrap() - 6.0206).abs() < 1e-3);
}

#[test]
fn doubling_error_costs_six_decibels() {
    let gt = random(&[2, 8, 8], 2);
    let err = random(&[2, 8, 8], 3).add_const(-0.5).mul_const(0.1);
    let p1 = psnr(&gt.add(&err).unwrap(), &gt, 1.0).unwrap();
    let p2 = psnr(&gt.add(&err.mul_const(2.0)).unwrap(), &gt, 1.0).unwrap();
    assert!((p1 - p2 - 20.0 * 2f64.log10()).abs() < 1e-9);
    assert!((p1 - p2 - 6.0206).abs() < 1e-3);
}

#[test]
fn shape_mismatch_rejected() {
    let a = Tensor::zeros(&[1, 8, 8]);
    let b = Tensor::zeros(&[1, 8, 9]);
    assert!(matches!(psnr(&a, &b, 1.0), Err(CoreError::Shape(_))));
    assert!(matches!(rmse(&a, &b, true), Err(CoreError::Shape(_))));
}

#[test]
fn ssim_matches_window_oracle() {
    for seed in 0..3 {
        let a = random(&[16, 16], 10 + seed);
        let b = random(&[16, 16], 20 + seed);
        let got = ssim(&a, &b).unwrap();
        let want = ssim_oracle(&a.to_vec(), &b.to_vec(), 16, 16);
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
}

#[test]
fn q_matches_window_oracle_and_is_symmetric() {
    for seed in 0..3 {
        let a = random(&[16, 16], 30 + seed);
        let b = random(&[16, 16], 40 + seed);
        let got = q_index(&a, &b).unwrap();
        let want = q_oracle(&a.to_vec(), &b.to_vec(), 16, 16);
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        assert!((q_index(&b, &a).unwrap() - got).abs() < 1e-12);
    }
}

#[test]
fn windowed_metrics_reject_small_images() {
    let a = Tensor::zeros(&[1, 10, 10]);
    assert!(matches!(ssim(&a, &a), Err(CoreError::Argument(_))));
    let b = Tensor::zeros(&[1, 7, 12]);
    assert!(matches!(q_index(&b, &b), Err(CoreError::Argument(_))));
}

#[test]
fn inverted_binary_image_has_negative_ssim() {
    let mut rng = seeded_rng(5);
    let v: Vec<f64> = (0..256)
        .map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 })
        .collect();
    let inv: Vec<f64> = v.iter().map(|x| 1.0 - x).collect();
    assert!(ssim(&t(&[16, 16], inv), &t(&[16, 16], v)).unwrap() < 0.0);
}

#[test]
fn sam_cases() {
    let gt = random(&[3, 6, 6], 6).add_const(0.1);
    assert!(sam(&gt, &gt).unwrap().abs() < 1e-7);
    assert!(sam(&gt.mul_const(2.0), &gt).unwrap().abs() < 1e-7);

    let mut rng = seeded_rng(7);
    let mut scaled = gt.to_vec();
    for j in 0..36 {
        let s = rng.random_range(0.5..3.0);
        for b in 0..3 {
            scaled[b * 36 + j] *= s;
        }
    }
    assert!(sam(&t(&[3, 6, 6], scaled), &gt).unwrap().abs() < 1e-7);

    let a = t(&[2, 2, 2], vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    let b = t(&[2, 2, 2], vec![0.0, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 2.0]);
    assert!((sam(&a, &b).unwrap() - FRAC_PI_2).abs() < 1e-12);

    let one = random(&[1, 4, 4], 8);
    assert!(matches!(sam(&one, &one), Err(CoreError::Argument(_))));
}

#[test]
fn ergas_cases() {
    let gt = Tensor::full(&[1, 4, 4], 0.5);
    let pred = Tensor::full(&[1, 4, 4], 1.0);
    assert!((ergas(&pred, &gt, 4).unwrap() - 25.0).abs() < 1e-12);
    assert!((ergas(&pred, &gt, 2).unwrap() - 50.0).abs() < 1e-12);
    assert_eq!(ergas(&gt, &gt, 4).unwrap(), 0.0);
    let zero = Tensor::zeros(&[1, 4, 4]);
    assert!(matches!(ergas(&pred, &zero, 4), Err(CoreError::Numeric(_))));
}

#[test]
fn scc_cases() {
    let x = random(&[2, 8, 8], 9);
    assert!((scc(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    assert!((scc(&x.mul_const(-1.0), &x).unwrap() + 1.0).abs() < 1e-12);
    let c = Tensor::full(&[2, 8, 8], 0.3);
    assert_eq!(scc(&c, &c).unwrap(), 0.0);
}

#[test]
fn rmse_cases() {
    let a = Tensor::zeros(&[1, 4, 4]);
    let b = Tensor::ones(&[1, 4, 4]);
    assert_eq!(rmse(&a, &b, true).unwrap(), 255.0);
    let h = Tensor::full(&[1, 4, 4], 0.5);
    assert!((rmse(&a, &h, false).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn psnr_and_ssim_improve_as_noise_shrinks() {
    let gt = random(&[1, 16, 16], 11);
    let sigmas = [0.2, 0.1, 0.05, 0.02];
    let mut p_wins = 0;
    let mut s_wins = 0;
    let mut pairs = 0;
    for seed in 0..20u64 {
        let mut rng = seeded_rng(100 + seed);
        let base: Vec<f64> = (0..256)
            .map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng))
            .collect();
        let scores: Vec<(f64, f64)> = sigmas
            .iter()
            .map(|&s| {
                let noisy: Vec<f64> = gt
                    .to_vec()
                    .iter()
                    .zip(&base)
                    .map(|(g, n)| g + s * n)
                    .collect();
                let noisy = t(&[1, 16, 16], noisy);
                (psnr(&noisy, &gt, 1.0).unwrap(), ssim(&noisy, &gt).unwrap())
            })
            .collect();
        for w in scores.windows(2) {
            pairs += 1;
            p_wins += usize::from(w[1].0 >= w[0].0);
            s_wins += usize::from(w[1].1 >= w[0].1);
        }
    }
    assert_eq!(p_wins, pairs);
    assert_eq!(s_wins, pairs);
}

#[test]
fn report_mean_skips_nan() {
    let x = random(&[1, 12, 12], 12).add_const(0.1);
    let y = random(&[1, 12, 12], 13).add_const(0.1);
    let a = MetricReport::compute(&x, &y, 2).unwrap();
    assert!(a.sam.is_nan());
    let m = MetricReport::mean(&[a, a]);
    assert!(m.sam.is_nan());
    assert!((m.psnr - a.psnr).abs() < 1e-12);
}
