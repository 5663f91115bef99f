use gisr_core::degradation::{degrade, DegradationSpec};
use gisr_core::hqs::{
    bicubic_init, grad_f3, h_objective, hqs_solve, hqs_solve_from, HqsParams, IdentityProx,
};
use gisr_core::CoreError;
use gisr_tensor::Tensor;

mod common;
use common::{dense_dk as dense, matvec, matvec_t, random};

const N: usize = 8;
const R: usize = 2;
const M: usize = N / R;

fn dk(spec: &DegradationSpec) -> Vec<Vec<f64>> {
    dense(spec, N)
}

/// Largest eigenvalue of A^T A.
fn spectral_norm_sq(a: &[Vec<f64>]) -> f64 {
    let mut x = vec![1.0; N * N];
    let mut lam = 0.0;
    for _ in 0..500 {
        let y = matvec_t(a, &matvec(a, &x));
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        lam = norm / x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = y.iter().map(|v| v / norm).collect();
    }
    lam
}

fn data_fit(a: &[Vec<f64>], h: &[f64], l: &[f64]) -> f64 {
    matvec(a, h)
        .iter()
        .zip(l)
        .map(|(p, q)| (p - q).powi(2))
        .sum()
}

fn landweber_params(delta3: f64, iters: usize) -> HqsParams {
    HqsParams {
        eta1: 0.0,
        lambda1: 0.0,
        delta3,
        iters,
        ..HqsParams::default()
    }
}

#[test]
fn dense_matrix_matches_operator() {
    let spec = DegradationSpec::gaussian(R).unwrap();
    let a = dk(&spec);
    let h = random(&[1, N, N], 1);
    let got = degrade(&h, &spec, 0).unwrap().to_vec();
    let want = matvec(&a, &h.to_vec());
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn grad_f3_matches_dense_formula() {
    let spec = DegradationSpec::gaussian(R).unwrap();
    let a = dk(&spec);
    let (h, u, v) = (
        random(&[1, N, N], 2),
        random(&[1, N, N], 3),
        random(&[1, N, N], 4),
    );
    let l = random(&[1, M, M], 5);
    let p = HqsParams::default();
    let got = grad_f3(&h, &l, &u, &v, &spec, &p).unwrap().to_vec();
    let (hv, uv, vv) = (h.to_vec(), u.to_vec(), v.to_vec());
    let resid: Vec<f64> = matvec(&a, &hv)
        .iter()
        .zip(l.to_vec())
        .map(|(x, y)| x - y)
        .collect();
    let back = matvec_t(&a, &resid);
    for i in 0..N * N {
        let want = back[i] + p.eta1 * (hv[i] - uv[i]) + p.lambda1 * (hv[i] - vv[i]);
        assert!((got[i] - want).abs() < 1e-8, "{i}: {} vs {want}", got[i]);
    }
}

#[test]
fn grad_f3_matches_finite_differences() {
    let spec = DegradationSpec::gaussian(R).unwrap();
    let (h, u, v) = (
        random(&[1, N, N], 6),
        random(&[1, N, N], 7),
        random(&[1, N, N], 8),
    );
    let l = random(&[1, M, M], 9);
    let p = HqsParams {
        eta1: 0.3,
        lambda1: 0.7,
        ..HqsParams::default()
    };
    let g = grad_f3(&h, &l, &u, &v, &spec, &p).unwrap().to_vec();
    let eps = 1e-6;
    let base = h.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..N * N {
        let mut plus = base.clone();
        plus[i] += eps;
        let mut minus = base.clone();
        minus[i] -= eps;
        let fp = h_objective(
            &Tensor::from_vec(&[1, N, N], plus).unwrap(),
            &l,
            &u,
            &v,
            &spec,
            &p,
        )
        .unwrap();
        let fm = h_objective(
            &Tensor::from_vec(&[1, N, N], minus).unwrap(),
            &l,
            &u,
            &v,
            &spec,
            &p,
        )
        .unwrap();
        let fd = (fp - fm) / (2.0 * eps);
        worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-3));
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

#[test]
fn identity_prox_solve_is_landweber() {
    let spec = DegradationSpec::gaussian(R).unwrap();
    let a = dk(&spec);
    let l = random(&[1, M, M], 10);
    let guide = random(&[1, N, N], 11);
    let delta3 = 0.5;
    let got = hqs_solve(
        &l,
        &guide,
        &spec,
        &landweber_params(delta3, 5),
        &IdentityProx,
        &IdentityProx,
    )
    .unwrap();

    let lv = l.to_vec();
    let mut h = bicubic_init(&l, R).unwrap().to_vec();
    for _ in 0..5 {
        let resid: Vec<f64> = lv.iter().zip(matvec(&a, &h)).map(|(x, y)| x - y).collect();
        let step = matvec_t(&a, &resid);
        for (hi, si) in h.iter_mut().zip(step) {
            *hi += delta3 * si;
        }
    }
    for (g, w) in got.to_vec().iter().zip(&h) {
        assert!((g - w).abs() < 1e-8, "{g} vs {w}");
    }
}

#[test]
fn ground_truth_is_a_fixed_point() {
    let spec = DegradationSpec::gaussian(R).unwrap();
    let gt = random(&[2, N, N], 12);
    let l = degrade(&gt, &spec, 0).unwrap();
    let out = hqs_solve_from(
        &gt,
        &l,
        &gt,
        &spec,
        &HqsParams::default(),
        &IdentityProx,
        &IdentityProx,
    )
    .unwrap();
    for (a, b) in out.to_vec().iter().zip(gt.to_vec()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn data_fit_is_monotone_below_step_bound() {
    let spec = DegradationSpec::gaussian(R).unwrap();
    let a = dk(&spec);
    let bound = 2.0 / spectral_norm_sq(&a);
    let l = random(&[1, M, M], 13);
    let h0 = random(&[1, N, N], 14);
    let lv = l.to_vec();
    for delta3 in [0.25 * bound, 0.9 * bound] {
        let mut prev = data_fit(&a, &h0.to_vec(), &lv);
        for iters in 1..=12 {
            let h = hqs_solve_from(
                &h0,
                &l,
                &h0,
                &spec,
                &landweber_params(delta3, iters),
                &IdentityProx,
                &IdentityProx,
            )
            .unwrap();
            let fit = data_fit(&a, &h.to_vec(), &lv);
            assert!(fit <= prev + 1e-12, "iteration {iters}: {fit} > {prev}");
            prev = fit;
        }
    }
}

#[test]
fn closure_prox_is_applied() {
    let spec = DegradationSpec::gaussian(R).unwrap();
    let l = random(&[1, M, M], 15);
    let g = random(&[1, N, N], 16);
    let zero = |z: &Tensor<f64>, _: &Tensor<f64>| -> gisr_core::Result<Tensor<f64>> {
        Ok(z.mul_const(0.0))
    };
    let p = HqsParams::default();
    let a = hqs_solve(&l, &g, &spec, &p, &zero, &zero).unwrap();
    let b = hqs_solve(&l, &g, &spec, &p, &IdentityProx, &IdentityProx).unwrap();
    assert_ne!(a.to_vec(), b.to_vec());
}

#[test]
fn oversized_step_trips_divergence_guard() {
    let spec = DegradationSpec::gaussian(R).unwrap();
    let l = random(&[1, M, M], 17);
    let g = random(&[1, N, N], 18);
    let p = HqsParams {
        delta3: 50.0,
        iters: 200,
        ..HqsParams::default()
    };
    let e = hqs_solve(&l, &g, &spec, &p, &IdentityProx, &IdentityProx).unwrap_err();
    assert!(matches!(e, CoreError::Numeric(_)), "{e}");
}
