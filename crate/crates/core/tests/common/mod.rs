//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use gisr_core::degradation::DegradationSpec;
use gisr_tensor::init::seeded_rng;
use gisr_tensor::Tensor;
use rand::Rng;

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = seeded_rng(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random::<f64>()).collect()).unwrap()
}

pub fn mirror(i: isize, n: isize) -> usize {
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
    }
    i as usize
}

/// Explicit (m*m) x (n*n) matrix of reflect-padded blur followed by
/// decimation at offset 0.
pub fn dense_dk(spec: &DegradationSpec, n: usize) -> Vec<Vec<f64>> {
    let (r, m) = (spec.ratio, n / spec.ratio);
    let k = spec.kernel.to_vec();
    let ks = spec.kernel_size();
    let half = (ks / 2) as isize;
    let mut a = vec![vec![0.0; n * n]; m * m];
    for oi in 0..m {
        for oj in 0..m {
            let (ci, cj) = ((oi * r) as isize, (oj * r) as isize);
            for u in 0..ks {
                for v in 0..ks {
                    let y = mirror(ci + u as isize - half, n as isize);
                    let x = mirror(cj + v as isize - half, n as isize);
                    a[oi * m + oj][y * n + x] += k[u * ks + v];
                }
            }
        }
    }
    a
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

pub fn matvec_t(a: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a[0].len()];
    for (row, &yi) in a.iter().zip(y) {
        for (o, &p) in out.iter_mut().zip(row) {
            *o += p * yi;
        }
    }
    out
}

/// Per-window SSIM with explicit 2-d Gaussian weights.
pub fn ssim_oracle(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = 11;
    let c = 5.0;
    let mut g = vec![0.0; k * k];
    for u in 0..k {
        for v in 0..k {
            let d2 = (u as f64 - c).powi(2) + (v as f64 - c).powi(2);
            g[u * k + v] = (-d2 / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|x| *x /= s);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..=h - k {
        for j in 0..=w - k {
            let at = |x: &[f64], u: usize, v: usize| x[(i + u) * w + j + v];
            let (mut ma, mut mb) = (0.0, 0.0);
            for u in 0..k {
                for v in 0..k {
                    ma += g[u * k + v] * at(a, u, v);
                    mb += g[u * k + v] * at(b, u, v);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for u in 0..k {
                for v in 0..k {
                    let (da, db) = (at(a, u, v) - ma, at(b, u, v) - mb);
                    va += g[u * k + v] * da * da;
                    vb += g[u * k + v] * db * db;
                    cov += g[u * k + v] * da * db;
                }
            }
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Per-window universal quality index over 8x8 windows.
pub fn q_oracle(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = 8;
    let n = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..=h - k {
        for j in 0..=w - k {
            let xs: Vec<(f64, f64)> = (0..k * k)
                .map(|t| {
                    let idx = (i + t / k) * w + j + t % k;
                    (a[idx], b[idx])
                })
                .collect();
            let ma = xs.iter().map(|p| p.0).sum::<f64>() / n;
            let mb = xs.iter().map(|p| p.1).sum::<f64>() / n;
            let va = xs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / (n - 1.0);
            let vb = xs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / (n - 1.0);
            let cov = xs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / (n - 1.0);
            total += 4.0 * cov * ma * mb / ((va + vb) * (ma * ma + mb * mb));
            count += 1;
        }
    }
    total / count as f64
}
