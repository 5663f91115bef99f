//! Full-reference image quality metrics.
//!
//! Images are `[bands, height, width]` (a 2-d `[height, width]` tensor is one
//! band). Windowed metrics use only windows fully inside the image and are
//! averaged over bands.

use gisr_tensor::Tensor;

use crate::error::{arg, shape, CoreError, Result};

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const Q_WINDOW: usize = 8;

struct Bands<'a> {
    a: &'a [f64],
    b: &'a [f64],
    bands: usize,
    h: usize,
    w: usize,
}

impl Bands<'_> {
    fn band(&self, i: usize) -> (&[f64], &[f64]) {
        let n = self.h * self.w;
        (&self.a[i * n..(i + 1) * n], &self.b[i * n..(i + 1) * n])
    }
}

fn dims(t: &Tensor<f64>) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w] => Ok((1, h, w)),
        [b, h, w] => Ok((b, h, w)),
        _ => arg(format!(
            "expected [bands, h, w] or [h, w], got {:?}",
            t.shape()
        )),
    }
}

fn with_pair<R>(
    pred: &Tensor<f64>,
    gt: &Tensor<f64>,
    f: impl FnOnce(Bands<'_>) -> Result<R>,
) -> Result<R> {
    if pred.shape() != gt.shape() {
        return shape(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        ));
    }
    let (bands, h, w) = dims(gt)?;
    let (a, b) = (pred.data(), gt.data());
    f(Bands {
        a: &a,
        b: &b,
        bands,
        h,
        w,
    })
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64
}

/// `10 log10(peak^2 / MSE)`, capped at 100 dB.
pub fn psnr(pred: &Tensor<f64>, gt: &Tensor<f64>, peak: f64) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return shape(format!("psnr: {:?} vs {:?}", pred.shape(), gt.shape()));
    }
    let m = mse(&pred.data(), &gt.data());
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / m).log10()).min(PSNR_CAP))
}

/// Root mean squared error. With `quantize8`, both images are first mapped
/// from `[0, 1]` to rounded 8-bit levels and the error is on the 0..255 scale.
pub fn rmse(pred: &Tensor<f64>, gt: &Tensor<f64>, quantize8: bool) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return shape(format!("rmse: {:?} vs {:?}", pred.shape(), gt.shape()));
    }
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round();
    let (a, b) = (pred.data(), gt.data());
    if quantize8 {
        let qa: Vec<f64> = a.iter().map(|&v| q(v)).collect();
        let qb: Vec<f64> = b.iter().map(|&v| q(v)).collect();
        Ok(mse(&qa, &qb).sqrt())
    } else {
        Ok(mse(&a, &b).sqrt())
    }
}

/// Separable valid-mode correlation of an `h x w` plane with `taps` along
/// both axes.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for j in 0..ow {
            rows[y * ow + j] = (0..k).map(|t| taps[t] * x[y * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..k).map(|t| taps[t] * rows[(i + t) * ow + j]).sum();
        }
    }
    out
}

pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let g: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Window statistics `(mu_a, mu_b, var_a, var_b, cov)` for every valid
/// window position, with separable weights `taps` summing to 1.
fn window_stats(a: &[f64], b: &[f64], h: usize, w: usize, taps: &[f64]) -> [Vec<f64>; 5] {
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    };
    let mu_a = filter_valid(a, h, w, taps);
    let mu_b = filter_valid(b, h, w, taps);
    let aa = filter_valid(&prod(&|x, _| x * x), h, w, taps);
    let bb = filter_valid(&prod(&|_, y| y * y), h, w, taps);
    let ab = filter_valid(&prod(&|x, y| x * y), h, w, taps);
    let va = aa.iter().zip(&mu_a).map(|(s, m)| s - m * m).collect();
    let vb = bb.iter().zip(&mu_b).map(|(s, m)| s - m * m).collect();
    let cov = ab
        .iter()
        .zip(mu_a.iter().zip(&mu_b))
        .map(|(s, (x, y))| s - x * y)
        .collect();
    [mu_a, mu_b, va, vb, cov]
}

/// SSIM with an 11x11 Gaussian window (sigma 1.5), `C1 = (0.01 peak)^2`,
/// `C2 = (0.03 peak)^2`, averaged over valid windows and bands.
pub fn ssim_with_peak(pred: &Tensor<f64>, gt: &Tensor<f64>, peak: f64) -> Result<f64> {
    with_pair(pred, gt, |p| {
        if p.h < SSIM_WINDOW || p.w < SSIM_WINDOW {
            return arg(format!(
                "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
                p.h, p.w
            ));
        }
        let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
        let (c1, c2) = ((0.01 * peak).powi(2), (0.03 * peak).powi(2));
        let mut total = 0.0;
        for i in 0..p.bands {
            let (a, b) = p.band(i);
            let [ma, mb, va, vb, cov] = window_stats(a, b, p.h, p.w, &taps);
            let s: f64 = (0..ma.len())
                .map(|j| {
                    ((2.0 * ma[j] * mb[j] + c1) * (2.0 * cov[j] + c2))
                        / ((ma[j] * ma[j] + mb[j] * mb[j] + c1) * (va[j] + vb[j] + c2))
                })
                .sum();
            total += s / ma.len() as f64;
        }
        Ok(total / p.bands as f64)
    })
}

pub fn ssim(pred: &Tensor<f64>, gt: &Tensor<f64>) -> Result<f64> {
    ssim_with_peak(pred, gt, 1.0)
}

/// Universal image quality index of one window from its raw sums
/// `(n, sum_a, sum_b, sum_aa, sum_bb, sum_ab)`.
///
/// When the variance term vanishes but the means do not, only the luminance
/// factor is kept; when both vanish the window scores 1.
pub fn uiqi_from_sums(n: f64, sa: f64, sb: f64, saa: f64, sbb: f64, sab: f64) -> f64 {
    let num = 4.0 * (n * sab - sa * sb) * sa * sb;
    let den_var = n * (saa + sbb) - sa * sa - sb * sb;
    let den_mean = sa * sa + sb * sb;
    let den = den_var * den_mean;
    if den != 0.0 {
        num / den
    } else if den_mean != 0.0 {
        2.0 * sa * sb / den_mean
    } else {
        1.0
    }
}

/// Q index over 8x8 windows at every valid position, averaged over windows
/// and bands.
pub fn q_index(pred: &Tensor<f64>, gt: &Tensor<f64>) -> Result<f64> {
    with_pair(pred, gt, |p| {
        let k = Q_WINDOW;
        if p.h < k || p.w < k {
            return arg(format!(
                "q_index needs at least {k}x{k}, got {}x{}",
                p.h, p.w
            ));
        }
        let ones = vec![1.0; k];
        let mut total = 0.0;
        for i in 0..p.bands {
            let (a, b) = p.band(i);
            let sq = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
                filter_valid(
                    &a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>(),
                    p.h,
                    p.w,
                    &ones,
                )
            };
            let sa = filter_valid(a, p.h, p.w, &ones);
            let sb = filter_valid(b, p.h, p.w, &ones);
            let (saa, sbb, sab) = (sq(&|x, _| x * x), sq(&|_, y| y * y), sq(&|x, y| x * y));
            let n = (k * k) as f64;
            let s: f64 = (0..sa.len())
                .map(|j| uiqi_from_sums(n, sa[j], sb[j], saa[j], sbb[j], sab[j]))
                .sum();
            total += s / sa.len() as f64;
        }
        Ok(total / p.bands as f64)
    })
}

/// 8-neighbour Laplacian high-pass over interior pixels.
pub fn laplacian_valid(x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h.saturating_sub(2) * w.saturating_sub(2));
    for i in 1..h.saturating_sub(1) {
        for j in 1..w.saturating_sub(1) {
            let mut s = 0.0;
            for di in 0..3 {
                for dj in 0..3 {
                    s += x[(i + di - 1) * w + j + dj - 1];
                }
            }
            out.push(9.0 * x[i * w + j] - s);
        }
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Correlation of Laplacian-filtered images, averaged over bands. A band
/// whose high-pass has no variance in either image scores 0.
pub fn scc(pred: &Tensor<f64>, gt: &Tensor<f64>) -> Result<f64> {
    with_pair(pred, gt, |p| {
        if p.h < 3 || p.w < 3 {
            return arg(format!("scc needs at least 3x3, got {}x{}", p.h, p.w));
        }
        let total: f64 = (0..p.bands)
            .map(|i| {
                let (a, b) = p.band(i);
                pearson(&laplacian_valid(a, p.h, p.w), &laplacian_valid(b, p.h, p.w))
            })
            .sum();
        Ok(total / p.bands as f64)
    })
}

/// Mean spectral angle in radians over pixels where both spectra are
/// non-zero.
pub fn sam(pred: &Tensor<f64>, gt: &Tensor<f64>) -> Result<f64> {
    with_pair(pred, gt, |p| {
        if p.bands < 2 {
            return arg("sam needs at least 2 bands");
        }
        let n = p.h * p.w;
        let (mut sum, mut count) = (0.0, 0usize);
        for j in 0..n {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for i in 0..p.bands {
                let (x, y) = (p.a[i * n + j], p.b[i * n + j]);
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                continue;
            }
            sum += (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0).acos();
            count += 1;
        }
        Ok(if count == 0 { 0.0 } else { sum / count as f64 })
    })
}

/// `100 / r * sqrt(mean_b (RMSE_b / mu_b)^2)` with `mu_b` the ground-truth
/// band mean.
pub fn ergas(pred: &Tensor<f64>, gt: &Tensor<f64>, r: usize) -> Result<f64> {
    with_pair(pred, gt, |p| {
        if r == 0 {
            return arg("ergas ratio must be positive");
        }
        let mut acc = 0.0;
        for i in 0..p.bands {
            let (a, b) = p.band(i);
            let mu = b.iter().sum::<f64>() / b.len() as f64;
            if mu == 0.0 {
                return Err(CoreError::Numeric(format!("ergas: band {i} has zero mean")));
            }
            acc += mse(a, b) / (mu * mu);
        }
        Ok(100.0 / r as f64 * (acc / p.bands as f64).sqrt())
    })
}

/// All seven metrics for one image. `sam` is NaN for single-band images and
/// `ergas` is NaN when a ground-truth band has zero mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub sam: f64,
    pub ergas: f64,
    pub scc: f64,
    pub q: f64,
    pub rmse: f64,
}

impl MetricReport {
    pub const FIELDS: [&'static str; 7] = ["psnr", "ssim", "sam", "ergas", "scc", "q", "rmse"];

    pub fn compute(pred: &Tensor<f64>, gt: &Tensor<f64>, r: usize) -> Result<Self> {
        let (bands, _, _) = dims(gt)?;
        Ok(Self {
            psnr: psnr(pred, gt, 1.0)?,
            ssim: ssim(pred, gt)?,
            sam: if bands >= 2 { sam(pred, gt)? } else { f64::NAN },
            ergas: match ergas(pred, gt, r) {
                Ok(v) => v,
                Err(CoreError::Numeric(_)) => f64::NAN,
                Err(e) => return Err(e),
            },
            scc: scc(pred, gt)?,
            q: q_index(pred, gt)?,
            rmse: rmse(pred, gt, false)?,
        })
    }

    pub fn values(&self) -> [f64; 7] {
        [
            self.psnr, self.ssim, self.sam, self.ergas, self.scc, self.q, self.rmse,
        ]
    }

    /// Field-wise mean, ignoring NaN entries.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        let mut acc = [0.0; 7];
        let mut cnt = [0usize; 7];
        for r in reports {
            for (i, v) in r.values().into_iter().enumerate() {
                if !v.is_nan() {
                    acc[i] += v;
                    cnt[i] += 1;
                }
            }
        }
        let m: Vec<f64> = (0..7)
            .map(|i| {
                if cnt[i] == 0 {
                    f64::NAN
                } else {
                    acc[i] / cnt[i] as f64
                }
            })
            .collect();
        MetricReport {
            psnr: m[0],
            ssim: m[1],
            sam: m[2],
            ergas: m[3],
            scc: m[4],
            q: m[5],
            rmse: m[6],
        }
    }
}
