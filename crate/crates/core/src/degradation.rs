//! Observation model `L = DKH + n` and dataset synthesis.
//!
//! `K` is a reflect-padded correlation with a normalized blur kernel and `D`
//! keeps every `r`-th pixel starting at offset 0. Both operate on the last two
//! axes of any tensor; leading axes are treated as independent planes.

use gisr_tensor::init::seeded_rng;
use gisr_tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{arg, CoreError, Result};

/// Blur kernel, decimation ratio and additive noise level.
#[derive(Debug, Clone)]
pub struct DegradationSpec {
    pub kernel: Tensor<f64>,
    pub ratio: usize,
    pub noise_sigma: f64,
}

impl DegradationSpec {
    pub fn new(kernel: Tensor<f64>, ratio: usize, noise_sigma: f64) -> Result<Self> {
        if kernel.ndim() != 2 || kernel.dim(0) != kernel.dim(1) || kernel.dim(0).is_multiple_of(2) {
            return arg(format!(
                "blur kernel must be square with odd size, got {:?}",
                kernel.shape()
            ));
        }
        let v = kernel.to_vec();
        if v.iter().any(|&x| !(x >= 0.0)) {
            return arg("blur kernel entries must be non-negative");
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return arg(format!("blur kernel must sum to 1, sums to {s}"));
        }
        if ratio == 0 {
            return arg("ratio must be at least 1");
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return arg(format!(
                "noise sigma must be finite and >= 0, got {noise_sigma}"
            ));
        }
        Ok(Self {
            kernel,
            ratio,
            noise_sigma,
        })
    }

    /// Gaussian blur of size `2*ceil(1.5 r) + 1` and sigma `r / 2`, no noise.
    pub fn gaussian(ratio: usize) -> Result<Self> {
        let size = 2 * (1.5 * ratio as f64).ceil() as usize + 1;
        let kernel = make_gaussian_kernel(size, (ratio as f64 / 2.0).max(1e-3))?;
        Self::new(kernel, ratio, 0.0)
    }

    pub fn with_noise(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return arg(format!("noise sigma must be finite and >= 0, got {sigma}"));
        }
        self.noise_sigma = sigma;
        Ok(self)
    }

    /// A `size x size` kernel with a single 1 at the center.
    pub fn delta(size: usize, ratio: usize) -> Result<Self> {
        let mut k = vec![0.0; size * size];
        k[size * size / 2] = 1.0;
        Self::new(Tensor::from_vec(&[size, size], k)?, ratio, 0.0)
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.dim(0)
    }
}

/// Target `L`, guidance `P` and ground truth `H` for one scene, each
/// `[bands, height, width]`.
#[derive(Debug, Clone)]
pub struct GuidedPair {
    pub lr: Tensor<f64>,
    pub guide: Tensor<f64>,
    pub gt: Tensor<f64>,
    pub ratio: usize,
}

impl GuidedPair {
    pub fn new(lr: Tensor<f64>, guide: Tensor<f64>, gt: Tensor<f64>, ratio: usize) -> Result<Self> {
        for (name, t) in [("L", &lr), ("P", &guide), ("H", &gt)] {
            if t.ndim() != 3 {
                return Err(CoreError::Shape(format!(
                    "{name} must be [bands, h, w], got {:?}",
                    t.shape()
                )));
            }
        }
        if guide.shape()[1..] != gt.shape()[1..] {
            return Err(CoreError::Shape(format!(
                "guidance {:?} and ground truth {:?} differ spatially",
                guide.shape(),
                gt.shape()
            )));
        }
        if ratio == 0
            || lr.dim(0) != gt.dim(0)
            || lr.dim(1) * ratio != gt.dim(1)
            || lr.dim(2) * ratio != gt.dim(2)
        {
            return Err(CoreError::Shape(format!(
                "L {:?} is not ground truth {:?} reduced by {ratio}",
                lr.shape(),
                gt.shape()
            )));
        }
        Ok(Self {
            lr,
            guide,
            gt,
            ratio,
        })
    }
}

pub fn make_gaussian_kernel(size: usize, sigma: f64) -> Result<Tensor<f64>> {
    if size.is_multiple_of(2) {
        return arg(format!("kernel size must be odd, got {size}"));
    }
    if !(sigma > 0.0) {
        return arg(format!("sigma must be positive, got {sigma}"));
    }
    let c = (size / 2) as f64;
    let g: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut k: Vec<f64> = (0..size * size)
        .map(|i| g[i / size] * g[i % size])
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    Ok(Tensor::from_vec(&[size, size], k)?)
}

/// Mirror index into `0..n` without repeating the edge sample.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

fn planes(t: &Tensor<f64>) -> Result<(usize, usize, usize)> {
    let nd = t.ndim();
    if nd < 2 {
        return arg(format!(
            "image tensor needs at least 2 axes, got {:?}",
            t.shape()
        ));
    }
    let (h, w) = (t.dim(nd - 2), t.dim(nd - 1));
    Ok((t.numel() / (h * w).max(1), h, w))
}

fn with_spatial(t: &Tensor<f64>, h: usize, w: usize) -> Vec<usize> {
    let mut s = t.shape().to_vec();
    let nd = s.len();
    s[nd - 2] = h;
    s[nd - 1] = w;
    s
}

/// `K x`: reflect-padded correlation with the blur kernel.
pub fn blur(x: &Tensor<f64>, spec: &DegradationSpec) -> Result<Tensor<f64>> {
    let (np, h, w) = planes(x)?;
    let k = spec.kernel_size();
    let c = (k / 2) as isize;
    let kern = spec.kernel.data();
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for p in 0..np {
        let (s, o) = (
            &src[p * h * w..(p + 1) * h * w],
            &mut out[p * h * w..(p + 1) * h * w],
        );
        for y in 0..h {
            for xx in 0..w {
                let mut acc = 0.0;
                for a in 0..k {
                    let yy = reflect_index(y as isize + a as isize - c, h);
                    for b in 0..k {
                        let xs = reflect_index(xx as isize + b as isize - c, w);
                        acc += kern[a * k + b] * s[yy * w + xs];
                    }
                }
                o[y * w + xx] = acc;
            }
        }
    }
    Ok(Tensor::from_vec(x.shape(), out)?)
}

/// `K^T g`: scatters every output sample back through the reflect map.
pub fn blur_adjoint(g: &Tensor<f64>, spec: &DegradationSpec) -> Result<Tensor<f64>> {
    let (np, h, w) = planes(g)?;
    let k = spec.kernel_size();
    let c = (k / 2) as isize;
    let kern = spec.kernel.data();
    let src = g.data();
    let mut out = vec![0.0; src.len()];
    for p in 0..np {
        let (s, o) = (
            &src[p * h * w..(p + 1) * h * w],
            &mut out[p * h * w..(p + 1) * h * w],
        );
        for y in 0..h {
            for xx in 0..w {
                let v = s[y * w + xx];
                for a in 0..k {
                    let yy = reflect_index(y as isize + a as isize - c, h);
                    for b in 0..k {
                        let xs = reflect_index(xx as isize + b as isize - c, w);
                        o[yy * w + xs] += kern[a * k + b] * v;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_vec(g.shape(), out)?)
}

/// `D x`: keeps pixels `(r i, r j)`.
pub fn decimate(x: &Tensor<f64>, r: usize) -> Result<Tensor<f64>> {
    let (np, h, w) = planes(x)?;
    if r == 0 || h % r != 0 || w % r != 0 {
        return arg(format!(
            "spatial dims {h}x{w} are not divisible by ratio {r}"
        ));
    }
    let (lh, lw) = (h / r, w / r);
    let src = x.data();
    let mut out = Vec::with_capacity(np * lh * lw);
    for p in 0..np {
        for i in 0..lh {
            for j in 0..lw {
                out.push(src[p * h * w + i * r * w + j * r]);
            }
        }
    }
    Ok(Tensor::from_vec(&with_spatial(x, lh, lw), out)?)
}

/// `D^T y`: zero-insertion upsampling.
pub fn decimate_adjoint(y: &Tensor<f64>, r: usize) -> Result<Tensor<f64>> {
    let (np, lh, lw) = planes(y)?;
    let (h, w) = (lh * r, lw * r);
    let src = y.data();
    let mut out = vec![0.0; np * h * w];
    for p in 0..np {
        for i in 0..lh {
            for j in 0..lw {
                out[p * h * w + i * r * w + j * r] = src[p * lh * lw + i * lw + j];
            }
        }
    }
    Ok(Tensor::from_vec(&with_spatial(y, h, w), out)?)
}

/// Noise-free `D K x`.
pub fn apply_dk(x: &Tensor<f64>, spec: &DegradationSpec) -> Result<Tensor<f64>> {
    decimate(&blur(x, spec)?, spec.ratio)
}

/// `(D K)^T y = K^T D^T y`.
pub fn apply_dk_adjoint(y: &Tensor<f64>, spec: &DegradationSpec) -> Result<Tensor<f64>> {
    blur_adjoint(&decimate_adjoint(y, spec.ratio)?, spec)
}

/// `L = D K H + n`, with `n ~ N(0, sigma^2)` drawn from `seed`. The result is
/// clamped to `[0, 1]` only when noise is added.
pub fn degrade(h: &Tensor<f64>, spec: &DegradationSpec, seed: u64) -> Result<Tensor<f64>> {
    let (_, hh, ww) = planes(h)?;
    let r = spec.ratio;
    if hh % r != 0 || ww % r != 0 {
        return arg(format!(
            "spatial dims {hh}x{ww} are not divisible by ratio {r}"
        ));
    }
    let low = apply_dk(h, spec)?;
    if spec.noise_sigma == 0.0 {
        return Ok(low);
    }
    let normal =
        Normal::new(0.0, spec.noise_sigma).map_err(|e| CoreError::Argument(e.to_string()))?;
    let mut rng = seeded_rng(seed);
    {
        let mut d = low.data_mut();
        for v in d.iter_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Ok(low)
}

/// Reduced-resolution pair: both the target `h` and the full-resolution
/// guidance `p_full` are degraded by `spec.ratio`; `h` is the ground truth.
pub fn wald_synthesize(
    h: &Tensor<f64>,
    p_full: &Tensor<f64>,
    spec: &DegradationSpec,
    seed: u64,
) -> Result<GuidedPair> {
    if h.ndim() != 3 || p_full.ndim() != 3 {
        return arg(format!(
            "expected [bands, h, w] inputs, got {:?} and {:?}",
            h.shape(),
            p_full.shape()
        ));
    }
    let lr = degrade(h, spec, seed)?;
    let guide = degrade(p_full, spec, seed.wrapping_add(0x9E37_79B9_7F4A_7C15))?;
    if guide.shape()[1..] != h.shape()[1..] {
        return arg(format!(
            "guidance {:?} reduced by {} gives {:?}, which does not match target {:?}",
            p_full.shape(),
            spec.ratio,
            guide.shape(),
            h.shape()
        ));
    }
    GuidedPair::new(lr, guide, h.clone(), spec.ratio)
}

struct Blob {
    cy: f64,
    cx: f64,
    sigma: f64,
    amp: Vec<f64>,
}

struct Polygon {
    verts: Vec<(f64, f64)>,
    amp: Vec<f64>,
}

impl Polygon {
    fn contains(&self, y: f64, x: f64) -> bool {
        let n = self.verts.len();
        let mut inside = false;
        for i in 0..n {
            let (yi, xi) = self.verts[i];
            let (yj, xj) = self.verts[(i + n - 1) % n];
            if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                inside = !inside;
            }
        }
        inside
    }
}

/// Renders `bands` target channels on a `size x size` grid of the unit square.
fn render_scene(rng: &mut impl Rng, bands: usize, size: usize) -> Vec<f64> {
    let base: Vec<f64> = (0..bands).map(|_| rng.random_range(0.05..0.25)).collect();
    let blobs: Vec<Blob> = (0..rng.random_range(3..7))
        .map(|_| Blob {
            cy: rng.random_range(0.0..1.0),
            cx: rng.random_range(0.0..1.0),
            sigma: rng.random_range(0.08..0.25),
            amp: (0..bands).map(|_| rng.random_range(0.0..0.25)).collect(),
        })
        .collect();
    let polys: Vec<Polygon> = (0..rng.random_range(2..5))
        .map(|_| {
            let (cy, cx) = (rng.random_range(0.15..0.85), rng.random_range(0.15..0.85));
            let nv = rng.random_range(3..7);
            let r0 = rng.random_range(0.12..0.35);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let verts = (0..nv)
                .map(|i| {
                    let t = phase + std::f64::consts::TAU * i as f64 / nv as f64;
                    let rad = r0 * rng.random_range(0.6..1.0);
                    (cy + rad * t.sin(), cx + rad * t.cos())
                })
                .collect();
            Polygon {
                verts,
                amp: (0..bands).map(|_| rng.random_range(0.15..0.4)).collect(),
            }
        })
        .collect();
    let mut img = vec![0.0; bands * size * size];
    for y in 0..size {
        for x in 0..size {
            let (py, px) = (
                (y as f64 + 0.5) / size as f64,
                (x as f64 + 0.5) / size as f64,
            );
            let mut v = base.clone();
            for bl in &blobs {
                let g = (-((py - bl.cy).powi(2) + (px - bl.cx).powi(2))
                    / (2.0 * bl.sigma * bl.sigma))
                    .exp();
                v.iter_mut().zip(&bl.amp).for_each(|(a, &m)| *a += m * g);
            }
            for pg in &polys {
                if pg.contains(py, px) {
                    v.iter_mut().zip(&pg.amp).for_each(|(a, &m)| *a += m);
                }
            }
            for (b, val) in v.into_iter().enumerate() {
                img[b * size * size + y * size + x] = val.clamp(0.0, 1.0);
            }
        }
    }
    img
}

/// Removes rounding overshoot of blurred [0, 1] images.
fn clamp_unit(t: Tensor<f64>) -> Tensor<f64> {
    t.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    t
}

/// Random guided scenes: smooth blobs plus sharp polygons with band-specific
/// intensities. Each scene is rendered at `r * size`; the ground truth is that
/// render degraded by `r`, the full-resolution guidance is a positive mix of
/// the rendered bands, and the pair is then produced by [`wald_synthesize`].
/// Uses the default Gaussian blur for `r` and no noise.
pub fn synth_scene_dataset(
    n: usize,
    bands: usize,
    guide_bands: usize,
    size: usize,
    r: usize,
    seed: u64,
) -> Result<Vec<GuidedPair>> {
    if r == 0 || !size.is_multiple_of(r) {
        return arg(format!("size {size} is not divisible by ratio {r}"));
    }
    synth_scene_dataset_with(
        n,
        bands,
        guide_bands,
        size,
        &DegradationSpec::gaussian(r)?,
        seed,
    )
}

/// [`synth_scene_dataset`] with an explicit degradation.
pub fn synth_scene_dataset_with(
    n: usize,
    bands: usize,
    guide_bands: usize,
    size: usize,
    spec: &DegradationSpec,
    seed: u64,
) -> Result<Vec<GuidedPair>> {
    let r = spec.ratio;
    if !size.is_multiple_of(r) {
        return arg(format!("size {size} is not divisible by ratio {r}"));
    }
    if bands == 0 || guide_bands == 0 {
        return arg("band counts must be positive");
    }
    let fine = size * r;
    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let pair_seed: u64 = rng.random();
        let mut prng = seeded_rng(pair_seed);
        let scene = render_scene(&mut prng, bands, fine);
        let mix: Vec<Vec<f64>> = (0..guide_bands)
            .map(|_| {
                let w: Vec<f64> = (0..bands).map(|_| prng.random_range(0.2..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let plane = fine * fine;
        let mut p_full = vec![0.0; guide_bands * plane];
        for (g, w) in mix.iter().enumerate() {
            for (b, &wb) in w.iter().enumerate() {
                for j in 0..plane {
                    p_full[g * plane + j] += wb * scene[b * plane + j];
                }
            }
        }
        let scene = Tensor::from_vec(&[bands, fine, fine], scene)?;
        let gt = clamp_unit(apply_dk(&scene, spec)?);
        let p_full = Tensor::from_vec(&[guide_bands, fine, fine], p_full)?;
        let pair = wald_synthesize(
            &gt,
            &p_full,
            spec,
            seed ^ (i as u64).wrapping_mul(0xA24B_AED4_963E_E407),
        )?;
        out.push(GuidedPair {
            lr: clamp_unit(pair.lr),
            guide: clamp_unit(pair.guide),
            ..pair
        });
    }
    Ok(out)
}

/// Binary edge map: Sobel gradient magnitude above `threshold`, taking the
/// maximum over bands. Border pixels use reflect padding.
pub fn sobel_edges(img: &Tensor<f64>, threshold: f64) -> Result<Vec<bool>> {
    let (np, h, w) = planes(img)?;
    let d = img.data();
    let mut mag = vec![0.0f64; h * w];
    for p in 0..np {
        let s = &d[p * h * w..(p + 1) * h * w];
        let at = |y: isize, x: isize| s[reflect_index(y, h) * w + reflect_index(x, w)];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let gx = at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)
                    - at(y - 1, x - 1)
                    - 2.0 * at(y, x - 1)
                    - at(y + 1, x - 1);
                let gy = at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)
                    - at(y - 1, x - 1)
                    - 2.0 * at(y - 1, x)
                    - at(y - 1, x + 1);
                let m = (gx * gx + gy * gy).sqrt();
                let idx = y as usize * w + x as usize;
                mag[idx] = mag[idx].max(m);
            }
        }
    }
    Ok(mag.into_iter().map(|m| m > threshold).collect())
}

pub fn edge_iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_mirrors_without_edge_repeat() {
        let got: Vec<usize> = (-3..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn gaussian_default_size_scales_with_ratio() {
        assert_eq!(DegradationSpec::gaussian(2).unwrap().kernel_size(), 7);
        assert_eq!(DegradationSpec::gaussian(4).unwrap().kernel_size(), 13);
    }

    #[test]
    fn spec_rejects_bad_kernels() {
        let even = Tensor::from_vec(&[2, 2], vec![0.25; 4]).unwrap();
        assert!(DegradationSpec::new(even, 2, 0.0).is_err());
        let unnormalized = Tensor::from_vec(&[1, 1], vec![2.0]).unwrap();
        assert!(DegradationSpec::new(unnormalized, 2, 0.0).is_err());
    }
}
