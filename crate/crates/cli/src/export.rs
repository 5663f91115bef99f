//! PNG import/export. Images are `[bands, h, w]` with values in [0, 1].
//!
//! Three or more bands export as RGB from bands (2, 1, 0); fewer export band
//! 0 as grayscale. RGB PNGs import in the inverse order, so band 0 is blue.

use std::path::Path;

use gisr_core::io::TensorContainer;
use gisr_tensor::Tensor;
use image::{GrayImage, ImageBuffer, Rgb, RgbImage};

use crate::{CliError, CliResult};

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn dims3(t: &Tensor<f64>) -> CliResult<(usize, usize, usize)> {
    match *t.shape() {
        [b, h, w] => Ok((b, h, w)),
        ref s => Err(CliError::User(format!("expected [bands, h, w], got {s:?}"))),
    }
}

fn save(img: impl FnOnce(&Path) -> image::ImageResult<()>, path: &Path) -> CliResult<()> {
    img(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

pub fn write_png(t: &Tensor<f64>, path: &Path) -> CliResult<()> {
    let (b, h, w) = dims3(t)?;
    let d = t.to_vec();
    let at = |band: usize, y: u32, x: u32| d[band * h * w + y as usize * w + x as usize];
    if b >= 3 {
        let img: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            Rgb([to_u8(at(2, y, x)), to_u8(at(1, y, x)), to_u8(at(0, y, x))])
        });
        save(|p| img.save(p), path)
    } else {
        let img = GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([to_u8(at(0, y, x))]));
        save(|p| img.save(p), path)
    }
}

/// Per-pixel squared error averaged over bands.
pub fn squared_error_map(pred: &Tensor<f64>, gt: &Tensor<f64>) -> CliResult<Vec<f64>> {
    let (b, h, w) = dims3(gt)?;
    if pred.shape() != gt.shape() {
        return Err(CliError::User(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let (p, g) = (pred.to_vec(), gt.to_vec());
    let mut out = vec![0.0; h * w];
    for band in 0..b {
        for (j, o) in out.iter_mut().enumerate() {
            let e = p[band * h * w + j] - g[band * h * w + j];
            *o += e * e / b as f64;
        }
    }
    Ok(out)
}

/// "Hot" colormap of `err` scaled by its maximum; zero error is black.
/// Returns the maximum.
pub fn write_heat_map(err: &[f64], h: usize, w: usize, path: &Path) -> CliResult<f64> {
    let max = err.iter().copied().fold(0.0, f64::max);
    let img: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let t = if max > 0.0 {
            err[y as usize * w + x as usize] / max
        } else {
            0.0
        };
        Rgb([to_u8(3.0 * t), to_u8(3.0 * t - 1.0), to_u8(3.0 * t - 2.0)])
    });
    save(|p| img.save(p), path)?;
    Ok(max)
}

pub fn read_png(path: &Path) -> CliResult<Tensor<f64>> {
    let img = image::open(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let mut d = vec![0.0; 3 * h * w];
        for (x, y, px) in rgb.enumerate_pixels() {
            let j = y as usize * w + x as usize;
            for c in 0..3 {
                d[(2 - c) * h * w + j] = px[c] as f64 / 255.0;
            }
        }
        Ok(Tensor::from_vec(&[3, h, w], d)?)
    } else {
        let g = img.to_luma8();
        let d = g.pixels().map(|p| p[0] as f64 / 255.0).collect();
        Ok(Tensor::from_vec(&[1, h, w], d)?)
    }
}

/// Reads a PNG, or the single tensor of a container file.
pub fn read_image(path: &Path) -> CliResult<Tensor<f64>> {
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        return read_png(path);
    }
    let c = TensorContainer::read(path)?;
    match c.entries() {
        [e] => {
            let t = e.to_tensor::<f64>()?;
            dims3(&t)?;
            Ok(t)
        }
        es => Err(CliError::User(format!(
            "{}: expected exactly one tensor, found {}",
            path.display(),
            es.len()
        ))),
    }
}
