//! Reference per-cell feature extractor and frame quality factor.
//!
//! Intensities are divided by the frame's mean luma before anything else, which makes the
//! descriptors insensitive to global illumination gain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{luma, Image, Mask};

pub const C_K: usize = 8;
pub const C_V: usize = 12;

/// Value-channel layout.
pub const V_MEAN: usize = 0;
pub const V_VAR: usize = 1;
pub const V_RGB: usize = 8;
pub const V_MASK: usize = 11;

pub type Key = [f64; C_K];
pub type Value = [f64; C_V];

/// Grid of unit-norm keys and raw values, one per `stride × stride` cell (edge cells may be partial).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub cols: usize,
    pub rows: usize,
    pub stride: usize,
    pub keys: Vec<Key>,
    pub values: Vec<Value>,
}

impl FeatureMap {
    pub fn cells(&self) -> usize {
        self.cols * self.rows
    }

    pub fn same_grid(&self, other: &FeatureMap) -> bool {
        self.cols == other.cols && self.rows == other.rows && self.stride == other.stride
    }

    /// Writes per-cell foreground fractions of `mask` into the mask value channel.
    pub fn with_mask(mut self, mask: &Mask) -> Self {
        for (v, f) in self.values.iter_mut().zip(mask_fractions(mask, self.stride)) {
            v[V_MASK] = f;
        }
        self
    }
}

pub fn grid_dims(width: usize, height: usize, stride: usize) -> (usize, usize) {
    (width.div_ceil(stride), height.div_ceil(stride))
}

/// Fraction of set pixels per cell, row-major over cells.
pub fn mask_fractions(mask: &Mask, stride: usize) -> Vec<f64> {
    let (cols, rows) = grid_dims(mask.width(), mask.height(), stride);
    let mut count = vec![0usize; cols * rows];
    let mut total = vec![0usize; cols * rows];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let c = (y / stride) * cols + x / stride;
            total[c] += 1;
            count[c] += mask.get(x, y) as usize;
        }
    }
    count.iter().zip(&total).map(|(&c, &t)| c as f64 / t as f64).collect()
}

/// Nearest-cell upsampling of a per-cell predicate to a pixel mask.
pub fn upsample_cells(cells: &[bool], cols: usize, stride: usize, width: usize, height: usize) -> Mask {
    Mask::from_fn(width, height, |x, y| cells[(y / stride) * cols + x / stride])
}

fn unit(v: [f64; C_K]) -> Key {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-12 {
        let mut e = [0.0; C_K];
        e[0] = 1.0;
        return e;
    }
    v.map(|x| x / n)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per cell: mean and variance of normalized intensity, a 4-bin magnitude-weighted
/// gradient-orientation histogram (0°, 45°, 90°, 135° gradient directions) and the cell's
/// normalized centre. Keys are a fixed centring/scaling of that descriptor, unit-normalized;
/// values hold the raw descriptor, mean RGB in `[0, 1]` and a mask channel (0 here).
pub fn extract_features(img: &Image, stride: usize) -> Result<FeatureMap> {
    let (w, h) = (img.width(), img.height());
    if stride == 0 || w < stride || h < stride {
        return Err(Error::invalid(format!(
            "image {w}x{h} is smaller than one {stride}-px cell"
        )));
    }
    let lum: Vec<f64> = img.pixels().iter().map(|&p| luma(p)).collect();
    let frame_mean = (lum.iter().sum::<f64>() / lum.len() as f64).max(1e-3);
    let n: Vec<f64> = lum.iter().map(|l| l / frame_mean).collect();
    let at = |x: usize, y: usize| n[y * w + x];
    let (cols, rows) = grid_dims(w, h, stride);
    let mut acc = vec![[0.0f64; 10]; cols * rows]; // sum, sumsq, bins×4, r, g, b, count
    for y in 0..h {
        for x in 0..w {
            let gx = match (x > 0, x + 1 < w) {
                (true, true) => (at(x + 1, y) - at(x - 1, y)) / 2.0,
                (false, true) => at(x + 1, y) - at(x, y),
                (true, false) => at(x, y) - at(x - 1, y),
                _ => 0.0,
            };
            let gy = match (y > 0, y + 1 < h) {
                (true, true) => (at(x, y + 1) - at(x, y - 1)) / 2.0,
                (false, true) => at(x, y + 1) - at(x, y),
                (true, false) => at(x, y) - at(x, y - 1),
                _ => 0.0,
            };
            let c = (y / stride) * cols + x / stride;
            let a = &mut acc[c];
            let v = at(x, y);
            a[0] += v;
            a[1] += v * v;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag > 0.0 {
                let theta = gy.atan2(gx).rem_euclid(std::f64::consts::PI);
                let bin = ((theta / (std::f64::consts::PI / 4.0)).round() as usize) % 4;
                a[2 + bin] += mag;
            }
            let p = img.get(x, y);
            a[6] += p[0] as f64 / 255.0;
            a[7] += p[1] as f64 / 255.0;
            a[8] += p[2] as f64 / 255.0;
            a[9] += 1.0;
        }
    }
    let mut keys = Vec::with_capacity(cols * rows);
    let mut values = Vec::with_capacity(cols * rows);
    for (c, a) in acc.iter().enumerate() {
        let cnt = a[9];
        let mean = a[0] / cnt;
        // E[x²] − mean² leaves rounding residue on flat cells
        let var = a[1] / cnt - mean * mean;
        let var = if var < 1e-12 * mean * mean.max(1.0) { 0.0 } else { var };
        let bins = [a[2] / cnt, a[3] / cnt, a[4] / cnt, a[5] / cnt];
        let cx = ((c % cols) as f64 + 0.5) / cols as f64;
        let cy = ((c / cols) as f64 + 0.5) / rows as f64;
        let raw = [mean, var, bins[0], bins[1], bins[2], bins[3], cx, cy];
        keys.push(unit([
            2.0 * (mean - 1.0),
            4.0 * var.sqrt(),
            2.0 * bins[0],
            2.0 * bins[1],
            2.0 * bins[2],
            2.0 * bins[3],
            0.6 * (cx - 0.5),
            0.6 * (cy - 0.5),
        ]));
        let mut v = [0.0; C_V];
        v[..8].copy_from_slice(&raw);
        v[V_RGB] = a[6] / cnt;
        v[V_RGB + 1] = a[7] / cnt;
        v[V_RGB + 2] = a[8] / cnt;
        values.push(v);
    }
    Ok(FeatureMap {
        cols,
        rows,
        stride,
        keys,
        values,
    })
}

/// `clamp(mean squared Laplacian / sharpness_ref, 0, 1) × (1 − saturated fraction)`;
/// a pixel is saturated when its brightest channel is ≥ 250.
pub fn quality_factor(img: &Image, sharpness_ref: f64) -> f64 {
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return 0.0;
    }
    let saturated = img.pixels().iter().filter(|p| p.iter().any(|&c| c >= 250)).count();
    let sat_fraction = saturated as f64 / (w * h) as f64;
    let sharp = if w >= 3 && h >= 3 {
        let lum: Vec<f64> = img.pixels().iter().map(|&p| luma(p)).collect();
        let mut sum = 0.0;
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let i = y * w + x;
                let l = 4.0 * lum[i] - lum[i - 1] - lum[i + 1] - lum[i - w] - lum[i + w];
                sum += l * l;
            }
        }
        sum / ((w - 2) * (h - 2)) as f64
    } else {
        0.0
    };
    (sharp / sharpness_ref).clamp(0.0, 1.0) * (1.0 - sat_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_image_keys_differ_only_in_coordinates() {
        let img = Image::filled(32, 24, [120, 120, 120]);
        let f = extract_features(&img, 8).unwrap();
        assert_eq!((f.cols, f.rows), (4, 3));
        for v in &f.values {
            assert!(v[2..6].iter().all(|&b| b == 0.0));
            assert!((v[V_MEAN] - 1.0).abs() < 1e-12);
        }
        for k in &f.keys {
            assert!(k[..6].iter().all(|&c| c.abs() < 1e-9));
            assert!((dot(k, k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vertical_edge_fills_horizontal_gradient_bin() {
        let img = Image::new(
            8,
            8,
            (0..64)
                .map(|i| if i % 8 < 4 { [40, 40, 40] } else { [200, 200, 200] })
                .collect(),
        )
        .unwrap();
        let f = extract_features(&img, 8).unwrap();
        let bins = &f.values[0][2..6];
        assert!(bins[0] > 0.0);
        assert!(bins[1..].iter().all(|&b| b < bins[0] * 1e-9), "{bins:?}");
    }

    #[test]
    fn extraction_is_deterministic_and_gain_invariant() {
        let img = Image::new(
            16,
            16,
            (0..256)
                .map(|i| [(i % 97) as u8 + 40, (i % 31) as u8 + 60, 90])
                .collect(),
        )
        .unwrap();
        let a = extract_features(&img, 8).unwrap();
        assert_eq!(a, extract_features(&img, 8).unwrap());
        assert!(extract_features(&Image::filled(4, 4, [0, 0, 0]), 8).is_err());
        let keys_unit = a.keys.iter().all(|k| (dot(k, k) - 1.0).abs() < 1e-6);
        assert!(keys_unit);
    }

    #[test]
    fn partial_cells_cover_the_image() {
        let img = Image::filled(20, 10, [10, 200, 10]);
        let f = extract_features(&img, 8).unwrap();
        assert_eq!((f.cols, f.rows), (3, 2));
        let m = Mask::from_fn(20, 10, |x, _| x >= 16);
        let fr = mask_fractions(&m, 8);
        assert_eq!(fr, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let up = upsample_cells(&fr.iter().map(|&v| v > 0.5).collect::<Vec<_>>(), 3, 8, 20, 10);
        assert_eq!(up, m);
    }

    fn checker(blur: bool) -> Image {
        let raw: Vec<u8> = (0..32 * 32)
            .map(|i| if ((i % 32) + (i / 32)) % 2 == 0 { 20 } else { 230 })
            .collect();
        let px: Vec<[u8; 3]> = (0..32 * 32)
            .map(|i| {
                let v = if blur {
                    let (x, y) = ((i % 32) as i64, (i / 32) as i64);
                    let mut s = 0u32;
                    let mut n = 0u32;
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let (nx, ny) = (x + dx, y + dy);
                            if (0..32).contains(&nx) && (0..32).contains(&ny) {
                                s += raw[(ny * 32 + nx) as usize] as u32;
                                n += 1;
                            }
                        }
                    }
                    (s / n) as u8
                } else {
                    raw[i]
                };
                [v, v, v]
            })
            .collect();
        Image::new(32, 32, px).unwrap()
    }

    #[test]
    fn quality_examples() {
        assert_eq!(quality_factor(&Image::filled(16, 16, [255, 255, 255]), 2e-3), 0.0);
        let sharp = quality_factor(&checker(false), 2e-3);
        assert_eq!(sharp, 1.0);
        // with a larger reference the clamp no longer hides the blur
        let r = 5.0;
        assert!(quality_factor(&checker(true), r) < quality_factor(&checker(false), r));
        assert_eq!(quality_factor(&Image::filled(16, 16, [0, 0, 0]), 2e-3), 0.0);
    }
}
