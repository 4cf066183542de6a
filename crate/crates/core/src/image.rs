//! Raster containers (RGB images, binary masks, float planes) and PNM file IO.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "image has {} pixels, expected {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        Image {
            width,
            height,
            pixels: vec![rgb; width * height],
        }
    }

    pub fn from_raw_rgb(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "raw RGB buffer has {} bytes, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Image::new(
            width,
            height,
            data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[u8; 3]] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    pub fn to_raw_rgb(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.iter().copied()).collect()
    }

    /// Rec. 601 luma in `[0, 1]`.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|&p| luma(p)).collect(),
        }
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        let img = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|e| Error::parse(path, e.to_string()))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Image::from_raw_rgb(w as usize, h as usize, img.as_raw())
    }

    /// Binary PPM (P6, maxval 255).
    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut bytes = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend(self.to_raw_rgb());
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

pub fn luma(p: [u8; 3]) -> f64 {
    (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
}

/// Row-major binary occupancy raster. Serialized as alternating run lengths,
/// starting with a (possibly empty) run of unset pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "MaskRle", try_from = "MaskRle")]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct MaskRle {
    width: usize,
    height: usize,
    runs: Vec<usize>,
}

impl From<Mask> for MaskRle {
    fn from(m: Mask) -> Self {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0;
        for &b in &m.bits {
            if b != current {
                runs.push(len);
                current = b;
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        MaskRle {
            width: m.width,
            height: m.height,
            runs,
        }
    }
}

impl TryFrom<MaskRle> for Mask {
    type Error = String;
    fn try_from(r: MaskRle) -> std::result::Result<Self, String> {
        let mut bits = Vec::with_capacity(r.width * r.height);
        for (i, &n) in r.runs.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, n));
        }
        Mask::from_bits(r.width, r.height, bits).map_err(|e| e.to_string())
    }
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::invalid(format!(
                "mask has {} bits, expected {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Mask { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Mask { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bb
    }

    /// Copy translated by `(dx, dy)`; pixels shifted outside the raster are dropped.
    pub fn shifted(&self, dx: i64, dy: i64) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height {
                        out.set(nx as usize, ny as usize, true);
                    }
                }
            }
        }
        out
    }

    pub fn union(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let img = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|e| Error::parse(path, e.to_string()))?
            .to_luma8();
        let (w, h) = img.dimensions();
        Mask::from_bits(w as usize, h as usize, img.as_raw().iter().map(|&v| v >= 128).collect())
    }

    /// Binary PGM (P5, maxval 255; 0 background, 255 foreground).
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend(self.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Row-major single-channel float raster.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        GrayImage {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn shifted(&self, dx: i64, dy: i64, fill: f64) -> GrayImage {
        let mut out = GrayImage::new(self.width, self.height, fill);
        for y in 0..self.height {
            for x in 0..self.width {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height {
                    out.set(nx as usize, ny as usize, self.get(x, y));
                }
            }
        }
        out
    }
}
