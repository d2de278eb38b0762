use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boolean grid marking one subject's pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height || width == 0 || height == 0 {
            return Err(Error::InvalidShape {
                shape: vec![height, width],
                len: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![true; width * height]).expect("positive extents")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    /// Grows the mask by one pixel in the 8-neighbourhood.
    pub fn dilate(&self) -> Mask {
        let (w, h) = (self.width, self.height);
        let bits = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                (-1..=1).any(|dy| {
                    (-1..=1).any(|dx| {
                        let (nx, ny) = (x + dx, y + dy);
                        nx >= 0
                            && ny >= 0
                            && (nx as usize) < w
                            && (ny as usize) < h
                            && self.bits[ny as usize * w + nx as usize]
                    })
                })
            })
            .collect();
        Mask {
            width: w,
            height: h,
            bits,
        }
    }

    pub fn flip_horizontal(&self) -> Mask {
        let (w, h) = (self.width, self.height);
        let bits = (0..w * h)
            .map(|i| self.bits[(i / w) * w + (w - 1 - i % w)])
            .collect();
        Mask {
            width: w,
            height: h,
            bits,
        }
    }

    /// Binary PGM (P5), 255 inside the mask.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disk,
    Square,
    Triangle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub shape: Shape,
    pub color: [f64; 3],
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub seed: u64,
    pub background: [f64; 3],
    pub subjects: Vec<SubjectMeta>,
}

/// RGB image in `[0, 1]` with optional per-subject masks.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    pub masks: Vec<Mask>,
    pub meta: ImageMeta,
}

impl SyntheticImage {
    /// Pixels are clamped into `[0, 1]`.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height * 3 || width == 0 || height == 0 {
            return Err(Error::InvalidShape {
                shape: vec![height, width, 3],
                len: pixels.len(),
            });
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                op: "image pixels".into(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels: pixels.into_iter().map(|p| p.clamp(0.0, 1.0)).collect(),
            masks: Vec::new(),
            meta: ImageMeta::default(),
        })
    }

    pub fn uniform(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let pixels = (0..width * height).flat_map(|_| rgb).collect();
        Self::from_pixels(width, height, pixels).expect("valid extents")
    }

    pub fn with_masks(mut self, masks: Vec<Mask>) -> Result<Self> {
        if masks
            .iter()
            .any(|m| m.width != self.width || m.height != self.height)
        {
            return Err(Error::Config("mask size differs from image size".into()));
        }
        self.masks = masks;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        for c in 0..3 {
            self.pixels[i + c] = rgb[c].clamp(0.0, 1.0);
        }
    }

    pub fn flip_horizontal(&self) -> SyntheticImage {
        let w = self.width;
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..w {
                out.set_pixel(x, y, self.pixel(w - 1 - x, y));
            }
        }
        out.masks = self.masks.iter().map(Mask::flip_horizontal).collect();
        for s in &mut out.meta.subjects {
            s.center[0] = w as f64 - s.center[0];
        }
        out
    }

    /// Adds one uniform offset in `[-amplitude, amplitude]` per channel.
    pub fn color_jitter(&self, amplitude: f64, rng: &mut impl Rng) -> SyntheticImage {
        let offsets: [f64; 3] = std::array::from_fn(|_| rng.random_range(-amplitude..=amplitude));
        let mut out = self.clone();
        for (i, p) in out.pixels.iter_mut().enumerate() {
            *p = (*p + offsets[i % 3]).clamp(0.0, 1.0);
        }
        out
    }

    /// Binary PPM (P6), 8 bits per channel.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|&p| (p * 255.0).round() as u8));
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        crate::files::write_atomic(path, &self.to_ppm())
    }
}
