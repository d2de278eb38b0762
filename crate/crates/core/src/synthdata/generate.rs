//! Deterministic renderers for content scenes, style references, and the
//! stylized targets the denoiser is trained toward.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::{ImageMeta, Mask, Shape, SubjectMeta, SyntheticImage};
use crate::error::{Error, Result};

pub const IMAGE_SIZE: usize = 32;
pub const MAX_SUBJECTS: usize = 4;
const PLACEMENT_ATTEMPTS: usize = 2000;
const RESTART_AFTER: usize = 40;
const COLOR_ATTEMPTS: usize = 64;
const BACKGROUND_TEXTURE: f64 = 0.015;
/// Styles render a light background behind darker subjects.
const BACKGROUND_ANCHOR: std::ops::Range<f64> = 0.65..0.95;
const SUBJECT_ANCHOR: std::ops::Range<f64> = 0.05..0.4;
const PALETTE_SEPARATION: f64 = 0.2;
/// Weight of the content colour kept inside stylized subjects.
const CONTENT_COLOR_KEEP: f64 = 0.3;

fn rgb_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn subject_mask(shape: Shape, cx: f64, cy: f64, r: f64, size: usize) -> Mask {
    let bits = (0..size * size)
        .map(|i| {
            let (px, py) = ((i % size) as f64 + 0.5, (i / size) as f64 + 0.5);
            let (dx, dy) = (px - cx, py - cy);
            match shape {
                Shape::Disk => dx * dx + dy * dy <= r * r,
                Shape::Square => {
                    let half = 0.85 * r;
                    dx.abs() <= half && dy.abs() <= half
                }
                Shape::Triangle => {
                    // Apex up, base at cy + r.
                    let t = (dy + r) / (2.0 * r);
                    (0.0..=1.0).contains(&t) && dx.abs() <= r * t
                }
            }
        })
        .collect();
    Mask::new(size, size, bits).expect("square grid")
}

/// Places `n_subjects` non-touching shapes with distinct colours on a
/// lightly textured background.
pub fn gen_content(seed: u64, n_subjects: usize) -> Result<SyntheticImage> {
    if !(1..=MAX_SUBJECTS).contains(&n_subjects) {
        return Err(Error::Config(format!(
            "subject count {n_subjects} outside 1..={MAX_SUBJECTS}"
        )));
    }
    let size = IMAGE_SIZE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.3..0.7));
    let freq = [rng.random_range(0.2..0.6), rng.random_range(0.2..0.6)];
    let phase = rng.random_range(0.0..2.0 * PI);

    let shapes = [Shape::Disk, Shape::Square, Shape::Triangle];
    let mut masks: Vec<Mask> = Vec::new();
    let mut subjects: Vec<SubjectMeta> = Vec::new();
    let mut attempts = 0;
    let mut since_progress = 0;
    while subjects.len() < n_subjects {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(Error::Placement {
                subjects: n_subjects,
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
        // Early subjects can box in later ones; start the layout over.
        since_progress += 1;
        if since_progress > RESTART_AFTER {
            masks.clear();
            subjects.clear();
            since_progress = 0;
        }
        let shape = shapes[rng.random_range(0..shapes.len())];
        let r = if n_subjects > 2 {
            rng.random_range(3.5..5.0)
        } else {
            rng.random_range(5.0..8.0)
        };
        let margin = r + 1.0;
        let cx = rng.random_range(margin..size as f64 - margin);
        let cy = rng.random_range(margin..size as f64 - margin);
        let mask = subject_mask(shape, cx, cy, r, size);
        let grown = mask.dilate().dilate();
        if masks.iter().any(|m| m.intersects(&grown)) {
            continue;
        }
        let color = (0..COLOR_ATTEMPTS)
            .map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0)))
            .find(|&c: &[f64; 3]| {
                rgb_distance(c, background) >= 0.4
                    && subjects.iter().all(|s| rgb_distance(s.color, c) >= 0.4)
            });
        let Some(color) = color else {
            continue;
        };
        since_progress = 0;
        masks.push(mask);
        subjects.push(SubjectMeta {
            shape,
            color,
            center: [cx, cy],
            radius: r,
        });
    }

    let mut img = SyntheticImage::uniform(size, size, background);
    for y in 0..size {
        for x in 0..size {
            let tex = BACKGROUND_TEXTURE * (freq[0] * x as f64 + freq[1] * y as f64 + phase).sin();
            let base = masks
                .iter()
                .position(|m| m.get(x, y))
                .map_or(background, |j| subjects[j].color);
            img.set_pixel(x, y, base.map(|c| c + tex));
        }
    }
    img.meta = ImageMeta {
        seed,
        background,
        subjects,
    };
    img.with_masks(masks)
}

/// Palette, stripe frequency, and contrast of one style.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleSpec {
    pub palette: [[f64; 3]; 3],
    /// Stripe cycles across the image.
    pub frequency: f64,
    pub contrast: f64,
    pub seed: u64,
}

impl StyleSpec {
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5717_e5ee_d000_0000);
        let mut palette = [[0.0; 3]; 3];
        let mut placed = 0;
        while placed < 3 {
            let range = if placed == 0 {
                BACKGROUND_ANCHOR
            } else {
                SUBJECT_ANCHOR
            };
            let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(range.clone()));
            if palette[..placed]
                .iter()
                .all(|p| rgb_distance(*p, c) >= PALETTE_SEPARATION)
            {
                palette[placed] = c;
                placed += 1;
            }
        }
        Self {
            palette,
            frequency: rng.random_range(1.0..4.0),
            contrast: rng.random_range(0.1..0.4),
            seed,
        }
    }

    fn texture(&self, x: usize, y: usize) -> f64 {
        let u = (x as f64 - y as f64) / IMAGE_SIZE as f64;
        1.0 + 0.25 * self.contrast * (2.0 * PI * self.frequency * u).sin()
    }

    /// Diagonal bands cycling through the palette under the style texture.
    pub fn render_reference(&self) -> SyntheticImage {
        let size = IMAGE_SIZE;
        let mut img = SyntheticImage::uniform(size, size, [0.0; 3]);
        for y in 0..size {
            for x in 0..size {
                let s = (2.0 * PI * self.frequency * (x + y) as f64 / (2 * size) as f64).sin();
                let anchor = if s > 0.33 {
                    self.palette[1]
                } else if s < -0.33 {
                    self.palette[2]
                } else {
                    self.palette[0]
                };
                let t = self.texture(x, y);
                img.set_pixel(x, y, anchor.map(|c| c * t));
            }
        }
        img.meta.seed = self.seed;
        img
    }

    /// Re-renders the content layout in this style: background takes the
    /// first anchor, subject `j` mixes anchor `1 + j mod 2` with its own
    /// colour. Masks carry over.
    pub fn stylize(&self, content: &SyntheticImage) -> SyntheticImage {
        let (w, h) = (content.width(), content.height());
        let mut img = SyntheticImage::uniform(w, h, self.palette[0]);
        for y in 0..h {
            for x in 0..w {
                let base = match content.masks.iter().position(|m| m.get(x, y)) {
                    Some(j) => {
                        let anchor = self.palette[1 + j % 2];
                        let own = content.meta.subjects.get(j).map_or(anchor, |s| s.color);
                        std::array::from_fn(|c| {
                            (1.0 - CONTENT_COLOR_KEEP) * anchor[c] + CONTENT_COLOR_KEEP * own[c]
                        })
                    }
                    None => self.palette[0],
                };
                let t = self.texture(x, y);
                img.set_pixel(x, y, base.map(|c: f64| c * t));
            }
        }
        img.meta = content.meta.clone();
        img.masks = content.masks.clone();
        img
    }
}
