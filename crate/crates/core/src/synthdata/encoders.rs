//! Frozen toy encoders.
//!
//! Content and style encoders are fixed random linear projections of pooled
//! patch statistics; the structure encoder pools edge statistics onto the
//! latent grid. None of them expose their weights for mutation, so no
//! parameter partition can reach them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::image::{Mask, SyntheticImage};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::structure_preservation::StructureCondition;
use crate::style_injection::Embedding;

const CONTENT_PROJECTION_SEED: u64 = 0xC0_47E4_7001;
const STYLE_PROJECTION_SEED: u64 = 0x57_11E0_7002;
const COLOR_BINS: usize = 4;
const ORIENTATION_BINS: usize = 4;
/// Frequencies (in half-cycles across the image) of the centroid code.
const CENTROID_FREQS: [f64; 2] = [1.0, 2.0];
const CONTENT_FEATURES: usize = 6 + ORIENTATION_BINS + 4 * CENTROID_FREQS.len() + 1;
const STYLE_FEATURES: usize = 3 * COLOR_BINS + 6 + ORIENTATION_BINS + 1;
/// Channels of the structure condition: mean edge, peak edge, surround mean, enclosure.
pub const STRUCTURE_CHANNELS: usize = 4;

/// Per-pixel colour gradients `(gx, gy)` summed in quadrature over channels,
/// central differences with replicated borders.
pub fn gradients(img: &SyntheticImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (l, r) = (
                img.pixel(x.saturating_sub(1), y),
                img.pixel((x + 1).min(w - 1), y),
            );
            let (u, d) = (
                img.pixel(x, y.saturating_sub(1)),
                img.pixel(x, (y + 1).min(h - 1)),
            );
            let sx: f64 = (0..3).map(|c| ((r[c] - l[c]) / 2.0).powi(2)).sum();
            let sy: f64 = (0..3).map(|c| ((d[c] - u[c]) / 2.0).powi(2)).sum();
            // Sign follows the summed channel difference so orientation survives.
            let sign_x = (0..3).map(|c| r[c] - l[c]).sum::<f64>().signum();
            let sign_y = (0..3).map(|c| d[c] - u[c]).sum::<f64>().signum();
            gx[y * w + x] = sign_x * sx.sqrt();
            gy[y * w + x] = sign_y * sy.sqrt();
        }
    }
    (gx, gy)
}

/// Gradient magnitude per pixel.
pub fn edge_magnitude(img: &SyntheticImage) -> Vec<f64> {
    let (gx, gy) = gradients(img);
    gx.iter()
        .zip(&gy)
        .map(|(a, b)| (a * a + b * b).sqrt())
        .collect()
}

/// Seeded Gaussian projection, orthonormalized along its shorter side so
/// no feature direction is lost when `rows ≤ d`.
fn projection(rows: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Tensor::randn(&[rows, d], 1.0, &mut rng);
    let (n, len) = (rows.min(d), rows.max(d));
    let vector = |k: usize, i: usize| if rows <= d { g.at(k, i) } else { g.at(i, k) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v: Vec<f64> = (0..len).map(|i| vector(k, i)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    Tensor::from_fn(&[rows, d], |flat| {
        let (r, c) = (flat / d, flat % d);
        if rows <= d {
            basis[r][c]
        } else {
            basis[c][r]
        }
    })
}

fn project(features: &[f64], proj: &Tensor) -> Result<Embedding> {
    let d = proj.shape()[1];
    let out = (0..d)
        .map(|j| {
            features
                .iter()
                .enumerate()
                .map(|(i, f)| f * proj.at(i, j))
                .sum()
        })
        .collect();
    Embedding::new(out)
}

fn color_histogram(img: &SyntheticImage, region: &[usize], out: &mut Vec<f64>) {
    let n = region.len() as f64;
    for c in 0..3 {
        let mut bins = [0.0; COLOR_BINS];
        for &i in region {
            let v = img.pixels()[i * 3 + c];
            let b = ((v * COLOR_BINS as f64) as usize).min(COLOR_BINS - 1);
            bins[b] += 1.0 / n;
        }
        out.extend(bins);
    }
}

fn orientation_histogram(gx: &[f64], gy: &[f64], region: &[usize], out: &mut Vec<f64>) {
    let mut bins = [0.0; ORIENTATION_BINS];
    for &i in region {
        let mag = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
        if mag == 0.0 {
            continue;
        }
        let angle = gy[i].atan2(gx[i]).rem_euclid(std::f64::consts::PI);
        let b = ((angle / std::f64::consts::PI * ORIENTATION_BINS as f64).round() as usize)
            % ORIENTATION_BINS;
        bins[b] += mag;
    }
    out.extend(bins.map(|b| 4.0 * b / region.len() as f64));
}

/// Content embedding of the whole image or of one masked region.
#[derive(Clone, Debug)]
pub struct ContentEncoder {
    proj: Tensor,
}

impl ContentEncoder {
    pub fn new(d: usize) -> Self {
        Self {
            proj: projection(CONTENT_FEATURES, d, CONTENT_PROJECTION_SEED),
        }
    }

    pub fn width(&self) -> usize {
        self.proj.shape()[1]
    }

    pub fn encode(&self, img: &SyntheticImage) -> Result<Embedding> {
        self.encode_region(img, &Mask::full(img.width(), img.height()))
    }

    /// Mean and spread of colour, edge orientations, and where the region
    /// sits: a sinusoidal code of its centroid plus its radial extent.
    pub fn encode_region(&self, img: &SyntheticImage, mask: &Mask) -> Result<Embedding> {
        let (w, h) = (img.width(), img.height());
        if mask.width() != w || mask.height() != h {
            return Err(Error::Config("mask size differs from image size".into()));
        }
        let region: Vec<usize> = (0..w * h).filter(|&i| mask.bits()[i]).collect();
        if region.is_empty() {
            return Err(Error::EmptyMasks);
        }
        let n = region.len() as f64;
        let mut f = Vec::with_capacity(CONTENT_FEATURES);
        for c in 0..3 {
            let mean = region.iter().map(|&i| img.pixels()[i * 3 + c]).sum::<f64>() / n;
            let var = region
                .iter()
                .map(|&i| (img.pixels()[i * 3 + c] - mean).powi(2))
                .sum::<f64>()
                / n;
            f.push(2.0 * mean - 1.0);
            f.push(2.0 * var.sqrt());
        }
        let (gx, gy) = gradients(img);
        orientation_histogram(&gx, &gy, &region, &mut f);
        let (mut cx, mut cy) = (0.0, 0.0);
        for &i in &region {
            cx += ((i % w) as f64 + 0.5) / (w as f64 * n);
            cy += ((i / w) as f64 + 0.5) / (h as f64 * n);
        }
        for u in [cy, cx] {
            for k in CENTROID_FREQS {
                let arg = std::f64::consts::PI * k * u;
                f.extend([arg.sin(), arg.cos()]);
            }
        }
        let spread = region
            .iter()
            .map(|&i| {
                let dx = ((i % w) as f64 + 0.5) / w as f64 - cx;
                let dy = ((i / w) as f64 + 0.5) / h as f64 - cy;
                dx * dx + dy * dy
            })
            .sum::<f64>()
            / n;
        f.push(4.0 * spread.sqrt());
        project(&f, &self.proj)
    }
}

/// Style embedding from global colour and texture statistics.
#[derive(Clone, Debug)]
pub struct StyleEncoder {
    proj: Tensor,
}

impl StyleEncoder {
    pub fn new(d: usize) -> Self {
        Self {
            proj: projection(STYLE_FEATURES, d, STYLE_PROJECTION_SEED),
        }
    }

    pub fn encode(&self, img: &SyntheticImage) -> Result<Embedding> {
        let region: Vec<usize> = (0..img.width() * img.height()).collect();
        let n = region.len() as f64;
        let mut f = Vec::with_capacity(STYLE_FEATURES);
        color_histogram(img, &region, &mut f);
        for (mean, std) in channel_stats(img) {
            f.push(2.0 * mean - 1.0);
            f.push(4.0 * std);
        }
        let (gx, gy) = gradients(img);
        orientation_histogram(&gx, &gy, &region, &mut f);
        let mean_mag = gx
            .iter()
            .zip(&gy)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .sum::<f64>()
            / n;
        f.push(4.0 * mean_mag);
        project(&f, &self.proj)
    }
}

/// Per-channel population mean and standard deviation.
pub fn channel_stats(img: &SyntheticImage) -> [(f64, f64); 3] {
    let n = (img.width() * img.height()) as f64;
    std::array::from_fn(|c| {
        let vals = img.pixels().iter().skip(c).step_by(3);
        let mean = vals.clone().sum::<f64>() / n;
        let var = vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    })
}

/// Edge statistics pooled onto an `H×W` grid, per cell:
///
/// 0. mean edge magnitude inside the cell,
/// 1. peak edge magnitude inside the cell,
/// 2. mean edge magnitude over the surrounding window,
/// 3. enclosure: the weakest of the strongest edges met by rays cast
///    left, right, up, and down from the cell centre, so cells inside an
///    outline score high and cells between outlines score low.
///
/// Magnitudes below [`EDGE_FLOOR`] are treated as flat so background
/// texture does not register.
#[derive(Clone, Copy, Debug)]
pub struct StructureEncoder {
    pub grid: (usize, usize),
}

/// Edge magnitudes at or below this are ignored by the structure encoder.
pub const EDGE_FLOOR: f64 = 0.05;
/// Half-width of the surround window, in cells.
const SURROUND_CELLS: usize = 2;
/// Length of the enclosure rays, in pixels.
const ENCLOSURE_REACH: usize = 12;

fn enclosure(mag: &[f64], w: usize, h: usize, x: usize, y: usize) -> f64 {
    let ray = |dx: isize, dy: isize| {
        (1..=ENCLOSURE_REACH as isize)
            .map(|s| (x as isize + s * dx, y as isize + s * dy))
            .take_while(|&(px, py)| px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h)
            .map(|(px, py)| mag[py as usize * w + px as usize])
            .fold(0.0, f64::max)
    };
    [(1, 0), (-1, 0), (0, 1), (0, -1)]
        .map(|(dx, dy)| ray(dx, dy))
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

impl StructureEncoder {
    pub fn new(grid: (usize, usize)) -> Self {
        Self { grid }
    }

    pub fn encode(&self, img: &SyntheticImage) -> Result<StructureCondition> {
        let (gh, gw) = self.grid;
        let (w, h) = (img.width(), img.height());
        if w % gw != 0 || h % gh != 0 {
            return Err(Error::Config(format!(
                "image {w}×{h} does not tile the {gh}×{gw} latent grid"
            )));
        }
        let (cw, ch) = (w / gw, h / gh);
        let mag: Vec<f64> = edge_magnitude(img)
            .into_iter()
            .map(|m| (m - EDGE_FLOOR).max(0.0))
            .collect();
        let mut feat = Vec::with_capacity(gh * gw * STRUCTURE_CHANNELS);
        for cy in 0..gh {
            for cx in 0..gw {
                let (mut inner, mut peak) = (0.0, 0.0f64);
                for y in cy * ch..(cy + 1) * ch {
                    for x in cx * cw..(cx + 1) * cw {
                        inner += mag[y * w + x];
                        peak = peak.max(mag[y * w + x]);
                    }
                }
                let ys =
                    cy.saturating_sub(SURROUND_CELLS) * ch..(cy + SURROUND_CELLS + 1).min(gh) * ch;
                let xs =
                    cx.saturating_sub(SURROUND_CELLS) * cw..(cx + SURROUND_CELLS + 1).min(gw) * cw;
                let count = (ys.len() * xs.len()) as f64;
                let total: f64 = ys
                    .flat_map(|y| xs.clone().map(move |x| y * w + x))
                    .map(|i| mag[i])
                    .sum();
                let enclosure = enclosure(&mag, w, h, cx * cw + cw / 2, cy * ch + ch / 2);
                let n = (cw * ch) as f64;
                feat.extend([inner / n, peak, total / count, enclosure].map(|v| v.clamp(0.0, 1.0)));
            }
        }
        StructureCondition::new(Tensor::new(&[gh, gw, STRUCTURE_CHANNELS], feat)?)
    }
}

/// Average-pools RGB onto the latent grid; channels `0..3` hold
/// `2·rgb − 1`, the rest are zero.
pub fn encode_latent(img: &SyntheticImage, grid: (usize, usize), d: usize) -> Result<Tensor> {
    let (gh, gw) = grid;
    let (w, h) = (img.width(), img.height());
    if w % gw != 0 || h % gh != 0 || d < 3 {
        return Err(Error::Config(format!(
            "cannot encode {w}×{h} image onto {gh}×{gw}×{d} latent"
        )));
    }
    let (cw, ch) = (w / gw, h / gh);
    let mut out = vec![0.0; gh * gw * d];
    for cy in 0..gh {
        for cx in 0..gw {
            for c in 0..3 {
                let mut acc = 0.0;
                for y in cy * ch..(cy + 1) * ch {
                    for x in cx * cw..(cx + 1) * cw {
                        acc += img.pixel(x, y)[c];
                    }
                }
                out[(cy * gw + cx) * d + c] = 2.0 * acc / (cw * ch) as f64 - 1.0;
            }
        }
    }
    Tensor::new(&[gh * gw, d], out)
}

/// The three frozen encoders used to condition the pipeline.
#[derive(Clone, Debug)]
pub struct Encoders {
    pub content: ContentEncoder,
    pub style: StyleEncoder,
    pub structure: StructureEncoder,
}

impl Encoders {
    pub fn new(d: usize, grid: (usize, usize)) -> Self {
        Self {
            content: ContentEncoder::new(d),
            style: StyleEncoder::new(d),
            structure: StructureEncoder::new(grid),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{gen_content, StyleSpec};

    #[test]
    fn identical_images_identical_embeddings() {
        let enc = ContentEncoder::new(16);
        let a = gen_content(3, 2).unwrap();
        assert_eq!(enc.encode(&a).unwrap(), enc.encode(&a.clone()).unwrap());
        let s = StyleEncoder::new(16);
        let r = StyleSpec::generate(3).render_reference();
        assert_eq!(s.encode(&r).unwrap(), s.encode(&r).unwrap());
    }

    #[test]
    fn gray_image_has_zero_structure() {
        let img = SyntheticImage::uniform(32, 32, [0.5; 3]);
        let cond = StructureEncoder::new((8, 8)).encode(&img).unwrap();
        assert_eq!(cond.feat().shape(), &[8, 8, STRUCTURE_CHANNELS]);
        assert!(cond.feat().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn enclosure_separates_inside_from_outside() {
        let mut img = SyntheticImage::uniform(32, 32, [0.5, 0.5, 0.5]);
        for y in 0..32 {
            for x in 0..32 {
                let (dx, dy) = (x as f64 + 0.5 - 14.0, y as f64 + 0.5 - 14.0);
                if dx * dx + dy * dy <= 64.0 {
                    img.set_pixel(x, y, [0.9, 0.1, 0.1]);
                }
            }
        }
        let cond = StructureEncoder::new((8, 8)).encode(&img).unwrap();
        let f = cond.feat();
        let at = |cy: usize, cx: usize, c: usize| f.data()[(cy * 8 + cx) * 4 + c];
        assert!(at(3, 3, 3) > 0.2, "inside {}", at(3, 3, 3));
        assert_eq!(at(0, 0, 3), 0.0);
        // Right of the disk: edges only to the left.
        assert_eq!(at(3, 7, 3), 0.0);
        assert_eq!(at(3, 3, 0), 0.0);
        assert!(at(3, 3, 2) > 0.0);
    }

    #[test]
    fn structure_marks_subject_boundaries() {
        let img = gen_content(9, 1).unwrap();
        let cond = StructureEncoder::new((8, 8)).encode(&img).unwrap();
        let peak = cond
            .feat()
            .data()
            .iter()
            .skip(3)
            .step_by(4)
            .fold(0.0f64, |a, &b| a.max(b));
        assert!(peak > 0.1);
    }

    #[test]
    fn empty_region_is_error() {
        let enc = ContentEncoder::new(8);
        let img = gen_content(1, 1).unwrap();
        let empty = Mask::new(32, 32, vec![false; 1024]).unwrap();
        assert!(matches!(
            enc.encode_region(&img, &empty),
            Err(Error::EmptyMasks)
        ));
    }

    #[test]
    fn latent_encoding_of_gray_is_zero() {
        let img = SyntheticImage::uniform(32, 32, [0.5; 3]);
        let z = encode_latent(&img, (8, 8), 16).unwrap();
        assert!(z.data().iter().all(|&x| x == 0.0));
    }
}
