use std::f64::consts::PI;
use std::sync::OnceLock;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use super::VisualError;

const SIDE: usize = 32;
const BLOCK: usize = 8;

/// 64-bit DCT perceptual hash of a grayscale render.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PHash64 {
    pub bits: u64,
    pub source_sha256: String,
}

impl PHash64 {
    pub fn hex(&self) -> String {
        format!("{:016x}", self.bits)
    }

    /// Bits as 0/1 reals, most significant first.
    pub fn to_features(&self) -> Vec<f64> {
        (0..64).rev().map(|i| ((self.bits >> i) & 1) as f64).collect()
    }
}

pub fn hamming(a: &PHash64, b: &PHash64) -> u32 {
    (a.bits ^ b.bits).count_ones()
}

/// Area-average resize to 32x32. Source pixel x spans [32x, 32x+32) and
/// output cell j spans [j*w, (j+1)*w) in the scaled axis, so every overlap
/// length is an integer and the sums are exact.
pub fn resize_area_average(image: &GrayImage) -> [[f64; SIDE]; SIDE] {
    let (w, h) = (image.width() as u64, image.height() as u64);
    let spans = |len: u64| -> Vec<Vec<(u32, u64)>> {
        (0..SIDE as u64)
            .map(|cell| {
                let (lo, hi) = (cell * len, (cell + 1) * len);
                let first = lo / SIDE as u64;
                let last = (hi - 1) / SIDE as u64;
                (first..=last)
                    .map(|px| {
                        let (plo, phi) = (px * SIDE as u64, (px + 1) * SIDE as u64);
                        (px as u32, phi.min(hi) - plo.max(lo))
                    })
                    .collect()
            })
            .collect()
    };
    let xs = spans(w);
    let ys = spans(h);
    let mut out = [[0.0; SIDE]; SIDE];
    for (row, yspan) in ys.iter().enumerate() {
        for (col, xspan) in xs.iter().enumerate() {
            let mut acc: u128 = 0;
            for &(py, oy) in yspan {
                for &(px, ox) in xspan {
                    acc += u128::from(image.get_pixel(px, py).0[0]) * u128::from(ox * oy);
                }
            }
            out[row][col] = acc as f64 / (w * h) as f64;
        }
    }
    out
}

fn cosine_table() -> &'static [[f64; SIDE]; SIDE] {
    static TABLE: OnceLock<[[f64; SIDE]; SIDE]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [[0.0; SIDE]; SIDE];
        for (u, row) in t.iter_mut().enumerate() {
            let alpha = if u == 0 { (1.0 / SIDE as f64).sqrt() } else { (2.0 / SIDE as f64).sqrt() };
            for (x, cell) in row.iter_mut().enumerate() {
                *cell = alpha * (PI * (2 * x + 1) as f64 * u as f64 / (2 * SIDE) as f64).cos();
            }
        }
        t
    })
}

/// Orthonormal 2D DCT-II, returning rows `0..BLOCK` and columns `0..=BLOCK`.
fn dct_low_frequencies(pixels: &[[f64; SIDE]; SIDE]) -> [[f64; BLOCK + 1]; BLOCK] {
    let cos = cosine_table();
    let mut rows = [[0.0; BLOCK + 1]; SIDE];
    for (y, line) in pixels.iter().enumerate() {
        for v in 0..=BLOCK {
            rows[y][v] = (0..SIDE).map(|x| cos[v][x] * line[x]).sum();
        }
    }
    let mut out = [[0.0; BLOCK + 1]; BLOCK];
    for (u, out_row) in out.iter_mut().enumerate() {
        for (v, cell) in out_row.iter_mut().enumerate() {
            *cell = (0..SIDE).map(|y| cos[u][y] * rows[y][v]).sum();
        }
    }
    out
}

/// The 64 coefficients thresholded by [`phash`]: the 8x8 low-frequency
/// block in row-major order without the DC term, then coefficient (0, 8).
/// Values are rounded to 6 decimals so near-ties resolve identically across
/// platforms.
pub fn phash_coefficients(image: &GrayImage) -> Result<[f64; 64], VisualError> {
    if image.width() < BLOCK as u32 || image.height() < BLOCK as u32 {
        return Err(VisualError::ImageTooSmall {
            width: image.width(),
            height: image.height(),
        });
    }
    let mut pixels = resize_area_average(image);
    let mean = pixels.iter().flatten().sum::<f64>() / (SIDE * SIDE) as f64;
    pixels.iter_mut().flatten().for_each(|p| *p -= mean);
    let dct = dct_low_frequencies(&pixels);
    let mut coeffs = [0.0; 64];
    let mut k = 0;
    for (u, row) in dct.iter().enumerate() {
        for (v, &c) in row.iter().take(BLOCK).enumerate() {
            if u == 0 && v == 0 {
                continue;
            }
            coeffs[k] = c;
            k += 1;
        }
    }
    coeffs[63] = dct[0][BLOCK];
    for c in &mut coeffs {
        *c = (*c * 1e6).round() / 1e6 + 0.0;
    }
    Ok(coeffs)
}

/// Median-thresholded DCT hash; coefficient `k` sets bit `63 - k`, and a
/// coefficient equal to the median yields 0.
pub fn phash(image: &GrayImage, source_sha256: &str) -> Result<PHash64, VisualError> {
    let coeffs = phash_coefficients(image)?;
    let mut sorted = coeffs;
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[31] + sorted[32]) / 2.0;
    let bits = coeffs
        .iter()
        .fold(0u64, |acc, &c| (acc << 1) | u64::from(c > median));
    Ok(PHash64 {
        bits,
        source_sha256: source_sha256.to_string(),
    })
}
