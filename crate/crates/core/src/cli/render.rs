//! Static PNG heatmaps of index-keyed tables.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};

const CELL: u32 = 24;

/// Dark blue → yellow ramp for `t` in `[0, 1]`.
fn color(t: f64) -> Rgb<u8> {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let r = 255.0 * t.powf(0.8);
    let g = 40.0 + 200.0 * t;
    let b = 120.0 * (1.0 - t) + 30.0;
    Rgb([r as u8, g as u8, b as u8])
}

/// Encodes `values[row][col]` as a heatmap scaled between `lo` and `hi`.
/// Missing cells (`None`) are drawn white.
pub fn heatmap_png(values: &[Vec<Option<f64>>], lo: f64, hi: f64) -> Result<Vec<u8>> {
    let rows = values.len() as u32;
    let cols = values.iter().map(Vec::len).max().unwrap_or(0) as u32;
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("values", "nothing to draw"));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img = RgbImage::from_fn(cols * CELL, rows * CELL, |x, y| {
        let (i, j) = ((y / CELL) as usize, (x / CELL) as usize);
        match values[i].get(j).copied().flatten() {
            Some(v) => color((v - lo) / span),
            None => Rgb([255, 255, 255]),
        }
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(out.into_inner())
}
