//! Sample grids and score plots. Data always goes to CSV (or PNG for image
//! samples); the rendered figures are optional extras.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{OsdaError, Result};
use crate::miner::ScoreStats;

/// A named group of flat samples, e.g. `("pristine", rows)`.
pub type SampleGroup<'a> = (&'a str, &'a [Vec<f64>]);

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [127, 127, 127],
];

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path)
        .map_err(|e| OsdaError::io(path, std::io::Error::other(e.to_string())))
}

/// `kind,index,dim0..dimN`, one row per sample.
pub fn write_samples_csv(groups: &[SampleGroup], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dim = groups
        .iter()
        .find_map(|(_, rows)| rows.first().map(Vec::len))
        .unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["kind".to_string(), "index".to_string()];
    header.extend((0..dim).map(|d| format!("dim{d}")));
    w.write_record(&header)?;
    for (kind, rows) in groups {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(OsdaError::invalid("samples of one grid must share a length"));
            }
            let mut rec = vec![kind.to_string(), i.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| OsdaError::io(path, e))
}

/// One row of tiles per group, at most `per_row` tiles each. Samples are
/// C×H×W in [0, 1] with C = 1 or 3.
pub fn write_image_grid(
    groups: &[SampleGroup],
    (c, h, w): (usize, usize, usize),
    per_row: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    if c != 1 && c != 3 {
        return Err(OsdaError::invalid(format!("image grid needs 1 or 3 channels, got {c}")));
    }
    let pad = 2;
    let cols = per_row.max(1);
    let width = cols * (w + pad) + pad;
    let height = groups.len().max(1) * (h + pad) + pad;
    let mut img = RgbImage::from_pixel(width as u32, height as u32, Rgb([255, 255, 255]));
    for (r, (_, rows)) in groups.iter().enumerate() {
        for (k, sample) in rows.iter().take(cols).enumerate() {
            if sample.len() != c * h * w {
                return Err(OsdaError::invalid("image sample does not match the grid shape"));
            }
            let (x0, y0) = (pad + k * (w + pad), pad + r * (h + pad));
            for y in 0..h {
                for x in 0..w {
                    let at = |ch: usize| (sample[ch * h * w + y * w + x].clamp(0.0, 1.0) * 255.0).round() as u8;
                    let px = if c == 1 { [at(0); 3] } else { [at(0), at(1), at(2)] };
                    img.put_pixel((x0 + x) as u32, (y0 + y) as u32, Rgb(px));
                }
            }
        }
    }
    save(&img, path.as_ref())
}

fn square(img: &mut RgbImage, x: i64, y: i64, r: i64, col: [u8; 3]) {
    for dy in -r..=r {
        for dx in -r..=r {
            let (px, py) = (x + dx, y + dy);
            if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                img.put_pixel(px as u32, py as u32, Rgb(col));
            }
        }
    }
}

/// Scatter of the first two dimensions, one colour per group in palette
/// order (blue, red, green, orange, ...).
pub fn write_scatter(groups: &[SampleGroup], path: impl AsRef<Path>) -> Result<()> {
    let size = 480i64;
    let pts = groups.iter().flat_map(|(_, rows)| rows.iter()).filter(|r| r.len() >= 2);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        lo = lo.min(p[0]).min(p[1]);
        hi = hi.max(p[0]).max(p[1]);
    }
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let margin = 0.05 * (hi - lo);
    let (lo, span) = (lo - margin, hi - lo + 2.0 * margin);
    let to_px = |v: f64| ((v - lo) / span * (size - 1) as f64).round() as i64;
    let mut img = RgbImage::from_pixel(size as u32, size as u32, Rgb([255, 255, 255]));
    for (g, (_, rows)) in groups.iter().enumerate() {
        for p in rows.iter().filter(|r| r.len() >= 2) {
            square(&mut img, to_px(p[0]), size - 1 - to_px(p[1]), 1, PALETTE[g % PALETTE.len()]);
        }
    }
    save(&img, path.as_ref())
}

/// Box plot of rejection-score statistics on a [0, 1] vertical axis.
pub fn write_score_boxes(stats: &[ScoreStats], path: impl AsRef<Path>) -> Result<()> {
    let (width, height, pad) = (120 * stats.len().max(1) as u32, 300u32, 20u32);
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let y = |v: f64| (pad as f64 + (1.0 - v.clamp(0.0, 1.0)) * (height - 2 * pad) as f64).round() as u32;
    for (i, s) in stats.iter().enumerate() {
        if s.count == 0 {
            continue;
        }
        let col = Rgb(PALETTE[i % PALETTE.len()]);
        let (x0, x1) = (i as u32 * 120 + 30, i as u32 * 120 + 90);
        let xm = (x0 + x1) / 2;
        for yy in y(s.max)..=y(s.min) {
            img.put_pixel(xm, yy, col);
        }
        for yy in y(s.q3)..=y(s.q1) {
            img.put_pixel(x0, yy, col);
            img.put_pixel(x1, yy, col);
        }
        for xx in x0..=x1 {
            for v in [s.q1, s.q3, s.median] {
                img.put_pixel(xx, y(v), col);
            }
        }
    }
    save(&img, path.as_ref())
}
