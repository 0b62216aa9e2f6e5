//! Excitation diagnostics: a log-power spectrogram image, a zoomed
//! waveform image, and the arrays behind both so the rendering stays
//! inspectable by other tools.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::dsp::{stft, Waveform, WindowKind, EPS_POW};
use crate::error::{Error, Result};
use crate::features::F0Contour;
use crate::mat::Mat;
use crate::store::save_arrays;

const SPEC_FRAME_SHIFT: usize = 80;
const SPEC_FRAME_SIZE: usize = 512;
const SPEC_DFT_BINS: usize = 512;
const DB_RANGE: f64 = 80.0;
const ZOOM_PERIODS: f64 = 4.0;

/// Dark-blue -> teal -> yellow ramp for t in [0, 1].
fn heat_color(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0);
    let stops = [(13.0, 8.0, 135.0), (16.0, 128.0, 168.0), (53.0, 183.0, 121.0), (253.0, 231.0, 37.0)];
    let x = t * (stops.len() - 1) as f64;
    let i = (x.floor() as usize).min(stops.len() - 2);
    let f = x - i as f64;
    let (r0, g0, b0) = stops[i];
    let (r1, g1, b1) = stops[i + 1];
    Rgb([
        (r0 + f * (r1 - r0)).round() as u8,
        (g0 + f * (g1 - g0)).round() as u8,
        (b0 + f * (b1 - b0)).round() as u8,
    ])
}

/// Log-power spectrogram in dB, rows = bins (DC first), cols = frames.
fn spectrogram_db(signal: &[f64], sample_rate: u32) -> Result<Mat> {
    let w = Waveform::new(signal.to_vec(), sample_rate)?;
    let grid = stft(&w, SPEC_FRAME_SHIFT, SPEC_FRAME_SIZE, SPEC_DFT_BINS, WindowKind::Hann)?;
    let mut m = Mat::zeros(grid.bins, grid.frames);
    for t in 0..grid.frames {
        for k in 0..grid.bins {
            m.col_mut(t)[k] = 10.0 * (grid.power(t, k) + EPS_POW).log10();
        }
    }
    Ok(m)
}

fn spectrogram_image(db: &Mat) -> RgbImage {
    let peak = db.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (bins, frames) = db.shape();
    // upscale small renders so single frames stay visible
    let sx = (600 / frames.max(1)).clamp(1, 8) as u32;
    let mut img = RgbImage::new(frames as u32 * sx, bins as u32);
    for t in 0..frames {
        for k in 0..bins {
            let v = ((db.col(t)[k] - peak) / DB_RANGE + 1.0).clamp(0.0, 1.0);
            let y = (bins - 1 - k) as u32;
            for dx in 0..sx {
                img.put_pixel(t as u32 * sx + dx, y, heat_color(v));
            }
        }
    }
    img
}

/// Window of ~4 pitch periods centered on the middle voiced frame, falling
/// back to the signal center when nothing is voiced.
fn zoom_range(signal_len: usize, f0: &F0Contour) -> (usize, usize) {
    let voiced: Vec<usize> =
        (0..f0.frames()).filter(|&i| f0.values[i] > 0.0).collect();
    let (center, span) = match voiced.len() {
        0 => (signal_len / 2, 400.min(signal_len)),
        n => {
            let mid = voiced[n / 2];
            let mut vals: Vec<f64> = voiced.iter().map(|&i| f0.values[i]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = vals[vals.len() / 2];
            let span =
                ((ZOOM_PERIODS * f0.sample_rate as f64 / median).round() as usize).max(64);
            (mid * f0.frame_shift + f0.frame_shift / 2, span.min(signal_len))
        }
    };
    let start = center.saturating_sub(span / 2).min(signal_len - span);
    (start, span)
}

fn waveform_image(segment: &[f64]) -> RgbImage {
    let (w, h) = (900u32, 300u32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let mid = h as f64 / 2.0;
    let peak = segment.iter().fold(1e-9f64, |m, &v| m.max(v.abs()));
    for x in 0..w {
        img.put_pixel(x, mid as u32, Rgb([220, 220, 220]));
    }
    let to_xy = |i: usize| -> (i64, i64) {
        let x = if segment.len() > 1 {
            i as f64 * (w - 1) as f64 / (segment.len() - 1) as f64
        } else {
            0.0
        };
        let y = mid - segment[i] / peak * (mid - 4.0);
        (x.round() as i64, y.round() as i64)
    };
    let ink = Rgb([24, 60, 160]);
    for i in 1..segment.len() {
        let (x0, y0) = to_xy(i - 1);
        let (x1, y1) = to_xy(i);
        // Bresenham segment between consecutive samples
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            if (0..w as i64).contains(&x) && (0..h as i64).contains(&y) {
                img.put_pixel(x as u32, y as u32, ink);
            }
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }
    img
}

#[derive(Debug, Clone)]
pub struct PlotOutputs {
    pub spectrogram_png: PathBuf,
    pub waveform_png: PathBuf,
    pub arrays_dir: PathBuf,
}

/// Renders both diagnostic images for one excitation signal and dumps the
/// plotted arrays next to them.
pub fn plot_excitation(
    excitation: &[f64],
    f0: &F0Contour,
    out_dir: &Path,
    id: &str,
) -> Result<PlotOutputs> {
    if excitation.is_empty() {
        return Err(Error::Data("cannot plot an empty excitation".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let db = spectrogram_db(excitation, f0.sample_rate)?;
    let spectrogram_png = out_dir.join(format!("{id}-excitation-spectrogram.png"));
    spectrogram_image(&db)
        .save(&spectrogram_png)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", spectrogram_png.display())))?;

    let (start, span) = zoom_range(excitation.len(), f0);
    let segment = &excitation[start..start + span];
    let waveform_png = out_dir.join(format!("{id}-excitation-waveform.png"));
    waveform_image(segment)
        .save(&waveform_png)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", waveform_png.display())))?;

    let arrays_dir = out_dir.join(format!("{id}-arrays"));
    let excitation_mat = Mat::from_row(excitation);
    let zoom_mat = Mat::from_row(segment);
    let meta = serde_json::json!({
        "id": id,
        "sample_rate": f0.sample_rate,
        "zoom_start": start,
        "spectrogram": {
            "frame_shift": SPEC_FRAME_SHIFT,
            "frame_size": SPEC_FRAME_SIZE,
            "dft_bins": SPEC_DFT_BINS,
        },
    });
    save_arrays(
        &arrays_dir,
        meta,
        &[
            ("spectrogram_db".to_string(), &db),
            ("excitation".to_string(), &excitation_mat),
            ("waveform_zoom".to_string(), &zoom_mat),
        ],
    )?;
    Ok(PlotOutputs { spectrogram_png, waveform_png, arrays_dir })
}
