//! Loss-curve emission: mean ± one standard deviation over seeds, written
//! both as plain CSV and as a deterministically rendered PNG.

use std::io::Write;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use super::RunRecord;

/// One policy's loss curve aggregated over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    pub label: String,
    pub ts: Vec<u64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Aggregates records of one run (any number of seeds) into a curve.
pub fn curve_from_records(label: &str, records: &[RunRecord]) -> LossCurve {
    let mut ts: Vec<u64> = records.iter().map(|r| r.t).collect();
    ts.sort_unstable();
    ts.dedup();
    let mut mean = Vec::with_capacity(ts.len());
    let mut std = Vec::with_capacity(ts.len());
    for &t in &ts {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.t == t)
            .map(|r| r.loss_total)
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
        mean.push(m);
        std.push(v.sqrt());
    }
    LossCurve {
        label: label.to_string(),
        ts,
        mean,
        std,
    }
}

pub fn curves_to_csv(curves: &[LossCurve]) -> String {
    let mut out = String::from("policy,t,mean,std\n");
    for c in curves {
        for i in 0..c.ts.len() {
            out.push_str(&format!("{},{},{},{}\n", c.label, c.ts[i], c.mean[i], c.std[i]));
        }
    }
    out
}

pub fn curves_from_csv(text: &str) -> Result<Vec<LossCurve>, String> {
    let mut curves: Vec<LossCurve> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 || line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(format!("line {}: expected 4 columns", ln + 1));
        }
        let label = parts[0];
        let t: u64 = parts[1].parse().map_err(|e| format!("line {}: {e}", ln + 1))?;
        let mean: f64 = parts[2].parse().map_err(|e| format!("line {}: {e}", ln + 1))?;
        let std: f64 = parts[3].parse().map_err(|e| format!("line {}: {e}", ln + 1))?;
        match curves.last_mut() {
            Some(c) if c.label == label => {
                c.ts.push(t);
                c.mean.push(mean);
                c.std.push(std);
            }
            _ => curves.push(LossCurve {
                label: label.to_string(),
                ts: vec![t],
                mean: vec![mean],
                std: vec![std],
            }),
        }
    }
    Ok(curves)
}

/// Writes `loss_curves.csv` and `loss_curves.png` under `out_dir`; returns
/// both paths. Scenario switches are marked with a vertical dashed line.
pub fn emit_plots(
    curves: &[LossCurve],
    switch: Option<u64>,
    out_dir: &Path,
) -> std::io::Result<(PathBuf, PathBuf)> {
    assert!(!curves.is_empty(), "no curves to plot");
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("loss_curves.csv");
    let png_path = out_dir.join("loss_curves.png");
    let mut f = std::fs::File::create(&csv_path)?;
    f.write_all(curves_to_csv(curves).as_bytes())?;
    render_png(curves, switch).save(&png_path).map_err(std::io::Error::other)?;
    Ok((csv_path, png_path))
}

const W: u32 = 900;
const H: u32 = 480;
const ML: u32 = 70; // left margin
const MR: u32 = 20;
const MT: u32 = 20;
const MB: u32 = 45;

const PALETTE: [Rgb<u8>; 4] = [
    Rgb([205, 60, 60]),
    Rgb([60, 90, 205]),
    Rgb([46, 139, 87]),
    Rgb([160, 90, 200]),
];

fn lighten(c: Rgb<u8>) -> Rgb<u8> {
    // 25% color blended into white.
    Rgb([
        ((c[0] as u16 + 3 * 255) / 4) as u8,
        ((c[1] as u16 + 3 * 255) / 4) as u8,
        ((c[2] as u16 + 3 * 255) / 4) as u8,
    ])
}

/// Deterministic rasterization of loss curves with ±1 std bands.
pub fn render_png(curves: &[LossCurve], switch: Option<u64>) -> RgbImage {
    let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
    let (t_min, t_max) = curves
        .iter()
        .flat_map(|c| c.ts.iter().copied())
        .fold((u64::MAX, 0u64), |(lo, hi), t| (lo.min(t), hi.max(t)));
    let y_max = curves
        .iter()
        .flat_map(|c| c.mean.iter().zip(&c.std).map(|(m, s)| m + s))
        .fold(1e-12f64, f64::max);
    let x_of = |t: u64| -> u32 {
        let span = (t_max - t_min).max(1) as f64;
        ML + (((t - t_min) as f64 / span) * ((W - ML - MR - 1) as f64)) as u32
    };
    let y_of = |v: f64| -> u32 {
        let clamped = v.clamp(0.0, y_max);
        let frac = clamped / y_max;
        (H - MB - 1) - (frac * ((H - MT - MB - 1) as f64)) as u32
    };

    // Std bands first so curves draw on top.
    for (ci, c) in curves.iter().enumerate() {
        let light = lighten(PALETTE[ci % PALETTE.len()]);
        for i in 0..c.ts.len().saturating_sub(1) {
            let (x0, x1) = (x_of(c.ts[i]), x_of(c.ts[i + 1]));
            for x in x0..=x1 {
                let f = if x1 > x0 {
                    (x - x0) as f64 / (x1 - x0) as f64
                } else {
                    0.0
                };
                let m = c.mean[i] + f * (c.mean[i + 1] - c.mean[i]);
                let s = c.std[i] + f * (c.std[i + 1] - c.std[i]);
                let (ya, yb) = (y_of(m + s), y_of((m - s).max(0.0)));
                for y in ya.min(yb)..=ya.max(yb) {
                    img.put_pixel(x, y, light);
                }
            }
        }
    }

    // Axes.
    for x in ML..(W - MR) {
        img.put_pixel(x, H - MB, Rgb([0, 0, 0]));
    }
    for y in MT..(H - MB + 1) {
        img.put_pixel(ML, y, Rgb([0, 0, 0]));
    }

    // Switch marker: vertical dashed line.
    if let Some(t) = switch {
        if t >= t_min && t <= t_max {
            let x = x_of(t);
            let mut y = MT;
            while y < H - MB {
                for dy in 0..4 {
                    if y + dy < H - MB {
                        img.put_pixel(x, y + dy, Rgb([120, 120, 120]));
                    }
                }
                y += 8;
            }
        }
    }

    // Mean curves.
    for (ci, c) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        for i in 0..c.ts.len().saturating_sub(1) {
            draw_line(
                &mut img,
                x_of(c.ts[i]),
                y_of(c.mean[i]),
                x_of(c.ts[i + 1]),
                y_of(c.mean[i + 1]),
                color,
            );
        }
        // Legend swatch + label, stacked top-left inside the plot area.
        let ly = MT + 10 + 14 * ci as u32;
        for x in ML + 10..ML + 30 {
            img.put_pixel(x, ly, color);
            img.put_pixel(x, ly + 1, color);
        }
        draw_text(&mut img, ML + 36, ly - 2, &c.label, Rgb([0, 0, 0]));
    }

    // Tick labels: x at both ends, y at 0 and max.
    draw_text(&mut img, ML, H - MB + 8, &format!("{t_min}"), Rgb([0, 0, 0]));
    let max_label = format!("{t_max}");
    draw_text(
        &mut img,
        W - MR - 8 * max_label.len() as u32,
        H - MB + 8,
        &max_label,
        Rgb([0, 0, 0]),
    );
    draw_text(&mut img, 4, H - MB - 6, "0", Rgb([0, 0, 0]));
    draw_text(&mut img, 4, MT, &format_short(y_max), Rgb([0, 0, 0]));
    img
}

fn format_short(v: f64) -> String {
    if v >= 1e4 || (v > 0.0 && v < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.1}")
    }
}

fn draw_line(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, color: Rgb<u8>) {
    // Bresenham over integer pixels.
    let (mut x0, mut y0) = (x0 as i64, y0 as i64);
    let (x1, y1) = (x1 as i64, y1 as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x0 >= 0 && y0 >= 0 && (x0 as u32) < W && (y0 as u32) < H {
            img.put_pixel(x0 as u32, y0 as u32, color);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// 3×5 bitmap glyphs for tick labels and legends; unknown characters render
/// as a dot.
fn glyph(ch: char) -> [u8; 5] {
    match ch {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        '+' => [0b000, 0b010, 0b111, 0b010, 0b000],
        'e' => [0b000, 0b111, 0b110, 0b100, 0b111],
        'a' => [0b000, 0b011, 0b101, 0b101, 0b011],
        'c' => [0b000, 0b011, 0b100, 0b100, 0b011],
        'i' => [0b010, 0b000, 0b010, 0b010, 0b010],
        'l' => [0b010, 0b010, 0b010, 0b010, 0b010],
        'o' => [0b000, 0b111, 0b101, 0b101, 0b111],
        'p' => [0b000, 0b111, 0b101, 0b111, 0b100],
        'r' => [0b000, 0b011, 0b100, 0b100, 0b100],
        's' => [0b000, 0b011, 0b110, 0b001, 0b110],
        't' => [0b010, 0b111, 0b010, 0b010, 0b001],
        'u' => [0b000, 0b101, 0b101, 0b101, 0b111],
        'v' => [0b000, 0b101, 0b101, 0b101, 0b010],
        ' ' => [0, 0, 0, 0, 0],
        _ => [0b000, 0b000, 0b010, 0b000, 0b000],
    }
}

fn draw_text(img: &mut RgbImage, x: u32, y: u32, text: &str, color: Rgb<u8>) {
    let mut cx = x;
    for ch in text.chars() {
        let g = glyph(ch);
        for (ry, row) in g.iter().enumerate() {
            for rx in 0..3 {
                if row & (1 << (2 - rx)) != 0 {
                    // 2x scale for readability.
                    for sy in 0..2 {
                        for sx in 0..2 {
                            let px = cx + rx * 2 + sx;
                            let py = y + ry as u32 * 2 + sy;
                            if px < W && py < H {
                                img.put_pixel(px, py, color);
                            }
                        }
                    }
                }
            }
        }
        cx += 8;
    }
}
