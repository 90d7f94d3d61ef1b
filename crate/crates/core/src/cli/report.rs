use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;

use crate::attack::SweepRow;
use crate::data::TensorRecord;
use crate::error::{Error, Result};
use crate::mri::ReconImage;

/// Mean and sample standard deviation per (model, R, attack, smode, param).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    #[serde(rename = "R")]
    pub r: u32,
    pub attack: String,
    pub smode: String,
    pub param: f64,
    pub n: usize,
    pub ssim_base_mean: f64,
    pub ssim_adv_mean: f64,
    pub ssim_adv_std: f64,
    /// Mean of `(ssim_base − ssim_adv) / ssim_base`.
    pub ssim_rel_drop_mean: f64,
    pub psnr_base_mean: f64,
    pub psnr_adv_mean: f64,
    pub objective_mean: f64,
}

fn std_or_zero(v: &[f64]) -> f64 {
    if v.len() < 2 {
        0.0
    } else {
        v.std_dev()
    }
}

pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u32, String, String, u64), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        // total order on the parameter via its bit pattern; params are nonnegative
        let key = (
            r.model.clone(),
            r.r,
            r.attack.clone(),
            r.smode.clone(),
            r.param.to_bits(),
        );
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((model, r, attack, smode, p), g)| {
            let col = |f: fn(&SweepRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let adv = col(|r| r.ssim_adv);
            SummaryRow {
                model,
                r,
                attack,
                smode,
                param: f64::from_bits(p),
                n: g.len(),
                ssim_base_mean: col(|r| r.ssim_base).mean(),
                ssim_adv_std: std_or_zero(&adv),
                ssim_adv_mean: adv.mean(),
                ssim_rel_drop_mean: col(|r| (r.ssim_base - r.ssim_adv) / r.ssim_base).mean(),
                psnr_base_mean: col(|r| r.psnr_base).mean(),
                psnr_adv_mean: col(|r| r.psnr_adv).mean(),
                objective_mean: col(|r| r.objective).mean(),
            }
        })
        .collect()
}

/// Binary 8-bit graymap, intensities scaled so the image maximum maps to 255.
/// An all-zero image stays black.
pub fn write_pgm(img: &ReconImage, path: &Path) -> Result<()> {
    let max = img.max();
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|&p| {
        if max > 0.0 {
            (255.0 * (p / max).clamp(0.0, 1.0)).round() as u8
        } else {
            0
        }
    }));
    fs::write(path, out)?;
    Ok(())
}

/// Writes `{stem}-baseline.pgm`, `{stem}-attacked.pgm` and `{stem}-difference.pgm`.
pub fn dump_pgm(dir: &Path, stem: &str, rec: &TensorRecord) -> Result<()> {
    let get = |name: &str| -> Result<ReconImage> {
        let t = rec
            .tensor(name)
            .ok_or_else(|| Error::Manifest(format!("record {} has no `{name}` tensor", rec.id)))?;
        ReconImage::from_tensor(t)
    };
    let base = get("baseline")?;
    let att = get("attacked")?;
    let diff: Vec<f64> = att
        .pixels()
        .iter()
        .zip(base.pixels())
        .map(|(a, b)| (a - b).abs())
        .collect();
    let diff = ReconImage::new(base.height(), base.width(), diff)?;
    write_pgm(&base, &dir.join(format!("{stem}-baseline.pgm")))?;
    write_pgm(&att, &dir.join(format!("{stem}-attacked.pgm")))?;
    write_pgm(&diff, &dir.join(format!("{stem}-difference.pgm")))
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Mean attacked SSIM against the attack parameter, one polyline per sweep.
pub fn write_svg_chart(summary: &[SummaryRow]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for s in summary {
        let name = format!("{} R={} {} {}", s.model, s.r, s.attack, s.smode);
        series
            .entry(name)
            .or_default()
            .push((s.param, s.ssim_adv_mean));
    }
    let xs = summary.iter().map(|s| s.param);
    let ys = summary.iter().map(|s| s.ssim_adv_mean);
    let (x0, x1) = (
        xs.clone().fold(f64::INFINITY, f64::min),
        xs.fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = (
        ys.clone().fold(f64::INFINITY, f64::min),
        ys.fold(f64::NEG_INFINITY, f64::max),
    );
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let px = |x: f64| m + (x - x0) / span(x0, x1) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / span(y0, y1) * (h - 2.0 * m);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    if !summary.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{x1}</text>"#,
            w - m,
            h - m + 15.0
        );
        let _ = writeln!(svg, r#"<text x="{m}" y="{}">{x0}</text>"#, h - m + 15.0);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{y1:.3}</text>"#,
            m - 4.0,
            m
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{y0:.3}</text>"#,
            m - 4.0,
            h - m
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">parameter</text>"#,
        w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">mean SSIM</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let d: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            d.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#,
            w - m - 150.0,
            m + 14.0 * i as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}
