use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use dendrite::connectivity::ArchitectureKind;
use plotters::prelude::*;
use serde::Deserialize;

use crate::analyze::{ANALYSIS_DIR, EMBEDDING_DIR, HISTOGRAM_FILE};
use crate::error::{CliError, IoContext, Result};
use crate::summary::{read_summary_csv, ConfigSummary};

pub const FIGURE_DIR: &str = "figures";

const SIZE: (u32, u32) = (800, 560);

fn drawing<E: Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("drawing {}: {e}", path.display()))
}

fn kind_color(kind: ArchitectureKind) -> RGBColor {
    match kind {
        ArchitectureKind::DannR => RGBColor(31, 119, 180),
        ArchitectureKind::DannGrf => RGBColor(44, 160, 44),
        ArchitectureKind::DannLrf => RGBColor(214, 39, 40),
        ArchitectureKind::Vann => RGBColor(90, 90, 90),
    }
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    let pad = ((hi - lo) * 0.05).max(1e-9);
    lo - pad..hi + pad
}

fn extent(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// One series per kind of `metric` against the parameter count, on a
/// log-scaled x axis.
pub fn metric_vs_parameters(
    rows: &[ConfigSummary],
    metric: fn(&ConfigSummary) -> f64,
    y_label: &str,
    path: &Path,
) -> Result<()> {
    let err = drawing(path);
    let (plo, phi) = extent(rows.iter().map(|r| r.n_parameters as f64));
    let (ylo, yhi) = extent(rows.iter().map(metric));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(16)
        .x_label_area_size(44)
        .y_label_area_size(60)
        .build_cartesian_2d((plo * 0.8..phi * 1.25).log_scale(), padded(ylo, yhi))
        .map_err(&err)?;
    chart
        .configure_mesh()
        .x_desc("trainable parameters (log scale)")
        .y_desc(y_label)
        .draw()
        .map_err(&err)?;
    for kind in ArchitectureKind::ALL {
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| (r.n_parameters as f64, metric(r)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = kind_color(kind);
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 4, color.filled())))
            .map_err(&err)?
            .label(kind.as_str())
            .legend(move |(x, y)| Circle::new((x + 8, y), 4, color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)
}

/// Best accuracy-efficiency score (left) and lowest loss-efficiency score
/// (right) per kind.
pub fn efficiency_bars(rows: &[ConfigSummary], path: &Path) -> Result<()> {
    let err = drawing(path);
    let kinds: Vec<ArchitectureKind> = ArchitectureKind::ALL
        .into_iter()
        .filter(|k| rows.iter().any(|r| r.kind == *k))
        .collect();
    let best = |pick: fn(&ConfigSummary) -> f64, max: bool| -> Vec<f64> {
        kinds
            .iter()
            .map(|k| {
                let vals = rows.iter().filter(|r| r.kind == *k).map(pick);
                if max {
                    vals.fold(f64::NEG_INFINITY, f64::max)
                } else {
                    vals.fold(f64::INFINITY, f64::min)
                }
            })
            .collect()
    };
    let panels = [
        ("accuracy efficiency (max)", best(|r| r.aes, true)),
        ("loss efficiency (min)", best(|r| r.les, false)),
    ];
    let root = SVGBackend::new(path, (SIZE.0 * 3 / 2, SIZE.1)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let halves = root.split_evenly((1, 2));
    for (area, (title, values)) in halves.iter().zip(panels) {
        let top = values.iter().cloned().fold(0.0, f64::max) * 1.1;
        let mut chart = ChartBuilder::on(area)
            .caption(title, ("sans-serif", 18))
            .margin(16)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(0.0..kinds.len() as f64, 0.0..top.max(1e-9))
            .map_err(&err)?;
        let names: Vec<&str> = kinds.iter().map(|k| k.as_str()).collect();
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(kinds.len() * 2 + 1)
            .x_label_formatter(&|x| {
                let i = x.floor() as usize;
                if (x - i as f64 - 0.5).abs() < 1e-6 && i < names.len() {
                    names[i].to_string()
                } else {
                    String::new()
                }
            })
            .draw()
            .map_err(&err)?;
        chart
            .draw_series(kinds.iter().zip(&values).enumerate().map(|(i, (k, v))| {
                Rectangle::new([(i as f64 + 0.15, 0.0), (i as f64 + 0.85, *v)], kind_color(*k).filled())
            }))
            .map_err(&err)?;
    }
    root.present().map_err(&err)
}

#[derive(Debug, Deserialize)]
struct HistogramRow {
    model: String,
    layer: usize,
    quantity: String,
    lo: f64,
    hi: f64,
    count: usize,
}

type Bins = Vec<(f64, f64, usize)>;

/// One panel per model, layers overlaid, bars normalized to fractions.
fn histogram_panels(quantity: &str, groups: &BTreeMap<String, BTreeMap<usize, Bins>>, path: &Path) -> Result<()> {
    let err = drawing(path);
    let n = groups.len() as u32;
    let root = SVGBackend::new(path, (360 * n.max(1), 360)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let areas = root.split_evenly((1, groups.len().max(1)));
    for (area, (model, layers)) in areas.iter().zip(groups) {
        let (xlo, xhi) = extent(layers.values().flatten().flat_map(|b| [b.0, b.1]));
        let frac = |bins: &Bins| -> Vec<(f64, f64, f64)> {
            let total = bins.iter().map(|b| b.2).sum::<usize>().max(1) as f64;
            bins.iter().map(|&(lo, hi, c)| (lo, hi, c as f64 / total)).collect()
        };
        let top = layers.values().flat_map(&frac).map(|b| b.2).fold(0.0, f64::max);
        let mut chart = ChartBuilder::on(area)
            .caption(model, ("sans-serif", 16))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(44)
            .build_cartesian_2d(xlo..xhi, 0.0..(top * 1.1).max(1e-9))
            .map_err(&err)?;
        chart
            .configure_mesh()
            .x_desc(quantity)
            .y_desc("fraction")
            .draw()
            .map_err(&err)?;
        for (i, (layer, bins)) in layers.iter().enumerate() {
            let color = Palette99::pick(i).mix(0.5);
            chart
                .draw_series(
                    frac(bins)
                        .into_iter()
                        .map(|(lo, hi, f)| Rectangle::new([(lo, 0.0), (hi, f)], color.filled())),
                )
                .map_err(&err)?
                .label(format!("layer {layer}"))
                .legend(move |(x, y)| Rectangle::new([(x, y - 4), (x + 10, y + 4)], color.filled()));
        }
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .draw()
            .map_err(&err)?;
    }
    root.present().map_err(&err)
}

#[derive(Debug, Deserialize)]
struct EmbeddingRow {
    x: f64,
    y: f64,
    label: usize,
}

pub fn embedding_scatter(csv_path: &Path, path: &Path) -> Result<()> {
    let err = drawing(path);
    let rows: Vec<EmbeddingRow> = read_rows(csv_path)?;
    let (xlo, xhi) = extent(rows.iter().map(|r| r.x));
    let (ylo, yhi) = extent(rows.iter().map(|r| r.y));
    let title = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let root = SVGBackend::new(path, (600, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .build_cartesian_2d(padded(xlo, xhi), padded(ylo, yhi))
        .map_err(&err)?;
    chart
        .draw_series(
            rows.iter()
                .map(|r| Circle::new((r.x, r.y), 2, Palette99::pick(r.label).filled())),
        )
        .map_err(&err)?;
    root.present().map_err(&err)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let named = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(named)?;
    let rows: Vec<T> = r.deserialize().collect::<Result<_, _>>().map_err(named)?;
    if rows.is_empty() {
        return Err(CliError::Runtime(format!("{}: no rows", path.display())));
    }
    Ok(rows)
}

fn csv_files(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.at(dir)?.path();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if name.starts_with(prefix) && name.ends_with(".csv") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Renders every figure the CSV files under `dir` support into
/// `dir/figures`, returning the files written.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let summaries = csv_files(dir, "summary_")?;
    let analysis = dir.join(ANALYSIS_DIR);
    let histograms = analysis.join(HISTOGRAM_FILE);
    let embeddings = csv_files(&analysis.join(EMBEDDING_DIR), "")?;
    if summaries.is_empty() && !histograms.exists() && embeddings.is_empty() {
        return Err(CliError::Runtime(format!(
            "nothing to plot in {}: expected summary_*.csv or {ANALYSIS_DIR}/ tables",
            dir.display()
        )));
    }
    let figures = dir.join(FIGURE_DIR);
    fs::create_dir_all(&figures).at(&figures)?;
    let mut written = Vec::new();

    for csv_path in &summaries {
        let rows = read_summary_csv(csv_path).map_err(|e| CliError::Runtime(format!("{}: {e}", csv_path.display())))?;
        if rows.is_empty() {
            return Err(CliError::Runtime(format!("{}: no rows", csv_path.display())));
        }
        let tag = csv_path
            .file_stem()
            .unwrap()
            .to_string_lossy()
            .trim_start_matches("summary_")
            .to_string();
        let loss = figures.join(format!("loss_vs_parameters_{tag}.svg"));
        metric_vs_parameters(&rows, |r| r.loss_mean, "test loss", &loss)?;
        let acc = figures.join(format!("accuracy_vs_parameters_{tag}.svg"));
        metric_vs_parameters(&rows, |r| r.accuracy_mean, "test accuracy (%)", &acc)?;
        let eff = figures.join(format!("efficiency_{tag}.svg"));
        efficiency_bars(&rows, &eff)?;
        written.extend([loss, acc, eff]);
    }

    if histograms.exists() {
        let rows: Vec<HistogramRow> = read_rows(&histograms)?;
        let mut by_quantity: BTreeMap<String, BTreeMap<String, BTreeMap<usize, Bins>>> = BTreeMap::new();
        for r in rows {
            by_quantity
                .entry(r.quantity)
                .or_default()
                .entry(r.model)
                .or_default()
                .entry(r.layer)
                .or_default()
                .push((r.lo, r.hi, r.count));
        }
        for (quantity, groups) in &by_quantity {
            let out = figures.join(format!("histogram_{quantity}.svg"));
            histogram_panels(quantity, groups, &out)?;
            written.push(out);
        }
    }

    for csv_path in &embeddings {
        let stem = csv_path.file_stem().unwrap().to_string_lossy().into_owned();
        let out = figures.join(format!("embedding_{stem}.svg"));
        embedding_scatter(csv_path, &out)?;
        written.push(out);
    }
    Ok(written)
}
