//! SVG plots of a twin run.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use plotters::prelude::*;

use dglab::observables::TaylorFit;
use dglab::signaling::MarginalRecord;
use dglab::TimeSeries;

const SIZE: (u32, u32) = (800, 500);

fn plot_err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("plotting failed: {e:?}")
}

/// Puts the provenance text into a `<metadata>` element right after the
/// opening `<svg>` tag.
fn with_metadata(svg: &str, metadata: &str) -> String {
    let Some(start) = svg.find("<svg") else {
        return svg.to_string();
    };
    let Some(end) = svg[start..].find('>') else {
        return svg.to_string();
    };
    let at = start + end + 1;
    let safe = metadata.replace("]]>", "]]&gt;");
    format!("{}\n<metadata><![CDATA[{safe}]]></metadata>{}", &svg[..at], &svg[at..])
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
        let pad = hi.abs().max(1e-300);
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn save(path: &Path, svg: String, metadata: &str) -> Result<()> {
    fs::write(path, with_metadata(&svg, metadata)).with_context(|| format!("cannot write {}", path.display()))
}

/// Moment difference against time.
pub fn delta_moment(path: &Path, delta: &TimeSeries, metadata: &str) -> Result<()> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let t = delta.times();
        let (y0, y1) = range(delta.values().iter().copied());
        let mut chart = ChartBuilder::on(&root)
            .caption("<x1>(V) - <x1>(0)", ("sans-serif", 20))
            .margin(15)
            .x_label_area_size(40)
            .y_label_area_size(90)
            .build_cartesian_2d(t[0]..t[t.len() - 1].max(t[0] + f64::EPSILON), y0..y1)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("t")
            .y_desc("delta")
            .y_label_formatter(&|v| format!("{v:.2e}"))
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(t.iter().copied().zip(delta.values().iter().copied()), &BLUE))
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    save(path, svg, metadata)
}

/// The fitted polynomial over the data inside the fit window.
pub fn fit_overlay(path: &Path, delta: &TimeSeries, fit: &TaylorFit, metadata: &str) -> Result<()> {
    let inside: Vec<(f64, f64)> = delta
        .times()
        .iter()
        .zip(delta.values())
        .filter(|(t, _)| **t <= fit.window * (1.0 + 1e-12))
        .map(|(t, v)| (*t, *v))
        .collect();
    let model: Vec<(f64, f64)> = inside.iter().map(|(t, _)| (*t, fit.eval(*t))).collect();
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let (y0, y1) = range(inside.iter().chain(&model).map(|p| p.1));
        let mut chart = ChartBuilder::on(&root)
            .caption(format!("degree {} fit over [0, {}]", fit.degree(), fit.window), ("sans-serif", 20))
            .margin(15)
            .x_label_area_size(40)
            .y_label_area_size(90)
            .build_cartesian_2d(0.0..fit.window, y0..y1)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("t")
            .y_desc("delta")
            .y_label_formatter(&|v| format!("{v:.2e}"))
            .draw()
            .map_err(plot_err)?;
        let stride = (inside.len() / 60).max(1);
        chart
            .draw_series(
                inside
                    .iter()
                    .step_by(stride)
                    .map(|p| Circle::new(*p, 3, BLACK.filled())),
            )
            .map_err(plot_err)?
            .label("data")
            .legend(|(x, y)| Circle::new((x + 10, y), 3, BLACK.filled()));
        chart
            .draw_series(LineSeries::new(model, RED.stroke_width(2)))
            .map_err(plot_err)?
            .label("fit")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    save(path, svg, metadata)
}

/// Diverging colour for `v` in `[-1, 1]`: blue, white, red.
fn diverging(v: f64) -> RGBColor {
    let v = v.clamp(-1.0, 1.0);
    let fade = |x: f64| (255.0 * (1.0 - x)).round() as u8;
    if v >= 0.0 {
        RGBColor(255, fade(v), fade(v))
    } else {
        RGBColor(fade(-v), fade(-v), 255)
    }
}

/// Heat strip of `rho1(V) - rho1(0)` over time (horizontal) and `x_1`
/// (vertical), binned to at most 120 time columns.
pub fn marginal_difference(path: &Path, m: &MarginalRecord, metadata: &str) -> Result<()> {
    const MAX_COLS: usize = 120;
    let nt = m.times.len();
    let nx = m.x.len();
    if nt == 0 || nx == 0 {
        return Err(anyhow!("no marginal data to plot"));
    }
    let step = nt.div_ceil(MAX_COLS).max(1);
    let cols: Vec<usize> = (0..nt).step_by(step).collect();
    let diff = |i: usize, j: usize| m.with_potential[i][j] - m.baseline[i][j];
    let peak = cols
        .iter()
        .flat_map(|&i| (0..nx).map(move |j| (i, j)))
        .fold(0.0f64, |p, (i, j)| p.max(diff(i, j).abs()));
    let scale = if peak > 0.0 { peak } else { 1.0 };
    let h = if nx > 1 { m.x[1] - m.x[0] } else { 1.0 };
    let t_end = m.times[nt - 1].max(m.times[0] + f64::EPSILON);
    let dt = (t_end - m.times[0]) / cols.len() as f64;

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(format!("rho1(V) - rho1(0), |max| = {peak:.3e}"), ("sans-serif", 20))
            .margin(15)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(m.times[0]..t_end, m.x[0]..m.x[nx - 1] + h)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .disable_mesh()
            .x_desc("t")
            .y_desc("x1")
            .draw()
            .map_err(plot_err)?;
        let cells = cols.iter().enumerate().flat_map(|(c, &i)| {
            let t0 = m.times[0] + c as f64 * dt;
            (0..nx).filter_map(move |j| {
                let colour = diverging(diff(i, j) / scale);
                // the background is already white
                (colour != WHITE).then(|| Rectangle::new([(t0, m.x[j]), (t0 + dt, m.x[j] + h)], colour.filled()))
            })
        });
        chart.draw_series(cells).map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    save(path, svg, metadata)
}
