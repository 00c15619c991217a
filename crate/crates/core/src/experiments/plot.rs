use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::mean_sd;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisScale {
    Linear,
    Log,
}

/// Per-x mean and sd, ready to draw.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub x_label: String,
    pub y_label: String,
    /// (x, mean, sd) sorted by x.
    pub points: Vec<(f64, f64, f64)>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Config(format!("CSV is missing column {name:?}")))
}

impl PlotData {
    /// Reads either the long-form sweep CSV (`param,value,seed,metric,
    /// metric_value,...`) or its summary (`param,value,metric,mean,sd,...`).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let summary = headers.iter().any(|h| h == "mean");
        let param = column(&headers, "param")?;
        let value = column(&headers, "value")?;
        let metric = column(&headers, "metric")?;
        let (y, sd) = if summary {
            (column(&headers, "mean")?, Some(column(&headers, "sd")?))
        } else {
            (column(&headers, "metric_value")?, None)
        };

        let mut x_label = String::new();
        let mut y_label = String::new();
        let mut samples: Vec<(f64, f64, f64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<Option<f64>> {
                let s = rec.get(i).unwrap_or("").trim();
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Config(format!("non-numeric cell {s:?} in {:?}", &headers[i])))
            };
            x_label = rec.get(param).unwrap_or("").to_string();
            y_label = rec.get(metric).unwrap_or("").to_string();
            let (Some(x), Some(v)) = (num(value)?, num(y)?) else {
                continue;
            };
            let s = match sd {
                Some(i) => num(i)?.unwrap_or(0.0),
                None => 0.0,
            };
            samples.push((x, v, s));
        }
        if samples.is_empty() {
            return Err(Error::Config("CSV has no data rows".into()));
        }

        let mut xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let points = xs
            .into_iter()
            .map(|x| {
                let at: Vec<&(f64, f64, f64)> = samples.iter().filter(|s| s.0 == x).collect();
                if summary {
                    (x, at[0].1, at[0].2)
                } else {
                    let ys: Vec<f64> = at.iter().map(|s| s.1).collect();
                    let (m, sd) = mean_sd(&ys);
                    (x, m, if sd.is_finite() { sd } else { 0.0 })
                }
            })
            .collect();
        Ok(Self { x_label, y_label, points })
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One line chart: mean polyline over a shaded ±sd band, labelled axes.
pub fn render_svg(data: &PlotData, scale: AxisScale) -> Result<String> {
    if data.points.is_empty() {
        return Err(Error::Config("nothing to plot".into()));
    }
    if scale == AxisScale::Log && data.points.iter().any(|p| p.0 <= 0.0) {
        return Err(Error::Config("log axis needs positive x values".into()));
    }
    let tx = |x: f64| if scale == AxisScale::Log { x.log10() } else { x };
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, sd) in &data.points {
        x0 = x0.min(tx(x));
        x1 = x1.max(tx(x));
        y0 = y0.min(m - sd);
        y1 = y1.max(m + sd);
    }
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let pad = if y1 - y0 > 0.0 { 0.05 * (y1 - y0) } else { 0.5 };
    y0 -= pad;
    y1 += pad;
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |x: f64| LEFT + (tx(x) - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let mut band: Vec<String> = data
        .points
        .iter()
        .map(|&(x, m, sd)| format!("{:.2},{:.2}", px(x), py(m + sd)))
        .collect();
    band.extend(
        data.points
            .iter()
            .rev()
            .map(|&(x, m, sd)| format!("{:.2},{:.2}", px(x), py(m - sd))),
    );
    let _ = writeln!(
        svg,
        r##"<polygon points="{}" fill="#4c78a8" fill-opacity="0.2" stroke="none"/>"##,
        band.join(" ")
    );

    let (bx, by) = (LEFT, TOP + ph);
    let _ = writeln!(
        svg,
        r#"<line x1="{bx}" y1="{by}" x2="{}" y2="{by}" stroke="black"/>"#,
        LEFT + pw
    );
    let _ = writeln!(svg, r#"<line x1="{bx}" y1="{TOP}" x2="{bx}" y2="{by}" stroke="black"/>"#);
    for &(x, _, _) in &data.points {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(x),
            by + 16.0,
            fmt_num(x)
        );
    }
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py(y) + 4.0,
            fmt_num(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(&data.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&data.y_label)
    );

    let line: Vec<String> = data
        .points
        .iter()
        .map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m)))
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#4c78a8" stroke-width="2"/>"##,
        line.join(" ")
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LONG: &str = "param,value,seed,metric,metric_value,status\n\
        gamma,0.9,1,asd,2.0,ok\n\
        gamma,0.9,2,asd,4.0,ok\n\
        gamma,0.8,1,asd,5.0,ok\n\
        gamma,0.8,2,asd,,failed\n";

    #[test]
    fn long_form_is_aggregated_per_value() {
        let d = PlotData::from_csv(LONG).unwrap();
        assert_eq!(d.x_label, "gamma");
        assert_eq!(d.y_label, "asd");
        assert_eq!(d.points.len(), 2);
        assert_eq!(d.points[0], (0.8, 5.0, 0.0));
        assert_eq!((d.points[1].0, d.points[1].1), (0.9, 3.0));
    }

    #[test]
    fn missing_column_is_named() {
        let err = PlotData::from_csv("param,value,seed\nx,1,1\n").unwrap_err();
        assert!(err.to_string().contains("metric"), "{err}");
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(PlotData::from_csv("param,value,seed,metric,metric_value\n").is_err());
    }

    #[test]
    fn one_polyline_with_one_vertex_per_value() {
        let d = PlotData::from_csv(LONG).unwrap();
        let svg = render_svg(&d, AxisScale::Linear).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("<polyline points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 2);
        assert_eq!(svg, render_svg(&d, AxisScale::Linear).unwrap());
    }

    #[test]
    fn log_axis_rejects_non_positive() {
        let d = PlotData {
            x_label: "lr".into(),
            y_label: "r".into(),
            points: vec![(0.0, 1.0, 0.0)],
        };
        assert!(render_svg(&d, AxisScale::Log).is_err());
    }
}
