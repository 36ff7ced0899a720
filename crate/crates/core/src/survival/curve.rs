use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A right-continuous step function of survival probability over days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvCurve {
    /// `(t, S(t))` with `t` ascending.
    pub points: Vec<(f64, f64)>,
}

impl SurvCurve {
    /// Value at `t`: the last step at or before `t`, or 1 before the first.
    pub fn at(&self, t: f64) -> f64 {
        let idx = self.points.partition_point(|&(s, _)| s <= t);
        if idx == 0 {
            1.0
        } else {
            self.points[idx - 1].1
        }
    }

    pub fn is_non_increasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 <= w[0].1)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "survival"])?;
        for (t, s) in &self.points {
            w.write_record([t.to_string(), s.to_string()])?;
        }
        w.flush().map_err(Error::Ingestion)?;
        Ok(())
    }

    /// A static step-plot rendering.
    pub fn to_svg(&self, title: &str) -> String {
        let (width, height, margin) = (640.0, 400.0, 50.0);
        let t_max = self.points.last().map(|p| p.0).unwrap_or(1.0).max(1.0);
        let sx = |t: f64| margin + t / t_max * (width - 2.0 * margin);
        let sy = |s: f64| height - margin - s * (height - 2.0 * margin);
        let mut path = String::new();
        let mut prev: Option<f64> = None;
        for &(t, s) in &self.points {
            match prev {
                None => path.push_str(&format!("M{:.2},{:.2}", sx(t), sy(s))),
                Some(p) => path.push_str(&format!(" L{:.2},{:.2} L{:.2},{:.2}", sx(t), sy(p), sx(t), sy(s))),
            }
            prev = Some(s);
        }
        let title = title.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">
<rect width="100%" height="100%" fill="white"/>
<text x="{cx}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>
<line x1="{margin}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>
<line x1="{margin}" y1="{y0}" x2="{margin}" y2="{margin}" stroke="black"/>
<text x="{cx}" y="{xl}" text-anchor="middle" font-family="sans-serif" font-size="12">days (0 to {t_max})</text>
<text x="14" y="{cy}" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {cy})" text-anchor="middle">survival probability</text>
<path d="{path}" fill="none" stroke="steelblue" stroke-width="2"/>
</svg>
"#,
            cx = width / 2.0,
            cy = height / 2.0,
            y0 = height - margin,
            x1 = width - margin,
            xl = height - 15.0,
        )
    }
}
