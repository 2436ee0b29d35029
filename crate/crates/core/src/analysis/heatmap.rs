use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

const CELL: usize = 12;
const FOOTER: usize = 36;

/// Linear color scale from the matrix minimum to its maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ColorMap {
    /// Black at the minimum, white at the maximum.
    #[default]
    Grayscale,
    /// Blue at the minimum through white to red at the maximum.
    Diverging,
}

impl ColorMap {
    pub fn color(self, level: u8) -> [u8; 3] {
        match self {
            ColorMap::Grayscale => [level; 3],
            ColorMap::Diverging if level < 128 => [2 * level, 2 * level, 255],
            ColorMap::Diverging => {
                let c = 2 * (255 - level);
                [255, c, c]
            }
        }
    }

    /// Inverse of [`ColorMap::color`].
    pub fn level(self, rgb: [u8; 3]) -> Option<u8> {
        let level = match self {
            ColorMap::Grayscale => rgb[0],
            ColorMap::Diverging if rgb[2] == 255 && rgb[0] < 255 => rgb[0] / 2,
            ColorMap::Diverging => 255 - rgb[1] / 2,
        };
        (self.color(level) == rgb).then_some(level)
    }
}

impl fmt::Display for ColorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColorMap::Grayscale => "grayscale",
            ColorMap::Diverging => "diverging",
        })
    }
}

impl FromStr for ColorMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grayscale" | "gray" => Ok(ColorMap::Grayscale),
            "diverging" => Ok(ColorMap::Diverging),
            other => Err(Error::Config(format!("unknown color map '{other}'"))),
        }
    }
}

/// A matrix quantized to 256 levels between its minimum and maximum.
///
/// Decoding recovers every value within half a level, i.e. at most 1/255 of the range.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub min: f64,
    pub max: f64,
    pub levels: Vec<u8>,
}

impl Heatmap {
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::Value("heatmap input has non-finite entries".into()));
        }
        if m.data().is_empty() {
            return Err(Error::Shape("heatmap input is empty".into()));
        }
        let (min, max) = (m.min_value(), m.max_value());
        let range = max - min;
        let levels = m
            .data()
            .iter()
            .map(|&v| {
                if range > 0.0 {
                    ((v - min) / range * 255.0).round() as u8
                } else {
                    0
                }
            })
            .collect();
        Ok(Self {
            rows: m.rows(),
            cols: m.cols(),
            min,
            max,
            levels,
        })
    }

    pub fn decode(&self) -> Matrix {
        let range = self.max - self.min;
        Matrix::from_fn(self.rows, self.cols, |r, c| {
            self.min + f64::from(self.levels[r * self.cols + c]) / 255.0 * range
        })
    }
}

fn hex(rgb: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2])
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Standalone SVG document: one `rect` per cell plus min/max annotations.
///
/// Each cell carries its exact value in `data-value`.
pub fn heatmap_svg(m: &Matrix, cmap: ColorMap, title: &str) -> Result<String> {
    let map = Heatmap::from_matrix(m)?;
    let width = (map.cols * CELL).max(240);
    let height = map.rows * CELL + FOOTER;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" data-rows="{}" data-cols="{}" data-min="{}" data-max="{}" data-colormap="{cmap}">"#,
        map.rows, map.cols, map.min, map.max
    );
    let _ = writeln!(s, "  <title>{}</title>", escape(title));
    s.push_str("  <g class=\"cells\" shape-rendering=\"crispEdges\">\n");
    for r in 0..map.rows {
        for c in 0..map.cols {
            let _ = writeln!(
                s,
                r#"    <rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}" data-row="{r}" data-col="{c}" data-value="{}"/>"#,
                c * CELL,
                r * CELL,
                hex(cmap.color(map.levels[r * map.cols + c])),
                m[(r, c)]
            );
        }
    }
    s.push_str("  </g>\n");
    let y = map.rows * CELL;
    for (i, (label, value, level)) in [("min", map.min, 0u8), ("max", map.max, 255u8)]
        .into_iter()
        .enumerate()
    {
        let ty = y + 14 + 16 * i;
        let _ = writeln!(
            s,
            r#"  <rect x="2" y="{}" width="10" height="10" fill="{}" stroke="black" stroke-width="0.5"/>"#,
            ty - 9,
            hex(cmap.color(level))
        );
        let _ = writeln!(
            s,
            r#"  <text x="16" y="{ty}" font-family="monospace" font-size="11" class="{label}">{label} = {value:.6e}</text>"#
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes [`heatmap_svg`] to `path`, titled with the file stem.
pub fn export_heatmap(m: &Matrix, path: impl AsRef<Path>, cmap: ColorMap) -> Result<()> {
    let path = path.as_ref();
    let title = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("heatmap");
    std::fs::write(path, heatmap_svg(m, cmap, title)?)?;
    Ok(())
}
