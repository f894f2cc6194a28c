//! 8-bit grayscale PGM (`P5`) output.

use std::collections::BTreeMap;

use crate::grounding::{Cell, Grid};
use crate::heatmap::Heatmap;

/// Gray level for a probability: `round(255 * v)`.
pub fn gray(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

/// Encodes row-major values in `[0, 1]` as a binary PGM.
pub fn encode_pgm(width: usize, height: usize, values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    let header = out.len();
    out.extend(values.into_iter().map(gray));
    assert_eq!(
        out.len() - header,
        width * height,
        "pixel count must match the image size"
    );
    out
}

pub fn heatmap_pgm(map: &Heatmap) -> Vec<u8> {
    encode_pgm(map.width(), map.height(), map.values().iter().map(|&v| f64::from(v)))
}

/// One pixel per grid cell; cells without a proof are black.
pub fn cells_pgm(grid: Grid, cells: &BTreeMap<Cell, f64>) -> Vec<u8> {
    let values = (0..grid.rows)
        .flat_map(|y| (0..grid.cols).map(move |x| cells.get(&Cell::new(x as u32, y as u32)).copied().unwrap_or(0.0)));
    encode_pgm(grid.cols, grid.rows, values)
}

/// Parses a binary PGM back into `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Option<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let (w, h): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let data = bytes.get(pos + 1..)?;
    (data.len() == w * h).then(|| (w, h, data.to_vec()))
}
