//! Per-symbol probability heatmaps and per-image bundles.
//!
//! Heatmaps are stored in the `SYMH` v1 format: a 16 byte header (magic
//! `"SYMH"`, then little-endian `u32` version, height and width) followed by
//! `height * width` little-endian `f32` values in row-major order, with the
//! origin at the top-left corner and `y` growing downwards.
//!
//! A bundle groups the heatmaps measured on one image. On disk it is a JSON
//! manifest whose entries point at `SYMH` files relative to the manifest.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"SYMH";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

/// Whether a symbol is measured as a localized object or as a scene segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolKind {
    Object,
    Segment,
}

impl SymbolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SymbolKind::Object => "object",
            SymbolKind::Segment => "segment",
        }
    }
}

impl fmt::Display for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SymbolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "object" => Ok(SymbolKind::Object),
            "segment" => Ok(SymbolKind::Segment),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum HeatmapError {
    #[error("bad magic: expected \"SYMH\"")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{extra} trailing bytes after payload")]
    TrailingBytes { extra: usize },
    #[error("empty heatmap ({height}x{width})")]
    Empty { height: u32, width: u32 },
    #[error("NaN value at ({row},{col})")]
    NaN { row: usize, col: usize },
    #[error("infinite value at ({row},{col})")]
    Infinite { row: usize, col: usize },
    #[error("value {value} outside [0,1] at ({row},{col})")]
    OutOfRange { row: usize, col: usize, value: f32 },
    #[error("expected {expected} values for {height}x{width}, got {found}")]
    ShapeMismatch {
        height: usize,
        width: usize,
        expected: usize,
        found: usize,
    },
}

/// A row-major grid of probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl Heatmap {
    /// Validates shape and range; values are never clamped.
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self, HeatmapError> {
        if height == 0 || width == 0 {
            return Err(HeatmapError::Empty {
                height: height as u32,
                width: width as u32,
            });
        }
        let expected = height * width;
        if values.len() != expected {
            return Err(HeatmapError::ShapeMismatch {
                height,
                width,
                expected,
                found: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            let (row, col) = (i / width, i % width);
            if v.is_nan() {
                return Err(HeatmapError::NaN { row, col });
            }
            if v.is_infinite() {
                return Err(HeatmapError::Infinite { row, col });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(HeatmapError::OutOfRange { row, col, value: v });
            }
        }
        Ok(Heatmap { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self, HeatmapError> {
        Heatmap::new(height, width, vec![value; height * width])
    }

    pub fn from_rows(rows: &[&[f32]]) -> Result<Self, HeatmapError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let values: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Heatmap::new(height, width, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HeatmapError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(HeatmapError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(HeatmapError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != VERSION {
            return Err(HeatmapError::UnsupportedVersion(version));
        }
        let (height, width) = (word(8), word(12));
        if height == 0 || width == 0 {
            return Err(HeatmapError::Empty { height, width });
        }
        let expected = (height as usize)
            .checked_mul(width as usize)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .unwrap_or(usize::MAX);
        if bytes.len() < expected {
            return Err(HeatmapError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(HeatmapError::TrailingBytes {
                extra: bytes.len() - expected,
            });
        }
        let values = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Heatmap::new(height as usize, width as usize, values)
    }
}

/// Decodes one `SYMH` stream.
pub fn read_heatmap(bytes: &[u8]) -> Result<Heatmap, HeatmapError> {
    Heatmap::from_bytes(bytes)
}

pub fn write_heatmap(map: &Heatmap) -> Vec<u8> {
    map.to_bytes()
}

/// A heatmap together with the symbol it measures.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolHeatmap {
    pub symbol: String,
    pub kind: SymbolKind,
    pub map: Heatmap,
}

impl SymbolHeatmap {
    pub fn new(symbol: impl Into<String>, kind: SymbolKind, map: Heatmap) -> Self {
        SymbolHeatmap {
            symbol: symbol.into(),
            kind,
            map,
        }
    }
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Heatmap {
        path: PathBuf,
        #[source]
        source: HeatmapError,
    },
    #[error("duplicate symbol {0:?}")]
    DuplicateSymbol(String),
    #[error("symbol {symbol:?} is {found:?} but the bundle is {expected:?} (height, width)")]
    DimensionMismatch {
        symbol: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("symbol {symbol:?} has unknown kind {kind:?} (expected object or segment)")]
    UnknownKind { symbol: String, kind: String },
}

impl BundleError {
    /// True for failures to reach the file system, false for invalid content.
    pub fn is_io(&self) -> bool {
        matches!(self, BundleError::Io { .. })
    }
}

/// All symbol heatmaps measured on one image. Dimensions are uniform and
/// symbol names unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    image_id: String,
    heatmaps: Vec<SymbolHeatmap>,
}

impl Bundle {
    pub fn new(image_id: impl Into<String>, heatmaps: Vec<SymbolHeatmap>) -> Result<Self, BundleError> {
        let mut seen = HashSet::new();
        let mut dims = None;
        for h in &heatmaps {
            if !seen.insert(h.symbol.as_str()) {
                return Err(BundleError::DuplicateSymbol(h.symbol.clone()));
            }
            let d = (h.map.height(), h.map.width());
            match dims {
                None => dims = Some(d),
                Some(expected) if expected != d => {
                    return Err(BundleError::DimensionMismatch {
                        symbol: h.symbol.clone(),
                        expected,
                        found: d,
                    })
                }
                Some(_) => {}
            }
        }
        Ok(Bundle {
            image_id: image_id.into(),
            heatmaps,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn heatmaps(&self) -> &[SymbolHeatmap] {
        &self.heatmaps
    }

    pub fn get(&self, symbol: &str) -> Option<&SymbolHeatmap> {
        self.heatmaps.iter().find(|h| h.symbol == symbol)
    }

    /// `(height, width)` shared by every heatmap, `None` for an empty bundle.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.heatmaps.first().map(|h| (h.map.height(), h.map.width()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub image_id: String,
    pub symbols: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub kind: String,
    pub file: String,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a bundle from its manifest; heatmap paths resolve relative to the
/// manifest's directory.
pub fn read_bundle(manifest_path: impl AsRef<Path>) -> Result<Bundle, BundleError> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest = Manifest::from_json(&text).map_err(|source| BundleError::Manifest {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    let mut heatmaps = Vec::with_capacity(manifest.symbols.len());
    for entry in &manifest.symbols {
        let kind = entry.kind.parse().map_err(|kind| BundleError::UnknownKind {
            symbol: entry.name.clone(),
            kind,
        })?;
        let path = base.join(&entry.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let map = read_heatmap(&bytes).map_err(|source| BundleError::Heatmap {
            path: path.clone(),
            source,
        })?;
        heatmaps.push(SymbolHeatmap::new(entry.name.clone(), kind, map));
    }
    Bundle::new(manifest.image_id, heatmaps)
}

fn file_stem_for(index: usize, symbol: &str) -> String {
    let clean: String = symbol
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{index:02}_{clean}.symh")
}

/// Writes `manifest.json` plus one `SYMH` file per symbol into `dir` and
/// returns the manifest path.
pub fn write_bundle(bundle: &Bundle, dir: impl AsRef<Path>) -> Result<PathBuf, BundleError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut symbols = Vec::with_capacity(bundle.heatmaps.len());
    for (i, h) in bundle.heatmaps.iter().enumerate() {
        let file = file_stem_for(i, &h.symbol);
        let path = dir.join(&file);
        fs::write(&path, write_heatmap(&h.map)).map_err(io_err(&path))?;
        symbols.push(ManifestEntry {
            name: h.symbol.clone(),
            kind: h.kind.as_str().to_string(),
            file,
        });
    }
    let manifest = Manifest {
        image_id: bundle.image_id.clone(),
        symbols,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_json()).map_err(io_err(&path))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(h: u32, w: u32) -> Vec<u8> {
        let mut b = b"SYMH".to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&h.to_le_bytes());
        b.extend_from_slice(&w.to_le_bytes());
        b
    }

    #[test]
    fn decodes_all_ones_payload() {
        let mut bytes = header(2, 2);
        assert_eq!(
            &bytes[..],
            &[0x53, 0x59, 0x4D, 0x48, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]
        );
        for _ in 0..4 {
            bytes.extend_from_slice(&1.0f32.to_le_bytes());
        }
        let map = read_heatmap(&bytes).unwrap();
        assert_eq!((map.height(), map.width()), (2, 2));
        assert!(map.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn encodes_half() {
        let map = Heatmap::filled(1, 1, 0.5).unwrap();
        let bytes = write_heatmap(&map);
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[16..], &[0x00, 0x00, 0x00, 0x3F]);
    }

    #[test]
    fn payload_length_is_four_bytes_per_cell() {
        let map = Heatmap::filled(2, 3, 0.25).unwrap();
        assert_eq!(write_heatmap(&map).len() - HEADER_LEN, 24);
        assert_eq!(write_heatmap(&map), write_heatmap(&map.clone()));
    }

    #[test]
    fn rejects_nan_with_position() {
        let mut bytes = header(2, 2);
        for v in [0.1f32, 0.2, f32::NAN, 0.4] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let err = read_heatmap(&bytes).unwrap_err();
        assert_eq!(err, HeatmapError::NaN { row: 1, col: 0 });
        assert_eq!(err.to_string(), "NaN value at (1,0)");
    }

    #[test]
    fn rejects_bad_headers_and_lengths() {
        assert_eq!(read_heatmap(b"PGM5").unwrap_err(), HeatmapError::BadMagic);
        assert_eq!(read_heatmap(b"").unwrap_err(), HeatmapError::BadMagic);
        let mut v2 = header(1, 1);
        v2[4] = 2;
        v2.extend_from_slice(&0.5f32.to_le_bytes());
        assert_eq!(read_heatmap(&v2).unwrap_err(), HeatmapError::UnsupportedVersion(2));
        let short = header(2, 2);
        assert!(matches!(
            read_heatmap(&short).unwrap_err(),
            HeatmapError::Truncated {
                expected: 32,
                found: 16
            }
        ));
        let mut long = header(1, 1);
        long.extend_from_slice(&[0; 5]);
        assert_eq!(
            read_heatmap(&long).unwrap_err(),
            HeatmapError::TrailingBytes { extra: 1 }
        );
        assert!(matches!(
            read_heatmap(&header(0, 3)).unwrap_err(),
            HeatmapError::Empty { .. }
        ));
    }

    #[test]
    fn rejects_out_of_range_and_infinite() {
        for (v, inf) in [(1.5f32, false), (-0.1, false), (f32::INFINITY, true)] {
            let mut bytes = header(1, 1);
            bytes.extend_from_slice(&v.to_le_bytes());
            let err = read_heatmap(&bytes).unwrap_err();
            if inf {
                assert_eq!(err, HeatmapError::Infinite { row: 0, col: 0 });
            } else {
                assert!(matches!(err, HeatmapError::OutOfRange { .. }));
            }
        }
    }

    fn write_manifest(dir: &Path, entries: &[(&str, &str, &str)], maps: &[(&str, Heatmap)]) -> PathBuf {
        for (file, map) in maps {
            fs::write(dir.join(file), write_heatmap(map)).unwrap();
        }
        let manifest = Manifest {
            image_id: "img".into(),
            symbols: entries
                .iter()
                .map(|(n, k, f)| ManifestEntry {
                    name: n.to_string(),
                    kind: k.to_string(),
                    file: f.to_string(),
                })
                .collect(),
        };
        let path = dir.join("m.json");
        fs::write(&path, manifest.to_json()).unwrap();
        path
    }

    #[test]
    fn reads_tool_and_floor_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let m = Heatmap::filled(224, 224, 0.3).unwrap();
        let path = write_manifest(
            dir.path(),
            &[("tool", "object", "t.symh"), ("floor", "segment", "f.symh")],
            &[("t.symh", m.clone()), ("f.symh", m)],
        );
        let b = read_bundle(&path).unwrap();
        assert_eq!(b.heatmaps().len(), 2);
        assert_eq!(b.dims(), Some((224, 224)));
        assert_eq!(b.get("floor").unwrap().kind, SymbolKind::Segment);
    }

    #[test]
    fn bundle_errors_are_categorized() {
        let dir = tempfile::tempdir().unwrap();
        let big = Heatmap::filled(224, 224, 0.3).unwrap();
        let small = Heatmap::filled(112, 112, 0.3).unwrap();
        let dup = write_manifest(
            dir.path(),
            &[("tool", "object", "a.symh"), ("tool", "object", "a.symh")],
            &[("a.symh", big.clone())],
        );
        assert!(matches!(read_bundle(&dup), Err(BundleError::DuplicateSymbol(s)) if s == "tool"));

        let mismatch = write_manifest(
            dir.path(),
            &[("tool", "object", "a.symh"), ("floor", "segment", "b.symh")],
            &[("a.symh", big.clone()), ("b.symh", small)],
        );
        assert!(matches!(
            read_bundle(&mismatch),
            Err(BundleError::DimensionMismatch { found: (112, 112), .. })
        ));

        let kind = write_manifest(dir.path(), &[("tool", "thing", "a.symh")], &[("a.symh", big)]);
        assert!(matches!(read_bundle(&kind), Err(BundleError::UnknownKind { .. })));

        let missing = write_manifest(dir.path(), &[("tool", "object", "nope.symh")], &[]);
        let err = read_bundle(&missing).unwrap_err();
        assert!(err.is_io());
        assert!(read_bundle(dir.path().join("absent.json")).unwrap_err().is_io());
    }

    #[test]
    fn write_then_read_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let b = Bundle::new(
            "x",
            vec![
                SymbolHeatmap::new("pipe", SymbolKind::Object, Heatmap::filled(3, 4, 0.125).unwrap()),
                SymbolHeatmap::new("leak age", SymbolKind::Segment, Heatmap::filled(3, 4, 1.0).unwrap()),
            ],
        )
        .unwrap();
        let path = write_bundle(&b, dir.path()).unwrap();
        assert_eq!(read_bundle(&path).unwrap(), b);
    }
}
