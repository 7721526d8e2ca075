//! Footprint-to-heightmap rasterization and dataset assembly.
//!
//! Each building becomes a fixed-size grayscale grid: pixels whose centers
//! fall inside the footprint (even-odd rule, holes subtract) carry
//! `height / 100`, everything else is 0. The footprint is translated so its
//! bounding-box center sits at the grid center; no rotation or scale
//! normalization, buildings keep true metric scale.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::{polygon_bbox, BuildingRecord, Ring, MAX_HEIGHT_M};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub width_px: usize,
    pub height_px: usize,
    pub meters_per_px: f64,
}

impl GridSpec {
    pub fn new(side_px: usize, meters_per_px: f64) -> Result<Self> {
        let spec = GridSpec {
            width_px: side_px,
            height_px: side_px,
            meters_per_px,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_px != self.height_px {
            return Err(Error::Config(format!(
                "grid must be square, got {}x{}",
                self.width_px, self.height_px
            )));
        }
        if self.width_px < 16 || !self.width_px.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid side must be a power of two >= 16, got {}",
                self.width_px
            )));
        }
        if !(self.meters_per_px > 0.0) {
            return Err(Error::Config(format!(
                "meters_per_px must be positive, got {}",
                self.meters_per_px
            )));
        }
        Ok(())
    }

    /// Window extent in meters covered by the grid.
    pub fn window_m(&self) -> f64 {
        self.width_px as f64 * self.meters_per_px
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            width_px: 64,
            height_px: 64,
            meters_per_px: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap {
    pub building_id: String,
    pub width: usize,
    pub height: usize,
    /// Row-major intensities in [0, 1].
    pub pixels: Vec<f64>,
}

impl Heightmap {
    pub fn zeros(building_id: impl Into<String>, side: usize) -> Self {
        Heightmap {
            building_id: building_id.into(),
            width: side,
            height: side,
            pixels: vec![0.0; side * side],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

/// Sample coordinate of a pixel center along one axis.
fn pixel_center(index: usize, meters_per_px: f64) -> f64 {
    (index as f64 + 0.5) * meters_per_px
}

/// Shift a scanline off any vertex y it coincides with exactly; degenerate
/// ray-through-vertex cases otherwise depend on edge orientation.
fn dodge_vertex_y(mut y: f64, rings: &[Ring], eps: f64) -> f64 {
    loop {
        let hit = rings.iter().flatten().any(|v| v[1] == y);
        if !hit {
            return y;
        }
        y += eps;
    }
}

/// Crossing of edge (a, b) with the horizontal line at `y`, using the
/// half-open rule: the edge counts iff (a.y > y) != (b.y > y).
fn edge_crossing(a: [f64; 2], b: [f64; 2], y: f64) -> Option<f64> {
    if (a[1] > y) != (b[1] > y) {
        Some(a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]))
    } else {
        None
    }
}

/// Rasterize one building footprint into a heightmap.
pub fn rasterize(record: &BuildingRecord, spec: &GridSpec) -> Result<Heightmap> {
    spec.validate()?;
    if record.footprint_area_m2 <= 0.0 {
        return Err(Error::DegeneratePolygon {
            id: record.id.clone(),
        });
    }
    let window = spec.window_m();
    let (min, max) = polygon_bbox(&record.footprint);
    let extent = (max[0] - min[0]).max(max[1] - min[1]);
    if extent > window {
        return Err(Error::WindowOverflow {
            id: record.id.clone(),
            extent_m: extent,
            window_m: window,
        });
    }

    // Translate so the bbox center lands on the window center.
    let shift = [
        window / 2.0 - (min[0] + max[0]) / 2.0,
        window / 2.0 - (min[1] + max[1]) / 2.0,
    ];
    let rings: Vec<Ring> = record
        .footprint
        .iter()
        .map(|ring| ring.iter().map(|v| [v[0] + shift[0], v[1] + shift[1]]).collect())
        .collect();

    let intensity = record.height_m.clamp(0.0, MAX_HEIGHT_M) / MAX_HEIGHT_M;
    let mpp = spec.meters_per_px;
    let eps = mpp * 1e-7;
    let mut map = Heightmap::zeros(record.id.clone(), spec.width_px);
    let mut any_inside = false;
    let mut crossings: Vec<f64> = Vec::new();

    for row in 0..spec.height_px {
        let y = dodge_vertex_y(pixel_center(row, mpp), &rings, eps);
        crossings.clear();
        for ring in &rings {
            for pair in ring.windows(2) {
                if let Some(x) = edge_crossing(pair[0], pair[1], y) {
                    crossings.push(x);
                }
            }
        }
        if crossings.is_empty() {
            continue;
        }
        for col in 0..spec.width_px {
            let x = pixel_center(col, mpp);
            // Even-odd parity: inside iff an odd number of crossings lie
            // strictly to the right of the pixel center.
            let hits = crossings.iter().filter(|&&c| x < c).count();
            if hits % 2 == 1 {
                map.pixels[row * spec.width_px + col] = intensity;
                any_inside = true;
            }
        }
    }

    if !any_inside {
        // Sub-pixel sliver: mark the pixel containing the first vertex so a
        // positive-area building never rasterizes to an empty grid.
        let v = rings[0][0];
        let col = ((v[0] / mpp).floor() as isize).clamp(0, spec.width_px as isize - 1) as usize;
        let row = ((v[1] / mpp).floor() as isize).clamp(0, spec.height_px as isize - 1) as usize;
        map.pixels[row * spec.width_px + col] = intensity;
    }
    Ok(map)
}

/// Number of held-out samples for a dataset of `n`: round(f * n), minimum 1.
pub fn test_count(n: usize, test_fraction: f64) -> usize {
    ((test_fraction * n as f64).round() as usize).max(1)
}

/// Rasterize all records and split into train/test by a seeded shuffle.
/// Records that fail to rasterize are skipped with a warning.
pub fn build_dataset(
    records: &[BuildingRecord],
    spec: &GridSpec,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Heightmap>, Vec<Heightmap>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut maps = Vec::with_capacity(records.len());
    for record in records {
        match rasterize(record, spec) {
            Ok(map) => maps.push(map),
            Err(e) => log::warn!("skipping {}: {e}", record.id),
        }
    }
    if maps.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 rasterizable records, got {}",
            maps.len()
        )));
    }
    let mut order: Vec<usize> = (0..maps.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_test = test_count(maps.len(), test_fraction).min(maps.len() - 1);
    let test_idx: Vec<usize> = order[..n_test].to_vec();
    let mut is_test = vec![false; maps.len()];
    for &i in &test_idx {
        is_test[i] = true;
    }
    let mut train = Vec::with_capacity(maps.len() - n_test);
    let mut test = Vec::with_capacity(n_test);
    for (i, map) in maps.into_iter().enumerate() {
        if is_test[i] {
            test.push(map);
        } else {
            train.push(map);
        }
    }
    Ok((train, test))
}

/// Write an 8-bit binary PGM (P5). Intensities map to round(v * 255).
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[f64], comment: &str) -> Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut buf = Vec::with_capacity(width * height + 64);
    write!(buf, "P5\n# {comment}\n{width} {height}\n255\n").expect("in-memory write");
    buf.extend(pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Read a binary PGM written by [`write_pgm`] back into [0,1] intensities.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&raw).map_err(|msg| Error::InvalidInput(format!("{}: {msg}", path.display())))
}

fn parse_pgm(raw: &[u8]) -> std::result::Result<(usize, usize, Vec<f64>), String> {
    let mut pos = 0usize;
    let mut token = |raw: &[u8]| -> std::result::Result<String, String> {
        // skip whitespace and comment lines
        loop {
            while pos < raw.len() && raw[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < raw.len() && raw[pos] == b'#' {
                while pos < raw.len() && raw[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&raw[start..pos]).into_owned())
    };
    if token(raw)? != "P5" {
        return Err("not a binary PGM (P5)".into());
    }
    let width: usize = token(raw)?.parse().map_err(|_| "bad width")?;
    let height: usize = token(raw)?.parse().map_err(|_| "bad height")?;
    let maxval: usize = token(raw)?.parse().map_err(|_| "bad maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    let data_start = pos + 1; // single whitespace after maxval
    let need = width * height;
    if raw.len() < data_start + need {
        return Err("truncated pixel data".into());
    }
    let pixels = raw[data_start..data_start + need]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok((width, height, pixels))
}
