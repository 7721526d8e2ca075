//! Building inventory ingestion from GeoJSON FeatureCollections.
//!
//! Coordinates must already be planar meters; lon/lat-looking footprints are
//! rejected with a diagnostic rather than reprojected.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const DEFAULT_STOREY_HEIGHT_M: f64 = 3.0;
/// Heights are encoded on a 0..=100 m scale; taller values clamp with a warning.
pub const MAX_HEIGHT_M: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandUse {
    Residential,
    Other,
}

impl LandUse {
    fn from_property(s: &str) -> Self {
        if s.to_ascii_lowercase().contains("residential") {
            LandUse::Residential
        } else {
            LandUse::Other
        }
    }
}

impl fmt::Display for LandUse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LandUse::Residential => write!(f, "residential"),
            LandUse::Other => write!(f, "other"),
        }
    }
}

/// One closed ring of planar (x, y) coordinates in meters.
pub type Ring = Vec<[f64; 2]>;

/// One building: outer ring first, any holes after.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingRecord {
    pub id: String,
    pub footprint: Vec<Ring>,
    pub height_m: f64,
    pub land_use: LandUse,
    pub footprint_area_m2: f64,
    pub floor_area_m2: f64,
    pub measured_eui_kwh_m2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InventorySummary {
    pub total_count: usize,
    pub residential_count: usize,
    pub residential_fraction: f64,
}

impl InventorySummary {
    fn new(total: usize, residential: usize) -> Self {
        let fraction = if total == 0 {
            0.0
        } else {
            residential as f64 / total as f64
        };
        InventorySummary {
            total_count: total,
            residential_count: residential,
            residential_fraction: fraction,
        }
    }
}

/// One rejected feature, reported on stderr by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct Rejection {
    pub feature_index: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug)]
pub struct LoadResult {
    pub records: Vec<BuildingRecord>,
    pub summary: InventorySummary,
    pub rejections: Vec<Rejection>,
    pub warnings: Vec<String>,
}

/// Signed shoelace area of a closed ring (positive for counter-clockwise).
pub fn ring_area_signed(ring: &[[f64; 2]]) -> f64 {
    let mut acc = 0.0;
    for pair in ring.windows(2) {
        let [x0, y0] = pair[0];
        let [x1, y1] = pair[1];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

/// Footprint area: |outer ring| minus |holes|.
pub fn polygon_area(rings: &[Ring]) -> f64 {
    let mut area = 0.0;
    for (i, ring) in rings.iter().enumerate() {
        let a = ring_area_signed(ring).abs();
        if i == 0 {
            area += a;
        } else {
            area -= a;
        }
    }
    area
}

pub fn polygon_bbox(rings: &[Ring]) -> ([f64; 2], [f64; 2]) {
    let mut min = [f64::INFINITY, f64::INFINITY];
    let mut max = [f64::NEG_INFINITY, f64::NEG_INFINITY];
    for ring in rings {
        for &[x, y] in ring {
            min[0] = min[0].min(x);
            min[1] = min[1].min(y);
            max[0] = max[0].max(x);
            max[1] = max[1].max(y);
        }
    }
    (min, max)
}

fn ring_is_closed(ring: &[[f64; 2]]) -> bool {
    ring.len() >= 4 && ring.first() == ring.last()
}

/// Floor area from footprint area and height: area x storey count,
/// storeys = max(1, round(height / storey_height)).
pub fn derive_floor_area(
    footprint_area_m2: f64,
    height_m: f64,
    storey_height_m: f64,
) -> Result<f64> {
    if footprint_area_m2 <= 0.0 || height_m <= 0.0 || storey_height_m <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "derive_floor_area requires positive inputs, got area={footprint_area_m2}, \
             height={height_m}, storey={storey_height_m}"
        )));
    }
    let storeys = (height_m / storey_height_m).round().max(1.0);
    Ok(footprint_area_m2 * storeys)
}

/// Parse a GeoJSON FeatureCollection into building records.
///
/// Multipolygons split into one record per part with `_p<k>` id suffixes.
/// Invalid features are skipped and reported in `rejections`; the summary
/// counts valid records before the land-use filter is applied. An empty
/// post-filter result is an error.
pub fn load_buildings(
    path: &Path,
    land_use_filter: Option<LandUse>,
    storey_height_m: f64,
) -> Result<LoadResult> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&raw)
        .map_err(|e| Error::InvalidInput(format!("{}: invalid JSON: {e}", path.display())))?;
    load_buildings_from_value(&doc, land_use_filter, storey_height_m)
}

pub fn load_buildings_from_value(
    doc: &Value,
    land_use_filter: Option<LandUse>,
    storey_height_m: f64,
) -> Result<LoadResult> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::InvalidInput(
            "expected a GeoJSON FeatureCollection".into(),
        ));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidInput("FeatureCollection has no `features` array".into()))?;

    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let mut warnings = Vec::new();
    let mut total = 0usize;
    let mut residential = 0usize;

    for (index, feature) in features.iter().enumerate() {
        match parse_feature(feature, index, storey_height_m, &mut warnings) {
            Ok(parts) => {
                for record in parts {
                    total += 1;
                    if record.land_use == LandUse::Residential {
                        residential += 1;
                    }
                    let keep = match land_use_filter {
                        Some(filter) => record.land_use == filter,
                        None => true,
                    };
                    if keep {
                        records.push(record);
                    }
                }
            }
            Err(reason) => {
                let id = feature_id(feature, index);
                log::warn!("rejected feature {index} ({id}): {reason}");
                rejections.push(Rejection {
                    feature_index: index,
                    id,
                    reason,
                });
            }
        }
    }

    let summary = InventorySummary::new(total, residential);
    if records.is_empty() {
        return Err(Error::EmptyInventory {
            total: summary.total_count,
            residential: summary.residential_count,
        });
    }
    Ok(LoadResult {
        records,
        summary,
        rejections,
        warnings,
    })
}

fn feature_id(feature: &Value, index: usize) -> String {
    if let Some(id) = feature.get("id") {
        match id {
            Value::String(s) => return s.clone(),
            Value::Number(n) => return n.to_string(),
            _ => {}
        }
    }
    if let Some(Value::String(s)) = feature.pointer("/properties/id") {
        return s.clone();
    }
    format!("feature_{index}")
}

fn parse_ring(value: &Value) -> std::result::Result<Ring, String> {
    let coords = value.as_array().ok_or("ring is not an array")?;
    let mut ring = Vec::with_capacity(coords.len());
    for pos in coords {
        let pair = pos.as_array().ok_or("position is not an array")?;
        if pair.len() < 2 {
            return Err("position has fewer than 2 coordinates".into());
        }
        let x = pair[0].as_f64().ok_or("non-numeric coordinate")?;
        let y = pair[1].as_f64().ok_or("non-numeric coordinate")?;
        if !x.is_finite() || !y.is_finite() {
            return Err("non-finite coordinate".into());
        }
        ring.push([x, y]);
    }
    if !ring_is_closed(&ring) {
        return Err("ring is not closed (first vertex must equal last, >= 4 vertices)".into());
    }
    Ok(ring)
}

fn parse_polygon(value: &Value) -> std::result::Result<Vec<Ring>, String> {
    let rings_json = value.as_array().ok_or("polygon coordinates not an array")?;
    if rings_json.is_empty() {
        return Err("polygon has no rings".into());
    }
    rings_json.iter().map(parse_ring).collect()
}

fn looks_geodetic(rings: &[Ring]) -> bool {
    let in_lonlat_range = rings.iter().flatten().all(|&[x, y]| {
        (-180.0..=180.0).contains(&x) && (-90.0..=90.0).contains(&y)
    });
    // A real building footprint in meters is never < 1 m^2; in degrees it
    // always is.
    in_lonlat_range && polygon_area(rings) < 1.0
}

fn parse_feature(
    feature: &Value,
    index: usize,
    storey_height_m: f64,
    warnings: &mut Vec<String>,
) -> std::result::Result<Vec<BuildingRecord>, String> {
    let id = feature_id(feature, index);
    let geometry = feature.get("geometry").ok_or("feature has no geometry")?;
    let geom_type = geometry
        .get("type")
        .and_then(Value::as_str)
        .ok_or("geometry has no type")?;
    let coordinates = geometry
        .get("coordinates")
        .ok_or("geometry has no coordinates")?;

    let polygons: Vec<(String, Vec<Ring>)> = match geom_type {
        "Polygon" => vec![(id.clone(), parse_polygon(coordinates)?)],
        "MultiPolygon" => {
            let parts = coordinates
                .as_array()
                .ok_or("multipolygon coordinates not an array")?;
            let mut out = Vec::with_capacity(parts.len());
            for (k, part) in parts.iter().enumerate() {
                out.push((format!("{id}_p{k}"), parse_polygon(part)?));
            }
            out
        }
        other => return Err(format!("non-polygon geometry `{other}`")),
    };

    let props = feature.get("properties").unwrap_or(&Value::Null);
    let mut height_m = props
        .get("height_m")
        .and_then(Value::as_f64)
        .ok_or("missing numeric `height_m` property")?;
    if !height_m.is_finite() || height_m <= 0.0 {
        return Err(format!("non-positive height {height_m}"));
    }
    if height_m > MAX_HEIGHT_M {
        let msg = format!("{id}: height {height_m} m clamped to {MAX_HEIGHT_M} m");
        log::warn!("{msg}");
        warnings.push(msg);
        height_m = MAX_HEIGHT_M;
    }
    let land_use = props
        .get("land_use")
        .and_then(Value::as_str)
        .map(LandUse::from_property)
        .unwrap_or(LandUse::Other);
    let measured_eui = props.get("eui_kwh_m2").and_then(Value::as_f64);

    let mut out = Vec::with_capacity(polygons.len());
    for (part_id, rings) in polygons {
        if looks_geodetic(&rings) {
            return Err("coordinates look geodetic (lon/lat); planar meters required".into());
        }
        let footprint_area = polygon_area(&rings);
        if footprint_area <= 0.0 {
            return Err("zero-area footprint".into());
        }
        let floor_area = derive_floor_area(footprint_area, height_m, storey_height_m)
            .map_err(|e| e.to_string())?;
        out.push(BuildingRecord {
            id: part_id,
            footprint: rings,
            height_m,
            land_use,
            footprint_area_m2: footprint_area,
            floor_area_m2: floor_area,
            measured_eui_kwh_m2: measured_eui,
        });
    }
    Ok(out)
}

/// Serialize records back to a GeoJSON FeatureCollection. Loading the output
/// with the same storey height reproduces the records exactly.
pub fn records_to_geojson(records: &[BuildingRecord], config_hash: &str) -> Value {
    let features: Vec<Value> = records
        .iter()
        .map(|r| {
            let mut props = serde_json::Map::new();
            props.insert("height_m".into(), json!(r.height_m));
            props.insert("land_use".into(), json!(r.land_use.to_string()));
            if let Some(eui) = r.measured_eui_kwh_m2 {
                props.insert("eui_kwh_m2".into(), json!(eui));
            }
            json!({
                "type": "Feature",
                "id": r.id,
                "properties": Value::Object(props),
                "geometry": {
                    "type": "Polygon",
                    "coordinates": r.footprint,
                },
            })
        })
        .collect();
    json!({
        "type": "FeatureCollection",
        "config_hash": config_hash,
        "features": features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square_feature(id: &str, side: f64, height: f64, land_use: &str) -> Value {
        json!({
            "type": "Feature",
            "id": id,
            "properties": {"height_m": height, "land_use": land_use},
            "geometry": {
                "type": "Polygon",
                "coordinates": [[[0.0, 0.0], [side, 0.0], [side, side], [0.0, side], [0.0, 0.0]]],
            },
        })
    }

    fn collection(features: Vec<Value>) -> Value {
        json!({"type": "FeatureCollection", "features": features})
    }

    #[test]
    fn shoelace_matches_hand_computed_areas() {
        let square = vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0], [0.0, 0.0]];
        assert_eq!(ring_area_signed(&square), 100.0);
        let triangle = vec![[0.0, 0.0], [4.0, 0.0], [0.0, 3.0], [0.0, 0.0]];
        assert_eq!(ring_area_signed(&triangle), 6.0);
        // clockwise ring: negative signed area, same magnitude
        let cw: Vec<[f64; 2]> = square.iter().rev().copied().collect();
        assert_eq!(ring_area_signed(&cw), -100.0);
    }

    #[test]
    fn holes_subtract_from_area() {
        let outer = vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0], [0.0, 0.0]];
        let hole = vec![[2.0, 2.0], [4.0, 2.0], [4.0, 4.0], [2.0, 4.0], [2.0, 2.0]];
        assert_eq!(polygon_area(&[outer, hole]), 96.0);
    }

    #[test]
    fn derive_floor_area_examples() {
        assert_eq!(derive_floor_area(100.0, 3.0, 3.0).unwrap(), 100.0);
        assert_eq!(derive_floor_area(100.0, 9.1, 3.0).unwrap(), 300.0);
        assert_eq!(derive_floor_area(250.0, 30.0, 3.0).unwrap(), 2500.0);
        assert!(derive_floor_area(0.0, 3.0, 3.0).is_err());
        assert!(derive_floor_area(100.0, -1.0, 3.0).is_err());
    }

    #[test]
    fn filter_retains_residential_and_counts_both() {
        let doc = collection(vec![
            square_feature("a", 10.0, 6.0, "Residential"),
            square_feature("b", 12.0, 9.0, "RESIDENTIAL (multi-family)"),
            square_feature("c", 8.0, 4.0, "commercial"),
        ]);
        let out =
            load_buildings_from_value(&doc, Some(LandUse::Residential), 3.0).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.summary.total_count, 3);
        assert_eq!(out.summary.residential_count, 2);
        assert!((out.summary.residential_fraction - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(out.records[0].id, "a");
        assert_eq!(out.records[1].id, "b");
    }

    #[test]
    fn empty_collection_is_an_error_with_zero_summary() {
        let doc = collection(vec![]);
        let err = load_buildings_from_value(&doc, None, 3.0).unwrap_err();
        match err {
            Error::EmptyInventory { total, residential } => {
                assert_eq!((total, residential), (0, 0));
            }
            other => panic!("expected EmptyInventory, got {other}"),
        }
    }

    #[test]
    fn bad_features_are_rejected_with_diagnostics() {
        let unclosed = json!({
            "type": "Feature",
            "id": "open",
            "properties": {"height_m": 5.0, "land_use": "residential"},
            "geometry": {"type": "Polygon",
                "coordinates": [[[0.0,0.0],[10.0,0.0],[10.0,10.0],[0.0,10.0]]]},
        });
        let no_height = json!({
            "type": "Feature",
            "id": "flat",
            "properties": {"land_use": "residential"},
            "geometry": {"type": "Polygon",
                "coordinates": [[[0.0,0.0],[10.0,0.0],[10.0,10.0],[0.0,10.0],[0.0,0.0]]]},
        });
        let negative = json!({
            "type": "Feature",
            "id": "neg",
            "properties": {"height_m": -3.0, "land_use": "residential"},
            "geometry": {"type": "Polygon",
                "coordinates": [[[0.0,0.0],[10.0,0.0],[10.0,10.0],[0.0,10.0],[0.0,0.0]]]},
        });
        let point = json!({
            "type": "Feature",
            "id": "pt",
            "properties": {"height_m": 3.0},
            "geometry": {"type": "Point", "coordinates": [1.0, 2.0]},
        });
        let doc = collection(vec![
            unclosed,
            no_height,
            negative,
            point,
            square_feature("ok", 10.0, 6.0, "residential"),
        ]);
        let out = load_buildings_from_value(&doc, None, 3.0).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.rejections.len(), 4);
        assert!(out.rejections[0].reason.contains("not closed"));
        assert!(out.rejections[1].reason.contains("height_m"));
        assert!(out.rejections[2].reason.contains("non-positive"));
        assert!(out.rejections[3].reason.contains("non-polygon"));
    }

    #[test]
    fn tall_buildings_clamp_to_100m_with_warning() {
        let doc = collection(vec![square_feature("tower", 20.0, 250.0, "residential")]);
        let out = load_buildings_from_value(&doc, None, 3.0).unwrap();
        assert_eq!(out.records[0].height_m, 100.0);
        assert_eq!(out.warnings.len(), 1);
        // floor area follows the clamped height: 400 * round(100/3) = 400 * 33
        assert_eq!(out.records[0].floor_area_m2, 400.0 * 33.0);
    }

    #[test]
    fn geodetic_coordinates_are_rejected() {
        let doc = collection(vec![json!({
            "type": "Feature",
            "id": "sf",
            "properties": {"height_m": 12.0, "land_use": "residential"},
            "geometry": {"type": "Polygon", "coordinates": [[
                [-122.41, 37.80], [-122.4099, 37.80], [-122.4099, 37.8001],
                [-122.41, 37.8001], [-122.41, 37.80]]]},
        })]);
        let err = load_buildings_from_value(&doc, None, 3.0).unwrap_err();
        assert!(matches!(err, Error::EmptyInventory { .. }));
    }

    #[test]
    fn multipolygon_splits_with_suffixed_ids() {
        let doc = collection(vec![json!({
            "type": "Feature",
            "id": "mp",
            "properties": {"height_m": 6.0, "land_use": "residential"},
            "geometry": {"type": "MultiPolygon", "coordinates": [
                [[[0.0,0.0],[10.0,0.0],[10.0,10.0],[0.0,10.0],[0.0,0.0]]],
                [[[20.0,0.0],[26.0,0.0],[26.0,6.0],[20.0,6.0],[20.0,0.0]]],
            ]},
        })]);
        let out = load_buildings_from_value(&doc, None, 3.0).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].id, "mp_p0");
        assert_eq!(out.records[1].id, "mp_p1");
        assert_eq!(out.summary.total_count, 2);
    }

    #[test]
    fn measured_eui_is_carried() {
        let mut f = square_feature("e", 10.0, 6.0, "residential");
        f["properties"]["eui_kwh_m2"] = json!(114.1);
        let doc = collection(vec![f]);
        let out = load_buildings_from_value(&doc, None, 3.0).unwrap();
        assert_eq!(out.records[0].measured_eui_kwh_m2, Some(114.1));
    }

    #[test]
    fn roundtrip_through_geojson_is_identity() {
        let doc = collection(vec![
            square_feature("a", 10.0, 6.5, "residential"),
            square_feature("b", 14.0, 31.0, "residential"),
            square_feature("c", 9.0, 4.0, "industrial"),
        ]);
        let first = load_buildings_from_value(&doc, None, 3.0).unwrap();
        let serialized = records_to_geojson(&first.records, "deadbeef");
        let second = load_buildings_from_value(&serialized, None, 3.0).unwrap();
        assert_eq!(first.records, second.records);
    }

    #[test]
    fn filtering_is_idempotent() {
        let doc = collection(vec![
            square_feature("a", 10.0, 6.0, "residential"),
            square_feature("c", 8.0, 4.0, "office"),
        ]);
        let once = load_buildings_from_value(&doc, Some(LandUse::Residential), 3.0).unwrap();
        let reser = records_to_geojson(&once.records, "x");
        let twice =
            load_buildings_from_value(&reser, Some(LandUse::Residential), 3.0).unwrap();
        assert_eq!(once.records, twice.records);
    }

    proptest! {
        #[test]
        fn floor_area_monotone_in_height(
            area in 1.0f64..1e4,
            h1 in 0.1f64..100.0,
            h2 in 0.1f64..100.0,
        ) {
            let lo = h1.min(h2);
            let hi = h1.max(h2);
            let a = derive_floor_area(area, lo, 3.0).unwrap();
            let b = derive_floor_area(area, hi, 3.0).unwrap();
            prop_assert!(b >= a);
        }
    }
}
