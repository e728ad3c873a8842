//! Annotation export as a GeoJSON-style feature collection.
//!
//! Region coordinates are pixel corners, so a single pixel at `(x, y)` is
//! the square `[x, x+1] × [y, y+1]`. Stroke coordinates are pixel centres,
//! exactly as drawn.

use serde_json::{json, Value};
use sqseg_core::mask::{connected_components, mask_to_polygons, Connectivity, Polygon};
use sqseg_core::pipeline::Palette;
use sqseg_core::signal::Squiggle;
use sqseg_core::LabelMask;

fn ring(poly: &Polygon) -> Value {
    let mut coords: Vec<[f64; 2]> = poly.vertices().iter().map(|&p| p.into()).collect();
    coords.push(coords[0]);
    json!(coords)
}

fn region_features(labels: &LabelMask, palette: &Palette) -> Vec<Value> {
    let mut out = Vec::new();
    for class in labels.classes() {
        let name = palette.get(class).map(|c| c.name.as_str());
        for component in
            connected_components(&labels.class_mask(class), Connectivity::Eight).masks()
        {
            let mut rings = mask_to_polygons(&component);
            // Outer ring first, holes after.
            rings.sort_by(|a, b| b.signed_area().total_cmp(&a.signed_area()));
            out.push(json!({
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": rings.iter().map(ring).collect::<Vec<_>>(),
                },
                "properties": {
                    "kind": "region",
                    "class_id": class,
                    "class_name": name,
                    "area_px": component.count(),
                },
            }));
        }
    }
    out
}

fn stroke_feature(s: &Squiggle) -> Value {
    let coords: Vec<[f64; 2]> = s.points.iter().map(|&p| p.into()).collect();
    let geometry = if coords.len() == 1 {
        json!({ "type": "Point", "coordinates": coords[0] })
    } else {
        json!({ "type": "LineString", "coordinates": coords })
    };
    json!({
        "type": "Feature",
        "geometry": geometry,
        "properties": { "kind": "stroke", "class_id": s.class_id, "radius": s.radius },
    })
}

pub fn export_geojson(labels: &LabelMask, palette: &Palette, squiggles: &[Squiggle]) -> Value {
    let mut features = region_features(labels, palette);
    features.extend(squiggles.iter().map(stroke_feature));
    json!({
        "type": "FeatureCollection",
        "properties": { "width": labels.width(), "height": labels.height() },
        "features": features,
    })
}

/// Strokes recovered from an export, in their original order.
pub fn strokes_from_geojson(collection: &Value) -> sqseg_core::Result<Vec<Squiggle>> {
    let bad = |m: &str| sqseg_core::Error::InvalidArgument(format!("export: {m}"));
    let features = collection["features"]
        .as_array()
        .ok_or_else(|| bad("missing features"))?;
    let mut out = Vec::new();
    for f in features {
        if f["properties"]["kind"] != "stroke" {
            continue;
        }
        let geom = &f["geometry"];
        let points: Vec<[f64; 2]> = match geom["type"].as_str() {
            Some("Point") => vec![serde_json::from_value(geom["coordinates"].clone())?],
            Some("LineString") => serde_json::from_value(geom["coordinates"].clone())?,
            _ => return Err(bad("stroke geometry must be Point or LineString")),
        };
        let class_id = f["properties"]["class_id"]
            .as_u64()
            .and_then(|c| u8::try_from(c).ok())
            .ok_or_else(|| bad("stroke class_id"))?;
        let radius = f["properties"]["radius"]
            .as_f64()
            .ok_or_else(|| bad("stroke radius"))?;
        out.push(Squiggle::new(
            points.into_iter().map(Into::into).collect(),
            class_id,
            radius,
        )?);
    }
    Ok(out)
}
