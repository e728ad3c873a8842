use serde::{Deserialize, Serialize};

use super::SignalPair;
use crate::error::{Error, Result};
use crate::mask::{point_segment_distance, BinaryMask, Point};

fn default_radius() -> f64 {
    2.0
}

/// A hand-drawn stroke. Points are in pixel-index coordinates: `(x, y)` is
/// the center of pixel `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSquiggle")]
pub struct Squiggle {
    pub points: Vec<Point>,
    pub class_id: u8,
    pub radius: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSquiggle {
    points: Vec<Point>,
    class_id: u8,
    #[serde(default = "default_radius")]
    radius: f64,
}

impl TryFrom<RawSquiggle> for Squiggle {
    type Error = Error;

    fn try_from(raw: RawSquiggle) -> Result<Self> {
        Squiggle::new(raw.points, raw.class_id, raw.radius)
    }
}

impl Squiggle {
    pub fn new(points: Vec<Point>, class_id: u8, radius: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("squiggle needs at least one point"));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::invalid("squiggle point is not finite"));
        }
        if class_id == 0 {
            return Err(Error::invalid("squiggle class_id must be >= 1"));
        }
        if !(radius >= 0.5) || !radius.is_finite() {
            return Err(Error::invalid(format!(
                "squiggle radius must be >= 0.5, got {radius}"
            )));
        }
        Ok(Squiggle {
            points,
            class_id,
            radius,
        })
    }

    /// Same stroke shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Squiggle {
        Squiggle {
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
            ..self.clone()
        }
    }

    /// Center of the axis-aligned bounding box of the points.
    pub fn center(&self) -> Point {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in &self.points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        Point::new((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    }

    /// Paints the swept disk of this stroke into `mask`.
    pub fn paint(&self, mask: &mut BinaryMask) {
        let (w, h) = mask.dims();
        let r = self.radius;
        let segments: Vec<(Point, Point)> = if self.points.len() == 1 {
            vec![(self.points[0], self.points[0])]
        } else {
            self.points.windows(2).map(|s| (s[0], s[1])).collect()
        };
        for (a, b) in segments {
            let x0 = (a.x.min(b.x) - r).floor().max(0.0);
            let y0 = (a.y.min(b.y) - r).floor().max(0.0);
            let x1 = (a.x.max(b.x) + r).ceil().min(w as f64 - 1.0);
            let y1 = (a.y.max(b.y) + r).ceil().min(h as f64 - 1.0);
            if x0 > x1 || y0 > y1 {
                continue;
            }
            for y in y0 as usize..=y1 as usize {
                for x in x0 as usize..=x1 as usize {
                    if point_segment_distance(Point::new(x as f64, y as f64), a, b) <= r {
                        mask.set(x, y, true);
                    }
                }
            }
        }
    }
}

/// Inclusion from strokes of `target_class`, exclusion from every other
/// stroke; overlap goes to inclusion.
pub fn rasterize_squiggle(
    squiggles: &[Squiggle],
    target_class: u8,
    width: usize,
    height: usize,
) -> Result<SignalPair> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("canvas dimensions must be >= 1"));
    }
    let mut pair = SignalPair::empty(width, height);
    for s in squiggles {
        if s.class_id == target_class {
            s.paint(&mut pair.inclusion);
        } else {
            s.paint(&mut pair.exclusion);
        }
    }
    pair.resolve_overlap();
    Ok(pair)
}
