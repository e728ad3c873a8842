use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::{Error, Result};

/// A sub-pixel position. Pixel `(x, y)` covers `[x, x+1) × [y, y+1)` and its
/// center sits at `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// A closed ring or an open polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolygon")]
pub struct Polygon {
    vertices: Vec<Point>,
    closed: bool,
}

#[derive(Deserialize)]
struct RawPolygon {
    vertices: Vec<Point>,
    closed: bool,
}

impl TryFrom<RawPolygon> for Polygon {
    type Error = Error;

    fn try_from(raw: RawPolygon) -> Result<Self> {
        Polygon::new(raw.vertices, raw.closed)
    }
}

impl Polygon {
    /// Validates vertex count (3 for rings, 2 for polylines), distinct
    /// consecutive vertices and finite coordinates.
    pub fn new(vertices: Vec<Point>, closed: bool) -> Result<Self> {
        let min = if closed { 3 } else { 2 };
        if vertices.len() < min {
            return Err(Error::invalid(format!(
                "{} polygon needs at least {min} vertices, got {}",
                if closed { "closed" } else { "open" },
                vertices.len()
            )));
        }
        if vertices
            .iter()
            .any(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(Error::invalid("polygon vertex is not finite"));
        }
        if vertices.windows(2).any(|w| w[0] == w[1])
            || (closed && vertices.first() == vertices.last())
        {
            return Err(Error::invalid("consecutive polygon vertices must differ"));
        }
        Ok(Polygon { vertices, closed })
    }

    pub fn closed(vertices: Vec<Point>) -> Result<Self> {
        Polygon::new(vertices, true)
    }

    pub fn open(vertices: Vec<Point>) -> Result<Self> {
        Polygon::new(vertices, false)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area in image coordinates (y down): positive for rings that
    /// run clockwise on screen. Outer boundaries from [`mask_to_polygons`]
    /// are positive, holes negative. Zero for open polylines.
    pub fn signed_area(&self) -> f64 {
        if !self.closed {
            return 0.0;
        }
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum();
        twice / 2.0
    }
}

/// Distance from `p` to the closed segment `a`–`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * dx, a.y + t * dy))
}

// ---------------------------------------------------------------------------
// Boundary tracing
// ---------------------------------------------------------------------------

/// Traces pixel-edge boundaries of the foreground.
///
/// Each foreground pixel contributes the sides it shares with background,
/// oriented clockwise on screen (foreground on the right). Where two
/// foreground pixels touch only at a corner the trace turns towards the
/// diagonal neighbour, so each 8-connected component yields exactly one
/// positive outer ring; holes come out as negative rings. Collinear runs are
/// merged, so vertices are the boundary corners only.
pub fn mask_to_polygons(mask: &BinaryMask) -> Vec<Polygon> {
    let (w, h) = mask.dims();
    let vw = w + 1;
    let vid = |x: usize, y: usize| y * vw + x;
    // Each lattice vertex has at most two outgoing boundary edges.
    let mut out: Vec<[Option<u32>; 2]> = vec![[None, None]; vw * (h + 1)];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut add = |from: usize, to: usize, out: &mut Vec<[Option<u32>; 2]>| {
        let e = edges.len() as u32;
        edges.push((from, to));
        let slot = &mut out[from];
        if slot[0].is_none() {
            slot[0] = Some(e);
        } else {
            slot[1] = Some(e);
        }
    };
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let (xi, yi) = (x as isize, y as isize);
            if !mask.get_or_bg(xi, yi - 1) {
                add(vid(x, y), vid(x + 1, y), &mut out);
            }
            if !mask.get_or_bg(xi + 1, yi) {
                add(vid(x + 1, y), vid(x + 1, y + 1), &mut out);
            }
            if !mask.get_or_bg(xi, yi + 1) {
                add(vid(x + 1, y + 1), vid(x, y + 1), &mut out);
            }
            if !mask.get_or_bg(xi - 1, yi) {
                add(vid(x, y + 1), vid(x, y), &mut out);
            }
        }
    }

    let coords = |v: usize| ((v % vw) as i64, (v / vw) as i64);
    let dir = |e: (usize, usize)| {
        let (a, b) = (coords(e.0), coords(e.1));
        (b.0 - a.0, b.1 - a.1)
    };

    let mut used = vec![false; edges.len()];
    let mut polys = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut ring: Vec<(i64, i64)> = Vec::new();
        let mut e = start;
        loop {
            used[e] = true;
            ring.push(coords(edges[e].0));
            let (dx, dy) = dir(edges[e]);
            let next_slot = out[edges[e].1];
            let candidates: Vec<u32> = next_slot
                .iter()
                .flatten()
                .copied()
                .filter(|&c| !used[c as usize])
                .collect();
            let next = match candidates.as_slice() {
                [] => break,
                [only] => *only,
                _ => {
                    // Saddle: prefer the left turn (towards the diagonal pixel).
                    let left = (dy, -dx);
                    *candidates
                        .iter()
                        .find(|&&c| dir(edges[c as usize]) == left)
                        .unwrap_or(&candidates[0])
                }
            };
            e = next as usize;
        }
        polys.push(simplify_ring(&ring));
    }
    polys
}

/// Drops vertices where the boundary runs straight through.
fn simplify_ring(ring: &[(i64, i64)]) -> Polygon {
    let n = ring.len();
    let mut corners = Vec::with_capacity(n);
    for i in 0..n {
        let prev = ring[(i + n - 1) % n];
        let cur = ring[i];
        let next = ring[(i + 1) % n];
        let d0 = (cur.0 - prev.0, cur.1 - prev.1);
        let d1 = (next.0 - cur.0, next.1 - cur.1);
        if d0.0 * d1.1 - d0.1 * d1.0 != 0 {
            corners.push(Point::new(cur.0 as f64, cur.1 as f64));
        }
    }
    Polygon {
        vertices: corners,
        closed: true,
    }
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

/// Even-odd fill sampled at pixel centers. Open polylines enclose nothing and
/// are ignored; geometry outside the canvas is clipped.
pub fn polygons_to_mask(polys: &[Polygon], width: usize, height: usize) -> Result<BinaryMask> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("canvas dimensions must be >= 1"));
    }
    let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); height];
    for poly in polys.iter().filter(|p| p.closed) {
        let n = poly.vertices.len();
        for i in 0..n {
            let (a, b) = (poly.vertices[i], poly.vertices[(i + 1) % n]);
            if a.y == b.y {
                continue;
            }
            let (lo, hi) = if a.y < b.y { (a.y, b.y) } else { (b.y, a.y) };
            // Rows whose center yc satisfies lo <= yc < hi.
            let first = (lo - 0.5).ceil().max(0.0);
            let last = ((hi - 0.5).ceil() - 1.0).min(height as f64 - 1.0);
            if first > last {
                continue;
            }
            for row in first as usize..=last as usize {
                let yc = row as f64 + 0.5;
                let x = a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y);
                crossings[row].push(x);
            }
        }
    }
    let mut mask = BinaryMask::new(width, height);
    for (row, xs) in crossings.iter_mut().enumerate() {
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            // Pixels whose center xc satisfies pair[0] <= xc < pair[1].
            let x0 = (pair[0] - 0.5).ceil().max(0.0);
            let x1 = ((pair[1] - 0.5).ceil()).min(width as f64);
            if x0 >= x1 {
                continue;
            }
            for x in x0 as usize..x1 as usize {
                mask.set(x, row, true);
            }
        }
    }
    Ok(mask)
}

// ---------------------------------------------------------------------------
// Douglas–Peucker
// ---------------------------------------------------------------------------

/// Marks the vertices of `pts[first..=last]` that survive simplification.
fn douglas_peucker(pts: &[Point], first: usize, last: usize, epsilon: f64, keep: &mut [bool]) {
    keep[first] = true;
    keep[last] = true;
    let mut stack = vec![(first, last)];
    while let Some((i, j)) = stack.pop() {
        if j <= i + 1 {
            continue;
        }
        let (mut worst, mut worst_d) = (i, -1.0);
        for k in i + 1..j {
            let d = point_segment_distance(pts[k], pts[i], pts[j]);
            if d > worst_d {
                worst = k;
                worst_d = d;
            }
        }
        if worst_d > epsilon {
            keep[worst] = true;
            stack.push((i, worst));
            stack.push((worst, j));
        }
    }
}

/// Indices of the two mutually farthest vertices, lowest index first.
fn farthest_pair(pts: &[Point]) -> (usize, usize) {
    // The farthest pair always lies on the convex hull.
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| {
        pts[a]
            .x
            .total_cmp(&pts[b].x)
            .then(pts[a].y.total_cmp(&pts[b].y))
            .then(a.cmp(&b))
    });
    let cross =
        |o: Point, a: Point, b: Point| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<usize> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in iter {
            while hull.len() >= start + 2
                && cross(pts[hull[hull.len() - 2]], pts[hull[hull.len() - 1]], pts[i]) <= 0.0
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    if hull.len() < 2 {
        hull = order.clone();
    }
    let (mut best, mut best_d) = ((0, 1), -1.0);
    for (ai, &a) in hull.iter().enumerate() {
        for &b in &hull[ai + 1..] {
            let d = pts[a].dist(pts[b]);
            let pair = (a.min(b), a.max(b));
            if d > best_d || (d == best_d && pair < best) {
                best = pair;
                best_d = d;
            }
        }
    }
    best
}

fn dedup_consecutive(pts: &mut Vec<Point>, closed: bool) {
    pts.dedup();
    while closed && pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
}

/// Douglas–Peucker simplification.
///
/// Open polylines are anchored at their endpoints; closed rings at their two
/// mutually farthest vertices, each half simplified separately. The result is
/// a subsequence of the input in which every dropped vertex is within
/// `epsilon` of the segment that replaced it. A ring is never reduced below
/// three vertices: if both halves collapse onto the anchor chord, the vertex
/// farthest from that chord is retained.
pub fn approximate_polygon(poly: &Polygon, epsilon: f64) -> Result<Polygon> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    let pts = &poly.vertices;
    let n = pts.len();
    let mut keep = vec![false; n];
    if !poly.closed {
        douglas_peucker(pts, 0, n - 1, epsilon, &mut keep);
        let mut out: Vec<Point> = (0..n).filter(|&i| keep[i]).map(|i| pts[i]).collect();
        dedup_consecutive(&mut out, false);
        if out.len() < 2 {
            // Both endpoints coincide; the polyline is a closed loop in disguise.
            return Ok(poly.clone());
        }
        return Ok(Polygon {
            vertices: out,
            closed: false,
        });
    }

    let (a, b) = farthest_pair(pts);
    douglas_peucker(pts, a, b, epsilon, &mut keep);
    // Second half runs b..n-1 then wraps to 0..a.
    let wrapped: Vec<Point> = (b..n).chain(0..=a).map(|i| pts[i]).collect();
    let mut keep_wrapped = vec![false; wrapped.len()];
    douglas_peucker(&wrapped, 0, wrapped.len() - 1, epsilon, &mut keep_wrapped);
    for (k, &kept) in keep_wrapped.iter().enumerate() {
        if kept {
            keep[(b + k) % n] = true;
        }
    }

    let collect = |keep: &[bool]| {
        let mut v: Vec<Point> = (0..n).filter(|&i| keep[i]).map(|i| pts[i]).collect();
        dedup_consecutive(&mut v, true);
        v
    };
    let mut out = collect(&keep);
    if out.len() < 3 {
        let chord_dist = |i: usize| point_segment_distance(pts[i], pts[a], pts[b]);
        let extra = (0..n)
            .filter(|&i| !keep[i] && pts[i] != pts[a] && pts[i] != pts[b])
            .max_by(|&i, &j| chord_dist(i).total_cmp(&chord_dist(j)).then(j.cmp(&i)));
        match extra {
            Some(i) => {
                keep[i] = true;
                out = collect(&keep);
            }
            None => return Ok(poly.clone()),
        }
    }
    if out.len() < 3 {
        return Ok(poly.clone());
    }
    Ok(Polygon {
        vertices: out,
        closed: true,
    })
}
