//! Planar polygon kernel: validated simple rings, Sutherland–Hodgman
//! clipping against axis-aligned cells and shoelace areas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = (f64, f64);

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.0 >= self.x_min && p.0 <= self.x_max && p.1 >= self.y_min && p.1 <= self.y_max
    }
}

/// Signed shoelace area; positive for counterclockwise rings. Coordinates
/// are taken relative to the first vertex to limit cancellation far from
/// the origin.
pub fn signed_area(points: &[Point]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let (ox, oy) = points[0];
    let mut acc = 0.0;
    for i in 1..n - 1 {
        let (x0, y0) = (points[i].0 - ox, points[i].1 - oy);
        let (x1, y1) = (points[i + 1].0 - ox, points[i + 1].1 - oy);
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

/// A simple polygon ring stored counterclockwise and without the closing
/// vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    points: Vec<Point>,
}

impl Ring {
    /// Validates `points` (closed or open) and orients them
    /// counterclockwise. `owner` names the parcel in error messages.
    pub fn new(owner: &str, mut points: Vec<Point>) -> Result<Self> {
        let degenerate = |reason: &str| Error::DegeneratePolygon {
            parcel_id: owner.to_string(),
            reason: reason.to_string(),
        };
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(degenerate("non-finite vertex"));
        }
        if points.len() > 1 && points.first() == points.last() {
            points.pop();
        }
        points.dedup();
        if points.len() < 3 {
            return Err(degenerate("fewer than 3 distinct vertices"));
        }
        if has_self_intersection(&points) {
            return Err(degenerate("ring is self-intersecting"));
        }
        let area = signed_area(&points);
        if area == 0.0 || !area.is_finite() {
            return Err(degenerate("zero area"));
        }
        if area < 0.0 {
            points.reverse();
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.points)
    }

    pub fn bounds(&self) -> Bounds {
        let mut b = Bounds {
            x_min: f64::INFINITY,
            y_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for &(x, y) in &self.points {
            b.x_min = b.x_min.min(x);
            b.y_min = b.y_min.min(y);
            b.x_max = b.x_max.max(x);
            b.y_max = b.y_max.max(y);
        }
        b
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self.points.iter().map(|&(x, y)| (x + dx, y + dy)).collect(),
        }
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Quadratic check of every pair of non-adjacent edges, plus collinear
/// overlap of adjacent edges (a spike folding back on itself).
fn has_self_intersection(points: &[Point]) -> bool {
    let n = points.len();
    let edge = |i: usize| (points[i], points[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        let (_, c) = edge((i + 1) % n);
        // consecutive edges a→b→c fold back when collinear and reversing
        if orient(a, b, c) == 0.0 && (b.0 - a.0) * (c.0 - b.0) + (b.1 - a.1) * (c.1 - b.1) < 0.0 {
            return true;
        }
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = edge(j);
            if segments_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    fn inside(self, p: Point, b: &Bounds) -> bool {
        match self {
            Side::Left => p.0 >= b.x_min,
            Side::Right => p.0 <= b.x_max,
            Side::Bottom => p.1 >= b.y_min,
            Side::Top => p.1 <= b.y_max,
        }
    }

    fn intersect(self, p: Point, q: Point, b: &Bounds) -> Point {
        match self {
            Side::Left | Side::Right => {
                let x = if matches!(self, Side::Left) { b.x_min } else { b.x_max };
                let t = (x - p.0) / (q.0 - p.0);
                (x, p.1 + t * (q.1 - p.1))
            }
            Side::Bottom | Side::Top => {
                let y = if matches!(self, Side::Bottom) { b.y_min } else { b.y_max };
                let t = (y - p.1) / (q.1 - p.1);
                (p.0 + t * (q.0 - p.0), y)
            }
        }
    }
}

/// Sutherland–Hodgman clip of `ring` against the rectangle. The result may
/// contain degenerate edges along the rectangle boundary when the ring is
/// concave; they contribute no area.
pub fn clip_to_bounds(ring: &Ring, bounds: &Bounds) -> Vec<Point> {
    let mut output = ring.points.clone();
    for side in [Side::Left, Side::Right, Side::Bottom, Side::Top] {
        if output.is_empty() {
            break;
        }
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().unwrap();
        for &cur in &input {
            let cur_in = side.inside(cur, bounds);
            let prev_in = side.inside(prev, bounds);
            if cur_in {
                if !prev_in {
                    output.push(side.intersect(prev, cur, bounds));
                }
                output.push(cur);
            } else if prev_in {
                output.push(side.intersect(prev, cur, bounds));
            }
            prev = cur;
        }
    }
    output
}

/// Area of `ring ∩ bounds`; 0 when disjoint.
pub fn clip_polygon_to_cell(ring: &Ring, bounds: &Bounds) -> f64 {
    let rb = ring.bounds();
    if rb.x_max <= bounds.x_min
        || rb.x_min >= bounds.x_max
        || rb.y_max <= bounds.y_min
        || rb.y_min >= bounds.y_max
    {
        return 0.0;
    }
    signed_area(&clip_to_bounds(ring, bounds)).max(0.0)
}

/// Parses `POLYGON((x y, x y, ...))`. Only a single outer ring is accepted.
pub fn parse_wkt_polygon(wkt: &str) -> std::result::Result<Vec<Point>, String> {
    let s = wkt.trim();
    let upper = s.to_ascii_uppercase();
    let rest = upper
        .strip_prefix("POLYGON")
        .ok_or_else(|| format!("expected POLYGON, found `{}`", s.chars().take(20).collect::<String>()))?;
    let body = rest.trim();
    let body = body
        .strip_prefix("((")
        .or_else(|| body.strip_prefix('(').map(|b| b.trim_start()).and_then(|b| b.strip_prefix('(')))
        .ok_or("expected `((` after POLYGON")?;
    let body = body.trim_end();
    let body = body
        .strip_suffix("))")
        .or_else(|| body.strip_suffix(')').map(|b| b.trim_end()).and_then(|b| b.strip_suffix(')')))
        .ok_or("expected `))` at end of POLYGON")?;
    if body.contains('(') || body.contains(')') {
        return Err("polygons with holes are not supported".into());
    }
    body.split(',')
        .map(|pair| {
            let mut it = pair.split_whitespace();
            let x = it.next().ok_or("empty coordinate")?;
            let y = it.next().ok_or_else(|| format!("coordinate `{}` lacks y", pair.trim()))?;
            if it.next().is_some() {
                return Err(format!("coordinate `{}` has more than two values", pair.trim()));
            }
            let x: f64 = x.parse().map_err(|_| format!("bad number `{x}`"))?;
            let y: f64 = y.parse().map_err(|_| format!("bad number `{y}`"))?;
            Ok((x, y))
        })
        .collect()
}
