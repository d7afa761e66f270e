//! Segment/rectangle clipping (Liang–Barsky) for the backward integral
//! limits, plus polygon/rectangle clipping (Sutherland–Hodgman) and the
//! shoelace area used by the exact-coverage oracle.

use crate::geometry::{Rect, Vec2};

/// Directed line segment in screen space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Segment {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).length()
    }
}

/// Clips a segment against an axis-aligned rectangle, preserving the a→b
/// direction. Returns `None` when the intersection is empty or a single
/// point: a zero-length clip yields identical integral limits and hence a
/// zero gradient contribution.
pub fn liang_barsky_clip(seg: Segment, rect: &Rect) -> Option<Segment> {
    let dx = seg.b.x - seg.a.x;
    let dy = seg.b.y - seg.a.y;

    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;

    // (p, q) per rectangle side: left, right, top, bottom.
    let checks = [
        (-dx, seg.a.x - rect.x_min),
        (dx, rect.x_max - seg.a.x),
        (-dy, seg.a.y - rect.y_min),
        (dy, rect.y_max - seg.a.y),
    ];

    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None; // parallel and outside
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return None;
                }
                if r > t0 {
                    t0 = r;
                }
            } else {
                if r < t0 {
                    return None;
                }
                if r < t1 {
                    t1 = r;
                }
            }
        }
    }

    if t1 <= t0 {
        return None;
    }

    let a = Vec2::new(seg.a.x + t0 * dx, seg.a.y + t0 * dy);
    let b = Vec2::new(seg.a.x + t1 * dx, seg.a.y + t1 * dy);
    if a == b {
        return None; // degenerate input segment or vanishing clip
    }
    Some(Segment::new(a, b))
}

/// Clips a polygon against an axis-aligned rectangle (Sutherland–Hodgman,
/// one pass per rectangle side). Convex input gives convex output. The
/// result may contain coincident vertices; `polygon_area` is unaffected.
pub fn clip_polygon_to_rect(polygon: &[Vec2], rect: &Rect) -> Vec<Vec2> {
    // inside(p) per side; intersect(s, e) solves for the side crossing.
    fn pass(
        input: &[Vec2],
        inside: impl Fn(Vec2) -> bool,
        intersect: impl Fn(Vec2, Vec2) -> Vec2,
    ) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(input.len() + 4);
        let n = input.len();
        // Walk (prev -> current) so a fully-inside polygon comes back in
        // its original vertex order.
        for i in 0..n {
            let s = input[(i + n - 1) % n];
            let e = input[i];
            match (inside(s), inside(e)) {
                (true, true) => out.push(e),
                (true, false) => out.push(intersect(s, e)),
                (false, true) => {
                    out.push(intersect(s, e));
                    out.push(e);
                }
                (false, false) => {}
            }
        }
        out
    }

    if polygon.len() < 3 {
        return Vec::new();
    }

    let lerp_x = |s: Vec2, e: Vec2, x: f64| {
        let t = (x - s.x) / (e.x - s.x);
        Vec2::new(x, s.y + t * (e.y - s.y))
    };
    let lerp_y = |s: Vec2, e: Vec2, y: f64| {
        let t = (y - s.y) / (e.y - s.y);
        Vec2::new(s.x + t * (e.x - s.x), y)
    };

    let mut poly = pass(
        polygon,
        |p| p.x >= rect.x_min,
        |s, e| lerp_x(s, e, rect.x_min),
    );
    if poly.len() < 3 {
        return Vec::new();
    }
    poly = pass(
        &poly,
        |p| p.x <= rect.x_max,
        |s, e| lerp_x(s, e, rect.x_max),
    );
    if poly.len() < 3 {
        return Vec::new();
    }
    poly = pass(
        &poly,
        |p| p.y >= rect.y_min,
        |s, e| lerp_y(s, e, rect.y_min),
    );
    if poly.len() < 3 {
        return Vec::new();
    }
    poly = pass(
        &poly,
        |p| p.y <= rect.y_max,
        |s, e| lerp_y(s, e, rect.y_max),
    );
    if poly.len() < 3 {
        return Vec::new();
    }
    poly
}

/// Absolute shoelace area of a simple polygon. Empty input returns 0.
pub fn polygon_area(polygon: &[Vec2]) -> f64 {
    if polygon.len() < 3 {
        return 0.0;
    }
    let mut twice_area = 0.0;
    for i in 0..polygon.len() {
        let p = polygon[i];
        let q = polygon[(i + 1) % polygon.len()];
        twice_area += p.cross(q);
    }
    twice_area.abs() / 2.0
}
