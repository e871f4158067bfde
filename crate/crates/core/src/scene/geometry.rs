//! Planar geometry on `[x, y]` meter coordinates.

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn dist2(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

pub fn dist(a: Point, b: Point) -> f64 {
    libm::sqrt(dist2(a, b))
}

/// Squared distance from `p` to the closed segment `ab`.
#[inline]
pub fn segment_dist2(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return dist2(p, a);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    dist2(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

pub fn segment_dist(p: Point, a: Point, b: Point) -> f64 {
    libm::sqrt(segment_dist2(p, a, b))
}

pub fn polyline_dist(p: Point, path: &[Point]) -> f64 {
    match path {
        [] => f64::INFINITY,
        [q] => dist(p, *q),
        _ => {
            let d2 = path.windows(2).map(|s| segment_dist2(p, s[0], s[1])).fold(f64::INFINITY, f64::min);
            libm::sqrt(d2)
        }
    }
}

pub fn polyline_length(path: &[Point]) -> f64 {
    path.windows(2).map(|s| dist(s[0], s[1])).sum()
}

/// Even-odd point-in-polygon test. Points exactly on an edge may fall on
/// either side.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Distance to the polygon region: zero inside, distance to the boundary
/// outside.
pub fn polygon_dist(p: Point, poly: &[Point]) -> f64 {
    if point_in_polygon(p, poly) {
        return 0.0;
    }
    boundary_dist(p, poly)
}

pub fn boundary_dist(p: Point, poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        best = best.min(segment_dist2(p, poly[i], poly[(i + 1) % n]));
    }
    libm::sqrt(best)
}

/// Signed shoelace area (positive for counter-clockwise rings).
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| cross(poly[i], poly[(i + 1) % n])).sum::<f64>() / 2.0
}

pub fn centroid(poly: &[Point]) -> Point {
    let a = signed_area(poly);
    let n = poly.len();
    if a == 0.0 {
        let s = poly.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
        return [s[0] / n as f64, s[1] / n as f64];
    }
    let mut c = [0.0, 0.0];
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let w = cross(p, q);
        c[0] += (p[0] + q[0]) * w;
        c[1] += (p[1] + q[1]) * w;
    }
    [c[0] / (6.0 * a), c[1] / (6.0 * a)]
}

/// Intersection point of segments `ab` and `cd` when they cross or touch at
/// a single point; collinear overlaps yield `None`.
pub fn segment_intersection(a: Point, b: Point, c: Point, d: Point) -> Option<Point> {
    let r = sub(b, a);
    let s = sub(d, c);
    let denom = cross(r, s);
    if denom == 0.0 {
        return None;
    }
    let ac = sub(c, a);
    let t = cross(ac, s) / denom;
    let u = cross(ac, r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some([a[0] + t * r[0], a[1] + t * r[1]])
    } else {
        None
    }
}

/// True when no two non-adjacent edges of the ring intersect.
pub fn is_simple(poly: &[Point]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segment_intersection(a, b, c, d).is_some() {
                return false;
            }
        }
    }
    true
}

/// Length of the part of segment `ab` inside the closed disk `(center, r)`.
pub fn segment_length_in_disk(a: Point, b: Point, center: Point, r: f64) -> f64 {
    match segment_disk_interval(a, b, center, r) {
        Some((t0, t1)) => (t1 - t0) * dist(a, b),
        None => 0.0,
    }
}

/// Parameter interval `[t0, t1] ⊆ [0, 1]` of segment `ab` inside the disk.
pub fn segment_disk_interval(a: Point, b: Point, center: Point, r: f64) -> Option<(f64, f64)> {
    let d = sub(b, a);
    let f = sub(a, center);
    let qa = dot(d, d);
    if qa == 0.0 {
        return (dist2(a, center) <= r * r).then_some((0.0, 0.0));
    }
    let qb = 2.0 * dot(f, d);
    let qc = dot(f, f) - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = libm::sqrt(disc);
    let t0 = ((-qb - sq) / (2.0 * qa)).max(0.0);
    let t1 = ((-qb + sq) / (2.0 * qa)).min(1.0);
    (t1 > t0).then_some((t0, t1))
}

/// Axis-aligned bounding box `(min, max)` of a point set.
pub fn bbox(points: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        lo = [lo[0].min(p[0]), lo[1].min(p[1])];
        hi = [hi[0].max(p[0]), hi[1].max(p[1])];
    }
    (lo, hi)
}
