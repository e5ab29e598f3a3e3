//! Small vector helpers for states of dimension one or two.

use smallvec::SmallVec;

/// A state, velocity or covector in at most two dimensions (three for
/// time-augmented covectors, which spill to the heap only in 2D).
pub type Point = SmallVec<[f64; 3]>;

pub fn point(xs: &[f64]) -> Point {
    SmallVec::from_slice(xs)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `a + s * b`.
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// Euclidean distance between (t1, x1) and (t2, x2).
pub fn time_state_dist(t1: f64, x1: &[f64], t2: f64, x2: &[f64]) -> f64 {
    let dx = dist(x1, x2);
    ((t1 - t2) * (t1 - t2) + dx * dx).sqrt()
}

fn cross(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull of planar points (monotone chain), counter-clockwise, with
/// collinear and duplicate points removed.
pub fn convex_hull_2d(points: &[Point], tol: f64) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol);
    if pts.len() <= 2 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for p in pts.iter() {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= tol {
            hull.pop();
        }
        hull.push(p.clone());
    }
    let lower_len = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= tol {
            hull.pop();
        }
        hull.push(p.clone());
    }
    hull.pop();
    if hull.len() == 2 && dist(&hull[0], &hull[1]) <= tol {
        hull.pop();
    }
    hull
}

/// Whether `p` lies in the closed convex polygon `hull` (counter-clockwise).
pub fn in_convex_polygon(hull: &[Point], p: &[f64], tol: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => dist(&hull[0], p) <= tol,
        2 => dist_to_segment(&hull[0], &hull[1], p) <= tol,
        n => (0..n).all(|i| {
            let a = &hull[i];
            let b = &hull[(i + 1) % n];
            let len = dist(a, b).max(f64::MIN_POSITIVE);
            cross(a, b, p) / len >= -tol
        }),
    }
}

pub fn dist_to_segment(a: &[f64], b: &[f64], p: &[f64]) -> f64 {
    let ab: Point = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let ap: Point = p.iter().zip(a).map(|(x, y)| x - y).collect();
    let len2 = dot(&ab, &ab);
    let s = if len2 > 0.0 { (dot(&ap, &ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    dist(&axpy(a, s, &ab), p)
}

/// Distance from `p` to the convex polygon `hull`; zero inside.
pub fn dist_to_polygon(hull: &[Point], p: &[f64]) -> f64 {
    match hull.len() {
        0 => f64::INFINITY,
        1 => dist(&hull[0], p),
        _ if hull.len() >= 3 && in_convex_polygon(hull, p, 0.0) => 0.0,
        n => (0..n).map(|i| dist_to_segment(&hull[i], &hull[(i + 1) % n], p)).fold(f64::INFINITY, f64::min),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_square_with_interior_and_collinear_points() {
        let pts: Vec<Point> = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.0, 0.0]]
            .iter()
            .map(|p| point(p))
            .collect();
        let hull = convex_hull_2d(&pts, 1e-12);
        assert_eq!(hull.len(), 4);
        assert!(in_convex_polygon(&hull, &[0.5, 0.5], 0.0));
        assert!(in_convex_polygon(&hull, &[1.0, 0.5], 1e-12));
        assert!(!in_convex_polygon(&hull, &[1.1, 0.5], 1e-12));
        assert!((dist_to_polygon(&hull, &[2.0, 0.5]) - 1.0).abs() < 1e-12);
        assert_eq!(dist_to_polygon(&hull, &[0.25, 0.25]), 0.0);
    }

    #[test]
    fn degenerate_hulls() {
        let seg: Vec<Point> = vec![point(&[0.0, 0.0]), point(&[1.0, 1.0]), point(&[0.5, 0.5])];
        assert_eq!(convex_hull_2d(&seg, 1e-12).len(), 2);
        let single: Vec<Point> = vec![point(&[2.0, 3.0]), point(&[2.0, 3.0])];
        assert_eq!(convex_hull_2d(&single, 1e-12).len(), 1);
    }
}
