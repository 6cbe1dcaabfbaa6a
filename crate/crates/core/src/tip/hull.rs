use crate::error::{Error, Result};

pub type Point = (f64, f64);

pub fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull by Andrew's monotone chain.
///
/// Collinear points on edges are dropped. Fully collinear input gives the two
/// extreme points, a single distinct point gives itself.
pub fn convex_hull(points: &[Point]) -> Result<Vec<Point>> {
    if points.is_empty() {
        return Err(Error::Empty("point set"));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::NonFinite("hull input"));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return Ok(pts);
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    Ok(hull)
}

/// Area-weighted centroid; vertex mean for degenerate polygons.
pub fn polygon_centroid(poly: &[Point]) -> Point {
    let n = poly.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let c = p.0 * q.1 - q.0 * p.1;
        a += c;
        cx += (p.0 + q.0) * c;
        cy += (p.1 + q.1) * c;
    }
    if a.abs() < 1e-12 {
        let k = n as f64;
        return (poly.iter().map(|p| p.0).sum::<f64>() / k, poly.iter().map(|p| p.1).sum::<f64>() / k);
    }
    (cx / (3.0 * a), cy / (3.0 * a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Directed edges a→b with every other point strictly left of the line or
    /// on the segment between them.
    fn oracle_edges(points: &[Point]) -> Vec<(Point, Point)> {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.dedup();
        let mut edges = Vec::new();
        for &a in &pts {
            for &b in &pts {
                if a == b {
                    continue;
                }
                let ok = pts.iter().all(|&q| {
                    if q == a || q == b {
                        return true;
                    }
                    let c = cross(a, b, q);
                    if c > 0.0 {
                        return true;
                    }
                    if c < 0.0 {
                        return false;
                    }
                    let t = (q.0 - a.0) * (b.0 - a.0) + (q.1 - a.1) * (b.1 - a.1);
                    let len2 = (b.0 - a.0).powi(2) + (b.1 - a.1).powi(2);
                    t > 0.0 && t < len2
                });
                if ok {
                    edges.push((a, b));
                }
            }
        }
        edges
    }

    #[test]
    fn square_with_center() {
        let h = convex_hull(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)]).unwrap();
        assert_eq!(h, vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
    }

    #[test]
    fn triangle_is_itself() {
        let h = convex_hull(&[(0.0, 0.0), (4.0, 1.0), (1.0, 3.0)]).unwrap();
        assert_eq!(h.len(), 3);
    }

    #[test]
    fn collinear_gives_endpoints() {
        let h = convex_hull(&[(0.0, 0.0), (2.0, 2.0), (1.0, 1.0), (3.0, 3.0)]).unwrap();
        assert_eq!(h, vec![(0.0, 0.0), (3.0, 3.0)]);
        assert!(convex_hull(&[]).is_err());
        assert_eq!(convex_hull(&[(1.0, 1.0), (1.0, 1.0)]).unwrap(), vec![(1.0, 1.0)]);
    }

    #[test]
    fn centroid_of_square() {
        let c = polygon_centroid(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]);
        assert_eq!(c, (1.0, 1.0));
    }

    proptest! {
        #[test]
        fn hull_matches_edge_oracle(raw in proptest::collection::vec((0i32..30, 0i32..30), 3..60)) {
            let pts: Vec<Point> = raw.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
            let hull = convex_hull(&pts).unwrap();
            let edges = oracle_edges(&pts);
            if hull.len() >= 3 {
                prop_assert_eq!(hull.len(), edges.len());
                for i in 0..hull.len() {
                    let e = (hull[i], hull[(i + 1) % hull.len()]);
                    prop_assert!(edges.contains(&e), "edge {:?} not in oracle", e);
                }
            } else {
                // collinear: the oracle holds both directions between the ends
                prop_assert_eq!(edges.len(), if hull.len() == 2 { 2 } else { 0 });
                if hull.len() == 2 {
                    prop_assert!(edges.contains(&(hull[0], hull[1])) && edges.contains(&(hull[1], hull[0])));
                }
            }
        }
    }
}
