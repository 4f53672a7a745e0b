//! Dimension-generic vector primitives and the small exact-geometry kernel
//! everything else is built on: segment/sphere clipping, convex hulls,
//! minimum-width strips, minimum enclosing balls, Householder reflections.

use serde::Serialize;

/// A point of `R^d`, `d >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn sub(&self, other: &Point) -> Vec<f64> {
        self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()
    }

    pub fn add_scaled(&self, dir: &[f64], s: f64) -> Point {
        Point(
            self.0
                .iter()
                .zip(dir)
                .map(|(a, d)| a + s * d)
                .collect(),
        )
    }

    pub fn lerp(&self, other: &Point, s: f64) -> Point {
        Point(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + s * (b - a))
                .collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        for x in a.iter_mut() {
            *x /= n;
        }
    }
    n
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Distance from `p` to the line through `anchor` with unit `direction`.
/// Computed from the residual vector; the `|v|^2 - t^2` form loses half
/// the significant digits for points near the line.
pub fn dist_to_line(p: &Point, anchor: &Point, direction: &[f64]) -> f64 {
    let v = p.sub(anchor);
    let t = dot(&v, direction);
    v.iter()
        .zip(direction)
        .map(|(vi, di)| {
            let r = vi - t * di;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn dist_to_segment(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b.sub(a);
    let len_sq = dot(&ab, &ab);
    if len_sq == 0.0 {
        return p.dist(a);
    }
    let t = (dot(&p.sub(a), &ab) / len_sq).clamp(0.0, 1.0);
    p.dist(&a.lerp(b, t))
}

/// The portion of the parameterized segment `a + s(b-a)`, `s in [0,1]`,
/// inside the open ball `B(center, radius)`, as an `s`-interval.
///
/// `|a + s(b-a) - c|^2 < r^2` is a convex quadratic in `s`, so the
/// sublevel set is a single interval; `None` when the segment misses the
/// ball or touches it in a single point.
pub fn segment_ball_interval(
    a: &Point,
    b: &Point,
    center: &Point,
    radius: f64,
) -> Option<(f64, f64)> {
    let d = b.sub(a);
    let f = a.sub(center);
    let qa = dot(&d, &d);
    if qa == 0.0 {
        return None;
    }
    let qb = dot(&f, &d);
    let qc = dot(&f, &f) - radius * radius;
    let disc = qb * qb - qa * qc;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let lo = ((-qb - sq) / qa).max(0.0);
    let hi = ((-qb + sq) / qa).min(1.0);
    if hi > lo {
        Some((lo, hi))
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// 2D convex hull and exact minimum-width strip
// ---------------------------------------------------------------------------

fn cross2(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Monotone-chain convex hull, counterclockwise, no duplicate endpoint.
/// Collinear inputs collapse to the two extreme points.
pub fn convex_hull_2d(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<&Point> = points.iter().collect();
    pts.sort_by(|p, q| {
        p.0[0]
            .partial_cmp(&q.0[0])
            .unwrap()
            .then(p.0[1].partial_cmp(&q.0[1]).unwrap())
    });
    pts.dedup_by(|a, b| a.0 == b.0);
    let n = pts.len();
    if n <= 2 {
        return pts.into_iter().cloned().collect();
    }
    let mut lower: Vec<&Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2
            && cross2(&lower[lower.len() - 2].0, &lower[lower.len() - 1].0, &p.0) <= 0.0
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<&Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2
            && cross2(&upper[upper.len() - 2].0, &upper[upper.len() - 1].0, &p.0) <= 0.0
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower.into_iter().cloned().collect()
}

/// Minimum-width enclosing strip of a 2D point set.
///
/// The optimal strip has one side flush with a hull edge, so enumerating
/// hull-edge directions is exact. Returns `(anchor, unit direction,
/// half_width)` of the strip midline; degenerate sets give width 0.
pub fn min_width_strip_2d(points: &[Point]) -> (Point, Vec<f64>, f64) {
    debug_assert!(points.iter().all(|p| p.dim() == 2));
    let hull = convex_hull_2d(points);
    match hull.len() {
        0 => return (Point::zeros(2), vec![1.0, 0.0], 0.0),
        1 => return (hull[0].clone(), vec![1.0, 0.0], 0.0),
        2 => {
            let mut dir = hull[1].sub(&hull[0]);
            normalize(&mut dir);
            return (hull[0].clone(), dir, 0.0);
        }
        _ => {}
    }
    let h = hull.len();
    let mut best_width = f64::INFINITY;
    let mut best_edge = 0;
    for i in 0..h {
        let a = &hull[i];
        let b = &hull[(i + 1) % h];
        let mut e = b.sub(a);
        if normalize(&mut e) == 0.0 {
            continue;
        }
        // hull is CCW: all vertices lie on the non-negative side
        let width = hull
            .iter()
            .map(|p| cross2(&a.0, &b.0, &p.0) / a.dist(b))
            .fold(0.0_f64, f64::max);
        if width < best_width {
            best_width = width;
            best_edge = i;
        }
    }
    let a = &hull[best_edge];
    let b = &hull[(best_edge + 1) % h];
    let mut e = b.sub(a);
    normalize(&mut e);
    let n = vec![-e[1], e[0]]; // inward normal for CCW hull
    let anchor = a.add_scaled(&n, best_width / 2.0);
    (anchor, e, best_width / 2.0)
}

// ---------------------------------------------------------------------------
// Minimum enclosing ball (Welzl) in arbitrary dimension
// ---------------------------------------------------------------------------

/// Solve the small dense system `m x = rhs` by Gaussian elimination with
/// partial pivoting. Returns `None` when the pivot falls below `tol`.
fn solve_linear(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>, tol: f64) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[pivot][col].abs() < tol {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = rhs[col];
        for k in col + 1..n {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    Some(x)
}

/// Smallest ball with all of `support` on its boundary: the circumcenter
/// within the affine hull, via the Gram system
/// `(p_i - p_0) . (c - p_0) = |p_i - p_0|^2 / 2`.
fn circumball(support: &[&Point]) -> Option<(Point, f64)> {
    match support.len() {
        0 => None,
        1 => Some((support[0].clone(), 0.0)),
        _ => {
            let p0 = support[0];
            let vs: Vec<Vec<f64>> = support[1..].iter().map(|p| p.sub(p0)).collect();
            let k = vs.len();
            let mut gram = vec![vec![0.0; k]; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                for j in 0..k {
                    gram[i][j] = dot(&vs[i], &vs[j]);
                }
                rhs[i] = dot(&vs[i], &vs[i]) / 2.0;
            }
            let scale_sq = rhs.iter().fold(0.0_f64, |a, &b| a.max(b.abs())).max(1e-300);
            let lambda = solve_linear(gram, rhs, 1e-14 * scale_sq)?;
            let mut center = p0.clone();
            for (l, v) in lambda.iter().zip(&vs) {
                center = center.add_scaled(v, *l);
            }
            let r = support
                .iter()
                .map(|p| p.dist(&center))
                .fold(0.0_f64, f64::max);
            Some((center, r))
        }
    }
}

fn welzl(pts: &[&Point], n: usize, support: &mut Vec<usize>, dim: usize) -> (Point, f64) {
    if n == 0 || support.len() == dim + 1 {
        let mut sup: Vec<&Point> = support.iter().map(|&i| pts[i]).collect();
        loop {
            match circumball(&sup) {
                Some(ball) => return ball,
                // empty or affinely dependent support: the "null ball"
                // contains nothing, or retry without the oldest point
                None if sup.is_empty() => return (Point::zeros(pts[0].dim()), -1.0),
                None => {
                    sup.remove(0);
                }
            }
        }
    }
    let (c, r) = welzl(pts, n - 1, support, dim);
    let p = pts[n - 1];
    if r >= 0.0 && p.dist(&c) <= r * (1.0 + 1e-12) + 1e-300 {
        return (c, r);
    }
    support.push(n - 1);
    let ball = welzl(pts, n - 1, support, dim);
    support.pop();
    ball
}

/// Minimum enclosing ball of a point set (exact up to roundoff).
///
/// Points are visited in a deterministically shuffled order so the
/// expected cost is linear for small fixed dimension.
pub fn min_enclosing_ball(points: &[Point]) -> (Point, f64) {
    if points.is_empty() {
        return (Point::zeros(1), 0.0);
    }
    let dim = points[0].dim();
    let mut order: Vec<&Point> = points.iter().collect();
    // deterministic LCG shuffle; seeding from a global RNG would make
    // results depend on call order
    let mut state = 0x9e3779b97f4a7c15_u64 ^ (points.len() as u64);
    for i in (1..order.len()).rev() {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let j = (state >> 33) as usize % (i + 1);
        order.swap(i, j);
    }
    let n = order.len();
    let mut support = Vec::new();
    let (c, r) = welzl(&order, n, &mut support, dim);
    // guard against rare tolerance misses: enlarge to cover everything
    let r = points.iter().map(|p| p.dist(&c)).fold(r, f64::max);
    (c, r)
}

// ---------------------------------------------------------------------------
// Householder reflections
// ---------------------------------------------------------------------------

/// A chain of Householder reflections `H_w = I - 2 w w^T`, applied left to
/// right. Orthogonal by construction; used to align chord directions with
/// the first coordinate axis.
#[derive(Clone, Debug, Default, Serialize)]
pub struct HouseholderChain {
    pub vectors: Vec<Vec<f64>>,
}

impl HouseholderChain {
    /// A chain mapping unit vector `u` to `e1` (at most one reflection).
    pub fn aligning_to_e1(u: &[f64]) -> Self {
        let dim = u.len();
        let mut e1 = vec![0.0; dim];
        e1[0] = 1.0;
        let mut w: Vec<f64> = u.iter().zip(&e1).map(|(a, b)| a - b).collect();
        if normalize(&mut w) < 1e-12 {
            return HouseholderChain { vectors: vec![] };
        }
        HouseholderChain { vectors: vec![w] }
    }

    pub fn apply(&self, p: &Point) -> Point {
        let mut x = p.0.clone();
        for w in &self.vectors {
            let c = 2.0 * dot(&x, w);
            for (xi, wi) in x.iter_mut().zip(w) {
                *xi -= c * wi;
            }
        }
        Point(x)
    }

    pub fn is_identity(&self) -> bool {
        self.vectors.is_empty()
    }
}

// ---------------------------------------------------------------------------
// 2D segment intersection (simplicity checking)
// ---------------------------------------------------------------------------

/// Do closed segments `[a,b]` and `[c,d]` intersect (2D)? Shared single
/// endpoints between adjacent polyline segments are the caller's business.
pub fn segments_intersect_2d(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let d1 = cross2(&c.0, &d.0, &a.0);
    let d2 = cross2(&c.0, &d.0, &b.0);
    let d3 = cross2(&a.0, &b.0, &c.0);
    let d4 = cross2(&a.0, &b.0, &d.0);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: &Point, q: &Point, r: &Point, det: f64| {
        det == 0.0
            && r.0[0] >= p.0[0].min(q.0[0])
            && r.0[0] <= p.0[0].max(q.0[0])
            && r.0[1] >= p.0[1].min(q.0[1])
            && r.0[1] <= p.0[1].max(q.0[1])
    };
    on(c, d, a, d1) || on(c, d, b, d2) || on(a, b, c, d3) || on(a, b, d, d4)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2(x: f64, y: f64) -> Point {
        Point(vec![x, y])
    }

    #[test]
    fn strip_of_triangle_is_base_width() {
        // widths: 0.3 for the base direction, ~0.514 for either side
        let pts = vec![p2(0.0, 0.0), p2(1.0, 0.0), p2(0.5, 0.3)];
        let (_, dir, half) = min_width_strip_2d(&pts);
        assert!((half - 0.15).abs() < 1e-12);
        assert!(dir[1].abs() < 1e-12);
    }

    #[test]
    fn strip_of_collinear_points_is_flat() {
        let pts = vec![p2(0.0, 0.0), p2(0.5, 0.5), p2(2.0, 2.0)];
        let (anchor, dir, half) = min_width_strip_2d(&pts);
        assert_eq!(half, 0.0);
        for p in &pts {
            let d = dist_to_line(p, &anchor, &dir);
            assert!(d < 1e-12, "p={:?} anchor={:?} dir={:?} d={}", p, anchor, dir, d);
        }
    }

    #[test]
    fn segment_ball_clip_matches_quadratic() {
        let a = p2(0.0, 0.0);
        let b = p2(1.0, 0.0);
        let (lo, hi) = segment_ball_interval(&a, &b, &p2(0.5, 0.0), 0.25).unwrap();
        assert!((lo - 0.25).abs() < 1e-15 && (hi - 0.75).abs() < 1e-15);
        assert!(segment_ball_interval(&a, &b, &p2(5.0, 5.0), 0.1).is_none());
    }

    #[test]
    fn meb_square() {
        let pts = vec![p2(0.0, 0.0), p2(1.0, 0.0), p2(0.0, 1.0), p2(1.0, 1.0)];
        let (c, r) = min_enclosing_ball(&pts);
        assert!((c.0[0] - 0.5).abs() < 1e-9 && (c.0[1] - 0.5).abs() < 1e-9);
        assert!((r - 0.5_f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn meb_3d_regular() {
        let pts = vec![
            Point(vec![1.0, 0.0, 0.0]),
            Point(vec![-1.0, 0.0, 0.0]),
            Point(vec![0.0, 1.0, 0.0]),
            Point(vec![0.0, 0.0, 0.3]),
        ];
        let (c, r) = min_enclosing_ball(&pts);
        assert!((r - 1.0).abs() < 1e-9);
        assert!(norm(&c.0) < 1e-9);
    }

    #[test]
    fn householder_aligns_chord() {
        let mut u = vec![1.0, 1.0, 1.0];
        normalize(&mut u);
        let h = HouseholderChain::aligning_to_e1(&u);
        let img = h.apply(&Point(u.clone()));
        assert!((img.0[0] - 1.0).abs() < 1e-12);
        assert!(img.0[1].abs() < 1e-12 && img.0[2].abs() < 1e-12);
        // orthogonality: lengths preserved
        let v = Point(vec![0.3, -0.7, 0.2]);
        assert!((h.apply(&v).dist(&Point::zeros(3)) - norm(&v.0)).abs() < 1e-12);
    }

    #[test]
    fn segment_intersection_basics() {
        assert!(segments_intersect_2d(
            &p2(0.0, 0.0),
            &p2(1.0, 1.0),
            &p2(0.0, 1.0),
            &p2(1.0, 0.0)
        ));
        assert!(!segments_intersect_2d(
            &p2(0.0, 0.0),
            &p2(1.0, 0.0),
            &p2(0.0, 1.0),
            &p2(1.0, 1.0)
        ));
    }
}
