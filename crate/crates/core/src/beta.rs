//! Jones beta numbers for balls and subarcs.
//!
//! All suprema run over finite clip sets (vertices inside the ball plus
//! exact sphere-clip endpoints), which is exact for polylines: distance to
//! a line is convex along a segment, so extrema occur at those points.
//!
//! In the plane the min-max line is exact (minimum-width strip via the
//! convex hull). In higher dimension the fit is a multi-start direction
//! search where each direction's optimal offset is the minimum enclosing
//! ball of the projections; the gap to a sampled-direction heuristic is
//! reported alongside the value.

use crate::curve::{subarc_diam, Curve, Subarc};
use crate::geom::{
    dist_to_line, dist_to_segment, dot, min_enclosing_ball, min_width_strip_2d, normalize, Point,
};
use crate::net::Ball;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BetaError {
    #[error("ball at scale {0} index {1} does not intersect the curve")]
    EmptyIntersection(i32, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Exact2d,
    Optimized,
    SampledOracle,
}

/// An approximating line together with the realized sup distance.
#[derive(Clone, Debug, Serialize)]
pub struct LineFit {
    pub anchor: Point,
    pub direction: Vec<f64>,
    pub max_dist: f64,
    pub method: FitMethod,
    /// spread between the best sampled direction and the refined optimum;
    /// 0 for the exact planar method
    pub certified_gap: f64,
}

/// `beta = 2 max_dist / diam = max_dist / radius` for the reference set.
#[derive(Clone, Debug, Serialize)]
pub struct BetaValue {
    pub value: f64,
    pub fit: LineFit,
    /// diameter used in the normalization
    pub norm_diam: f64,
    /// distinct clip points; 0 flags an empty restriction
    pub point_count: usize,
}

fn dedup_points(points: &[Point], tol: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(points.len());
    'outer: for p in points {
        for q in &out {
            if p.dist(q) <= tol {
                continue 'outer;
            }
        }
        out.push(p.clone());
    }
    out
}

fn line_through(points: &[Point]) -> (Point, Vec<f64>) {
    match points.len() {
        0 => (Point::zeros(1), vec![1.0]),
        1 => {
            let mut d = vec![0.0; points[0].dim()];
            d[0] = 1.0;
            (points[0].clone(), d)
        }
        _ => {
            let mut d = points[1].sub(&points[0]);
            if normalize(&mut d) == 0.0 {
                d = vec![0.0; points[0].dim()];
                d[0] = 1.0;
            }
            (points[0].clone(), d)
        }
    }
}

/// Sup of distances from `points` to the best line with direction `u`:
/// the minimum enclosing ball radius of the projections onto `u`-perp.
fn width_along(points: &[Point], u: &[f64]) -> (f64, Point) {
    let projected: Vec<Point> = points
        .iter()
        .map(|p| {
            let t = dot(&p.0, u);
            Point(p.0.iter().zip(u).map(|(c, ui)| c - t * ui).collect())
        })
        .collect();
    let (center, radius) = min_enclosing_ball(&projected);
    (radius, center)
}

fn principal_direction(points: &[Point]) -> Vec<f64> {
    let dim = points[0].dim();
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, c) in mean.iter_mut().zip(&p.0) {
            *m += c / n;
        }
    }
    // power iteration on the covariance
    let mut v = vec![1.0; dim];
    normalize(&mut v);
    for _ in 0..60 {
        let mut next = vec![0.0; dim];
        for p in points {
            let d: Vec<f64> = p.0.iter().zip(&mean).map(|(c, m)| c - m).collect();
            let s = dot(&d, &v);
            for (nx, di) in next.iter_mut().zip(&d) {
                *nx += s * di;
            }
        }
        if normalize(&mut next) < 1e-300 {
            break;
        }
        v = next;
    }
    v
}

fn diameter_direction(points: &[Point]) -> Vec<f64> {
    let mut best = (0.0, 0, 0);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = points[i].dist_sq(&points[j]);
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    let mut d = points[best.2].sub(&points[best.1]);
    if normalize(&mut d) == 0.0 {
        d[0] = 1.0;
    }
    d
}

fn sample_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    if dim == 3 {
        // Fibonacci hemisphere: directions and their negations fit the
        // same line, so half-coverage suffices
        let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
        for k in 0..count {
            let z = (k as f64 + 0.5) / count as f64; // (0, 1)
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (k as f64 / golden).fract();
            out.push(vec![r * phi.cos(), r * phi.sin(), z]);
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..count {
            let mut v: Vec<f64> = (0..dim)
                .map(|_| {
                    // Box-Muller normal deviate
                    let u1: f64 = rng.gen_range(1e-12..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect();
            if normalize(&mut v) == 0.0 {
                v[0] = 1.0;
            }
            out.push(v);
        }
    }
    out
}

/// Pattern search on the direction sphere. Accept-only-improvement keeps
/// the result no worse than its start; a relative acceptance threshold and
/// a pass cap per step size bound the work.
fn refine_direction(points: &[Point], start: &[f64], h_min: f64) -> (Vec<f64>, f64, Point) {
    let dim = start.len();
    let mut u = start.to_vec();
    let (mut val, mut center) = width_along(points, &u);
    let mut h = 0.25;
    while h > h_min {
        for _pass in 0..32 {
            let mut improved = false;
            for axis in 0..dim {
                for sign in [-1.0, 1.0] {
                    let mut cand = u.clone();
                    cand[axis] += sign * h;
                    if normalize(&mut cand) == 0.0 {
                        continue;
                    }
                    let (v, c) = width_along(points, &cand);
                    if v < val * (1.0 - 1e-12) {
                        val = v;
                        center = c;
                        u = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        h *= 0.5;
    }
    (u, val, center)
}

/// Min-max line fit over a deduplicated point set.
pub fn min_max_line(points: &[Point], tol: f64) -> LineFit {
    let n = points.len();
    if n <= 2 {
        let (anchor, direction) = line_through(points);
        return LineFit {
            anchor,
            direction,
            max_dist: 0.0,
            method: FitMethod::Exact2d,
            certified_gap: 0.0,
        };
    }
    let dim = points[0].dim();
    if dim == 2 {
        let (anchor, direction, half_width) = min_width_strip_2d(points);
        return LineFit {
            anchor,
            direction,
            max_dist: half_width,
            method: FitMethod::Exact2d,
            certified_gap: 0.0,
        };
    }

    let mut starts = vec![diameter_direction(points), principal_direction(points)];
    starts.extend(sample_directions(dim, 24, 0x5eed_0001));
    let mut best_sampled = f64::INFINITY;
    let mut ranked: Vec<(f64, Vec<f64>)> = starts
        .into_iter()
        .map(|u| {
            let (v, _) = width_along(points, &u);
            best_sampled = best_sampled.min(v);
            (v, u)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let h_min = tol.max(1e-7);
    let mut best: Option<(Vec<f64>, f64, Point)> = None;
    for (_, u) in ranked.iter().take(3) {
        let (ur, vr, cr) = refine_direction(points, u, h_min);
        if best.as_ref().map_or(true, |(_, bv, _)| vr < *bv) {
            best = Some((ur, vr, cr));
        }
    }
    let (direction, max_dist, anchor) = best.unwrap();
    LineFit {
        anchor,
        direction,
        max_dist,
        method: FitMethod::Optimized,
        certified_gap: (best_sampled - max_dist).max(0.0),
    }
}

/// Sampled-direction evaluation: min over `count` quasi-uniform directions
/// of the optimal offset for that direction. An upper bound on the true
/// infimum; serves as the independent oracle in d >= 3.
pub fn min_max_line_sampled(points: &[Point], count: usize, seed: u64) -> LineFit {
    let pts = dedup_points(points, 0.0);
    if pts.len() <= 2 {
        let (anchor, direction) = line_through(&pts);
        return LineFit {
            anchor,
            direction,
            max_dist: 0.0,
            method: FitMethod::SampledOracle,
            certified_gap: 0.0,
        };
    }
    let dim = pts[0].dim();
    let mut best = (f64::INFINITY, vec![0.0; dim], Point::zeros(dim));
    let mut dirs = sample_directions(dim, count, seed);
    dirs.push(diameter_direction(&pts));
    for u in dirs {
        let (v, c) = width_along(&pts, &u);
        if v < best.0 {
            best = (v, u, c);
        }
    }
    LineFit {
        anchor: best.2,
        direction: best.1,
        max_dist: best.0,
        method: FitMethod::SampledOracle,
        certified_gap: 0.0,
    }
}

/// Exact 2D width oracle: enumerate every point-pair direction (a superset
/// of the hull edges, where the optimum lives) plus `n_angles` uniform
/// angles. Test-side independent route for the strip computation.
pub fn width_oracle_2d(points: &[Point], n_angles: usize) -> f64 {
    let mut best = f64::INFINITY;
    let mut eval = |dir: &[f64]| {
        let n = [-dir[1], dir[0]];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            let s = dot(&p.0, &n);
            lo = lo.min(s);
            hi = hi.max(s);
        }
        best = best.min((hi - lo) / 2.0);
    };
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let mut d = points[j].sub(&points[i]);
            if normalize(&mut d) > 0.0 {
                eval(&d);
            }
        }
    }
    for k in 0..n_angles {
        let th = std::f64::consts::PI * k as f64 / n_angles as f64;
        eval(&[th.cos(), th.sin()]);
    }
    best
}

/// All curve vertices inside `Q` plus the sphere-clip endpoints of every
/// component of `Lambda(Q)`.
pub fn clip_points(curve: &Curve, ball: &Ball) -> Vec<Point> {
    arcs_clip_points(curve, &curve.maximal_subarcs(&ball.center, ball.radius))
}

pub fn arcs_clip_points(curve: &Curve, arcs: &[Subarc]) -> Vec<Point> {
    let mut pts = Vec::new();
    for arc in arcs {
        pts.extend(curve.subarc_points(arc));
    }
    pts
}

fn beta_from_points(points: &[Point], norm_diam: f64, tol: f64) -> BetaValue {
    let dedup_tol = 1e-12 * norm_diam.max(1.0);
    let pts = dedup_points(points, dedup_tol);
    if pts.len() <= 2 {
        let (anchor, direction) = line_through(&pts);
        return BetaValue {
            value: 0.0,
            fit: LineFit {
                anchor,
                direction,
                max_dist: 0.0,
                method: FitMethod::Exact2d,
                certified_gap: 0.0,
            },
            norm_diam,
            point_count: pts.len(),
        };
    }
    let fit = min_max_line(&pts, tol);
    BetaValue {
        value: 2.0 * fit.max_dist / norm_diam,
        point_count: pts.len(),
        fit,
        norm_diam,
    }
}

/// `beta(Q)`: min-max line fit to the clip set of `Gamma ∩ Q`, normalized
/// by `2/diam(Q)`.
pub fn beta_ball(curve: &Curve, ball: &Ball, tol: f64) -> Result<BetaValue, BetaError> {
    let arcs = curve.maximal_subarcs(&ball.center, ball.radius);
    if arcs.is_empty() {
        return Err(BetaError::EmptyIntersection(ball.scale, ball.index));
    }
    Ok(beta_from_points(
        &arcs_clip_points(curve, &arcs),
        ball.diam(),
        tol,
    ))
}

/// Same fit with the sup restricted to the clip sets of the given arcs;
/// the normalization diameter is the caller's (ball or core diameter).
/// An empty restriction gives 0 with `point_count = 0` as the flag.
pub fn beta_restricted(curve: &Curve, arcs: &[Subarc], norm_diam: f64, tol: f64) -> BetaValue {
    beta_from_points(&arcs_clip_points(curve, arcs), norm_diam, tol)
}

/// `beta-tilde` of a subarc: sup distance to its own chord segment over
/// its diameter.
pub fn beta_tilde(curve: &Curve, arc: &Subarc) -> f64 {
    let pts = curve.subarc_points(arc);
    let a = &pts[0];
    let b = pts.last().unwrap();
    let diam = subarc_diam(curve, arc);
    if diam <= 0.0 {
        return 0.0;
    }
    let maxd = pts
        .iter()
        .map(|p| dist_to_segment(p, a, b))
        .fold(0.0_f64, f64::max);
    maxd / diam
}

/// Partition `arcs` into the almost-flat set `S_Q` and its complement by
/// the threshold `beta_tilde(tau) <= eps2 * beta(Q)`; equality goes to the
/// flat side, matching the defining inequality.
pub fn almost_flat_split(
    curve: &Curve,
    arcs: &[Subarc],
    eps2: f64,
    beta_q: f64,
) -> (Vec<Subarc>, Vec<Subarc>) {
    let threshold = eps2 * beta_q;
    let mut flat = Vec::new();
    let mut rest = Vec::new();
    for arc in arcs {
        if beta_tilde(curve, arc) <= threshold {
            flat.push(*arc);
        } else {
            rest.push(*arc);
        }
    }
    (flat, rest)
}

/// Convenience wrapper computing `Lambda(Q)` internally.
pub fn almost_flat_set(
    curve: &Curve,
    ball: &Ball,
    eps2: f64,
    beta: &BetaValue,
) -> (Vec<Subarc>, Vec<Subarc>) {
    let arcs = curve.maximal_subarcs(&ball.center, ball.radius);
    almost_flat_split(curve, &arcs, eps2, beta.value)
}

/// Distance from a point to the fitted line.
pub fn dist_to_fit(p: &Point, fit: &LineFit) -> f64 {
    dist_to_line(p, &fit.anchor, &fit.direction)
}

/// Deterministic per-ball RNG stream id, used by anything randomized so
/// results are independent of evaluation order.
pub fn ball_seed(ball: &Ball) -> u64 {
    (ball.scale as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (ball.index as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::Curve;

    fn vshape() -> Curve {
        Curve::new(vec![
            Point(vec![0.0, 0.0]),
            Point(vec![0.5, 0.3]),
            Point(vec![1.0, 0.0]),
        ])
        .unwrap()
    }

    fn ball_at(center: Vec<f64>, radius: f64) -> Ball {
        Ball {
            scale: 0,
            index: 0,
            center: Point(center),
            center_param: 0.0,
            radius,
        }
    }

    #[test]
    fn collinear_clip_set_is_flat() {
        let seg = Curve::new(vec![Point(vec![0.0, 0.0]), Point(vec![1.0, 0.0])]).unwrap();
        let b = ball_at(vec![0.5, 0.0], 0.4);
        let beta = beta_ball(&seg, &b, 1e-9).unwrap();
        assert_eq!(beta.value, 0.0);
    }

    #[test]
    fn triangle_clip_set_beta() {
        // {(0,0),(1,0),(0.5,0.3)} in a radius-1 ball: optimal strip is
        // parallel to the base, half-width 0.15, so beta = 0.15
        let v = vshape();
        let b = ball_at(vec![0.5, 0.0], 1.0);
        let beta = beta_ball(&v, &b, 1e-9).unwrap();
        assert!((beta.value - 0.15).abs() < 1e-12);
        assert!((beta.fit.max_dist - 0.15).abs() < 1e-12);
        assert_eq!(beta.fit.method, FitMethod::Exact2d);
    }

    #[test]
    fn empty_ball_errors() {
        let v = vshape();
        let b = ball_at(vec![9.0, 9.0], 0.5);
        assert!(beta_ball(&v, &b, 1e-9).is_err());
    }

    #[test]
    fn clip_points_apex_ball() {
        let v = vshape();
        let b = ball_at(vec![0.5, 0.3], 0.1);
        let pts = clip_points(&v, &b);
        // apex vertex plus the two sphere clips
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().any(|p| p.dist(&Point(vec![0.5, 0.3])) < 1e-12));
    }

    #[test]
    fn beta_tilde_examples() {
        let v = vshape();
        let full = Subarc {
            a: 0.0,
            b: v.total_len(),
        };
        // apex height 0.3 over diameter 1
        assert!((beta_tilde(&v, &full) - 0.3).abs() < 1e-12);
        let seg = Curve::new(vec![Point(vec![0.0, 0.0]), Point(vec![2.0, 0.0])]).unwrap();
        assert_eq!(
            beta_tilde(
                &seg,
                &Subarc { a: 0.2, b: 1.7 }
            ),
            0.0
        );
    }

    #[test]
    fn beta_tilde_semicircle_half() {
        let n = 512;
        let pts: Vec<Point> = (0..=n)
            .map(|k| {
                let th = std::f64::consts::PI * k as f64 / n as f64;
                Point(vec![th.cos(), th.sin()])
            })
            .collect();
        let c = Curve::new(pts).unwrap();
        let full = Subarc {
            a: 0.0,
            b: c.total_len(),
        };
        assert!((beta_tilde(&c, &full) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn almost_flat_threshold_zero() {
        let seg = Curve::new(vec![Point(vec![0.0, 0.0]), Point(vec![1.0, 0.0])]).unwrap();
        let b = ball_at(vec![0.5, 0.0], 0.3);
        let beta = beta_ball(&seg, &b, 1e-9).unwrap();
        let (flat, rest) = almost_flat_set(&seg, &b, 0.01, &beta);
        assert_eq!(flat.len(), 1);
        assert!(rest.is_empty());
    }

    #[test]
    fn restricted_two_parallel_chords() {
        // chords at y = +-s in a radius-r ball: best line is the midline,
        // beta = s / r
        let s = 0.1;
        let r = 1.0;
        let c = Curve::new(vec![
            Point(vec![-2.0, s]),
            Point(vec![2.0, s]),
            Point(vec![2.2, 3.0]),
            Point(vec![-2.0, 3.2]),
            Point(vec![-2.2, -s]),
            Point(vec![2.0, -s]),
        ])
        .unwrap();
        let ball = ball_at(vec![0.0, 0.0], r);
        let arcs = c.maximal_subarcs(&ball.center, ball.radius);
        assert_eq!(arcs.len(), 2);
        let beta = beta_restricted(&c, &arcs, ball.diam(), 1e-9);
        assert!((beta.value - s / r).abs() < 1e-9, "beta={}", beta.value);
        let empty = beta_restricted(&c, &[], ball.diam(), 1e-9);
        assert_eq!(empty.value, 0.0);
        assert_eq!(empty.point_count, 0);
    }

    #[test]
    fn exact2d_matches_pair_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..60 {
            let n = rng.gen_range(3..=64);
            let pts: Vec<Point> = (0..n)
                .map(|_| Point(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]))
                .collect();
            let fit = min_max_line(&pts, 1e-9);
            let oracle = width_oracle_2d(&pts, 0);
            assert!(
                (fit.max_dist - oracle).abs() <= 1e-9 * oracle.max(1.0),
                "strip {} vs oracle {}",
                fit.max_dist,
                oracle
            );
        }
    }

    #[test]
    fn optimizer_3d_beats_sampled_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..40 {
            let n = rng.gen_range(4..=24);
            let pts: Vec<Point> = (0..n)
                .map(|_| {
                    Point(vec![
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-0.2..0.2),
                        rng.gen_range(-0.2..0.2),
                    ])
                })
                .collect();
            let fit = min_max_line(&pts, 1e-9);
            let oracle = min_max_line_sampled(&pts, 2000, 99);
            assert!(
                fit.max_dist <= oracle.max_dist * (1.0 + 1e-9),
                "case {case}: optimizer {} above oracle {}",
                fit.max_dist,
                oracle.max_dist
            );
            assert!(fit.certified_gap >= 0.0);
        }
    }

    #[test]
    fn beta_invariant_under_rigid_motion_and_scaling() {
        let v = vshape();
        let b = ball_at(vec![0.5, 0.1], 0.8);
        let base = beta_ball(&v, &b, 1e-9).unwrap().value;
        // rotate by 0.7 rad, translate, scale by 3
        let (the_cos, the_sin) = (0.7_f64.cos(), 0.7_f64.sin());
        let map = |p: &Point| {
            Point(vec![
                3.0 * (the_cos * p.0[0] - the_sin * p.0[1]) + 5.0,
                3.0 * (the_sin * p.0[0] + the_cos * p.0[1]) - 2.0,
            ])
        };
        let moved = Curve::new(v.vertices().iter().map(map).collect()).unwrap();
        let mb = Ball {
            center: map(&b.center),
            radius: 3.0 * b.radius,
            ..b.clone()
        };
        let got = beta_ball(&moved, &mb, 1e-9).unwrap().value;
        assert!((got - base).abs() < 1e-9);
    }
}
