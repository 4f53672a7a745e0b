//! Voronoi decomposition of the curve over net points at scales `nJ`:
//! cells as parameter-interval unions with exact bisector refinement,
//! flat/non-flat classification of net points, and the per-generation
//! diameter sums whose limit recovers the curve length.

use crate::beta::beta_ball;
use crate::curve::Curve;
use crate::kahan::KahanSum;
use crate::net::{curve_diam, Ball, NeighborIndex, NetHierarchy};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VoronoiError {
    #[error("net level {0} (generation {1} at J = {2}) not built")]
    MissingLevel(i32, i32, i32),
    #[error("need at least 2 generations in range, got {0}")]
    TooFewGenerations(usize),
}

/// The portion of the curve owned by one net point: closest among
/// `X_{nJ}`, ties to the smaller net index.
#[derive(Clone, Debug, Serialize)]
pub struct VoronoiCell {
    pub owner: usize,
    pub owner_param: f64,
    /// merged parameter intervals, endpoints shared with neighbor cells
    pub intervals: Vec<(f64, f64)>,
    pub diam: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GenerationReport {
    pub generation: i32,
    pub scale: i32,
    pub n_cells: usize,
    pub sum_diam: f64,
    pub n_flat: usize,
    pub n_nonflat: usize,
    /// beta^2 diam summed over family balls at scales <= this generation's
    pub beta_sum_cumulative: f64,
    /// running smallest C with sum_diam <= diam + C * beta_sum, over the
    /// generations so far
    pub c_fit: Option<f64>,
}

/// Exact crossing of the perpendicular bisector of `(a, b)` along the
/// curve between parameters `lo` and `hi` (winner switches from `a` to
/// `b`). Linear per segment; falls back to bisection on the winner
/// function when the linear solve misses (a third point interfering).
fn bisector_crossing(
    curve: &Curve,
    lo: f64,
    hi: f64,
    a: &crate::geom::Point,
    b: &crate::geom::Point,
    winner: &dyn Fn(f64) -> usize,
    wlo: usize,
) -> f64 {
    // breakpoints: segment boundaries inside (lo, hi)
    let mut cuts = vec![lo];
    for (_, t) in curve.vertex_params_in(lo, hi) {
        cuts.push(t);
    }
    cuts.push(hi);
    let h = |p: &crate::geom::Point| p.dist_sq(a) - p.dist_sq(b);
    for w in cuts.windows(2) {
        let (p0, p1) = (curve.point_at_clamped(w[0]), curve.point_at_clamped(w[1]));
        let (h0, h1) = (h(&p0), h(&p1));
        if h0 == h1 {
            continue;
        }
        let s = -h0 / (h1 - h0); // h is linear in position, position linear in t
        if (0.0..=1.0).contains(&s) {
            return w[0] + s * (w[1] - w[0]);
        }
    }
    // bisection fallback
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if winner(mid) == wlo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Voronoi cells of generation `n` (net scale `nJ`). Cells are computed on
/// the dense sample with exact bisector refinement between consecutive
/// winners; their intervals tile `[0, l]`.
pub fn voronoi_cells(
    curve: &Curve,
    nets: &NetHierarchy,
    generation: i32,
    j: i32,
) -> Result<Vec<VoronoiCell>, VoronoiError> {
    let scale = generation * j;
    let level = nets
        .level(scale)
        .ok_or(VoronoiError::MissingLevel(scale, generation, j))?;
    let eps = (2.0_f64).powi(-scale);
    let index = NeighborIndex::build(level, eps, curve.dim());
    let winner = |t: f64| -> usize {
        let p = curve.point_at_clamped(t);
        // covering guarantees a net point within eps; widen twice if
        // roundoff put the sample just outside
        index
            .nearest_within(&p, eps, level)
            .or_else(|| index.nearest_within(&p, 2.0 * eps, level))
            .map(|(i, _)| i)
            .unwrap_or_else(|| {
                level
                    .iter()
                    .enumerate()
                    .min_by(|(_, x), (_, y)| {
                        x.point.dist(&p).partial_cmp(&y.point.dist(&p)).unwrap()
                    })
                    .map(|(i, _)| i)
                    .unwrap()
            })
    };

    let params = curve.dense_params(nets.sample_spacing);
    let mut boundaries: Vec<(f64, usize)> = Vec::new(); // (start param, owner)
    let mut prev_owner = winner(params[0]);
    boundaries.push((0.0, prev_owner));
    for w in params.windows(2) {
        let owner = winner(w[1]);
        if owner != prev_owner {
            let t = bisector_crossing(
                curve,
                w[0],
                w[1],
                &level[prev_owner].point,
                &level[owner].point,
                &winner,
                prev_owner,
            );
            boundaries.push((t, owner));
            prev_owner = owner;
        }
    }

    let mut per_owner: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, &(start, owner)) in boundaries.iter().enumerate() {
        let end = boundaries
            .get(i + 1)
            .map(|&(t, _)| t)
            .unwrap_or(curve.total_len());
        per_owner.entry(owner).or_default().push((start, end));
    }

    Ok(per_owner
        .into_iter()
        .map(|(owner, intervals)| {
            let mut pts = Vec::new();
            for &(a, b) in &intervals {
                pts.push(curve.point_at_clamped(a));
                for (vi, _) in curve.vertex_params_in(a, b) {
                    pts.push(curve.vertices()[vi].clone());
                }
                pts.push(curve.point_at_clamped(b));
            }
            let mut diam = 0.0_f64;
            for x in 0..pts.len() {
                for y in x + 1..pts.len() {
                    diam = diam.max(pts[x].dist(&pts[y]));
                }
            }
            VoronoiCell {
                owner,
                owner_param: level[owner].t,
                intervals,
                diam,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Flatness {
    Flat,
    NonFlat,
}

/// A net point of `X_{nJ}` is flat when `beta(B(x, 10 * 2^-nJ)) < eps`.
/// Returns the per-point classification; `eps < 2^-2J` is the intended
/// regime (a warning flag is returned otherwise, not an error).
pub fn flat_classification(
    curve: &Curve,
    nets: &NetHierarchy,
    generation: i32,
    j: i32,
    eps: f64,
    fit_tol: f64,
) -> Result<(Vec<Flatness>, bool), VoronoiError> {
    let scale = generation * j;
    let level = nets
        .level(scale)
        .ok_or(VoronoiError::MissingLevel(scale, generation, j))?;
    let radius = 10.0 * (2.0_f64).powi(-scale);
    let out = level
        .iter()
        .enumerate()
        .map(|(k, np)| {
            let ball = Ball {
                scale,
                index: k,
                center: np.point.clone(),
                center_param: np.t,
                radius,
            };
            let beta = beta_ball(curve, &ball, fit_tol)
                .map(|b| b.value)
                .unwrap_or(0.0);
            if beta < eps {
                Flatness::Flat
            } else {
                Flatness::NonFlat
            }
        })
        .collect();
    let eps_in_regime = eps < (2.0_f64).powi(-2 * j);
    Ok((out, !eps_in_regime))
}

/// Per-generation diameter sums with the running fitted constant in
/// `sum_diam <= diam(Gamma) + C * (beta-sum up to scale nJ)`.
///
/// `beta_sum_per_scale` maps each ball scale to its `beta^2 diam` total.
pub fn generation_sums(
    curve: &Curve,
    nets: &NetHierarchy,
    j: i32,
    generations: &[i32],
    eps_flat: f64,
    fit_tol: f64,
    beta_sum_per_scale: &BTreeMap<i32, f64>,
) -> Result<Vec<GenerationReport>, VoronoiError> {
    if generations.len() < 2 {
        return Err(VoronoiError::TooFewGenerations(generations.len()));
    }
    let diam = curve_diam(curve);
    let mut c_fit: Option<f64> = None;
    let mut out = Vec::new();
    for &g in generations {
        let cells = voronoi_cells(curve, nets, g, j)?;
        let mut sum = KahanSum::new();
        for cell in &cells {
            sum.add(cell.diam);
        }
        let sum_diam = sum.value();
        let (flats, _) = flat_classification(curve, nets, g, j, eps_flat, fit_tol)?;
        let n_flat = flats.iter().filter(|f| **f == Flatness::Flat).count();
        let beta_cum = beta_sum_per_scale
            .iter()
            .filter(|(s, _)| **s <= g * j)
            .map(|(_, v)| *v)
            .sum::<f64>();
        if sum_diam > diam && beta_cum > 0.0 {
            let need = (sum_diam - diam) / beta_cum;
            c_fit = Some(c_fit.map_or(need, |c: f64| c.max(need)));
        } else if c_fit.is_none() {
            c_fit = Some(0.0);
        }
        out.push(GenerationReport {
            generation: g,
            scale: g * j,
            n_cells: cells.len(),
            sum_diam,
            n_flat,
            n_nonflat: flats.len() - n_flat,
            beta_sum_cumulative: beta_cum,
            c_fit,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::net::build_nets;

    fn unit_segment() -> Curve {
        Curve::new(vec![Point(vec![0.0, 0.0]), Point(vec![1.0, 0.0])]).unwrap()
    }

    #[test]
    fn two_point_net_splits_at_bisector() {
        let c = unit_segment();
        let nets = build_nets(&c, 1, 3, 0.01).unwrap();
        // X_1 = {0, 0.51}: bisector at 0.255
        let cells = voronoi_cells(&c, &nets, 1, 1).unwrap();
        assert_eq!(cells.len(), 2);
        assert!((cells[0].intervals[0].1 - 0.255).abs() < 1e-9);
        assert!((cells[1].intervals[0].0 - 0.255).abs() < 1e-9);
        assert!((cells[0].diam - 0.255).abs() < 1e-9);
        assert!((cells[1].diam - 0.745).abs() < 1e-9);
    }

    #[test]
    fn single_net_point_owns_everything() {
        let c = unit_segment();
        let nets = build_nets(&c, -1, 3, 0.01).unwrap();
        let cells = voronoi_cells(&c, &nets, -1, 1).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].intervals, vec![(0.0, 1.0)]);
    }

    #[test]
    fn cells_tile_the_parameter_domain() {
        let c = Curve::new(vec![
            Point(vec![0.0, 0.0]),
            Point(vec![0.4, 0.3]),
            Point(vec![0.9, -0.1]),
            Point(vec![1.5, 0.2]),
        ])
        .unwrap();
        let nets = build_nets(&c, 0, 6, (2.0_f64).powi(-6) / 8.0).unwrap();
        for g in [1, 2] {
            let cells = voronoi_cells(&c, &nets, g, 2).unwrap();
            let mut covered: Vec<(f64, f64)> = cells
                .iter()
                .flat_map(|cell| cell.intervals.iter().copied())
                .collect();
            covered.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            assert_eq!(covered[0].0, 0.0);
            for w in covered.windows(2) {
                assert!((w[0].1 - w[1].0).abs() < 1e-12, "gap {:?} {:?}", w[0], w[1]);
            }
            assert!((covered.last().unwrap().1 - c.total_len()).abs() < 1e-12);
        }
    }

    #[test]
    fn straight_segment_all_flat_and_sums_exact() {
        let c = unit_segment();
        let nets = build_nets(&c, 0, 6, (2.0_f64).powi(-6) / 8.0).unwrap();
        let (flats, _) = flat_classification(&c, &nets, 1, 2, 1e-6, 1e-9).unwrap();
        assert!(flats.iter().all(|f| *f == Flatness::Flat));
        // eps = 0 makes everything non-flat (strict <)
        let (nf, _) = flat_classification(&c, &nets, 1, 2, 0.0, 1e-9).unwrap();
        assert!(nf.iter().all(|f| *f == Flatness::NonFlat));

        let beta_scales = BTreeMap::new();
        let reports =
            generation_sums(&c, &nets, 2, &[1, 2, 3], 1e-6, 1e-9, &beta_scales).unwrap();
        for r in &reports {
            assert!((r.sum_diam - 1.0).abs() < 1e-9, "sum {}", r.sum_diam);
            assert_eq!(r.c_fit, Some(0.0));
        }
        assert!(matches!(
            generation_sums(&c, &nets, 2, &[1], 1e-6, 1e-9, &beta_scales),
            Err(VoronoiError::TooFewGenerations(1))
        ));
    }

    #[test]
    fn cell_diameter_bounds_hold() {
        let c = Curve::new(vec![
            Point(vec![0.0, 0.0]),
            Point(vec![0.5, 0.3]),
            Point(vec![1.0, 0.0]),
        ])
        .unwrap();
        let nets = build_nets(&c, 0, 8, (2.0_f64).powi(-8) / 8.0).unwrap();
        for g in [1, 2] {
            let j = 3;
            let scale = g * j;
            let cells = voronoi_cells(&c, &nets, g, j).unwrap();
            let eps = (2.0_f64).powi(-scale);
            // nets cover the dense sample, so the curve can bulge past the
            // clean bound by at most the sample spacing
            let slack = nets.sample_spacing;
            for cell in &cells {
                assert!(cell.diam >= eps / 2.0 * (1.0 - 1e-9), "low {}", cell.diam);
                assert!(cell.diam <= 2.0 * eps + slack + 1e-12, "high {}", cell.diam);
            }
        }
    }

    #[test]
    fn generation_sums_approach_length() {
        let c = Curve::new(vec![
            Point(vec![0.0, 0.0]),
            Point(vec![0.5, 0.3]),
            Point(vec![1.0, 0.0]),
        ])
        .unwrap();
        let nets = build_nets(&c, 0, 9, (2.0_f64).powi(-9) / 8.0).unwrap();
        let beta_scales = BTreeMap::new();
        let reports =
            generation_sums(&c, &nets, 3, &[1, 2, 3], 1e-3, 1e-9, &beta_scales).unwrap();
        for w in reports.windows(2) {
            assert!(w[1].sum_diam >= w[0].sum_diam - 1e-6);
        }
        let last = reports.last().unwrap();
        assert!(last.sum_diam <= c.total_len() + 1e-9);
        assert!((last.sum_diam - c.total_len()).abs() / c.total_len() < 0.01);
    }
}
