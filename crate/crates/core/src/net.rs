//! Nested `2^-n` nets on a curve and the multiresolution ball family built
//! over them.
//!
//! Nets are grown greedily in parameter order from a dense sample, which
//! makes them maximal (hence covering) and bit-for-bit reproducible. Each
//! deeper level is seeded with the previous one so `X_n` is a subset of
//! `X_{n+1}` by construction.

use crate::curve::Curve;
use crate::geom::Point;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("n0 = {0} must not exceed n_max = {1}")]
    BadScaleRange(i32, i32),
    #[error("sample spacing {0} too coarse for finest scale {1} (need <= {2})")]
    SpacingTooCoarse(f64, f64, f64),
    #[error("covering violated at level {0}: sample at t={1} is {2} from the net (> {3})")]
    CoveringViolation(i32, f64, f64, f64),
    #[error("inflation factor A must exceed 1, got {0}")]
    BadInflation(f64),
}

/// A net point: its curve parameter and its location.
#[derive(Clone, Debug, Serialize)]
pub struct NetPoint {
    pub t: f64,
    pub point: Point,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetHierarchy {
    pub n0: i32,
    pub n_max: i32,
    /// `levels[k]` is the `2^{-(n0+k)}`-net, in insertion (parameter) order
    pub levels: Vec<Vec<NetPoint>>,
    pub sample_spacing: f64,
}

impl NetHierarchy {
    pub fn level(&self, n: i32) -> Option<&[NetPoint]> {
        if n < self.n0 || n > self.n_max {
            return None;
        }
        Some(&self.levels[(n - self.n0) as usize])
    }

    pub fn scales(&self) -> impl Iterator<Item = i32> {
        self.n0..=self.n_max
    }

    /// per-level JSON dump `{"n": .., "points": [[t, coords..], ..]}`
    pub fn dump_level_json(&self, n: i32) -> Option<String> {
        let pts = self.level(n)?;
        let rows: Vec<Vec<f64>> = pts
            .iter()
            .map(|np| {
                let mut row = vec![np.t];
                row.extend_from_slice(&np.point.0);
                row
            })
            .collect();
        Some(serde_json::to_string(&serde_json::json!({"n": n, "points": rows})).unwrap())
    }
}

/// Uniform hash grid for exact radius queries over net points; cell size
/// equals the query radius so only the 3^d neighborhood needs scanning.
/// Falls back to a linear scan above 4 dimensions.
pub(crate) struct NeighborIndex {
    cell: f64,
    dim: usize,
    grid: HashMap<Vec<i64>, Vec<usize>>,
    brute: bool,
}

impl NeighborIndex {
    pub(crate) fn new(cell: f64, dim: usize) -> Self {
        NeighborIndex {
            cell,
            dim,
            grid: HashMap::new(),
            brute: dim > 4,
        }
    }

    pub(crate) fn build(points: &[NetPoint], cell: f64, dim: usize) -> Self {
        let mut idx = Self::new(cell, dim);
        for (i, np) in points.iter().enumerate() {
            idx.insert(&np.point, i);
        }
        idx
    }

    fn key(&self, p: &Point) -> Vec<i64> {
        p.0.iter().map(|c| (c / self.cell).floor() as i64).collect()
    }

    fn insert(&mut self, p: &Point, idx: usize) {
        if self.brute {
            return;
        }
        let k = self.key(p);
        self.grid.entry(k).or_default().push(idx);
    }

    /// Nearest indexed point within `radius` of `p`; exact ties go to the
    /// smaller index.
    pub(crate) fn nearest_within(
        &self,
        p: &Point,
        radius: f64,
        points: &[NetPoint],
    ) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut consider = |i: usize, d: f64| {
            if d <= radius {
                let better = match best {
                    None => true,
                    Some((bi, bd)) => d < bd || (d == bd && i < bi),
                };
                if better {
                    best = Some((i, d));
                }
            }
        };
        if self.brute {
            for (i, np) in points.iter().enumerate() {
                consider(i, np.point.dist(p));
            }
            return best;
        }
        let key = self.key(p);
        let mut offsets = vec![-1i64; self.dim];
        'cells: loop {
            let cell_key: Vec<i64> = key.iter().zip(&offsets).map(|(k, o)| k + o).collect();
            if let Some(ids) = self.grid.get(&cell_key) {
                for &i in ids {
                    consider(i, points[i].point.dist(p));
                }
            }
            // odometer over {-1,0,1}^dim
            let mut axis = 0;
            loop {
                if axis == self.dim {
                    break 'cells;
                }
                offsets[axis] += 1;
                if offsets[axis] > 1 {
                    offsets[axis] = -1;
                    axis += 1;
                } else {
                    break;
                }
            }
        }
        best
    }
}

/// Greedy maximal net construction over the dense sample.
///
/// Level `n0` starts from `gamma(0)`; every deeper level is seeded with the
/// previous level's points (same order) and extended by the same greedy
/// scan. Separation is strict (`> 2^-n`), covering is verified (`<= 2^-n`)
/// before returning.
pub fn build_nets(
    curve: &Curve,
    n0: i32,
    n_max: i32,
    sample_spacing: f64,
) -> Result<NetHierarchy, NetError> {
    if n0 > n_max {
        return Err(NetError::BadScaleRange(n0, n_max));
    }
    let finest = (2.0_f64).powi(-n_max);
    if sample_spacing > finest / 8.0 {
        return Err(NetError::SpacingTooCoarse(
            sample_spacing,
            finest,
            finest / 8.0,
        ));
    }
    let params = curve.dense_params(sample_spacing);
    let samples: Vec<NetPoint> = params
        .iter()
        .map(|&t| NetPoint {
            t,
            point: curve.point_at_clamped(t),
        })
        .collect();

    let mut levels: Vec<Vec<NetPoint>> = Vec::with_capacity((n_max - n0 + 1) as usize);
    for n in n0..=n_max {
        let eps = (2.0_f64).powi(-n);
        let dim = curve.dim();
        let mut index = NeighborIndex::new(eps, dim);
        let mut net: Vec<NetPoint> = Vec::new();
        let push = |np: NetPoint, net: &mut Vec<NetPoint>, index: &mut NeighborIndex| {
            index.insert(&np.point, net.len());
            net.push(np);
        };
        match levels.last() {
            None => push(samples[0].clone(), &mut net, &mut index),
            Some(prev) => {
                for np in prev {
                    // seeds keep separation at the coarser scale, which is
                    // stronger than needed here
                    push(np.clone(), &mut net, &mut index);
                }
            }
        }
        for s in &samples {
            if index.nearest_within(&s.point, eps, &net).is_none() {
                push(s.clone(), &mut net, &mut index);
            }
        }
        // covering: greedy maximality guarantees it; verify anyway
        for s in &samples {
            match index.nearest_within(&s.point, eps, &net) {
                Some(_) => {}
                None => {
                    let d = net
                        .iter()
                        .map(|np| np.point.dist(&s.point))
                        .fold(f64::INFINITY, f64::min);
                    return Err(NetError::CoveringViolation(n, s.t, d, eps));
                }
            }
        }
        levels.push(net);
    }
    Ok(NetHierarchy {
        n0,
        n_max,
        levels,
        sample_spacing,
    })
}

/// Default coarsest scale: the largest `n0` with `A 2^{-n0} >= diam`, so a
/// single coarsest ball covers the curve. The starting point is of no
/// consequence downstream.
pub fn default_n0(curve: &Curve, inflation: f64) -> i32 {
    let diam = curve_diam(curve);
    (inflation / diam).log2().floor() as i32
}

/// Exact diameter of a polyline: max pairwise vertex distance.
pub fn curve_diam(curve: &Curve) -> f64 {
    let vs = curve.vertices();
    let mut best = 0.0_f64;
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            best = best.max(vs[i].dist(&vs[j]));
        }
    }
    best
}

/// A multiresolution ball `B(x, A 2^-n)` keyed by its scale and the index
/// of its center in `X_n`.
#[derive(Clone, Debug, Serialize)]
pub struct Ball {
    pub scale: i32,
    pub index: usize,
    pub center: Point,
    pub center_param: f64,
    pub radius: f64,
}

impl Ball {
    pub fn key(&self) -> (i32, usize) {
        (self.scale, self.index)
    }

    pub fn diam(&self) -> f64 {
        2.0 * self.radius
    }

    /// the inflation `lambda Q`: same center, radius dilated
    pub fn inflate(&self, lambda: f64) -> Ball {
        Ball {
            radius: self.radius * lambda,
            ..self.clone()
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.center.dist(p) < self.radius
    }
}

/// One ball per net point per level, radius `A 2^-n`, ordered by
/// `(scale, index)`.
pub fn multiresolution_family(nets: &NetHierarchy, inflation: f64) -> Result<Vec<Ball>, NetError> {
    if inflation <= 1.0 {
        return Err(NetError::BadInflation(inflation));
    }
    let mut out = Vec::new();
    for n in nets.scales() {
        let radius = inflation * (2.0_f64).powi(-n);
        for (k, np) in nets.level(n).unwrap().iter().enumerate() {
            out.push(Ball {
                scale: n,
                index: k,
                center: np.point.clone(),
                center_param: np.t,
                radius,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_segment() -> Curve {
        Curve::new(vec![Point(vec![0.0, 0.0]), Point(vec![1.0, 0.0])]).unwrap()
    }

    #[test]
    fn greedy_net_on_unit_segment() {
        // 2^-n = 0.5 at n = 1; spacing 0.01 gives samples at 0, 0.01, ...;
        // first sample beyond strict separation 0.5 is t = 0.51, and the
        // covering radius over the samples is then 0.49
        let c = unit_segment();
        let nets = build_nets(&c, 1, 3, 0.01).unwrap();
        let lvl = nets.level(1).unwrap();
        assert_eq!(lvl.len(), 2);
        assert_eq!(lvl[0].t, 0.0);
        assert!((lvl[1].t - 0.51).abs() < 1e-12);
        let worst = c
            .dense_params(0.01)
            .iter()
            .map(|&t| {
                let p = c.point_at_clamped(t);
                lvl.iter()
                    .map(|np| np.point.dist(&p))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0_f64, f64::max);
        assert!((worst - 0.49).abs() < 1e-12);
    }

    #[test]
    fn single_point_covers_small_curve() {
        let c = unit_segment();
        let nets = build_nets(&c, -1, 5, 0.003).unwrap();
        assert_eq!(nets.level(-1).unwrap().len(), 1); // 2^1 = 2 covers [0,1]
        assert_eq!(nets.level(-1).unwrap()[0].t, 0.0);
    }

    #[test]
    fn nesting_and_separation_and_covering() {
        let c = Curve::new(vec![
            Point(vec![0.0, 0.0]),
            Point(vec![0.4, 0.3]),
            Point(vec![0.9, -0.1]),
            Point(vec![1.5, 0.2]),
        ])
        .unwrap();
        let nets = build_nets(&c, 0, 6, (2.0_f64).powi(-6) / 8.0).unwrap();
        for n in nets.scales() {
            let eps = (2.0_f64).powi(-n);
            let pts = nets.level(n).unwrap();
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    assert!(pts[i].point.dist(&pts[j].point) > eps, "separation at n={n}");
                }
            }
            // cardinality along a curve of length l
            assert!(pts.len() as f64 <= c.total_len() / eps + 1.0);
            if n < nets.n_max {
                let next: Vec<f64> = nets.level(n + 1).unwrap().iter().map(|p| p.t).collect();
                for p in pts {
                    assert!(next.iter().any(|&t| t == p.t), "nesting at n={n}");
                }
            }
        }
    }

    #[test]
    fn determinism() {
        let c = unit_segment();
        let a = build_nets(&c, 0, 6, 0.001).unwrap();
        let b = build_nets(&c, 0, 6, 0.001).unwrap();
        for (la, lb) in a.levels.iter().zip(&b.levels) {
            assert_eq!(la.len(), lb.len());
            for (x, y) in la.iter().zip(lb) {
                assert_eq!(x.t, y.t);
            }
        }
    }

    #[test]
    fn family_radii_and_order() {
        let c = unit_segment();
        let nets = build_nets(&c, 1, 5, 0.003).unwrap();
        let fam = multiresolution_family(&nets, 8.0).unwrap();
        let mut prev = (i32::MIN, 0usize);
        for b in &fam {
            assert_eq!(b.radius, 8.0 * (2.0_f64).powi(-b.scale));
            assert!((b.scale, b.index) > prev);
            prev = (b.scale, b.index);
        }
        assert!(multiresolution_family(&nets, 1.0).is_err());
        let q = &fam[0];
        let q4 = q.inflate(4.0);
        assert_eq!(q4.radius, 4.0 * q.radius);
    }
}
