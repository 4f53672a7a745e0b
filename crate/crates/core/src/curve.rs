//! Polygonal Jordan arcs with exact arc-length parameterization.
//!
//! A curve is a vertex list; every quantity downstream (beta numbers,
//! measures, cores) reduces to closed-form work on segments, so no
//! quadrature error enters anywhere.

use crate::geom::{normalize as vnormalize, segment_ball_interval, segments_intersect_2d, HouseholderChain, Point};
use crate::kahan::KahanSum;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("curve needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertex {0} has dimension {1}, expected {2}")]
    DimensionMismatch(usize, usize, usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("degenerate segment between vertices {0} and {1}")]
    DegenerateSegment(usize, usize),
    #[error("parameter {0} outside [0, {1}]")]
    ParamOutOfRange(f64, f64),
    #[error("chord length is zero; closed curves are not Jordan arcs")]
    ZeroChord,
    #[error("curve parse error: {0}")]
    Parse(String),
}

/// A parameter interval `[a, b]` of the arc-length parameterization; we
/// refer to it and to its image interchangeably.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Subarc {
    pub a: f64,
    pub b: f64,
}

impl Subarc {
    pub fn len(&self) -> f64 {
        self.b - self.a
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Curve {
    vertices: Vec<Point>,
    /// cumulative arc length; `cum[0] = 0`, `cum[last] = total length`
    cum: Vec<f64>,
    seg_len: Vec<f64>,
    dim: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalizationReport {
    /// exact power of two `2^{-k}` with `2^k <= l < 2^{k+1}`
    pub scale_factor: f64,
    /// the original start point (subtracted before rotation)
    pub translation: Point,
    pub rotation: HouseholderChain,
    pub normalized_length: f64,
    pub normalized_chord: f64,
}

impl NormalizationReport {
    pub fn is_identity(&self, tol: f64) -> bool {
        (self.scale_factor - 1.0).abs() <= tol
            && self.translation.0.iter().all(|c| c.abs() <= tol)
            && self.rotation.is_identity()
    }
}

impl Curve {
    pub fn new(vertices: Vec<Point>) -> Result<Self, CurveError> {
        if vertices.len() < 2 {
            return Err(CurveError::TooFewVertices(vertices.len()));
        }
        let dim = vertices[0].dim();
        for (i, v) in vertices.iter().enumerate() {
            if v.dim() != dim {
                return Err(CurveError::DimensionMismatch(i, v.dim(), dim));
            }
            if !v.is_finite() {
                return Err(CurveError::NonFinite(i));
            }
        }
        let mut seg_len = Vec::with_capacity(vertices.len() - 1);
        let mut cum = Vec::with_capacity(vertices.len());
        let mut acc = KahanSum::new();
        cum.push(0.0);
        for i in 0..vertices.len() - 1 {
            let l = vertices[i].dist(&vertices[i + 1]);
            if l == 0.0 {
                return Err(CurveError::DegenerateSegment(i, i + 1));
            }
            seg_len.push(l);
            acc.add(l);
            cum.push(acc.value());
        }
        Ok(Curve {
            vertices,
            cum,
            seg_len,
            dim,
        })
    }

    /// Parse the interchange format `{"dim": d, "vertices": [[..], ..]}`.
    pub fn from_json(source: &str) -> Result<Self, CurveError> {
        #[derive(serde::Deserialize)]
        struct CurveFile {
            dim: usize,
            vertices: Vec<Vec<f64>>,
        }
        let file: CurveFile =
            serde_json::from_str(source).map_err(|e| CurveError::Parse(e.to_string()))?;
        for (i, v) in file.vertices.iter().enumerate() {
            if v.len() != file.dim {
                return Err(CurveError::DimensionMismatch(i, v.len(), file.dim));
            }
        }
        Curve::new(file.vertices.into_iter().map(Point).collect())
    }

    pub fn to_json(&self) -> String {
        let verts: Vec<&Vec<f64>> = self.vertices.iter().map(|p| &p.0).collect();
        serde_json::to_string(&serde_json::json!({"dim": self.dim, "vertices": verts})).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn n_segments(&self) -> usize {
        self.seg_len.len()
    }

    pub fn total_len(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn cum_len(&self) -> &[f64] {
        &self.cum
    }

    pub fn seg_len(&self, i: usize) -> f64 {
        self.seg_len[i]
    }

    pub fn start(&self) -> &Point {
        &self.vertices[0]
    }

    pub fn end(&self) -> &Point {
        self.vertices.last().unwrap()
    }

    pub fn chord(&self) -> f64 {
        self.start().dist(self.end())
    }

    /// `l - crd >= 0`; tiny negative roundoff is clamped to zero.
    pub fn deficit(&self) -> f64 {
        let d = self.total_len() - self.chord();
        if d < 0.0 && d > -1e-12 {
            0.0
        } else {
            d
        }
    }

    /// Index of the segment containing parameter `t` (last segment for
    /// `t = total_len`).
    pub fn segment_index(&self, t: f64) -> usize {
        match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(self.seg_len.len() - 1),
            Err(i) => i - 1,
        }
    }

    pub fn point_at(&self, t: f64) -> Result<Point, CurveError> {
        if !(0.0..=self.total_len()).contains(&t) {
            return Err(CurveError::ParamOutOfRange(t, self.total_len()));
        }
        Ok(self.point_at_clamped(t))
    }

    pub fn point_at_clamped(&self, t: f64) -> Point {
        let t = t.clamp(0.0, self.total_len());
        if t == 0.0 {
            return self.vertices[0].clone();
        }
        if t == self.total_len() {
            return self.vertices.last().unwrap().clone();
        }
        let i = self.segment_index(t);
        let s = (t - self.cum[i]) / self.seg_len[i];
        self.vertices[i].lerp(&self.vertices[i + 1], s.clamp(0.0, 1.0))
    }

    /// Parameters of vertices strictly inside `(a, b)`.
    pub fn vertex_params_in(&self, a: f64, b: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.cum.partition_point(|&c| c <= a);
        self.cum[lo..]
            .iter()
            .enumerate()
            .take_while(move |(_, &c)| c < b)
            .map(move |(k, &c)| (lo + k, c))
    }

    /// Evenly spaced parameters `0, h, 2h, ..., l` (endpoint always
    /// included).
    pub fn dense_params(&self, spacing: f64) -> Vec<f64> {
        let l = self.total_len();
        let n = (l / spacing).floor() as usize;
        let mut out: Vec<f64> = (0..=n).map(|k| k as f64 * spacing).collect();
        if *out.last().unwrap() < l {
            out.push(l);
        } else {
            *out.last_mut().unwrap() = l;
        }
        out
    }

    /// Connected components of the preimage of the open ball
    /// `B(center, radius)`, as closed parameter intervals with endpoints on
    /// the sphere or at the curve ends. Zero-length touch components are
    /// dropped.
    pub fn maximal_subarcs(&self, center: &Point, radius: f64) -> Vec<Subarc> {
        let merge_tol = 1e-12 * self.total_len().max(1.0);
        let mut out: Vec<Subarc> = Vec::new();
        for i in 0..self.seg_len.len() {
            if let Some((lo, hi)) =
                segment_ball_interval(&self.vertices[i], &self.vertices[i + 1], center, radius)
            {
                let t0 = self.cum[i] + lo * self.seg_len[i];
                let t1 = self.cum[i] + hi * self.seg_len[i];
                if t1 <= t0 {
                    continue;
                }
                match out.last_mut() {
                    Some(last) if t0 <= last.b + merge_tol => last.b = t1.max(last.b),
                    _ => out.push(Subarc { a: t0, b: t1 }),
                }
            }
        }
        out
    }

    /// The finite point set over which any sup of distances on the subarc
    /// is attained: its two endpoints plus interior vertices.
    pub fn subarc_points(&self, arc: &Subarc) -> Vec<Point> {
        let mut pts = vec![self.point_at_clamped(arc.a)];
        for (i, _) in self.vertex_params_in(arc.a, arc.b) {
            pts.push(self.vertices[i].clone());
        }
        pts.push(self.point_at_clamped(arc.b));
        pts
    }

    /// Exact simplicity test for planar curves: no two non-adjacent
    /// segments intersect, and adjacent segments meet only at the shared
    /// vertex.
    pub fn is_simple_2d(&self) -> bool {
        assert_eq!(self.dim, 2, "simplicity sweep is 2D only");
        let n = self.seg_len.len();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&self.vertices[i], &self.vertices[i + 1]);
                let (c, d) = (&self.vertices[j], &self.vertices[j + 1]);
                if j == i + 1 {
                    // allowed to share exactly the common vertex b == c
                    let back = crate::geom::dist_to_segment(a, c, d);
                    let fwd = crate::geom::dist_to_segment(d, a, b);
                    if (back == 0.0 && a != b) || (fwd == 0.0 && d != c) {
                        return false;
                    }
                    continue;
                }
                if segments_intersect_2d(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// Normalize: translate the start to the origin, reflect the chord onto
    /// `e1`, and rescale by an exact power of two so the length lands in
    /// `[1, 2)`.
    pub fn normalize(&self) -> Result<(Curve, NormalizationReport), CurveError> {
        let crd = self.chord();
        if crd == 0.0 {
            return Err(CurveError::ZeroChord);
        }
        let start = self.start().clone();
        let mut u = self.end().sub(&start);
        vnormalize(&mut u);
        let rotation = HouseholderChain::aligning_to_e1(&u);
        let k = self.total_len().log2().floor() as i32;
        let scale = (2.0_f64).powi(-k);
        let vertices: Vec<Point> = self
            .vertices
            .iter()
            .map(|v| {
                let shifted = Point(v.sub(&start));
                let rotated = rotation.apply(&shifted);
                Point(rotated.0.iter().map(|c| c * scale).collect())
            })
            .collect();
        let normalized = Curve::new(vertices)?;
        let report = NormalizationReport {
            scale_factor: scale,
            translation: start,
            rotation,
            normalized_length: normalized.total_len(),
            normalized_chord: normalized.chord(),
        };
        Ok((normalized, report))
    }

    /// First coordinate of `gamma(t)`; after normalization this is the
    /// chord projection `pi`.
    pub fn gamma1(&self, t: f64) -> f64 {
        self.point_at_clamped(t).0[0]
    }
}

/// Max pairwise distance over the subarc's endpoint/vertex set — the exact
/// diameter of a polyline piece.
pub fn subarc_diam(curve: &Curve, arc: &Subarc) -> f64 {
    let pts = curve.subarc_points(arc);
    let mut best = 0.0_f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            best = best.max(pts[i].dist(&pts[j]));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn vshape() -> Curve {
        Curve::new(vec![
            Point(vec![0.0, 0.0]),
            Point(vec![0.5, 0.3]),
            Point(vec![1.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn single_segment_lengths() {
        let c = Curve::from_json(r#"{"dim":2,"vertices":[[0,0],[1,0]]}"#).unwrap();
        assert_eq!(c.total_len(), 1.0);
        assert_eq!(c.chord(), 1.0);
        assert_eq!(c.deficit(), 0.0);
    }

    #[test]
    fn vshape_length_closed_form() {
        let c = vshape();
        let expect = 2.0 * (0.25_f64 + 0.09).sqrt();
        assert!((c.total_len() - expect).abs() < 1e-15);
        assert!((c.deficit() - (expect - 1.0)).abs() < 1e-15);
        assert!((c.deficit() - 0.166_190_378_969_060_2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_segment_rejected() {
        let err = Curve::from_json(r#"{"dim":2,"vertices":[[0,0],[0,0],[1,0]]}"#);
        assert!(matches!(err, Err(CurveError::DegenerateSegment(0, 1))));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = Curve::from_json(r#"{"dim":2,"vertices":[[0,0],[1,0,3]]}"#);
        assert!(matches!(err, Err(CurveError::DimensionMismatch(1, 3, 2))));
    }

    #[test]
    fn point_at_interpolates() {
        let seg = Curve::from_json(r#"{"dim":2,"vertices":[[0,0],[1,0]]}"#).unwrap();
        assert_eq!(seg.point_at(0.5).unwrap(), Point(vec![0.5, 0.0]));
        let v = vshape();
        let apex = v.point_at(v.total_len() / 2.0).unwrap();
        assert!(apex.dist(&Point(vec![0.5, 0.3])) < 1e-12);
        // quarter of the length sits at (0.25, 0.15) on the first segment
        let q = v.point_at(v.total_len() / 4.0).unwrap();
        assert!(q.dist(&Point(vec![0.25, 0.15])) < 1e-12);
        assert!(v.point_at(-0.1).is_err());
        assert!(v.point_at(v.total_len() + 0.1).is_err());
    }

    #[test]
    fn endpoints_exact() {
        let v = vshape();
        assert_eq!(&v.point_at(0.0).unwrap(), v.start());
        assert_eq!(&v.point_at(v.total_len()).unwrap(), v.end());
    }

    #[test]
    fn normalize_diagonal_segment() {
        let c = Curve::new(vec![Point(vec![3.0, 3.0]), Point(vec![4.0, 4.0])]).unwrap();
        let (n, rep) = c.normalize().unwrap();
        let sqrt2 = 2.0_f64.sqrt();
        assert_eq!(rep.scale_factor, 1.0); // sqrt(2) already in [1,2)
        assert!((n.total_len() - sqrt2).abs() < 1e-12);
        assert!(n.start().dist(&Point(vec![0.0, 0.0])) < 1e-12);
        assert!(n.end().dist(&Point(vec![sqrt2, 0.0])) < 1e-10);
    }

    #[test]
    fn normalize_scales_by_power_of_two() {
        let c = Curve::new(vec![Point(vec![0.0, 0.0]), Point(vec![5.0, 0.0])]).unwrap();
        let (n, rep) = c.normalize().unwrap();
        assert_eq!(rep.scale_factor, 0.25); // 2^2 <= 5 < 2^3
        assert!((n.total_len() - 1.25).abs() < 1e-12);
    }

    #[test]
    fn normalize_idempotent() {
        let (n, _) = vshape().normalize().unwrap();
        let (n2, rep) = n.normalize().unwrap();
        assert!(rep.is_identity(1e-10));
        for (a, b) in n.vertices().iter().zip(n2.vertices()) {
            assert!(a.dist(b) < 1e-10);
        }
    }

    #[test]
    fn closed_curve_rejected_by_normalize() {
        let c = Curve::new(vec![
            Point(vec![0.0, 0.0]),
            Point(vec![1.0, 0.0]),
            Point(vec![0.0, 0.0]),
        ]);
        // construction allows it (distinct consecutive vertices), but
        // normalization needs a nonzero chord
        assert!(matches!(
            c.unwrap().normalize(),
            Err(CurveError::ZeroChord)
        ));
    }

    #[test]
    fn maximal_subarcs_segment_through_ball() {
        let seg = Curve::from_json(r#"{"dim":2,"vertices":[[0,0],[1,0]]}"#).unwrap();
        let arcs = seg.maximal_subarcs(&Point(vec![0.5, 0.0]), 0.25);
        assert_eq!(arcs.len(), 1);
        assert!((arcs[0].a - 0.25).abs() < 1e-14 && (arcs[0].b - 0.75).abs() < 1e-14);
        assert!(seg
            .maximal_subarcs(&Point(vec![5.0, 5.0]), 0.1)
            .is_empty());
    }

    #[test]
    fn maximal_subarcs_straddle_apex() {
        let v = vshape();
        let arcs = v.maximal_subarcs(&Point(vec![0.5, 0.3]), 0.1);
        assert_eq!(arcs.len(), 1);
        let half = v.total_len() / 2.0;
        assert!(arcs[0].a < half && arcs[0].b > half);
        // clip endpoints land on the sphere
        for t in [arcs[0].a, arcs[0].b] {
            let d = v.point_at_clamped(t).dist(&Point(vec![0.5, 0.3]));
            assert!((d - 0.1).abs() < 1e-9);
        }
    }

    #[test]
    fn simplicity_detects_crossing() {
        let cross = Curve::new(vec![
            Point(vec![0.0, 0.0]),
            Point(vec![1.0, 1.0]),
            Point(vec![1.0, 0.0]),
            Point(vec![0.0, 1.0]),
        ])
        .unwrap();
        assert!(!cross.is_simple_2d());
        assert!(vshape().is_simple_2d());
    }

    #[test]
    fn cum_lengths_consistent() {
        let v = vshape();
        for i in 0..v.n_segments() {
            let d = v.cum_len()[i + 1] - v.cum_len()[i];
            assert!((d - v.seg_len(i)).abs() <= 1e-12 * v.seg_len(i));
        }
    }
}
