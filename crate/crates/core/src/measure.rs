//! The deficit measures on a curve: the density `rho = 1 - gamma1'`, the
//! measure `mu = rho dl` whose total is the chord-arc deficit, the
//! projection-multiplicity decomposition, bends (maximal subarcs where the
//! chord projection is non-injective), and the augmented measures that add
//! mass on bends and their projection windows.
//!
//! Everything here is computed piecewise-exactly through the monotone
//! decomposition of `gamma1`; no sampling enters this module. The chord
//! projection `pi` is always the first coordinate, so the deficit identity
//! `mu(Gamma) = l - crd` refers to curves in normalized position; all other
//! relations hold in any frame.

use crate::curve::Curve;
use crate::kahan::KahanSum;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("interval [{0}, {1}] is reversed or empty")]
    ReversedInterval(f64, f64),
    #[error("arcs {0} and {1} overlap; the region family must be disjoint")]
    OverlappingArcs(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PieceKind {
    Increasing,
    Decreasing,
    Constant,
}

/// A maximal parameter interval on which `gamma1` is strictly monotone or
/// constant. Pieces tile `[0, l]`.
#[derive(Clone, Debug, Serialize)]
pub struct MonotonePiece {
    pub t_lo: f64,
    pub t_hi: f64,
    /// `gamma1(t_lo)` and `gamma1(t_hi)` (unordered: decreasing pieces
    /// have `x_lo > x_hi`)
    pub x_lo: f64,
    pub x_hi: f64,
    pub kind: PieceKind,
    /// segment index range [seg_lo, seg_hi] making up the piece
    pub seg_lo: usize,
    pub seg_hi: usize,
}

impl MonotonePiece {
    pub fn value_min(&self) -> f64 {
        self.x_lo.min(self.x_hi)
    }

    pub fn value_max(&self) -> f64 {
        self.x_lo.max(self.x_hi)
    }
}

/// A maximal closed parameter interval whose image lies in the
/// multiplicity >= 2 region (global projection extremizers folded in).
#[derive(Clone, Debug, Serialize)]
pub struct Bend {
    pub t_lo: f64,
    pub t_hi: f64,
    pub length: f64,
    pub pi_lo: f64,
    pub pi_hi: f64,
}

/// Piecewise-constant density against arc length: `density[i]` on
/// `[breakpoints[i], breakpoints[i+1]]`.
#[derive(Clone, Debug, Serialize)]
pub struct DensityMeasure {
    pub breakpoints: Vec<f64>,
    pub density: Vec<f64>,
}

impl DensityMeasure {
    pub fn total(&self) -> f64 {
        let mut k = KahanSum::new();
        for i in 0..self.density.len() {
            k.add(self.density[i] * (self.breakpoints[i + 1] - self.breakpoints[i]));
        }
        k.value()
    }

    /// Exact integral over `[a, b]`.
    pub fn eval_interval(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut k = KahanSum::new();
        for i in 0..self.density.len() {
            let lo = self.breakpoints[i].max(a);
            let hi = self.breakpoints[i + 1].min(b);
            if hi > lo {
                k.add(self.density[i] * (hi - lo));
            }
        }
        k.value()
    }

    pub fn eval_intervals(&self, intervals: &[(f64, f64)]) -> f64 {
        let mut k = KahanSum::new();
        for &(a, b) in intervals {
            k.add(self.eval_interval(a, b));
        }
        k.value()
    }

    pub fn density_at(&self, t: f64) -> f64 {
        let i = match self
            .breakpoints
            .binary_search_by(|c| c.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(self.density.len().saturating_sub(1)),
            Err(i) => i.saturating_sub(1).min(self.density.len() - 1),
        };
        self.density[i]
    }

    pub fn dump_json(&self) -> String {
        serde_json::to_string(&serde_json::json!({
            "breakpoints": self.breakpoints,
            "density": self.density,
            "total": self.total(),
        }))
        .unwrap()
    }
}

/// Per-segment density `rho_i = 1 - (dx1)_i / (ds)_i`, constant on each
/// segment; vertices carry no mass. Range `[0, 2]` up to roundoff, which
/// is clamped.
pub fn rho(curve: &Curve) -> Vec<f64> {
    (0..curve.n_segments())
        .map(|i| {
            let dx = curve.vertices()[i + 1].0[0] - curve.vertices()[i].0[0];
            (1.0 - dx / curve.seg_len(i)).clamp(0.0, 2.0)
        })
        .collect()
}

pub fn mu_measure(curve: &Curve) -> DensityMeasure {
    DensityMeasure {
        breakpoints: curve.cum_len().to_vec(),
        density: rho(curve),
    }
}

/// `mu([t1, t2])`, computed as the exact piecewise integral of `rho` and
/// cross-checked against the closed form
/// `(t2 - t1) - (gamma1(t2) - gamma1(t1))`.
pub fn mu(curve: &Curve, t1: f64, t2: f64) -> Result<f64, MeasureError> {
    if t2 <= t1 {
        return Err(MeasureError::ReversedInterval(t1, t2));
    }
    let integral = mu_measure(curve).eval_interval(t1, t2);
    let identity = (t2 - t1) - (curve.gamma1(t2) - curve.gamma1(t1));
    let tol = 1e-12 * (t2 - t1).max(1.0);
    assert!(
        (integral - identity).abs() <= tol,
        "mu integral {integral} disagrees with length-minus-projection {identity}"
    );
    Ok(integral)
}

/// Split `gamma1` into maximal strictly monotone / constant pieces.
pub fn monotone_pieces(curve: &Curve) -> Vec<MonotonePiece> {
    let sign = |i: usize| -> i8 {
        let dx = curve.vertices()[i + 1].0[0] - curve.vertices()[i].0[0];
        if dx > 0.0 {
            1
        } else if dx < 0.0 {
            -1
        } else {
            0
        }
    };
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut cur = sign(0);
    for i in 1..=curve.n_segments() {
        if i == curve.n_segments() || sign(i) != cur {
            let kind = match cur {
                1 => PieceKind::Increasing,
                -1 => PieceKind::Decreasing,
                _ => PieceKind::Constant,
            };
            out.push(MonotonePiece {
                t_lo: curve.cum_len()[start],
                t_hi: curve.cum_len()[i],
                x_lo: curve.vertices()[start].0[0],
                x_hi: curve.vertices()[i].0[0],
                kind,
                seg_lo: start,
                seg_hi: i - 1,
            });
            if i < curve.n_segments() {
                start = i;
                cur = sign(i);
            }
        }
    }
    out
}

/// Parameter within a strictly monotone piece where `gamma1` equals `v`
/// (exact piecewise-linear inversion).
pub fn piece_param_at_value(curve: &Curve, piece: &MonotonePiece, v: f64) -> f64 {
    debug_assert!(piece.kind != PieceKind::Constant);
    for seg in piece.seg_lo..=piece.seg_hi {
        let xa = curve.vertices()[seg].0[0];
        let xb = curve.vertices()[seg + 1].0[0];
        let (lo, hi) = if xa <= xb { (xa, xb) } else { (xb, xa) };
        if v >= lo && v <= hi {
            let s = if xb == xa { 0.0 } else { (v - xa) / (xb - xa) };
            return curve.cum_len()[seg] + s.clamp(0.0, 1.0) * curve.seg_len(seg);
        }
    }
    // v outside the piece range: clamp to the nearer end
    if (v - piece.x_lo).abs() <= (v - piece.x_hi).abs() {
        piece.t_lo
    } else {
        piece.t_hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Multiplicity {
    Finite(usize),
    Infinite,
}

/// Value-level multiplicity: counts of covering monotone pieces per
/// elementary open interval of `gamma1` values, with plateau values
/// (constant pieces) carrying infinite multiplicity.
#[derive(Clone, Debug)]
pub struct MultiplicityStructure {
    pub breaks: Vec<f64>,
    /// covering count of the open interval `(breaks[i], breaks[i+1])`
    pub counts: Vec<usize>,
    pub plateau_values: Vec<f64>,
}

impl MultiplicityStructure {
    /// `M(v)`: the number of distinct parameters with `gamma1 = v`.
    /// Plateau values give infinity; boundary parameters shared by
    /// adjacent pieces count once.
    pub fn at(&self, v: f64, curve: &Curve, pieces: &[MonotonePiece]) -> Multiplicity {
        if self.plateau_values.iter().any(|&p| p == v) {
            return Multiplicity::Infinite;
        }
        let mut params: Vec<f64> = Vec::new();
        for piece in pieces {
            if piece.kind == PieceKind::Constant {
                continue;
            }
            if v > piece.value_min() && v < piece.value_max() {
                params.push(piece_param_at_value(curve, piece, v));
            } else if v == piece.x_lo {
                params.push(piece.t_lo);
            } else if v == piece.x_hi {
                params.push(piece.t_hi);
            }
        }
        params.sort_by(|a, b| a.partial_cmp(b).unwrap());
        params.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * curve.total_len().max(1.0));
        Multiplicity::Finite(params.len())
    }
}

pub fn multiplicity_decomposition(curve: &Curve) -> (Vec<MonotonePiece>, MultiplicityStructure) {
    let pieces = monotone_pieces(curve);
    let mut breaks: Vec<f64> = pieces.iter().flat_map(|p| [p.x_lo, p.x_hi]).collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    let counts = breaks
        .windows(2)
        .map(|w| {
            pieces
                .iter()
                .filter(|p| {
                    p.kind != PieceKind::Constant
                        && p.value_min() <= w[0]
                        && p.value_max() >= w[1]
                })
                .count()
        })
        .collect();
    let plateau_values = pieces
        .iter()
        .filter(|p| p.kind == PieceKind::Constant)
        .map(|p| p.x_lo)
        .collect();
    (
        pieces,
        MultiplicityStructure {
            breaks,
            counts,
            plateau_values,
        },
    )
}

fn merge_intervals(mut intervals: Vec<(f64, f64)>, tol: f64) -> Vec<(f64, f64)> {
    intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in intervals {
        match out.last_mut() {
            Some(last) if a <= last.1 + tol => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// The bends of the curve: closures of the maximal parameter intervals
/// whose image has projection multiplicity >= 2 (plateaus included), with
/// the global projection extremizers folded in so adjacent intervals are
/// not split at an extremum. Zero-length candidates are dropped.
pub fn bends(curve: &Curve) -> Vec<Bend> {
    let (pieces, mult) = multiplicity_decomposition(curve);
    let tol = 1e-12 * curve.total_len().max(1.0);
    let mut intervals: Vec<(f64, f64)> = Vec::new();

    for (i, w) in mult.breaks.windows(2).enumerate() {
        if mult.counts[i] < 2 {
            continue;
        }
        for piece in &pieces {
            if piece.kind == PieceKind::Constant {
                continue;
            }
            if piece.value_min() <= w[0] && piece.value_max() >= w[1] {
                let ta = piece_param_at_value(curve, piece, w[0]);
                let tb = piece_param_at_value(curve, piece, w[1]);
                intervals.push((ta.min(tb), ta.max(tb)));
            }
        }
    }
    for piece in &pieces {
        if piece.kind == PieceKind::Constant {
            intervals.push((piece.t_lo, piece.t_hi));
        }
    }
    // the exceptional set: global extremizer parameters, at most the two
    // ends of the value range; folding them in merges intervals that
    // would otherwise be split at the extremum
    if let (Some(&vmin), Some(&vmax)) = (mult.breaks.first(), mult.breaks.last()) {
        for piece in &pieces {
            for (val, t) in [(piece.x_lo, piece.t_lo), (piece.x_hi, piece.t_hi)] {
                if val == vmin || val == vmax {
                    intervals.push((t, t));
                }
            }
        }
    }

    merge_intervals(intervals, tol)
        .into_iter()
        .filter(|&(a, b)| b - a > tol)
        .map(|(a, b)| {
            let (pi_lo, pi_hi) = gamma1_range(curve, a, b);
            Bend {
                t_lo: a,
                t_hi: b,
                length: b - a,
                pi_lo,
                pi_hi,
            }
        })
        .collect()
}

/// Exact range of `gamma1` over a parameter interval (endpoint values plus
/// interior vertices).
pub fn gamma1_range(curve: &Curve, a: f64, b: f64) -> (f64, f64) {
    let mut lo = curve.gamma1(a).min(curve.gamma1(b));
    let mut hi = curve.gamma1(a).max(curve.gamma1(b));
    for (i, _) in curve.vertex_params_in(a, b) {
        let x = curve.vertices()[i].0[0];
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo, hi)
}

/// Parameter preimage of the value window `[w_lo, w_hi]`, exact through
/// the monotone pieces.
fn window_preimage(
    curve: &Curve,
    pieces: &[MonotonePiece],
    w_lo: f64,
    w_hi: f64,
) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for piece in pieces {
        match piece.kind {
            PieceKind::Constant => {
                if piece.x_lo >= w_lo && piece.x_lo <= w_hi {
                    out.push((piece.t_lo, piece.t_hi));
                }
            }
            _ => {
                let lo = piece.value_min().max(w_lo);
                let hi = piece.value_max().min(w_hi);
                if hi >= lo {
                    let ta = piece_param_at_value(curve, piece, lo);
                    let tb = piece_param_at_value(curve, piece, hi);
                    let (a, b) = (ta.min(tb), ta.max(tb));
                    if b > a {
                        out.push((a, b));
                    }
                }
            }
        }
    }
    out
}

/// Shared construction behind `mu-tilde` and `mu-star`: density 2 on the
/// given regions, 1 on parameters whose projection lies within
/// `100 l(region)` of the region's projection interval, `rho` elsewhere.
fn augmented_measure(curve: &Curve, regions: &[(f64, f64)]) -> DensityMeasure {
    let pieces = monotone_pieces(curve);
    let rho_vals = rho(curve);
    let tol = 1e-12 * curve.total_len().max(1.0);

    let mut windows: Vec<(f64, f64)> = Vec::new();
    for &(a, b) in regions {
        let len = b - a;
        let (pi_lo, pi_hi) = gamma1_range(curve, a, b);
        windows.extend(window_preimage(
            curve,
            &pieces,
            pi_lo - 100.0 * len,
            pi_hi + 100.0 * len,
        ));
    }
    let windows = merge_intervals(windows, tol);
    let regions_sorted = merge_intervals(regions.to_vec(), 0.0);

    let mut breaks: Vec<f64> = curve.cum_len().to_vec();
    for &(a, b) in regions_sorted.iter().chain(&windows) {
        breaks.push(a);
        breaks.push(b);
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    breaks.retain(|&t| t >= 0.0 && t <= curve.total_len());

    let in_any = |list: &[(f64, f64)], t: f64| -> bool {
        let i = list.partition_point(|&(a, _)| a <= t);
        i > 0 && t <= list[i - 1].1
    };
    let density = breaks
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            if in_any(&regions_sorted, mid) {
                2.0
            } else if in_any(&windows, mid) {
                1.0
            } else {
                rho_vals[curve.segment_index(mid)]
            }
        })
        .collect();
    DensityMeasure {
        breakpoints: breaks,
        density,
    }
}

/// `mu-tilde`: the bend-augmented deficit measure.
pub fn mu_tilde(curve: &Curve, bends: &[Bend]) -> DensityMeasure {
    let regions: Vec<(f64, f64)> = bends.iter().map(|b| (b.t_lo, b.t_hi)).collect();
    augmented_measure(curve, &regions)
}

/// `mu-star`: the same augmentation over a caller-supplied disjoint closed
/// arc family (each arc expected to carry its mass certificate upstream).
pub fn augment_with_arcs(
    curve: &Curve,
    arcs: &[crate::curve::Subarc],
) -> Result<DensityMeasure, MeasureError> {
    let mut sorted: Vec<(usize, f64, f64)> = arcs
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s.a, s.b))
        .collect();
    sorted.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap());
    for w in sorted.windows(2) {
        if w[1].1 < w[0].2 {
            return Err(MeasureError::OverlappingArcs(w[0].0, w[1].0));
        }
    }
    let regions: Vec<(f64, f64)> = sorted.iter().map(|&(_, a, b)| (a, b)).collect();
    Ok(augmented_measure(curve, &regions))
}

/// Fraction of the parameter domain covered by bends and their projection
/// windows; the windows have no cap, so this can reach 1.
pub fn window_fraction(curve: &Curve, bends: &[Bend]) -> f64 {
    let m = mu_tilde(curve, bends);
    let covered: f64 = m
        .breakpoints
        .windows(2)
        .zip(&m.density)
        .filter(|(_, &d)| d >= 1.0)
        .map(|(w, _)| w[1] - w[0])
        .sum();
    covered / curve.total_len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;

    fn hook() -> Curve {
        Curve::new(vec![
            Point(vec![0.0, 0.0]),
            Point(vec![1.0, 0.0]),
            Point(vec![0.5, 0.2]),
            Point(vec![1.5, 0.2]),
        ])
        .unwrap()
    }

    fn vshape() -> Curve {
        Curve::new(vec![
            Point(vec![0.0, 0.0]),
            Point(vec![0.5, 0.3]),
            Point(vec![1.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn rho_extremes() {
        let aligned = Curve::new(vec![Point(vec![0.0, 0.0]), Point(vec![1.0, 0.0])]).unwrap();
        assert_eq!(rho(&aligned), vec![0.0]);
        let perp = Curve::new(vec![Point(vec![0.0, 0.0]), Point(vec![0.0, 1.0])]).unwrap();
        assert_eq!(rho(&perp), vec![1.0]);
        let backward = Curve::new(vec![Point(vec![1.0, 0.0]), Point(vec![0.0, 0.0])]).unwrap();
        assert_eq!(rho(&backward), vec![2.0]);
    }

    #[test]
    fn mu_equals_deficit_on_vshape() {
        let v = vshape();
        let m = mu(&v, 0.0, v.total_len()).unwrap();
        assert!((m - v.deficit()).abs() < 1e-12);
        let half = mu(&v, 0.0, v.total_len() / 2.0).unwrap();
        // l/2 - gamma1(apex) = 0.583095... - 0.5
        assert!((half - 0.083_095_189_484_530_1).abs() < 1e-12);
        assert!(mu(&v, 0.5, 0.2).is_err());
    }

    #[test]
    fn vshape_has_single_multiplicity_one_region() {
        let v = vshape();
        let (pieces, m) = multiplicity_decomposition(&v);
        assert_eq!(pieces.len(), 1);
        assert!(m.counts.iter().all(|&c| c == 1));
        assert_eq!(m.at(0.3, &v, &pieces), Multiplicity::Finite(1));
        assert!(bends(&v).is_empty());
    }

    #[test]
    fn hook_multiplicity_and_bend() {
        let h = hook();
        let (pieces, m) = multiplicity_decomposition(&h);
        assert_eq!(pieces.len(), 3);
        assert_eq!(m.at(0.75, &h, &pieces), Multiplicity::Finite(3));
        assert_eq!(m.at(0.25, &h, &pieces), Multiplicity::Finite(1));
        assert_eq!(m.at(1.25, &h, &pieces), Multiplicity::Finite(1));

        let bs = bends(&h);
        assert_eq!(bs.len(), 1);
        let b = &bs[0];
        let expect_len = 1.0 + 0.29_f64.sqrt();
        assert!((b.length - expect_len).abs() < 1e-12, "len {}", b.length);
        assert!((b.t_lo - 0.5).abs() < 1e-12);
        assert!((b.pi_lo - 0.5).abs() < 1e-12 && (b.pi_hi - 1.0).abs() < 1e-12);

        // bend mass: mu(b) = l(b) - 0.5 >= l(b)/2
        let mass = mu(&h, b.t_lo, b.t_hi).unwrap();
        assert!((mass - (expect_len - 0.5)).abs() < 1e-12);
        assert!(mass >= 0.5 * b.length - 1e-9);
    }

    #[test]
    fn vertical_segment_is_a_plateau_bend() {
        let c = Curve::new(vec![
            Point(vec![0.0, 0.0]),
            Point(vec![0.4, 0.0]),
            Point(vec![0.4, 0.5]),
            Point(vec![1.0, 0.5]),
        ])
        .unwrap();
        let (pieces, m) = multiplicity_decomposition(&c);
        assert_eq!(pieces.len(), 3);
        assert_eq!(m.at(0.4, &c, &pieces), Multiplicity::Infinite);
        let bs = bends(&c);
        assert_eq!(bs.len(), 1);
        assert!((bs[0].t_lo - 0.4).abs() < 1e-12 && (bs[0].t_hi - 0.9).abs() < 1e-12);
    }

    #[test]
    fn mu_tilde_matches_mu_without_bends() {
        let v = vshape();
        let mt = mu_tilde(&v, &bends(&v));
        let m = mu_measure(&v);
        assert!((mt.total() - m.total()).abs() < 1e-12);
    }

    #[test]
    fn mu_tilde_doubles_on_the_hook_bend() {
        let h = hook();
        let bs = bends(&h);
        let mt = mu_tilde(&h, &bs);
        let on_bend = mt.eval_interval(bs[0].t_lo, bs[0].t_hi);
        assert!((on_bend - 2.0 * bs[0].length).abs() < 1e-12);
        // the window rule covers this whole short curve
        assert!((window_fraction(&h, &bs) - 1.0).abs() < 1e-12);
        // rho <= rho-tilde <= 2 pointwise on segment midpoints
        let rv = rho(&h);
        for i in 0..h.n_segments() {
            let mid = 0.5 * (h.cum_len()[i] + h.cum_len()[i + 1]);
            let d = mt.density_at(mid);
            assert!(d >= rv[i] - 1e-12 && d <= 2.0);
        }
    }

    #[test]
    fn mu_star_empty_family_is_mu() {
        let v = vshape();
        let ms = augment_with_arcs(&v, &[]).unwrap();
        assert!((ms.total() - mu_measure(&v).total()).abs() < 1e-12);
    }

    #[test]
    fn mu_star_rejects_overlap() {
        let v = vshape();
        let arcs = vec![
            crate::curve::Subarc { a: 0.1, b: 0.5 },
            crate::curve::Subarc { a: 0.4, b: 0.8 },
        ];
        assert!(augment_with_arcs(&v, &arcs).is_err());
    }

    #[test]
    fn mu_star_dominates_mu() {
        let h = hook();
        let arcs = vec![crate::curve::Subarc { a: 1.1, b: 1.4 }];
        let ms = augment_with_arcs(&h, &arcs).unwrap();
        let m = mu_measure(&h);
        assert!(ms.total() >= m.total() - 1e-12);
        assert!((ms.eval_interval(1.1, 1.4) - 2.0 * 0.3).abs() < 1e-12);
    }
}
