//! Classification of every multiresolution ball into the family tree:
//! large balls `G_L`, then for the rest the flat/non-flat split
//! `G1/G2/G3` over three inflations, the core-based split of `G2` into
//! `D1 / D2.1 / D2.2`, and the deep split of `D2.1` into `D2.1.1` and the
//! four `D2.1.2` region-assigned subfamilies, with the per-family
//! `beta^2 diam` sums and the diagnostics that travel with them.

use crate::beta::{
    almost_flat_split, arcs_clip_points, beta_ball, beta_restricted, beta_tilde, BetaValue,
};
use crate::cores::{build_core_triple, core_forest, CoreError, CoreSet, CoreTriple};
use crate::curve::{Curve, Subarc};
use crate::geom::Point;
use crate::kahan::KahanSum;
use crate::measure::{
    bends, gamma1_range, mu_measure, mu_tilde, augment_with_arcs, Bend, DensityMeasure,
    MeasureError,
};
use crate::net::{Ball, NetHierarchy};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("invalid classifier parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassifierParams {
    /// ball inflation factor A
    pub inflation: f64,
    /// number of core families J
    pub j_families: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub delta: f64,
    pub c_u: f64,
    /// the small c in the deep-tree measure test
    pub c_small: f64,
    /// relative tolerance handed to the line fitter
    pub fit_tol: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            inflation: 8.0,
            j_families: 10,
            eps1: 0.1,
            eps2: 0.01,
            eps3: 0.015,
            delta: 0.1,
            c_u: 100.0,
            c_small: 1e-3,
            fit_tol: 1e-9,
        }
    }
}

impl ClassifierParams {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: String| Err(ClassifyError::BadParams(m));
        if !(self.inflation > 1.0) {
            return bad(format!("A = {} must exceed 1", self.inflation));
        }
        if self.eps3 * self.eps3 >= self.delta.powi(3) / 4.0 {
            return bad(format!(
                "eps3^2 = {} must be below delta^3/4 = {}",
                self.eps3 * self.eps3,
                self.delta.powi(3) / 4.0
            ));
        }
        if !(0.0 < self.eps2 && self.eps2 < self.eps1 && self.eps1 < 1.0) {
            return bad(format!(
                "need 0 < eps2 < eps1 < 1, got eps2 = {}, eps1 = {}",
                self.eps2, self.eps1
            ));
        }
        if !(self.c_u > 1.0) {
            return bad(format!("C_U = {} must exceed 1", self.c_u));
        }
        for (name, v) in [
            ("eps3", self.eps3),
            ("delta", self.delta),
            ("c", self.c_small),
            ("fit_tol", self.fit_tol),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TopFamily {
    GL,
    G1,
    G2,
    G3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DeltaBranch {
    D1,
    D21,
    D22,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DeepLabel {
    D211,
    D212IClose,
    D212IFar,
    D212IiClose,
    D212IiFar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RegionRef {
    Bend(usize),
    DArc(usize),
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyLabel {
    pub top: TopFamily,
    pub delta: Option<DeltaBranch>,
    pub deep: Option<DeepLabel>,
    pub region: Option<RegionRef>,
}

impl FamilyLabel {
    fn top(top: TopFamily) -> Self {
        FamilyLabel {
            top,
            delta: None,
            deep: None,
            region: None,
        }
    }

    /// The leaf this ball's contribution is summed under.
    pub fn leaf(&self) -> Leaf {
        match (self.top, self.delta, self.deep) {
            (TopFamily::GL, _, _) => Leaf::GL,
            (TopFamily::G1, _, _) => Leaf::G1,
            (TopFamily::G3, _, _) => Leaf::G3,
            (TopFamily::G2, Some(DeltaBranch::D1), _) => Leaf::D1,
            (TopFamily::G2, Some(DeltaBranch::D22), _) => Leaf::D22,
            (TopFamily::G2, Some(DeltaBranch::D21), Some(DeepLabel::D211)) => Leaf::D211,
            (TopFamily::G2, Some(DeltaBranch::D21), Some(DeepLabel::D212IClose)) => Leaf::D212IC,
            (TopFamily::G2, Some(DeltaBranch::D21), Some(DeepLabel::D212IFar)) => Leaf::D212IF,
            (TopFamily::G2, Some(DeltaBranch::D21), Some(DeepLabel::D212IiClose)) => Leaf::D212IIC,
            (TopFamily::G2, Some(DeltaBranch::D21), Some(DeepLabel::D212IiFar)) => Leaf::D212IIF,
            _ => Leaf::G3, // unreachable for well-formed labels
        }
    }

    pub fn path(&self) -> String {
        let mut s = match self.top {
            TopFamily::GL => "G_L".to_string(),
            TopFamily::G1 => "G1".to_string(),
            TopFamily::G2 => "G2".to_string(),
            TopFamily::G3 => "G3".to_string(),
        };
        if let Some(d) = self.delta {
            s.push('/');
            s.push_str(match d {
                DeltaBranch::D1 => "D1",
                DeltaBranch::D21 => "D2.1",
                DeltaBranch::D22 => "D2.2",
            });
        }
        if let Some(d) = self.deep {
            s.push('/');
            s.push_str(match d {
                DeepLabel::D211 => "D2.1.1",
                DeepLabel::D212IClose => "D2.1.2/i,c",
                DeepLabel::D212IFar => "D2.1.2/i,f",
                DeepLabel::D212IiClose => "D2.1.2/ii,c",
                DeepLabel::D212IiFar => "D2.1.2/ii,f",
            });
        }
        s
    }
}

/// The ten leaf families, in the fixed reporting and summation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Leaf {
    GL,
    G1,
    D1,
    D211,
    D212IC,
    D212IF,
    D212IIC,
    D212IIF,
    D22,
    G3,
}

pub const LEAVES: [Leaf; 10] = [
    Leaf::GL,
    Leaf::G1,
    Leaf::D1,
    Leaf::D211,
    Leaf::D212IC,
    Leaf::D212IF,
    Leaf::D212IIC,
    Leaf::D212IIF,
    Leaf::D22,
    Leaf::G3,
];

impl Leaf {
    pub fn name(&self) -> &'static str {
        match self {
            Leaf::GL => "G_L",
            Leaf::G1 => "G1",
            Leaf::D1 => "D1",
            Leaf::D211 => "D2.1.1",
            Leaf::D212IC => "D2.1.2(i,c)",
            Leaf::D212IF => "D2.1.2(i,f)",
            Leaf::D212IIC => "D2.1.2(ii,c)",
            Leaf::D212IIF => "D2.1.2(ii,f)",
            Leaf::D22 => "D2.2",
            Leaf::G3 => "G3",
        }
    }
}

/// Everything computed per ball.
#[derive(Clone, Debug, Serialize)]
pub struct BallAnalysis {
    pub scale: i32,
    pub index: usize,
    pub radius: f64,
    pub beta: f64,
    pub beta_method: crate::beta::FitMethod,
    pub certified_gap: f64,
    pub n_arcs: usize,
    pub n_flat_arcs: usize,
    pub label: FamilyLabel,
    /// which inflation 2^j triggered the G1/G2 label
    pub winning_j: Option<u8>,
    /// beta^2 diam
    pub contribution: f64,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Classification {
    pub analyses: Vec<BallAnalysis>,
    pub bends: Vec<Bend>,
    /// merged case-(ii) connector arcs (the family the paper calls D)
    pub d_arcs: Vec<Subarc>,
    pub mu_total: f64,
    pub mu_tilde_total: f64,
    pub mu_star_total: Option<f64>,
    pub core_warnings: Vec<String>,
}

/// `gamma_Q` for the inflation `2^jexp Q`: the maximal arc of the inflated
/// ball containing the center's parameter.
pub fn gamma_q(curve: &Curve, ball: &Ball, jexp: u8) -> Option<(Subarc, Vec<Subarc>)> {
    let inflated = ball.inflate((2.0_f64).powi(jexp as i32));
    let arcs = curve.maximal_subarcs(&inflated.center, inflated.radius);
    let t = ball.center_param;
    let own = arcs
        .iter()
        .find(|a| a.a <= t && t <= a.b)
        .or_else(|| {
            // roundoff can leave the center parameter marginally outside
            arcs.iter().min_by(|x, y| {
                let dx = (t - x.a).abs().min((t - x.b).abs());
                let dy = (t - y.a).abs().min((t - y.b).abs());
                dx.partial_cmp(&dy).unwrap()
            })
        })
        .copied()?;
    Some((own, arcs))
}

/// `G_L` membership: the whole curve fits in the closed `4Q`. Exact via
/// vertex suprema (distance to a fixed point is convex along segments).
pub fn is_large(curve: &Curve, ball: &Ball) -> bool {
    let r4 = 4.0 * ball.radius;
    curve
        .vertices()
        .iter()
        .all(|v| v.dist(&ball.center) <= r4)
}

/// Split the family into `(G_L, G)` by the `Gamma ⊆ 4Q` test.
pub fn split_large<'a>(curve: &Curve, balls: &'a [Ball]) -> (Vec<&'a Ball>, Vec<&'a Ball>) {
    let mut large = Vec::new();
    let mut small = Vec::new();
    for b in balls {
        if is_large(curve, b) {
            large.push(b);
        } else {
            small.push(b);
        }
    }
    (large, small)
}

/// Per-inflation data the later stages reuse.
pub struct InflationData {
    pub beta: BetaValue,
    pub gamma: Subarc,
    pub flat: Vec<Subarc>,
    pub nonflat: Vec<Subarc>,
    pub beta_flat: f64,
    pub beta_tilde_gamma: f64,
}

fn analyze_inflation(
    curve: &Curve,
    ball: &Ball,
    jexp: u8,
    params: &ClassifierParams,
) -> Option<InflationData> {
    let (gamma, arcs) = gamma_q(curve, ball, jexp)?;
    let inflated = ball.inflate((2.0_f64).powi(jexp as i32));
    let beta = beta_restricted(curve, &arcs, inflated.diam(), params.fit_tol);
    let (flat, nonflat) = almost_flat_split(curve, &arcs, params.eps2, beta.value);
    let beta_flat = beta_restricted(curve, &flat, inflated.diam(), params.fit_tol).value;
    let beta_tilde_gamma = beta_tilde(curve, &gamma);
    Some(InflationData {
        beta,
        gamma,
        flat,
        nonflat,
        beta_flat,
        beta_tilde_gamma,
    })
}

/// The top-level `G1/G2/G3` decision over inflations `j = 0, 1, 2`:
/// `G1` when some inflation has a non-flat central arc, else `G2` when
/// some inflation's flat arcs still carry the beta, else `G3`.
/// Zero-beta balls short-circuit to `G3`.
pub fn classify_g(
    curve: &Curve,
    ball: &Ball,
    params: &ClassifierParams,
) -> (TopFamily, Option<u8>, Option<InflationData>) {
    let data0 = match analyze_inflation(curve, ball, 0, params) {
        Some(d) => d,
        None => return (TopFamily::G3, None, None),
    };
    if data0.beta.value == 0.0 {
        return (TopFamily::G3, None, Some(data0));
    }
    let mut g2_j: Option<u8> = None;
    for jexp in 0..3u8 {
        let data = if jexp == 0 {
            None
        } else {
            analyze_inflation(curve, ball, jexp, params)
        };
        let d = data.as_ref().unwrap_or(&data0);
        if d.beta_tilde_gamma > params.eps2 * d.beta.value {
            return (TopFamily::G1, Some(jexp), Some(data0));
        }
        if g2_j.is_none() && d.beta_flat > params.eps1 * d.beta.value {
            g2_j = Some(jexp);
        }
    }
    match g2_j {
        Some(j) => (TopFamily::G2, Some(j), Some(data0)),
        None => (TopFamily::G3, None, Some(data0)),
    }
}

/// Clip points of the given arcs restricted to a core's member-ball
/// union: exact interval intersection, then endpoints plus interior
/// vertices.
fn clip_points_in_core(
    curve: &Curve,
    arcs: &[Subarc],
    triple_sys: &crate::cores::CoreSystem,
    core: &CoreSet,
) -> Vec<Point> {
    let core_iv = triple_sys.param_intervals(core, curve);
    let mut restricted = Vec::new();
    for arc in arcs {
        for &(a, b) in &core_iv {
            let lo = arc.a.max(a);
            let hi = arc.b.min(b);
            if hi > lo {
                restricted.push(Subarc { a: lo, b: hi });
            }
        }
    }
    arcs_clip_points(curve, &restricted)
}

fn arcs_overlap_core(
    curve: &Curve,
    arcs: &[Subarc],
    sys: &crate::cores::CoreSystem,
    core: &CoreSet,
) -> bool {
    let core_iv = sys.param_intervals(core, curve);
    arcs.iter().any(|arc| {
        core_iv
            .iter()
            .any(|&(a, b)| arc.b.min(b) > arc.a.max(a))
    })
}

/// The `G2` refinement `D1 / D2.1 / D2.2` for one ball.
fn classify_delta(
    curve: &Curve,
    ball: &Ball,
    data: &InflationData,
    triple: &CoreTriple,
    params: &ClassifierParams,
) -> Result<DeltaBranch, ClassifyError> {
    let core_x = triple.x.core(ball.scale, ball.index)?;
    let pts = clip_points_in_core(curve, &data.flat, &triple.x, core_x);
    let beta_s_ux = if pts.len() <= 2 {
        0.0
    } else {
        let fit = crate::beta::min_max_line(&pts, params.fit_tol);
        2.0 * fit.max_dist / core_x.diameter
    };
    if params.c_u * beta_s_ux > data.beta_flat {
        return Ok(DeltaBranch::D1);
    }
    if arcs_overlap_core(curve, &data.nonflat, &triple.x, core_x) {
        return Ok(DeltaBranch::D22);
    }
    Ok(DeltaBranch::D21)
}

/// One candidate witness for the deep split.
struct Witness {
    arc: Subarc,
    beta_joint: f64,
    pi_overlap: Option<(f64, f64)>,
}

fn witness_candidates(
    curve: &Curve,
    ball: &Ball,
    data: &InflationData,
    params: &ClassifierParams,
) -> Vec<Witness> {
    let gamma_range = gamma1_range(curve, data.gamma.a, data.gamma.b);
    let mut out: Vec<Witness> = data
        .flat
        .iter()
        .filter(|arc| **arc != data.gamma)
        .map(|arc| {
            let joint = [*arc, data.gamma];
            let beta_joint =
                beta_restricted(curve, &joint, ball.diam(), params.fit_tol).value;
            let r = gamma1_range(curve, arc.a, arc.b);
            let lo = r.0.max(gamma_range.0);
            let hi = r.1.min(gamma_range.1);
            Witness {
                arc: *arc,
                beta_joint,
                pi_overlap: (hi >= lo).then_some((lo, hi)),
            }
        })
        .collect();
    out.sort_by(|a, b| b.beta_joint.partial_cmp(&a.beta_joint).unwrap());
    out
}

/// Find the parameter within `arc` where `gamma1` equals `v` (smallest
/// such parameter, exact inversion through the monotone pieces).
fn param_in_arc_at_value(curve: &Curve, arc: &Subarc, v: f64) -> Option<f64> {
    let pieces = crate::measure::monotone_pieces(curve);
    let mut best: Option<f64> = None;
    for piece in &pieces {
        if piece.t_hi < arc.a || piece.t_lo > arc.b {
            continue;
        }
        if piece.kind == crate::measure::PieceKind::Constant {
            if piece.x_lo == v {
                let t = piece.t_lo.max(arc.a);
                best = Some(best.map_or(t, |b: f64| b.min(t)));
            }
            continue;
        }
        if v >= piece.value_min() && v <= piece.value_max() {
            let t = crate::measure::piece_param_at_value(curve, piece, v);
            if t >= arc.a - 1e-12 && t <= arc.b + 1e-12 {
                let t = t.clamp(arc.a, arc.b);
                best = Some(best.map_or(t, |b: f64| b.min(t)));
            }
        }
    }
    best
}

fn bend_containing(bends: &[Bend], t: f64) -> Option<usize> {
    bends
        .iter()
        .position(|b| b.t_lo - 1e-12 <= t && t <= b.t_hi + 1e-12)
}

/// Is every clip point of the arc inside the spherical cap `C_Q(eps)`?
fn arc_in_cap(curve: &Curve, ball: &Ball, arc: &Subarc, eps: f64) -> bool {
    let tube = eps * ball.diam();
    let cut = ball.radius * (1.0 - eps * eps).max(0.0).sqrt();
    curve.subarc_points(arc).iter().all(|p| {
        let d = p.sub(&ball.center);
        let perp: f64 = d[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
        perp <= tube + 1e-12 && d[0].abs() >= cut - 1e-12
    })
}

struct DeepPending {
    analysis_idx: usize,
    center_pi: f64,
    case_i: Option<usize>, // bend index
    psi: Option<Subarc>,
}

/// The deep classification of `D2.1`: tree measure test, then witness
/// cases with bend / connector-arc region assignments.
#[allow(clippy::too_many_arguments)]
fn classify_deep(
    curve: &Curve,
    analyses: &mut [BallAnalysis],
    d21: &[(usize, &Ball, InflationData)],
    triple: &CoreTriple,
    bend_list: &[Bend],
    mu_tilde_m: &DensityMeasure,
    params: &ClassifierParams,
) -> Result<Vec<Subarc>, ClassifyError> {
    // (a) tree test on root cores
    let keys: Vec<(i32, usize)> = d21.iter().map(|(_, b, _)| (b.scale, b.index)).collect();
    let forest = core_forest(&triple.base, &keys)?;
    let mut root_passes: BTreeMap<usize, bool> = BTreeMap::new();
    for &r in &forest.roots() {
        let (scale, index) = keys[r];
        let core = triple.base.core(scale, index)?;
        let len = triple.base.length_inside(core, curve);
        let mass = triple.base.measure_inside(core, curve, mu_tilde_m);
        root_passes.insert(
            r,
            mass >= params.c_small * params.eps3 * params.eps3 * len,
        );
    }

    let mut pendings: Vec<DeepPending> = Vec::new();
    for (pos, (ai, ball, data)) in d21.iter().enumerate() {
        if root_passes[&forest.root[pos]] {
            analyses[*ai].label.delta = Some(DeltaBranch::D21);
            analyses[*ai].label.deep = Some(DeepLabel::D211);
            continue;
        }
        analyses[*ai].label.delta = Some(DeltaBranch::D21);
        // (b) witness search over the almost-flat arcs
        let cands = witness_candidates(curve, ball, data, params);
        let threshold = 0.5 * data.beta_flat;
        let passing: Vec<&Witness> = cands
            .iter()
            .filter(|w| w.beta_joint > threshold)
            .collect();
        if passing.is_empty() {
            analyses[*ai]
                .diagnostics
                .push("no-witness-above-half-beta".into());
        }
        let case_i = passing.iter().find(|w| w.pi_overlap.is_some());
        if let Some(w) = case_i {
            let (lo, hi) = w.pi_overlap.unwrap();
            let v = 0.5 * (lo + hi);
            let x1 = param_in_arc_at_value(curve, &data.gamma, v);
            let x2 = param_in_arc_at_value(curve, &w.arc, v);
            let bend_idx = match (x1, x2) {
                (Some(t1), Some(t2)) => {
                    let b1 = bend_containing(bend_list, t1);
                    let b2 = bend_containing(bend_list, t2);
                    if b1.is_some() && b1 == b2 {
                        b1
                    } else {
                        analyses[*ai]
                            .diagnostics
                            .push("equal-projection-pair-not-in-one-bend".into());
                        b1.or(b2)
                    }
                }
                _ => {
                    analyses[*ai]
                        .diagnostics
                        .push("projection-inversion-missed-overlap-value".into());
                    None
                }
            };
            pendings.push(DeepPending {
                analysis_idx: *ai,
                center_pi: ball.center.0[0],
                case_i: bend_idx.or(Some(usize::MAX)),
                psi: None,
            });
            continue;
        }
        // case (ii): the best witness, expected inside the spherical cap
        let zeta = passing.first().map(|w| w.arc).or_else(|| {
            cands.first().map(|w| w.arc)
        });
        match zeta {
            None => {
                analyses[*ai]
                    .diagnostics
                    .push("no-candidate-arc-for-case-ii".into());
                pendings.push(DeepPending {
                    analysis_idx: *ai,
                    center_pi: ball.center.0[0],
                    case_i: None,
                    psi: None,
                });
            }
            Some(z) => {
                if !arc_in_cap(curve, ball, &z, 4.0 * params.eps3) {
                    analyses[*ai]
                        .diagnostics
                        .push("case-ii-witness-outside-cap".into());
                }
                let psi = if z.a >= data.gamma.b {
                    Subarc {
                        a: data.gamma.b,
                        b: z.b,
                    }
                } else if z.b <= data.gamma.a {
                    Subarc {
                        a: z.a,
                        b: data.gamma.a,
                    }
                } else {
                    // interleaved components cannot happen for maximal
                    // arcs; take the enclosing hull defensively
                    Subarc {
                        a: z.a.min(data.gamma.a),
                        b: z.b.max(data.gamma.b),
                    }
                };
                pendings.push(DeepPending {
                    analysis_idx: *ai,
                    center_pi: ball.center.0[0],
                    case_i: None,
                    psi: Some(psi),
                });
            }
        }
    }

    // merge the case-(ii) connectors into the disjoint family D
    let mut d_arcs: Vec<Subarc> = Vec::new();
    {
        let mut intervals: Vec<(f64, f64)> = pendings
            .iter()
            .filter_map(|p| p.psi.map(|s| (s.a, s.b)))
            .collect();
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (a, b) in intervals {
            match d_arcs.last_mut() {
                Some(last) if a <= last.b => last.b = last.b.max(b),
                _ => d_arcs.push(Subarc { a, b }),
            }
        }
    }

    // final labels with close/far splits
    for p in &pendings {
        let ai = p.analysis_idx;
        let center_pi = p.center_pi;
        match p.case_i {
            Some(bend_idx) if bend_idx != usize::MAX => {
                let b = &bend_list[bend_idx];
                let dist = if center_pi < b.pi_lo {
                    b.pi_lo - center_pi
                } else if center_pi > b.pi_hi {
                    center_pi - b.pi_hi
                } else {
                    0.0
                };
                let close = dist <= 100.0 * b.length;
                analyses[ai].label.deep = Some(if close {
                    DeepLabel::D212IClose
                } else {
                    DeepLabel::D212IFar
                });
                analyses[ai].label.region = Some(RegionRef::Bend(bend_idx));
            }
            Some(_) => {
                // equal-projection pair found but no bend located: report
                // under the close family with the diagnostic already set
                analyses[ai].label.deep = Some(DeepLabel::D212IClose);
            }
            None => match p.psi {
                Some(psi) => {
                    let d_idx = d_arcs
                        .iter()
                        .position(|d| d.a <= psi.a && psi.b <= d.b)
                        .unwrap_or(0);
                    let d = &d_arcs[d_idx];
                    let (pi_lo, pi_hi) = gamma1_range(curve, d.a, d.b);
                    let dlen = d.b - d.a;
                    let dist = if center_pi < pi_lo {
                        pi_lo - center_pi
                    } else if center_pi > pi_hi {
                        center_pi - pi_hi
                    } else {
                        0.0
                    };
                    let close = dist <= 100.0 * dlen;
                    analyses[ai].label.deep = Some(if close {
                        DeepLabel::D212IiClose
                    } else {
                        DeepLabel::D212IiFar
                    });
                    analyses[ai].label.region = Some(RegionRef::DArc(d_idx));
                }
                None => {
                    analyses[ai].label.deep = Some(DeepLabel::D212IiClose);
                }
            },
        }
    }
    Ok(d_arcs)
}

/// Classify every ball of the family. The curve is expected in normalized
/// position (chord along the first axis) so the measures mean what the
/// labels assume.
pub fn classify(
    curve: &Curve,
    nets: &NetHierarchy,
    balls: &[Ball],
    params: &ClassifierParams,
) -> Result<Classification, ClassifyError> {
    params.validate()?;
    let triple = build_core_triple(nets, params.inflation, params.j_families)?;
    let bend_list = bends(curve);
    let mu_m = mu_measure(curve);
    let mu_tilde_m = mu_tilde(curve, &bend_list);

    // stage 1+2: independent per-ball work, deterministic order restored
    // by indexed collection
    let stage: Vec<(BallAnalysis, Option<InflationData>)> = map_balls(balls, |ball| {
        let beta = beta_ball(curve, ball, params.fit_tol).ok();
        let n_arcs = curve.maximal_subarcs(&ball.center, ball.radius).len();
        let (label, winning_j, data, n_flat) = if is_large(curve, ball) {
            (FamilyLabel::top(TopFamily::GL), None, None, 0)
        } else {
            let (top, j, data) = classify_g(curve, ball, params);
            let n_flat = data.as_ref().map_or(0, |d| d.flat.len());
            (FamilyLabel::top(top), j, data, n_flat)
        };
        let beta_val = beta.as_ref().map_or(0.0, |b| b.value);
        let analysis = BallAnalysis {
            scale: ball.scale,
            index: ball.index,
            radius: ball.radius,
            beta: beta_val,
            beta_method: beta
                .as_ref()
                .map_or(crate::beta::FitMethod::Exact2d, |b| b.fit.method),
            certified_gap: beta.as_ref().map_or(0.0, |b| b.fit.certified_gap),
            n_arcs,
            n_flat_arcs: n_flat,
            label,
            winning_j,
            contribution: beta_val * beta_val * ball.diam(),
            diagnostics: Vec::new(),
        };
        (analysis, data)
    });

    let mut analyses: Vec<BallAnalysis> = Vec::with_capacity(stage.len());
    let mut g2: Vec<(usize, &Ball, InflationData)> = Vec::new();
    for (i, (analysis, data)) in stage.into_iter().enumerate() {
        if analysis.label.top == TopFamily::G2 {
            g2.push((i, &balls[i], data.expect("G2 carries inflation data")));
        }
        analyses.push(analysis);
    }

    // stage 3: G2 -> D1 / D2.1 / D2.2
    let mut d21: Vec<(usize, &Ball, InflationData)> = Vec::new();
    for (i, ball, data) in g2 {
        let branch = classify_delta(curve, ball, &data, &triple, params)?;
        analyses[i].label.delta = Some(branch);
        if branch == DeltaBranch::D21 {
            d21.push((i, ball, data));
        }
    }

    // stage 4: the deep split
    let d_arcs = classify_deep(
        curve,
        &mut analyses,
        &d21,
        &triple,
        &bend_list,
        &mu_tilde_m,
        params,
    )?;

    let mu_star_total = if d_arcs.is_empty() {
        None
    } else {
        Some(augment_with_arcs(curve, &d_arcs)?.total())
    };

    Ok(Classification {
        analyses,
        bends: bend_list,
        d_arcs,
        mu_total: mu_m.total(),
        mu_tilde_total: mu_tilde_m.total(),
        mu_star_total,
        core_warnings: triple
            .base
            .warnings
            .iter()
            .chain(&triple.x.warnings)
            .chain(&triple.xx.warnings)
            .cloned()
            .collect(),
    })
}

#[cfg(feature = "parallel")]
fn map_balls<T: Send>(balls: &[Ball], f: impl Fn(&Ball) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    balls.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_balls<T>(balls: &[Ball], f: impl Fn(&Ball) -> T) -> Vec<T> {
    balls.iter().map(f).collect()
}

// ---------------------------------------------------------------------------
// Family sums and diagnostics
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub region: RegionRef,
    /// side of the region along the chord: -1 below, +1 above
    pub side: i8,
    pub n_balls: usize,
    pub strictly_increasing: bool,
    /// smallest consecutive diameter ratio minus one, when >= 2 balls
    pub min_growth: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilySums {
    /// (leaf, beta^2-diam sum, ball count), fixed order
    pub per_leaf: Vec<(Leaf, f64, usize)>,
    /// sum of the leaf sums in the fixed order — the reported total
    pub total: f64,
    /// straight Kahan total over all balls in (scale, index) order; agrees
    /// with `total` to roundoff and serves as the cross-check
    pub direct_total: f64,
    /// per-(M, K) ball counts of the D1 slices
    pub d1_slices: BTreeMap<(u32, u32), usize>,
    pub growth: Vec<GrowthReport>,
    /// pairs of D2.1.2 balls whose half-core projections overlap
    pub projection_violations: usize,
    /// per-leaf max over balls of contribution/deficit would be unstable;
    /// instead report each leaf's share of the total
    pub gl_scale_split: (usize, usize),
}

/// Projection interval of a region reference.
fn region_pi_range(curve: &Curve, cls: &Classification, region: RegionRef) -> (f64, f64) {
    match region {
        RegionRef::Bend(i) => (cls.bends[i].pi_lo, cls.bends[i].pi_hi),
        RegionRef::DArc(i) => gamma1_range(curve, cls.d_arcs[i].a, cls.d_arcs[i].b),
    }
}

/// Ordered far-ball diameter growth within one region/side group:
/// the geometric-growth diagnostic.
pub fn growth_report(region: RegionRef, side: i8, members: &mut Vec<(f64, f64)>) -> GrowthReport {
    // members: (center projection, diameter); order outward from the
    // region along the chord
    members.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if side < 0 {
        members.reverse();
    }
    let diams: Vec<f64> = members.iter().map(|(_, d)| *d).collect();
    let strictly_increasing = diams.windows(2).all(|w| w[1] > w[0]);
    let min_growth = (diams.len() >= 2).then(|| {
        diams
            .windows(2)
            .map(|w| w[1] / w[0] - 1.0)
            .fold(f64::INFINITY, f64::min)
    });
    GrowthReport {
        region,
        side,
        n_balls: diams.len(),
        strictly_increasing,
        min_growth,
    }
}

/// Deterministic per-family reduction plus the growth and slice
/// diagnostics.
pub fn family_sums(
    curve: &Curve,
    nets: &NetHierarchy,
    cls: &Classification,
    params: &ClassifierParams,
) -> Result<FamilySums, ClassifyError> {
    let analyses = &cls.analyses;
    let mut sums: BTreeMap<Leaf, (KahanSum, usize)> = BTreeMap::new();
    for leaf in LEAVES {
        sums.insert(leaf, (KahanSum::new(), 0));
    }
    let mut direct = KahanSum::new();
    for a in analyses {
        let entry = sums.get_mut(&a.label.leaf()).unwrap();
        entry.0.add(a.contribution);
        entry.1 += 1;
        direct.add(a.contribution);
    }
    let per_leaf: Vec<(Leaf, f64, usize)> = LEAVES
        .iter()
        .map(|l| (*l, sums[l].0.value(), sums[l].1))
        .collect();
    let total = per_leaf.iter().map(|(_, s, _)| *s).sum();

    // D1 slices: beta of the full core restriction classifies M, the
    // radius residue classifies K
    let triple = build_core_triple(nets, params.inflation, params.j_families)?;
    let mut d1_slices: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for a in analyses {
        if a.label.leaf() != Leaf::D1 {
            continue;
        }
        let core_x = triple.x.core(a.scale, a.index)?;
        let iv = triple.x.param_intervals(core_x, curve);
        let arcs: Vec<Subarc> = iv.iter().map(|&(x, y)| Subarc { a: x, b: y }).collect();
        let beta_ux = beta_restricted(curve, &arcs, core_x.diameter, params.fit_tol).value;
        if beta_ux <= 0.0 {
            continue;
        }
        let m = (-beta_ux.log2()).ceil().max(0.0) as u32;
        let mj = (m as i64 * params.j_families as i64).max(1);
        let k = ((-(a.scale as i64) - 1).rem_euclid(mj) + 1) as u32;
        *d1_slices.entry((m, k)).or_default() += 1;
    }

    // far-ball growth per assigned region and side
    let mut groups: BTreeMap<(u8, usize, i8), Vec<(f64, f64)>> = BTreeMap::new();
    for a in analyses {
        let far = matches!(
            a.label.deep,
            Some(DeepLabel::D212IFar) | Some(DeepLabel::D212IiFar)
        );
        if !far {
            continue;
        }
        if let Some(region) = a.label.region {
            let center_pi = nets
                .level(a.scale)
                .and_then(|l| l.get(a.index))
                .expect("analysis references a net point")
                .point
                .0[0];
            let (kind, idx) = match region {
                RegionRef::Bend(i) => (0u8, i),
                RegionRef::DArc(i) => (1u8, i),
            };
            let (pi_lo, pi_hi) = region_pi_range(curve, cls, region);
            let side = if center_pi < pi_lo {
                -1
            } else if center_pi > pi_hi {
                1
            } else {
                continue; // a far ball projects outside its region window
            };
            groups
                .entry((kind, idx, side))
                .or_default()
                .push((center_pi, 2.0 * a.radius));
        }
    }
    let growth = groups
        .into_iter()
        .map(|((kind, idx, side), mut members)| {
            let region = if kind == 0 {
                RegionRef::Bend(idx)
            } else {
                RegionRef::DArc(idx)
            };
            growth_report(region, side, &mut members)
        })
        .collect();

    // (4.2): half-core projections of D2.1.2 balls pairwise disjoint
    let d212: Vec<&BallAnalysis> = analyses
        .iter()
        .filter(|a| {
            matches!(
                a.label.deep,
                Some(DeepLabel::D212IClose)
                    | Some(DeepLabel::D212IFar)
                    | Some(DeepLabel::D212IiClose)
                    | Some(DeepLabel::D212IiFar)
            )
        })
        .collect();
    let mut projection_violations = 0usize;
    for i in 0..d212.len() {
        for j in i + 1..d212.len() {
            let ci = triple.base.core(d212[i].scale, d212[i].index)?;
            let cj = triple.base.core(d212[j].scale, d212[j].index)?;
            let pi_i = triple.base.half_projection_intervals(ci);
            let pi_j = triple.base.half_projection_intervals(cj);
            let overlap = pi_i
                .iter()
                .any(|&(a, b)| pi_j.iter().any(|&(c, d)| b.min(d) > a.max(c)));
            if overlap {
                projection_violations += 1;
            }
        }
    }

    let gl_split = analyses
        .iter()
        .filter(|a| a.label.leaf() == Leaf::GL)
        .fold((0usize, 0usize), |(small, big), a| {
            if 2.0 * a.radius > 8.0 * params.inflation {
                (small, big + 1)
            } else {
                (small + 1, big)
            }
        });

    Ok(FamilySums {
        per_leaf,
        total,
        direct_total: direct.value(),
        d1_slices,
        growth,
        projection_violations,
        gl_scale_split: gl_split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_nets, multiresolution_family};
    use crate::shapes::{generate, ShapeSpec};

    fn analyze_curve(
        curve: &Curve,
        n0: i32,
        n_max: i32,
        params: &ClassifierParams,
    ) -> (Classification, Vec<Ball>, NetHierarchy) {
        let spacing = (2.0_f64).powi(-n_max) / 8.0;
        let nets = build_nets(curve, n0, n_max, spacing).unwrap();
        let balls = multiresolution_family(&nets, params.inflation).unwrap();
        let cls = classify(curve, &nets, &balls, params).unwrap();
        (cls, balls, nets)
    }

    #[test]
    fn params_validation() {
        assert!(ClassifierParams::default().validate().is_ok());
        let mut p = ClassifierParams::default();
        p.eps3 = 0.05; // 0.0025 >= 0.00025
        assert!(p.validate().is_err());
        let mut p = ClassifierParams::default();
        p.eps2 = 0.5;
        p.eps1 = 0.4;
        assert!(p.validate().is_err());
    }

    #[test]
    fn straight_segment_is_all_gl_or_g3_with_zero_sums() {
        let c = generate(&ShapeSpec::Segment, 0).unwrap();
        let (norm, _) = c.normalize().unwrap();
        let params = ClassifierParams::default();
        let (cls, _, nets) = analyze_curve(&norm, 2, 6, &params);
        for a in &cls.analyses {
            assert!(a.beta < 1e-12);
            assert!(matches!(a.label.top, TopFamily::GL | TopFamily::G3));
        }
        let sums = family_sums(&norm, &nets, &cls, &params).unwrap();
        assert!(sums.total < 1e-20);
        assert_eq!(sums.total, sums.direct_total);
    }

    #[test]
    fn vshape_apex_balls_are_g1() {
        let c = generate(&ShapeSpec::VShape { height: 0.3 }, 0).unwrap();
        let (norm, _) = c.normalize().unwrap();
        let params = ClassifierParams::default();
        let (cls, balls, _) = analyze_curve(&norm, 2, 7, &params);
        // find a small ball whose center is nearest the apex
        let apex_t = norm.total_len() / 2.0;
        let mut best: Option<(f64, usize)> = None;
        for (i, b) in balls.iter().enumerate() {
            if b.scale >= 5 {
                let d = (b.center_param - apex_t).abs();
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
        }
        let (_, idx) = best.unwrap();
        assert_eq!(cls.analyses[idx].label.top, TopFamily::G1);
        // every ball gets exactly one leaf and the partition sums agree
        for a in &cls.analyses {
            match a.label.top {
                TopFamily::G2 => assert!(a.label.delta.is_some()),
                _ => assert!(a.label.delta.is_none()),
            }
        }
    }

    #[test]
    fn gl_example_inflation_covers_curve() {
        // unit-diameter curve, ball radius 1: 4Q has radius 4 and covers
        let c = generate(&ShapeSpec::VShape { height: 0.3 }, 0).unwrap();
        let ball = Ball {
            scale: 0,
            index: 0,
            center: Point(vec![0.5, 0.15]),
            center_param: 0.0,
            radius: 1.0,
        };
        assert!(is_large(&c, &ball));
        let tiny = Ball {
            radius: 0.01,
            ..ball.clone()
        };
        assert!(!is_large(&c, &tiny));
    }

    #[test]
    fn gamma_q_nesting_over_inflations() {
        let c = generate(&ShapeSpec::Hook { depth: 0.2, overlap: 0.5 }, 0).unwrap();
        let nets = build_nets(&c, 2, 6, (2.0_f64).powi(-6) / 8.0).unwrap();
        let balls = multiresolution_family(&nets, 8.0).unwrap();
        for b in balls.iter().take(200) {
            let g0 = gamma_q(&c, b, 0).unwrap().0;
            let g1 = gamma_q(&c, b, 1).unwrap().0;
            let g2 = gamma_q(&c, b, 2).unwrap().0;
            assert!(g1.a <= g0.a + 1e-12 && g0.b <= g1.b + 1e-12);
            assert!(g2.a <= g1.a + 1e-12 && g1.b <= g2.b + 1e-12);
        }
    }

    #[test]
    fn two_parallel_strands_make_g2() {
        // an S-shaped waist: two long parallel chords through a ball, each
        // almost flat, carrying the beta jointly
        let c = Curve::new(vec![
            Point(vec![-4.0, 0.05]),
            Point(vec![4.0, 0.05]),
            Point(vec![4.4, 3.0]),
            Point(vec![-4.0, 3.3]),
            Point(vec![-4.4, -0.05 + 3.0]),
            Point(vec![-4.2, -0.05]),
            Point(vec![4.0, -0.05]),
        ])
        .unwrap();
        let params = ClassifierParams::default();
        let ball = Ball {
            scale: 3,
            index: 0,
            center: Point(vec![0.0, 0.05]),
            center_param: 4.0,
            radius: 1.0,
        };
        let (top, _, _) = classify_g(&c, &ball, &params);
        assert_eq!(top, TopFamily::G2);
    }
}
