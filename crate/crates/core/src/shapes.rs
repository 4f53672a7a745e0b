//! Curve generators for experiments and tests. Every generator yields a
//! polygonal Jordan arc; the planar ones are simple by construction and
//! re-checked with the exact pairwise sweep.

use crate::curve::{Curve, CurveError};
use crate::geom::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("unknown shape spec '{0}' (expected name(args,..))")]
    Unknown(String),
    #[error("parameter out of range: {0}")]
    BadParameter(String),
    #[error("random walk rejection sampling failed after {0} attempts at step {1}")]
    RejectionFailure(usize, usize),
    #[error("generated curve invalid: {0}")]
    Invalid(#[from] CurveError),
    #[error("generated curve is self-intersecting")]
    NotSimple,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ShapeSpec {
    Segment,
    VShape { height: f64 },
    CircularArc { sagitta: f64, n_seg: usize },
    Hook { depth: f64, overlap: f64 },
    Koch { angle_deg: f64, depth: usize },
    RandomWalk { step: f64, n: usize, smoothing: f64 },
    Helix3d { pitch: f64, turns: f64, n_seg: usize },
}

impl ShapeSpec {
    /// Parse `name(arg, ..)` forms: `segment`, `vshape(0.3)`,
    /// `circular_arc(0.125, 512)`, `hook(0.2, 0.5)`, `koch(30, 4)`,
    /// `random_walk(0.05, 100, 0.5)`, `helix3d(0.5, 3, 256)`.
    pub fn parse(s: &str) -> Result<Self, ShapeError> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => {
                let args: Vec<f64> = s[i + 1..s.len() - 1]
                    .split(',')
                    .filter(|a| !a.trim().is_empty())
                    .map(|a| a.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| ShapeError::Unknown(s.to_string()))?;
                (&s[..i], args)
            }
            None => (s, Vec::new()),
            _ => return Err(ShapeError::Unknown(s.to_string())),
        };
        let get = |i: usize, default: f64| args.get(i).copied().unwrap_or(default);
        match name {
            "segment" => Ok(ShapeSpec::Segment),
            "vshape" => Ok(ShapeSpec::VShape {
                height: get(0, 0.3),
            }),
            "circular_arc" => Ok(ShapeSpec::CircularArc {
                sagitta: get(0, 0.125),
                n_seg: get(1, 512.0) as usize,
            }),
            "hook" => Ok(ShapeSpec::Hook {
                depth: get(0, 0.2),
                overlap: get(1, 0.5),
            }),
            "koch" => Ok(ShapeSpec::Koch {
                angle_deg: get(0, 30.0),
                depth: get(1, 3.0) as usize,
            }),
            "random_walk" => Ok(ShapeSpec::RandomWalk {
                step: get(0, 0.05),
                n: get(1, 60.0) as usize,
                smoothing: get(2, 0.5),
            }),
            "helix3d" => Ok(ShapeSpec::Helix3d {
                pitch: get(0, 0.5),
                turns: get(1, 2.0),
                n_seg: get(2, 256.0) as usize,
            }),
            _ => Err(ShapeError::Unknown(s.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShapeSpec::Segment => "segment",
            ShapeSpec::VShape { .. } => "vshape",
            ShapeSpec::CircularArc { .. } => "circular_arc",
            ShapeSpec::Hook { .. } => "hook",
            ShapeSpec::Koch { .. } => "koch",
            ShapeSpec::RandomWalk { .. } => "random_walk",
            ShapeSpec::Helix3d { .. } => "helix3d",
        }
    }
}

fn p2(x: f64, y: f64) -> Point {
    Point(vec![x, y])
}

/// Circular arc over the unit chord with the given sagitta, as an
/// inscribed polygon (vertices on the circle).
fn circular_arc(sagitta: f64, n_seg: usize) -> Result<Vec<Point>, ShapeError> {
    if sagitta <= 0.0 || sagitta > 10.0 {
        return Err(ShapeError::BadParameter(format!("sagitta {sagitta}")));
    }
    if n_seg < 2 {
        return Err(ShapeError::BadParameter(format!("n_seg {n_seg}")));
    }
    let r = (sagitta * sagitta + 0.25) / (2.0 * sagitta);
    let center = p2(0.5, sagitta - r);
    let mut phi0 = (r - sagitta).atan2(-0.5) + if sagitta > 0.5 { 2.0 * PI } else { 0.0 };
    let phi1 = (r - sagitta).atan2(0.5);
    if phi0 < phi1 {
        phi0 += 2.0 * PI;
    }
    let mut pts = Vec::with_capacity(n_seg + 1);
    for k in 0..=n_seg {
        let phi = phi0 + (phi1 - phi0) * k as f64 / n_seg as f64;
        pts.push(p2(center.0[0] + r * phi.cos(), center.0[1] + r * phi.sin()));
    }
    pts[0] = p2(0.0, 0.0);
    *pts.last_mut().unwrap() = p2(1.0, 0.0);
    Ok(pts)
}

fn koch(angle_deg: f64, depth: usize) -> Result<Vec<Point>, ShapeError> {
    if !(0.0..90.0).contains(&angle_deg) {
        return Err(ShapeError::BadParameter(format!(
            "koch angle {angle_deg} must be in [0, 90)"
        )));
    }
    if depth > 7 {
        return Err(ShapeError::BadParameter(format!("koch depth {depth} > 7")));
    }
    let theta = angle_deg.to_radians();
    let s = 1.0 / (2.0 * (1.0 + theta.cos()));
    fn recurse(a: [f64; 2], b: [f64; 2], depth: usize, s: f64, theta: f64, out: &mut Vec<Point>) {
        if depth == 0 {
            out.push(Point(vec![b[0], b[1]]));
            return;
        }
        let d = [b[0] - a[0], b[1] - a[1]];
        let p1 = [a[0] + s * d[0], a[1] + s * d[1]];
        let p3 = [b[0] - s * d[0], b[1] - s * d[1]];
        // apex: rotate the sub-segment direction by theta
        let (c, sn) = (theta.cos(), theta.sin());
        let apex = [
            p1[0] + s * (c * d[0] - sn * d[1]),
            p1[1] + s * (sn * d[0] + c * d[1]),
        ];
        recurse(a, p1, depth - 1, s, theta, out);
        recurse(p1, apex, depth - 1, s, theta, out);
        recurse(apex, p3, depth - 1, s, theta, out);
        recurse(p3, b, depth - 1, s, theta, out);
    }
    let mut out = vec![p2(0.0, 0.0)];
    if depth == 0 || angle_deg == 0.0 {
        out.push(p2(1.0, 0.0));
    } else {
        recurse([0.0, 0.0], [1.0, 0.0], depth, s, theta, &mut out);
    }
    Ok(out)
}

fn random_walk(
    step: f64,
    n: usize,
    smoothing: f64,
    seed: u64,
) -> Result<Vec<Point>, ShapeError> {
    if step <= 0.0 || n < 1 || !(0.0..1.0).contains(&smoothing) {
        return Err(ShapeError::BadParameter(format!(
            "random_walk({step}, {n}, {smoothing})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_turn = (1.0 - smoothing) * PI * 0.9;
    let mut pts = vec![p2(0.0, 0.0)];
    let mut heading = 0.0_f64;
    let crosses = |pts: &[Point], cand: &Point| -> bool {
        let last = pts.last().unwrap();
        // skip the adjacent segment; it shares the endpoint
        for w in pts.windows(2).rev().skip(1) {
            if crate::geom::segments_intersect_2d(&w[0], &w[1], last, cand) {
                return true;
            }
        }
        false
    };
    for k in 0..n {
        let mut placed = false;
        for attempt in 0..300 {
            // shrink around the heading first; after 60 failures draw
            // anywhere short of a full reversal to escape traps
            let cand_heading = if attempt < 60 {
                let spread = max_turn / (1.0 + attempt as f64 / 10.0);
                heading + rng.gen_range(-spread..=spread)
            } else {
                heading + rng.gen_range(-0.95 * PI..=0.95 * PI)
            };
            let last = pts.last().unwrap();
            let cand = p2(
                last.0[0] + step * cand_heading.cos(),
                last.0[1] + step * cand_heading.sin(),
            );
            if !crosses(&pts, &cand) {
                pts.push(cand);
                heading = cand_heading;
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(ShapeError::RejectionFailure(300, k));
        }
    }
    Ok(pts)
}

fn helix3d(pitch: f64, turns: f64, n_seg: usize) -> Result<Vec<Point>, ShapeError> {
    if pitch <= 0.0 || turns <= 0.0 || n_seg < 2 {
        return Err(ShapeError::BadParameter(format!(
            "helix3d({pitch}, {turns}, {n_seg})"
        )));
    }
    Ok((0..=n_seg)
        .map(|k| {
            let phi = 2.0 * PI * turns * k as f64 / n_seg as f64;
            Point(vec![phi.cos(), phi.sin(), pitch * phi / (2.0 * PI)])
        })
        .collect())
}

/// Generate a curve; planar shapes are verified simple.
pub fn generate(spec: &ShapeSpec, seed: u64) -> Result<Curve, ShapeError> {
    let vertices = match spec {
        ShapeSpec::Segment => vec![p2(0.0, 0.0), p2(1.0, 0.0)],
        ShapeSpec::VShape { height } => {
            if *height <= 0.0 {
                return Err(ShapeError::BadParameter(format!("vshape height {height}")));
            }
            vec![p2(0.0, 0.0), p2(0.5, *height), p2(1.0, 0.0)]
        }
        ShapeSpec::CircularArc { sagitta, n_seg } => circular_arc(*sagitta, *n_seg)?,
        ShapeSpec::Hook { depth, overlap } => {
            if *depth <= 0.0 || !(0.0..1.0).contains(overlap) {
                return Err(ShapeError::BadParameter(format!(
                    "hook({depth}, {overlap})"
                )));
            }
            vec![
                p2(0.0, 0.0),
                p2(1.0, 0.0),
                p2(1.0 - overlap, *depth),
                p2(2.0 - overlap, *depth),
            ]
        }
        ShapeSpec::Koch { angle_deg, depth } => koch(*angle_deg, *depth)?,
        ShapeSpec::RandomWalk { step, n, smoothing } => random_walk(*step, *n, *smoothing, seed)?,
        ShapeSpec::Helix3d {
            pitch,
            turns,
            n_seg,
        } => helix3d(*pitch, *turns, *n_seg)?,
    };
    let curve = Curve::new(vertices)?;
    if curve.dim() == 2 && !curve.is_simple_2d() {
        return Err(ShapeError::NotSimple);
    }
    Ok(curve)
}

/// The fixed shapes every suite run exercises.
pub fn builtin_suite() -> Vec<(String, Curve)> {
    [
        "segment",
        "vshape(0.3)",
        "circular_arc(0.125, 256)",
        "hook(0.2, 0.5)",
        "koch(30, 3)",
    ]
    .iter()
    .map(|s| {
        (
            s.to_string(),
            generate(&ShapeSpec::parse(s).unwrap(), 0).unwrap(),
        )
    })
    .collect()
}
