//! The invariant suite: every checkable relation from the modules, run
//! over the built-in shapes plus seeded random curves, producing a
//! machine-readable ledger. Failures are data, not panics.

use crate::beta::{beta_ball, beta_restricted, beta_tilde, min_max_line, min_max_line_sampled, width_oracle_2d};
use crate::classify::{classify, ClassifierParams, TopFamily};
use crate::cores::build_core_system;
use crate::curve::Curve;
use crate::geom::Point;
use crate::measure::{bends, mu, mu_measure, mu_tilde, rho};
use crate::net::NetHierarchy;
use crate::pipeline::{beta_sum_per_scale, run_ratio_experiment, ExperimentConfig, NetParams};
use crate::shapes::{builtin_suite, generate, ShapeSpec};
use crate::voronoi::voronoi_cells;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct InvariantRecord {
    pub name: String,
    pub curve: String,
    pub pass: bool,
    pub checks: usize,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Ledger {
    pub records: Vec<InvariantRecord>,
}

impl Ledger {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    fn push(&mut self, name: &str, curve: &str, pass: bool, checks: usize, detail: String) {
        self.records.push(InvariantRecord {
            name: name.to_string(),
            curve: curve.to_string(),
            pass,
            checks,
            detail,
        });
    }

    pub fn summary_lines(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| {
                format!(
                    "[{}] {} on {} ({} checks){}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.curve,
                    r.checks,
                    if r.detail.is_empty() {
                        String::new()
                    } else {
                        format!(" — {}", r.detail)
                    }
                )
            })
            .collect()
    }
}

/// Net axioms on a built hierarchy; exposed so fault-injection tests can
/// corrupt a net and watch the check fail with the violating pair.
pub fn check_net_axioms(curve: &Curve, nets: &NetHierarchy) -> Result<usize, String> {
    let mut checks = 0;
    let samples: Vec<Point> = curve
        .dense_params(nets.sample_spacing)
        .iter()
        .map(|&t| curve.point_at_clamped(t))
        .collect();
    for n in nets.scales() {
        let eps = (2.0_f64).powi(-n);
        let pts = nets.level(n).unwrap();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                checks += 1;
                let d = pts[i].point.dist(&pts[j].point);
                if d <= eps {
                    return Err(format!(
                        "separation violated at n={n}: points {i} and {j} at distance {d} <= {eps}"
                    ));
                }
            }
        }
        for (si, s) in samples.iter().enumerate() {
            checks += 1;
            let dmin = pts
                .iter()
                .map(|p| p.point.dist(s))
                .fold(f64::INFINITY, f64::min);
            if dmin > eps {
                return Err(format!(
                    "covering violated at n={n}: sample {si} at distance {dmin} > {eps}"
                ));
            }
        }
        if (pts.len() as f64) > curve.total_len() / eps + 1.0 {
            return Err(format!(
                "cardinality bound violated at n={n}: {} > l/eps + 1",
                pts.len()
            ));
        }
        if n < nets.n_max {
            let next = nets.level(n + 1).unwrap();
            for p in pts {
                checks += 1;
                if !next.iter().any(|q| q.t == p.t && q.point == p.point) {
                    return Err(format!("nesting violated: level {n} point t={} missing", p.t));
                }
            }
        }
    }
    Ok(checks)
}

fn random_curves(count: usize, seed: u64) -> Vec<(String, Curve)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.gen_range(12..40);
            let step = rng.gen_range(0.02..0.08);
            let smoothing = rng.gen_range(0.3..0.8);
            let s = ShapeSpec::RandomWalk {
                step,
                n,
                smoothing,
            };
            let c = generate(&s, seed.wrapping_add(i as u64)).expect("walk generation");
            (format!("random_walk#{i}"), c)
        })
        .collect()
}

/// Measure of `mu-tilde` along the straight segment joining two curve
/// points, under the same projection windows (the segment itself is not
/// part of the curve, so it meets windows but not bends).
fn segment_mu_tilde_ratio(curve: &Curve, t1: f64, t2: f64) -> Option<f64> {
    let x = curve.point_at_clamped(t1);
    let y = curve.point_at_clamped(t2);
    let len = x.dist(&y);
    if len <= 0.0 {
        return None;
    }
    let (pi_x, pi_y) = (x.0[0], y.0[0]);
    if pi_y <= pi_x {
        return None;
    }
    let rho_seg = 1.0 - (pi_y - pi_x) / len;
    let windows: Vec<(f64, f64)> = bends(curve)
        .iter()
        .map(|b| (b.pi_lo - 100.0 * b.length, b.pi_hi + 100.0 * b.length))
        .collect();
    // measure of the pi-interval [pi_x, pi_y] covered by windows
    let mut covered = 0.0;
    let mut merged: Vec<(f64, f64)> = Vec::new();
    {
        let mut ws = windows;
        ws.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in ws {
            match merged.last_mut() {
                Some(last) if w.0 <= last.1 => last.1 = last.1.max(w.1),
                _ => merged.push(w),
            }
        }
    }
    for (a, b) in merged {
        let lo = a.max(pi_x);
        let hi = b.min(pi_y);
        if hi > lo {
            covered += hi - lo;
        }
    }
    // the segment's parameterization is linear in pi
    let frac_window = covered / (pi_y - pi_x);
    let density = frac_window * rho_seg.max(1.0) + (1.0 - frac_window) * rho_seg;
    Some(density)
}

/// Run every module's invariants over the built-in suite and `n_random`
/// seeded random walks.
pub fn run_invariant_suite(n_random: usize, seed: u64, params: &ClassifierParams) -> Ledger {
    let mut ledger = Ledger::default();
    let mut curves = builtin_suite();
    curves.extend(random_curves(n_random, seed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);

    for (name, curve) in &curves {
        // --- curve model ---
        {
            let mut pass = curve.deficit() >= 0.0;
            let mut detail = String::new();
            let start_ok = curve.point_at(0.0).unwrap() == curve.vertices()[0];
            let end_ok =
                &curve.point_at(curve.total_len()).unwrap() == curve.vertices().last().unwrap();
            if !(start_ok && end_ok) {
                pass = false;
                detail = "point_at endpoints not exact".into();
            }
            if let Ok((n, _)) = curve.normalize() {
                let (_, rep2) = n.normalize().unwrap();
                if !rep2.is_identity(1e-10) {
                    pass = false;
                    detail = "normalize not idempotent".into();
                }
                if n.start().dist(&Point::zeros(curve.dim())) > 1e-10 {
                    pass = false;
                    detail = "normalized start not at origin".into();
                }
                let mut target = vec![0.0; curve.dim()];
                target[0] = n.chord();
                if n.end().dist(&Point(target)) > 1e-10 {
                    pass = false;
                    detail = "normalized end not on the first axis".into();
                }
            }
            ledger.push("curve-model", name, pass, 4, detail);
        }

        // --- subarc clipping against random balls ---
        {
            let mut pass = true;
            let mut detail = String::new();
            let mut checks = 0;
            for _ in 0..8 {
                let t = rng.gen_range(0.0..curve.total_len());
                let center = curve.point_at_clamped(t);
                let radius = rng.gen_range(0.05..0.5) * curve.total_len();
                let arcs = curve.maximal_subarcs(&center, radius);
                for arc in &arcs {
                    checks += 1;
                    for p in curve.subarc_points(arc) {
                        if p.dist(&center) > radius + 1e-9 {
                            pass = false;
                            detail = format!("subarc point outside closed ball by {}", p.dist(&center) - radius);
                        }
                    }
                    for t_end in [arc.a, arc.b] {
                        let d = curve.point_at_clamped(t_end).dist(&center);
                        let at_curve_end = t_end == 0.0 || t_end == curve.total_len();
                        if !at_curve_end && (d - radius).abs() > 1e-9 * radius.max(1.0) {
                            pass = false;
                            detail = format!("clip endpoint off the sphere by {}", (d - radius).abs());
                        }
                    }
                }
                // preimage completeness on the dense sample
                let spacing = curve.total_len() / 4096.0;
                let mut mismatch = 0.0;
                for k in 0..4096 {
                    let tt = (k as f64 + 0.5) * spacing;
                    let inside = curve.point_at_clamped(tt).dist(&center) < radius;
                    let in_arc = arcs.iter().any(|a| a.a <= tt && tt <= a.b);
                    if inside != in_arc {
                        mismatch += spacing;
                    }
                }
                checks += 1;
                if mismatch > 1e-9 + 2.0 * spacing {
                    pass = false;
                    detail = format!("preimage symmetric difference {mismatch}");
                }
            }
            ledger.push("maximal-subarcs", name, pass, checks, detail);
        }

        // --- measures ---
        if let Ok((norm, _)) = curve.normalize() {
            let mut pass = true;
            let mut detail = String::new();
            let m_total = mu(&norm, 0.0, norm.total_len()).unwrap();
            if (m_total - norm.deficit()).abs() > 1e-12 * norm.total_len().max(1.0) {
                pass = false;
                detail = format!("mu(curve) = {m_total} vs deficit {}", norm.deficit());
            }
            for _ in 0..16 {
                let a = rng.gen_range(0.0..norm.total_len());
                let b = rng.gen_range(0.0..norm.total_len());
                if (a - b).abs() < 1e-9 {
                    continue;
                }
                let (t1, t2) = (a.min(b), a.max(b));
                // the identity is asserted inside mu()
                let _ = mu(&norm, t1, t2).unwrap();
            }
            for r in rho(&norm) {
                if !(0.0..=2.0).contains(&r) {
                    pass = false;
                    detail = format!("rho out of range: {r}");
                }
            }
            let bend_list = bends(&norm);
            for b in &bend_list {
                let mass = mu(&norm, b.t_lo, b.t_hi).unwrap();
                if mass < 0.5 * b.length - 1e-9 {
                    pass = false;
                    detail = format!("bend mass {mass} below half length {}", b.length / 2.0);
                }
            }
            let mt = mu_tilde(&norm, &bend_list);
            let mm = mu_measure(&norm);
            if mt.total() < mm.total() - 1e-12 {
                pass = false;
                detail = "mu-tilde below mu".into();
            }
            if mm.total() > 1e-12 && mt.total() > 405.0 * mm.total() {
                pass = false;
                detail = format!(
                    "mu-tilde {} exceeds 405 mu = {}",
                    mt.total(),
                    405.0 * mm.total()
                );
            }
            // segment minimality (ratio comparison) on sampled pairs
            let mut seg_checks = 0;
            for _ in 0..8 {
                let a = rng.gen_range(0.0..norm.total_len());
                let b = rng.gen_range(0.0..norm.total_len());
                let (t1, t2) = (a.min(b), a.max(b));
                if t2 - t1 < 1e-6 {
                    continue;
                }
                if let Some(seg_ratio) = segment_mu_tilde_ratio(&norm, t1, t2) {
                    let arc_mass = mt.eval_interval(t1, t2);
                    let arc_ratio = arc_mass / (t2 - t1);
                    seg_checks += 1;
                    if arc_ratio < seg_ratio - 1e-9 {
                        pass = false;
                        detail = format!(
                            "subarc mu-tilde ratio {arc_ratio} below segment ratio {seg_ratio}"
                        );
                    }
                }
            }
            ledger.push(
                "deficit-measure",
                name,
                pass,
                19 + bend_list.len() + seg_checks,
                detail,
            );
        }

        // --- nets + cores + betas + voronoi on a moderate hierarchy ---
        let cfg = ExperimentConfig {
            params: params.clone(),
            net: NetParams {
                n0: None,
                n_max: 6,
                sample_spacing: None,
            },
            seed,
            simplicity_check: false,
        };
        let out = match run_ratio_experiment(curve, Some(name.clone()), &cfg) {
            Ok(o) => o,
            Err(e) => {
                ledger.push("pipeline", name, false, 1, format!("{e}"));
                continue;
            }
        };
        match check_net_axioms(&out.normalized, &out.nets) {
            Ok(checks) => ledger.push("net-axioms", name, true, checks, String::new()),
            Err(e) => ledger.push("net-axioms", name, false, 1, e),
        }

        {
            // cores: same-scale disjointness with gap, nesting, diameter
            // convention, per-base-scale uniqueness
            let mut pass = true;
            let mut detail = String::new();
            let mut checks = 0;
            let sys = build_core_system(
                &out.nets,
                params.inflation,
                1.0 / (64.0 * params.inflation),
                params.j_families,
            )
            .unwrap();
            let cores: Vec<_> = sys.cores().collect();
            for i in 0..cores.len() {
                for j in i + 1..cores.len() {
                    let (a, b) = (cores[i], cores[j]);
                    if a.family != b.family {
                        continue;
                    }
                    if a.base_scale == b.base_scale {
                        checks += 1;
                        let gap = sys.union_gap(a, b);
                        let need = (2.0_f64).powi(-a.base_scale - 1);
                        if gap < need - 1e-12 {
                            pass = false;
                            detail = format!(
                                "same-scale cores {:?} {:?} gap {gap} < {need}",
                                a.key(),
                                b.key()
                            );
                        }
                    } else if sys.union_gap(a, b) < 0.0 {
                        checks += 1;
                        let (deep, shallow) = if a.base_scale > b.base_scale {
                            (a, b)
                        } else {
                            (b, a)
                        };
                        if !deep.subset_of(shallow) {
                            pass = false;
                            detail = format!(
                                "intersecting cores {:?} {:?} without nesting",
                                deep.key(),
                                shallow.key()
                            );
                        }
                    }
                }
            }
            let fuzz = 1.0 + 4.0 * (2.0_f64).powi(-(params.j_families as i32) + 1);
            for core in &cores {
                checks += 1;
                let seed_diam = 2.0 * sys.member_radius(core.base_scale);
                if core.diameter < seed_diam - 1e-12 || core.diameter > fuzz * seed_diam + 1e-12 {
                    pass = false;
                    detail = format!(
                        "core {:?} diameter {} outside [{}, {}] (stated convention)",
                        core.key(),
                        core.diameter,
                        seed_diam,
                        fuzz * seed_diam
                    );
                }
            }
            ledger.push("core-axioms", name, pass, checks, detail);
        }

        {
            // beta invariants on the computed family
            let mut pass = true;
            let mut detail = String::new();
            let mut checks = 0;
            for ball in out.balls.iter().take(120) {
                let b0 = beta_ball(&out.normalized, ball, params.fit_tol).unwrap();
                // inflation monotonicity on the same point set
                let arcs0 = out
                    .normalized
                    .maximal_subarcs(&ball.center, ball.radius);
                let b2 = beta_restricted(
                    &out.normalized,
                    &out.normalized
                        .maximal_subarcs(&ball.center, 2.0 * ball.radius),
                    2.0 * ball.diam(),
                    params.fit_tol,
                );
                checks += 1;
                if b2.value < 0.5 * b0.value - 1e-9 {
                    pass = false;
                    detail = format!(
                        "beta(2Q) = {} below beta(Q)/2 = {}",
                        b2.value,
                        b0.value / 2.0
                    );
                }
                for arc in arcs0.iter().take(4) {
                    checks += 1;
                    let bt = beta_tilde(&out.normalized, arc);
                    if !(0.0..=1.0 + 1e-12).contains(&bt) {
                        pass = false;
                        detail = format!("beta-tilde {bt} out of [0,1]");
                    }
                }
                if out.normalized.dim() == 2 {
                    let pts = crate::beta::clip_points(&out.normalized, ball);
                    if pts.len() >= 3 && pts.len() <= 64 {
                        checks += 1;
                        let fit = min_max_line(&pts, params.fit_tol);
                        let oracle = width_oracle_2d(&pts, 0);
                        if (fit.max_dist - oracle).abs() > 1e-9 * oracle.max(1.0) {
                            pass = false;
                            detail = format!(
                                "planar fit {} vs pair-direction oracle {}",
                                fit.max_dist, oracle
                            );
                        }
                    }
                } else {
                    let pts = crate::beta::clip_points(&out.normalized, ball);
                    if pts.len() >= 4 && pts.len() <= 48 {
                        checks += 1;
                        let fit = min_max_line(&pts, params.fit_tol);
                        let oracle = min_max_line_sampled(&pts, 2000, 99);
                        if fit.max_dist > oracle.max_dist * (1.0 + 1e-9) {
                            pass = false;
                            detail = format!(
                                "optimizer {} above sampled oracle {}",
                                fit.max_dist, oracle.max_dist
                            );
                        }
                    }
                }
            }
            ledger.push("beta-engine", name, pass, checks, detail);
        }

        {
            // classification partition and threshold monotonicity
            let mut pass = true;
            let mut detail = String::new();
            let sums: f64 = out.sums.per_leaf.iter().map(|(_, s, _)| *s).sum();
            if sums != out.sums.total {
                pass = false;
                detail = "leaf sums do not add to the total".into();
            }
            let count: usize = out.sums.per_leaf.iter().map(|(_, _, c)| *c).sum();
            if count != out.balls.len() {
                pass = false;
                detail = format!("{count} labeled balls vs {} in the family", out.balls.len());
            }
            for (_, s, _) in &out.sums.per_leaf {
                if *s > out.sums.total + 1e-15 {
                    pass = false;
                    detail = "leaf sum exceeds total".into();
                }
            }
            // raising eps2 can only drain G1
            let mut p2 = params.clone();
            p2.eps2 = (params.eps2 * 4.0).min(params.eps1 * 0.9);
            if let Ok(cls2) = classify(&out.normalized, &out.nets, &out.balls, &p2) {
                for (a, b) in out.classification.analyses.iter().zip(&cls2.analyses) {
                    if b.label.top == TopFamily::G1 && a.label.top != TopFamily::G1 {
                        pass = false;
                        detail = "ball entered G1 when eps2 grew".into();
                        break;
                    }
                }
            }
            ledger.push(
                "classification",
                name,
                pass,
                out.balls.len() + 3,
                detail,
            );
        }

        if out.normalized.dim() == 2 {
            // Voronoi cell bounds at feasible scales
            let mut pass = true;
            let mut detail = String::new();
            let mut checks = 0;
            let j = 2;
            for g in 1..=2 {
                let scale = g * j;
                if out.nets.level(scale).is_none() || scale <= out.nets.n0 {
                    continue;
                }
                let diam = crate::net::curve_diam(&out.normalized);
                let eps = (2.0_f64).powi(-scale);
                if 2.0 * eps > diam {
                    continue; // bound (5.1) presumes the curve escapes the cell scale
                }
                match voronoi_cells(&out.normalized, &out.nets, g, j) {
                    Ok(cells) => {
                        let mut covered = 0.0;
                        // sample-based covering leaves up to one spacing of
                        // slack on the clean upper bound
                        let slack = out.nets.sample_spacing;
                        for cell in &cells {
                            checks += 1;
                            if cell.diam < eps / 2.0 * (1.0 - 1e-9)
                                || cell.diam > 2.0 * eps + slack + 1e-12
                            {
                                pass = false;
                                detail = format!(
                                    "cell diam {} outside [{}, {}) at scale {scale}",
                                    cell.diam,
                                    eps / 2.0,
                                    2.0 * eps + slack
                                );
                            }
                            covered += cell
                                .intervals
                                .iter()
                                .map(|(a, b)| b - a)
                                .sum::<f64>();
                        }
                        checks += 1;
                        if (covered - out.normalized.total_len()).abs() > 1e-9 {
                            pass = false;
                            detail = format!(
                                "cells cover {covered} of {}",
                                out.normalized.total_len()
                            );
                        }
                    }
                    Err(e) => {
                        pass = false;
                        detail = format!("{e}");
                    }
                }
            }
            let _ = beta_sum_per_scale(&out.classification);
            ledger.push("voronoi", name, pass, checks.max(1), detail);
        }
    }

    // determinism: identical config implies identical sums
    {
        let c = generate(&ShapeSpec::VShape { height: 0.3 }, 0).unwrap();
        let cfg = ExperimentConfig {
            params: params.clone(),
            net: NetParams {
                n0: None,
                n_max: 6,
                sample_spacing: None,
            },
            seed,
            simplicity_check: false,
        };
        let a = run_ratio_experiment(&c, None, &cfg).unwrap();
        let b = run_ratio_experiment(&c, None, &cfg).unwrap();
        let same = a.sums.total == b.sums.total
            && a.sums.per_leaf == b.sums.per_leaf
            && a.report.deficit == b.report.deficit;
        ledger.push(
            "determinism",
            "vshape(0.3)",
            same,
            3,
            if same { String::new() } else { "reruns differ".into() },
        );
    }

    ledger
}
