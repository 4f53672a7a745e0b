//! Core sets: per family, every net point at a base scale seeds a scaled
//! ball `cQ` that iteratively absorbs intersecting scaled balls from
//! scales deeper by multiples of `J`, until a fixed point. The resulting
//! unions are connected, same-scale-disjoint, and nested across scales
//! within a family, which is what the classifier's tree structure runs on.
//!
//! Cores are stored symbolically as member-key sets; all set relations
//! (intersection, inclusion, distance) reduce to center-distance
//! comparisons on member balls, so nothing is ever rasterized.

use crate::curve::Curve;
use crate::geom::Point;
use crate::measure::DensityMeasure;
use crate::net::NetHierarchy;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("scaling constant c = {0} violates c < 1/(4A) = {1}")]
    ScalingTooLarge(f64, f64),
    #[error("ball ({0}, {1}) has no core entry")]
    MissingCore(i32, usize),
    #[error("cores {0:?} and {1:?} overlap without inclusion (construction bug)")]
    OverlapWithoutInclusion((i32, usize), (i32, usize)),
}

/// A connected union of scaled balls `c Q` across scales `m + i J`.
#[derive(Clone, Debug, Serialize)]
pub struct CoreSet {
    pub family: usize,
    pub base_scale: i32,
    pub base_index: usize,
    /// sorted member keys `(scale, index)`, base included
    pub members: Vec<(i32, usize)>,
    pub diameter: f64,
    /// absorption was cut off by the hierarchy's finest scale
    pub truncated: bool,
}

impl CoreSet {
    pub fn key(&self) -> (i32, usize) {
        (self.base_scale, self.base_index)
    }

    pub fn contains_member(&self, key: (i32, usize)) -> bool {
        self.members.binary_search(&key).is_ok()
    }

    /// member-set inclusion; exact for same-family cores by construction
    pub fn subset_of(&self, other: &CoreSet) -> bool {
        if self.members.len() > other.members.len() {
            return false;
        }
        self.members.iter().all(|k| other.contains_member(*k))
    }

    pub fn intersects_members(&self, other: &CoreSet) -> bool {
        self.members.iter().any(|k| other.contains_member(*k))
    }
}

/// All cores for one scaling constant `c`: `J` families, one core per net
/// point per scale.
pub struct CoreSystem {
    pub c: f64,
    pub inflation: f64,
    pub j_families: usize,
    cores: HashMap<(i32, usize), CoreSet>,
    centers: HashMap<(i32, usize), Point>,
    pub warnings: Vec<String>,
}

impl CoreSystem {
    pub fn member_radius(&self, scale: i32) -> f64 {
        self.c * self.inflation * (2.0_f64).powi(-scale)
    }

    pub fn center(&self, key: (i32, usize)) -> &Point {
        &self.centers[&key]
    }

    pub fn core(&self, scale: i32, index: usize) -> Result<&CoreSet, CoreError> {
        self.cores
            .get(&(scale, index))
            .ok_or(CoreError::MissingCore(scale, index))
    }

    pub fn cores(&self) -> impl Iterator<Item = &CoreSet> {
        self.cores.values()
    }

    pub fn family_of_scale(&self, scale: i32) -> usize {
        (scale.rem_euclid(self.j_families as i32)) as usize
    }

    /// Parameter intervals of the curve inside the member-ball union,
    /// merged and sorted. Drives the exact length and measure of a core.
    pub fn param_intervals(&self, core: &CoreSet, curve: &Curve) -> Vec<(f64, f64)> {
        let mut intervals: Vec<(f64, f64)> = Vec::new();
        for &(scale, index) in &core.members {
            let r = self.member_radius(scale);
            for arc in curve.maximal_subarcs(&self.centers[&(scale, index)], r) {
                intervals.push((arc.a, arc.b));
            }
        }
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let tol = 1e-12 * curve.total_len().max(1.0);
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (a, b) in intervals {
            match out.last_mut() {
                Some(last) if a <= last.1 + tol => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        out
    }

    /// Curve length inside the core (exact clipping).
    pub fn length_inside(&self, core: &CoreSet, curve: &Curve) -> f64 {
        self.param_intervals(core, curve)
            .iter()
            .map(|(a, b)| b - a)
            .sum()
    }

    /// Measure of the curve portion inside the core under `density`.
    pub fn measure_inside(
        &self,
        core: &CoreSet,
        curve: &Curve,
        density: &DensityMeasure,
    ) -> f64 {
        density.eval_intervals(&self.param_intervals(core, curve))
    }

    /// Is the point inside the member-ball union?
    pub fn contains_point(&self, core: &CoreSet, p: &Point) -> bool {
        core.members.iter().any(|&(scale, index)| {
            self.centers[&(scale, index)].dist(p) < self.member_radius(scale)
        })
    }

    /// distance between two member-ball unions (negative when they
    /// overlap)
    pub fn union_gap(&self, a: &CoreSet, b: &CoreSet) -> f64 {
        let mut gap = f64::INFINITY;
        for &ka in &a.members {
            let ca = &self.centers[&ka];
            let ra = self.member_radius(ka.0);
            for &kb in &b.members {
                let d = ca.dist(&self.centers[&kb]) - ra - self.member_radius(kb.0);
                gap = gap.min(d);
            }
        }
        gap
    }

    /// Projection intervals of the half-scaled member union (for the
    /// disjoint-projection diagnostic).
    pub fn half_projection_intervals(&self, core: &CoreSet) -> Vec<(f64, f64)> {
        let mut iv: Vec<(f64, f64)> = core
            .members
            .iter()
            .map(|&(scale, index)| {
                let cx = self.centers[&(scale, index)].0[0];
                let r = self.member_radius(scale) / 2.0;
                (cx - r, cx + r)
            })
            .collect();
        iv.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (a, b) in iv {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        out
    }
}

/// Build the `J` families of cores with scaling constant `c` over all
/// scales of the hierarchy.
///
/// `c < 1/(4A)` is required strictly; equality (the outermost core
/// parameter in the classifier, `16 c0 = 1/(4A)`) is accepted with a
/// warning rather than rejected. `J < 10` likewise warns.
pub fn build_core_system(
    nets: &NetHierarchy,
    inflation: f64,
    c: f64,
    j_families: usize,
) -> Result<CoreSystem, CoreError> {
    let bound = 1.0 / (4.0 * inflation);
    let mut warnings = Vec::new();
    if c > bound {
        return Err(CoreError::ScalingTooLarge(c, bound));
    }
    if c == bound {
        warnings.push(format!(
            "c = 1/(4A) = {c} sits on the admissibility boundary; raise A for slack"
        ));
    }
    if j_families < 10 {
        warnings.push(format!("J = {j_families} below the construction's J >= 10"));
    }

    let mut centers = HashMap::new();
    for n in nets.scales() {
        for (k, np) in nets.level(n).unwrap().iter().enumerate() {
            centers.insert((n, k), np.point.clone());
        }
    }

    let radius = |scale: i32| c * inflation * (2.0_f64).powi(-scale);
    let mut cores = HashMap::new();
    let jj = j_families as i32;
    for base_scale in nets.scales() {
        let deeper: Vec<i32> = (1..)
            .map(|i| base_scale + i * jj)
            .take_while(|&m| m <= nets.n_max)
            .collect();
        // no deeper family scale fits under n_max: absorption was cut off
        let truncated = base_scale + jj > nets.n_max;
        // claimed[deep key] -> base index, first absorber wins; geometry
        // keeps same-base-scale cores from competing
        let mut claimed: HashMap<(i32, usize), usize> = HashMap::new();
        for base_index in 0..nets.level(base_scale).unwrap().len() {
            let base_key = (base_scale, base_index);
            let mut members = vec![base_key];
            let mut round = 0usize;
            loop {
                let mut added = false;
                for &m in &deeper {
                    let rm = radius(m);
                    for k in 0..nets.level(m).unwrap().len() {
                        let key = (m, k);
                        if members.contains(&key) || claimed.contains_key(&key) {
                            continue;
                        }
                        let c_new = &centers[&key];
                        let hit = members.iter().any(|&mk| {
                            centers[&mk].dist(c_new) < radius(mk.0) + rm
                        });
                        if hit {
                            members.push(key);
                            claimed.insert(key, base_index);
                            added = true;
                        }
                    }
                }
                round += 1;
                if !added {
                    break;
                }
                debug_assert!(
                    round <= deeper.len() + 1,
                    "absorption did not reach a fixed point in (n_max - m)/J rounds"
                );
            }
            members.sort();
            let mut diameter = 0.0_f64;
            for (i, &ka) in members.iter().enumerate() {
                for &kb in &members[i..] {
                    let d = centers[&ka].dist(&centers[&kb]) + radius(ka.0) + radius(kb.0);
                    diameter = diameter.max(d);
                }
            }
            cores.insert(
                base_key,
                CoreSet {
                    family: (base_scale.rem_euclid(jj)) as usize,
                    base_scale,
                    base_index,
                    members,
                    diameter,
                    truncated,
                },
            );
        }
    }
    Ok(CoreSystem {
        c,
        inflation,
        j_families,
        cores,
        centers,
        warnings,
    })
}

/// The classifier's three nested core systems at `c0 = 1/(64A)`,
/// `8 c0 = 1/(8A)`, `16 c0 = 1/(4A)`.
pub struct CoreTriple {
    pub base: CoreSystem,
    pub x: CoreSystem,
    pub xx: CoreSystem,
}

pub fn build_core_triple(
    nets: &NetHierarchy,
    inflation: f64,
    j_families: usize,
) -> Result<CoreTriple, CoreError> {
    let c0 = 1.0 / (64.0 * inflation);
    Ok(CoreTriple {
        base: build_core_system(nets, inflation, c0, j_families)?,
        x: build_core_system(nets, inflation, 8.0 * c0, j_families)?,
        xx: build_core_system(nets, inflation, 16.0 * c0, j_families)?,
    })
}

/// The three cores of a ball: `U_Q`, `U_Q^x`, `U_Q^xx`.
pub fn cores_for_ball<'a>(
    triple: &'a CoreTriple,
    scale: i32,
    index: usize,
) -> Result<(&'a CoreSet, &'a CoreSet, &'a CoreSet), CoreError> {
    Ok((
        triple.base.core(scale, index)?,
        triple.x.core(scale, index)?,
        triple.xx.core(scale, index)?,
    ))
}

/// Inclusion forest over the cores of a ball subcollection, built per
/// family by member-set containment: a node's parent is the smallest core
/// strictly containing it.
#[derive(Clone, Debug, Serialize)]
pub struct CoreForest {
    /// per input ball: (parent position, root position) into the input
    /// slice
    pub parent: Vec<Option<usize>>,
    pub root: Vec<usize>,
}

impl CoreForest {
    pub fn roots(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self
            .root
            .iter()
            .enumerate()
            .filter(|(i, &ri)| *i == ri)
            .map(|(i, _)| i)
            .collect();
        r.dedup();
        r
    }

    pub fn tree_size(&self, root: usize) -> usize {
        self.root.iter().filter(|&&r| r == root).count()
    }
}

pub fn core_forest(
    system: &CoreSystem,
    ball_keys: &[(i32, usize)],
) -> Result<CoreForest, CoreError> {
    let cores: Vec<&CoreSet> = ball_keys
        .iter()
        .map(|&(s, i)| system.core(s, i))
        .collect::<Result<_, _>>()?;
    let n = cores.len();
    let mut parent: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let mut best: Option<usize> = None;
        for j in 0..n {
            if i == j || cores[i].family != cores[j].family {
                continue;
            }
            let (a, b) = (cores[i], cores[j]);
            if a.key() == b.key() {
                continue;
            }
            if a.intersects_members(b) {
                if a.subset_of(b) {
                    let better = best.map_or(true, |cur| cores[j].members.len() < cores[cur].members.len());
                    if better {
                        best = Some(j);
                    }
                } else if !b.subset_of(a) {
                    return Err(CoreError::OverlapWithoutInclusion(a.key(), b.key()));
                }
            }
        }
        parent[i] = best;
    }
    let mut root = vec![0usize; n];
    for i in 0..n {
        let mut cur = i;
        while let Some(p) = parent[cur] {
            cur = p;
        }
        root[i] = cur;
    }
    Ok(CoreForest { parent, root })
}

/// Debug dump: `{"family": j, "base": [m, k], "members": [[scale, index]..],
/// "diam": d}`.
pub fn dump_core_json(core: &CoreSet) -> String {
    serde_json::to_string(&serde_json::json!({
        "family": core.family,
        "base": [core.base_scale, core.base_index],
        "members": core.members,
        "diam": core.diameter,
        "truncated": core.truncated,
    }))
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::build_nets;

    fn line_curve(len: f64) -> Curve {
        Curve::new(vec![Point(vec![0.0, 0.0]), Point(vec![len, 0.0])]).unwrap()
    }

    #[test]
    fn isolated_core_is_the_seed_ball() {
        let c = line_curve(1.0);
        let nets = build_nets(&c, 1, 4, (2.0_f64).powi(-4) / 8.0).unwrap();
        // J larger than the scale span: no deeper family scales exist
        let sys = build_core_system(&nets, 8.0, 1.0 / 512.0, 10).unwrap();
        for core in sys.cores() {
            assert_eq!(core.members.len(), 1);
            let expect = 2.0 * sys.member_radius(core.base_scale);
            assert!((core.diameter - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn scaling_constant_bounds() {
        let c = line_curve(1.0);
        let nets = build_nets(&c, 1, 3, 0.01).unwrap();
        assert!(build_core_system(&nets, 8.0, 0.04, 10).is_err()); // > 1/32
        let boundary = build_core_system(&nets, 8.0, 1.0 / 32.0, 10).unwrap();
        assert!(!boundary.warnings.is_empty());
        let small_j = build_core_system(&nets, 8.0, 1.0 / 512.0, 3).unwrap();
        assert!(small_j.warnings.iter().any(|w| w.contains("J = 3")));
    }

    #[test]
    fn same_scale_cores_keep_their_gap() {
        let c = line_curve(4.0);
        let nets = build_nets(&c, 0, 5, (2.0_f64).powi(-5) / 8.0).unwrap();
        let sys = build_core_system(&nets, 8.0, 1.0 / 512.0, 5).unwrap();
        let cores: Vec<&CoreSet> = sys.cores().collect();
        for a in &cores {
            for b in &cores {
                if a.key() >= b.key() || a.family != b.family {
                    continue;
                }
                if a.base_scale == b.base_scale {
                    let gap = sys.union_gap(a, b);
                    let need = (2.0_f64).powi(-a.base_scale - 1);
                    assert!(
                        gap >= need - 1e-12,
                        "gap {gap} < {need} between {:?} {:?}",
                        a.key(),
                        b.key()
                    );
                }
            }
        }
    }

    #[test]
    fn absorption_nests_deeper_cores() {
        // J = 2 on a scale span wide enough that deep balls get absorbed
        let c = line_curve(2.0);
        let nets = build_nets(&c, 0, 4, (2.0_f64).powi(-4) / 8.0).unwrap();
        let sys = build_core_system(&nets, 8.0, 1.0 / 64.0, 2).unwrap();
        let mut saw_absorption = false;
        for core in sys.cores() {
            if core.members.len() > 1 {
                saw_absorption = true;
                // every absorbed deeper core is a member-subset (Prop 1.4(4))
                for &key in &core.members[..] {
                    if key == core.key() {
                        continue;
                    }
                    let deep = sys.core(key.0, key.1).unwrap();
                    assert!(
                        deep.subset_of(core),
                        "deep core {:?} not nested in {:?}",
                        deep.key(),
                        core.key()
                    );
                }
            }
        }
        assert!(saw_absorption, "test configuration produced no absorption");
    }

    #[test]
    fn triple_nesting_across_scalings() {
        let c = line_curve(2.0);
        let nets = build_nets(&c, 0, 4, (2.0_f64).powi(-4) / 8.0).unwrap();
        let triple = build_core_triple(&nets, 8.0, 2).unwrap();
        for n in nets.scales() {
            for k in 0..nets.level(n).unwrap().len() {
                let (u, ux, uxx) = cores_for_ball(&triple, n, k).unwrap();
                assert!(u.subset_of(ux) || u.members.iter().all(|m| ux.contains_member(*m)));
                assert!(ux.members.iter().all(|m| uxx.contains_member(*m)));
            }
        }
    }

    #[test]
    fn forest_of_same_scale_balls_is_singletons() {
        let c = line_curve(2.0);
        let nets = build_nets(&c, 0, 4, (2.0_f64).powi(-4) / 8.0).unwrap();
        let sys = build_core_system(&nets, 8.0, 1.0 / 512.0, 10).unwrap();
        let keys: Vec<(i32, usize)> = (0..nets.level(2).unwrap().len()).map(|k| (2, k)).collect();
        let forest = core_forest(&sys, &keys).unwrap();
        assert!(forest.parent.iter().all(|p| p.is_none()));
        assert!(core_forest(&sys, &[]).unwrap().parent.is_empty());
    }

    #[test]
    fn forest_detects_nesting() {
        let c = line_curve(2.0);
        let nets = build_nets(&c, 0, 4, (2.0_f64).powi(-4) / 8.0).unwrap();
        let sys = build_core_system(&nets, 8.0, 1.0 / 64.0, 2).unwrap();
        // find a core that absorbed a deeper one and build the 2-ball forest
        let mut pair = None;
        for core in sys.cores() {
            for &key in &core.members {
                if key != core.key() {
                    pair = Some((core.key(), key));
                    break;
                }
            }
            if pair.is_some() {
                break;
            }
        }
        let (outer, inner) = pair.expect("no nested pair in configuration");
        let forest = core_forest(&sys, &[outer, inner]).unwrap();
        assert_eq!(forest.parent[1], Some(0));
        assert_eq!(forest.root, vec![0, 0]);
        assert_eq!(forest.roots(), vec![0]);
        assert_eq!(forest.tree_size(0), 2);
    }

    #[test]
    fn diameter_bounds_under_stated_convention() {
        let c = line_curve(2.0);
        let nets = build_nets(&c, 0, 4, (2.0_f64).powi(-4) / 8.0).unwrap();
        for j in [2usize, 4] {
            let sys = build_core_system(&nets, 8.0, 1.0 / 64.0, j).unwrap();
            let fuzz = 1.0 + 4.0 * (2.0_f64).powi(-(j as i32) + 1);
            for core in sys.cores() {
                let seed = 2.0 * sys.member_radius(core.base_scale);
                assert!(core.diameter >= seed - 1e-15);
                assert!(
                    core.diameter <= fuzz * seed + 1e-12,
                    "diam {} vs bound {} (J={j})",
                    core.diameter,
                    fuzz * seed
                );
            }
        }
    }
}
