//! Detection of positive-dimensional solution sets.
//!
//! A point is a family candidate when the Jacobian of its critical system is
//! rank deficient. That alone does not separate a curve of solutions from a
//! degenerate isolated root, so each candidate is probed: step a short
//! distance along each null direction, pull back onto the solution set with
//! minimum-norm Newton, and keep the new point only if it moved by roughly
//! the step length and is itself rank deficient. Accepted samples are
//! explored breadth-first up to a cap.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::system::CriticalSystem;
use super::{best_chart, CriticalPoint, SearchConfig};
use num_traits::ToPrimitive;

use crate::charts::{Chart, ConstrainedProblem};
use crate::scalar::snap_rational;

/// A sampled continuum of critical points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub id: usize,
    pub samples: Vec<Vec<f64>>,
    /// Orthonormal null-space directions at each sample.
    pub tangents: Vec<Vec<Vec<f64>>>,
    /// Indices of the reported points that lie on this family.
    pub members: Vec<usize>,
    /// Members dropped because a simpler member lies within half a
    /// continuation step.
    pub absorbed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyReport {
    pub points: Vec<CriticalPoint>,
    pub families: Vec<Family>,
}

/// Flags and groups points lying on continua of critical points.
pub fn detect_family(mut points: Vec<CriticalPoint>, p: &ConstrainedProblem, cfg: &SearchConfig) -> FamilyReport {
    let mut families: Vec<Family> = Vec::new();
    if p.m() >= p.d() {
        return FamilyReport { points, families };
    }
    let mut walker = Walker::new(p, cfg);
    let h = walker.step;
    for idx in 0..points.len() {
        if points[idx].jacobian_rank >= p.d() {
            continue;
        }
        let x = points[idx].coordinates.clone();
        let near = |f: &Family| f.samples.iter().any(|s| dist(s, &x) <= h);
        if let Some(f) = families.iter_mut().find(|f| near(f)) {
            f.members.push(idx);
            points[idx].family_flag = true;
            points[idx].family_id = Some(f.id);
            continue;
        }
        let (samples, tangents) = walker.walk(&x, &points[idx].chart);
        if samples.len() < 2 {
            continue;
        }
        let id = families.len();
        points[idx].family_flag = true;
        points[idx].family_id = Some(id);
        families.push(Family { id, samples, tangents, members: vec![idx], absorbed: 0 });
    }
    thin_members(points, families, h / 2.0)
}

/// Seeding lands on a continuum at arbitrary places, so members are thinned
/// to one per `radius`. Points with small-denominator coordinates are kept
/// first, which preserves distinguished points such as the origin.
fn thin_members(points: Vec<CriticalPoint>, mut families: Vec<Family>, radius: f64) -> FamilyReport {
    let mut keep = vec![true; points.len()];
    for f in &mut families {
        let mut order = f.members.clone();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (&points[a].coordinates, &points[b].coordinates);
            simplicity(ca).total_cmp(&simplicity(cb)).then(a.cmp(&b))
        });
        let mut kept: Vec<usize> = Vec::new();
        for i in order {
            if kept.iter().any(|&k| dist(&points[k].coordinates, &points[i].coordinates) < radius) {
                keep[i] = false;
                f.absorbed += 1;
            } else {
                kept.push(i);
            }
        }
    }
    let mut new_index = vec![usize::MAX; points.len()];
    let mut out = Vec::new();
    for (i, cp) in points.into_iter().enumerate() {
        if keep[i] {
            new_index[i] = out.len();
            out.push(cp);
        }
    }
    for f in &mut families {
        f.members = f.members.iter().filter(|&&i| keep[i]).map(|&i| new_index[i]).collect();
        f.members.sort_unstable();
    }
    FamilyReport { points: out, families }
}

/// Sum of log-denominators of the coordinates' exact rational values, with
/// irrational-looking coordinates counted as large.
fn simplicity(x: &[f64]) -> f64 {
    x.iter()
        .map(|v| match snap_rational(*v, 1_000_000, 1e-12 * v.abs().max(1.0)) {
            Some(q) => q.denom().to_f64().unwrap_or(f64::MAX).ln(),
            None => 20.0,
        })
        .sum()
}

struct Walker<'a> {
    p: &'a ConstrainedProblem,
    cfg: &'a SearchConfig,
    systems: HashMap<Chart, CriticalSystem>,
    step: f64,
}

impl<'a> Walker<'a> {
    fn new(p: &'a ConstrainedProblem, cfg: &'a SearchConfig) -> Self {
        Self { p, cfg, systems: HashMap::new(), step: cfg.family_step * cfg.length_scale() }
    }

    fn system(&mut self, chart: &Chart) -> &CriticalSystem {
        self.systems.entry(chart.clone()).or_insert_with(|| CriticalSystem::new(self.p, chart))
    }

    fn null_directions(&mut self, x: &[f64], chart: &Chart) -> Vec<Vec<f64>> {
        let tol = self.cfg.family_rank_tol;
        self.system(chart).rank_and_null_space(x, tol).1
    }

    /// Breadth-first continuation from `start`.
    fn walk(&mut self, start: &[f64], chart: &Chart) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
        let h = self.step;
        let mut samples = vec![start.to_vec()];
        let mut tangents = vec![self.null_directions(start, chart)];
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            for dir in tangents[i].clone() {
                for sign in [1.0, -1.0] {
                    if samples.len() >= self.cfg.family_max_samples {
                        return (samples, tangents);
                    }
                    let base = samples[i].clone();
                    let pred: Vec<f64> = base.iter().zip(&dir).map(|(b, t)| b + sign * h * t).collect();
                    let Some((x, null)) = self.correct(&base, &pred) else {
                        continue;
                    };
                    if samples.iter().any(|s| dist(s, &x) < 0.5 * h) {
                        continue;
                    }
                    queue.push_back(samples.len());
                    samples.push(x);
                    tangents.push(null);
                }
            }
        }
        (samples, tangents)
    }

    /// Pulls a predicted point back to the solution set and validates it.
    fn correct(&mut self, base: &[f64], pred: &[f64]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        let h = self.step;
        let cfg = self.cfg;
        if !cfg.inside(pred) {
            return None;
        }
        let chart = best_chart(self.p, pred, cfg)?;
        let tol = cfg.family_rank_tol;
        let problem = self.p;
        let sys = self.system(&chart);
        let x = sys.newton(pred, 40, 1e-11)?;
        let moved = dist(&x, base);
        if !(0.5 * h..=3.0 * h).contains(&moved) || dist(&x, pred) > h {
            return None;
        }
        if !super::accept(problem, sys, &x, cfg) {
            return None;
        }
        let (rank, null) = sys.rank_and_null_space(&x, tol);
        (rank < self.p.d() && !null.is_empty()).then_some((x, null))
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_problem;
    use crate::solver::find_critical_points;

    fn problem(text: &str) -> ConstrainedProblem {
        ConstrainedProblem::from_definition(&parse_problem(text).unwrap()).unwrap()
    }

    #[test]
    fn constant_objective_makes_the_circle_a_family() {
        let p = problem("vars x y; objective 0; constraint x^2 + y^2 - 1;");
        let cfg = SearchConfig::cube(2, -2.0, 2.0).with_seeds(9);
        let out = find_critical_points(&p, &cfg).unwrap();
        let report = detect_family(out.points, &p, &cfg);
        assert_eq!(report.families.len(), 1);
        assert!(report.points.iter().all(|c| c.family_id == Some(0)));
        // Samples go all the way round the circle.
        let fam = &report.families[0];
        assert!(fam.samples.len() > 20);
        for s in &fam.samples {
            assert!((s[0].hypot(s[1]) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn isolated_points_are_not_flagged() {
        let p = problem("vars x y; objective x*y; constraint -2*x^3 + 15*x^2*y + 11*y^3 - 24*y;");
        let cfg = SearchConfig::cube(2, -3.0, 3.0);
        let out = find_critical_points(&p, &cfg).unwrap();
        let report = detect_family(out.points, &p, &cfg);
        assert!(report.families.is_empty());
        assert!(report.points.iter().all(|c| !c.family_flag));
    }
}
