//! Critical points of the reduced problem, found chart by chart.
//!
//! For every column subset of the constraint Jacobian, the cleared system
//! `{det·∇J = 0, G = 0}` is solved by damped Newton from each point of a
//! seed grid. Roots outside the box, roots where the chart minor is singular
//! and roots failing the residual tests are dropped; the rest are merged
//! across charts, deduplicated in scaled coordinates and sorted.

mod family;
mod system;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::charts::{enumerate_charts, Chart, ConstrainedProblem, DEFAULT_RANK_TOL};

pub use family::{detect_family, Family, FamilyReport};
pub use system::{pinv_solve, rank_and_null_space, symbolic_determinant, CompiledPoly, CriticalSystem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("Newton iteration did not converge (scaled residual {residual:e})")]
    NotConverged { residual: f64 },
    #[error("chart {chart:?} is not valid at the refined point")]
    ChartInvalid { chart: Vec<usize> },
}

/// Search box, seed density and tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// `(lo, hi)` per variable.
    pub bounds: Vec<(f64, f64)>,
    pub seeds_per_axis: usize,
    pub max_iterations: usize,
    pub constraint_tol: f64,
    pub gradient_tol: f64,
    /// Merge radius in coordinates scaled by `max(1, half-width)` per axis.
    pub dedup_radius: f64,
    pub rank_tol: f64,
    /// Relative singular-value threshold for rank deficiency of the critical system.
    pub family_rank_tol: f64,
    /// Continuation step as a fraction of the mean box half-width.
    pub family_step: f64,
    pub family_max_samples: usize,
}

impl SearchConfig {
    /// Defaults for the given box; the seed count shrinks with dimension so
    /// the total number of starts stays at desk scale.
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        let seeds_per_axis = default_seeds_per_axis(bounds.len());
        Self {
            bounds,
            seeds_per_axis,
            max_iterations: 80,
            constraint_tol: 1e-9,
            gradient_tol: 1e-9,
            dedup_radius: 1e-6,
            rank_tol: DEFAULT_RANK_TOL,
            family_rank_tol: 1e-6,
            family_step: 0.05,
            family_max_samples: 200,
        }
    }

    /// The same interval on every axis.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![(lo, hi); d])
    }

    pub fn with_seeds(mut self, seeds_per_axis: usize) -> Self {
        self.seeds_per_axis = seeds_per_axis;
        self
    }

    pub fn validate(&self, d: usize) -> Result<(), SolverError> {
        if self.bounds.len() != d {
            return Err(SolverError::InvalidConfig(format!("box has {} intervals for {d} variables", self.bounds.len())));
        }
        if self.bounds.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo >= hi) {
            return Err(SolverError::InvalidConfig("box intervals must be finite with lo < hi".into()));
        }
        let tols = [self.constraint_tol, self.gradient_tol, self.dedup_radius, self.rank_tol, self.family_rank_tol, self.family_step];
        if tols.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(SolverError::InvalidConfig("tolerances must be positive".into()));
        }
        if self.seeds_per_axis == 0 || self.max_iterations == 0 {
            return Err(SolverError::InvalidConfig("seed count and iteration cap must be positive".into()));
        }
        Ok(())
    }

    fn axis_scales(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| ((hi - lo) / 2.0).max(1.0)).collect()
    }

    fn inside(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.bounds).all(|(v, (lo, hi))| {
            let slack = 1e-9 * (hi - lo);
            *v >= lo - slack && *v <= hi + slack
        })
    }

    /// Mean box half-width: the length scale for continuation steps.
    pub fn length_scale(&self) -> f64 {
        let n = self.bounds.len().max(1) as f64;
        self.bounds.iter().map(|(lo, hi)| (hi - lo) / 2.0).sum::<f64>() / n
    }
}

fn default_seeds_per_axis(d: usize) -> usize {
    match d {
        0 | 1 => 41,
        2 => 25,
        3 => 13,
        4 => 9,
        5 => 6,
        _ => 4,
    }
}

/// A solution of the critical system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub coordinates: Vec<f64>,
    /// Chart the point is reported in: the best conditioned valid chart.
    pub chart: Chart,
    /// Largest `|G_α(X)|`.
    pub constraint_residual: f64,
    /// Largest `|J_i(X)|`.
    pub gradient_residual: f64,
    /// Rank of the critical-system Jacobian.
    pub jacobian_rank: usize,
    pub family_flag: bool,
    pub family_id: Option<usize>,
}

/// Per-chart seed accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartStats {
    pub chart: Chart,
    pub seeds: usize,
    pub converged: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub charts: Vec<ChartStats>,
    pub candidates: usize,
    pub unique: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub points: Vec<CriticalPoint>,
    pub stats: SearchStats,
}

/// Multi-start search for all critical points inside the box.
pub fn find_critical_points(p: &ConstrainedProblem, cfg: &SearchConfig) -> Result<SearchOutcome, SolverError> {
    cfg.validate(p.d())?;
    let d = p.d();
    let charts = if p.m() >= d { vec![Chart::new((0..d).collect(), d)] } else { Chart::all(d, p.m()) };
    let systems: Vec<CriticalSystem> = charts.iter().map(|c| CriticalSystem::new(p, c)).collect();
    let seeds = seed_grid(cfg);

    let work: Vec<(usize, usize)> = (0..systems.len()).flat_map(|c| (0..seeds.len()).map(move |s| (c, s))).collect();
    let results: Vec<(usize, Option<Vec<f64>>, bool)> = work
        .par_iter()
        .map(|&(c, s)| {
            let sys = &systems[c];
            let Some(x) = sys.newton(&seeds[s], cfg.max_iterations, 1e-11) else {
                return (c, None, false);
            };
            let ok = accept(p, sys, &x, cfg);
            (c, Some(x), ok)
        })
        .collect();

    let mut stats: Vec<ChartStats> =
        charts.iter().map(|c| ChartStats { chart: c.clone(), seeds: seeds.len(), converged: 0, accepted: 0 }).collect();
    let mut candidates = Vec::new();
    for (c, x, ok) in results {
        if x.is_some() {
            stats[c].converged += 1;
        }
        if ok {
            stats[c].accepted += 1;
            candidates.push(x.expect("accepted implies converged"));
        }
    }
    let n_candidates = candidates.len();
    let reps = dedup(candidates, cfg);
    let mut points: Vec<CriticalPoint> = reps
        .into_par_iter()
        .filter_map(|x| {
            let chart = best_chart(p, &x, cfg)?;
            refine(&x, p, &chart, cfg).ok()
        })
        .collect();
    points.sort_by(|a, b| lex_cmp(&a.coordinates, &b.coordinates));
    // Refinement can pull two representatives together.
    let coords: Vec<Vec<f64>> = points.iter().map(|c| c.coordinates.clone()).collect();
    let keep = dedup_indices(&coords, cfg);
    let merged: Vec<CriticalPoint> = keep.into_iter().map(|i| points[i].clone()).collect();
    let unique = merged.len();
    Ok(SearchOutcome { points: merged, stats: SearchStats { charts: stats, candidates: n_candidates, unique } })
}

/// Search followed by family detection.
pub fn solve(p: &ConstrainedProblem, cfg: &SearchConfig) -> Result<(FamilyReport, SearchStats), SolverError> {
    let outcome = find_critical_points(p, cfg)?;
    Ok((detect_family(outcome.points, p, cfg), outcome.stats))
}

/// Newton-polishes an approximate critical point in the given chart.
pub fn refine(x: &[f64], p: &ConstrainedProblem, chart: &Chart, cfg: &SearchConfig) -> Result<CriticalPoint, SolverError> {
    let sys = CriticalSystem::new(p, chart);
    let Some(y) = sys.newton(x, cfg.max_iterations, 1e-11) else {
        return Err(SolverError::NotConverged { residual: sys.scaled_residual(x) });
    };
    if p.m() < p.d() && p.m() > 0 && chart.score(&p.constraint_jacobian(&y)) <= cfg.rank_tol {
        return Err(SolverError::ChartInvalid { chart: chart.dependent().to_vec() });
    }
    if !accept(p, &sys, &y, cfg) {
        return Err(SolverError::NotConverged { residual: sys.scaled_residual(&y) });
    }
    // Degenerate roots are only approached linearly, and their rank
    // deficiency need not show in relative singular values, so every root
    // gets the rounding pass; it is kept only if the residual does not grow.
    let snapped = match sys.snap_exact(&y) {
        Some(q) => q.iter().map(|v| v.to_f64()).collect(),
        None => sys.snap_coordinates(&y, 4 * cfg.max_iterations),
    };
    if sys.merit(&snapped) <= sys.merit(&y) && accept(p, &sys, &snapped, cfg) {
        return Ok(make_point(p, &sys, snapped, cfg));
    }
    Ok(make_point(p, &sys, y, cfg))
}

pub(crate) fn make_point(p: &ConstrainedProblem, sys: &CriticalSystem, y: Vec<f64>, cfg: &SearchConfig) -> CriticalPoint {
    let constraint_residual = p.constraint_values(&y).iter().map(|v: &f64| v.abs()).fold(0.0, f64::max);
    let (gradient_residual, _) = if p.m() >= p.d() { (0.0, 0.0) } else { sys.gradient_residual(&y) };
    let (jacobian_rank, _) = sys.rank_and_null_space(&y, cfg.family_rank_tol);
    CriticalPoint {
        coordinates: y,
        chart: sys.chart().clone(),
        constraint_residual,
        gradient_residual,
        jacobian_rank,
        family_flag: false,
        family_id: None,
    }
}

/// Whether `x` passes the chart-validity and residual tests.
fn accept(p: &ConstrainedProblem, sys: &CriticalSystem, x: &[f64], cfg: &SearchConfig) -> bool {
    if !x.iter().all(|v| v.is_finite()) || !cfg.inside(x) {
        return false;
    }
    if p.scaled_constraint_residual(x) > cfg.constraint_tol {
        return false;
    }
    if p.m() >= p.d() {
        return true;
    }
    if p.m() > 0 && sys.chart().score(&p.constraint_jacobian(x)) <= cfg.rank_tol {
        return false;
    }
    sys.gradient_residual(x).1 <= cfg.gradient_tol
}

/// Best-conditioned valid chart at `x`, if any.
pub fn best_chart_at(p: &ConstrainedProblem, x: &[f64], cfg: &SearchConfig) -> Option<Chart> {
    best_chart(p, x, cfg)
}

pub(crate) fn best_chart(p: &ConstrainedProblem, x: &[f64], cfg: &SearchConfig) -> Option<Chart> {
    if p.m() >= p.d() {
        return Some(Chart::new((0..p.d()).collect(), p.d()));
    }
    enumerate_charts(p, x, cfg.rank_tol).into_iter().next()
}

fn seed_grid(cfg: &SearchConfig) -> Vec<Vec<f64>> {
    let s = cfg.seeds_per_axis;
    let axes: Vec<Vec<f64>> = cfg
        .bounds
        .iter()
        .map(|(lo, hi)| {
            if s == 1 {
                vec![(lo + hi) / 2.0]
            } else {
                (0..s).map(|i| lo + (hi - lo) * i as f64 / (s - 1) as f64).collect()
            }
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = x.total_cmp(y);
        if c != std::cmp::Ordering::Equal {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

pub(crate) fn scaled_dist(a: &[f64], b: &[f64], scales: &[f64]) -> f64 {
    a.iter().zip(b).zip(scales).map(|((x, y), s)| ((x - y) / s).powi(2)).sum::<f64>().sqrt()
}

/// Greedy clustering on a hash grid with cell size equal to the radius.
fn dedup(mut xs: Vec<Vec<f64>>, cfg: &SearchConfig) -> Vec<Vec<f64>> {
    xs.sort_by(|a, b| lex_cmp(a, b));
    let keep = dedup_indices(&xs, cfg);
    keep.into_iter().map(|i| xs[i].clone()).collect()
}

/// Indices of cluster representatives, taking the first member of each
/// cluster in the given order.
pub(crate) fn dedup_indices(xs: &[Vec<f64>], cfg: &SearchConfig) -> Vec<usize> {
    let scales = cfg.axis_scales();
    let r = cfg.dedup_radius;
    let cell = |x: &[f64]| -> Vec<i64> { x.iter().zip(&scales).map(|(v, s)| (v / s / r).floor() as i64).collect() };
    let offsets = neighbor_offsets(scales.len());
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut keep: Vec<usize> = Vec::new();
    for (idx, x) in xs.iter().enumerate() {
        let c = cell(x);
        let found = offsets.iter().any(|off| {
            let key: Vec<i64> = c.iter().zip(off).map(|(a, b)| a + b).collect();
            grid.get(&key).is_some_and(|ids| ids.iter().any(|&i| scaled_dist(&xs[i], x, &scales) <= r))
        });
        if !found {
            grid.entry(c).or_default().push(idx);
            keep.push(idx);
        }
    }
    keep
}

fn neighbor_offsets(d: usize) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out.into_iter().flat_map(|p| (-1..=1).map(move |o| [p.clone(), vec![o]].concat())).collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_problem;

    fn problem(text: &str) -> ConstrainedProblem {
        ConstrainedProblem::from_definition(&parse_problem(text).unwrap()).unwrap()
    }

    #[test]
    fn refine_reaches_one_one() {
        let p = problem("vars x y; objective x*y; constraint -2*x^3 + 15*x^2*y + 11*y^3 - 24*y;");
        let cfg = SearchConfig::cube(2, -3.0, 3.0);
        let cp = refine(&[1.01, 0.99], &p, &Chart::new(vec![1], 2), &cfg).unwrap();
        assert!((cp.coordinates[0] - 1.0).abs() < 1e-10);
        assert!((cp.coordinates[1] - 1.0).abs() < 1e-10);
        let again = refine(&cp.coordinates, &p, &Chart::new(vec![1], 2), &cfg).unwrap();
        assert_eq!(again.coordinates, cp.coordinates);
    }

    #[test]
    fn linear_objective_on_circle() {
        // Brute-force oracle: scan the circle for stationary points of x + y.
        let p = problem("vars x y; objective x + y; constraint x^2 + y^2 - 1;");
        let out = find_critical_points(&p, &SearchConfig::cube(2, -2.0, 2.0)).unwrap();
        let n = 100_000;
        let vals: Vec<f64> = (0..n).map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            t.cos() + t.sin()
        }).collect();
        let mut oracle = Vec::new();
        for k in 0..n {
            let (a, b, c) = (vals[(k + n - 1) % n], vals[k], vals[(k + 1) % n]);
            if (b - a) * (c - b) <= 0.0 {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                oracle.push((t.cos(), t.sin()));
            }
        }
        assert_eq!(out.points.len(), 2);
        assert_eq!(oracle.len(), 2);
        for (ox, oy) in oracle {
            assert!(out.points.iter().any(|cp| (cp.coordinates[0] - ox).abs() < 1e-3 && (cp.coordinates[1] - oy).abs() < 1e-3));
        }
        let h = 0.5f64.sqrt();
        assert!((out.points[0].coordinates[0] + h).abs() < 1e-12);
        assert!((out.points[1].coordinates[1] - h).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SearchConfig::cube(2, -1.0, 1.0);
        cfg.bounds[0] = (1.0, -1.0);
        assert!(cfg.validate(2).is_err());
        assert!(SearchConfig::cube(3, -1.0, 1.0).validate(2).is_err());
    }

    #[test]
    fn output_is_deterministic() {
        let p = problem("vars x y; objective x*y; constraint -2*x^3 + 15*x^2*y + 11*y^3 - 24*y;");
        let cfg = SearchConfig::cube(2, -3.0, 3.0);
        let a = find_critical_points(&p, &cfg).unwrap();
        let b = find_critical_points(&p, &cfg).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn zero_dimensional_constraint_set() {
        let p = problem("vars x; objective x^3; constraint x^2 - 1;");
        let out = find_critical_points(&p, &SearchConfig::cube(1, -1.5, 1.5)).unwrap();
        let xs: Vec<f64> = out.points.iter().map(|c| c.coordinates[0]).collect();
        assert_eq!(xs.len(), 2);
        assert!((xs[0] + 1.0).abs() < 1e-12 && (xs[1] - 1.0).abs() < 1e-12);
    }
}
