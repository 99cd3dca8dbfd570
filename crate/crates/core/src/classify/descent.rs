//! The case analysis of the higher derivative test.

use std::collections::BTreeSet;

use super::subsidiary::{solve_subsidiary, value_band, zero_set_descent, ImageMethod, SubsidiaryProblem, Witness};
use super::{CaseLabel, Classification, ClassifyConfig, ClassifyError, EvidenceStep, Flag, ReducedTaylor, Verdict};
use crate::expr::HomogeneousPolynomial;

/// Where the leading components vanish on the sphere.
enum ZeroSet {
    /// Finitely many points, evaluated directly.
    Isolated(Vec<Witness>),
    /// A variety carried implicitly by its constraints.
    Variety(SubsidiaryProblem),
}

pub(super) fn run(t: &ReducedTaylor, cfg: &ClassifyConfig) -> Result<Classification, ClassifyError> {
    let comps = &t.components;
    let k_max = comps.len().saturating_sub(1) as u32;
    let Some(k) = (2..=k_max).find(|&k| !comps[k as usize].is_zero()) else {
        return Ok(Classification::indeterminate(format!("flat to order {k_max}"), Vec::new()));
    };
    let pk = &comps[k as usize];
    let base = SubsidiaryProblem::on_sphere(t.names.clone(), pk.clone());
    let image = solve_subsidiary(&base, cfg)?;
    let mut step = EvidenceStep::component(k, 0, base.constraint_labels());
    step.interval = Some([image.a, image.b]);
    let (sa, sb) = (image.sign_a(), image.sign_b());
    let finish = |mut step: EvidenceStep, case, verdict| {
        step.case = Some(case);
        let mut c = Classification::decided(verdict, vec![step]);
        c.leading_order = Some(k);
        c
    };
    if k % 2 == 1 {
        return Ok(finish(step, CaseLabel::Odd, Verdict::Saddle));
    }
    let mirror = match (sa, sb) {
        (1, _) => return Ok(finish(step, CaseLabel::C1, Verdict::StrictMin)),
        (_, -1) => return Ok(finish(step, CaseLabel::C2, Verdict::StrictMax)),
        (-1, 1) => return Ok(finish(step, CaseLabel::C3, Verdict::Saddle)),
        (0, 1) => false,
        (-1, 0) => true,
        _ => {
            step.note = Some("leading component vanishes on the whole sphere within tolerance".into());
            let mut c = Classification::indeterminate("leading component numerically zero on the sphere", vec![step]);
            c.leading_order = Some(k);
            return Ok(c);
        }
    };
    step.case = Some(if mirror { CaseLabel::C5 } else { CaseLabel::C4 });
    let orient = |p: &HomogeneousPolynomial| if mirror { p.negated() } else { p.clone() };

    let mut evidence = vec![step];
    let mut flags = BTreeSet::new();
    let pk_oriented = orient(pk);
    let mut zero = if image.zero_set.positive_dimensional {
        let (sub, r) = zero_set_descent(&base, &pk_oriented, pk_oriented.clone());
        if r.flagged {
            flags.insert(Flag::ReexpressionIncomplete);
        }
        ZeroSet::Variety(sub)
    } else {
        ZeroSet::Isolated(image.zero_set.isolated.clone())
    };
    let mut depth = 1usize;

    let outcome = |verdict: Verdict, case: CaseLabel, mut evidence: Vec<EvidenceStep>, flags: &BTreeSet<Flag>| {
        if let Some(last) = evidence.last_mut() {
            last.case = Some(if mirror { case.mirrored() } else { case });
        }
        let verdict = if mirror { verdict.mirrored() } else { verdict };
        let mut c = Classification::decided(verdict, evidence);
        c.flags = flags.iter().copied().collect();
        c.leading_order = Some(k);
        c
    };

    for l in k + 1..=k_max {
        let pl = orient(&comps[l as usize]);
        if pl.is_zero() {
            continue;
        }
        match &zero {
            ZeroSet::Isolated(ws) => {
                let tol = value_band(&pl, cfg.value_tol);
                let values: Vec<_> = ws.iter().map(|w| w.evaluate(&pl)).collect();
                let signs: Vec<i8> = values.iter().map(|v| v.sign(tol)).collect();
                let f: Vec<f64> = values.iter().map(|v| v.to_f64()).collect();
                let mut step = EvidenceStep::component(l, depth, vec![isolated_label(ws)]);
                step.interval = Some([
                    f.iter().copied().fold(f64::INFINITY, f64::min),
                    f.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ]);
                if signs.iter().all(|&s| s == 0) {
                    step.note = Some("vanishes on the zero set".into());
                    evidence.push(step);
                    continue;
                }
                evidence.push(step);
                if l % 2 == 1 {
                    return Ok(outcome(Verdict::Saddle, CaseLabel::C42, evidence, &flags));
                }
                if signs.iter().any(|&s| s < 0) {
                    return Ok(outcome(Verdict::Saddle, CaseLabel::C44, evidence, &flags));
                }
                if signs.iter().all(|&s| s > 0) {
                    return Ok(outcome(Verdict::StrictMin, CaseLabel::C43, evidence, &flags));
                }
                evidence.last_mut().expect("just pushed").case =
                    Some(if mirror { CaseLabel::C55 } else { CaseLabel::C45 });
                depth += 1;
                if depth > cfg.depth_max {
                    return Ok(depth_exceeded(evidence, &flags, k, cfg));
                }
                let keep: Vec<Witness> = ws.iter().zip(&signs).filter(|(_, s)| **s == 0).map(|(w, _)| w.clone()).collect();
                zero = ZeroSet::Isolated(keep);
            }
            ZeroSet::Variety(sub) => {
                let s = sub.with_objective(pl.clone());
                let img = solve_subsidiary(&s, cfg)?;
                if img.method == ImageMethod::Sampled {
                    flags.insert(Flag::Sampled);
                }
                let mut step = EvidenceStep::component(l, depth, s.constraint_labels());
                step.interval = Some([img.a, img.b]);
                let (sa, sb) = (img.sign_a(), img.sign_b());
                if sa == 0 && sb == 0 {
                    step.note = Some("vanishes on the zero set".into());
                    evidence.push(step);
                    continue;
                }
                evidence.push(step);
                if l % 2 == 1 {
                    return Ok(outcome(Verdict::Saddle, CaseLabel::C42, evidence, &flags));
                }
                if sa < 0 {
                    return Ok(outcome(Verdict::Saddle, CaseLabel::C44, evidence, &flags));
                }
                if sa > 0 {
                    return Ok(outcome(Verdict::StrictMin, CaseLabel::C43, evidence, &flags));
                }
                evidence.last_mut().expect("just pushed").case =
                    Some(if mirror { CaseLabel::C55 } else { CaseLabel::C45 });
                depth += 1;
                if depth > cfg.depth_max {
                    return Ok(depth_exceeded(evidence, &flags, k, cfg));
                }
                zero = if img.zero_set.positive_dimensional {
                    let (next, r) = zero_set_descent(sub, &pl, pl.clone());
                    if r.flagged {
                        flags.insert(Flag::ReexpressionIncomplete);
                    }
                    ZeroSet::Variety(next)
                } else {
                    ZeroSet::Isolated(img.zero_set.isolated.clone())
                };
            }
        }
    }
    if t.complete_degree.is_none_or(|d| d > k_max) {
        flags.insert(Flag::Truncated);
    }
    let mut step = EvidenceStep::component(k_max, depth, Vec::new());
    step.note = Some(format!("all components of degree {}..={k_max} vanish on the zero set", k + 1));
    evidence.push(step);
    Ok(outcome(Verdict::NonStrictMin, CaseLabel::C41, evidence, &flags))
}

fn depth_exceeded(evidence: Vec<EvidenceStep>, flags: &BTreeSet<Flag>, k: u32, cfg: &ClassifyConfig) -> Classification {
    let mut c = Classification::indeterminate(format!("descent depth cap {} reached", cfg.depth_max), evidence);
    c.flags = flags.iter().copied().collect();
    c.leading_order = Some(k);
    c
}

fn isolated_label(ws: &[Witness]) -> String {
    let pts: Vec<String> = ws
        .iter()
        .map(|w| match &w.exact {
            Some(q) => format!("({})", q.join(", ")),
            None => format!("({})", w.point.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ")),
        })
        .collect();
    format!("isolated zeros {}", pts.join(" "))
}
