//! Named verification suites over a resolved scenario.
//!
//! Each suite sweeps the relevant instances with seeded sample points and
//! seeded polynomial sections, aggregates the worst defect, and compares it
//! against the suite tolerance (scenario overrides win over the defaults
//! below). A suite that hits an internal evaluation error fails with the
//! error text as its diagnostic instead of aborting the run.

use crate::algebroid::{LocalAlgebroid, Section};
use crate::error::{Error, Result};
use crate::field::{directional, SmoothField};
use crate::forms::{d_rho_fn, exterior_derivative, form_coeffs, wedge, BracketContext, KForm};
use crate::prolong::{prolong_bracket, vertical_independence_defect, ModuleSection, ProjectableSection, Prolongation};
use crate::report::{Report, SuiteReport, WorstSample};
use crate::sample::sample_box;
use crate::scenario::ResolvedScenario;
use crate::towers::{
    check_anchored_sequence, check_bonding_laws, check_prolong_compat, limit_bracket_defect,
    seeded_compatible_section,
};

/// The suite registry: name and default tolerance.
pub const SUITES: &[(&str, f64)] = &[
    ("antisymmetry", 1e-10),
    ("leibniz", 1e-9),
    ("jet-dependence", 1e-9),
    ("jacobi", 1e-8),
    ("anchor-morphism", 1e-8),
    ("d-squared", 1e-8),
    ("wedge-leibniz", 1e-8),
    ("fd-cross-check", 1e-5),
    ("prolong-bracket", 1e-9),
    ("vertical-closure", 1e-9),
    ("connection-algebra", 1e-12),
    ("tower-laws", 1e-10),
    ("tower-anchored", 1e-8),
    ("tower-limit-bracket", 1e-8),
];

pub fn default_tolerance(name: &str) -> Option<f64> {
    SUITES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Worst-defect aggregator.
struct Tracker {
    checks: usize,
    max: f64,
    worst: Option<WorstSample>,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            checks: 0,
            max: 0.0,
            worst: None,
        }
    }

    fn note(&mut self, defect: f64, point: &[f64], detail: impl FnOnce() -> String) {
        self.checks += 1;
        if defect > self.max {
            self.max = defect;
            self.worst = Some(WorstSample {
                point: point.to_vec(),
                detail: detail(),
            });
        }
    }

    fn note_vec(&mut self, v: &[f64], point: &[f64], detail: impl FnOnce() -> String) {
        let d = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        self.note(d, point, detail);
    }

    fn into_report(self, name: &str, tolerance: f64) -> SuiteReport {
        SuiteReport {
            name: name.to_string(),
            checks: self.checks,
            max_defect: self.max,
            pass: self.max <= tolerance,
            tolerance,
            worst: if self.max > tolerance { self.worst } else { None },
        }
    }
}

fn seeded_pair(alg: &LocalAlgebroid, seed: u64) -> (Section, Section) {
    (
        Section::seeded(alg.base().clone(), alg.fiber_dim(), seed),
        Section::seeded(alg.base().clone(), alg.fiber_dim(), seed.wrapping_add(7919)),
    )
}

fn seeded_scalar(alg: &LocalAlgebroid, seed: u64) -> SmoothField {
    Section::seeded(alg.base().clone(), 1, seed).field().clone()
}

fn run_antisymmetry(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, alg) in &sc.algebroids {
        let (a, b) = seeded_pair(alg, sc.sampling.seed);
        let ab = alg.bracket(&a, &b)?;
        let ba = alg.bracket(&b, &a)?;
        for p in sample_box(alg.base(), &sc.sampling) {
            let u = ab.eval(&p)?;
            let v = ba.eval(&p)?;
            let s: Vec<f64> = u.iter().zip(&v).map(|(x, y)| x + y).collect();
            t.note_vec(&s, &p, || format!("{name}: [a,b] + [b,a]"));
        }
    }
    Ok(())
}

fn run_leibniz(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, alg) in &sc.algebroids {
        let (a, b) = seeded_pair(alg, sc.sampling.seed ^ 0x11);
        let f = seeded_scalar(alg, sc.sampling.seed ^ 0x12);
        for p in sample_box(alg.base(), &sc.sampling) {
            let d = alg.leibniz_defect(&a, &b, &f, &p)?;
            t.note_vec(&d, &p, || format!("{name}: Leibniz defect"));
        }
    }
    Ok(())
}

fn run_jet_dependence(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, alg) in &sc.algebroids {
        let (a, _) = seeded_pair(alg, sc.sampling.seed ^ 0x21);
        for p in sample_box(alg.base(), &sc.sampling) {
            let d = alg.jet_dependence_defect(&a, &p)?;
            t.note(d, &p, || format!("{name}: 1-jet dependence"));
        }
    }
    Ok(())
}

fn run_jacobi(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, alg) in &sc.algebroids {
        let (a, b) = seeded_pair(alg, sc.sampling.seed ^ 0x31);
        let c = Section::seeded(alg.base().clone(), alg.fiber_dim(), sc.sampling.seed ^ 0x32);
        for p in sample_box(alg.base(), &sc.sampling) {
            let d = alg.jacobiator(&a, &b, &c, &p)?;
            t.note_vec(&d, &p, || format!("{name}: jacobiator"));
        }
    }
    Ok(())
}

fn run_anchor_morphism(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, alg) in &sc.algebroids {
        if !alg.claims_jacobi() {
            continue;
        }
        let (a, b) = seeded_pair(alg, sc.sampling.seed ^ 0x41);
        for p in sample_box(alg.base(), &sc.sampling) {
            let d = alg.anchor_morphism_defect(&a, &b, &p)?;
            t.note_vec(&d, &p, || format!("{name}: anchor morphism"));
        }
    }
    Ok(())
}

fn eval_on_bases(omega: &KForm, p: &[f64]) -> Result<Vec<f64>> {
    form_coeffs(omega, p)
}

fn run_d_squared(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, alg) in &sc.algebroids {
        if !alg.claims_jacobi() {
            continue;
        }
        let ctx = BracketContext::of(alg);
        let f = seeded_scalar(alg, sc.sampling.seed ^ 0x51);
        let ddf = exterior_derivative(&ctx, &d_rho_fn(&ctx, &f)?)?;
        let n = alg.fiber_dim();
        let coeffs: Vec<SmoothField> = (0..n)
            .map(|i| seeded_scalar(alg, sc.sampling.seed ^ (0x60 + i as u64)))
            .collect();
        let omega = KForm::one_form(alg.base().clone(), coeffs)?;
        let ddo = exterior_derivative(&ctx, &exterior_derivative(&ctx, &omega)?)?;
        for p in sample_box(alg.base(), &sc.sampling).iter().take(16) {
            let v = eval_on_bases(&ddf, p)?;
            t.note_vec(&v, p, || format!("{name}: d²f"));
            let v = eval_on_bases(&ddo, p)?;
            t.note_vec(&v, p, || format!("{name}: d²ω"));
        }
    }
    Ok(())
}

fn run_wedge_leibniz(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, alg) in &sc.algebroids {
        if !alg.claims_jacobi() || alg.fiber_dim() < 2 {
            continue;
        }
        let ctx = BracketContext::of(alg);
        let n = alg.fiber_dim();
        let mk_one_form = |off: u64| -> Result<KForm> {
            let coeffs: Vec<SmoothField> = (0..n)
                .map(|i| seeded_scalar(alg, sc.sampling.seed ^ (off + i as u64)))
                .collect();
            KForm::one_form(alg.base().clone(), coeffs)
        };
        let eta = mk_one_form(0x70)?;
        let zeta = mk_one_form(0x80)?;
        // d(η∧ζ) − dη∧ζ + η∧dζ  (degree of η is 1, so the sign is −).
        let lhs = exterior_derivative(&ctx, &wedge(&eta, &zeta)?)?;
        let t1 = wedge(&exterior_derivative(&ctx, &eta)?, &zeta)?;
        let t2 = wedge(&eta, &exterior_derivative(&ctx, &zeta)?)?;
        for p in sample_box(alg.base(), &sc.sampling).iter().take(16) {
            let l = eval_on_bases(&lhs, p)?;
            let a = eval_on_bases(&t1, p)?;
            let b = eval_on_bases(&t2, p)?;
            let d: Vec<f64> = l
                .iter()
                .zip(a.iter().zip(&b))
                .map(|(l, (a, b))| l - (a - b))
                .collect();
            t.note_vec(&d, p, || format!("{name}: graded Leibniz for d"));
        }
    }
    Ok(())
}

fn run_fd_cross_check(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, alg) in &sc.algebroids {
        let f = seeded_scalar(alg, sc.sampling.seed ^ 0x91);
        let (a, _) = seeded_pair(alg, sc.sampling.seed ^ 0x92);
        let rho_a = alg.anchored_field(&a)?;
        let h = 1e-6;
        for p in sample_box(alg.base(), &sc.sampling) {
            let dir = rho_a.eval(&p)?;
            let jet = directional(&f, &p, &dir)?[0];
            let shift = |s: f64| -> Result<f64> {
                let q: Vec<f64> = p.iter().zip(&dir).map(|(x, d)| x + s * d).collect();
                Ok(f.eval_in(&q)[0])
            };
            let fd = (shift(h)? - shift(-h)?) / (2.0 * h);
            t.note((jet - fd).abs(), &p, || {
                format!("{name}: jet vs central difference")
            });
        }
    }
    Ok(())
}

fn seeded_module_section(prol: &Prolongation, seed: u64) -> Result<ModuleSection> {
    let a = Section::seeded(prol.alg().base().clone(), prol.fiber_dim(), seed);
    let z = Section::seeded(
        prol.total_box().clone(),
        prol.vertical_dim(),
        seed.wrapping_add(1),
    )
    .field()
    .clone();
    let f = Section::seeded(prol.total_box().clone(), 1, seed.wrapping_add(2))
        .field()
        .clone();
    let x = ProjectableSection::new(prol, a, z)?;
    ModuleSection::new(prol, vec![(f, x)])
}

fn run_prolong_bracket(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, prol) in &sc.prolongations {
        let x1 = seeded_module_section(prol, sc.sampling.seed ^ 0xa1)?;
        let x2 = seeded_module_section(prol, sc.sampling.seed ^ 0xa7)?;
        let lhs = prolong_bracket(prol, &x1, &x2)?.assembled(prol)?;
        let rhs = prol
            .derived()
            .bracket(&x1.assembled(prol)?, &x2.assembled(prol)?)?;
        for p in sample_box(prol.total_box(), &sc.sampling).iter().take(16) {
            let u = lhs.eval(p)?;
            let v = rhs.eval(p)?;
            let d: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
            t.note_vec(&d, p, || format!("{name}: module vs derived bracket"));
        }
    }
    Ok(())
}

fn run_vertical_closure(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, prol) in &sc.prolongations {
        let mk = |seed: u64| -> Result<ModuleSection> {
            let z = Section::seeded(prol.total_box().clone(), prol.vertical_dim(), seed)
                .field()
                .clone();
            Ok(ModuleSection::from_projectable(
                prol,
                ProjectableSection::vertical_lift(prol, z)?,
            ))
        };
        let z1 = mk(sc.sampling.seed ^ 0xb1)?;
        let z2 = mk(sc.sampling.seed ^ 0xb7)?;
        for p in sample_box(prol.total_box(), &sc.sampling).iter().take(8) {
            let (diff, a_comp) = vertical_independence_defect(prol, &z1, &z2, p)?;
            t.note_vec(&diff, p, || format!("{name}: bracket depends on C"));
            t.note_vec(&a_comp, p, || format!("{name}: vertical bracket not vertical"));
        }
    }
    Ok(())
}

fn run_connection_algebra(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, conn) in &sc.connections {
        let total = conn.prolongation().total_box().clone();
        for p in sample_box(&total, &sc.sampling) {
            let d = conn.block_identity_defect(&p)?;
            t.note(d, &p, || format!("{name}: projector block algebra"));
        }
    }
    Ok(())
}

fn run_tower_laws(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, tower) in &sc.towers {
        let laws = check_bonding_laws(tower, &sc.sampling)?;
        let origin = vec![0.0];
        t.note(laws.max_defect, &origin, || {
            format!("{name}: composite law at levels {:?}", laws.worst_triple)
        });
        let compat = check_prolong_compat(tower, &sc.sampling)?;
        t.note(compat.worst_escape, &origin, || {
            format!("{name}: fiber containment escape")
        });
        t.note(compat.square_defect, &origin, || {
            format!("{name}: projection square")
        });
    }
    Ok(())
}

fn run_tower_anchored(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, tower) in &sc.towers {
        let r = check_anchored_sequence(tower, &sc.sampling)?;
        let origin = vec![0.0];
        t.note(r.anchor_defect, &origin, || {
            format!("{name}: anchor compatibility")
        });
        t.note(r.lm2_defect, &origin, || {
            format!("{name}: bracket square on related sections")
        });
    }
    Ok(())
}

fn run_tower_limit_bracket(sc: &ResolvedScenario, t: &mut Tracker) -> Result<()> {
    for (name, tower) in &sc.towers {
        for j in 1..tower.len() {
            let i = 0;
            let (src, _) = match tower.kind() {
                crate::towers::TowerKind::Projective => (j, i),
                crate::towers::TowerKind::Direct => (i, j),
            };
            let level = &tower.levels()[src];
            let prol = Prolongation::build(level.alg.clone(), level.fib.clone())?;
            let x1 = seeded_compatible_section(tower, i, j, &prol, sc.sampling.seed ^ 0xc1)?;
            let x2 = seeded_compatible_section(tower, i, j, &prol, sc.sampling.seed ^ 0xc7)?;
            for p in sample_box(prol.total_box(), &sc.sampling).iter().take(4) {
                let d = limit_bracket_defect(tower, i, j, &x1, &x2, p)?;
                t.note(d.rs_defect, p, || format!("{name}: relatedness of lifts"));
                t.note_vec(&d.bracket_defect, p, || {
                    format!("{name}: limit bracket across levels ({i}, {j})")
                });
            }
        }
    }
    Ok(())
}

/// Run one named suite. Unknown names are a config error; evaluation errors
/// become a failing report instead of propagating.
pub fn run_suite(sc: &ResolvedScenario, name: &str, tolerance: f64) -> Result<SuiteReport> {
    let mut t = Tracker::new();
    let run = |t: &mut Tracker| -> Result<()> {
        match name {
            "antisymmetry" => run_antisymmetry(sc, t),
            "leibniz" => run_leibniz(sc, t),
            "jet-dependence" => run_jet_dependence(sc, t),
            "jacobi" => run_jacobi(sc, t),
            "anchor-morphism" => run_anchor_morphism(sc, t),
            "d-squared" => run_d_squared(sc, t),
            "wedge-leibniz" => run_wedge_leibniz(sc, t),
            "fd-cross-check" => run_fd_cross_check(sc, t),
            "prolong-bracket" => run_prolong_bracket(sc, t),
            "vertical-closure" => run_vertical_closure(sc, t),
            "connection-algebra" => run_connection_algebra(sc, t),
            "tower-laws" => run_tower_laws(sc, t),
            "tower-anchored" => run_tower_anchored(sc, t),
            "tower-limit-bracket" => run_tower_limit_bracket(sc, t),
            other => Err(Error::config(format!("unknown suite '{other}'"))),
        }
    };
    match run(&mut t) {
        Ok(()) => Ok(t.into_report(name, tolerance)),
        Err(Error::Config(msg)) => Err(Error::Config(msg)),
        Err(e) => Ok(SuiteReport {
            name: name.to_string(),
            checks: t.checks,
            max_defect: f64::INFINITY,
            tolerance,
            pass: false,
            worst: Some(WorstSample {
                point: Vec::new(),
                detail: format!("evaluation error: {e}"),
            }),
        }),
    }
}

/// Run every suite requested by the scenario, in declaration order.
/// `tol_scale` multiplies every tolerance (CLI knob for sensitivity studies).
pub fn run_all(sc: &ResolvedScenario, tol_scale: f64) -> Result<Report> {
    let mut suites = Vec::new();
    for (name, tol) in &sc.suites {
        let tolerance = tol
            .or_else(|| default_tolerance(name))
            .ok_or_else(|| Error::config(format!("unknown suite '{name}'")))?;
        suites.push(run_suite(sc, name, tolerance * tol_scale)?);
    }
    Ok(Report::from_suites(suites, sc.sampling.seed, sc.sampling.count))
}
