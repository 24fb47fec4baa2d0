//! End-to-end acceptance checks: each test exercises one pillar of the
//! engine at its stated tolerance and prints a single PASS line.

use std::process::Command;

use alv_core::algebroid::{
    anchor_square_defect, BundleMorphism, LocalAlgebroid, Section,
};
use alv_core::connect::{semi_basic_difference, Connection};
use alv_core::field::{BaseBox, PolyTerm, Shape, SmoothField};
use alv_core::forms::{exterior_derivative, BracketContext, KForm};
use alv_core::prolong::{prolong_morphism, Fibration, Prolongation};
use alv_core::sample::{sample_box, Sampling};
use alv_core::scenario::ScenarioFile;
use alv_core::suites::run_all;
use alv_core::towers::{
    check_bonding_laws, limit_bracket_defect, seeded_compatible_section, BondingTriple, Tower,
    TowerKind,
};
use nalgebra::DMatrix;

fn resolved(text: &str) -> alv_core::scenario::ResolvedScenario {
    ScenarioFile::from_json(text).unwrap().resolve().unwrap()
}

fn suite_defect(report: &alv_core::report::Report, name: &str) -> f64 {
    report
        .suites
        .iter()
        .find(|s| s.name == name)
        .unwrap_or_else(|| panic!("suite {name} missing"))
        .max_defect
}

fn sampling() -> Sampling {
    Sampling {
        count: 32,
        ..Default::default()
    }
}

#[test]
fn criterion_1_bracket_axioms() {
    let sc = resolved(
        r#"{
        "instances": {
            "t": { "kind": "algebroid", "builtin": "tangent" },
            "g": { "kind": "algebroid", "builtin": "lie-algebra:so3" },
            "r": { "kind": "algebroid", "builtin": "rank-drop" }
        },
        "suites": [
            { "name": "antisymmetry" },
            { "name": "leibniz" },
            { "name": "jet-dependence" }
        ],
        "sampling": { "seed": 42, "count": 64 }
    }"#,
    );
    let report = run_all(&sc, 1.0).unwrap();
    assert!(report.pass, "{}", report.to_text());
    for name in ["antisymmetry", "leibniz", "jet-dependence"] {
        assert!(
            suite_defect(&report, name) <= 1e-9,
            "{name}: {}",
            suite_defect(&report, name)
        );
    }
    println!("[acceptance] criterion 1 (bracket axioms on builtin instances): PASS");
}

#[test]
fn criterion_2_jacobiator_and_anchor_morphism() {
    let sc = resolved(
        r#"{
        "instances": {
            "t": { "kind": "algebroid", "builtin": "tangent" },
            "g": { "kind": "algebroid", "builtin": "lie-algebra:so3" }
        },
        "suites": [
            { "name": "jacobi" },
            { "name": "anchor-morphism" }
        ],
        "sampling": { "seed": 42, "count": 64 }
    }"#,
    );
    let report = run_all(&sc, 1.0).unwrap();
    assert!(report.pass, "{}", report.to_text());
    assert!(suite_defect(&report, "jacobi") <= 1e-8);
    assert!(suite_defect(&report, "anchor-morphism") <= 1e-8);

    // The non-Jacobi counterexample has constant jacobiator e₁ on constant
    // basis sections.
    let nj = LocalAlgebroid::builtin("non-jacobi").unwrap();
    let base = nj.base().clone();
    let e: Vec<Section> = (0..3).map(|i| Section::basis(base.clone(), 3, i)).collect();
    for p in sample_box(nj.base(), &sampling()) {
        let j = nj.jacobiator(&e[0], &e[1], &e[2], &p).unwrap();
        assert!((j[0] - 1.0).abs() <= 1e-10, "J₁ = {}", j[0]);
        assert!(j[1].abs() <= 1e-10 && j[2].abs() <= 1e-10);
    }
    println!("[acceptance] criterion 2 (jacobiator, anchor morphism, counterexample): PASS");
}

#[test]
fn criterion_3_exterior_calculus() {
    let sc = resolved(
        r#"{
        "instances": {
            "t": { "kind": "algebroid", "builtin": "tangent" },
            "g": { "kind": "algebroid", "builtin": "lie-algebra:so3" }
        },
        "suites": [
            { "name": "d-squared" },
            { "name": "wedge-leibniz" }
        ],
        "sampling": { "seed": 42, "count": 64 }
    }"#,
    );
    let report = run_all(&sc, 1.0).unwrap();
    assert!(report.pass, "{}", report.to_text());
    assert!(suite_defect(&report, "d-squared") <= 1e-8);
    assert!(suite_defect(&report, "wedge-leibniz") <= 1e-8);

    // Classical oracle on the tangent instance: for ω = x₂² dx₁ + x₁x₂ dx₂,
    // dω(e₁, e₂) = ∂₁(x₁x₂) − ∂₂(x₂²) = −x₂.
    let alg = LocalAlgebroid::builtin("tangent").unwrap();
    let ctx = BracketContext::of(&alg);
    let coeff = |powers: Vec<u32>| {
        SmoothField::polynomial(
            alg.base().clone(),
            Shape::Vector(1),
            vec![PolyTerm {
                coeff: 1.0,
                powers,
                out: 0,
            }],
        )
        .unwrap()
    };
    let omega = KForm::one_form(
        alg.base().clone(),
        vec![coeff(vec![0, 2]), coeff(vec![1, 1])],
    )
    .unwrap();
    let d_omega = exterior_derivative(&ctx, &omega).unwrap();
    for p in sample_box(alg.base(), &sampling()) {
        let v = d_omega.eval(&p, &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert!((v + p[1]).abs() <= 1e-7, "dω(e₁,e₂) = {v} at {p:?}");
    }
    println!("[acceptance] criterion 3 (exterior calculus and de Rham oracle): PASS");
}

#[test]
fn criterion_4_prolongation() {
    // For the tangent algebroid the derived anchor is the identity, exactly.
    let tangent = LocalAlgebroid::builtin("tangent").unwrap();
    let prol = Prolongation::over_own_fiber(tangent.clone()).unwrap();
    assert_eq!(
        prol.derived().fiber_dim(),
        tangent.fiber_dim() + prol.vertical_dim()
    );
    let k = prol.derived().fiber_dim();
    for p in sample_box(prol.total_box(), &sampling()).iter().take(8) {
        let rho = prol.derived().anchor().matrix_at(p).unwrap();
        assert_eq!(rho, DMatrix::<f64>::identity(k, k));
    }

    // Kernel-dimension identity holds with integer equality, including on
    // the rank-dropping instance.
    for name in ["tangent", "rank-drop"] {
        let alg = LocalAlgebroid::builtin(name).unwrap();
        let pr = Prolongation::over_own_fiber(alg).unwrap();
        for p in sample_box(pr.total_box(), &sampling()).iter().take(16) {
            let (lhs, rhs) = pr.kernel_identity(p).unwrap();
            assert_eq!(lhs, rhs, "{name} at {p:?}");
        }
    }

    let sc = resolved(
        r#"{
        "instances": {
            "t": { "kind": "algebroid", "builtin": "tangent" },
            "r": { "kind": "algebroid", "builtin": "rank-drop" },
            "pt": { "kind": "prolongation", "algebroid": "t", "fiber": { "dim": 2 } },
            "pr": { "kind": "prolongation", "algebroid": "r", "fiber": { "dim": 2 } }
        },
        "suites": [
            { "name": "prolong-bracket" },
            { "name": "vertical-closure" }
        ],
        "sampling": { "seed": 42, "count": 32 }
    }"#,
    );
    let report = run_all(&sc, 1.0).unwrap();
    assert!(report.pass, "{}", report.to_text());
    assert!(suite_defect(&report, "prolong-bracket") <= 1e-9);
    assert!(suite_defect(&report, "vertical-closure") <= 1e-9);
    println!("[acceptance] criterion 4 (prolongation structure and brackets): PASS");
}

#[test]
fn criterion_5_connections() {
    let alg = LocalAlgebroid::builtin("tangent").unwrap();
    let prol = Prolongation::build(alg.clone(), Fibration::new(alg.base().clone(), BaseBox::unit(2)))
        .unwrap();
    let total = prol.total_box().clone();
    let christoffel = |terms: Vec<(f64, Vec<u32>, usize)>| {
        SmoothField::polynomial(
            total.clone(),
            Shape::Matrix { rows: 2, cols: 2 },
            terms
                .into_iter()
                .map(|(coeff, powers, out)| PolyTerm { coeff, powers, out })
                .collect(),
        )
        .unwrap()
    };
    let c1 = Connection::new(
        prol.clone(),
        christoffel(vec![
            (0.5, vec![1, 0, 0, 0], 0),
            (1.0, vec![0, 0, 1, 0], 2),
            (-0.25, vec![0, 1, 0, 0], 3),
        ]),
    )
    .unwrap();
    let c2 = Connection::new(
        prol.clone(),
        christoffel(vec![(0.75, vec![0, 1, 0, 0], 1), (0.5, vec![0, 0, 0, 1], 2)]),
    )
    .unwrap();
    for p in sample_box(&total, &sampling()) {
        assert!(c1.block_identity_defect(&p).unwrap() <= 1e-12);
        assert!(c2.block_identity_defect(&p).unwrap() <= 1e-12);
    }

    // The difference tensor shifts one connection onto the other.
    let delta = semi_basic_difference(&c2, &c1).unwrap();
    let shifted = delta.shift(&c1).unwrap();
    for p in sample_box(&total, &sampling()).iter().take(16) {
        let a = shifted.christoffel().eval(p).unwrap();
        let b = c2.christoffel().eval(p).unwrap();
        let worst = a
            .iter()
            .zip(&b)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(worst <= 1e-12);
    }

    // Zero Christoffel data induces the flat connection, exactly.
    let flat = Connection::flat(prol.clone()).unwrap();
    let gamma0 = SmoothField::zeros(
        alg.base().clone(),
        Shape::Bilinear {
            out: 2,
            left: 2,
            right: 2,
        },
    );
    let from_zero = Connection::from_linear_connection(prol, gamma0).unwrap();
    for p in sample_box(&total, &sampling()).iter().take(16) {
        for conn in [&flat, &from_zero] {
            assert!(conn.christoffel().eval(p).unwrap().iter().all(|v| *v == 0.0));
        }
    }
    println!("[acceptance] criterion 5 (connection block algebra and semi-basic shift): PASS");
}

#[test]
fn criterion_6_morphisms() {
    // The identity morphism has exactly vanishing defects.
    let alg = LocalAlgebroid::builtin("tangent").unwrap();
    let ident = BundleMorphism::identity(alg.base(), alg.fiber_dim());
    let a = Section::seeded(alg.base().clone(), 2, 11);
    let b = Section::seeded(alg.base().clone(), 2, 12);
    for p in sample_box(alg.base(), &sampling()).iter().take(8) {
        let sq = anchor_square_defect(&alg, &alg, &ident, p).unwrap();
        assert_eq!(sq.abs().max(), 0.0);
        let d = alg
            .lie_morphism_defect(&alg, &ident, (&a, &b), (&a, &b), p)
            .unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    // A linear contraction lifts to the prolongations with small defect.
    let prol = Prolongation::over_own_fiber(alg.clone()).unwrap();
    let t = DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.0, 0.5]);
    let phi = BundleMorphism::linear(alg.base(), &t, &t).unwrap();
    let mut psi_mat = DMatrix::<f64>::zeros(4, 4);
    psi_mat.view_mut((0, 0), (2, 2)).copy_from(&t);
    psi_mat
        .view_mut((2, 2), (2, 2))
        .copy_from(&(DMatrix::<f64>::identity(2, 2) * 0.5));
    let psi_total = SmoothField::linear(prol.total_box().clone(), &psi_mat).unwrap();
    let (lifted, defect) = prolong_morphism(&prol, &prol, &phi, &psi_total).unwrap();
    assert!(defect <= 1e-9, "lifted anchor square defect {defect}");
    for p in sample_box(prol.total_box(), &sampling()).iter().take(4) {
        let sq = anchor_square_defect(prol.derived(), prol.derived(), &lifted, p).unwrap();
        assert!(sq.abs().max() <= 1e-9);
    }
    println!("[acceptance] criterion 6 (morphisms: identity exact, linear lifts): PASS");
}

#[test]
fn criterion_7_towers() {
    let s = sampling();
    let mut pairs = 0usize;
    for name in ["tangent-projection", "tangent-inclusion"] {
        let tower = Tower::builtin(name).unwrap();
        assert_eq!(tower.len(), 3);
        let laws = check_bonding_laws(&tower, &s).unwrap();
        assert!(laws.max_defect <= 1e-10, "{name}: {}", laws.max_defect);

        for j in 1..tower.len() {
            let src = match tower.kind() {
                TowerKind::Projective => j,
                TowerKind::Direct => 0,
            };
            let level = &tower.levels()[src];
            let prol = Prolongation::build(level.alg.clone(), level.fib.clone()).unwrap();
            for seed in 0..8u64 {
                let x1 = seeded_compatible_section(&tower, 0, j, &prol, 100 + seed).unwrap();
                let x2 = seeded_compatible_section(&tower, 0, j, &prol, 900 + seed).unwrap();
                let p = sample_box(prol.total_box(), &s)[seed as usize].clone();
                let d = limit_bracket_defect(&tower, 0, j, &x1, &x2, &p).unwrap();
                assert!(d.rs_defect <= 1e-8, "{name} ({j}, seed {seed}): rs {}", d.rs_defect);
                assert!(
                    d.max_abs() <= 1e-8,
                    "{name} ({j}, seed {seed}): bracket {}",
                    d.max_abs()
                );
                pairs += 1;
            }
        }
    }
    assert_eq!(pairs, 32);

    // A scrambled bonding composite is caught by the law check.
    let mut broken = Tower::builtin("tangent-projection").unwrap();
    let bad = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
    let triple =
        BondingTriple::linear(broken.levels()[2].alg.base(), &bad, bad.clone(), bad.clone())
            .unwrap();
    broken.set_override(0, 2, triple);
    let laws = check_bonding_laws(&broken, &s).unwrap();
    assert!(laws.max_defect > 1e-10, "override not detected");
    println!("[acceptance] criterion 7 (towers: laws, 32 related-pair limit brackets, counterexample): PASS");
}

#[test]
fn criterion_8_cli() {
    let bin = env!("CARGO_BIN_EXE_alv");
    let scenario = |name: &str| format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"));

    let run = |args: &[&str]| Command::new(bin).args(args).output().unwrap();

    // Passing scenario: exit 0 and byte-identical output across runs.
    let a = run(&["check", "--scenario", &scenario("tangent-basic.json")]);
    let b = run(&["check", "--scenario", &scenario("tangent-basic.json")]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout, "output is not deterministic");
    let json: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(json["pass"], serde_json::Value::Bool(true));

    // Failing scenario: exit 1, report still printed.
    let c = run(&["check", "--scenario", &scenario("non-jacobi.json")]);
    assert_eq!(c.status.code(), Some(1));
    let json: serde_json::Value = serde_json::from_slice(&c.stdout).unwrap();
    assert_eq!(json["pass"], serde_json::Value::Bool(false));

    // Config errors: exit 2 for a missing file and for an unknown suite.
    let d = run(&["check", "--scenario", &scenario("no-such-file.json")]);
    assert_eq!(d.status.code(), Some(2));
    let e = run(&[
        "check",
        "--scenario",
        &scenario("tangent-basic.json"),
        "--suite",
        "no-such-suite",
    ]);
    assert_eq!(e.status.code(), Some(2));

    // Seed overrides change the report header deterministically.
    let f = run(&[
        "check",
        "--scenario",
        &scenario("tangent-basic.json"),
        "--seed",
        "7",
        "--samples",
        "16",
    ]);
    assert_eq!(f.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&f.stdout).unwrap();
    assert_eq!(json["seed"], serde_json::json!(7));
    assert_eq!(json["samples"], serde_json::json!(16));
    println!("[acceptance] criterion 8 (CLI determinism and exit codes): PASS");
}
