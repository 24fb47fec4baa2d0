//! Prolongation of a local algebroid over a fibration.
//!
//! Given a local algebroid with base box U (dim m, fiber dim n) and a
//! fibration with fiber box 𝕆 (dim e), the prolongation lives over the total
//! box U×𝕆 and has fiber dimension n+e. It is materialized in trivialized
//! form: an element is a pair (a, z), and the base-tangent component is
//! reconstructed on demand as v = ρ_x(a), so the defining membership
//! constraint holds by construction and [`Prolongation::membership_defect`]
//! exists purely as a verification probe.
//!
//! The derived anchor is the block map (a, z) ↦ (ρ_x a, z) and the derived
//! structure field is the original C acting on the a-slots. Projectable
//! sections carry a base-only a plus a fiber-valued field z on the total box;
//! module sections are finite sums Σ fᵢ·Xᵢ with scalar coefficients on the
//! total box. The prolongation bracket is implemented literally on that
//! decomposition (projectable bracket plus Leibniz expansion), with the
//! derived algebroid's generic bracket available as an independent oracle.

use crate::algebroid::{
    anchor_square_defect, kernel_diagnostics_of, vf_bracket, BundleMorphism, LocalAlgebroid,
    Section,
};
use crate::error::{Error, Result};
use crate::field::{directional_in, jacobian, BaseBox, Shape, SmoothField};
use crate::forms::BracketContext;
use crate::jets::{Scalar, Smooth};
use crate::sample::{sample_box, Sampling};

/// A trivial fibration: base box × fiber box.
#[derive(Clone)]
pub struct Fibration {
    base: BaseBox,
    fiber: BaseBox,
}

impl Fibration {
    pub fn new(base: BaseBox, fiber: BaseBox) -> Self {
        Fibration { base, fiber }
    }

    pub fn base(&self) -> &BaseBox {
        &self.base
    }

    pub fn fiber(&self) -> &BaseBox {
        &self.fiber
    }

    pub fn total(&self) -> BaseBox {
        self.base.product(&self.fiber)
    }
}

/// The prolongation of an algebroid over a fibration, with its derived
/// algebroid structure on the total box.
#[derive(Clone)]
pub struct Prolongation {
    alg: LocalAlgebroid,
    fib: Fibration,
    derived: LocalAlgebroid,
}

/// Derived anchor: (a, z) ↦ (ρ_x a, z), as a block matrix field.
struct HatAnchorRoutine {
    alg: LocalAlgebroid,
    e: usize,
}

impl Smooth for HatAnchorRoutine {
    fn dim_in(&self) -> usize {
        self.alg.base().dim() + self.e
    }
    fn dim_out(&self) -> usize {
        let m = self.alg.base().dim();
        let n = self.alg.fiber_dim();
        (m + self.e) * (n + self.e)
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let m = self.alg.base().dim();
        let n = self.alg.fiber_dim();
        let e = self.e;
        let cols = n + e;
        let rho = self.alg.anchor().eval_in(&x[..m]);
        for o in out.iter_mut() {
            *o = S::zero();
        }
        for r in 0..m {
            for c in 0..n {
                out[r * cols + c] = rho[r * n + c];
            }
        }
        for r in 0..e {
            out[(m + r) * cols + n + r] = S::one();
        }
    }
}

/// Derived structure: C on the a-slots, zero on the z-slots.
struct HatStructureRoutine {
    alg: LocalAlgebroid,
    e: usize,
}

impl Smooth for HatStructureRoutine {
    fn dim_in(&self) -> usize {
        self.alg.base().dim() + self.e
    }
    fn dim_out(&self) -> usize {
        let k = self.alg.fiber_dim() + self.e;
        k * k * k
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let m = self.alg.base().dim();
        let n = self.alg.fiber_dim();
        let k = n + self.e;
        let c = self.alg.structure().eval_in(&x[..m]);
        for o in out.iter_mut() {
            *o = S::zero();
        }
        for o in 0..n {
            for i in 0..n {
                for j in 0..n {
                    out[(o * k + i) * k + j] = c[(o * n + i) * n + j];
                }
            }
        }
    }
}

impl Prolongation {
    /// Assemble the derived algebroid over the total box.
    pub fn build(alg: LocalAlgebroid, fib: Fibration) -> Result<Self> {
        if alg.base() != fib.base() {
            return Err(Error::shape(
                "prolongation: algebroid base and fibration base differ",
            ));
        }
        let e = fib.fiber().dim();
        let total = fib.total();
        let m = alg.base().dim();
        let n = alg.fiber_dim();
        let anchor = SmoothField::from_smooth(
            total.clone(),
            Shape::Matrix {
                rows: m + e,
                cols: n + e,
            },
            HatAnchorRoutine {
                alg: alg.clone(),
                e,
            },
        )?;
        let structure = SmoothField::from_smooth(
            total.clone(),
            Shape::Bilinear {
                out: n + e,
                left: n + e,
                right: n + e,
            },
            HatStructureRoutine {
                alg: alg.clone(),
                e,
            },
        )?;
        let derived =
            LocalAlgebroid::from_fields(total, n + e, anchor, structure, alg.claims_jacobi())?;
        Ok(Prolongation { alg, fib, derived })
    }

    /// Convenience constructor for the self-prolongation (fibration fiber =
    /// the algebroid fiber, as the unit box of dimension n).
    pub fn over_own_fiber(alg: LocalAlgebroid) -> Result<Self> {
        let fib = Fibration::new(alg.base().clone(), BaseBox::unit(alg.fiber_dim()));
        Prolongation::build(alg, fib)
    }

    pub fn alg(&self) -> &LocalAlgebroid {
        &self.alg
    }

    pub fn fib(&self) -> &Fibration {
        &self.fib
    }

    /// The derived local algebroid on the total box.
    pub fn derived(&self) -> &LocalAlgebroid {
        &self.derived
    }

    pub fn base_dim(&self) -> usize {
        self.alg.base().dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.alg.fiber_dim()
    }

    pub fn vertical_dim(&self) -> usize {
        self.fib.fiber().dim()
    }

    pub fn total_box(&self) -> &BaseBox {
        self.derived.base()
    }

    /// The bracket context of the derived algebroid (feeds the exterior
    /// calculus on the prolongation).
    pub fn context(&self) -> BracketContext {
        BracketContext::of(&self.derived)
    }

    /// Membership probe: v − ρ_x(a); zero iff (a, (v, z)) is a prolongation
    /// element at the point.
    pub fn membership_defect(&self, at: &[f64], a: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let m = self.base_dim();
        if !self.total_box().interior_contains(at) {
            return Err(Error::Domain { point: at.to_vec() });
        }
        if a.len() != self.fiber_dim() || v.len() != m {
            return Err(Error::shape("membership_defect: component dimensions"));
        }
        let rho_a = self.alg.anchor().apply_matrix(&at[..m], a);
        Ok(v.iter().zip(&rho_a).map(|(u, w)| u - w).collect())
    }

    /// Kernel-dimension identity probe: nullity of the base-transport part
    /// of the derived anchor (the map (a, z) ↦ T𝐩(ρ̂(a, z)) = ρ_x a) versus
    /// nullity(ρ_x) + e. Returns the pair (lhs, rhs); equal for every point.
    pub fn kernel_identity(&self, at: &[f64]) -> Result<(usize, usize)> {
        if !self.total_box().interior_contains(at) {
            return Err(Error::Domain { point: at.to_vec() });
        }
        let m = self.base_dim();
        let n = self.fiber_dim();
        let e = self.vertical_dim();
        let rho = self.alg.anchor().matrix_at(&at[..m])?;
        let mut transported = nalgebra::DMatrix::zeros(m, n + e);
        transported.view_mut((0, 0), (m, n)).copy_from(&rho);
        let lhs = kernel_diagnostics_of(&transported).nullity;
        let rhs = kernel_diagnostics_of(&rho).nullity + e;
        Ok((lhs, rhs))
    }
}

/// A projectable section: base-only a, fiber-valued z on the total box.
#[derive(Clone)]
pub struct ProjectableSection {
    a: Section,
    z: SmoothField,
}

impl ProjectableSection {
    pub fn new(prol: &Prolongation, a: Section, z: SmoothField) -> Result<Self> {
        if a.field().domain() != prol.alg.base() || a.dim() != prol.fiber_dim() {
            return Err(Error::shape(
                "projectable section: a must be a section of the algebroid over the base box",
            ));
        }
        if z.domain() != prol.total_box() || z.shape() != Shape::Vector(prol.vertical_dim()) {
            return Err(Error::shape(
                "projectable section: z must be fiber-valued on the total box",
            ));
        }
        Ok(ProjectableSection { a, z })
    }

    /// Build from an a-field given on the total box: rejected unless its
    /// fiber-directional derivatives vanish (≤ 1e-12 on samples), then frozen
    /// at the fiber center to a base-only section.
    pub fn from_total_field(
        prol: &Prolongation,
        a_total: &SmoothField,
        z: SmoothField,
    ) -> Result<Self> {
        let m = prol.base_dim();
        let e = prol.vertical_dim();
        if a_total.domain() != prol.total_box()
            || a_total.shape() != Shape::Vector(prol.fiber_dim())
        {
            return Err(Error::shape("from_total_field: a-field shape"));
        }
        let samples = sample_box(prol.total_box(), &Sampling { count: 16, ..Default::default() });
        for p in &samples {
            for k in 0..e {
                let mut dir = vec![0.0; m + e];
                dir[m + k] = 1.0;
                let d = directional_in(a_total, p, &dir);
                if d.iter().any(|v| v.abs() > 1e-12) {
                    return Err(Error::validation(
                        "a-field depends on the fiber coordinates; not projectable",
                    ));
                }
            }
        }
        let frozen = FrozenBaseRoutine {
            inner: a_total.clone(),
            fiber_center: prol.fib.fiber().center(),
        };
        let a = Section::from_field(SmoothField::from_smooth(
            prol.alg.base().clone(),
            Shape::Vector(prol.fiber_dim()),
            frozen,
        )?)?;
        ProjectableSection::new(prol, a, z)
    }

    /// A vertical section: a ≡ 0.
    pub fn vertical_lift(prol: &Prolongation, z: SmoothField) -> Result<Self> {
        let a = Section::zero(prol.alg.base().clone(), prol.fiber_dim());
        ProjectableSection::new(prol, a, z)
    }

    pub fn a(&self) -> &Section {
        &self.a
    }

    pub fn z(&self) -> &SmoothField {
        &self.z
    }

    /// The assembled (n+e)-vector field (a(x), z(x, e)) on the total box.
    pub fn assembled(&self, prol: &Prolongation) -> Result<Section> {
        Section::from_field(SmoothField::from_smooth(
            prol.total_box().clone(),
            Shape::Vector(prol.fiber_dim() + prol.vertical_dim()),
            AssembledRoutine {
                m: prol.base_dim(),
                a: self.a.clone(),
                z: self.z.clone(),
            },
        )?)
    }

    /// The anchored vector field ρ̂(X) = (ρ_x a(x), z(x, e)) on the total box.
    pub fn hat_field(&self, prol: &Prolongation) -> Result<SmoothField> {
        SmoothField::from_smooth(
            prol.total_box().clone(),
            Shape::Vector(prol.base_dim() + prol.vertical_dim()),
            ProjHatRoutine {
                alg: prol.alg.clone(),
                e: prol.vertical_dim(),
                a: self.a.clone(),
                z: self.z.clone(),
            },
        )
    }
}

struct FrozenBaseRoutine {
    inner: SmoothField,
    fiber_center: Vec<f64>,
}

impl Smooth for FrozenBaseRoutine {
    fn dim_in(&self) -> usize {
        self.inner.dim_in() - self.fiber_center.len()
    }
    fn dim_out(&self) -> usize {
        self.inner.dim_out()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let mut full: Vec<S> = x.to_vec();
        full.extend(self.fiber_center.iter().map(|&c| S::from_f64(c)));
        out.copy_from_slice(&self.inner.eval_in(&full));
    }
}

struct AssembledRoutine {
    m: usize,
    a: Section,
    z: SmoothField,
}

impl Smooth for AssembledRoutine {
    fn dim_in(&self) -> usize {
        self.z.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.a.dim() + self.z.dim_out()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let n = self.a.dim();
        let av = self.a.eval_in(&x[..self.m]);
        out[..n].copy_from_slice(&av);
        out[n..].copy_from_slice(&self.z.eval_in(x));
    }
}

struct ProjHatRoutine {
    alg: LocalAlgebroid,
    e: usize,
    a: Section,
    z: SmoothField,
}

impl Smooth for ProjHatRoutine {
    fn dim_in(&self) -> usize {
        self.alg.base().dim() + self.e
    }
    fn dim_out(&self) -> usize {
        self.alg.base().dim() + self.e
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let m = self.alg.base().dim();
        let av = self.a.eval_in(&x[..m]);
        let rho_a = self.alg.anchor().apply_matrix(&x[..m], &av);
        out[..m].copy_from_slice(&rho_a);
        out[m..].copy_from_slice(&self.z.eval_in(x));
    }
}

/// A finite combination Σ fᵢ·Xᵢ of projectable sections with scalar
/// coefficient fields on the total box.
#[derive(Clone)]
pub struct ModuleSection {
    terms: Vec<(SmoothField, ProjectableSection)>,
}

impl ModuleSection {
    pub fn new(prol: &Prolongation, terms: Vec<(SmoothField, ProjectableSection)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::shape("module section needs at least one term"));
        }
        for (f, _) in &terms {
            if f.shape() != Shape::Vector(1) || f.domain() != prol.total_box() {
                return Err(Error::shape(
                    "module section coefficients must be scalar fields on the total box",
                ));
            }
        }
        Ok(ModuleSection { terms })
    }

    pub fn from_projectable(prol: &Prolongation, x: ProjectableSection) -> Self {
        let one = SmoothField::constant(prol.total_box().clone(), Shape::Vector(1), vec![1.0])
            .expect("scalar constant");
        ModuleSection {
            terms: vec![(one, x)],
        }
    }

    pub fn terms(&self) -> &[(SmoothField, ProjectableSection)] {
        &self.terms
    }

    /// The assembled section of the derived algebroid.
    pub fn assembled(&self, prol: &Prolongation) -> Result<Section> {
        let fields: Result<Vec<SmoothField>> = self
            .terms
            .iter()
            .map(|(f, x)| x.assembled(prol)?.field().scaled_by(f))
            .collect();
        Section::from_field(SmoothField::sum(fields?)?)
    }

    /// The anchored vector field ρ̂(Σ fᵢXᵢ) = Σ fᵢ·ρ̂(Xᵢ) on the total box.
    pub fn hat_field(&self, prol: &Prolongation) -> Result<SmoothField> {
        let fields: Result<Vec<SmoothField>> = self
            .terms
            .iter()
            .map(|(f, x)| x.hat_field(prol)?.scaled_by(f))
            .collect();
        SmoothField::sum(fields?)
    }

    /// Max |a-component| over sample points: zero for vertical sections.
    pub fn verticality_defect(&self, prol: &Prolongation, sampling: &Sampling) -> Result<f64> {
        let mut worst = 0.0_f64;
        for p in sample_box(prol.total_box(), sampling) {
            let m = prol.base_dim();
            for (f, x) in &self.terms {
                let fv = f.eval(&p)?[0];
                let av = x.a().eval(&p[..m])?;
                for v in av {
                    worst = worst.max((fv * v).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// z-component of the bracket of two pure projectable sections:
/// d z′(ρ̂X) − d z(ρ̂X′).
struct ZBracketRoutine {
    e: usize,
    x_hat: SmoothField,
    y_hat: SmoothField,
    zx: SmoothField,
    zy: SmoothField,
}

impl Smooth for ZBracketRoutine {
    fn dim_in(&self) -> usize {
        self.zx.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.e
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let xh = self.x_hat.eval_in(x);
        let yh = self.y_hat.eval_in(x);
        let dzy = directional_in(&self.zy, x, &xh);
        let dzx = directional_in(&self.zx, x, &yh);
        for i in 0..self.e {
            out[i] = dzy[i] - dzx[i];
        }
    }
}

/// Coefficient field m ↦ sign · f(m) · (dg)_m(ρ̂X(m)).
struct DirCoeffRoutine {
    sign: f64,
    f: SmoothField,
    g: SmoothField,
    hat: SmoothField,
}

impl Smooth for DirCoeffRoutine {
    fn dim_in(&self) -> usize {
        self.f.dim_in()
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let hv = self.hat.eval_in(x);
        let dg = directional_in(&self.g, x, &hv)[0];
        out[0] = S::from_f64(self.sign) * self.f.eval_in(x)[0] * dg;
    }
}

/// Product of two scalar fields.
struct ProductRoutine {
    f: SmoothField,
    g: SmoothField,
}

impl Smooth for ProductRoutine {
    fn dim_in(&self) -> usize {
        self.f.dim_in()
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        out[0] = self.f.eval_in(x)[0] * self.g.eval_in(x)[0];
    }
}

/// The bracket of two projectable sections: ([a, a′] over the base,
/// d z′(ρ̂X) − d z(ρ̂X′) on the fiber). Itself projectable.
pub fn projectable_bracket(
    prol: &Prolongation,
    x: &ProjectableSection,
    y: &ProjectableSection,
) -> Result<ProjectableSection> {
    let a_br = prol.alg().bracket(x.a(), y.a())?;
    let z = SmoothField::from_smooth(
        prol.total_box().clone(),
        Shape::Vector(prol.vertical_dim()),
        ZBracketRoutine {
            e: prol.vertical_dim(),
            x_hat: x.hat_field(prol)?,
            y_hat: y.hat_field(prol)?,
            zx: x.z().clone(),
            zy: y.z().clone(),
        },
    )?;
    ProjectableSection::new(prol, a_br, z)
}

/// The prolongation bracket on module sections, by the Leibniz expansion
/// [fX, gY] = fg·[X, Y] + f·(dg(ρ̂X))·Y − g·(df(ρ̂Y))·X over all term pairs.
pub fn prolong_bracket(
    prol: &Prolongation,
    x: &ModuleSection,
    y: &ModuleSection,
) -> Result<ModuleSection> {
    let total = prol.total_box().clone();
    let mut terms: Vec<(SmoothField, ProjectableSection)> = Vec::new();
    for (f, xi) in x.terms() {
        for (g, yj) in y.terms() {
            let fg = SmoothField::from_smooth(
                total.clone(),
                Shape::Vector(1),
                ProductRoutine {
                    f: f.clone(),
                    g: g.clone(),
                },
            )?;
            terms.push((fg, projectable_bracket(prol, xi, yj)?));
            let c1 = SmoothField::from_smooth(
                total.clone(),
                Shape::Vector(1),
                DirCoeffRoutine {
                    sign: 1.0,
                    f: f.clone(),
                    g: g.clone(),
                    hat: xi.hat_field(prol)?,
                },
            )?;
            terms.push((c1, yj.clone()));
            let c2 = SmoothField::from_smooth(
                total.clone(),
                Shape::Vector(1),
                DirCoeffRoutine {
                    sign: -1.0,
                    f: g.clone(),
                    g: f.clone(),
                    hat: yj.hat_field(prol)?,
                },
            )?;
            terms.push((c2, xi.clone()));
        }
    }
    ModuleSection::new(prol, terms)
}

/// ρ̂([X, X′]) − [ρ̂X, ρ̂X′] at a point of the total box.
pub fn hat_anchor_morphism_defect(
    prol: &Prolongation,
    x: &ModuleSection,
    y: &ModuleSection,
    at: &[f64],
) -> Result<Vec<f64>> {
    if !prol.total_box().interior_contains(at) {
        return Err(Error::Domain { point: at.to_vec() });
    }
    let br = prolong_bracket(prol, x, y)?;
    let lhs = br.hat_field(prol)?.eval(at)?;
    let rhs = vf_bracket(&x.hat_field(prol)?, &y.hat_field(prol)?)?.eval(at)?;
    Ok(lhs.iter().zip(&rhs).map(|(u, v)| u - v).collect())
}

/// For vertical inputs: (bracket computed with C minus bracket computed with
/// C ≡ 0, a-component of the bracket), both expected to vanish.
pub fn vertical_independence_defect(
    prol: &Prolongation,
    z1: &ModuleSection,
    z2: &ModuleSection,
    at: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sampling = Sampling { count: 16, ..Default::default() };
    for (what, s) in [("first", z1), ("second", z2)] {
        if s.verticality_defect(prol, &sampling)? > 1e-9 {
            return Err(Error::precondition(format!(
                "{what} module section is not vertical"
            )));
        }
    }
    let b1 = prolong_bracket(prol, z1, z2)?.assembled(prol)?.eval(at)?;
    let stripped = Prolongation::build(prol.alg().with_zero_structure(), prol.fib().clone())?;
    let b2 = prolong_bracket(&stripped, z1, z2)?
        .assembled(&stripped)?
        .eval(at)?;
    let diff = b1.iter().zip(&b2).map(|(u, v)| u - v).collect();
    let a_comp = b1[..prol.fiber_dim()].to_vec();
    Ok((diff, a_comp))
}

/// Lift of a bundle morphism to the prolongations: the derived fiber map
/// sends (a, z) to (φ(a), vertical part of TΨ(ρ_x a, z)). Returns the lifted
/// morphism together with its max anchor-square defect over sample points.
pub fn prolong_morphism(
    prol_a: &Prolongation,
    prol_b: &Prolongation,
    phi: &BundleMorphism,
    psi_total: &SmoothField,
) -> Result<(BundleMorphism, f64)> {
    let m2 = prol_b.base_dim();
    let e2 = prol_b.vertical_dim();
    if psi_total.domain() != prol_a.total_box()
        || psi_total.shape() != Shape::Vector(m2 + e2)
    {
        return Err(Error::shape("prolong_morphism: Ψ must map total box to total box"));
    }
    // Covering condition: the base part of Ψ equals ψ∘p on samples.
    let sampling = Sampling { count: 16, ..Default::default() };
    for p in sample_box(prol_a.total_box(), &sampling) {
        let psi = psi_total.eval(&p)?;
        let base = phi.base_map.eval(&p[..prol_a.base_dim()])?;
        for (u, v) in psi[..m2].iter().zip(&base) {
            if (u - v).abs() > 1e-10 {
                return Err(Error::validation(
                    "prolong_morphism: Ψ does not cover the base map of φ",
                ));
            }
        }
        if !prol_b.total_box().contains(&psi) {
            return Err(Error::Domain { point: psi });
        }
    }
    let lifted_fiber = SmoothField::from_smooth(
        prol_a.total_box().clone(),
        Shape::Matrix {
            rows: prol_b.fiber_dim() + e2,
            cols: prol_a.fiber_dim() + prol_a.vertical_dim(),
        },
        LiftedFiberRoutine {
            alg_a: prol_a.alg().clone(),
            e1: prol_a.vertical_dim(),
            n2: prol_b.fiber_dim(),
            e2,
            m2,
            phi: phi.clone(),
            psi: psi_total.clone(),
        },
    )?;
    let lifted = BundleMorphism::new(psi_total.clone(), lifted_fiber)?;
    let mut worst = 0.0_f64;
    for p in sample_box(prol_a.total_box(), &sampling) {
        let d = anchor_square_defect(prol_a.derived(), prol_b.derived(), &lifted, &p)?;
        worst = worst.max(d.abs().max());
    }
    Ok((lifted, worst))
}

struct LiftedFiberRoutine {
    alg_a: LocalAlgebroid,
    e1: usize,
    n2: usize,
    e2: usize,
    m2: usize,
    phi: BundleMorphism,
    psi: SmoothField,
}

impl Smooth for LiftedFiberRoutine {
    fn dim_in(&self) -> usize {
        self.alg_a.base().dim() + self.e1
    }
    fn dim_out(&self) -> usize {
        (self.n2 + self.e2) * (self.alg_a.fiber_dim() + self.e1)
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let m1 = self.alg_a.base().dim();
        let n1 = self.alg_a.fiber_dim();
        let cols = n1 + self.e1;
        let phi_f = self.phi.fiber_map.eval_in(&x[..m1]);
        let rho = self.alg_a.anchor().eval_in(&x[..m1]);
        for o in out.iter_mut() {
            *o = S::zero();
        }
        // Top block: φ on the a-slots, zero on the z-slots.
        for r in 0..self.n2 {
            for c in 0..n1 {
                out[r * cols + c] = phi_f[r * n1 + c];
            }
        }
        // Bottom block: vertical part of TΨ applied to the anchored tangent
        // (ρ_x e_c, 0) for a-columns and (0, e_{c−n}) for z-columns.
        for c in 0..cols {
            let mut mu = vec![S::zero(); m1 + self.e1];
            if c < n1 {
                for r in 0..m1 {
                    mu[r] = rho[r * n1 + c];
                }
            } else {
                mu[m1 + (c - n1)] = S::one();
            }
            let dpsi = directional_in(&self.psi, x, &mu);
            for r in 0..self.e2 {
                out[(self.n2 + r) * cols + c] = dpsi[self.m2 + r];
            }
        }
    }
}

/// Jacobian of the total map of a fibration morphism (utility for oracles).
pub fn total_jacobian(psi_total: &SmoothField, at: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
    jacobian(psi_total, at)
}
