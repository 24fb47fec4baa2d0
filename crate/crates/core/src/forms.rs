//! Exterior calculus over a bracket context.
//!
//! A [`KForm`] is an evaluation routine (point plus k fiber vectors → scalar)
//! rather than a coefficient tensor: degree-k coefficient storage is O(nᵏ)
//! and every formula here only ever evaluates on argument tuples. Coefficient
//! extraction on a basis ([`form_coeffs`]) is provided for the oracles.
//!
//! The wedge uses the shuffle (determinant) convention with no 1/k! factors,
//! so `dx₁∧dx₂(e₁,e₂) = 1` and insertion is an anti-derivation.
//!
//! The Lie and exterior derivatives evaluate their argument slots through
//! constant representative sections: the derivative formulas only depend on
//! the argument values at the point (and on 1-jets of the form and of the
//! inserted section), which the jet-locality suites certify independently.
//!
//! A [`BracketContext`] carries just the data the formulas need — base box,
//! fiber dimension, anchor and structure fields — which lets the same module
//! serve both a plain algebroid and the derived algebroid of a prolongation.

use std::sync::Arc;

use crate::algebroid::{BundleMorphism, LocalAlgebroid, Section};
use crate::error::{Error, Result};
use crate::field::{directional_in, BaseBox, Shape, SmoothField};
use crate::jets::{ErasedForm, FormFn, Scalar};
use crate::sample::{sample_box, Sampling};

/// Degree-k alternating form as an evaluation routine.
#[derive(Clone)]
pub struct KForm {
    degree: usize,
    fiber_dim: usize,
    domain: BaseBox,
    inner: Arc<dyn ErasedForm>,
}

impl KForm {
    pub fn new(
        degree: usize,
        fiber_dim: usize,
        domain: BaseBox,
        inner: Arc<dyn ErasedForm>,
    ) -> Self {
        KForm {
            degree,
            fiber_dim,
            domain,
            inner,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn domain(&self) -> &BaseBox {
        &self.domain
    }

    /// Generic evaluation (no checks; jet-capable).
    pub fn eval_in<S: Scalar>(&self, x: &[S], args: &[&[S]]) -> S {
        debug_assert_eq!(args.len(), self.degree);
        S::dispatch_form(self.inner.as_ref(), x, args)
    }

    /// Checked plain evaluation.
    pub fn eval(&self, x: &[f64], args: &[&[f64]]) -> Result<f64> {
        if !self.domain.contains(x) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        if args.len() != self.degree {
            return Err(Error::shape(format!(
                "form of degree {} given {} arguments",
                self.degree,
                args.len()
            )));
        }
        for a in args {
            if a.len() != self.fiber_dim {
                return Err(Error::shape(format!(
                    "form argument has dimension {}, fiber is {}",
                    a.len(),
                    self.fiber_dim
                )));
            }
        }
        Ok(self.eval_in(x, args))
    }

    /// The zero form of any degree.
    pub fn zero(domain: BaseBox, fiber_dim: usize, degree: usize) -> Self {
        let dim_base = domain.dim();
        KForm::new(
            degree,
            fiber_dim,
            domain,
            Arc::new(ZeroRoutine {
                degree,
                dim_base,
                fiber_dim,
            }),
        )
    }

    /// A scalar field viewed as a 0-form.
    pub fn function(f: &SmoothField, fiber_dim: usize) -> Result<Self> {
        if f.shape() != Shape::Vector(1) {
            return Err(Error::shape("0-form must wrap a scalar field"));
        }
        Ok(KForm::new(
            0,
            fiber_dim,
            f.domain().clone(),
            Arc::new(FunctionRoutine {
                f: f.clone(),
                fiber_dim,
            }),
        ))
    }

    /// 1-form Σ cᵢ(x)·vᵢ from scalar coefficient fields.
    pub fn one_form(domain: BaseBox, coeffs: Vec<SmoothField>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::shape("one_form needs at least one coefficient"));
        }
        for c in &coeffs {
            if c.shape() != Shape::Vector(1) || c.domain() != &domain {
                return Err(Error::shape(
                    "one_form coefficients must be scalar fields on the domain box",
                ));
            }
        }
        let fiber_dim = coeffs.len();
        Ok(KForm::new(
            1,
            fiber_dim,
            domain,
            Arc::new(OneFormRoutine { coeffs }),
        ))
    }

    /// The constant covector dxᵢ on an n-dimensional fiber.
    pub fn basis_covector(domain: BaseBox, fiber_dim: usize, i: usize) -> Self {
        let coeffs = (0..fiber_dim)
            .map(|j| {
                SmoothField::constant(
                    domain.clone(),
                    Shape::Vector(1),
                    vec![if i == j { 1.0 } else { 0.0 }],
                )
                .expect("scalar constant")
            })
            .collect();
        KForm::one_form(domain, coeffs).expect("valid coefficients")
    }
}

/// The data the exterior-calculus formulas need from an algebroid.
#[derive(Clone)]
pub struct BracketContext {
    base: BaseBox,
    fiber_dim: usize,
    anchor: SmoothField,
    structure: SmoothField,
}

impl BracketContext {
    pub fn of(alg: &LocalAlgebroid) -> Self {
        BracketContext {
            base: alg.base().clone(),
            fiber_dim: alg.fiber_dim(),
            anchor: alg.anchor().clone(),
            structure: alg.structure().clone(),
        }
    }

    pub fn base(&self) -> &BaseBox {
        &self.base
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn anchor(&self) -> &SmoothField {
        &self.anchor
    }

    pub fn structure(&self) -> &SmoothField {
        &self.structure
    }
}

fn check_form(ctx: &BracketContext, omega: &KForm, what: &str) -> Result<()> {
    if omega.fiber_dim() != ctx.fiber_dim || omega.domain() != &ctx.base {
        return Err(Error::shape(format!(
            "{what}: form fiber/domain does not match the context"
        )));
    }
    Ok(())
}

/// Insertion i_a: degree k → k−1 (and 0 on 0-forms).
pub fn insert(a: &Section, omega: &KForm) -> Result<KForm> {
    if a.dim() != omega.fiber_dim() {
        return Err(Error::shape("insert: section/form fiber mismatch"));
    }
    if a.field().domain() != omega.domain() {
        return Err(Error::shape("insert: section/form domain mismatch"));
    }
    if omega.degree() == 0 {
        return Ok(KForm::zero(
            omega.domain().clone(),
            omega.fiber_dim(),
            0,
        ));
    }
    Ok(KForm::new(
        omega.degree() - 1,
        omega.fiber_dim(),
        omega.domain().clone(),
        Arc::new(InsertRoutine {
            a: a.clone(),
            omega: omega.clone(),
        }),
    ))
}

/// Shuffle-convention wedge η∧ζ.
pub fn wedge(eta: &KForm, zeta: &KForm) -> Result<KForm> {
    if eta.fiber_dim() != zeta.fiber_dim() || eta.domain() != zeta.domain() {
        return Err(Error::shape("wedge: fiber/domain mismatch"));
    }
    Ok(KForm::new(
        eta.degree() + zeta.degree(),
        eta.fiber_dim(),
        eta.domain().clone(),
        Arc::new(WedgeRoutine {
            eta: eta.clone(),
            zeta: zeta.clone(),
        }),
    ))
}

/// d_ρ on a scalar field: the 1-form (a, x) ↦ df_x(ρ_x a).
pub fn d_rho_fn(ctx: &BracketContext, f: &SmoothField) -> Result<KForm> {
    if f.shape() != Shape::Vector(1) || f.domain() != &ctx.base {
        return Err(Error::shape("d_rho_fn expects a scalar field on the context base"));
    }
    Ok(KForm::new(
        1,
        ctx.fiber_dim,
        ctx.base.clone(),
        Arc::new(DRhoRoutine {
            ctx: ctx.clone(),
            f: f.clone(),
        }),
    ))
}

/// Lie derivative L_a of a form along a section.
pub fn lie_derivative_form(ctx: &BracketContext, a: &Section, omega: &KForm) -> Result<KForm> {
    check_form(ctx, omega, "lie_derivative_form")?;
    if a.dim() != ctx.fiber_dim || a.field().domain() != &ctx.base {
        return Err(Error::shape("lie_derivative_form: section mismatch"));
    }
    Ok(KForm::new(
        omega.degree(),
        ctx.fiber_dim,
        ctx.base.clone(),
        Arc::new(LieDerivRoutine {
            ctx: ctx.clone(),
            a: a.clone(),
            omega: omega.clone(),
        }),
    ))
}

/// Exterior derivative: degree k → k+1; agrees with [`d_rho_fn`] on 0-forms.
pub fn exterior_derivative(ctx: &BracketContext, omega: &KForm) -> Result<KForm> {
    check_form(ctx, omega, "exterior_derivative")?;
    Ok(KForm::new(
        omega.degree() + 1,
        ctx.fiber_dim,
        ctx.base.clone(),
        Arc::new(ExtDerivRoutine {
            ctx: ctx.clone(),
            omega: omega.clone(),
        }),
    ))
}

/// Pullback across a bundle morphism:
/// (Φ*ω)_x(a₁…a_k) = ω_{ψ(x)}(Φ(x)a₁, …, Φ(x)a_k).
///
/// Validates on sample points that ψ maps the source box into the form's
/// domain box.
pub fn pullback_form(morphism: &BundleMorphism, omega: &KForm) -> Result<KForm> {
    let (n2, n1) = match morphism.fiber_map.shape() {
        Shape::Matrix { rows, cols } => (rows, cols),
        _ => unreachable!("morphism fiber maps are matrix-shaped"),
    };
    if n2 != omega.fiber_dim() {
        return Err(Error::shape("pullback_form: fiber map target ≠ form fiber"));
    }
    let source = morphism.base_map.domain().clone();
    for x in sample_box(&source, &Sampling { count: 16, ..Default::default() }) {
        let psi = morphism.base_map.eval(&x)?;
        if !omega.domain().contains(&psi) {
            return Err(Error::Domain { point: psi });
        }
    }
    Ok(KForm::new(
        omega.degree(),
        n1,
        source,
        Arc::new(PullbackRoutine {
            morphism: morphism.clone(),
            omega: omega.clone(),
        }),
    ))
}

/// The two morphism-compatibility defects of the exterior calculus, probed
/// on basis vectors at one point.
#[derive(Clone, Debug)]
pub struct LamDefect {
    /// (Φ*(d_{ρ₂}f) − d_{ρ₁}(f∘ψ))(x; eᵢ) per source basis vector.
    pub lam1: Vec<f64>,
    /// (Φ*(d_{ρ₂}ω) − d_{ρ₁}(Φ*ω))(x; eᵢ, eⱼ) per pair i < j.
    pub lam2: Vec<f64>,
}

impl LamDefect {
    pub fn max_abs(&self) -> f64 {
        self.lam1
            .iter()
            .chain(self.lam2.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Evaluate the morphism-compatibility defects for a scalar `f` and 1-form
/// `ω` on the target context.
pub fn lam_defect(
    ctx1: &BracketContext,
    ctx2: &BracketContext,
    morphism: &BundleMorphism,
    f: &SmoothField,
    omega: &KForm,
    x: &[f64],
) -> Result<LamDefect> {
    if omega.degree() != 1 {
        return Err(Error::shape("lam_defect checks 1-forms only"));
    }
    if !ctx1.base.interior_contains(x) {
        return Err(Error::Domain { point: x.to_vec() });
    }
    let n1 = ctx1.fiber_dim;
    let d2f = d_rho_fn(ctx2, f)?;
    let pb_d2f = pullback_form(morphism, &d2f)?;
    let f_psi = SmoothField::compose(f, &morphism.base_map)?;
    let d1_fpsi = d_rho_fn(ctx1, &f_psi)?;
    let mut lam1 = Vec::with_capacity(n1);
    let mut basis = vec![vec![0.0; n1]; n1];
    for (i, b) in basis.iter_mut().enumerate() {
        b[i] = 1.0;
    }
    for e in &basis {
        let args = [e.as_slice()];
        lam1.push(pb_d2f.eval(x, &args)? - d1_fpsi.eval(x, &args)?);
    }

    let d2w = exterior_derivative(ctx2, omega)?;
    let pb_d2w = pullback_form(morphism, &d2w)?;
    let pb_w = pullback_form(morphism, omega)?;
    let d1_pbw = exterior_derivative(ctx1, &pb_w)?;
    let mut lam2 = Vec::new();
    for i in 0..n1 {
        for j in (i + 1)..n1 {
            let args = [basis[i].as_slice(), basis[j].as_slice()];
            lam2.push(pb_d2w.eval(x, &args)? - d1_pbw.eval(x, &args)?);
        }
    }
    Ok(LamDefect { lam1, lam2 })
}

/// Coefficients of a degree-k form on the ordered basis tuples
/// e_{i₁} < … < e_{i_k} at a point; oracle utility for small fibers.
pub fn form_coeffs(omega: &KForm, x: &[f64]) -> Result<Vec<f64>> {
    let n = omega.fiber_dim();
    let k = omega.degree();
    let mut basis = vec![vec![0.0; n]; n];
    for (i, b) in basis.iter_mut().enumerate() {
        b[i] = 1.0;
    }
    let mut out = Vec::new();
    for combo in combinations(n, k) {
        let args: Vec<&[f64]> = combo.iter().map(|&i| basis[i].as_slice()).collect();
        out.push(omega.eval(x, &args)?);
    }
    Ok(out)
}

/// All k-element ascending index subsets of 0..n.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if k > n {
        return vec![];
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // Advance the rightmost index that can still move.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < n - (k - i) {
                idx[i] += 1;
                for j in (i + 1)..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation routines
// ---------------------------------------------------------------------------

struct ZeroRoutine {
    degree: usize,
    dim_base: usize,
    fiber_dim: usize,
}

impl FormFn for ZeroRoutine {
    fn degree(&self) -> usize {
        self.degree
    }
    fn dim_base(&self) -> usize {
        self.dim_base
    }
    fn dim_fiber(&self) -> usize {
        self.fiber_dim
    }
    fn eval<S: Scalar>(&self, _x: &[S], _args: &[&[S]]) -> S {
        S::zero()
    }
}

struct FunctionRoutine {
    f: SmoothField,
    fiber_dim: usize,
}

impl FormFn for FunctionRoutine {
    fn degree(&self) -> usize {
        0
    }
    fn dim_base(&self) -> usize {
        self.f.dim_in()
    }
    fn dim_fiber(&self) -> usize {
        self.fiber_dim
    }
    fn eval<S: Scalar>(&self, x: &[S], _args: &[&[S]]) -> S {
        self.f.eval_in(x)[0]
    }
}

struct OneFormRoutine {
    coeffs: Vec<SmoothField>,
}

impl FormFn for OneFormRoutine {
    fn degree(&self) -> usize {
        1
    }
    fn dim_base(&self) -> usize {
        self.coeffs[0].dim_in()
    }
    fn dim_fiber(&self) -> usize {
        self.coeffs.len()
    }
    fn eval<S: Scalar>(&self, x: &[S], args: &[&[S]]) -> S {
        let v = args[0];
        let mut acc = S::zero();
        for (c, &vi) in self.coeffs.iter().zip(v) {
            acc = acc + c.eval_in(x)[0] * vi;
        }
        acc
    }
}

struct InsertRoutine {
    a: Section,
    omega: KForm,
}

impl FormFn for InsertRoutine {
    fn degree(&self) -> usize {
        self.omega.degree() - 1
    }
    fn dim_base(&self) -> usize {
        self.omega.domain().dim()
    }
    fn dim_fiber(&self) -> usize {
        self.omega.fiber_dim()
    }
    fn eval<S: Scalar>(&self, x: &[S], args: &[&[S]]) -> S {
        let av = self.a.eval_in(x);
        let mut full: Vec<&[S]> = Vec::with_capacity(args.len() + 1);
        full.push(&av);
        full.extend_from_slice(args);
        self.omega.eval_in(x, &full)
    }
}

struct WedgeRoutine {
    eta: KForm,
    zeta: KForm,
}

impl FormFn for WedgeRoutine {
    fn degree(&self) -> usize {
        self.eta.degree() + self.zeta.degree()
    }
    fn dim_base(&self) -> usize {
        self.eta.domain().dim()
    }
    fn dim_fiber(&self) -> usize {
        self.eta.fiber_dim()
    }
    fn eval<S: Scalar>(&self, x: &[S], args: &[&[S]]) -> S {
        let k = self.eta.degree();
        let total = args.len();
        let mut acc = S::zero();
        for left in combinations(total, k) {
            // Parity of the shuffle that brings the selected positions to the
            // front while preserving relative order.
            let transpositions: usize = left.iter().enumerate().map(|(i, &p)| p - i).sum();
            let sign = if transpositions % 2 == 0 { 1.0 } else { -1.0 };
            let mut in_left = vec![false; total];
            for &p in &left {
                in_left[p] = true;
            }
            let eta_args: Vec<&[S]> = left.iter().map(|&p| args[p]).collect();
            let zeta_args: Vec<&[S]> = (0..total).filter(|&p| !in_left[p]).map(|p| args[p]).collect();
            let term = self.eta.eval_in(x, &eta_args) * self.zeta.eval_in(x, &zeta_args);
            acc = acc + S::from_f64(sign) * term;
        }
        acc
    }
}

struct DRhoRoutine {
    ctx: BracketContext,
    f: SmoothField,
}

impl FormFn for DRhoRoutine {
    fn degree(&self) -> usize {
        1
    }
    fn dim_base(&self) -> usize {
        self.ctx.base.dim()
    }
    fn dim_fiber(&self) -> usize {
        self.ctx.fiber_dim
    }
    fn eval<S: Scalar>(&self, x: &[S], args: &[&[S]]) -> S {
        let rho_v = self.ctx.anchor.apply_matrix(x, args[0]);
        directional_in(&self.f, x, &rho_v)[0]
    }
}

/// Differentiate y ↦ ω_y(args) along a direction, holding the arguments
/// constant (the constant-representative evaluation).
fn form_derivative_along<S: Scalar>(omega: &KForm, x: &[S], args: &[&[S]], dir: &[S]) -> S {
    let xl: Vec<S::Lift> = x.iter().zip(dir).map(|(&a, &b)| S::lift(a, b)).collect();
    let args_l: Vec<Vec<S::Lift>> = args
        .iter()
        .map(|a| a.iter().map(|&v| S::lift(v, S::zero())).collect())
        .collect();
    let arg_refs: Vec<&[S::Lift]> = args_l.iter().map(|a| a.as_slice()).collect();
    S::dot_part(omega.eval_in(&xl, &arg_refs))
}

struct LieDerivRoutine {
    ctx: BracketContext,
    a: Section,
    omega: KForm,
}

impl FormFn for LieDerivRoutine {
    fn degree(&self) -> usize {
        self.omega.degree()
    }
    fn dim_base(&self) -> usize {
        self.ctx.base.dim()
    }
    fn dim_fiber(&self) -> usize {
        self.ctx.fiber_dim
    }
    fn eval<S: Scalar>(&self, x: &[S], args: &[&[S]]) -> S {
        let av = self.a.eval_in(x);
        let rho_a = self.ctx.anchor.apply_matrix(x, &av);
        // Transport term: derivative of the evaluation along ρ(a).
        let mut acc = form_derivative_along(&self.omega, x, args, &rho_a);
        // Minus the bracket insertions [a, v̄ᵢ] = C_x(a, vᵢ) − da(ρ vᵢ).
        for (i, v) in args.iter().enumerate() {
            let c = self.ctx.structure.apply_bilinear(x, &av, v);
            let rho_v = self.ctx.anchor.apply_matrix(x, v);
            let da = directional_in(self.a.field(), x, &rho_v);
            let br: Vec<S> = c.iter().zip(&da).map(|(&u, &w)| u - w).collect();
            let mut replaced: Vec<&[S]> = args.to_vec();
            replaced[i] = &br;
            acc = acc - self.omega.eval_in(x, &replaced);
        }
        acc
    }
}

struct ExtDerivRoutine {
    ctx: BracketContext,
    omega: KForm,
}

impl FormFn for ExtDerivRoutine {
    fn degree(&self) -> usize {
        self.omega.degree() + 1
    }
    fn dim_base(&self) -> usize {
        self.ctx.base.dim()
    }
    fn dim_fiber(&self) -> usize {
        self.ctx.fiber_dim
    }
    fn eval<S: Scalar>(&self, x: &[S], args: &[&[S]]) -> S {
        let mut acc = S::zero();
        // Σᵢ (−1)ⁱ d(ω(v₀…v̂ᵢ…v_k)) along ρ(vᵢ).
        for (i, v) in args.iter().enumerate() {
            let rest: Vec<&[S]> = args
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, a)| *a)
                .collect();
            let rho_v = self.ctx.anchor.apply_matrix(x, v);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            acc = acc
                + S::from_f64(sign) * form_derivative_along(&self.omega, x, &rest, &rho_v);
        }
        // Σ_{i<j} (−1)^{i+j} ω(C(vᵢ,vⱼ), v₀…v̂ᵢ…v̂ⱼ…).
        for i in 0..args.len() {
            for j in (i + 1)..args.len() {
                let c = self.ctx.structure.apply_bilinear(x, args[i], args[j]);
                let mut replaced: Vec<&[S]> = Vec::with_capacity(args.len() - 1);
                replaced.push(&c);
                for (l, a) in args.iter().enumerate() {
                    if l != i && l != j {
                        replaced.push(a);
                    }
                }
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                acc = acc + S::from_f64(sign) * self.omega.eval_in(x, &replaced);
            }
        }
        acc
    }
}

struct PullbackRoutine {
    morphism: BundleMorphism,
    omega: KForm,
}

impl FormFn for PullbackRoutine {
    fn degree(&self) -> usize {
        self.omega.degree()
    }
    fn dim_base(&self) -> usize {
        self.morphism.base_map.dim_in()
    }
    fn dim_fiber(&self) -> usize {
        match self.morphism.fiber_map.shape() {
            Shape::Matrix { cols, .. } => cols,
            _ => unreachable!("morphism fiber maps are matrix-shaped"),
        }
    }
    fn eval<S: Scalar>(&self, x: &[S], args: &[&[S]]) -> S {
        let psi = self.morphism.base_map.eval_in(x);
        let mapped: Vec<Vec<S>> = args
            .iter()
            .map(|a| self.morphism.fiber_map.apply_matrix(x, a))
            .collect();
        let refs: Vec<&[S]> = mapped.iter().map(|a| a.as_slice()).collect();
        self.omega.eval_in(&psi, &refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PolyTerm;

    fn tangent2() -> (LocalAlgebroid, BracketContext) {
        let alg = LocalAlgebroid::builtin("tangent").unwrap();
        let ctx = BracketContext::of(&alg);
        (alg, ctx)
    }

    fn coord_field(base: &BaseBox, powers: Vec<u32>) -> SmoothField {
        SmoothField::polynomial(
            base.clone(),
            Shape::Vector(1),
            vec![PolyTerm {
                coeff: 1.0,
                powers,
                out: 0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn basis_covectors_and_wedge_determinant() {
        let (alg, _) = tangent2();
        let dx1 = KForm::basis_covector(alg.base().clone(), 2, 0);
        let dx2 = KForm::basis_covector(alg.base().clone(), 2, 1);
        let w = wedge(&dx1, &dx2).unwrap();
        let x = [0.1, 0.2];
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        assert_eq!(w.eval(&x, &[&e1, &e2]).unwrap(), 1.0);
        assert_eq!(w.eval(&x, &[&e2, &e1]).unwrap(), -1.0);
    }

    #[test]
    fn triple_wedge_associates() {
        let base = BaseBox::unit(2);
        let fiber = 3;
        let dx: Vec<KForm> = (0..3)
            .map(|i| KForm::basis_covector(base.clone(), fiber, i))
            .collect();
        let left = wedge(&wedge(&dx[0], &dx[1]).unwrap(), &dx[2]).unwrap();
        let right = wedge(&dx[0], &wedge(&dx[1], &dx[2]).unwrap()).unwrap();
        let x = [0.0, 0.0];
        let e: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let args: Vec<&[f64]> = e.iter().map(|v| v.as_slice()).collect();
        assert_eq!(left.eval(&x, &args).unwrap(), 1.0);
        assert_eq!(right.eval(&x, &args).unwrap(), 1.0);
    }

    #[test]
    fn insert_into_two_form() {
        // i_{e₁}(dx₁∧dx₂) = dx₂.
        let base = BaseBox::unit(2);
        let dx1 = KForm::basis_covector(base.clone(), 2, 0);
        let dx2 = KForm::basis_covector(base.clone(), 2, 1);
        let w = wedge(&dx1, &dx2).unwrap();
        let a = Section::basis(base, 2, 0);
        let inserted = insert(&a, &w).unwrap();
        let v = [0.3, 0.8];
        assert!((inserted.eval(&[0.0, 0.0], &[&v]).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn insert_on_zero_form_is_zero() {
        let base = BaseBox::unit(2);
        let f = coord_field(&base, vec![1, 1]);
        let form = KForm::function(&f, 2).unwrap();
        let a = Section::basis(base, 2, 0);
        let z = insert(&a, &form).unwrap();
        assert_eq!(z.eval(&[0.4, 0.4], &[]).unwrap(), 0.0);
    }

    #[test]
    fn d_rho_is_gradient_on_tangent_context() {
        let (alg, ctx) = tangent2();
        let f = coord_field(alg.base(), vec![1, 1]);
        let df = d_rho_fn(&ctx, &f).unwrap();
        let x = [0.3, -0.5];
        assert!((df.eval(&x, &[&[1.0, 0.0]]).unwrap() - x[1]).abs() < 1e-14);
        assert!((df.eval(&x, &[&[0.0, 1.0]]).unwrap() - x[0]).abs() < 1e-14);
    }

    #[test]
    fn d_rho_vanishes_for_zero_anchor() {
        let alg = LocalAlgebroid::builtin("lie-algebra:so3").unwrap();
        let ctx = BracketContext::of(&alg);
        let f = coord_field(alg.base(), vec![1, 0]);
        let df = d_rho_fn(&ctx, &f).unwrap();
        assert_eq!(df.eval(&[0.2, 0.2], &[&[1.0, 0.0, 0.0]]).unwrap(), 0.0);
    }

    #[test]
    fn lie_derivative_of_dx1_along_x2d1() {
        // Tangent ℝ², a(x) = (x₂, 0): L_a dx₁ = dx₂ (symbolic oracle).
        let (alg, ctx) = tangent2();
        let a = Section::polynomial(
            alg.base().clone(),
            2,
            vec![PolyTerm {
                coeff: 1.0,
                powers: vec![0, 1],
                out: 0,
            }],
        )
        .unwrap();
        let dx1 = KForm::basis_covector(alg.base().clone(), 2, 0);
        let l = lie_derivative_form(&ctx, &a, &dx1).unwrap();
        let x = [0.4, 0.6];
        assert!((l.eval(&x, &[&[0.0, 1.0]]).unwrap() - 1.0).abs() < 1e-14);
        assert!(l.eval(&x, &[&[1.0, 0.0]]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn lie_derivative_zero_anchor_expansion() {
        // ρ = 0, constant C, constant ω and sections:
        // (L_aω)(b) = −ω(C(a, b)).
        let alg = LocalAlgebroid::builtin("lie-algebra:so3").unwrap();
        let ctx = BracketContext::of(&alg);
        let omega = KForm::basis_covector(alg.base().clone(), 3, 2); // dx₃
        let a = Section::basis(alg.base().clone(), 3, 0);
        let l = lie_derivative_form(&ctx, &a, &omega).unwrap();
        // C(e₁, e₂) = e₃ → (L_{e₁} dx₃)(e₂) = −1.
        assert!((l.eval(&[0.1, 0.1], &[&[0.0, 1.0, 0.0]]).unwrap() - (-1.0)).abs() < 1e-14);
    }

    #[test]
    fn lie_derivative_along_zero_section_is_zero() {
        let (alg, ctx) = tangent2();
        let omega = KForm::basis_covector(alg.base().clone(), 2, 0);
        let zero = Section::zero(alg.base().clone(), 2);
        let l = lie_derivative_form(&ctx, &zero, &omega).unwrap();
        assert_eq!(l.eval(&[0.3, 0.3], &[&[1.0, 1.0]]).unwrap(), 0.0);
    }

    #[test]
    fn exterior_derivative_of_x2_dx1() {
        // d(x₂ dx₁)(e₁, e₂) = −1 everywhere (de Rham oracle).
        let (alg, ctx) = tangent2();
        let coeff1 = coord_field(alg.base(), vec![0, 1]);
        let zero = SmoothField::constant(alg.base().clone(), Shape::Vector(1), vec![0.0]).unwrap();
        let omega = KForm::one_form(alg.base().clone(), vec![coeff1, zero]).unwrap();
        let d = exterior_derivative(&ctx, &omega).unwrap();
        let val = d.eval(&[0.25, -0.1], &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert!((val - (-1.0)).abs() < 1e-14);
    }

    #[test]
    fn exterior_derivative_of_constant_one_form_vanishes() {
        let (alg, ctx) = tangent2();
        let omega = KForm::basis_covector(alg.base().clone(), 2, 0);
        let d = exterior_derivative(&ctx, &omega).unwrap();
        assert_eq!(
            d.eval(&[0.3, 0.4], &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap(),
            0.0
        );
    }

    #[test]
    fn d_squared_vanishes_on_d_rho_f() {
        let (alg, ctx) = tangent2();
        let f = coord_field(alg.base(), vec![1, 1]);
        let df = d_rho_fn(&ctx, &f).unwrap();
        let ddf = exterior_derivative(&ctx, &df).unwrap();
        let val = ddf.eval(&[0.3, 0.6], &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert!(val.abs() < 1e-12);
    }

    #[test]
    fn exterior_matches_d_rho_on_functions() {
        let (alg, ctx) = tangent2();
        let f = coord_field(alg.base(), vec![2, 1]);
        let form = KForm::function(&f, 2).unwrap();
        let d1 = exterior_derivative(&ctx, &form).unwrap();
        let d2 = d_rho_fn(&ctx, &f).unwrap();
        let x = [0.4, -0.2];
        for v in [[1.0, 0.0], [0.0, 1.0], [0.3, -0.7]] {
            assert!(
                (d1.eval(&x, &[&v]).unwrap() - d2.eval(&x, &[&v]).unwrap()).abs() < 1e-14
            );
        }
    }

    #[test]
    fn pullback_identity_and_zero() {
        let (alg, _) = tangent2();
        let omega = KForm::basis_covector(alg.base().clone(), 2, 0);
        let id = BundleMorphism::identity(alg.base(), 2);
        let pb = pullback_form(&id, &omega).unwrap();
        let x = [0.3, 0.5];
        let v = [0.7, -0.2];
        assert_eq!(pb.eval(&x, &[&v]).unwrap(), omega.eval(&x, &[&v]).unwrap());

        let zero_fiber = SmoothField::zeros(
            alg.base().clone(),
            Shape::Matrix { rows: 2, cols: 2 },
        );
        let zero_morph = BundleMorphism::new(
            SmoothField::linear(
                alg.base().clone(),
                &nalgebra::DMatrix::identity(2, 2),
            )
            .unwrap(),
            zero_fiber,
        )
        .unwrap();
        let pb0 = pullback_form(&zero_morph, &omega).unwrap();
        assert_eq!(pb0.eval(&x, &[&v]).unwrap(), 0.0);
    }

    #[test]
    fn pullback_of_constant_covector_along_linear_map() {
        // ψ = T linear into a larger box, Φ = T: Φ*(ξ) = ξ∘T.
        let src = BaseBox::unit(2);
        let t = nalgebra::DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.0, 0.5]);
        let morph = BundleMorphism::linear(&src, &t, &t).unwrap();
        let omega = KForm::basis_covector(BaseBox::unit(2), 2, 0);
        let pb = pullback_form(&morph, &omega).unwrap();
        let v = [1.0, 1.0];
        // (ξ∘T)(v) = (T v)₁ = 0.75.
        assert!((pb.eval(&[0.1, 0.1], &[&v]).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn lam_defect_identity_is_zero() {
        let (alg, ctx) = tangent2();
        let id = BundleMorphism::identity(alg.base(), 2);
        let f = coord_field(alg.base(), vec![1, 1]);
        let omega = KForm::basis_covector(alg.base().clone(), 2, 0);
        let d = lam_defect(&ctx, &ctx, &id, &f, &omega, &[0.2, 0.3]).unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn lam_defect_linear_tangent_morphism_small() {
        let src = LocalAlgebroid::make_tangent(BaseBox::unit(2));
        let tgt = src.clone();
        let ctx1 = BracketContext::of(&src);
        let ctx2 = BracketContext::of(&tgt);
        let t = nalgebra::DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.0, 0.5]);
        let morph = BundleMorphism::linear(src.base(), &t, &t).unwrap();
        let f = coord_field(tgt.base(), vec![1, 1]);
        let c = coord_field(tgt.base(), vec![0, 1]);
        let zero =
            SmoothField::constant(tgt.base().clone(), Shape::Vector(1), vec![0.0]).unwrap();
        let omega = KForm::one_form(tgt.base().clone(), vec![c, zero]).unwrap();
        let d = lam_defect(&ctx1, &ctx2, &morph, &f, &omega, &[0.2, 0.3]).unwrap();
        assert!(d.max_abs() < 1e-9, "defect {}", d.max_abs());
    }

    #[test]
    fn form_coeffs_of_wedge() {
        let base = BaseBox::unit(2);
        let dx1 = KForm::basis_covector(base.clone(), 3, 0);
        let dx2 = KForm::basis_covector(base.clone(), 3, 1);
        let w = wedge(&dx1, &dx2).unwrap();
        // Coefficients on pairs (0,1), (0,2), (1,2).
        assert_eq!(form_coeffs(&w, &[0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    }
}
