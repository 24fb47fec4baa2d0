//! Local models of Lie algebroids on a single chart box.
//!
//! A [`LocalAlgebroid`] is a chart box, a fiber dimension n, an anchor field
//! ρ (pointwise linear maps fiber → base tangent) and a structure field C
//! (pointwise antisymmetric bilinear maps fiber × fiber → fiber). The bracket
//! of two sections is realized directly in the trivialization:
//!
//! ```text
//! [a₁, a₂](x) = C_x(a₁(x), a₂(x)) + d a₂(ρ_x a₁(x)) − d a₁(ρ_x a₂(x))
//! ```
//!
//! with the transport terms computed exactly through jets. Everything else in
//! the module is a defect operation: it evaluates both sides of an identity
//! the structure is supposed to satisfy (Leibniz, 1-jet locality, Jacobi,
//! anchor morphism, morphism compatibility) and returns the difference, so
//! the test suites can assert it is numerically zero — or, for deliberate
//! counterexamples, is not.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::{
    directional_in, jacobian, BaseBox, PolyTerm, Shape, SmoothField,
};
use crate::jets::{Scalar, Smooth};
use crate::sample::{sample_box, Sampling};

/// A smooth section of the (trivialized) bundle: an ℝⁿ-valued field on the
/// chart box.
#[derive(Clone)]
pub struct Section {
    field: SmoothField,
}

impl Section {
    pub fn from_field(field: SmoothField) -> Result<Self> {
        match field.shape() {
            Shape::Vector(_) => Ok(Section { field }),
            other => Err(Error::shape(format!(
                "section must be vector-valued, got {other:?}"
            ))),
        }
    }

    pub fn constant(base: BaseBox, values: Vec<f64>) -> Self {
        let n = values.len();
        Section {
            field: SmoothField::constant(base, Shape::Vector(n), values)
                .expect("shape length matches"),
        }
    }

    /// The i-th constant basis section e_i of an n-dimensional fiber.
    pub fn basis(base: BaseBox, n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Section::constant(base, v)
    }

    pub fn zero(base: BaseBox, n: usize) -> Self {
        Section::constant(base, vec![0.0; n])
    }

    pub fn polynomial(base: BaseBox, n: usize, terms: Vec<PolyTerm>) -> Result<Self> {
        Ok(Section {
            field: SmoothField::polynomial(base, Shape::Vector(n), terms)?,
        })
    }

    pub fn field(&self) -> &SmoothField {
        &self.field
    }

    pub fn dim(&self) -> usize {
        self.field.dim_out()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.field.eval(x)
    }

    pub fn eval_in<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.field.eval_in(x)
    }

    /// Pointwise scaling by a scalar field.
    pub fn scaled_by(&self, f: &SmoothField) -> Result<Section> {
        Ok(Section {
            field: self.field.scaled_by(f)?,
        })
    }

    /// A deterministic pseudo-random polynomial section (degree ≤ 2,
    /// coefficients in [−1, 1]) — the generator behind sampled property
    /// checks over "generic" sections.
    pub fn seeded(base: BaseBox, n: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = base.dim();
        let mut coeff = |powers: Vec<u32>, out: usize| PolyTerm {
            coeff: rng.gen_range(-1.0..1.0),
            powers,
            out,
        };
        let mut terms = Vec::new();
        for out in 0..n {
            terms.push(coeff(vec![0; m], out));
            for d in 0..m {
                let mut p = vec![0; m];
                p[d] = 1;
                terms.push(coeff(p, out));
            }
            let mut q = vec![0; m];
            q[out % m] += 1;
            q[(out + 1) % m] += 1;
            terms.push(coeff(q, out));
        }
        Section::polynomial(base, n, terms).expect("seeded terms are well-shaped")
    }
}

/// Variant selector for the Nijenhuis tensor; see [`LocalAlgebroid::nijenhuis`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NijenhuisVariant {
    /// Last term −[a,b]. Function-linear only when A² = −Id.
    #[default]
    Involutive,
    /// Last term +A²[a,b]; the fully tensorial formula.
    General,
}

/// Rank/nullity report for the anchor at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelDiagnostics {
    pub rank: usize,
    pub nullity: usize,
    pub image_dim: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// Set when singular values sit within a decade of the rank cutoff, i.e.
    /// the rank decision is numerically borderline.
    pub condition_warning: bool,
}

/// A bundle morphism over a base map: ψ between chart boxes, plus a field of
/// fiber-linear maps Φ on the source box.
#[derive(Clone)]
pub struct BundleMorphism {
    pub base_map: SmoothField,
    pub fiber_map: SmoothField,
}

impl BundleMorphism {
    pub fn new(base_map: SmoothField, fiber_map: SmoothField) -> Result<Self> {
        match base_map.shape() {
            Shape::Vector(_) => {}
            other => {
                return Err(Error::shape(format!(
                    "morphism base map must be vector-valued, got {other:?}"
                )))
            }
        }
        match fiber_map.shape() {
            Shape::Matrix { .. } => {}
            other => {
                return Err(Error::shape(format!(
                    "morphism fiber map must be matrix-valued, got {other:?}"
                )))
            }
        }
        if base_map.domain() != fiber_map.domain() {
            return Err(Error::shape("morphism base/fiber maps domain mismatch"));
        }
        Ok(BundleMorphism {
            base_map,
            fiber_map,
        })
    }

    /// Identity morphism of a trivialized bundle.
    pub fn identity(base: &BaseBox, fiber_dim: usize) -> Self {
        let base_map = SmoothField::linear(base.clone(), &DMatrix::identity(base.dim(), base.dim()))
            .expect("identity base map");
        let fiber_map = SmoothField::identity_matrix(base.clone(), fiber_dim);
        BundleMorphism {
            base_map,
            fiber_map,
        }
    }

    /// Linear morphism: base map x ↦ T·x, constant fiber map F.
    pub fn linear(source: &BaseBox, t: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<Self> {
        BundleMorphism::new(
            SmoothField::linear(source.clone(), t)?,
            SmoothField::constant_matrix(source.clone(), f),
        )
    }
}

/// Defect record of the Lie-morphism conditions; see
/// [`LocalAlgebroid::lie_morphism_defect`].
#[derive(Clone, Debug)]
pub struct LieMorphismDefect {
    /// ρ₂∘Φ − Tψ∘ρ₁ at x, flattened row-major (m₂ × n₁).
    pub lm1: Vec<f64>,
    /// Relatedness defects Φ(x)·aᵢ(x) − aᵢ′(ψ(x)) for the two section pairs.
    pub rs: [Vec<f64>; 2],
    /// Φ([a₁,a₂]₁)(x) − [a₁′,a₂′]₂(ψ(x)); meaningful only when `rs` vanish.
    pub lm2: Vec<f64>,
}

impl LieMorphismDefect {
    pub fn max_abs(&self) -> f64 {
        self.lm1
            .iter()
            .chain(self.rs[0].iter())
            .chain(self.rs[1].iter())
            .chain(self.lm2.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// The local model: chart box, fiber, anchor, structure field.
#[derive(Clone)]
pub struct LocalAlgebroid {
    base: BaseBox,
    fiber_dim: usize,
    anchor: SmoothField,
    structure: SmoothField,
    claims_jacobi: bool,
}

impl LocalAlgebroid {
    /// General constructor; validates shapes and (sampled) antisymmetry of
    /// the structure field to 1e-12.
    pub fn from_fields(
        base: BaseBox,
        fiber_dim: usize,
        anchor: SmoothField,
        structure: SmoothField,
        claims_jacobi: bool,
    ) -> Result<Self> {
        let m = base.dim();
        if anchor.domain() != &base || structure.domain() != &base {
            return Err(Error::shape("anchor/structure domain must equal the base box"));
        }
        if anchor.shape() != (Shape::Matrix { rows: m, cols: fiber_dim }) {
            return Err(Error::shape(format!(
                "anchor must have shape {m}×{fiber_dim}, got {:?}",
                anchor.shape()
            )));
        }
        if structure.shape()
            != (Shape::Bilinear {
                out: fiber_dim,
                left: fiber_dim,
                right: fiber_dim,
            })
        {
            return Err(Error::shape(format!(
                "structure must be bilinear {fiber_dim}×{fiber_dim} → {fiber_dim}, got {:?}",
                structure.shape()
            )));
        }
        let alg = LocalAlgebroid {
            base,
            fiber_dim,
            anchor,
            structure,
            claims_jacobi,
        };
        alg.validate_antisymmetry(1e-12)?;
        Ok(alg)
    }

    fn validate_antisymmetry(&self, tol: f64) -> Result<()> {
        let n = self.fiber_dim;
        let samples = sample_box(&self.base, &Sampling { count: 16, ..Default::default() });
        for x in &samples {
            let flat = self.structure.eval(x)?;
            for o in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let cij = flat[(o * n + i) * n + j];
                        let cji = flat[(o * n + j) * n + i];
                        if (cij + cji).abs() > tol {
                            return Err(Error::validation(format!(
                                "structure field is not antisymmetric at {x:?}: \
                                 C[{o}][{i}][{j}] + C[{o}][{j}][{i}] = {}",
                                cij + cji
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Tangent-algebroid model: n = m, ρ = Id, C = 0.
    pub fn make_tangent(base: BaseBox) -> Self {
        let m = base.dim();
        let anchor = SmoothField::identity_matrix(base.clone(), m);
        let structure = SmoothField::zeros(
            base.clone(),
            Shape::Bilinear {
                out: m,
                left: m,
                right: m,
            },
        );
        LocalAlgebroid {
            base,
            fiber_dim: m,
            anchor,
            structure,
            claims_jacobi: true,
        }
    }

    /// Bundle of Lie algebras: ρ = 0, C constant. `constants` is the flat
    /// `[k][i][j]` array with C(eᵢ,eⱼ) = Σ_k constants[k][i][j]·e_k.
    pub fn make_lie_algebra_bundle(
        base: BaseBox,
        fiber_dim: usize,
        constants: Vec<f64>,
        claims_jacobi: bool,
    ) -> Result<Self> {
        let n = fiber_dim;
        if constants.len() != n * n * n {
            return Err(Error::shape(format!(
                "expected {} structure constants, got {}",
                n * n * n,
                constants.len()
            )));
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let cij = constants[(k * n + i) * n + j];
                    let cji = constants[(k * n + j) * n + i];
                    if (cij + cji).abs() > 0.0 {
                        if (cij + cji).abs() > 1e-15 {
                            return Err(Error::validation(format!(
                                "structure constants not antisymmetric: \
                                 c[{k}][{i}][{j}] + c[{k}][{j}][{i}] = {}",
                                cij + cji
                            )));
                        }
                    }
                }
            }
        }
        let anchor = SmoothField::zeros(
            base.clone(),
            Shape::Matrix {
                rows: base.dim(),
                cols: n,
            },
        );
        let structure = SmoothField::constant(
            base.clone(),
            Shape::Bilinear {
                out: n,
                left: n,
                right: n,
            },
            constants,
        )?;
        Ok(LocalAlgebroid {
            base,
            fiber_dim: n,
            anchor,
            structure,
            claims_jacobi,
        })
    }

    /// Named instances used by scenarios and suites.
    ///
    /// - `"tangent"`: tangent algebroid of [-1,1]².
    /// - `"lie-algebra:so3"`: so(3) as a bundle of Lie algebras over [-1,1]²
    ///   (cross-product structure constants, zero anchor).
    /// - `"rank-drop"`: anchor diag(1, x₁) on [-1,1]², zero structure; the
    ///   anchor rank drops on the slice x₁ = 0 and the anchor-morphism
    ///   identity fails, so the instance does not claim Jacobi.
    /// - `"non-jacobi"`: constant structure with C(e₁,e₂) = e₁,
    ///   C(e₂,e₃) = e₂, C(e₁,e₃) = 0; its jacobiator on (e₁,e₂,e₃) is e₁.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "tangent" => Ok(LocalAlgebroid::make_tangent(BaseBox::unit(2))),
            "lie-algebra:so3" => {
                let n = 3;
                let mut c = vec![0.0; n * n * n];
                // Cross product: [e₁,e₂]=e₃, [e₂,e₃]=e₁, [e₃,e₁]=e₂.
                let mut set = |k: usize, i: usize, j: usize| {
                    c[(k * n + i) * n + j] = 1.0;
                    c[(k * n + j) * n + i] = -1.0;
                };
                set(2, 0, 1);
                set(0, 1, 2);
                set(1, 2, 0);
                LocalAlgebroid::make_lie_algebra_bundle(BaseBox::unit(2), n, c, true)
            }
            "rank-drop" => {
                let base = BaseBox::unit(2);
                // ρ_x = [[1, 0], [0, x₁]].
                let anchor = SmoothField::polynomial(
                    base.clone(),
                    Shape::Matrix { rows: 2, cols: 2 },
                    vec![
                        PolyTerm {
                            coeff: 1.0,
                            powers: vec![0, 0],
                            out: 0,
                        },
                        PolyTerm {
                            coeff: 1.0,
                            powers: vec![1, 0],
                            out: 3,
                        },
                    ],
                )?;
                let structure = SmoothField::zeros(
                    base.clone(),
                    Shape::Bilinear {
                        out: 2,
                        left: 2,
                        right: 2,
                    },
                );
                LocalAlgebroid::from_fields(base, 2, anchor, structure, false)
            }
            "non-jacobi" => {
                let n = 3;
                let mut c = vec![0.0; n * n * n];
                let mut set = |k: usize, i: usize, j: usize, v: f64| {
                    c[(k * n + i) * n + j] = v;
                    c[(k * n + j) * n + i] = -v;
                };
                set(0, 0, 1, 1.0); // C(e₁,e₂) = e₁
                set(1, 1, 2, 1.0); // C(e₂,e₃) = e₂
                LocalAlgebroid::make_lie_algebra_bundle(BaseBox::unit(2), n, c, false)
            }
            other => Err(Error::config(format!("unknown builtin instance '{other}'"))),
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

    pub fn claims_jacobi(&self) -> bool {
        self.claims_jacobi
    }

    /// A copy with the structure field replaced by zero (used to certify
    /// C-independence of vertical brackets in prolongations).
    pub fn with_zero_structure(&self) -> Self {
        let n = self.fiber_dim;
        LocalAlgebroid {
            base: self.base.clone(),
            fiber_dim: n,
            anchor: self.anchor.clone(),
            structure: SmoothField::zeros(
                self.base.clone(),
                Shape::Bilinear {
                    out: n,
                    left: n,
                    right: n,
                },
            ),
            claims_jacobi: false,
        }
    }

    fn check_section(&self, a: &Section, what: &str) -> Result<()> {
        if a.field().domain() != &self.base {
            return Err(Error::shape(format!("{what}: section domain ≠ algebroid base")));
        }
        if a.dim() != self.fiber_dim {
            return Err(Error::shape(format!(
                "{what}: section has fiber dimension {}, expected {}",
                a.dim(),
                self.fiber_dim
            )));
        }
        Ok(())
    }

    fn check_interior(&self, x: &[f64]) -> Result<()> {
        if !self.base.interior_contains(x) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        Ok(())
    }

    /// The bracket section `[a₁, a₂]`, evaluated lazily through the local
    /// formula (structure term plus jet transport terms).
    pub fn bracket(&self, a1: &Section, a2: &Section) -> Result<Section> {
        self.check_section(a1, "bracket")?;
        self.check_section(a2, "bracket")?;
        Section::from_field(SmoothField::from_smooth(
            self.base.clone(),
            Shape::Vector(self.fiber_dim),
            BracketRoutine {
                alg: self.clone(),
                a1: a1.clone(),
                a2: a2.clone(),
            },
        )?)
    }

    /// Leibniz defect: `[a₁, f·a₂](x) − f(x)[a₁,a₂](x) − (df(ρ a₁))(x)·a₂(x)`.
    pub fn leibniz_defect(
        &self,
        a1: &Section,
        a2: &Section,
        f: &SmoothField,
        x: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_interior(x)?;
        if f.shape() != Shape::Vector(1) || f.domain() != &self.base {
            return Err(Error::shape("leibniz_defect expects a scalar field on the base"));
        }
        let fa2 = a2.scaled_by(f)?;
        let lhs = self.bracket(a1, &fa2)?.eval(x)?;
        let br = self.bracket(a1, a2)?.eval(x)?;
        let fv = f.eval(x)?[0];
        let a1v = a1.eval(x)?;
        let rho_a1 = self.anchor.apply_matrix(x, &a1v);
        let dfr = directional_in(f, x, &rho_a1)[0];
        let a2v = a2.eval(x)?;
        Ok((0..self.fiber_dim)
            .map(|i| lhs[i] - fv * br[i] - dfr * a2v[i])
            .collect())
    }

    /// 1-jet locality defect: perturb `a` by fields vanishing to second order
    /// at x and measure the bracket change against probe partners.
    pub fn jet_dependence_defect(&self, a: &Section, x: &[f64]) -> Result<f64> {
        self.check_interior(x)?;
        self.check_section(a, "jet_dependence_defect")?;
        let n = self.fiber_dim;
        let base_br = |b: &Section, s: &Section| -> Result<Vec<f64>> {
            self.bracket(s, b)?.eval(x)
        };
        let mut worst = 0.0_f64;
        for k in 0..n {
            let mut w = vec![0.0; n];
            w[k] = 1.0;
            let bump = Section::from_field(SmoothField::from_smooth(
                self.base.clone(),
                Shape::Vector(n),
                QuadBumpRoutine {
                    center: x.to_vec(),
                    w,
                },
            )?)?;
            let perturbed = Section::from_field(SmoothField::sum(vec![
                a.field().clone(),
                bump.field().clone(),
            ])?)?;
            for i in 0..n {
                let b = Section::basis(self.base.clone(), n, i);
                let lhs = base_br(&b, &perturbed)?;
                let rhs = base_br(&b, a)?;
                for (u, v) in lhs.iter().zip(&rhs) {
                    worst = worst.max((u - v).abs());
                }
            }
        }
        Ok(worst)
    }

    /// The jacobiator `[a₁,[a₂,a₃]] + [a₂,[a₃,a₁]] + [a₃,[a₁,a₂]]` at x.
    pub fn jacobiator(
        &self,
        a1: &Section,
        a2: &Section,
        a3: &Section,
        x: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_interior(x)?;
        let t1 = self.bracket(a1, &self.bracket(a2, a3)?)?.eval(x)?;
        let t2 = self.bracket(a2, &self.bracket(a3, a1)?)?.eval(x)?;
        let t3 = self.bracket(a3, &self.bracket(a1, a2)?)?.eval(x)?;
        Ok((0..self.fiber_dim).map(|i| t1[i] + t2[i] + t3[i]).collect())
    }

    /// The vector field ρ∘a on the base box.
    pub fn anchored_field(&self, a: &Section) -> Result<SmoothField> {
        self.check_section(a, "anchored_field")?;
        SmoothField::from_smooth(
            self.base.clone(),
            Shape::Vector(self.base.dim()),
            AnchorApplyRoutine {
                anchor: self.anchor.clone(),
                a: a.clone(),
            },
        )
    }

    /// Anchor-morphism defect `ρ([a₁,a₂])(x) − [ρ∘a₁, ρ∘a₂](x)` (vector-field
    /// bracket on the right).
    pub fn anchor_morphism_defect(
        &self,
        a1: &Section,
        a2: &Section,
        x: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_interior(x)?;
        let br = self.bracket(a1, a2)?.eval(x)?;
        let lhs = self.anchor.apply_matrix(x, &br);
        let xf = self.anchored_field(a1)?;
        let yf = self.anchored_field(a2)?;
        let vf = vf_bracket(&xf, &yf)?;
        let rhs = vf.eval(x)?;
        Ok(lhs.iter().zip(&rhs).map(|(u, v)| u - v).collect())
    }

    /// Rank/nullity of the anchor at x, by SVD with relative cutoff 1e-10.
    pub fn kernel_diagnostics(&self, x: &[f64]) -> Result<KernelDiagnostics> {
        self.check_interior(x)?;
        let rho = self.anchor.matrix_at(x)?;
        Ok(kernel_diagnostics_of(&rho))
    }

    /// Lie derivative of an endomorphism field applied to b:
    /// `(L_a A)(b) = [a, A b] − A [a, b]` at x.
    pub fn lie_derivative_endo(
        &self,
        endo: &SmoothField,
        a: &Section,
        b: &Section,
        x: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_interior(x)?;
        self.check_endo(endo)?;
        let ab = self.apply_endo_section(endo, b)?;
        let t1 = self.bracket(a, &ab)?.eval(x)?;
        let br = self.bracket(a, b)?.eval(x)?;
        let t2 = endo.apply_matrix(x, &br);
        Ok(t1.iter().zip(&t2).map(|(u, v)| u - v).collect())
    }

    /// Nijenhuis tensor of an endomorphism field at x:
    /// `[Aa, Ab] − A[Aa, b] − A[a, Ab] + last`, with `last = −[a,b]`
    /// (`Involutive` variant, valid when A² = Id) or `last = A²[a,b]` (`General` variant).
    pub fn nijenhuis(
        &self,
        endo: &SmoothField,
        a: &Section,
        b: &Section,
        x: &[f64],
        variant: NijenhuisVariant,
    ) -> Result<Vec<f64>> {
        self.check_interior(x)?;
        self.check_endo(endo)?;
        let aa = self.apply_endo_section(endo, a)?;
        let ab = self.apply_endo_section(endo, b)?;
        let t1 = self.bracket(&aa, &ab)?.eval(x)?;
        let br_aab = self.bracket(&aa, b)?.eval(x)?;
        let t2 = endo.apply_matrix(x, &br_aab);
        let br_aab2 = self.bracket(a, &ab)?.eval(x)?;
        let t3 = endo.apply_matrix(x, &br_aab2);
        let br = self.bracket(a, b)?.eval(x)?;
        let last: Vec<f64> = match variant {
            NijenhuisVariant::Involutive => br.iter().map(|v| -v).collect(),
            NijenhuisVariant::General => {
                let once = endo.apply_matrix(x, &br);
                endo.apply_matrix(x, &once)
            }
        };
        Ok((0..self.fiber_dim)
            .map(|i| t1[i] - t2[i] - t3[i] + last[i])
            .collect())
    }

    /// Lie-morphism defects (anchor square, relatedness, bracket square)
    /// between this algebroid and a target, across a bundle morphism.
    pub fn lie_morphism_defect(
        &self,
        target: &LocalAlgebroid,
        morphism: &BundleMorphism,
        pair1: (&Section, &Section),
        pair2: (&Section, &Section),
        x: &[f64],
    ) -> Result<LieMorphismDefect> {
        self.check_interior(x)?;
        let psi_x = morphism.base_map.eval(x)?;
        if !target.base.contains(&psi_x) {
            return Err(Error::Domain { point: psi_x });
        }
        let phi = morphism.fiber_map.matrix_at(x)?;
        let lm1 = anchor_square_defect(self, target, morphism, x)?;
        let mut rs = [Vec::new(), Vec::new()];
        for (slot, (a, ap)) in [(0, (pair1.0, pair2.0)), (1, (pair1.1, pair2.1))] {
            let av = a.eval(x)?;
            let mapped = &phi * DMatrix::from_column_slice(av.len(), 1, &av);
            let apv = ap.eval(&psi_x)?;
            rs[slot] = (0..apv.len()).map(|i| mapped[(i, 0)] - apv[i]).collect();
        }
        let br1 = self.bracket(pair1.0, pair1.1)?.eval(x)?;
        let mapped = &phi * DMatrix::from_column_slice(br1.len(), 1, &br1);
        let br2 = target.bracket(pair2.0, pair2.1)?.eval(&psi_x)?;
        let lm2 = (0..br2.len()).map(|i| mapped[(i, 0)] - br2[i]).collect();
        Ok(LieMorphismDefect {
            lm1: lm1.as_slice().to_vec(),
            rs,
            lm2,
        })
    }

    fn check_endo(&self, endo: &SmoothField) -> Result<()> {
        let n = self.fiber_dim;
        if endo.shape() != (Shape::Matrix { rows: n, cols: n }) || endo.domain() != &self.base {
            return Err(Error::shape(format!(
                "endomorphism field must be {n}×{n} on the base box"
            )));
        }
        Ok(())
    }

    /// The section x ↦ A(x)·b(x).
    pub fn apply_endo_section(&self, endo: &SmoothField, b: &Section) -> Result<Section> {
        self.check_endo(endo)?;
        self.check_section(b, "apply_endo_section")?;
        Section::from_field(SmoothField::from_smooth(
            self.base.clone(),
            Shape::Vector(self.fiber_dim),
            EndoApplyRoutine {
                endo: endo.clone(),
                b: b.clone(),
            },
        )?)
    }
}

/// Rank diagnostics of a dense matrix with relative singular-value cutoff
/// 1e-10 and a borderline warning within a decade of the cutoff.
pub fn kernel_diagnostics_of(mat: &DMatrix<f64>) -> KernelDiagnostics {
    let n = mat.ncols();
    let svd = mat.clone().svd(false, false);
    let mut sigmas: Vec<f64> = svd.singular_values.iter().copied().collect();
    sigmas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma_max = sigmas.first().copied().unwrap_or(0.0);
    let sigma_min = sigmas.last().copied().unwrap_or(0.0);
    let cutoff = 1e-10 * sigma_max;
    let rank = sigmas.iter().filter(|&&s| s > cutoff).count();
    let condition_warning = sigmas
        .iter()
        .any(|&s| s > 0.0 && s > cutoff / 10.0 && s < cutoff * 10.0);
    KernelDiagnostics {
        rank,
        nullity: n - rank,
        image_dim: rank,
        sigma_max,
        sigma_min,
        condition_warning,
    }
}

/// Anchor-square defect ρ₂(ψ(x))·Φ(x) − Jψ(x)·ρ₁(x) of a morphism.
pub fn anchor_square_defect(
    source: &LocalAlgebroid,
    target: &LocalAlgebroid,
    morphism: &BundleMorphism,
    x: &[f64],
) -> Result<DMatrix<f64>> {
    let psi_x = morphism.base_map.eval(x)?;
    let rho2 = target.anchor.matrix_at(&psi_x)?;
    let phi = morphism.fiber_map.matrix_at(x)?;
    let jpsi = jacobian(&morphism.base_map, x)?;
    let rho1 = source.anchor.matrix_at(x)?;
    Ok(rho2 * phi - jpsi * rho1)
}

/// The vector-field bracket [X, Y] = dY·X − dX·Y as a field on the shared
/// domain box.
pub fn vf_bracket(xf: &SmoothField, yf: &SmoothField) -> Result<SmoothField> {
    let m = xf.dim_in();
    if xf.shape() != Shape::Vector(m) || yf.shape() != Shape::Vector(m) || xf.domain() != yf.domain()
    {
        return Err(Error::shape(
            "vf_bracket expects two vector fields of base dimension on the same box",
        ));
    }
    SmoothField::from_smooth(
        xf.domain().clone(),
        Shape::Vector(m),
        VfBracketRoutine {
            xf: xf.clone(),
            yf: yf.clone(),
        },
    )
}

struct BracketRoutine {
    alg: LocalAlgebroid,
    a1: Section,
    a2: Section,
}

impl Smooth for BracketRoutine {
    fn dim_in(&self) -> usize {
        self.alg.base.dim()
    }
    fn dim_out(&self) -> usize {
        self.alg.fiber_dim
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let a1v = self.a1.eval_in(x);
        let a2v = self.a2.eval_in(x);
        let c = self.alg.structure.apply_bilinear(x, &a1v, &a2v);
        let rho_a1 = self.alg.anchor.apply_matrix(x, &a1v);
        let rho_a2 = self.alg.anchor.apply_matrix(x, &a2v);
        let d_a2 = directional_in(self.a2.field(), x, &rho_a1);
        let d_a1 = directional_in(self.a1.field(), x, &rho_a2);
        for i in 0..out.len() {
            out[i] = c[i] + d_a2[i] - d_a1[i];
        }
    }
}

struct AnchorApplyRoutine {
    anchor: SmoothField,
    a: Section,
}

impl Smooth for AnchorApplyRoutine {
    fn dim_in(&self) -> usize {
        self.anchor.dim_in()
    }
    fn dim_out(&self) -> usize {
        match self.anchor.shape() {
            Shape::Matrix { rows, .. } => rows,
            _ => unreachable!("anchor is matrix-shaped"),
        }
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let av = self.a.eval_in(x);
        out.copy_from_slice(&self.anchor.apply_matrix(x, &av));
    }
}

struct EndoApplyRoutine {
    endo: SmoothField,
    b: Section,
}

impl Smooth for EndoApplyRoutine {
    fn dim_in(&self) -> usize {
        self.endo.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.b.dim()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let bv = self.b.eval_in(x);
        out.copy_from_slice(&self.endo.apply_matrix(x, &bv));
    }
}

struct VfBracketRoutine {
    xf: SmoothField,
    yf: SmoothField,
}

impl Smooth for VfBracketRoutine {
    fn dim_in(&self) -> usize {
        self.xf.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.xf.dim_out()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let xv = self.xf.eval_in(x);
        let yv = self.yf.eval_in(x);
        let dy_x = directional_in(&self.yf, x, &xv);
        let dx_y = directional_in(&self.xf, x, &yv);
        for i in 0..out.len() {
            out[i] = dy_x[i] - dx_y[i];
        }
    }
}

/// q(y) = ‖y − center‖² · w, vanishing to second order at the center.
struct QuadBumpRoutine {
    center: Vec<f64>,
    w: Vec<f64>,
}

impl Smooth for QuadBumpRoutine {
    fn dim_in(&self) -> usize {
        self.center.len()
    }
    fn dim_out(&self) -> usize {
        self.w.len()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let mut s = S::zero();
        for (xi, &ci) in x.iter().zip(&self.center) {
            let d = *xi - S::from_f64(ci);
            s = s + d * d;
        }
        for (o, &wi) in out.iter_mut().zip(&self.w) {
            *o = s * S::from_f64(wi);
        }
    }
}
