//! Smooth fields on chart boxes.
//!
//! A [`SmoothField`] packages a type-erased evaluation routine with its
//! domain box and value shape. Values are flat `f64` slices whose layout is
//! described by [`Shape`]: plain vectors, row-major matrices (pointwise
//! linear maps), or trilinear arrays (pointwise bilinear maps). All
//! differentiation of fields happens through the jet entry points at the
//! bottom of this module.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jets::{ErasedField, Scalar, Smooth};

/// A product of closed intervals with nonempty interior: the local chart.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseBox {
    bounds: Vec<(f64, f64)>,
}

impl BaseBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::validation("box must have dimension ≥ 1"));
        }
        for &(lo, hi) in &bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::validation(format!(
                    "box interval [{lo}, {hi}] has empty interior"
                )));
            }
        }
        Ok(BaseBox { bounds })
    }

    /// The cube [-1, 1]^dim.
    pub fn unit(dim: usize) -> Self {
        BaseBox {
            bounds: vec![(-1.0, 1.0); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.bounds)
                .all(|(&xi, &(lo, hi))| lo <= xi && xi <= hi)
    }

    /// Strict interior membership, as required by every differential operation.
    pub fn interior_contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.bounds)
                .all(|(&xi, &(lo, hi))| lo < xi && xi < hi)
    }

    /// Cartesian product, used for fibered total spaces.
    pub fn product(&self, other: &BaseBox) -> BaseBox {
        let mut bounds = self.bounds.clone();
        bounds.extend_from_slice(&other.bounds);
        BaseBox { bounds }
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }
}

/// Value layout of a smooth field, over a flat `f64` buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    /// k-vector values.
    Vector(usize),
    /// Pointwise linear maps ℝ^cols → ℝ^rows, stored row-major.
    Matrix { rows: usize, cols: usize },
    /// Pointwise bilinear maps ℝ^left × ℝ^right → ℝ^out,
    /// stored as out-major `[o][l][r]`.
    Bilinear { out: usize, left: usize, right: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(k) => k,
            Shape::Matrix { rows, cols } => rows * cols,
            Shape::Bilinear { out, left, right } => out * left * right,
        }
    }
}

/// A smooth field: evaluation routine + domain box + value shape.
///
/// Cloning is cheap (the routine is behind an `Arc`); all fields are
/// immutable after construction and safe to evaluate concurrently.
#[derive(Clone)]
pub struct SmoothField {
    inner: Arc<dyn ErasedField>,
    domain: BaseBox,
    shape: Shape,
}

impl SmoothField {
    pub fn new(domain: BaseBox, shape: Shape, inner: Arc<dyn ErasedField>) -> Result<Self> {
        if inner.dim_in() != domain.dim() {
            return Err(Error::shape(format!(
                "field expects {} inputs but domain box has dimension {}",
                inner.dim_in(),
                domain.dim()
            )));
        }
        if inner.dim_out() != shape.len() {
            return Err(Error::shape(format!(
                "field produces {} outputs but shape requires {}",
                inner.dim_out(),
                shape.len()
            )));
        }
        Ok(SmoothField {
            inner,
            domain,
            shape,
        })
    }

    pub fn from_smooth<T: Smooth>(domain: BaseBox, shape: Shape, routine: T) -> Result<Self> {
        SmoothField::new(domain, shape, Arc::new(routine))
    }

    pub fn domain(&self) -> &BaseBox {
        &self.domain
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dim_in(&self) -> usize {
        self.domain.dim()
    }

    pub fn dim_out(&self) -> usize {
        self.shape.len()
    }

    /// Generic evaluation at any scalar kind; no domain check (jet points
    /// carry seeds, the f64 entry below checks instead).
    pub fn eval_in<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.dim_in());
        let mut out = vec![S::zero(); self.dim_out()];
        S::dispatch_field(self.inner.as_ref(), x, &mut out);
        out
    }

    /// Checked plain evaluation.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim_in() {
            return Err(Error::shape(format!(
                "point has dimension {}, field domain has {}",
                x.len(),
                self.dim_in()
            )));
        }
        if !self.domain.contains(x) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        Ok(self.eval_in(x))
    }

    /// Matrix-shaped field evaluated into a dense matrix.
    pub fn matrix_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let (rows, cols) = match self.shape {
            Shape::Matrix { rows, cols } => (rows, cols),
            other => {
                return Err(Error::shape(format!(
                    "matrix_at on a field of shape {other:?}"
                )))
            }
        };
        let flat = self.eval(x)?;
        Ok(DMatrix::from_row_slice(rows, cols, &flat))
    }

    /// Apply a matrix-shaped field to a fiber vector, generically.
    pub fn apply_matrix<S: Scalar>(&self, x: &[S], v: &[S]) -> Vec<S> {
        let (rows, cols) = match self.shape {
            Shape::Matrix { rows, cols } => (rows, cols),
            other => panic!("apply_matrix on a field of shape {other:?}"),
        };
        debug_assert_eq!(v.len(), cols);
        let flat = self.eval_in(x);
        let mut out = vec![S::zero(); rows];
        for r in 0..rows {
            let mut acc = S::zero();
            for c in 0..cols {
                acc = acc + flat[r * cols + c] * v[c];
            }
            out[r] = acc;
        }
        out
    }

    /// Apply a bilinear-shaped field to a pair of vectors, generically.
    pub fn apply_bilinear<S: Scalar>(&self, x: &[S], a: &[S], b: &[S]) -> Vec<S> {
        let (n_out, n_left, n_right) = match self.shape {
            Shape::Bilinear { out, left, right } => (out, left, right),
            other => panic!("apply_bilinear on a field of shape {other:?}"),
        };
        debug_assert_eq!(a.len(), n_left);
        debug_assert_eq!(b.len(), n_right);
        let flat = self.eval_in(x);
        let mut out = vec![S::zero(); n_out];
        for o in 0..n_out {
            let mut acc = S::zero();
            for l in 0..n_left {
                for r in 0..n_right {
                    acc = acc + flat[(o * n_left + l) * n_right + r] * a[l] * b[r];
                }
            }
            out[o] = acc;
        }
        out
    }

    // ----- common constructors -------------------------------------------

    pub fn constant(domain: BaseBox, shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::shape(format!(
                "constant field: {} values for shape of length {}",
                values.len(),
                shape.len()
            )));
        }
        let dim_in = domain.dim();
        SmoothField::from_smooth(domain, shape, ConstRoutine { dim_in, values })
    }

    /// Zero field of the given shape.
    pub fn zeros(domain: BaseBox, shape: Shape) -> Self {
        let values = vec![0.0; shape.len()];
        SmoothField::constant(domain, shape, values).expect("shape length matches by construction")
    }

    /// Constant matrix field x ↦ A.
    pub fn constant_matrix(domain: BaseBox, a: &DMatrix<f64>) -> Self {
        let shape = Shape::Matrix {
            rows: a.nrows(),
            cols: a.ncols(),
        };
        let mut flat = Vec::with_capacity(a.nrows() * a.ncols());
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                flat.push(a[(r, c)]);
            }
        }
        SmoothField::constant(domain, shape, flat).expect("shape length matches by construction")
    }

    /// Constant identity-matrix field on an n-dimensional fiber.
    pub fn identity_matrix(domain: BaseBox, n: usize) -> Self {
        SmoothField::constant_matrix(domain, &DMatrix::identity(n, n))
    }

    /// The linear field x ↦ A·x (values Vector(rows)).
    pub fn linear(domain: BaseBox, a: &DMatrix<f64>) -> Result<Self> {
        if a.ncols() != domain.dim() {
            return Err(Error::shape(format!(
                "linear field: matrix has {} columns, domain dimension is {}",
                a.ncols(),
                domain.dim()
            )));
        }
        let rows = a.nrows();
        let cols = a.ncols();
        let mut flat = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                flat.push(a[(r, c)]);
            }
        }
        SmoothField::from_smooth(
            domain,
            Shape::Vector(rows),
            LinearRoutine { rows, cols, flat },
        )
    }

    /// Polynomial field from monomial terms (see [`PolyTerm`]).
    pub fn polynomial(
        domain: BaseBox,
        shape: Shape,
        terms: Vec<PolyTerm>,
    ) -> Result<Self> {
        let dim_in = domain.dim();
        let dim_out = shape.len();
        for t in &terms {
            if t.powers.len() != dim_in {
                return Err(Error::shape(format!(
                    "polynomial term has {} exponents, domain dimension is {}",
                    t.powers.len(),
                    dim_in
                )));
            }
            if t.out >= dim_out {
                return Err(Error::shape(format!(
                    "polynomial term output index {} out of range (< {})",
                    t.out, dim_out
                )));
            }
        }
        SmoothField::from_smooth(
            domain,
            shape,
            PolyRoutine {
                dim_in,
                dim_out,
                terms,
            },
        )
    }

    /// Composition g ∘ h. `h` must produce vectors of g's input dimension;
    /// no range check is made here (callers validate on samples when needed).
    pub fn compose(g: &SmoothField, h: &SmoothField) -> Result<SmoothField> {
        if h.dim_out() != g.dim_in() {
            return Err(Error::shape(format!(
                "compose: inner field produces {} values, outer expects {}",
                h.dim_out(),
                g.dim_in()
            )));
        }
        SmoothField::new(
            h.domain().clone(),
            g.shape(),
            Arc::new(ComposeRoutine {
                outer: g.clone(),
                inner: h.clone(),
            }),
        )
    }

    /// Pointwise product of a scalar field and this field.
    pub fn scaled_by(&self, f: &SmoothField) -> Result<SmoothField> {
        if f.shape() != Shape::Vector(1) {
            return Err(Error::shape("scaled_by expects a scalar field"));
        }
        if f.domain() != self.domain() {
            return Err(Error::shape("scaled_by: domain mismatch"));
        }
        SmoothField::new(
            self.domain.clone(),
            self.shape,
            Arc::new(ScaleRoutine {
                factor: f.clone(),
                field: self.clone(),
            }),
        )
    }

    /// Pointwise sum of same-shape fields.
    pub fn sum(fields: Vec<SmoothField>) -> Result<SmoothField> {
        let first = fields
            .first()
            .ok_or_else(|| Error::shape("sum of zero fields"))?;
        let shape = first.shape();
        let domain = first.domain().clone();
        for f in &fields {
            if f.shape() != shape || f.domain() != &domain {
                return Err(Error::shape("sum: shape or domain mismatch"));
            }
        }
        SmoothField::new(domain, shape, Arc::new(SumRoutine { fields }))
    }

    /// Pointwise difference.
    pub fn difference(a: &SmoothField, b: &SmoothField) -> Result<SmoothField> {
        if a.shape() != b.shape() || a.domain() != b.domain() {
            return Err(Error::shape("difference: shape or domain mismatch"));
        }
        SmoothField::new(
            a.domain().clone(),
            a.shape(),
            Arc::new(DiffRoutine {
                a: a.clone(),
                b: b.clone(),
            }),
        )
    }
}

/// One monomial: `coeff · Π xᵢ^powers[i]`, added into output slot `out`
/// (flat index into the field's shape).
#[derive(Clone, Debug, PartialEq)]
pub struct PolyTerm {
    pub coeff: f64,
    pub powers: Vec<u32>,
    pub out: usize,
}

struct ConstRoutine {
    dim_in: usize,
    values: Vec<f64>,
}

impl Smooth for ConstRoutine {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.values.len()
    }
    fn eval<S: Scalar>(&self, _x: &[S], out: &mut [S]) {
        for (o, &v) in out.iter_mut().zip(&self.values) {
            *o = S::from_f64(v);
        }
    }
}

struct LinearRoutine {
    rows: usize,
    cols: usize,
    flat: Vec<f64>,
}

impl Smooth for LinearRoutine {
    fn dim_in(&self) -> usize {
        self.cols
    }
    fn dim_out(&self) -> usize {
        self.rows
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        for r in 0..self.rows {
            let mut acc = S::zero();
            for c in 0..self.cols {
                acc = acc + S::from_f64(self.flat[r * self.cols + c]) * x[c];
            }
            out[r] = acc;
        }
    }
}

struct PolyRoutine {
    dim_in: usize,
    dim_out: usize,
    terms: Vec<PolyTerm>,
}

impl Smooth for PolyRoutine {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        for o in out.iter_mut() {
            *o = S::zero();
        }
        for t in &self.terms {
            let mut m = S::from_f64(t.coeff);
            for (xi, &p) in x.iter().zip(&t.powers) {
                m = m * crate::jets::spow(*xi, p);
            }
            out[t.out] = out[t.out] + m;
        }
    }
}

struct ComposeRoutine {
    outer: SmoothField,
    inner: SmoothField,
}

impl Smooth for ComposeRoutine {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.outer.dim_out()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let mid = self.inner.eval_in(x);
        out.copy_from_slice(&self.outer.eval_in(&mid));
    }
}

struct ScaleRoutine {
    factor: SmoothField,
    field: SmoothField,
}

impl Smooth for ScaleRoutine {
    fn dim_in(&self) -> usize {
        self.field.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.field.dim_out()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let f = self.factor.eval_in(x)[0];
        for (o, v) in out.iter_mut().zip(self.field.eval_in(x)) {
            *o = f * v;
        }
    }
}

struct SumRoutine {
    fields: Vec<SmoothField>,
}

impl Smooth for SumRoutine {
    fn dim_in(&self) -> usize {
        self.fields[0].dim_in()
    }
    fn dim_out(&self) -> usize {
        self.fields[0].dim_out()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        for o in out.iter_mut() {
            *o = S::zero();
        }
        for f in &self.fields {
            for (o, v) in out.iter_mut().zip(f.eval_in(x)) {
                *o = *o + v;
            }
        }
    }
}

struct DiffRoutine {
    a: SmoothField,
    b: SmoothField,
}

impl Smooth for DiffRoutine {
    fn dim_in(&self) -> usize {
        self.a.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.a.dim_out()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let av = self.a.eval_in(x);
        let bv = self.b.eval_in(x);
        for (o, (u, v)) in out.iter_mut().zip(av.into_iter().zip(bv)) {
            *o = u - v;
        }
    }
}

// ---------------------------------------------------------------------------
// Differentiation entry points
// ---------------------------------------------------------------------------

/// Directional derivative at any scalar depth: lifts `x` with seed `v` one
/// jet level and strips the derivative part of the result.
pub fn directional_in<S: Scalar>(field: &SmoothField, x: &[S], v: &[S]) -> Vec<S> {
    debug_assert_eq!(x.len(), v.len());
    let lifted: Vec<S::Lift> = x
        .iter()
        .zip(v)
        .map(|(&a, &b)| S::lift(a, b))
        .collect();
    field
        .eval_in::<S::Lift>(&lifted)
        .into_iter()
        .map(S::dot_part)
        .collect()
}

fn check_point(field: &SmoothField, x: &[f64]) -> Result<()> {
    if x.len() != field.dim_in() {
        return Err(Error::shape(format!(
            "point has dimension {}, field domain has {}",
            x.len(),
            field.dim_in()
        )));
    }
    if !field.domain().interior_contains(x) {
        return Err(Error::Domain { point: x.to_vec() });
    }
    Ok(())
}

/// First directional derivative of a field at an interior point.
pub fn directional(field: &SmoothField, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_point(field, x)?;
    if v.len() != x.len() {
        return Err(Error::shape(format!(
            "direction has dimension {}, expected {}",
            v.len(),
            x.len()
        )));
    }
    Ok(directional_in(field, x, v))
}

/// Full Jacobian: column j is the derivative along the j-th coordinate.
pub fn jacobian(field: &SmoothField, x: &[f64]) -> Result<DMatrix<f64>> {
    check_point(field, x)?;
    let d_in = field.dim_in();
    let d_out = field.dim_out();
    let mut jac = DMatrix::zeros(d_out, d_in);
    let mut e = vec![0.0; d_in];
    for j in 0..d_in {
        e[j] = 1.0;
        let col = directional_in(field, x, &e);
        for (i, c) in col.into_iter().enumerate() {
            jac[(i, j)] = c;
        }
        e[j] = 0.0;
    }
    Ok(jac)
}

/// Mixed second directional derivative ∂ᵤ∂ᵥ, via one doubly lifted pass.
pub fn second_directional(
    field: &SmoothField,
    x: &[f64],
    u: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    check_point(field, x)?;
    if u.len() != x.len() || v.len() != x.len() {
        return Err(Error::shape("seed dimension mismatch"));
    }
    let lifted: Vec<crate::jets::J2> = x
        .iter()
        .zip(u.iter().zip(v))
        .map(|(&xi, (&ui, &vi))| {
            crate::jets::J2::new(
                crate::jets::J1::new(xi, vi),
                crate::jets::J1::new(ui, 0.0),
            )
        })
        .collect();
    Ok(field
        .eval_in(&lifted)
        .into_iter()
        .map(|j| j.dot.dot)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly_xy() -> SmoothField {
        // f(x) = x₁·x₂ on [-2,2]².
        SmoothField::polynomial(
            BaseBox::new(vec![(-2.0, 2.0), (-2.0, 2.0)]).unwrap(),
            Shape::Vector(1),
            vec![PolyTerm {
                coeff: 1.0,
                powers: vec![1, 1],
                out: 0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn directional_of_product_monomial() {
        let f = poly_xy();
        let d = directional(&f, &[1.0, 1.5], &[1.0, 0.0]).unwrap();
        assert_eq!(d, vec![1.5]);
    }

    #[test]
    fn directional_of_constant_is_zero() {
        let f = SmoothField::constant(BaseBox::unit(2), Shape::Vector(3), vec![1.0, -2.0, 0.5])
            .unwrap();
        let d = directional(&f, &[0.1, 0.2], &[3.0, -4.0]).unwrap();
        assert_eq!(d, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn jacobian_of_linear_map_is_the_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let f = SmoothField::linear(BaseBox::unit(2), &a).unwrap();
        let j = jacobian(&f, &[0.3, -0.4]).unwrap();
        assert_eq!(j, a);
    }

    #[test]
    fn jacobian_matches_symbolic_oracle() {
        // f(x) = (x₁², x₁x₂) at (1,1): [[2,0],[1,1]].
        let f = SmoothField::polynomial(
            BaseBox::unit(2),
            Shape::Vector(2),
            vec![
                PolyTerm {
                    coeff: 1.0,
                    powers: vec![2, 0],
                    out: 0,
                },
                PolyTerm {
                    coeff: 1.0,
                    powers: vec![1, 1],
                    out: 1,
                },
            ],
        )
        .unwrap();
        let j = jacobian(&f, &[0.9, 0.9]).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.8, 0.0, 0.9, 0.9]);
        assert!((j - expect).abs().max() < 1e-14);
    }

    #[test]
    fn second_directional_mixed_partial() {
        let f = poly_xy();
        let d = second_directional(&f, &[0.5, 0.5], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn second_directional_zero_seed() {
        let f = poly_xy();
        let d = second_directional(&f, &[0.5, 0.5], &[0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(d, vec![0.0]);
    }

    #[test]
    fn second_directional_cubic() {
        // f(x) = x₁³ at x₁ = 2 (box wide enough), u = v = e₁ → 12.
        let f = SmoothField::polynomial(
            BaseBox::new(vec![(-3.0, 3.0)]).unwrap(),
            Shape::Vector(1),
            vec![PolyTerm {
                coeff: 1.0,
                powers: vec![3],
                out: 0,
            }],
        )
        .unwrap();
        let d = second_directional(&f, &[2.0], &[1.0], &[1.0]).unwrap();
        assert!((d[0] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_point_rejected() {
        let f = poly_xy();
        assert!(matches!(
            directional(&f, &[2.0, 0.0], &[1.0, 0.0]),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let f = poly_xy();
        assert!(matches!(
            directional(&f, &[0.0, 0.0], &[1.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn compose_chain_rule_matches() {
        // h(x) = (x₁², x₂), g(y) = y₁·y₂; g∘h = x₁²·x₂.
        let h = SmoothField::polynomial(
            BaseBox::unit(2),
            Shape::Vector(2),
            vec![
                PolyTerm {
                    coeff: 1.0,
                    powers: vec![2, 0],
                    out: 0,
                },
                PolyTerm {
                    coeff: 1.0,
                    powers: vec![0, 1],
                    out: 1,
                },
            ],
        )
        .unwrap();
        let g = poly_xy();
        let gh = SmoothField::compose(&g, &h).unwrap();
        let x = [0.4, -0.3];
        let d = directional(&gh, &x, &[1.0, 0.0]).unwrap();
        // d/dx₁ (x₁² x₂) = 2 x₁ x₂.
        assert!((d[0] - 2.0 * 0.4 * -0.3).abs() < 1e-14);
    }
}
