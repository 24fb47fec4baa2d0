//! Nonlinear connections on a prolongation, via Christoffel fields.
//!
//! A connection is materialized by a Christoffel field ϝ on the total box
//! (an e×n matrix, possibly depending on the fiber point), from which the
//! almost-product endomorphism
//!
//! ```text
//! N = [  I    0 ]
//!     [ −2ϝ  −I ]
//! ```
//!
//! is assembled. N² = I holds exactly by block algebra; the projectors are
//! h = (I+N)/2 and v = (I−N)/2, acting on a prolongation element (a, z) as
//! h(a, z) = (a, −ϝ(a)) and v(a, z) = (0, z + ϝ(a)). The difference of two
//! connections over the same prolongation is a semi-basic tensor δ = ϝ′ − ϝ.

use crate::algebroid::LocalAlgebroid;
use crate::error::{Error, Result};
use crate::field::{BaseBox, Shape, SmoothField};
use crate::jets::{Scalar, Smooth};
use crate::prolong::{ModuleSection, ProjectableSection, Prolongation};
use crate::sample::{sample_box, Sampling};

/// A nonlinear connection on a prolongation.
#[derive(Clone)]
pub struct Connection {
    prol: Prolongation,
    christoffel: SmoothField,
    n_field: SmoothField,
}

struct NRoutine {
    christoffel: SmoothField,
    n: usize,
    e: usize,
}

impl Smooth for NRoutine {
    fn dim_in(&self) -> usize {
        self.christoffel.dim_in()
    }
    fn dim_out(&self) -> usize {
        let k = self.n + self.e;
        k * k
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let (n, e) = (self.n, self.e);
        let k = n + e;
        let gamma = self.christoffel.eval_in(x);
        for o in out.iter_mut() {
            *o = S::zero();
        }
        let two = S::from_f64(2.0);
        for i in 0..n {
            out[i * k + i] = S::one();
        }
        for r in 0..e {
            for c in 0..n {
                out[(n + r) * k + c] = S::zero() - two * gamma[r * n + c];
            }
            out[(n + r) * k + n + r] = S::zero() - S::one();
        }
    }
}

/// z-component of a horizontal lift: z(x, e) = −ϝ(x, e)·a(x).
struct HorizontalZRoutine {
    christoffel: SmoothField,
    a: crate::algebroid::Section,
    m: usize,
    e: usize,
}

impl Smooth for HorizontalZRoutine {
    fn dim_in(&self) -> usize {
        self.christoffel.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.e
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let av = self.a.eval_in(&x[..self.m]);
        let fa = self.christoffel.apply_matrix(x, &av);
        for (o, v) in out.iter_mut().zip(fa) {
            *o = S::zero() - v;
        }
    }
}

/// Christoffel field induced by a linear connection: ϝ(a) = Γ_x(ρ_x a, e).
struct LinearChristoffelRoutine {
    alg: LocalAlgebroid,
    gamma: SmoothField,
    e: usize,
}

impl Smooth for LinearChristoffelRoutine {
    fn dim_in(&self) -> usize {
        self.alg.base().dim() + self.e
    }
    fn dim_out(&self) -> usize {
        self.e * self.alg.fiber_dim()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let m = self.alg.base().dim();
        let n = self.alg.fiber_dim();
        let rho = self.alg.anchor().eval_in(&x[..m]);
        let fiber_pt = &x[m..];
        for c in 0..n {
            let col: Vec<S> = (0..m).map(|r| rho[r * n + c]).collect();
            let g = self.gamma.apply_bilinear(&x[..m], &col, fiber_pt);
            for r in 0..self.e {
                out[r * n + c] = g[r];
            }
        }
    }
}

impl Connection {
    /// Build a connection from its Christoffel field (e×n matrix on the
    /// total box). The assembled N is checked to square to the identity on
    /// sample points (exact by block algebra; the check guards shape slips).
    pub fn new(prol: Prolongation, christoffel: SmoothField) -> Result<Self> {
        let n = prol.fiber_dim();
        let e = prol.vertical_dim();
        if christoffel.domain() != prol.total_box()
            || christoffel.shape() != (Shape::Matrix { rows: e, cols: n })
        {
            return Err(Error::shape(
                "connection: Christoffel field must be an e×n matrix on the total box",
            ));
        }
        let n_field = SmoothField::from_smooth(
            prol.total_box().clone(),
            Shape::Matrix {
                rows: n + e,
                cols: n + e,
            },
            NRoutine {
                christoffel: christoffel.clone(),
                n,
                e,
            },
        )?;
        let conn = Connection {
            prol,
            christoffel,
            n_field,
        };
        let sampling = Sampling { count: 8, ..Default::default() };
        for p in sample_box(conn.prol.total_box(), &sampling) {
            if conn.block_identity_defect(&p)? > 1e-12 {
                return Err(Error::validation("connection: N does not square to I"));
            }
        }
        Ok(conn)
    }

    /// Flat connection: ϝ ≡ 0, so N = diag(I, −I).
    pub fn flat(prol: Prolongation) -> Result<Self> {
        let z = SmoothField::zeros(
            prol.total_box().clone(),
            Shape::Matrix {
                rows: prol.vertical_dim(),
                cols: prol.fiber_dim(),
            },
        );
        Connection::new(prol, z)
    }

    /// Connection induced by a linear connection on the fibration, given as
    /// a Christoffel bilinear field Γ on the base box (tangent × fiber →
    /// fiber): ϝ(a) = Γ_x(ρ_x a, e).
    pub fn from_linear_connection(prol: Prolongation, gamma: SmoothField) -> Result<Self> {
        let m = prol.base_dim();
        let e = prol.vertical_dim();
        if gamma.domain() != prol.alg().base()
            || gamma.shape()
                != (Shape::Bilinear {
                    out: e,
                    left: m,
                    right: e,
                })
        {
            return Err(Error::shape(
                "from_linear_connection: Γ must be a tangent×fiber→fiber bilinear field on the base",
            ));
        }
        let christoffel = SmoothField::from_smooth(
            prol.total_box().clone(),
            Shape::Matrix {
                rows: e,
                cols: prol.fiber_dim(),
            },
            LinearChristoffelRoutine {
                alg: prol.alg().clone(),
                gamma,
                e,
            },
        )?;
        Connection::new(prol, christoffel)
    }

    pub fn prolongation(&self) -> &Prolongation {
        &self.prol
    }

    pub fn christoffel(&self) -> &SmoothField {
        &self.christoffel
    }

    /// The almost-product endomorphism N as a matrix field on the total box
    /// (feeds the Nijenhuis operation of the derived algebroid).
    pub fn n_field(&self) -> &SmoothField {
        &self.n_field
    }

    fn split_checked<'w>(&self, at: &[f64], w: &'w [f64]) -> Result<(&'w [f64], &'w [f64])> {
        if !self.prol.total_box().interior_contains(at) {
            return Err(Error::Domain { point: at.to_vec() });
        }
        let n = self.prol.fiber_dim();
        if w.len() != n + self.prol.vertical_dim() {
            return Err(Error::shape("connection projector: element dimension"));
        }
        Ok((&w[..n], &w[n..]))
    }

    /// Horizontal projector: h(a, z) = (a, −ϝ(a)).
    pub fn horizontal(&self, at: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let (a, _z) = self.split_checked(at, w)?;
        let fa = self.christoffel.apply_matrix(at, a);
        Ok(a.iter().copied().chain(fa.iter().map(|v| -v)).collect())
    }

    /// Vertical projector: v(a, z) = (0, z + ϝ(a)).
    pub fn vertical(&self, at: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let (a, z) = self.split_checked(at, w)?;
        let fa = self.christoffel.apply_matrix(at, a);
        Ok(std::iter::repeat(0.0)
            .take(a.len())
            .chain(z.iter().zip(&fa).map(|(u, v)| u + v))
            .collect())
    }

    /// Max-abs defect over the block-algebra identities at one point:
    /// N² = I, h + v = I, h² = h, v² = v, hv = vh = 0, and the agreement of
    /// the matrix projectors (I±N)/2 with the componentwise formulas.
    pub fn block_identity_defect(&self, at: &[f64]) -> Result<f64> {
        let k = self.prol.fiber_dim() + self.prol.vertical_dim();
        let nm = self.n_field.matrix_at(at)?;
        let id = nalgebra::DMatrix::<f64>::identity(k, k);
        let h = (&id + &nm) * 0.5;
        let v = (&id - &nm) * 0.5;
        let mut worst = 0.0_f64;
        let mut track = |m: nalgebra::DMatrix<f64>| {
            worst = worst.max(m.abs().max());
        };
        track(&nm * &nm - &id);
        track(&h + &v - &id);
        track(&h * &h - &h);
        track(&v * &v - &v);
        track(&h * &v);
        track(&v * &h);
        // Componentwise formulas against the matrix projectors on basis
        // elements.
        for c in 0..k {
            let mut w = vec![0.0; k];
            w[c] = 1.0;
            let hw = self.horizontal(at, &w)?;
            let vw = self.vertical(at, &w)?;
            for r in 0..k {
                worst = worst.max((hw[r] - h[(r, c)]).abs());
                worst = worst.max((vw[r] - v[(r, c)]).abs());
            }
        }
        Ok(worst)
    }

    /// The horizontal lift of a base section: the projectable section
    /// (a, −ϝ(a)), wrapped as a one-term module section.
    pub fn horizontal_lift(&self, a: crate::algebroid::Section) -> Result<ModuleSection> {
        let z = SmoothField::from_smooth(
            self.prol.total_box().clone(),
            Shape::Vector(self.prol.vertical_dim()),
            HorizontalZRoutine {
                christoffel: self.christoffel.clone(),
                a: a.clone(),
                m: self.prol.base_dim(),
                e: self.prol.vertical_dim(),
            },
        )?;
        let x = ProjectableSection::new(&self.prol, a, z)?;
        Ok(ModuleSection::from_projectable(&self.prol, x))
    }
}

/// The semi-basic tensor δ = ϝ′ − ϝ measuring the difference of two
/// connections over the same prolongation.
#[derive(Clone)]
pub struct SemiBasicTensor {
    delta: SmoothField,
}

impl SemiBasicTensor {
    pub fn delta(&self) -> &SmoothField {
        &self.delta
    }

    /// δ applied to an a-vector at a point of the total box.
    pub fn apply(&self, at: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        if !self.delta.domain().interior_contains(at) {
            return Err(Error::Domain { point: at.to_vec() });
        }
        let Shape::Matrix { cols, .. } = self.delta.shape() else {
            unreachable!("semi-basic tensor is a matrix field");
        };
        if a.len() != cols {
            return Err(Error::shape("semi-basic tensor: argument dimension"));
        }
        Ok(self.delta.apply_matrix(at, a))
    }

    /// Shift a connection by this tensor: ϝ ↦ ϝ + δ.
    pub fn shift(&self, conn: &Connection) -> Result<Connection> {
        let christoffel = SmoothField::sum(vec![conn.christoffel().clone(), self.delta.clone()])?;
        Connection::new(conn.prolongation().clone(), christoffel)
    }
}

/// δ = ϝ′ − ϝ for two connections over the same prolongation.
pub fn semi_basic_difference(c2: &Connection, c1: &Connection) -> Result<SemiBasicTensor> {
    if c2.prolongation().total_box() != c1.prolongation().total_box()
        || c2.prolongation().fiber_dim() != c1.prolongation().fiber_dim()
    {
        return Err(Error::shape(
            "semi_basic_difference: connections live over different prolongations",
        ));
    }
    Ok(SemiBasicTensor {
        delta: SmoothField::difference(c2.christoffel(), c1.christoffel())?,
    })
}

/// Convenience: the unit fiber box used by self-prolongations.
pub fn unit_fiber(n: usize) -> BaseBox {
    BaseBox::unit(n)
}
