//! Finite projective and direct towers of local algebroids.
//!
//! A tower is a finite sequence of levels (algebroid + fibration) joined by
//! bonding triples: a base map between chart boxes, a linear map between
//! algebroid fibers, and a linear map between fibration fibers. Projective
//! towers bond downward (level j → level i for i < j); direct (ascending)
//! towers bond upward as inclusions. "The limit" is represented by the far
//! end of the sequence together with the checked compatibility family:
//! composite laws, anchor/bracket compatibility across bondings, prolongation
//! compatibility, thread transport, and Jacobian coherence for map sequences.
//!
//! Composite bondings are derived from the consecutive ones; explicit
//! overrides can be installed per level pair, which is how deliberately
//! broken towers are built for negative testing.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::algebroid::{
    anchor_square_defect, kernel_diagnostics_of, BundleMorphism, LocalAlgebroid, Section,
};
use crate::error::{Error, Result};
use crate::field::{directional_in, BaseBox, Shape, SmoothField};
use crate::jets::{Scalar, Smooth};
use crate::prolong::{Fibration, ModuleSection, ProjectableSection, Prolongation};
use crate::sample::{sample_box, Sampling};

/// Orientation of the bonding maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TowerKind {
    /// Bondings map level j → level i for i < j (downward).
    Projective,
    /// Bondings map level i → level j for i < j (upward inclusions).
    Direct,
}

/// One level of a tower.
#[derive(Clone)]
pub struct TowerLevel {
    pub alg: LocalAlgebroid,
    pub fib: Fibration,
}

/// Bonding data between two levels: a base map between chart boxes plus
/// linear maps on the algebroid and fibration fibers. An optional explicit
/// total map (on the total boxes) may be supplied; when absent the assembled
/// map (δ, ξ) is used implicitly and the trivialization square is exact.
#[derive(Clone)]
pub struct BondingTriple {
    pub base_map: SmoothField,
    pub alg_map: DMatrix<f64>,
    pub fib_map: DMatrix<f64>,
    pub total_map: Option<SmoothField>,
}

impl BondingTriple {
    pub fn linear(
        source_base: &BaseBox,
        base_mat: &DMatrix<f64>,
        alg_map: DMatrix<f64>,
        fib_map: DMatrix<f64>,
    ) -> Result<Self> {
        Ok(BondingTriple {
            base_map: SmoothField::linear(source_base.clone(), base_mat)?,
            alg_map,
            fib_map,
            total_map: None,
        })
    }

    fn identity(level: &TowerLevel) -> Self {
        let m = level.alg.base().dim();
        BondingTriple {
            base_map: SmoothField::linear(
                level.alg.base().clone(),
                &DMatrix::identity(m, m),
            )
            .expect("identity base map"),
            alg_map: DMatrix::identity(level.alg.fiber_dim(), level.alg.fiber_dim()),
            fib_map: DMatrix::identity(level.fib.fiber().dim(), level.fib.fiber().dim()),
            total_map: None,
        }
    }

    /// `outer ∘ inner` (outer applied after inner).
    fn compose_after(outer: &BondingTriple, inner: &BondingTriple) -> Result<BondingTriple> {
        Ok(BondingTriple {
            base_map: SmoothField::compose(&outer.base_map, &inner.base_map)?,
            alg_map: &outer.alg_map * &inner.alg_map,
            fib_map: &outer.fib_map * &inner.fib_map,
            total_map: None,
        })
    }
}

/// A finite tower of local algebroids with consecutive bondings.
#[derive(Clone)]
pub struct Tower {
    kind: TowerKind,
    levels: Vec<TowerLevel>,
    bondings: Vec<BondingTriple>,
    overrides: HashMap<(usize, usize), BondingTriple>,
}

impl Tower {
    pub fn new(kind: TowerKind, levels: Vec<TowerLevel>, bondings: Vec<BondingTriple>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::validation("tower needs at least two levels"));
        }
        if bondings.len() != levels.len() - 1 {
            return Err(Error::shape(format!(
                "tower with {} levels needs {} bondings, got {}",
                levels.len(),
                levels.len() - 1,
                bondings.len()
            )));
        }
        for (idx, level) in levels.iter().enumerate() {
            if level.fib.base() != level.alg.base() {
                return Err(Error::shape(format!(
                    "level {idx}: fibration base must equal algebroid base"
                )));
            }
        }
        let tower = Tower {
            kind,
            levels,
            bondings,
            overrides: HashMap::new(),
        };
        for k in 0..tower.bondings.len() {
            let (src, tgt) = tower.endpoints_of_bonding(k);
            let b = &tower.bondings[k];
            let (sl, tl) = (&tower.levels[src], &tower.levels[tgt]);
            if b.base_map.domain() != sl.alg.base()
                || b.base_map.shape() != Shape::Vector(tl.alg.base().dim())
            {
                return Err(Error::shape(format!("bonding {k}: base map shape")));
            }
            if b.alg_map.nrows() != tl.alg.fiber_dim() || b.alg_map.ncols() != sl.alg.fiber_dim() {
                return Err(Error::shape(format!("bonding {k}: algebroid fiber map shape")));
            }
            if b.fib_map.nrows() != tl.fib.fiber().dim() || b.fib_map.ncols() != sl.fib.fiber().dim()
            {
                return Err(Error::shape(format!("bonding {k}: fibration fiber map shape")));
            }
            if let Some(tm) = &b.total_map {
                if tm.domain() != &sl.fib.total() || tm.shape() != Shape::Vector(tl.fib.total().dim())
                {
                    return Err(Error::shape(format!("bonding {k}: total map shape")));
                }
            }
        }
        Ok(tower)
    }

    pub fn kind(&self) -> TowerKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn levels(&self) -> &[TowerLevel] {
        &self.levels
    }

    pub fn bondings(&self) -> &[BondingTriple] {
        &self.bondings
    }

    /// Install an explicit composite for a level pair (used to build broken
    /// towers for negative tests; a correct override is redundant).
    pub fn set_override(&mut self, i: usize, j: usize, triple: BondingTriple) {
        self.overrides.insert((i, j), triple);
    }

    /// (source level, target level) of consecutive bonding k.
    fn endpoints_of_bonding(&self, k: usize) -> (usize, usize) {
        match self.kind {
            TowerKind::Projective => (k + 1, k),
            TowerKind::Direct => (k, k + 1),
        }
    }

    /// (source level, target level) for the pair i < j.
    fn endpoints(&self, i: usize, j: usize) -> (usize, usize) {
        match self.kind {
            TowerKind::Projective => (j, i),
            TowerKind::Direct => (i, j),
        }
    }

    /// The derived composite bonding between levels i ≤ j.
    pub fn composite(&self, i: usize, j: usize) -> Result<BondingTriple> {
        if j >= self.levels.len() || i > j {
            return Err(Error::shape(format!("composite({i}, {j}): bad level pair")));
        }
        if i == j {
            return Ok(BondingTriple::identity(&self.levels[i]));
        }
        match self.kind {
            TowerKind::Projective => {
                // bondings[k] maps k+1 → k; chain j → j−1 → … → i.
                let mut cur = self.bondings[j - 1].clone();
                for k in (i..j - 1).rev() {
                    cur = BondingTriple::compose_after(&self.bondings[k], &cur)?;
                }
                Ok(cur)
            }
            TowerKind::Direct => {
                // bondings[k] maps k → k+1; chain i → i+1 → … → j.
                let mut cur = self.bondings[i].clone();
                for k in i + 1..j {
                    cur = BondingTriple::compose_after(&self.bondings[k], &cur)?;
                }
                Ok(cur)
            }
        }
    }

    fn composite_or_override(&self, i: usize, j: usize) -> Result<BondingTriple> {
        if let Some(t) = self.overrides.get(&(i, j)) {
            return Ok(t.clone());
        }
        self.composite(i, j)
    }

    /// Builtin fixtures:
    /// - `"tangent-projection"`: projective tower of tangent algebroids over
    ///   [-1,1]¹ ← [-1,1]² ← [-1,1]³ with coordinate projections.
    /// - `"tangent-inclusion"`: direct tower [-1,1]¹ ↪ [-1,1]² ↪ [-1,1]³
    ///   with coordinate inclusions.
    pub fn builtin(name: &str) -> Result<Tower> {
        let level = |dim: usize| {
            let base = BaseBox::unit(dim);
            TowerLevel {
                alg: LocalAlgebroid::make_tangent(base.clone()),
                fib: Fibration::new(base, BaseBox::unit(dim)),
            }
        };
        let proj = |rows: usize, cols: usize| {
            DMatrix::<f64>::identity(cols, cols).rows(0, rows).into_owned()
        };
        let incl = |rows: usize, cols: usize| {
            DMatrix::<f64>::identity(rows, rows).columns(0, cols).into_owned()
        };
        match name {
            "tangent-projection" => {
                let levels = vec![level(1), level(2), level(3)];
                let bondings = (0..2)
                    .map(|k| {
                        let (src, tgt) = (k + 2, k + 1); // dims of levels k+1, k
                        BondingTriple::linear(
                            levels[k + 1].alg.base(),
                            &proj(tgt, src),
                            proj(tgt, src),
                            proj(tgt, src),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Tower::new(TowerKind::Projective, levels, bondings)
            }
            "tangent-inclusion" => {
                let levels = vec![level(1), level(2), level(3)];
                let bondings = (0..2)
                    .map(|k| {
                        let (src, tgt) = (k + 1, k + 2); // dims of levels k, k+1
                        BondingTriple::linear(
                            levels[k].alg.base(),
                            &incl(tgt, src),
                            incl(tgt, src),
                            incl(tgt, src),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Tower::new(TowerKind::Direct, levels, bondings)
            }
            other => Err(Error::config(format!("unknown builtin tower '{other}'"))),
        }
    }

    /// Transport a point from the source end through every level: the
    /// resulting tuple is a thread by construction.
    pub fn transport_thread(&self, seed: &[f64]) -> Result<Vec<Vec<f64>>> {
        let l = self.levels.len();
        let mut thread = vec![Vec::new(); l];
        match self.kind {
            TowerKind::Projective => {
                thread[l - 1] = seed.to_vec();
                for k in (0..l - 1).rev() {
                    thread[k] = self.bondings[k].base_map.eval(&thread[k + 1])?;
                }
            }
            TowerKind::Direct => {
                thread[0] = seed.to_vec();
                for k in 0..l - 1 {
                    thread[k + 1] = self.bondings[k].base_map.eval(&thread[k])?;
                }
            }
        }
        Ok(thread)
    }

    /// Max over consecutive pairs of |bonding(source entry) − target entry|.
    pub fn thread_defect(&self, thread: &[Vec<f64>]) -> Result<f64> {
        if thread.len() != self.levels.len() {
            return Err(Error::shape(format!(
                "thread length {} does not match tower length {}",
                thread.len(),
                self.levels.len()
            )));
        }
        let mut worst = 0.0_f64;
        for k in 0..self.bondings.len() {
            let (src, tgt) = self.endpoints_of_bonding(k);
            let mapped = self.bondings[k].base_map.eval(&thread[src])?;
            if mapped.len() != thread[tgt].len() {
                return Err(Error::shape(format!("thread entry {tgt} has wrong dimension")));
            }
            for (u, v) in mapped.iter().zip(&thread[tgt]) {
                worst = worst.max((u - v).abs());
            }
        }
        Ok(worst)
    }
}

/// Outcome of the composite-law check.
#[derive(Clone, Debug)]
pub struct BondingLawReport {
    pub max_defect: f64,
    /// Level triple (i, j, k) realizing the max defect, if any is nonzero.
    pub worst_triple: Option<(usize, usize, usize)>,
}

/// δᵢⁱ = Id and δᵢʲ∘δⱼᵏ = δᵢᵏ (resp. the ascending composites for direct
/// towers), with overrides standing in for the stored composites.
pub fn check_bonding_laws(tower: &Tower, sampling: &Sampling) -> Result<BondingLawReport> {
    if tower.len() < 3 {
        return Err(Error::precondition(
            "composite law needs at least three levels",
        ));
    }
    let mut max_defect = 0.0_f64;
    let mut worst_triple = None;
    let mut track = |d: f64, triple: (usize, usize, usize)| {
        if d > max_defect {
            max_defect = d;
            worst_triple = Some(triple);
        }
    };
    for i in 0..tower.len() {
        for j in i + 1..tower.len() {
            for k in j + 1..tower.len() {
                let whole = tower.composite_or_override(i, k)?;
                let lower = tower.composite_or_override(i, j)?;
                let upper = tower.composite_or_override(j, k)?;
                let chained = match tower.kind() {
                    TowerKind::Projective => BondingTriple::compose_after(&lower, &upper)?,
                    TowerKind::Direct => BondingTriple::compose_after(&upper, &lower)?,
                };
                let (src, _) = tower.endpoints(i, k);
                let mut d = ((&whole.alg_map - &chained.alg_map).abs().max())
                    .max((&whole.fib_map - &chained.fib_map).abs().max());
                for p in sample_box(tower.levels()[src].alg.base(), sampling) {
                    let a = whole.base_map.eval(&p)?;
                    let b = chained.base_map.eval(&p)?;
                    for (u, v) in a.iter().zip(&b) {
                        d = d.max((u - v).abs());
                    }
                }
                track(d, (i, j, k));
            }
        }
    }
    // Identity law: only overrides can violate it.
    for i in 0..tower.len() {
        if tower.overrides.contains_key(&(i, i)) {
            let id = BondingTriple::identity(&tower.levels()[i]);
            let ov = tower.composite_or_override(i, i)?;
            let mut d = ((&ov.alg_map - &id.alg_map).abs().max())
                .max((&ov.fib_map - &id.fib_map).abs().max());
            for p in sample_box(tower.levels()[i].alg.base(), sampling) {
                for (u, v) in ov.base_map.eval(&p)?.iter().zip(&p) {
                    d = d.max((u - v).abs());
                }
            }
            track(d, (i, i, i));
        }
    }
    Ok(BondingLawReport {
        max_defect,
        worst_triple,
    })
}

/// Outcome of the anchored-sequence check.
#[derive(Clone, Debug)]
pub struct AnchoredSequenceReport {
    /// Max |ρ_tgt ∘ ζ − Tδ ∘ ρ_src| over samples and level pairs.
    pub anchor_defect: f64,
    /// Max bracket-square defect over sampled related section pairs.
    pub lm2_defect: f64,
}

fn pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::validation(format!("pseudo-inverse failed: {e}")))
}

/// Linearize a base map, verifying linearity on samples to 1e-10.
fn linear_matrix_of(base_map: &SmoothField, sampling: &Sampling) -> Result<DMatrix<f64>> {
    let center = base_map.domain().center();
    let mut d = DMatrix::zeros(base_map.dim_out(), base_map.dim_in());
    for c in 0..base_map.dim_in() {
        let mut dir = vec![0.0; base_map.dim_in()];
        dir[c] = 1.0;
        let col = directional_in(base_map, &center, &dir);
        for r in 0..base_map.dim_out() {
            d[(r, c)] = col[r];
        }
    }
    let probe = Sampling { count: 8, ..*sampling };
    for p in sample_box(base_map.domain(), &probe) {
        let v = base_map.eval(&p)?;
        for r in 0..base_map.dim_out() {
            let lin: f64 = (0..base_map.dim_in()).map(|c| d[(r, c)] * p[c]).sum();
            if (v[r] - lin).abs() > 1e-10 {
                return Err(Error::precondition(
                    "operation requires a linear base bonding map",
                ));
            }
        }
    }
    Ok(d)
}

/// A section pushed through matrices: y ↦ M · inner(P · y).
struct LiftSectionRoutine {
    inner: Section,
    mat: DMatrix<f64>,
    pre: DMatrix<f64>,
    dim_in: usize,
}

fn mat_apply<S: Scalar>(m: &DMatrix<f64>, v: &[S]) -> Vec<S> {
    (0..m.nrows())
        .map(|r| {
            let mut acc = S::zero();
            for c in 0..m.ncols() {
                acc = acc + S::from_f64(m[(r, c)]) * v[c];
            }
            acc
        })
        .collect()
}

impl Smooth for LiftSectionRoutine {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.mat.nrows()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let pulled = mat_apply(&self.pre, x);
        let v = self.inner.eval_in(&pulled);
        out.copy_from_slice(&mat_apply(&self.mat, &v));
    }
}

/// Build, for the composite between the endpoints of (i, j), the related
/// partner of a section seeded on the lower-dimensional end. Returns
/// (source section, target section) such that ζ·a_src = a_tgt∘δ exactly.
fn related_pair(
    tower: &Tower,
    i: usize,
    j: usize,
    seed: u64,
    sampling: &Sampling,
) -> Result<(Section, Section)> {
    let (src, tgt) = tower.endpoints(i, j);
    let triple = tower.composite(i, j)?;
    let d = linear_matrix_of(&triple.base_map, sampling)?;
    let src_level = &tower.levels()[src];
    let tgt_level = &tower.levels()[tgt];
    match tower.kind() {
        TowerKind::Projective => {
            // Seed downstairs (target), lift up: a_src = ζ⁺ · a_tgt ∘ δ.
            let a_tgt = Section::seeded(
                tgt_level.alg.base().clone(),
                tgt_level.alg.fiber_dim(),
                seed,
            );
            let a_src = Section::from_field(SmoothField::from_smooth(
                src_level.alg.base().clone(),
                Shape::Vector(src_level.alg.fiber_dim()),
                LiftSectionRoutine {
                    inner: a_tgt.clone(),
                    mat: pseudo_inverse(&triple.alg_map)?,
                    pre: d,
                    dim_in: src_level.alg.base().dim(),
                },
            )?)?;
            Ok((a_src, a_tgt))
        }
        TowerKind::Direct => {
            // Seed downstairs (source), push up: a_tgt = ζ · a_src ∘ δ⁺.
            let a_src = Section::seeded(
                src_level.alg.base().clone(),
                src_level.alg.fiber_dim(),
                seed,
            );
            let a_tgt = Section::from_field(SmoothField::from_smooth(
                tgt_level.alg.base().clone(),
                Shape::Vector(tgt_level.alg.fiber_dim()),
                LiftSectionRoutine {
                    inner: a_src.clone(),
                    mat: triple.alg_map.clone(),
                    pre: pseudo_inverse(&d)?,
                    dim_in: tgt_level.alg.base().dim(),
                },
            )?)?;
            Ok((a_src, a_tgt))
        }
    }
}

/// PSBLA-style compatibility: anchors commute with the bondings, and the
/// bracket square commutes on sampled related section pairs.
pub fn check_anchored_sequence(tower: &Tower, sampling: &Sampling) -> Result<AnchoredSequenceReport> {
    let mut anchor_defect = 0.0_f64;
    let mut lm2_defect = 0.0_f64;
    for i in 0..tower.len() {
        for j in i + 1..tower.len() {
            let (src, tgt) = tower.endpoints(i, j);
            let triple = tower.composite(i, j)?;
            let src_alg = &tower.levels()[src].alg;
            let tgt_alg = &tower.levels()[tgt].alg;
            let morphism = BundleMorphism::new(
                triple.base_map.clone(),
                SmoothField::constant_matrix(src_alg.base().clone(), &triple.alg_map),
            )?;
            let points = sample_box(src_alg.base(), sampling);
            for p in &points {
                let d = anchor_square_defect(src_alg, tgt_alg, &morphism, p)?;
                anchor_defect = anchor_defect.max(d.abs().max());
            }
            for pair in 0..4u64 {
                let (a_src, a_tgt) = related_pair(tower, i, j, 1000 + 17 * pair, sampling)?;
                let (b_src, b_tgt) = related_pair(tower, i, j, 2000 + 31 * pair, sampling)?;
                for p in points.iter().take(8) {
                    let d = src_alg.lie_morphism_defect(
                        tgt_alg,
                        &morphism,
                        (&a_src, &b_src),
                        (&a_tgt, &b_tgt),
                        p,
                    )?;
                    for v in d.lm2 {
                        lm2_defect = lm2_defect.max(v.abs());
                    }
                }
            }
        }
    }
    Ok(AnchoredSequenceReport {
        anchor_defect,
        lm2_defect,
    })
}

/// Outcome of the prolongation-compatibility / direct-sequence square check.
#[derive(Clone, Debug)]
pub struct ProlongCompatReport {
    /// All fiber images landed inside the target fiber boxes.
    pub containment_ok: bool,
    /// Largest distance by which an image escaped a target fiber box.
    pub worst_escape: f64,
    /// Max defect of the projection/trivialization square for bondings that
    /// carry an explicit total map (0 when all totals are derived).
    pub square_defect: f64,
}

fn compat_scan(tower: &Tower, sampling: &Sampling) -> Result<ProlongCompatReport> {
    let mut worst_escape = 0.0_f64;
    let mut square_defect = 0.0_f64;
    for k in 0..tower.bondings().len() {
        let (src, tgt) = tower.endpoints_of_bonding(k);
        let b = &tower.bondings()[k];
        let src_fiber = tower.levels()[src].fib.fiber();
        let tgt_fiber = tower.levels()[tgt].fib.fiber().clone();
        for w in sample_box(src_fiber, sampling) {
            let img = mat_apply(&b.fib_map, &w);
            for (c, &(lo, hi)) in img.iter().zip(tgt_fiber.bounds()) {
                let escape = (lo - c).max(c - hi).max(0.0);
                worst_escape = worst_escape.max(escape);
            }
        }
        if let Some(tm) = &b.total_map {
            let m_src = tower.levels()[src].alg.base().dim();
            let m_tgt = tower.levels()[tgt].alg.base().dim();
            for p in sample_box(&tower.levels()[src].fib.total(), sampling) {
                let t = tm.eval(&p)?;
                let base = b.base_map.eval(&p[..m_src])?;
                for (u, v) in t[..m_tgt].iter().zip(&base) {
                    square_defect = square_defect.max((u - v).abs());
                }
                let fib = mat_apply(&b.fib_map, &p[m_src..]);
                for (u, v) in t[m_tgt..].iter().zip(&fib) {
                    square_defect = square_defect.max((u - v).abs());
                }
            }
        }
    }
    Ok(ProlongCompatReport {
        containment_ok: worst_escape == 0.0,
        worst_escape,
        square_defect,
    })
}

/// Prolongation compatibility: fiber images stay inside the target fiber
/// boxes and the projection square commutes.
pub fn check_prolong_compat(tower: &Tower, sampling: &Sampling) -> Result<ProlongCompatReport> {
    compat_scan(tower, sampling)
}

/// Outcome of the direct-sequence check.
#[derive(Clone, Debug)]
pub struct DirectSequenceReport {
    /// All bonding fiber maps have full column rank (embeddings).
    pub injective: bool,
    pub compat: ProlongCompatReport,
}

/// Ascending-sequence axioms for direct towers: injective bondings plus the
/// square/nesting checks.
pub fn check_direct_sequence(tower: &Tower, sampling: &Sampling) -> Result<DirectSequenceReport> {
    if tower.kind() != TowerKind::Direct {
        return Err(Error::precondition("direct-sequence check needs a direct tower"));
    }
    let mut injective = true;
    for b in tower.bondings() {
        for m in [&b.alg_map, &b.fib_map] {
            if kernel_diagnostics_of(m).rank != m.ncols() {
                injective = false;
            }
        }
    }
    Ok(DirectSequenceReport {
        injective,
        compat: compat_scan(tower, sampling)?,
    })
}

/// Limit-bracket compatibility outcome.
#[derive(Clone, Debug)]
pub struct LimitBracketDefect {
    /// **T**ξ([X, X′]_src)(at) − [X_img, X′_img]_tgt(Ψ(at)).
    pub bracket_defect: Vec<f64>,
    /// Max relatedness defect of the bonded images over sample points;
    /// nonzero values mean the inputs were not ψ-related to begin with, and
    /// the bracket defect should be read as an RS violation instead.
    pub rs_defect: f64,
}

impl LimitBracketDefect {
    pub fn max_abs(&self) -> f64 {
        self.bracket_defect.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Scalar coefficient pulled back along the pseudo-inverse of Ψ.
struct PullScalarRoutine {
    f: SmoothField,
    d_pinv: DMatrix<f64>,
    x_pinv: DMatrix<f64>,
    m_tgt: usize,
    e_tgt: usize,
}

impl Smooth for PullScalarRoutine {
    fn dim_in(&self) -> usize {
        self.m_tgt + self.e_tgt
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let mut p = mat_apply(&self.d_pinv, &x[..self.m_tgt]);
        p.extend(mat_apply(&self.x_pinv, &x[self.m_tgt..]));
        out[0] = self.f.eval_in(&p)[0];
    }
}

/// z-field pushed through Ξ along the pseudo-inverse of Ψ.
struct PushZRoutine {
    z: SmoothField,
    x_mat: DMatrix<f64>,
    d_pinv: DMatrix<f64>,
    x_pinv: DMatrix<f64>,
    m_tgt: usize,
    e_tgt: usize,
}

impl Smooth for PushZRoutine {
    fn dim_in(&self) -> usize {
        self.m_tgt + self.e_tgt
    }
    fn dim_out(&self) -> usize {
        self.x_mat.nrows()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let mut p = mat_apply(&self.d_pinv, &x[..self.m_tgt]);
        p.extend(mat_apply(&self.x_pinv, &x[self.m_tgt..]));
        let v = self.z.eval_in(&p);
        out.copy_from_slice(&mat_apply(&self.x_mat, &v));
    }
}

/// The bonded image of a module section over the target prolongation.
fn bonded_image(
    prol_tgt: &Prolongation,
    sec: &ModuleSection,
    alg_map: &DMatrix<f64>,
    fib_map: &DMatrix<f64>,
    d_pinv: &DMatrix<f64>,
) -> Result<ModuleSection> {
    let m_tgt = prol_tgt.base_dim();
    let e_tgt = prol_tgt.vertical_dim();
    let x_pinv = pseudo_inverse(fib_map)?;
    let mut terms = Vec::new();
    for (f, x) in sec.terms() {
        let f_img = SmoothField::from_smooth(
            prol_tgt.total_box().clone(),
            Shape::Vector(1),
            PullScalarRoutine {
                f: f.clone(),
                d_pinv: d_pinv.clone(),
                x_pinv: x_pinv.clone(),
                m_tgt,
                e_tgt,
            },
        )?;
        let a_img = Section::from_field(SmoothField::from_smooth(
            prol_tgt.alg().base().clone(),
            Shape::Vector(prol_tgt.fiber_dim()),
            LiftSectionRoutine {
                inner: x.a().clone(),
                mat: alg_map.clone(),
                pre: d_pinv.clone(),
                dim_in: m_tgt,
            },
        )?)?;
        let z_img = SmoothField::from_smooth(
            prol_tgt.total_box().clone(),
            Shape::Vector(e_tgt),
            PushZRoutine {
                z: x.z().clone(),
                x_mat: fib_map.clone(),
                d_pinv: d_pinv.clone(),
                x_pinv: x_pinv.clone(),
                m_tgt,
                e_tgt,
            },
        )?;
        terms.push((f_img, ProjectableSection::new(prol_tgt, a_img, z_img)?));
    }
    ModuleSection::new(prol_tgt, terms)
}

/// Bracket compatibility across the composite bonding (i, j): the sections
/// live at the source end of the pair (top level for projective towers,
/// bottom for direct ones) and are bonded over by pseudo-inverse lifts.
pub fn limit_bracket_defect(
    tower: &Tower,
    i: usize,
    j: usize,
    x1: &ModuleSection,
    x2: &ModuleSection,
    at: &[f64],
) -> Result<LimitBracketDefect> {
    let sampling = Sampling { count: 16, ..Default::default() };
    let (src, tgt) = tower.endpoints(i, j);
    let triple = tower.composite_or_override(i, j)?;
    let d = linear_matrix_of(&triple.base_map, &sampling)?;
    let d_pinv = pseudo_inverse(&d)?;
    let src_level = &tower.levels()[src];
    let tgt_level = &tower.levels()[tgt];
    let prol_src = Prolongation::build(src_level.alg.clone(), src_level.fib.clone())?;
    let prol_tgt = Prolongation::build(tgt_level.alg.clone(), tgt_level.fib.clone())?;
    let m_src = prol_src.base_dim();
    let psi = |p: &[f64]| -> Vec<f64> {
        let mut out = (&d * DMatrix::from_column_slice(m_src, 1, &p[..m_src]))
            .column(0)
            .iter()
            .copied()
            .collect::<Vec<f64>>();
        out.extend(mat_apply(&triple.fib_map, &p[m_src..]));
        out
    };
    let x1_img = bonded_image(&prol_tgt, x1, &triple.alg_map, &triple.fib_map, &d_pinv)?;
    let x2_img = bonded_image(&prol_tgt, x2, &triple.alg_map, &triple.fib_map, &d_pinv)?;
    // Relatedness scan of both bonded pairs.
    let mut rs_defect = 0.0_f64;
    for (sec, img) in [(x1, &x1_img), (x2, &x2_img)] {
        let w_src = sec.assembled(&prol_src)?;
        let w_img = img.assembled(&prol_tgt)?;
        for p in sample_box(prol_src.total_box(), &sampling) {
            let w = w_src.eval(&p)?;
            let n_src = prol_src.fiber_dim();
            let mut lhs = mat_apply(&triple.alg_map, &w[..n_src]);
            lhs.extend(mat_apply(&triple.fib_map, &w[n_src..]));
            let rhs = w_img.eval(&psi(&p))?;
            for (u, v) in lhs.iter().zip(&rhs) {
                rs_defect = rs_defect.max((u - v).abs());
            }
        }
    }
    let br_src = prolong_bracket_eval(&prol_src, x1, x2, at)?;
    let n_src = prol_src.fiber_dim();
    let mut lhs = mat_apply(&triple.alg_map, &br_src[..n_src]);
    lhs.extend(mat_apply(&triple.fib_map, &br_src[n_src..]));
    let rhs = prolong_bracket_eval(&prol_tgt, &x1_img, &x2_img, &psi(at))?;
    Ok(LimitBracketDefect {
        bracket_defect: lhs.iter().zip(&rhs).map(|(u, v)| u - v).collect(),
        rs_defect,
    })
}

/// A field precomposed with block matrices and postcomposed with an optional
/// output matrix: p ↦ M_out · inner(B·p_base, F·p_fib).
struct MapFieldRoutine {
    inner: SmoothField,
    out_mat: Option<DMatrix<f64>>,
    base_mat: DMatrix<f64>,
    fib_mat: DMatrix<f64>,
    dim_out: usize,
}

impl Smooth for MapFieldRoutine {
    fn dim_in(&self) -> usize {
        self.base_mat.ncols() + self.fib_mat.ncols()
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let m = self.base_mat.ncols();
        let mut q = mat_apply(&self.base_mat, &x[..m]);
        q.extend(mat_apply(&self.fib_mat, &x[m..]));
        let v = self.inner.eval_in(&q);
        match &self.out_mat {
            Some(mo) => out.copy_from_slice(&mat_apply(mo, &v)),
            None => out.copy_from_slice(&v),
        }
    }
}

/// A seeded module section at the source end of the level pair (i, j) that is
/// ψ-related to its bonded image by construction: the generating data is
/// seeded at the lower-dimensional end and transported with pseudo-inverse
/// lifts, so the relatedness scan of [`limit_bracket_defect`] vanishes.
pub fn seeded_compatible_section(
    tower: &Tower,
    i: usize,
    j: usize,
    prol_src: &Prolongation,
    seed: u64,
) -> Result<ModuleSection> {
    let sampling = Sampling { count: 8, ..Default::default() };
    let (src, tgt) = tower.endpoints(i, j);
    match tower.kind() {
        TowerKind::Direct => {
            // Injective bondings: every source section is related to its
            // pseudo-inverse image.
            let _ = (src, tgt);
            let a = Section::seeded(
                prol_src.alg().base().clone(),
                prol_src.fiber_dim(),
                seed,
            );
            let z = Section::seeded(
                prol_src.total_box().clone(),
                prol_src.vertical_dim(),
                seed.wrapping_add(1),
            )
            .field()
            .clone();
            let f = Section::seeded(prol_src.total_box().clone(), 1, seed.wrapping_add(2))
                .field()
                .clone();
            let x = ProjectableSection::new(prol_src, a, z)?;
            ModuleSection::new(prol_src, vec![(f, x)])
        }
        TowerKind::Projective => {
            let triple = tower.composite(i, j)?;
            let d = linear_matrix_of(&triple.base_map, &sampling)?;
            let tgt_level = &tower.levels()[tgt];
            let tgt_total = tgt_level.fib.total();
            let e_src = prol_src.vertical_dim();
            let a_tgt = Section::seeded(
                tgt_level.alg.base().clone(),
                tgt_level.alg.fiber_dim(),
                seed,
            );
            let a_src = Section::from_field(SmoothField::from_smooth(
                prol_src.alg().base().clone(),
                Shape::Vector(prol_src.fiber_dim()),
                LiftSectionRoutine {
                    inner: a_tgt,
                    mat: pseudo_inverse(&triple.alg_map)?,
                    pre: d.clone(),
                    dim_in: prol_src.base_dim(),
                },
            )?)?;
            let z_tgt = Section::seeded(
                tgt_total.clone(),
                tgt_level.fib.fiber().dim(),
                seed.wrapping_add(1),
            )
            .field()
            .clone();
            let z_src = SmoothField::from_smooth(
                prol_src.total_box().clone(),
                Shape::Vector(e_src),
                MapFieldRoutine {
                    inner: z_tgt,
                    out_mat: Some(pseudo_inverse(&triple.fib_map)?),
                    base_mat: d.clone(),
                    fib_mat: triple.fib_map.clone(),
                    dim_out: e_src,
                },
            )?;
            let f_tgt = Section::seeded(tgt_total, 1, seed.wrapping_add(2))
                .field()
                .clone();
            let f_src = SmoothField::from_smooth(
                prol_src.total_box().clone(),
                Shape::Vector(1),
                MapFieldRoutine {
                    inner: f_tgt,
                    out_mat: None,
                    base_mat: d,
                    fib_mat: triple.fib_map.clone(),
                    dim_out: 1,
                },
            )?;
            let x = ProjectableSection::new(prol_src, a_src, z_src)?;
            ModuleSection::new(prol_src, vec![(f_src, x)])
        }
    }
}

fn prolong_bracket_eval(
    prol: &Prolongation,
    x1: &ModuleSection,
    x2: &ModuleSection,
    at: &[f64],
) -> Result<Vec<f64>> {
    crate::prolong::prolong_bracket(prol, x1, x2)?
        .assembled(prol)?
        .eval(at)
}

/// Jacobian-coherence outcome for a map sequence over the tower.
#[derive(Clone, Debug)]
pub struct JacobianCompatReport {
    /// Max |δ∘f_src − f_tgt∘δ| over samples (the coherence precondition).
    pub coherence_defect: f64,
    pub coherence_ok: bool,
    /// Max |Jδ(f_src(x))·Jf_src(x) − Jf_tgt(δx)·Jδ(x)| at the thread points.
    pub jacobian_defect: f64,
}

fn jacobian_unchecked(field: &SmoothField, x: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(field.dim_out(), field.dim_in());
    for c in 0..field.dim_in() {
        let mut dir = vec![0.0; field.dim_in()];
        dir[c] = 1.0;
        let col = directional_in(field, x, &dir);
        for r in 0..field.dim_out() {
            out[(r, c)] = col[r];
        }
    }
    out
}

/// Differentiability across the tower: a sequence of per-level self-maps fᵢ
/// coherent with the bondings has bonding-compatible Jacobians at thread
/// points.
pub fn limit_jacobian_compat(
    tower: &Tower,
    maps: &[SmoothField],
    thread: &[Vec<f64>],
    sampling: &Sampling,
) -> Result<JacobianCompatReport> {
    if maps.len() != tower.len() || thread.len() != tower.len() {
        return Err(Error::shape(
            "limit_jacobian_compat: one map and one thread entry per level",
        ));
    }
    for (idx, f) in maps.iter().enumerate() {
        let m = tower.levels()[idx].alg.base().dim();
        if f.domain() != tower.levels()[idx].alg.base() || f.shape() != Shape::Vector(m) {
            return Err(Error::shape(format!("map {idx} must be a self-map of its base box")));
        }
    }
    if tower.thread_defect(thread)? > 1e-10 {
        return Err(Error::precondition("limit_jacobian_compat: not a thread"));
    }
    let mut coherence_defect = 0.0_f64;
    let mut jacobian_defect = 0.0_f64;
    for k in 0..tower.bondings().len() {
        let (src, tgt) = tower.endpoints_of_bonding(k);
        let delta = &tower.bondings()[k].base_map;
        let (f_src, f_tgt) = (&maps[src], &maps[tgt]);
        for p in sample_box(tower.levels()[src].alg.base(), sampling) {
            let lhs = delta.eval_in(&f_src.eval_in(&p));
            let rhs = f_tgt.eval_in(&delta.eval_in(&p));
            for (u, v) in lhs.iter().zip(&rhs) {
                coherence_defect = coherence_defect.max((u - v).abs());
            }
        }
        let x = &thread[src];
        let fx = f_src.eval_in(x);
        let dx = delta.eval_in(x);
        let lhs = jacobian_unchecked(delta, &fx) * jacobian_unchecked(f_src, x);
        let rhs = jacobian_unchecked(f_tgt, &dx) * jacobian_unchecked(delta, x);
        jacobian_defect = jacobian_defect.max((lhs - rhs).abs().max());
    }
    Ok(JacobianCompatReport {
        coherence_defect,
        coherence_ok: coherence_defect <= 1e-8,
        jacobian_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PolyTerm;

    fn sampling() -> Sampling {
        Sampling { count: 16, ..Default::default() }
    }

    #[test]
    fn projection_tower_bonding_laws_exact() {
        let tower = Tower::builtin("tangent-projection").unwrap();
        let r = check_bonding_laws(&tower, &sampling()).unwrap();
        assert_eq!(r.max_defect, 0.0);
    }

    #[test]
    fn inclusion_tower_bonding_laws_exact() {
        let tower = Tower::builtin("tangent-inclusion").unwrap();
        let r = check_bonding_laws(&tower, &sampling()).unwrap();
        assert_eq!(r.max_defect, 0.0);
    }

    #[test]
    fn scrambled_override_reported_with_indices() {
        let mut tower = Tower::builtin("tangent-projection").unwrap();
        let mut bad = tower.composite(0, 2).unwrap();
        bad.alg_map[(0, 0)] += 0.5;
        tower.set_override(0, 2, bad);
        let r = check_bonding_laws(&tower, &sampling()).unwrap();
        assert!((r.max_defect - 0.5).abs() < 1e-15);
        assert_eq!(r.worst_triple, Some((0, 1, 2)));
    }

    #[test]
    fn projection_tower_anchored_sequence() {
        let tower = Tower::builtin("tangent-projection").unwrap();
        let r = check_anchored_sequence(&tower, &sampling()).unwrap();
        assert!(r.anchor_defect <= 1e-10, "anchor {}", r.anchor_defect);
        assert!(r.lm2_defect <= 1e-8, "lm2 {}", r.lm2_defect);
    }

    #[test]
    fn so3_identity_tower_anchored_sequence() {
        let level = || {
            let alg = LocalAlgebroid::builtin("lie-algebra:so3").unwrap();
            let fib = Fibration::new(alg.base().clone(), BaseBox::unit(3));
            TowerLevel { alg, fib }
        };
        let levels = vec![level(), level(), level()];
        let id = |_: usize| {
            BondingTriple::linear(
                levels[0].alg.base(),
                &DMatrix::identity(2, 2),
                DMatrix::identity(3, 3),
                DMatrix::identity(3, 3),
            )
            .unwrap()
        };
        let tower = Tower::new(TowerKind::Projective, levels.clone(), vec![id(0), id(1)]).unwrap();
        let r = check_anchored_sequence(&tower, &sampling()).unwrap();
        assert!(r.anchor_defect <= 1e-12);
        assert!(r.lm2_defect <= 1e-10, "lm2 {}", r.lm2_defect);
    }

    #[test]
    fn scaled_anchor_detected() {
        let mut tower = Tower::builtin("tangent-projection").unwrap();
        // Replace the middle level with a doubled anchor.
        let base = BaseBox::unit(2);
        let anchor = SmoothField::constant_matrix(base.clone(), &(DMatrix::identity(2, 2) * 2.0));
        let structure = SmoothField::zeros(
            base.clone(),
            Shape::Bilinear { out: 2, left: 2, right: 2 },
        );
        let alg = LocalAlgebroid::from_fields(base.clone(), 2, anchor, structure, true).unwrap();
        tower.levels[1] = TowerLevel {
            alg,
            fib: Fibration::new(base, BaseBox::unit(2)),
        };
        let r = check_anchored_sequence(&tower, &sampling()).unwrap();
        // ρ₁∘ζ − Tδ∘ρ₂ = 2P − P = P on the doubled level: defect 1.
        assert!((r.anchor_defect - 1.0).abs() < 1e-12, "{}", r.anchor_defect);
    }

    #[test]
    fn projection_tower_prolong_compat() {
        let tower = Tower::builtin("tangent-projection").unwrap();
        let r = check_prolong_compat(&tower, &sampling()).unwrap();
        assert!(r.containment_ok);
        assert_eq!(r.square_defect, 0.0);
    }

    #[test]
    fn too_small_fiber_box_detected() {
        let mut tower = Tower::builtin("tangent-projection").unwrap();
        let base = tower.levels[0].alg.base().clone();
        tower.levels[0].fib = Fibration::new(
            base,
            BaseBox::new(vec![(-0.1, 0.1)]).unwrap(),
        );
        let r = check_prolong_compat(&tower, &sampling()).unwrap();
        assert!(!r.containment_ok);
        assert!(r.worst_escape > 0.5);
    }

    #[test]
    fn mismatched_square_detected() {
        let mut tower = Tower::builtin("tangent-inclusion").unwrap();
        // Total map whose base part disagrees with ε by 0.25 in one slot.
        let mut mat = DMatrix::zeros(4, 2);
        mat[(0, 0)] = 1.0; // base x₁ → x₁
        mat[(2, 1)] = 1.0; // fiber w₁ → w₁
        mat[(1, 0)] = 0.25; // spurious base leakage
        let tm = SmoothField::linear(tower.levels[0].fib.total(), &mat).unwrap();
        tower.bondings[0].total_map = Some(tm);
        let r = check_direct_sequence(&tower, &sampling()).unwrap();
        assert!(r.injective);
        assert!(r.compat.square_defect > 0.15, "{}", r.compat.square_defect);
        assert!(r.compat.square_defect <= 0.25, "{}", r.compat.square_defect);
    }

    #[test]
    fn direct_sequence_passes_and_rank_deficiency_detected() {
        let tower = Tower::builtin("tangent-inclusion").unwrap();
        let r = check_direct_sequence(&tower, &sampling()).unwrap();
        assert!(r.injective);
        assert!(r.compat.containment_ok);

        let mut broken = Tower::builtin("tangent-inclusion").unwrap();
        broken.bondings[0].alg_map = DMatrix::zeros(2, 1);
        let r = check_direct_sequence(&broken, &sampling()).unwrap();
        assert!(!r.injective);
    }

    #[test]
    fn direct_check_requires_direct_tower() {
        let tower = Tower::builtin("tangent-projection").unwrap();
        assert!(matches!(
            check_direct_sequence(&tower, &sampling()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn thread_transport_and_perturbation() {
        let tower = Tower::builtin("tangent-projection").unwrap();
        let thread = tower.transport_thread(&[0.3, -0.2, 0.5]).unwrap();
        assert_eq!(thread[0], vec![0.3]);
        assert_eq!(thread[1], vec![0.3, -0.2]);
        assert_eq!(tower.thread_defect(&thread).unwrap(), 0.0);
        let mut perturbed = thread.clone();
        perturbed[1][0] += 1e-3;
        let d = tower.thread_defect(&perturbed).unwrap();
        assert!((d - 1e-3).abs() < 1e-12);

        let up = Tower::builtin("tangent-inclusion").unwrap();
        let t2 = up.transport_thread(&[0.4]).unwrap();
        assert_eq!(t2[2], vec![0.4, 0.0, 0.0]);
        assert_eq!(up.thread_defect(&t2).unwrap(), 0.0);
    }

    fn constant_module_section(prol: &Prolongation, a: Vec<f64>, z: Vec<f64>) -> ModuleSection {
        let zf = SmoothField::constant(
            prol.total_box().clone(),
            Shape::Vector(prol.vertical_dim()),
            z,
        )
        .unwrap();
        let x = ProjectableSection::new(
            prol,
            Section::constant(prol.alg().base().clone(), a),
            zf,
        )
        .unwrap();
        ModuleSection::from_projectable(prol, x)
    }

    #[test]
    fn identity_bonding_limit_bracket_zero() {
        let level = || {
            let base = BaseBox::unit(2);
            TowerLevel {
                alg: LocalAlgebroid::make_tangent(base.clone()),
                fib: Fibration::new(base, BaseBox::unit(2)),
            }
        };
        let levels = vec![level(), level()];
        let id = BondingTriple::linear(
            levels[0].alg.base(),
            &DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let tower = Tower::new(TowerKind::Projective, levels, vec![id]).unwrap();
        let prol = Prolongation::build(
            tower.levels()[1].alg.clone(),
            tower.levels()[1].fib.clone(),
        )
        .unwrap();
        let x1 = constant_module_section(&prol, vec![1.0, 0.0], vec![0.0, 0.5]);
        let x2 = constant_module_section(&prol, vec![0.0, 1.0], vec![0.3, 0.0]);
        let d = limit_bracket_defect(&tower, 0, 1, &x1, &x2, &[0.1, 0.2, 0.1, -0.1]).unwrap();
        assert!(d.rs_defect <= 1e-12, "rs {}", d.rs_defect);
        assert!(d.max_abs() <= 1e-12, "bracket {:?}", d.bracket_defect);
    }

    /// A module section on the 3-level projection tower's top prolongation
    /// whose surviving components only involve surviving coordinates.
    fn projectable_top_section(prol: &Prolongation, flip: bool) -> ModuleSection {
        let total = prol.total_box().clone();
        // a = (x₁², c, c′); z = (x₁·w₁, …): components beyond the first are
        // dropped by the bonding, so they may be arbitrary.
        let a = Section::polynomial(
            prol.alg().base().clone(),
            3,
            vec![
                PolyTerm { coeff: 1.0, powers: vec![2, 0, 0], out: 0 },
                PolyTerm { coeff: 0.7, powers: vec![0, 1, 0], out: 1 },
                PolyTerm { coeff: -0.3, powers: vec![0, 0, 2], out: 2 },
            ],
        )
        .unwrap();
        let z = SmoothField::polynomial(
            total.clone(),
            Shape::Vector(3),
            vec![
                PolyTerm { coeff: 1.0, powers: vec![1, 0, 0, 1, 0, 0], out: 0 },
                PolyTerm { coeff: 0.4, powers: vec![0, 0, 1, 0, 1, 0], out: 1 },
            ],
        )
        .unwrap();
        let f = SmoothField::polynomial(
            total.clone(),
            Shape::Vector(1),
            vec![
                PolyTerm { coeff: 1.0, powers: vec![0; 6], out: 0 },
                PolyTerm {
                    coeff: if flip { -0.5 } else { 0.5 },
                    powers: vec![1, 0, 0, 0, 0, 0],
                    out: 0,
                },
            ],
        )
        .unwrap();
        let x = ProjectableSection::new(prol, a, z).unwrap();
        ModuleSection::new(prol, vec![(f, x)]).unwrap()
    }

    #[test]
    fn projection_tower_limit_bracket_small() {
        let tower = Tower::builtin("tangent-projection").unwrap();
        let top = &tower.levels()[2];
        let prol = Prolongation::build(top.alg.clone(), top.fib.clone()).unwrap();
        let x1 = projectable_top_section(&prol, false);
        let x2 = projectable_top_section(&prol, true);
        let at = [0.3, -0.2, 0.4, 0.2, 0.1, -0.3];
        let d = limit_bracket_defect(&tower, 0, 2, &x1, &x2, &at).unwrap();
        assert!(d.rs_defect <= 1e-10, "rs {}", d.rs_defect);
        assert!(d.max_abs() <= 1e-9, "bracket {:?}", d.bracket_defect);
    }

    #[test]
    fn non_related_section_flagged_as_rs_violation() {
        let tower = Tower::builtin("tangent-projection").unwrap();
        let top = &tower.levels()[2];
        let prol = Prolongation::build(top.alg.clone(), top.fib.clone()).unwrap();
        // First surviving component varies in the dropped coordinate x₂.
        let a = Section::polynomial(
            prol.alg().base().clone(),
            3,
            vec![PolyTerm { coeff: 1.0, powers: vec![0, 1, 0], out: 0 }],
        )
        .unwrap();
        let z = SmoothField::zeros(prol.total_box().clone(), Shape::Vector(3));
        let x1 = ModuleSection::from_projectable(
            &prol,
            ProjectableSection::new(&prol, a, z).unwrap(),
        );
        let x2 = projectable_top_section(&prol, true);
        let at = [0.3, -0.2, 0.4, 0.2, 0.1, -0.3];
        let d = limit_bracket_defect(&tower, 0, 2, &x1, &x2, &at).unwrap();
        assert!(d.rs_defect > 0.1, "rs {}", d.rs_defect);
    }

    #[test]
    fn jacobian_compat_identity_and_linear_and_polynomial() {
        let tower = Tower::builtin("tangent-projection").unwrap();
        let thread = tower.transport_thread(&[0.3, -0.2, 0.5]).unwrap();
        let s = sampling();

        let identity_maps: Vec<SmoothField> = tower
            .levels()
            .iter()
            .map(|l| {
                let m = l.alg.base().dim();
                SmoothField::linear(l.alg.base().clone(), &DMatrix::identity(m, m)).unwrap()
            })
            .collect();
        let r = limit_jacobian_compat(&tower, &identity_maps, &thread, &s).unwrap();
        assert_eq!(r.coherence_defect, 0.0);
        assert_eq!(r.jacobian_defect, 0.0);

        let halves: Vec<SmoothField> = tower
            .levels()
            .iter()
            .map(|l| {
                let m = l.alg.base().dim();
                SmoothField::linear(l.alg.base().clone(), &(DMatrix::identity(m, m) * 0.5))
                    .unwrap()
            })
            .collect();
        let r = limit_jacobian_compat(&tower, &halves, &thread, &s).unwrap();
        assert!(r.coherence_defect <= 1e-12);
        assert!(r.jacobian_defect <= 1e-12);

        // Componentwise squares commute with coordinate projections.
        let squares: Vec<SmoothField> = tower
            .levels()
            .iter()
            .map(|l| {
                let m = l.alg.base().dim();
                SmoothField::polynomial(
                    l.alg.base().clone(),
                    Shape::Vector(m),
                    (0..m)
                        .map(|i| {
                            let mut p = vec![0; m];
                            p[i] = 2;
                            PolyTerm { coeff: 1.0, powers: p, out: i }
                        })
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let r = limit_jacobian_compat(&tower, &squares, &thread, &s).unwrap();
        assert!(r.coherence_ok);
        assert!(r.jacobian_defect <= 1e-9, "{}", r.jacobian_defect);
    }

    #[test]
    fn incoherent_maps_reported() {
        let tower = Tower::builtin("tangent-projection").unwrap();
        let thread = tower.transport_thread(&[0.3, -0.2, 0.5]).unwrap();
        let mut maps: Vec<SmoothField> = tower
            .levels()
            .iter()
            .map(|l| {
                let m = l.alg.base().dim();
                SmoothField::linear(l.alg.base().clone(), &DMatrix::identity(m, m)).unwrap()
            })
            .collect();
        maps[1] = SmoothField::linear(
            tower.levels()[1].alg.base().clone(),
            &(DMatrix::identity(2, 2) * 0.5),
        )
        .unwrap();
        let r = limit_jacobian_compat(&tower, &maps, &thread, &sampling()).unwrap();
        assert!(!r.coherence_ok);
        assert!(r.coherence_defect > 0.1);
    }
}
