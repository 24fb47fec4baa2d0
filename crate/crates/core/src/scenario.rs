//! Scenario configuration: JSON descriptions of instances and suites.
//!
//! Fields are encoded as sums of monomial terms (`coeff`, `powers`, and one
//! of `outIndex`/`outPair`/`outTriple` selecting the output slot of a
//! vector / matrix / bilinear value). Polynomials are exactly
//! differentiable, so no expression parser is needed; transcendental
//! instances are available only through the builtin registry.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebroid::LocalAlgebroid;
use crate::connect::Connection;
use crate::error::{Error, Result};
use crate::field::{BaseBox, PolyTerm, Shape, SmoothField};
use crate::prolong::{Fibration, Prolongation};
use crate::sample::Sampling;
use crate::towers::{BondingTriple, Tower, TowerKind, TowerLevel};

/// One monomial term of a polynomial field.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TermSpec {
    pub coeff: f64,
    pub powers: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_pair: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_triple: Option<[usize; 3]>,
}

/// A chart box: dimension plus optional explicit bounds (default [-1,1]ᵈ).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BoxSpec {
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl BoxSpec {
    fn resolve(&self, ctx: &str) -> Result<BaseBox> {
        match &self.bounds {
            None => Ok(BaseBox::unit(self.dim)),
            Some(b) => {
                if b.len() != self.dim {
                    return Err(Error::config(format!(
                        "{ctx}: box has dim {} but {} bounds",
                        self.dim,
                        b.len()
                    )));
                }
                BaseBox::new(b.clone())
            }
        }
    }
}

/// One instance description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum InstanceSpec {
    #[serde(rename_all = "camelCase")]
    Algebroid {
        #[serde(skip_serializing_if = "Option::is_none")]
        builtin: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        base: Option<BoxSpec>,
        #[serde(skip_serializing_if = "Option::is_none")]
        fiber_dim: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        anchor: Option<Vec<TermSpec>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        structure: Option<Vec<TermSpec>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        claims_jacobi: Option<bool>,
    },
    #[serde(rename_all = "camelCase")]
    Prolongation { algebroid: String, fiber: BoxSpec },
    #[serde(rename_all = "camelCase")]
    Connection {
        prolongation: String,
        christoffel: Vec<TermSpec>,
    },
    #[serde(rename_all = "camelCase")]
    Tower {
        #[serde(skip_serializing_if = "Option::is_none")]
        builtin: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        tower_kind: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        levels: Option<Vec<LevelSpec>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        bondings: Option<Vec<BondingSpec>>,
    },
}

/// One tower level: an algebroid reference plus its fibration fiber box.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LevelSpec {
    /// Instance name or builtin algebroid name.
    pub algebroid: String,
    pub fiber: BoxSpec,
}

/// Linear bonding maps as dense row-major matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BondingSpec {
    pub base: Vec<Vec<f64>>,
    pub alg: Vec<Vec<f64>>,
    pub fib: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SuiteSpec {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SamplingSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

/// Top-level scenario file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioFile {
    pub instances: BTreeMap<String, InstanceSpec>,
    pub suites: Vec<SuiteSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingSpec>,
}

/// A fully validated scenario with live objects.
pub struct ResolvedScenario {
    pub algebroids: Vec<(String, LocalAlgebroid)>,
    pub prolongations: Vec<(String, Prolongation)>,
    pub connections: Vec<(String, Connection)>,
    pub towers: Vec<(String, Tower)>,
    /// Requested suites in declaration order, with optional tolerance
    /// overrides (defaults are resolved by the suite runner).
    pub suites: Vec<(String, Option<f64>)>,
    pub sampling: Sampling,
}

/// Decode a polynomial field over a domain box with a given value shape.
pub fn decode_poly(
    ctx: &str,
    domain: BaseBox,
    shape: Shape,
    terms: &[TermSpec],
) -> Result<SmoothField> {
    let dim_in = domain.dim();
    let mut decoded = Vec::with_capacity(terms.len());
    for (idx, t) in terms.iter().enumerate() {
        if t.powers.len() != dim_in {
            return Err(Error::config(format!(
                "{ctx}: term {idx} has {} exponents, domain dimension is {dim_in}",
                t.powers.len()
            )));
        }
        let keys =
            t.out_index.is_some() as u8 + t.out_pair.is_some() as u8 + t.out_triple.is_some() as u8;
        if keys != 1 {
            return Err(Error::config(format!(
                "{ctx}: term {idx} must carry exactly one of outIndex/outPair/outTriple"
            )));
        }
        let out = match (shape, t.out_index, t.out_pair, t.out_triple) {
            (Shape::Vector(n), Some(i), None, None) if i < n => i,
            (Shape::Matrix { rows, cols }, None, Some([r, c]), None) if r < rows && c < cols => {
                r * cols + c
            }
            (
                Shape::Bilinear { out, left, right },
                None,
                None,
                Some([o, i, j]),
            ) if o < out && i < left && j < right => (o * left + i) * right + j,
            _ => {
                return Err(Error::config(format!(
                    "{ctx}: term {idx} output selector does not match value shape {shape:?}"
                )))
            }
        };
        decoded.push(PolyTerm {
            coeff: t.coeff,
            powers: t.powers.clone(),
            out,
        });
    }
    SmoothField::polynomial(domain, shape, decoded)
}

fn matrix_of(ctx: &str, rows_spec: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let rows = rows_spec.len();
    if rows == 0 {
        return Err(Error::config(format!("{ctx}: empty matrix")));
    }
    let cols = rows_spec[0].len();
    if rows_spec.iter().any(|r| r.len() != cols) {
        return Err(Error::config(format!("{ctx}: ragged matrix")));
    }
    let flat: Vec<f64> = rows_spec.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows, cols, &flat))
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<ScenarioFile> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("scenario parse: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<ScenarioFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        ScenarioFile::from_json(&text)
    }

    /// Validate and instantiate every referenced object.
    pub fn resolve(&self) -> Result<ResolvedScenario> {
        let mut sampling = Sampling::default();
        if let Some(s) = &self.sampling {
            if let Some(seed) = s.seed {
                sampling.seed = seed;
            }
            if let Some(count) = s.count {
                if count == 0 {
                    return Err(Error::config("sampling.count must be ≥ 1"));
                }
                sampling.count = count;
            }
            if let Some(margin) = s.margin {
                if !(0.0..0.5).contains(&margin) {
                    return Err(Error::config("sampling.margin must lie in [0, 0.5)"));
                }
                sampling.margin = margin;
            }
        }
        let mut suites = Vec::new();
        for s in &self.suites {
            if let Some(t) = s.tolerance {
                if !(t > 0.0) {
                    return Err(Error::config(format!(
                        "suite '{}': tolerance must be positive",
                        s.name
                    )));
                }
            }
            suites.push((s.name.clone(), s.tolerance));
        }

        let mut algebroids: Vec<(String, LocalAlgebroid)> = Vec::new();
        for (name, spec) in &self.instances {
            if let InstanceSpec::Algebroid {
                builtin,
                base,
                fiber_dim,
                anchor,
                structure,
                claims_jacobi,
            } = spec
            {
                let alg = match builtin {
                    Some(b) => LocalAlgebroid::builtin(b)?,
                    None => {
                        let base = base
                            .as_ref()
                            .ok_or_else(|| {
                                Error::config(format!("instance '{name}': base required"))
                            })?
                            .resolve(name)?;
                        let n = fiber_dim.ok_or_else(|| {
                            Error::config(format!("instance '{name}': fiberDim required"))
                        })?;
                        let m = base.dim();
                        let anchor_field = decode_poly(
                            &format!("instance '{name}' anchor"),
                            base.clone(),
                            Shape::Matrix { rows: m, cols: n },
                            anchor.as_deref().unwrap_or(&[]),
                        )?;
                        let structure_field = decode_poly(
                            &format!("instance '{name}' structure"),
                            base.clone(),
                            Shape::Bilinear {
                                out: n,
                                left: n,
                                right: n,
                            },
                            structure.as_deref().unwrap_or(&[]),
                        )?;
                        LocalAlgebroid::from_fields(
                            base,
                            n,
                            anchor_field,
                            structure_field,
                            claims_jacobi.unwrap_or(false),
                        )?
                    }
                };
                algebroids.push((name.clone(), alg));
            }
        }
        let find_alg = |name: &str| -> Result<LocalAlgebroid> {
            if let Some((_, a)) = algebroids.iter().find(|(n, _)| n == name) {
                return Ok(a.clone());
            }
            LocalAlgebroid::builtin(name).map_err(|_| {
                Error::config(format!("unresolved algebroid reference '{name}'"))
            })
        };

        let mut prolongations: Vec<(String, Prolongation)> = Vec::new();
        for (name, spec) in &self.instances {
            if let InstanceSpec::Prolongation { algebroid, fiber } = spec {
                let alg = find_alg(algebroid)?;
                let fib = Fibration::new(alg.base().clone(), fiber.resolve(name)?);
                prolongations.push((name.clone(), Prolongation::build(alg, fib)?));
            }
        }
        let find_prol = |name: &str| -> Result<Prolongation> {
            prolongations
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, p)| p.clone())
                .ok_or_else(|| Error::config(format!("unresolved prolongation reference '{name}'")))
        };

        let mut connections: Vec<(String, Connection)> = Vec::new();
        for (name, spec) in &self.instances {
            if let InstanceSpec::Connection {
                prolongation,
                christoffel,
            } = spec
            {
                let prol = find_prol(prolongation)?;
                let field = decode_poly(
                    &format!("instance '{name}' christoffel"),
                    prol.total_box().clone(),
                    Shape::Matrix {
                        rows: prol.vertical_dim(),
                        cols: prol.fiber_dim(),
                    },
                    christoffel,
                )?;
                connections.push((name.clone(), Connection::new(prol, field)?));
            }
        }

        let mut towers: Vec<(String, Tower)> = Vec::new();
        for (name, spec) in &self.instances {
            if let InstanceSpec::Tower {
                builtin,
                tower_kind,
                levels,
                bondings,
            } = spec
            {
                let tower = match builtin {
                    Some(b) => Tower::builtin(b)?,
                    None => {
                        let kind = match tower_kind.as_deref() {
                            Some("projective") => TowerKind::Projective,
                            Some("direct") => TowerKind::Direct,
                            other => {
                                return Err(Error::config(format!(
                                    "instance '{name}': towerKind must be \
                                     'projective' or 'direct', got {other:?}"
                                )))
                            }
                        };
                        let level_specs = levels.as_ref().ok_or_else(|| {
                            Error::config(format!("instance '{name}': levels required"))
                        })?;
                        let bonding_specs = bondings.as_ref().ok_or_else(|| {
                            Error::config(format!("instance '{name}': bondings required"))
                        })?;
                        let mut lvls = Vec::new();
                        for l in level_specs {
                            let alg = find_alg(&l.algebroid)?;
                            let fib = Fibration::new(alg.base().clone(), l.fiber.resolve(name)?);
                            lvls.push(TowerLevel { alg, fib });
                        }
                        let mut bnds = Vec::new();
                        for (k, b) in bonding_specs.iter().enumerate() {
                            let src = match kind {
                                TowerKind::Projective => k + 1,
                                TowerKind::Direct => k,
                            };
                            if src >= lvls.len() {
                                return Err(Error::config(format!(
                                    "instance '{name}': too many bondings"
                                )));
                            }
                            bnds.push(BondingTriple::linear(
                                lvls[src].alg.base(),
                                &matrix_of(&format!("'{name}' bonding {k} base"), &b.base)?,
                                matrix_of(&format!("'{name}' bonding {k} alg"), &b.alg)?,
                                matrix_of(&format!("'{name}' bonding {k} fib"), &b.fib)?,
                            )?);
                        }
                        Tower::new(kind, lvls, bnds)?
                    }
                };
                towers.push((name.clone(), tower));
            }
        }

        Ok(ResolvedScenario {
            algebroids,
            prolongations,
            connections,
            towers,
            suites,
            sampling,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve_err(text: &str) -> Error {
        match ScenarioFile::from_json(text).unwrap().resolve() {
            Err(e) => e,
            Ok(_) => panic!("expected resolution error"),
        }
    }

    #[test]
    fn builtin_reference_resolves() {
        let text = r#"{
            "instances": { "t": { "kind": "algebroid", "builtin": "tangent" } },
            "suites": [ { "name": "antisymmetry" } ]
        }"#;
        let sc = ScenarioFile::from_json(text).unwrap().resolve().unwrap();
        assert_eq!(sc.algebroids.len(), 1);
        assert_eq!(sc.algebroids[0].1.fiber_dim(), 2);
        assert_eq!(sc.sampling, Sampling::default());
    }

    #[test]
    fn inline_polynomial_algebroid() {
        let text = r#"{
            "instances": {
                "rd": {
                    "kind": "algebroid",
                    "base": { "dim": 2 },
                    "fiberDim": 2,
                    "anchor": [
                        { "coeff": 1.0, "powers": [0, 0], "outPair": [0, 0] },
                        { "coeff": 1.0, "powers": [1, 0], "outPair": [1, 1] }
                    ],
                    "structure": []
                }
            },
            "suites": [ { "name": "antisymmetry", "tolerance": 1e-10 } ],
            "sampling": { "seed": 7, "count": 32 }
        }"#;
        let sc = ScenarioFile::from_json(text).unwrap().resolve().unwrap();
        let (_, alg) = &sc.algebroids[0];
        let rho = alg.anchor().matrix_at(&[0.5, 0.1]).unwrap();
        assert_eq!(rho[(1, 1)], 0.5);
        assert_eq!(sc.sampling.seed, 7);
        assert_eq!(sc.suites[0], ("antisymmetry".to_string(), Some(1e-10)));
    }

    #[test]
    fn missing_reference_is_config_error() {
        let text = r#"{
            "instances": {
                "p": { "kind": "prolongation", "algebroid": "nope", "fiber": { "dim": 2 } }
            },
            "suites": []
        }"#;
        let err = resolve_err(text);
        match err {
            Error::Config(msg) => assert!(msg.contains("nope"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn non_antisymmetric_structure_is_validation_error() {
        let text = r#"{
            "instances": {
                "bad": {
                    "kind": "algebroid",
                    "base": { "dim": 2 },
                    "fiberDim": 2,
                    "structure": [
                        { "coeff": 1.0, "powers": [0, 0], "outTriple": [0, 0, 0] }
                    ]
                }
            },
            "suites": []
        }"#;
        let err = resolve_err(text);
        assert!(matches!(err, Error::Validation(_)), "{err:?}");
    }

    #[test]
    fn prolongation_connection_tower_chain() {
        let text = r#"{
            "instances": {
                "t": { "kind": "algebroid", "builtin": "tangent" },
                "p": { "kind": "prolongation", "algebroid": "t", "fiber": { "dim": 2 } },
                "c": {
                    "kind": "connection",
                    "prolongation": "p",
                    "christoffel": [
                        { "coeff": 0.5, "powers": [1, 0, 0, 0], "outPair": [0, 0] }
                    ]
                },
                "w": { "kind": "tower", "builtin": "tangent-projection" }
            },
            "suites": [ { "name": "connection-algebra" } ]
        }"#;
        let sc = ScenarioFile::from_json(text).unwrap().resolve().unwrap();
        assert_eq!(sc.prolongations.len(), 1);
        assert_eq!(sc.connections.len(), 1);
        assert_eq!(sc.towers.len(), 1);
        assert_eq!(sc.towers[0].1.len(), 3);
    }

    #[test]
    fn parse_error_reports_location() {
        let err = ScenarioFile::from_json("{ not json").unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("line"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_selector_rejected() {
        let text = r#"{
            "instances": {
                "a": {
                    "kind": "algebroid",
                    "base": { "dim": 2 },
                    "fiberDim": 2,
                    "anchor": [ { "coeff": 1.0, "powers": [0, 0], "outIndex": 0 } ]
                }
            },
            "suites": []
        }"#;
        let err = resolve_err(text);
        assert!(matches!(err, Error::Config(_)), "{err:?}");
    }
}
