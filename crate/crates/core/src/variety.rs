//! Declarative model of a torsor counting problem: variables grouped into
//! equation blocks, height monomials with exact rational exponents, gcd
//! (coprimality) sets, and optional thin-set predicates.
//!
//! The three built-in presets `x1`, `x2`, `x3` carry the exact monomial
//! ordering that reproduces the exponent matrices used by the constant
//! machinery, so the preset data doubles as a fixture.

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub type Exponent = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub id: String,
    /// Equation block index, 0 for variables outside the equation.
    pub block: usize,
    /// Exponent inside its block (ignored for block 0).
    #[serde(default = "one")]
    pub h: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThinPredicate {
    /// Excludes points where the product of the two named variables is
    /// minus a perfect square.
    MinusSquareProduct { vars: [String; 2] },
}

/// Raw JSON-facing document; see `VarietySpec::from_document`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecDocument {
    pub name: String,
    pub variables: Vec<Variable>,
    pub signs: Vec<i64>,
    /// One map per height monomial: variable id -> [numerator, denominator].
    pub height: Vec<BTreeMap<String, (i64, i64)>>,
    pub gcd_sets: Vec<Vec<String>>,
    #[serde(default)]
    pub thin: Vec<ThinPredicate>,
    pub symmetry_rank: u32,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("malformed spec document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?} (expected x1, x2 or x3)")]
    UnknownPreset(String),
}

/// A validated counting problem. Variable order is significant: it is the
/// row order of the exponent matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct VarietySpec {
    pub name: String,
    pub variables: Vec<Variable>,
    /// Sign of each equation block, indexed by block-1.
    pub signs: Vec<i64>,
    /// Height monomials as (variable index, exponent) lists, one per
    /// height condition, in matrix column order.
    pub height: Vec<Vec<(usize, Exponent)>>,
    /// Coprimality sets as variable indices.
    pub gcd_sets: Vec<Vec<usize>>,
    pub thin: Vec<ThinPredicate>,
    pub symmetry_rank: u32,
    document: SpecDocument,
}

pub type TorsorPoint = Vec<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeightBound(pub u64);

impl VarietySpec {
    pub fn preset(name: &str) -> Result<VarietySpec, SpecError> {
        let doc = match name {
            "x1" => PRESET_X1,
            "x2" => PRESET_X2,
            "x3" => PRESET_X3,
            other => return Err(SpecError::UnknownPreset(other.to_string())),
        };
        VarietySpec::from_json(doc)
    }

    pub fn from_json(text: &str) -> Result<VarietySpec, SpecError> {
        let doc: SpecDocument = serde_json::from_str(text)?;
        VarietySpec::from_document(doc)
    }

    pub fn from_document(doc: SpecDocument) -> Result<VarietySpec, SpecError> {
        let invalid = |msg: String| SpecError::Invalid(msg);
        let n = doc.variables.len();
        if n == 0 {
            return Err(invalid("no variables".into()));
        }
        let index: BTreeMap<&str, usize> = doc
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.id.as_str(), i))
            .collect();
        if index.len() != n {
            return Err(invalid("duplicate variable id".into()));
        }
        let k = doc.variables.iter().map(|v| v.block).max().unwrap();
        if k < 2 {
            return Err(invalid("equation needs at least two blocks".into()));
        }
        if doc.signs.len() != k {
            return Err(invalid(format!(
                "expected {k} block signs, got {}",
                doc.signs.len()
            )));
        }
        if doc.signs.iter().any(|s| s.abs() != 1) {
            return Err(invalid("block signs must be ±1".into()));
        }
        for b in 1..=k {
            if !doc.variables.iter().any(|v| v.block == b) {
                return Err(invalid(format!("equation block {b} is empty")));
            }
        }
        if doc.variables.iter().any(|v| v.block >= 1 && v.h < 1) {
            return Err(invalid("equation exponents must be ≥ 1".into()));
        }
        let mut height = Vec::with_capacity(doc.height.len());
        let mut seen = vec![false; n];
        for (nu, mono) in doc.height.iter().enumerate() {
            let mut row = Vec::new();
            for (id, &(num, den)) in mono {
                let &vi = index
                    .get(id.as_str())
                    .ok_or_else(|| invalid(format!("height monomial {nu}: unknown id {id}")))?;
                if den <= 0 || num <= 0 {
                    return Err(invalid(format!(
                        "height monomial {nu}: exponent {num}/{den} must be positive"
                    )));
                }
                seen[vi] = true;
                row.push((vi, Ratio::new(num, den)));
            }
            if row.is_empty() {
                return Err(invalid(format!("height monomial {nu} is empty")));
            }
            height.push(row);
        }
        for (i, v) in doc.variables.iter().enumerate() {
            if !seen[i] {
                return Err(invalid(format!(
                    "variable {} appears in no height monomial",
                    v.id
                )));
            }
        }
        if doc.gcd_sets.is_empty() {
            return Err(invalid("at least one gcd set is required".into()));
        }
        let mut gcd_sets = Vec::new();
        for set in &doc.gcd_sets {
            if set.is_empty() {
                return Err(invalid("empty gcd set".into()));
            }
            let mut s = Vec::new();
            for id in set {
                let &vi = index
                    .get(id.as_str())
                    .ok_or_else(|| invalid(format!("gcd set: unknown id {id}")))?;
                s.push(vi);
            }
            gcd_sets.push(s);
        }
        for t in &doc.thin {
            let ThinPredicate::MinusSquareProduct { vars } = t;
            for id in vars {
                if !index.contains_key(id.as_str()) {
                    return Err(invalid(format!("thin predicate: unknown id {id}")));
                }
            }
        }
        Ok(VarietySpec {
            name: doc.name.clone(),
            variables: doc.variables.clone(),
            signs: doc.signs.clone(),
            height,
            gcd_sets,
            thin: doc.thin.clone(),
            symmetry_rank: doc.symmetry_rank,
            document: doc,
        })
    }

    pub fn var_index(&self, id: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.id == id)
    }

    /// Number of equation blocks k.
    pub fn block_count(&self) -> usize {
        self.signs.len()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    /// Canonical serialized form, used for fingerprints.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.document).expect("spec document serializes")
    }

    /// SHA-256 fingerprint of the canonical document, hex, first 16 chars.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        let mut s = String::new();
        for b in &digest[..8] {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    /// Signed value of the torsor equation at a point.
    pub fn equation_value(&self, point: &[i64]) -> i128 {
        debug_assert_eq!(point.len(), self.num_vars());
        let mut total: i128 = 0;
        for (b, &sign) in self.signs.iter().enumerate() {
            let mut term: i128 = sign as i128;
            for (i, v) in self.variables.iter().enumerate() {
                if v.block == b + 1 {
                    for _ in 0..v.h {
                        term *= point[i] as i128;
                    }
                }
            }
            total += term;
        }
        total
    }

    pub fn is_on_torsor(&self, point: &[i64]) -> bool {
        point.len() == self.num_vars()
            && point.iter().all(|&x| x != 0)
            && self.equation_value(point) == 0
    }

    /// Exact height test: every monomial, cleared of denominators, must
    /// satisfy ∏ |x|^(d·α) ≤ B^d in integers.
    pub fn height_ok(&self, point: &[i64], bound: HeightBound) -> bool {
        debug_assert_eq!(point.len(), self.num_vars());
        let b = BigUint::from(bound.0);
        for mono in &self.height {
            let d = mono
                .iter()
                .fold(1i64, |acc, (_, e)| acc.lcm(e.denom()));
            let mut lhs = BigUint::from(1u32);
            for &(vi, e) in mono {
                let exp = (e * Ratio::from_integer(d)).to_integer() as u32;
                lhs *= BigUint::from(point[vi].unsigned_abs()).pow(exp);
            }
            if lhs > b.pow(d as u32) {
                return false;
            }
        }
        true
    }

    pub fn gcd_ok(&self, point: &[i64]) -> bool {
        self.gcd_sets.iter().all(|set| {
            set.iter()
                .fold(0u64, |g, &vi| num_integer::gcd(g, point[vi].unsigned_abs()))
                == 1
        })
    }

    /// True iff the point is NOT in the thin set.
    pub fn thin_ok(&self, point: &[i64]) -> bool {
        self.thin.iter().all(|t| {
            let ThinPredicate::MinusSquareProduct { vars } = t;
            let p: i64 = vars
                .iter()
                .map(|id| point[self.var_index(id).unwrap()])
                .product();
            !crate::arith::is_minus_square(p)
        })
    }

    /// All admissibility conditions except the equation itself.
    pub fn conditions_ok(&self, point: &[i64], bound: HeightBound) -> bool {
        self.height_ok(point, bound) && self.gcd_ok(point) && self.thin_ok(point)
    }
}

pub const PRESET_X1: &str = r#"{
  "name": "x1",
  "variables": [
    {"id": "x11", "block": 1, "h": 1},
    {"id": "x12", "block": 1, "h": 1},
    {"id": "x21", "block": 2, "h": 2},
    {"id": "x31", "block": 3, "h": 1},
    {"id": "x32", "block": 3, "h": 1},
    {"id": "x33", "block": 3, "h": 2}
  ],
  "signs": [1, -1, -1],
  "height": [
    {"x11": [2,1], "x31": [1,1]},
    {"x12": [2,1], "x31": [1,1]},
    {"x21": [2,1], "x31": [1,1]},
    {"x11": [2,1], "x32": [1,1]},
    {"x12": [2,1], "x32": [1,1]},
    {"x21": [2,1], "x32": [1,1]},
    {"x31": [3,1], "x33": [2,1]},
    {"x32": [3,1], "x33": [2,1]}
  ],
  "gcd_sets": [["x11", "x12", "x21", "x33"], ["x31", "x32"]],
  "thin": [{"kind": "minus_square_product", "vars": ["x31", "x32"]}],
  "symmetry_rank": 2
}"#;

pub const PRESET_X2: &str = r#"{
  "name": "x2",
  "variables": [
    {"id": "x01", "block": 0},
    {"id": "x02", "block": 0},
    {"id": "x11", "block": 1, "h": 1},
    {"id": "x12", "block": 1, "h": 1},
    {"id": "x21", "block": 3, "h": 2},
    {"id": "x31", "block": 2, "h": 1},
    {"id": "x32", "block": 2, "h": 1}
  ],
  "signs": [1, -1, -1],
  "height": [
    {"x01": [2,1], "x11": [1,1], "x31": [1,1]},
    {"x01": [2,1], "x12": [1,1], "x31": [1,1]},
    {"x01": [2,1], "x21": [1,1], "x31": [1,1]},
    {"x02": [2,1], "x11": [3,1], "x32": [1,1]},
    {"x02": [2,1], "x12": [3,1], "x32": [1,1]},
    {"x02": [2,1], "x21": [3,1], "x32": [1,1]},
    {"x01": [1,1], "x02": [1,1], "x11": [3,1]},
    {"x01": [1,1], "x02": [1,1], "x12": [3,1]},
    {"x01": [1,1], "x02": [1,1], "x21": [3,1]},
    {"x02": [2,1], "x31": [3,2], "x32": [5,2]},
    {"x01": [2,1], "x31": [3,2], "x32": [1,2]}
  ],
  "gcd_sets": [
    ["x11", "x12", "x21"],
    ["x01", "x32"],
    ["x02", "x31"],
    ["x01", "x02"]
  ],
  "thin": [],
  "symmetry_rank": 3
}"#;

pub const PRESET_X3: &str = r#"{
  "name": "x3",
  "variables": [
    {"id": "x01", "block": 0},
    {"id": "x02", "block": 0},
    {"id": "x11", "block": 1, "h": 1},
    {"id": "x12", "block": 1, "h": 1},
    {"id": "x21", "block": 3, "h": 2},
    {"id": "x31", "block": 2, "h": 1},
    {"id": "x32", "block": 2, "h": 1}
  ],
  "signs": [1, -1, -1],
  "height": [
    {"x02": [2,1], "x31": [1,1], "x32": [2,1]},
    {"x02": [2,1], "x21": [2,1], "x32": [1,1]},
    {"x02": [2,1], "x12": [2,1], "x32": [1,1]},
    {"x02": [2,1], "x11": [2,1], "x32": [1,1]},
    {"x01": [1,1], "x02": [1,1], "x21": [3,1]},
    {"x01": [1,1], "x02": [1,1], "x12": [3,1]},
    {"x01": [1,1], "x02": [1,1], "x11": [3,1]},
    {"x01": [2,1], "x31": [2,1], "x32": [1,1]},
    {"x01": [2,1], "x21": [2,1], "x31": [1,1]},
    {"x01": [2,1], "x12": [2,1], "x31": [1,1]},
    {"x01": [2,1], "x11": [2,1], "x31": [1,1]}
  ],
  "gcd_sets": [
    ["x11", "x12", "x21"],
    ["x01", "x32"],
    ["x02", "x31"],
    ["x01", "x02"]
  ],
  "thin": [],
  "symmetry_rank": 3
}"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_expected_shape() {
        let x1 = VarietySpec::preset("x1").unwrap();
        assert_eq!(x1.num_vars(), 6);
        assert_eq!(x1.height.len(), 8);
        assert_eq!(x1.gcd_sets.len(), 2);
        assert_eq!(x1.symmetry_rank, 2);
        assert_eq!(x1.thin.len(), 1);

        for name in ["x2", "x3"] {
            let s = VarietySpec::preset(name).unwrap();
            assert_eq!(s.num_vars(), 7, "{name}");
            assert_eq!(s.height.len(), 11, "{name}");
            assert_eq!(s.gcd_sets.len(), 4, "{name}");
            assert_eq!(s.symmetry_rank, 3, "{name}");
        }
        assert!(VarietySpec::preset("x9").is_err());
    }

    #[test]
    fn x2_x3_share_equation_and_gcds() {
        let x2 = VarietySpec::preset("x2").unwrap();
        let x3 = VarietySpec::preset("x3").unwrap();
        assert_eq!(x2.variables, x3.variables);
        assert_eq!(x2.signs, x3.signs);
        assert_eq!(x2.gcd_sets, x3.gcd_sets);
        assert_ne!(x2.height, x3.height);
    }

    #[test]
    fn round_trip_and_validation_errors() {
        let x1 = VarietySpec::preset("x1").unwrap();
        let again = VarietySpec::from_json(&x1.canonical_json()).unwrap();
        assert_eq!(x1, again);

        // missing gcd sets
        let mut doc: serde_json::Value = serde_json::from_str(PRESET_X1).unwrap();
        doc["gcd_sets"] = serde_json::json!([]);
        assert!(VarietySpec::from_json(&doc.to_string()).is_err());

        // fractional exponent accepted
        let x2 = VarietySpec::preset("x2").unwrap();
        let nu10 = &x2.height[9];
        let i31 = x2.var_index("x31").unwrap();
        assert!(nu10.contains(&(i31, Ratio::new(3, 2))));
    }

    #[test]
    fn height_examples() {
        let x2 = VarietySpec::preset("x2").unwrap();
        // (x02, x31, x32) = (1, 2, 2): 1·2^3·2^5 = 256 = 16^2, equality holds
        let mut p = vec![1i64; 7];
        p[x2.var_index("x31").unwrap()] = 2;
        p[x2.var_index("x32").unwrap()] = 2;
        assert!(x2.height_ok(&p, HeightBound(16)));
        assert!(!x2.height_ok(&p, HeightBound(15)));

        let x1 = VarietySpec::preset("x1").unwrap();
        let all_ones = vec![1i64; 6];
        assert!(x1.height_ok(&all_ones, HeightBound(1)));
        let mut q = vec![1i64; 6];
        q[x1.var_index("x12").unwrap()] = 3;
        assert!(!q.iter().any(|&x| x == 0) && !x1.height_ok(&q, HeightBound(8)));
        assert!(x1.height_ok(&q, HeightBound(9)));
    }

    #[test]
    fn height_sign_invariance() {
        let x2 = VarietySpec::preset("x2").unwrap();
        let p: Vec<i64> = vec![2, -3, 1, 5, -2, 1, 4];
        for b in [1u64, 10, 100, 1000] {
            for i in 0..p.len() {
                let mut q = p.clone();
                q[i] = -q[i];
                assert_eq!(
                    x2.height_ok(&p, HeightBound(b)),
                    x2.height_ok(&q, HeightBound(b))
                );
            }
        }
    }

    #[test]
    fn gcd_and_thin_examples() {
        let x1 = VarietySpec::preset("x1").unwrap();
        // order: x11 x12 x21 x31 x32 x33
        let p = vec![2i64, 3, 1, 1, -1, 1];
        assert!(x1.gcd_ok(&p));
        // x31 x32 = -1 = -(1^2): in the thin set
        assert!(!x1.thin_ok(&p));
        let q = vec![2i64, 3, 1, 2, 2, 1];
        assert!(!x1.gcd_ok(&q));
        let r = vec![2i64, 3, 1, 1, 2, 1];
        assert!(x1.thin_ok(&r));
    }

    #[test]
    fn equation_value_signs() {
        let x1 = VarietySpec::preset("x1").unwrap();
        // x11 x12 - x21^2 - x31 x32 x33^2 at (6, 2, 3, 1, 3, 1) = 12 - 9 - 3 = 0
        let p = vec![6i64, 2, 3, 1, 3, 1];
        assert!(x1.is_on_torsor(&p));
        let x2 = VarietySpec::preset("x2").unwrap();
        // x11 x12 - x21^2 - x31 x32 at (2, 5, 3, 1, 1): 10 - 9 - 1 = 0
        let p2 = vec![1i64, 1, 2, 5, 3, 1, 1];
        assert!(x2.is_on_torsor(&p2));
    }

    #[test]
    fn float_height_agreement_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for name in ["x1", "x2", "x3"] {
            let spec = VarietySpec::preset(name).unwrap();
            for _ in 0..30_000 {
                let p: Vec<i64> = (0..spec.num_vars())
                    .map(|_| {
                        let v = rng.gen_range(1..=30i64);
                        if rng.gen_bool(0.5) {
                            v
                        } else {
                            -v
                        }
                    })
                    .collect();
                let b = rng.gen_range(1..=100_000u64);
                let exact = spec.height_ok(&p, HeightBound(b));
                // float comparison with a tie window
                let mut float_max: f64 = 0.0;
                for mono in &spec.height {
                    let mut v = 0.0f64;
                    for &(vi, e) in mono {
                        v += (p[vi].unsigned_abs() as f64).ln()
                            * (*e.numer() as f64 / *e.denom() as f64);
                    }
                    float_max = float_max.max(v);
                }
                let fb = (b as f64).ln();
                if (float_max - fb).abs() > 1e-9 {
                    assert_eq!(exact, float_max <= fb, "{name} p={p:?} B={b}");
                }
            }
        }
    }
}
