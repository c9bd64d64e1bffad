//! Problem data for quadratic minimization with indicator variables:
//!
//! ```text
//! min  a'x + b'y + y' Q y
//! s.t. y_i (1 - x_i) = 0,  x in {0,1}^n,  y >= 0
//!      gx' x + gy' y <= rhs   (optional side constraints)
//!      y <= y_upper           (optional bounds)
//! ```
//!
//! Q must be positive semidefinite; symmetry is structural (single triangle
//! storage). Instances round-trip through JSON bit-exactly.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::{min_eigenvalue, SymMatrix};
use crate::real::Real;
use crate::rng::SplitMix64;

/// Tolerance factor for the PSD check: Q passes when
/// `min eig(Q) >= -PSD_TOL * (1 + max|Q_ij|)`.
pub const PSD_TOL: f64 = 1e-8;

/// A binary support pattern for the indicator vector x.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pattern {
    bits: Vec<bool>,
}

impl Pattern {
    pub fn new(bits: Vec<bool>) -> Self {
        Pattern { bits }
    }

    pub fn zeros(n: usize) -> Self {
        Pattern { bits: vec![false; n] }
    }

    /// The k-th pattern in lexicographic order (index 0 compared first, so
    /// (0,0) < (0,1) < (1,0) < (1,1)). Requires n <= 63.
    pub fn from_lex_index(n: usize, k: u64) -> Self {
        let bits = (0..n).map(|i| (k >> (n - 1 - i)) & 1 == 1).collect();
        Pattern { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Pattern as 0/1 scalars.
    pub fn to_scalars<T: Real>(&self) -> Vec<T> {
        self.bits.iter().map(|&b| if b { T::one() } else { T::zero() }).collect()
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, b) in self.bits.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", if *b { 1 } else { 0 })?;
        }
        write!(f, ")")
    }
}

impl Serialize for Pattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let ints: Vec<u8> = self.bits.iter().map(|&b| b as u8).collect();
        ints.serialize(s)
    }
}

/// One linear side constraint gx'x + gy'y <= rhs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideConstraint<T> {
    pub gx: Vec<T>,
    pub gy: Vec<T>,
    pub rhs: T,
}

/// A named validation failure with the measured quantity embedded in the
/// message.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

pub(crate) fn render_violations(vs: &[Violation]) -> String {
    vs.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n")
}

/// Full problem instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Real + Serialize"))]
pub struct QiInstance<T> {
    pub n: usize,
    pub a: Vec<T>,
    pub b: Vec<T>,
    #[serde(rename = "Q")]
    pub q: SymMatrix<T>,
    pub side_constraints: Vec<SideConstraint<T>>,
    pub y_upper: Option<Vec<T>>,
}

impl<T: Real> QiInstance<T> {
    pub fn new(a: Vec<T>, b: Vec<T>, q: SymMatrix<T>) -> Self {
        let n = q.dim();
        QiInstance { n, a, b, q, side_constraints: Vec::new(), y_upper: None }
    }

    /// Scale reference used by PSD tolerances: 1 + max|Q_ij|.
    pub fn psd_scale(&self) -> T {
        T::one() + self.q.max_abs()
    }

    /// Checks every structural invariant; the list is empty exactly when
    /// the instance is valid. Boundedness concerns are not invariants and
    /// are reported separately by [`QiInstance::boundedness_warnings`].
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.n;
        if n == 0 {
            out.push(Violation {
                field: "n".into(),
                message: "instance must have at least one variable".into(),
            });
        }
        if self.q.dim() != n {
            out.push(Violation {
                field: "Q".into(),
                message: format!("dimension {} does not match n = {n}", self.q.dim()),
            });
        }
        for (name, v) in [("a", &self.a), ("b", &self.b)] {
            if v.len() != n {
                out.push(Violation {
                    field: name.into(),
                    message: format!("length {} does not match n = {n}", v.len()),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                out.push(Violation {
                    field: name.into(),
                    message: "contains a non-finite entry".into(),
                });
            }
        }
        if !self.q.is_finite() {
            out.push(Violation { field: "Q".into(), message: "contains a non-finite entry".into() });
        }
        if let Some(u) = &self.y_upper {
            if u.len() != n {
                out.push(Violation {
                    field: "y_upper".into(),
                    message: format!("length {} does not match n = {n}", u.len()),
                });
            }
            if u.iter().any(|x| !x.is_finite()) {
                out.push(Violation {
                    field: "y_upper".into(),
                    message: "contains a non-finite entry".into(),
                });
            }
        }
        for (k, sc) in self.side_constraints.iter().enumerate() {
            for (part, v) in [("gx", &sc.gx), ("gy", &sc.gy)] {
                if v.len() != n {
                    out.push(Violation {
                        field: format!("side_constraints[{k}].{part}"),
                        message: format!("length {} does not match n = {n}", v.len()),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    out.push(Violation {
                        field: format!("side_constraints[{k}].{part}"),
                        message: "contains a non-finite entry".into(),
                    });
                }
            }
            if !sc.rhs.is_finite() {
                out.push(Violation {
                    field: format!("side_constraints[{k}].rhs"),
                    message: "not finite".into(),
                });
            }
        }
        // PSD check last: it needs well-formed finite data.
        if out.is_empty() && n > 0 {
            match min_eigenvalue(&self.q) {
                Ok(min_eig) => {
                    let floor = -T::of(PSD_TOL) * self.psd_scale();
                    if min_eig < floor {
                        out.push(Violation {
                            field: "Q".into(),
                            message: format!(
                                "not positive semidefinite: min eigenvalue {:e} is below {:e}",
                                min_eig.as_f64(),
                                floor.as_f64()
                            ),
                        });
                    }
                }
                Err(e) => out.push(Violation { field: "Q".into(), message: e.to_string() }),
            }
        }
        out
    }

    /// Validate and convert failures into an error.
    pub fn validated(self) -> Result<Self, Error> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    /// Flags directions along which the continuous minimization could be
    /// unbounded: b_i < 0 with an all-zero Q row and no finite upper bound
    /// on y_i. These are warnings, not validity failures.
    pub fn boundedness_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.n {
            let bounded = self
                .y_upper
                .as_ref()
                .map(|u| u[i].is_finite())
                .unwrap_or(false);
            if self.b[i] < T::zero() && self.q.row_is_zero(i) && !bounded {
                out.push(format!(
                    "objective may be unbounded: b[{i}] = {} with a zero Q row and no bound on y[{i}]",
                    self.b[i]
                ));
            }
        }
        out
    }

    /// Serializes to the canonical JSON form: fixed key order, every number
    /// written with 17 significant digits so parsing reproduces the exact
    /// binary values.
    pub fn to_json_string(&self) -> String {
        let mut s = String::new();
        s.push_str("{\n");
        s.push_str(&format!("  \"n\": {},\n", self.n));
        s.push_str(&format!("  \"a\": {},\n", fmt_vec(&self.a)));
        s.push_str(&format!("  \"b\": {},\n", fmt_vec(&self.b)));
        s.push_str("  \"Q\": [\n");
        let rows = self.q.to_rows();
        for (i, row) in rows.iter().enumerate() {
            s.push_str(&format!(
                "    {}{}\n",
                fmt_vec(row),
                if i + 1 < rows.len() { "," } else { "" }
            ));
        }
        s.push_str("  ]");
        if !self.side_constraints.is_empty() {
            s.push_str(",\n  \"side_constraints\": [\n");
            for (k, sc) in self.side_constraints.iter().enumerate() {
                s.push_str(&format!(
                    "    {{\"gx\": {}, \"gy\": {}, \"rhs\": {}}}{}\n",
                    fmt_vec(&sc.gx),
                    fmt_vec(&sc.gy),
                    fmt_real(sc.rhs),
                    if k + 1 < self.side_constraints.len() { "," } else { "" }
                ));
            }
            s.push_str("  ]");
        }
        if let Some(u) = &self.y_upper {
            s.push_str(&format!(",\n  \"y_upper\": {}", fmt_vec(u)));
        }
        s.push_str("\n}\n");
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    /// Parses and validates an instance. Parse errors keep serde's
    /// line/column context; symmetry is required exactly.
    pub fn from_json_str(text: &str) -> Result<Self, Error> {
        let raw: RawInstance =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let n = raw.n;
        if raw.q.len() != n {
            return Err(Error::Shape(format!("Q has {} rows, expected n = {n}", raw.q.len())));
        }
        let q_rows: Vec<Vec<T>> = raw
            .q
            .iter()
            .map(|row| row.iter().map(|&v| T::of(v)).collect())
            .collect();
        let q = SymMatrix::from_rows(&q_rows)?;
        let inst = QiInstance {
            n,
            a: raw.a.iter().map(|&v| T::of(v)).collect(),
            b: raw.b.iter().map(|&v| T::of(v)).collect(),
            q,
            side_constraints: raw
                .side_constraints
                .unwrap_or_default()
                .into_iter()
                .map(|sc| SideConstraint {
                    gx: sc.gx.iter().map(|&v| T::of(v)).collect(),
                    gy: sc.gy.iter().map(|&v| T::of(v)).collect(),
                    rhs: T::of(sc.rhs),
                })
                .collect(),
            y_upper: raw
                .y_upper
                .map(|u| u.iter().map(|&v| T::of(v)).collect()),
        };
        inst.validated()
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

fn fmt_real<T: Real>(v: T) -> String {
    // 17 significant decimal digits identify an f64 uniquely.
    format!("{:.16e}", v.as_f64())
}

fn fmt_vec<T: Real>(v: &[T]) -> String {
    let body: Vec<String> = v.iter().map(|&x| fmt_real(x)).collect();
    format!("[{}]", body.join(", "))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    side_constraints: Option<Vec<RawSide>>,
    y_upper: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSide {
    gx: Vec<f64>,
    gy: Vec<f64>,
    rhs: f64,
}

/// Parameters for random instance generation.
#[derive(Debug, Clone)]
pub struct GenParams<T> {
    /// Rank of the random factor F in Q = F F' + diag_shift I. Must satisfy
    /// 1 <= rank_k <= n.
    pub rank_k: usize,
    pub diag_shift: T,
    pub a_range: (T, T),
    pub b_range: (T, T),
    pub num_side_constraints: usize,
}

impl<T: Real> Default for GenParams<T> {
    fn default() -> Self {
        GenParams {
            rank_k: 1,
            diag_shift: T::of(0.1),
            a_range: (T::of(-2.0), T::of(2.0)),
            b_range: (T::of(-4.0), T::of(4.0)),
            num_side_constraints: 0,
        }
    }
}

/// Generates a random instance: Q = F F' + diag_shift I with F an
/// n x rank_k matrix of pseudo-normals, costs uniform in the given ranges,
/// and side constraints that keep the origin feasible (rhs > 0).
///
/// Every generated instance carries finite y bounds (uniform in [5, 15]):
/// rank-deficient Q would otherwise admit unbounded relaxations, and a
/// corpus instance must be solvable by every formulation.
///
/// Generation is pinned to the SplitMix64 stream documented in [`crate::rng`]
/// and performs its arithmetic in f64 before converting to the scalar type,
/// so a (n, seed, params) triple names one instance forever. Draw order:
/// F row-major, then a, then b, then y_upper, then per-constraint gx, gy, rhs.
pub fn random_instance<T: Real>(
    n: usize,
    seed: u64,
    params: &GenParams<T>,
) -> Result<QiInstance<T>, Error> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if params.rank_k == 0 || params.rank_k > n {
        return Err(Error::InvalidArgument(format!(
            "rank_k = {} must lie in 1..={n}",
            params.rank_k
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let k = params.rank_k;
    let mut f = vec![0.0f64; n * k];
    for v in f.iter_mut() {
        *v = rng.normal();
    }
    let shift = params.diag_shift.as_f64();
    let q = SymMatrix::from_fn(n, |i, j| {
        let mut acc = 0.0;
        for c in 0..k {
            acc += f[i * k + c] * f[j * k + c];
        }
        if i == j {
            acc += shift;
        }
        T::of(acc)
    });
    let a_range = (params.a_range.0.as_f64(), params.a_range.1.as_f64());
    let b_range = (params.b_range.0.as_f64(), params.b_range.1.as_f64());
    let a: Vec<T> = (0..n).map(|_| T::of(rng.uniform_in(a_range.0, a_range.1))).collect();
    let b: Vec<T> = (0..n).map(|_| T::of(rng.uniform_in(b_range.0, b_range.1))).collect();
    let y_upper: Vec<T> = (0..n).map(|_| T::of(rng.uniform_in(5.0, 15.0))).collect();
    let mut side_constraints = Vec::with_capacity(params.num_side_constraints);
    for _ in 0..params.num_side_constraints {
        let gx: Vec<T> = (0..n).map(|_| T::of(rng.uniform_in(-1.0, 1.0))).collect();
        let gy: Vec<T> = (0..n).map(|_| T::of(rng.uniform_in(-1.0, 1.0))).collect();
        let rhs = T::of(rng.uniform_in(0.1, 2.0));
        side_constraints.push(SideConstraint { gx, gy, rhs });
    }
    let inst = QiInstance { n, a, b, q, side_constraints, y_upper: Some(y_upper) };
    inst.validated()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1() -> QiInstance<f64> {
        QiInstance::new(
            vec![3.0],
            vec![-4.0],
            SymMatrix::from_rows(&[vec![1.0]]).unwrap(),
        )
    }

    #[test]
    fn validate_accepts_well_formed_instance() {
        assert!(e1().validate().is_empty());
    }

    #[test]
    fn validate_rejects_indefinite_q() {
        let q = SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let inst = QiInstance::new(vec![0.0; 2], vec![0.0; 2], q);
        let vs = inst.validate();
        assert_eq!(vs.len(), 1);
        assert_eq!(vs[0].field, "Q");
        assert!(vs[0].message.contains("positive semidefinite"));
    }

    #[test]
    fn validate_rejects_length_mismatch() {
        let mut inst = e1();
        inst.a = vec![1.0, 2.0];
        let vs = inst.validate();
        assert!(vs.iter().any(|v| v.field == "a"));
    }

    #[test]
    fn validate_rejects_non_finite() {
        let mut inst = e1();
        inst.b = vec![f64::NAN];
        assert!(inst.validate().iter().any(|v| v.field == "b"));
    }

    #[test]
    fn boundedness_warning_fires_on_zero_row_with_negative_cost() {
        let q = SymMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let inst = QiInstance::new(vec![0.0; 2], vec![1.0, -1.0], q);
        let warnings = inst.boundedness_warnings();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("b[1]"));
        // A finite bound silences it.
        let mut bounded = inst.clone();
        bounded.y_upper = Some(vec![10.0, 10.0]);
        assert!(bounded.boundedness_warnings().is_empty());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let inst = random_instance::<f64>(
            4,
            99,
            &GenParams { rank_k: 2, num_side_constraints: 2, ..GenParams::default() },
        )
        .unwrap();
        let text = inst.to_json_string();
        let back = QiInstance::<f64>::from_json_str(&text).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn json_round_trip_with_awkward_values() {
        let q = SymMatrix::from_rows(&[vec![0.1 + 0.2]]).unwrap();
        let mut inst = QiInstance::new(vec![1.0 / 3.0], vec![-1e-17], q);
        inst.y_upper = Some(vec![1e17]);
        let back = QiInstance::<f64>::from_json_str(&inst.to_json_string()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn parse_reports_position() {
        let err = QiInstance::<f64>::from_json_str("{\"n\": 1, \"a\": [1.0,]").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "expected position info, got: {msg}");
    }

    #[test]
    fn parse_rejects_asymmetric_q() {
        let text = r#"{"n": 2, "a": [0, 0], "b": [0, 0], "Q": [[1, 0.5], [0.4999, 1]]}"#;
        let err = QiInstance::<f64>::from_json_str(text).unwrap_err();
        assert!(err.to_string().contains("symmetric"));
    }

    #[test]
    fn parse_rejects_unknown_fields() {
        let text = r#"{"n": 1, "a": [0], "b": [0], "Q": [[1]], "extra": 1}"#;
        assert!(QiInstance::<f64>::from_json_str(text).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let p = GenParams { rank_k: 3, num_side_constraints: 1, ..GenParams::default() };
        let a = random_instance::<f64>(5, 2024, &p).unwrap();
        let b = random_instance::<f64>(5, 2024, &p).unwrap();
        assert_eq!(a, b);
        let c = random_instance::<f64>(5, 2025, &p).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_q_respects_shift_floor() {
        for seed in 0..10u64 {
            let p = GenParams { rank_k: 2, diag_shift: 0.5, ..GenParams::default() };
            let inst = random_instance::<f64>(6, seed, &p).unwrap();
            let min_eig = min_eigenvalue(&inst.q).unwrap();
            let tol = 1e-8 * (1.0 + inst.q.max_abs());
            assert!(min_eig >= 0.5 - tol, "seed {seed}: min eig {min_eig}");
        }
    }

    #[test]
    fn rank_one_q_has_negligible_second_eigenvalue() {
        let p = GenParams { rank_k: 1, diag_shift: 0.0, ..GenParams::default() };
        let inst = random_instance::<f64>(4, 11, &p).unwrap();
        let (vals, _) = crate::linalg::sym_eigen(&inst.q).unwrap();
        let trace: f64 = inst.q.diag().iter().sum();
        // All but the largest eigenvalue vanish relative to the trace.
        for &v in &vals[..3] {
            assert!(v.abs() <= 1e-8 * trace);
        }
    }

    #[test]
    fn lex_index_ordering_matches_tuple_order() {
        let p0 = Pattern::from_lex_index(2, 0);
        let p1 = Pattern::from_lex_index(2, 1);
        let p2 = Pattern::from_lex_index(2, 2);
        let p3 = Pattern::from_lex_index(2, 3);
        assert_eq!(p0.bits(), &[false, false]);
        assert_eq!(p1.bits(), &[false, true]);
        assert_eq!(p2.bits(), &[true, false]);
        assert_eq!(p3.bits(), &[true, true]);
        assert!(p0 < p1 && p1 < p2 && p2 < p3);
    }
}
