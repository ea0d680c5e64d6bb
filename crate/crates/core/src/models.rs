//! Model builders and the JSON model-file format.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{commutator_norm, HamiltonianSpec, Pauli, PauliString};
use crate::scalar::Real;

/// Default cap on the number of Pauli terms produced by [`build_penalty`].
pub const DEFAULT_TERM_BUDGET: usize = 4096;

/// Commutator tolerance used when validating a declared conserved quantity.
pub const COMMUTATION_TOLERANCE: f64 = 1e-10;

/// Model text shipped with the crate: the N = 4 open Heisenberg chain with
/// the pair driver.
pub const SHIPPED_MODEL: &str = include_str!("../data/heisenberg_n4.model");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeisenbergParams {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "B_prime")]
    pub b_prime: Vec<f64>,
    #[serde(default)]
    pub boundary: Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverParams {
    #[serde(rename = "J_pair")]
    pub j_pair: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
}

/// `H_add = -lambda (Q - q)^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Penalty {
    pub lambda: f64,
    pub q: f64,
}

/// Validated model: problem, driver and conserved quantity on one register.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig<T> {
    pub n_qubits: usize,
    pub problem: HamiltonianSpec<T>,
    pub driver: HamiltonianSpec<T>,
    pub conserved: HamiltonianSpec<T>,
    pub penalty: Option<Penalty>,
    pub label: String,
    pub provenance: String,
    /// Description the model was built from, kept for run metadata.
    pub source: ModelFile,
}

impl<T: Real> ModelConfig<T> {
    /// Problem Hamiltonian including the penalty term, if any.
    pub fn effective_problem(&self) -> Result<HamiltonianSpec<T>> {
        match self.penalty {
            None => Ok(self.problem.clone()),
            Some(p) => {
                let add = build_penalty(&self.conserved, T::lit(p.q), T::lit(p.lambda), DEFAULT_TERM_BUDGET)?;
                self.problem.plus(&add)
            }
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        let n = file.n_qubits;
        if n == 0 {
            return Err(Error::Model("n_qubits must be positive".into()));
        }
        let problem = operator_from_desc::<T>(&file.problem, n, "problem")?;
        let driver = operator_from_desc::<T>(&file.driver, n, "driver")?;
        let conserved = operator_from_desc::<T>(&file.conserved, n, "conserved")?;
        if let Some(p) = file.penalty {
            if !(p.lambda > 0.0) || !p.lambda.is_finite() {
                return Err(Error::Model(format!("penalty lambda must be positive, got {}", p.lambda)));
            }
            if !p.q.is_finite() {
                return Err(Error::Model("penalty q must be finite".into()));
            }
        }
        for (name, h) in [("problem", &problem), ("driver", &driver)] {
            let norm = commutator_norm(h, &conserved)?;
            if norm.to_f64_lossy() > COMMUTATION_TOLERANCE {
                return Err(Error::Model(format!(
                    "declared conserved quantity does not commute with the {name} Hamiltonian (norm {:e})",
                    norm.to_f64_lossy()
                )));
            }
        }
        Ok(Self {
            n_qubits: n,
            problem,
            driver,
            conserved,
            penalty: file.penalty,
            label: file.label.clone().unwrap_or_default(),
            provenance: file.provenance.clone().unwrap_or_default(),
            source: file,
        })
    }
}

/// `J sum_<ij> (XX + YY + ZZ) + sum_i B'_i Z_i`.
pub fn build_heisenberg<T: Real>(p: &HeisenbergParams) -> Result<HamiltonianSpec<T>> {
    let n = p.b_prime.len();
    if n == 0 {
        return Err(Error::InvalidParameter("B_prime must not be empty".into()));
    }
    check_finite("J", &[p.j])?;
    check_finite("B_prime", &p.b_prime)?;
    let mut bonds: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    if p.boundary == Boundary::Periodic && n > 1 {
        bonds.push((n - 1, 0));
    }
    let j = T::lit(p.j);
    let mut terms = Vec::with_capacity(3 * bonds.len() + n);
    for &(a, b) in &bonds {
        for op in [Pauli::X, Pauli::Y, Pauli::Z] {
            terms.push((j, PauliString::from_sparse(n, &[(a, op), (b, op)])?));
        }
    }
    for (i, &bp) in p.b_prime.iter().enumerate() {
        terms.push((T::lit(bp), PauliString::from_sparse(n, &[(i, Pauli::Z)])?));
    }
    HamiltonianSpec::new(n, terms)
}

/// `sum_i J_pair_i (X X + Y Y) on pair (2i, 2i+1) + sum_i B_i Z_i`.
pub fn build_driver<T: Real>(p: &DriverParams) -> Result<HamiltonianSpec<T>> {
    let n = p.b.len();
    if n == 0 || n % 2 == 1 {
        return Err(Error::InvalidParameter(format!(
            "the pair driver needs an even, positive number of qubits, got {n}"
        )));
    }
    if p.j_pair.len() != n / 2 {
        return Err(Error::InvalidParameter(format!(
            "J_pair has {} entries, expected {}",
            p.j_pair.len(),
            n / 2
        )));
    }
    check_finite("J_pair", &p.j_pair)?;
    check_finite("B", &p.b)?;
    let mut terms = Vec::with_capacity(2 * n);
    for (k, &jp) in p.j_pair.iter().enumerate() {
        let (a, b) = (2 * k, 2 * k + 1);
        for op in [Pauli::X, Pauli::Y] {
            terms.push((T::lit(jp), PauliString::from_sparse(n, &[(a, op), (b, op)])?));
        }
    }
    for (i, &bi) in p.b.iter().enumerate() {
        terms.push((T::lit(bi), PauliString::from_sparse(n, &[(i, Pauli::Z)])?));
    }
    HamiltonianSpec::new(n, terms)
}

/// `M = sum_i Z_i`.
pub fn total_magnetization<T: Real>(n_qubits: usize) -> HamiltonianSpec<T> {
    single_site_sum(n_qubits, Pauli::Z, &vec![T::one(); n_qubits])
}

fn single_site_sum<T: Real>(n_qubits: usize, op: Pauli, coeffs: &[T]) -> HamiltonianSpec<T> {
    let terms = coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, PauliString::from_sparse(n_qubits, &[(i, op)]).expect("site in range")))
        .collect();
    HamiltonianSpec::new(n_qubits, terms).expect("valid single-site sum")
}

/// Pauli expansion of `-lambda (Q - q I)^2`.
pub fn build_penalty<T: Real>(q_op: &HamiltonianSpec<T>, q_target: T, lambda: T, term_budget: usize) -> Result<HamiltonianSpec<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::InvalidParameter("penalty lambda must be positive".into()));
    }
    let shifted = q_op.plus(&HamiltonianSpec::identity(q_op.n_qubits(), -q_target))?;
    let square = shifted.product(&shifted)?;
    if square.terms().len() > term_budget {
        return Err(Error::TermBudget {
            terms: square.terms().len(),
            budget: term_budget,
        });
    }
    Ok(square.scaled(-lambda))
}

/// Role of a qubit in the GHZ preparation layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayoutSlot {
    /// Part of the GHZ register.
    Register,
    /// Extension qubit prepared in `|+>`.
    Plus,
    /// Extension qubit prepared in `|->`.
    Minus,
}

/// Assignment of qubits to the GHZ register and `|+>`/`|->` extensions,
/// written as a string over `G`, `+` and `-` (qubit 0 first).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhzLayout {
    slots: Vec<LayoutSlot>,
}

impl GhzLayout {
    pub fn parse(pattern: &str) -> Result<Self> {
        let slots = pattern
            .chars()
            .map(|c| match c {
                'G' | 'g' => Ok(LayoutSlot::Register),
                '+' => Ok(LayoutSlot::Plus),
                '-' => Ok(LayoutSlot::Minus),
                _ => Err(Error::InvalidParameter(format!(
                    "layout {pattern:?} may contain only G, + and -"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let layout = Self { slots };
        let r = layout.register().len();
        if r == 0 || r % 2 == 1 {
            return Err(Error::InvalidParameter(format!(
                "layout {pattern:?} needs an even, positive number of register qubits"
            )));
        }
        Ok(layout)
    }

    /// Layout with every qubit in the register.
    pub fn full_register(n_qubits: usize) -> Result<Self> {
        Self::parse(&"G".repeat(n_qubits))
    }

    pub fn n_qubits(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[LayoutSlot] {
        &self.slots
    }

    /// Qubit indices of the register, ascending.
    pub fn register(&self) -> Vec<usize> {
        (0..self.slots.len())
            .filter(|&i| self.slots[i] == LayoutSlot::Register)
            .collect()
    }
}

impl std::fmt::Display for GhzLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in &self.slots {
            let c = match s {
                LayoutSlot::Register => 'G',
                LayoutSlot::Plus => '+',
                LayoutSlot::Minus => '-',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Hamiltonians of the GHZ preparation pipeline. `h1`..`h4` act on the GHZ
/// register alone (qubit `k` of the register is the `k`-th `G` slot);
/// `h_transverse` acts on the full layout.
#[derive(Clone, Debug, PartialEq)]
pub struct GhzStageHamiltonians<T> {
    pub h1: HamiltonianSpec<T>,
    pub h2: HamiltonianSpec<T>,
    pub h3: HamiltonianSpec<T>,
    pub h4: HamiltonianSpec<T>,
    pub h_transverse: HamiltonianSpec<T>,
}

/// `H1 = B1 sum X`, `H2 = -B2 (sum Z)^2`, `H3 = -B3 (sum X)^2`,
/// `H4 = sum B_i X_i` on the register, `H_transverse = sum B_i X_i` on all
/// qubits.
pub fn build_ghz_stage_hamiltonians<T: Real>(layout: &GhzLayout, b1: T, b2: T, b3: T, b_vec: &[T]) -> Result<GhzStageHamiltonians<T>> {
    let n = layout.n_qubits();
    if b_vec.len() != n {
        return Err(Error::InvalidParameter(format!(
            "B vector has {} entries, layout has {n} qubits",
            b_vec.len()
        )));
    }
    let reg = layout.register();
    let r = reg.len();
    let ones = vec![T::one(); r];
    let sum_x = single_site_sum(r, Pauli::X, &ones);
    let sum_z = single_site_sum(r, Pauli::Z, &ones);
    let h1 = sum_x.scaled(b1).canonicalize();
    let h2 = sum_z.product(&sum_z)?.scaled(-b2).canonicalize();
    let h3 = sum_x.product(&sum_x)?.scaled(-b3).canonicalize();
    let reg_b: Vec<T> = reg.iter().map(|&q| b_vec[q]).collect();
    let h4 = single_site_sum(r, Pauli::X, &reg_b).canonicalize();
    let h_transverse = single_site_sum(n, Pauli::X, b_vec).canonicalize();
    Ok(GhzStageHamiltonians {
        h1,
        h2,
        h3,
        h4,
        h_transverse,
    })
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} contains a non-finite value")))
    }
}

// ---------------------------------------------------------------------------
// Model files

/// Operator description: either a builtin with parameters or explicit terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorDesc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<(f64, String)>>,
}

/// Parsed, not yet validated, model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n_qubits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    pub problem: OperatorDesc,
    pub driver: OperatorDesc,
    pub conserved: OperatorDesc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<Penalty>,
}

fn operator_from_desc<T: Real>(desc: &OperatorDesc, n: usize, field: &str) -> Result<HamiltonianSpec<T>> {
    let model_err = |m: String| Error::Model(format!("{field}: {m}"));
    match (&desc.builtin, &desc.terms) {
        (Some(_), Some(_)) => Err(model_err("give either builtin or terms, not both".into())),
        (None, None) => Err(model_err("either builtin or terms is required".into())),
        (None, Some(terms)) => {
            if desc.params.is_some() {
                return Err(model_err("params is only valid with builtin".into()));
            }
            if terms.is_empty() {
                return Err(model_err("terms list is empty".into()));
            }
            let mut parsed = Vec::with_capacity(terms.len());
            for (c, s) in terms {
                if !c.is_finite() {
                    return Err(model_err(format!("non-finite coefficient on {s}")));
                }
                let ps: PauliString = s.parse().map_err(|e: Error| model_err(e.to_string()))?;
                if ps.n_qubits() != n {
                    return Err(model_err(format!(
                        "string {s:?} has {} qubits, model has {n}",
                        ps.n_qubits()
                    )));
                }
                parsed.push((T::lit(*c), ps));
            }
            HamiltonianSpec::new(n, parsed).map_err(|e| model_err(e.to_string()))
        }
        (Some(name), None) => {
            let params = desc.params.clone().unwrap_or(serde_json::Value::Null);
            let needs_params = |name: &str| -> Result<serde_json::Value> {
                if params.is_null() {
                    Err(model_err(format!("builtin {name:?} requires params")))
                } else {
                    Ok(params.clone())
                }
            };
            let no_params = || -> Result<()> {
                if params.is_null() {
                    Ok(())
                } else {
                    Err(model_err(format!("builtin {name:?} takes no params")))
                }
            };
            match name.as_str() {
                "heisenberg" => {
                    let p: HeisenbergParams =
                        serde_json::from_value(needs_params(name)?).map_err(|e| model_err(e.to_string()))?;
                    if p.b_prime.len() != n {
                        return Err(model_err(format!("B_prime has {} entries, model has {n} qubits", p.b_prime.len())));
                    }
                    build_heisenberg(&p).map_err(|e| model_err(e.to_string()))
                }
                "xy_driver" => {
                    let p: DriverParams =
                        serde_json::from_value(needs_params(name)?).map_err(|e| model_err(e.to_string()))?;
                    if n % 2 == 1 {
                        return Err(model_err(format!("the pair driver needs an even number of qubits, model has {n}")));
                    }
                    if p.b.len() != n {
                        return Err(model_err(format!("B has {} entries, model has {n} qubits", p.b.len())));
                    }
                    build_driver(&p).map_err(|e| model_err(e.to_string()))
                }
                "total_magnetization" => {
                    no_params()?;
                    Ok(total_magnetization(n))
                }
                "identity" => {
                    no_params()?;
                    Ok(HamiltonianSpec::identity(n, T::one()))
                }
                other => Err(model_err(format!("unknown builtin {other:?}"))),
            }
        }
    }
}

/// Parses and validates a JSON model description.
pub fn parse_model_file<T: Real>(text: &str) -> Result<ModelConfig<T>> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    ModelConfig::from_file(file)
}

/// The shipped N = 4 configuration.
pub fn shipped_model<T: Real>() -> ModelConfig<T> {
    parse_model_file(SHIPPED_MODEL).expect("shipped model file is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigh;
    use crate::operators::{expectation, materialize, StateVector};
    use proptest::prelude::*;

    fn chain_b_prime() -> Vec<f64> {
        vec![-0.24, -0.34, -0.62, -0.09]
    }

    fn energies(h: &HamiltonianSpec<f64>) -> Vec<f64> {
        eigh(&materialize(h).unwrap(), 1e-10).unwrap().values
    }

    #[test]
    fn heisenberg_term_counts() {
        for (boundary, count) in [(Boundary::Periodic, 16), (Boundary::Open, 13)] {
            let h = build_heisenberg::<f64>(&HeisenbergParams {
                j: 1.0,
                b_prime: chain_b_prime(),
                boundary,
            })
            .unwrap();
            assert_eq!(h.terms().len(), count);
        }
    }

    #[test]
    fn pure_field_spectrum() {
        let h = build_heisenberg::<f64>(&HeisenbergParams {
            j: 0.0,
            b_prime: vec![0.3, 0.7],
            boundary: Boundary::Periodic,
        })
        .unwrap();
        let e = energies(&h);
        let want = [-1.0, -0.4, 0.4, 1.0];
        for (a, b) in e.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn driver_ground_state() {
        let h = build_driver::<f64>(&DriverParams {
            j_pair: vec![0.5, 0.3],
            b: vec![-1.0, -1.0, 1.0, 1.0],
        })
        .unwrap();
        assert_eq!(h.terms().len(), 8);
        let ket = StateVector::from_ket("1100").unwrap();
        let hv = crate::operators::apply(&h, &ket).unwrap();
        for (i, a) in hv.iter().enumerate() {
            let want = if i == 3 { -4.0 } else { 0.0 };
            assert!((a.re - want).abs() < 1e-14 && a.im.abs() < 1e-14);
        }
        assert!((energies(&h)[0] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn driver_pair_block_spectrum() {
        // One pair: aligned states at +-(Ba+Bb), mixed block eigenvalues
        // +-sqrt((Ba-Bb)^2 + 4 J^2).
        let (j, ba, bb) = (0.7, -0.4, 1.1);
        let h = build_driver::<f64>(&DriverParams {
            j_pair: vec![j],
            b: vec![ba, bb],
        })
        .unwrap();
        let r = ((ba - bb) * (ba - bb) + 4.0 * j * j).sqrt();
        let mut want = vec![ba + bb, -(ba + bb), r, -r];
        want.sort_by(f64::total_cmp);
        for (a, b) in energies(&h).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn driver_rejects_odd_or_mismatched() {
        assert!(build_driver::<f64>(&DriverParams { j_pair: vec![1.0], b: vec![1.0; 3] }).is_err());
        assert!(build_driver::<f64>(&DriverParams { j_pair: vec![1.0], b: vec![1.0; 4] }).is_err());
    }

    #[test]
    fn penalty_two_qubit_expansion() {
        let q = total_magnetization::<f64>(2);
        let p = build_penalty(&q, 0.0, 1.0, DEFAULT_TERM_BUDGET).unwrap();
        let want = HamiltonianSpec::from_labels(2, &[(-2.0, "II"), (-2.0, "ZZ")]).unwrap().canonicalize();
        assert_eq!(p.canonicalize(), want);
    }

    #[test]
    fn penalty_vanishes_on_target_eigenstate() {
        let q = total_magnetization::<f64>(4);
        let p = build_penalty(&q, 4.0, 0.8, DEFAULT_TERM_BUDGET).unwrap();
        let s = StateVector::from_ket("1111").unwrap();
        assert!(expectation(&p, &s).unwrap().abs() < 1e-12);
        assert!(matches!(build_penalty(&q, 0.0, 1.0, 3), Err(Error::TermBudget { .. })));
        assert!(build_penalty(&q, 0.0, 0.0, 3).is_err());
    }

    #[test]
    fn ghz_stage_structure() {
        let layout = GhzLayout::full_register(4).unwrap();
        let b = [-1.0, -1.0, 1.0, 1.0];
        let hb = build_ghz_stage_hamiltonians::<f64>(&layout, 1.0, 1.0, 1.0, &b).unwrap();
        assert!(commutator_norm(&hb.h3, &hb.h4).unwrap() < 1e-12);
        // H2 ground space: fully polarized states at -B2 N^2.
        let e2 = energies(&hb.h2);
        assert!((e2[0] + 16.0).abs() < 1e-12 && (e2[1] + 16.0).abs() < 1e-12 && e2[2] > -16.0 + 1.0);
        for ket in ["0000", "1111"] {
            let s = StateVector::from_ket(ket).unwrap();
            assert!((expectation(&hb.h2, &s).unwrap() + 16.0).abs() < 1e-12);
        }
        // H1 ground state for B1 > 0 is |--..->.
        let m = std::f64::consts::FRAC_1_SQRT_2;
        let minus = [num_complex::Complex::new(m, 0.0), num_complex::Complex::new(-m, 0.0)];
        let s = StateVector::product(&[minus; 4]).unwrap();
        assert!((expectation(&hb.h1, &s).unwrap() + 4.0).abs() < 1e-12);
        assert!((energies(&hb.h1)[0] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn layouts() {
        let l = GhzLayout::parse("GG--").unwrap();
        assert_eq!(l.register(), vec![0, 1]);
        assert_eq!(l.to_string(), "GG--");
        assert!(GhzLayout::parse("G---").is_err());
        assert!(GhzLayout::parse("GGx-").is_err());
        let hb = build_ghz_stage_hamiltonians::<f64>(&l, 1.0, 1.0, 1.0, &[-1.0, -1.0, 1.0, 1.0]).unwrap();
        assert_eq!(hb.h1.n_qubits(), 2);
        assert_eq!(hb.h_transverse.n_qubits(), 4);
    }

    #[test]
    fn shipped_model_parses() {
        let m = shipped_model::<f64>();
        assert_eq!(m.n_qubits, 4);
        let direct = build_heisenberg::<f64>(&HeisenbergParams {
            j: 1.0,
            b_prime: chain_b_prime(),
            boundary: Boundary::Open,
        })
        .unwrap();
        assert_eq!(m.problem, direct);
        assert!(m.penalty.is_none());
        assert!(commutator_norm(&m.problem, &total_magnetization(4)).unwrap() < 1e-12);
        assert!(commutator_norm(&m.driver, &total_magnetization(4)).unwrap() < 1e-12);
    }

    fn base_json(conserved: &str) -> String {
        format!(
            r#"{{
  "n_qubits": 2,
  "problem": {{"terms": [[1.0, "ZZ"], [0.5, "XX"], [0.5, "YY"]]}},
  "driver": {{"builtin": "xy_driver", "params": {{"J_pair": [0.2], "B": [1.0, -1.0]}}}},
  "conserved": {conserved}
}}"#
        )
    }

    #[test]
    fn model_file_errors() {
        assert!(parse_model_file::<f64>(&base_json(r#"{"builtin": "total_magnetization"}"#)).is_ok());
        let err = parse_model_file::<f64>(&base_json(r#"{"terms": [[1.0, "XI"], [1.0, "IX"]]}"#)).unwrap_err();
        assert!(matches!(err, Error::Model(ref m) if m.contains("commute")), "{err}");
        let err = parse_model_file::<f64>(&base_json(r#"{"terms": []}"#)).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
        let err = parse_model_file::<f64>(&base_json(r#"{"builtin": "total_magnetization", "extra": 1}"#)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 5, .. }), "{err}");
        let err = parse_model_file::<f64>("{\n  \"n_qubits\": 2,\n  oops\n}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, column: 3, .. }), "{err}");
        let odd = r#"{"n_qubits": 3, "problem": {"terms": [[1.0, "ZII"]]},
            "driver": {"builtin": "xy_driver", "params": {"J_pair": [0.2], "B": [1, 1, 1]}},
            "conserved": {"builtin": "total_magnetization"}}"#;
        assert!(matches!(parse_model_file::<f64>(odd), Err(Error::Model(_))));
        let bad_lambda = base_json(r#"{"builtin": "total_magnetization"}, "penalty": {"lambda": -1.0, "q": 0.0}"#);
        assert!(matches!(parse_model_file::<f64>(&bad_lambda), Err(Error::Model(_))));
    }

    #[test]
    fn sigma_x_conserved_rejected_for_heisenberg() {
        let text = SHIPPED_MODEL.replace(
            r#"{"builtin": "total_magnetization"}"#,
            r#"{"terms": [[1.0, "XIII"], [1.0, "IXII"], [1.0, "IIXI"], [1.0, "IIIX"]]}"#,
        );
        assert_ne!(text, SHIPPED_MODEL);
        assert!(matches!(parse_model_file::<f64>(&text), Err(Error::Model(_))));
    }

    #[test]
    fn model_file_round_trips() {
        let m = shipped_model::<f64>();
        let text = serde_json::to_string_pretty(&m.source).unwrap();
        let again = parse_model_file::<f64>(&text).unwrap();
        assert_eq!(again, m);
    }

    proptest! {
        #[test]
        fn builders_are_deterministic(j in -2.0f64..2.0, b in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let p = HeisenbergParams { j, b_prime: b.clone(), boundary: Boundary::Periodic };
            let a = build_heisenberg::<f64>(&p).unwrap().canonicalize();
            let c = build_heisenberg::<f64>(&p).unwrap().canonicalize();
            prop_assert_eq!(a, c);
            let d = DriverParams { j_pair: vec![j, -j], b };
            prop_assert_eq!(build_driver::<f64>(&d).unwrap(), build_driver::<f64>(&d).unwrap());
        }

        #[test]
        fn penalty_shifts_sectors_uniformly(lambda in 0.1f64..3.0, q in -4i32..=4, b in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let h = build_heisenberg::<f64>(&HeisenbergParams { j: 1.0, b_prime: b, boundary: Boundary::Periodic }).unwrap();
            let m = total_magnetization::<f64>(4);
            let pen = build_penalty(&m, q as f64, lambda, DEFAULT_TERM_BUDGET).unwrap();
            let total = h.plus(&pen).unwrap();
            // Every M eigenstate |b> picks up exactly -lambda (m_b - q)^2.
            for basis in 0..16usize {
                let mb = 2.0 * basis.count_ones() as f64 - 4.0;
                let shift = -lambda * (mb - q as f64).powi(2);
                prop_assert!((pen.diagonal_element(basis) - shift).abs() < 1e-12);
            }
            let dense_h = materialize(&h).unwrap();
            let dense_t = materialize(&total).unwrap();
            for r in 0..16usize {
                for c in 0..16usize {
                    let mr = 2.0 * r.count_ones() as f64 - 4.0;
                    let want = dense_h[(r, c)].re + if r == c { -lambda * (mr - q as f64).powi(2) } else { 0.0 };
                    prop_assert!((dense_t[(r, c)].re - want).abs() < 1e-12);
                }
            }
        }
    }
}
