//! Pauli-string operator algebra and state vectors.
//!
//! Basis index `b` encodes qubit `i` in bit `i`. A set bit means the qubit is
//! in the `σᶻ = +1` eigenstate, so `Z` on qubit `i` acts as `+1` on basis
//! states with bit `i` set and `-1` otherwise. Ket strings such as `"1100"`
//! list qubit 0 first.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::{cplx, czero, i_pow, Cplx, Real};

/// Default qubit cap for dense materialization.
pub const DEFAULT_DENSE_CAP: usize = 12;

/// Largest register a state vector may address.
pub const MAX_STATE_QUBITS: usize = 30;

/// Tolerance on the norm of every public [`StateVector`].
pub const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn from_char(c: char) -> Option<Self> {
        match c {
            'I' | 'i' => Some(Pauli::I),
            'X' | 'x' => Some(Pauli::X),
            'Y' | 'y' => Some(Pauli::Y),
            'Z' | 'z' => Some(Pauli::Z),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    /// Single-qubit product `self * other = i^k * result`.
    fn mul(self, other: Pauli) -> (u32, Pauli) {
        use Pauli::*;
        match (self, other) {
            (I, p) | (p, I) => (0, p),
            (X, X) | (Y, Y) | (Z, Z) => (0, I),
            (X, Y) => (1, Z),
            (Y, Z) => (1, X),
            (Z, X) => (1, Y),
            (Y, X) => (3, Z),
            (Z, Y) => (3, X),
            (X, Z) => (3, Y),
        }
    }
}

/// Tensor product of single-qubit Paulis; position `i` acts on qubit `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    factors: Vec<Pauli>,
}

impl PauliString {
    pub fn new(factors: Vec<Pauli>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidPauli("empty string".into()));
        }
        if factors.len() > 63 {
            return Err(Error::InvalidPauli(format!(
                "{} qubits exceeds the 63-qubit mask width",
                factors.len()
            )));
        }
        Ok(Self { factors })
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self {
            factors: vec![Pauli::I; n_qubits.max(1)],
        }
    }

    /// String with `ops` placed on the listed qubits and identity elsewhere.
    pub fn from_sparse(n_qubits: usize, ops: &[(usize, Pauli)]) -> Result<Self> {
        let mut factors = vec![Pauli::I; n_qubits];
        for &(q, p) in ops {
            if q >= n_qubits {
                return Err(Error::InvalidPauli(format!(
                    "qubit {q} out of range for {n_qubits} qubits"
                )));
            }
            factors[q] = p;
        }
        Self::new(factors)
    }

    pub fn n_qubits(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Pauli] {
        &self.factors
    }

    pub fn is_identity(&self) -> bool {
        self.factors.iter().all(|p| *p == Pauli::I)
    }

    /// True when the string only contains `I` and `Z`.
    pub fn is_diagonal(&self) -> bool {
        self.factors.iter().all(|p| matches!(p, Pauli::I | Pauli::Z))
    }

    /// Bit masks: `x` flips (X or Y), `z` signs (Z or Y), and the Y count.
    pub(crate) fn masks(&self) -> (usize, usize, u32) {
        let mut x = 0usize;
        let mut z = 0usize;
        let mut ny = 0u32;
        for (q, p) in self.factors.iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => x |= 1 << q,
                Pauli::Z => z |= 1 << q,
                Pauli::Y => {
                    x |= 1 << q;
                    z |= 1 << q;
                    ny += 1;
                }
            }
        }
        (x, z, ny)
    }

    /// Product `self * other = i^k * string`.
    pub fn mul(&self, other: &PauliString) -> Result<(u32, PauliString)> {
        if self.n_qubits() != other.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits(),
                found: other.n_qubits(),
            });
        }
        let mut k = 0u32;
        let factors = self
            .factors
            .iter()
            .zip(&other.factors)
            .map(|(a, b)| {
                let (dk, p) = a.mul(*b);
                k += dk;
                p
            })
            .collect();
        Ok((k % 4, PauliString { factors }))
    }
}

impl FromStr for PauliString {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let factors = s
            .chars()
            .map(|c| {
                Pauli::from_char(c)
                    .ok_or_else(|| Error::InvalidPauli(format!("unexpected character {c:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.factors {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

/// Real-weighted sum of Pauli strings on a fixed register.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSpec<T> {
    n_qubits: usize,
    terms: Vec<(T, PauliString)>,
}

impl<T: Real> HamiltonianSpec<T> {
    pub fn new(n_qubits: usize, terms: Vec<(T, PauliString)>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidParameter("n_qubits must be positive".into()));
        }
        for (c, s) in &terms {
            if s.n_qubits() != n_qubits {
                return Err(Error::DimensionMismatch {
                    expected: n_qubits,
                    found: s.n_qubits(),
                });
            }
            if !c.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite coefficient on {s}")));
            }
        }
        Ok(Self { n_qubits, terms })
    }

    /// The empty sum (zero operator).
    pub fn zero(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            terms: Vec::new(),
        }
    }

    pub fn identity(n_qubits: usize, coeff: T) -> Self {
        Self {
            n_qubits,
            terms: vec![(coeff, PauliString::identity(n_qubits))],
        }
    }

    /// Parses `(coefficient, "XYZI...")` pairs.
    pub fn from_labels(n_qubits: usize, terms: &[(T, &str)]) -> Result<Self> {
        let parsed = terms
            .iter()
            .map(|(c, s)| Ok((*c, s.parse::<PauliString>()?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n_qubits, parsed)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(T, PauliString)] {
        &self.terms
    }

    pub fn is_diagonal(&self) -> bool {
        self.terms.iter().all(|(_, s)| s.is_diagonal())
    }

    /// Sum of absolute coefficients; an upper bound on the operator norm.
    pub fn coefficient_norm(&self) -> T {
        self.terms.iter().map(|(c, _)| c.abs()).sum()
    }

    /// Merges duplicate strings and drops exactly-zero coefficients. Terms are
    /// sorted by string so equal operators canonicalize identically.
    pub fn canonicalize(&self) -> Self {
        let mut merged: BTreeMap<PauliString, T> = BTreeMap::new();
        for (c, s) in &self.terms {
            *merged.entry(s.clone()).or_insert_with(T::zero) += *c;
        }
        Self {
            n_qubits: self.n_qubits,
            terms: merged
                .into_iter()
                .filter(|(_, c)| *c != T::zero())
                .map(|(s, c)| (c, s))
                .collect(),
        }
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            n_qubits: self.n_qubits,
            terms: self.terms.iter().map(|(c, s)| (*c * factor, s.clone())).collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self {
            n_qubits: self.n_qubits,
            terms,
        })
        .map(|h| h.canonicalize())
    }

    /// Symbolic operator product. The result must be Hermitian with real
    /// coefficients (true whenever the factors commute); otherwise
    /// [`Error::NonHermitian`] is returned.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut acc: BTreeMap<PauliString, Cplx<T>> = BTreeMap::new();
        for (ca, sa) in &self.terms {
            for (cb, sb) in &other.terms {
                let (k, s) = sa.mul(sb)?;
                *acc.entry(s).or_insert_with(czero) += i_pow::<T>(k) * (*ca * *cb);
            }
        }
        let scale = self.coefficient_norm() * other.coefficient_norm();
        let tol = T::lit(1e-12) * (T::one() + scale);
        let mut terms = Vec::with_capacity(acc.len());
        for (s, c) in acc {
            if c.im.abs() > tol {
                return Err(Error::NonHermitian {
                    imag: c.im.to_f64_lossy(),
                });
            }
            if c.re != T::zero() {
                terms.push((c.re, s));
            }
        }
        Ok(Self {
            n_qubits: self.n_qubits,
            terms,
        })
    }

    /// Diagonal matrix element `<b|H|b>` (off-diagonal strings contribute 0).
    pub fn diagonal_element(&self, basis: usize) -> T {
        self.terms
            .iter()
            .filter(|(_, s)| s.masks().0 == 0)
            .map(|(c, s)| {
                let (_, z, _) = s.masks();
                if (!basis & z).count_ones() % 2 == 1 {
                    -*c
                } else {
                    *c
                }
            })
            .sum()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                found: other.n_qubits,
            });
        }
        Ok(())
    }

    pub(crate) fn masked_terms(&self) -> Vec<MaskedTerm<T>> {
        self.terms
            .iter()
            .map(|(c, s)| {
                let (x, z, ny) = s.masks();
                MaskedTerm {
                    x,
                    z,
                    coeff: i_pow::<T>(ny) * *c,
                }
            })
            .collect()
    }
}

/// Pauli term compiled into bit masks: `P|b> = coeff * (-1)^{|~b & z|} |b ^ x>`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct MaskedTerm<T> {
    pub x: usize,
    pub z: usize,
    pub coeff: Cplx<T>,
}

/// Accumulates `out += scale * H psi` for a compiled operator.
pub(crate) fn apply_masked<T: Real>(
    terms: &[MaskedTerm<T>],
    scale: Cplx<T>,
    psi: &[Cplx<T>],
    out: &mut [Cplx<T>],
) {
    for t in terms {
        let c = t.coeff * scale;
        for (b, amp) in psi.iter().enumerate() {
            if amp.re == T::zero() && amp.im == T::zero() {
                continue;
            }
            let v = *amp * c;
            if (!b & t.z).count_ones() % 2 == 1 {
                out[b ^ t.x] -= v;
            } else {
                out[b ^ t.x] += v;
            }
        }
    }
}

/// Normalized complex amplitudes over `2^n_qubits` basis states.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T> {
    n_qubits: usize,
    amplitudes: Vec<Cplx<T>>,
}

impl<T: Real> StateVector<T> {
    /// Normalizes the given amplitudes; rejects a zero vector or wrong length.
    pub fn new(n_qubits: usize, amplitudes: Vec<Cplx<T>>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_STATE_QUBITS {
            return Err(Error::InvalidParameter(format!(
                "state vectors need 1..={MAX_STATE_QUBITS} qubits, got {n_qubits}"
            )));
        }
        if amplitudes.len() != 1 << n_qubits {
            return Err(Error::DimensionMismatch {
                expected: 1 << n_qubits,
                found: amplitudes.len(),
            });
        }
        let norm = norm_of(&amplitudes);
        if !norm.is_finite() || norm <= T::min_positive_value() {
            return Err(Error::InvalidParameter("cannot normalize a zero vector".into()));
        }
        let inv = T::one() / norm;
        Ok(Self {
            n_qubits,
            amplitudes: amplitudes.into_iter().map(|a| a * inv).collect(),
        })
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        if index >= 1usize << n_qubits.min(MAX_STATE_QUBITS) {
            return Err(Error::InvalidParameter(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            )));
        }
        let mut amps = vec![czero(); 1 << n_qubits];
        amps[index] = cplx(T::one(), T::zero());
        Self::new(n_qubits, amps)
    }

    /// Basis state from a ket label such as `"1100"` (qubit 0 first).
    pub fn from_ket(label: &str) -> Result<Self> {
        let n = label.chars().count();
        let mut index = 0usize;
        for (q, c) in label.chars().enumerate() {
            match c {
                '0' => {}
                '1' => index |= 1 << q,
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "ket label {label:?} must contain only 0 and 1"
                    )))
                }
            }
        }
        Self::basis(n, index)
    }

    /// Product state from per-qubit amplitudes `(bit 0, bit 1)`.
    pub fn product(qubits: &[[Cplx<T>; 2]]) -> Result<Self> {
        let n = qubits.len();
        if n == 0 || n > MAX_STATE_QUBITS {
            return Err(Error::InvalidParameter("product of zero qubits".into()));
        }
        let amps = (0..1usize << n)
            .map(|b| {
                qubits
                    .iter()
                    .enumerate()
                    .fold(cplx(T::one(), T::zero()), |acc, (q, pair)| acc * pair[(b >> q) & 1])
            })
            .collect();
        Self::new(n, amps)
    }

    /// Normalizes raw amplitudes produced by a propagator and reports the
    /// drift of the norm from 1 before correction.
    pub(crate) fn renormalized(n_qubits: usize, amplitudes: Vec<Cplx<T>>) -> Result<(Self, T)> {
        let drift = (norm_of(&amplitudes) - T::one()).abs();
        Ok((Self::new(n_qubits, amplitudes)?, drift))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Cplx<T>] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Cplx<T>> {
        self.amplitudes
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<Cplx<T>> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(inner(&self.amplitudes, &other.amplitudes))
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &Self) -> Result<T> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Total probability carried by the listed basis indices.
    pub fn weight_on(&self, indices: &[usize]) -> T {
        indices.iter().map(|&i| self.amplitudes[i].norm_sqr()).sum()
    }

    /// Multiplies every amplitude by `e^{i phase}`.
    pub fn with_global_phase(&self, phase: T) -> Self {
        let p = cplx(phase.cos(), phase.sin());
        Self {
            n_qubits: self.n_qubits,
            amplitudes: self.amplitudes.iter().map(|a| *a * p).collect(),
        }
    }
}

pub(crate) fn norm_of<T: Real>(v: &[Cplx<T>]) -> T {
    v.iter().map(|a| a.norm_sqr()).sum::<T>().sqrt()
}

pub(crate) fn inner<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Cplx<T> {
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x.conj() * *y)
}

fn check_dims<T: Real>(h: &HamiltonianSpec<T>, s: &StateVector<T>) -> Result<()> {
    if h.n_qubits() != s.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: h.n_qubits(),
            found: s.n_qubits(),
        });
    }
    Ok(())
}

/// `H|s>` computed term by term, without building a matrix.
pub fn apply<T: Real>(h: &HamiltonianSpec<T>, s: &StateVector<T>) -> Result<Vec<Cplx<T>>> {
    check_dims(h, s)?;
    Ok(apply_raw(h, s.amplitudes()))
}

/// `H v` for an arbitrary (unnormalized) amplitude slice of matching length.
pub fn apply_raw<T: Real>(h: &HamiltonianSpec<T>, v: &[Cplx<T>]) -> Vec<Cplx<T>> {
    let mut out = vec![czero(); v.len()];
    apply_masked(&h.masked_terms(), cplx(T::one(), T::zero()), v, &mut out);
    out
}

/// `<s|H|s>`. Fails with [`Error::NonHermitian`] if the imaginary part
/// exceeds 1e-10.
pub fn expectation<T: Real>(h: &HamiltonianSpec<T>, s: &StateVector<T>) -> Result<T> {
    let hs = apply(h, s)?;
    let z = inner(s.amplitudes(), &hs);
    if z.im.abs() > T::lit(1e-10) {
        return Err(Error::NonHermitian {
            imag: z.im.to_f64_lossy(),
        });
    }
    Ok(z.re)
}

/// Dense matrix of `h` under the default cap.
pub fn materialize<T: Real>(h: &HamiltonianSpec<T>) -> Result<DenseMatrix<T>> {
    materialize_capped(h, DEFAULT_DENSE_CAP)
}

pub fn materialize_capped<T: Real>(h: &HamiltonianSpec<T>, cap: usize) -> Result<DenseMatrix<T>> {
    if h.n_qubits() > cap {
        return Err(Error::CapExceeded {
            n_qubits: h.n_qubits(),
            cap,
        });
    }
    let dim = 1usize << h.n_qubits();
    let mut m = DenseMatrix::zeros(dim, dim);
    for t in h.masked_terms() {
        for b in 0..dim {
            let v = if (!b & t.z).count_ones() % 2 == 1 {
                -t.coeff
            } else {
                t.coeff
            };
            m[(b ^ t.x, b)] += v;
        }
    }
    Ok(m)
}

/// Largest element modulus of `AB - BA`.
pub fn commutator_norm<T: Real>(a: &HamiltonianSpec<T>, b: &HamiltonianSpec<T>) -> Result<T> {
    if a.n_qubits() != b.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: a.n_qubits(),
            found: b.n_qubits(),
        });
    }
    let ma = materialize(a)?;
    let mb = materialize(b)?;
    Ok(ma.matmul(&mb)?.sub(&mb.matmul(&ma)?).max_abs())
}
