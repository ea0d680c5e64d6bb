//! Sectors of a diagonal conserved quantity and reference-state selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, DenseMatrix};
use crate::operators::{apply_masked, apply_raw, norm_of, HamiltonianSpec, StateVector, DEFAULT_DENSE_CAP};
use crate::scalar::{cplx, czero, Cplx, Real};

/// Absolute tolerance for grouping eigenvalues of the conserved quantity.
pub const SECTOR_TOLERANCE: f64 = 1e-10;

/// Eigenvector residual bound for sector eigensystems.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sector<T> {
    pub q_value: T,
    /// Ascending basis indices.
    pub basis_indices: Vec<usize>,
}

impl<T: Real> Sector<T> {
    pub fn dim(&self) -> usize {
        self.basis_indices.len()
    }

    pub fn contains(&self, basis: usize) -> bool {
        self.basis_indices.binary_search(&basis).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectorDecomposition<T> {
    pub q_op: HamiltonianSpec<T>,
    pub n_qubits: usize,
    /// Sorted by ascending `q_value`.
    pub sectors: Vec<Sector<T>>,
}

impl<T: Real> SectorDecomposition<T> {
    /// Sector whose eigenvalue matches `q` within [`SECTOR_TOLERANCE`].
    pub fn sector(&self, q: T) -> Result<&Sector<T>> {
        self.sectors
            .iter()
            .find(|s| (s.q_value - q).abs() <= T::lit(SECTOR_TOLERANCE))
            .ok_or_else(|| Error::InvalidParameter(format!("no sector with q = {q}")))
    }

    /// Sector containing a basis index.
    pub fn sector_of_basis(&self, basis: usize) -> &Sector<T> {
        self.sectors
            .iter()
            .find(|s| s.contains(basis))
            .expect("sectors cover the basis")
    }

    pub fn q_values(&self) -> Vec<T> {
        self.sectors.iter().map(|s| s.q_value).collect()
    }

    /// Sector containing most of the weight of `psi`.
    pub fn dominant_sector(&self, psi: &StateVector<T>) -> &Sector<T> {
        self.sectors
            .iter()
            .max_by(|a, b| {
                psi.weight_on(&a.basis_indices)
                    .partial_cmp(&psi.weight_on(&b.basis_indices))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("at least one sector")
    }
}

/// Groups basis states by the diagonal value of `q_op`.
pub fn decompose<T: Real>(q_op: &HamiltonianSpec<T>, n_qubits: usize) -> Result<SectorDecomposition<T>> {
    if q_op.n_qubits() != n_qubits {
        return Err(Error::DimensionMismatch {
            expected: n_qubits,
            found: q_op.n_qubits(),
        });
    }
    if !q_op.is_diagonal() {
        return Err(Error::NonDiagonalConserved);
    }
    let dim = 1usize << n_qubits;
    let mut values: Vec<(T, usize)> = (0..dim).map(|b| (q_op.diagonal_element(b), b)).collect();
    values.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let tol = T::lit(SECTOR_TOLERANCE);
    let mut sectors: Vec<Sector<T>> = Vec::new();
    for (q, b) in values {
        match sectors.last_mut() {
            Some(s) if (q - s.q_value).abs() <= tol => s.basis_indices.push(b),
            _ => sectors.push(Sector {
                q_value: q,
                basis_indices: vec![b],
            }),
        }
    }
    for s in &mut sectors {
        s.basis_indices.sort_unstable();
    }
    Ok(SectorDecomposition {
        q_op: q_op.clone(),
        n_qubits,
        sectors,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianLabel {
    Driver,
    Problem,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectorEigensystem<T> {
    pub sector: Sector<T>,
    pub label: HamiltonianLabel,
    /// Ascending; index 0 is the sector ground state.
    pub energies: Vec<T>,
    /// Embedded in the full space.
    pub states: Vec<StateVector<T>>,
}

impl<T: Real> SectorEigensystem<T> {
    pub fn ground(&self) -> (&StateVector<T>, T) {
        (&self.states[0], self.energies[0])
    }

    /// Components of `psi` in this eigenbasis.
    pub fn coefficients(&self, psi: &[Cplx<T>]) -> Vec<Cplx<T>> {
        self.states
            .iter()
            .map(|v| {
                self.sector
                    .basis_indices
                    .iter()
                    .fold(czero(), |acc, &b| acc + v.amplitudes()[b].conj() * psi[b])
            })
            .collect()
    }
}

/// Restriction of `h` to a sector as a dense matrix. Fails if `h` maps the
/// sector outside itself.
pub(crate) fn sector_matrix<T: Real>(h: &HamiltonianSpec<T>, sector: &Sector<T>) -> Result<DenseMatrix<T>> {
    let dim = sector.dim();
    if dim > 1usize << DEFAULT_DENSE_CAP {
        return Err(Error::CapExceeded {
            n_qubits: (dim as f64).log2().ceil() as usize,
            cap: DEFAULT_DENSE_CAP,
        });
    }
    let full = 1usize << h.n_qubits();
    let terms = h.masked_terms();
    let mut m = DenseMatrix::zeros(dim, dim);
    let mut column = vec![czero(); full];
    let mut unit = vec![czero(); full];
    let mut leakage = T::zero();
    for (c, &b) in sector.basis_indices.iter().enumerate() {
        unit[b] = cplx(T::one(), T::zero());
        column.iter_mut().for_each(|z| *z = czero());
        apply_masked(&terms, cplx(T::one(), T::zero()), &unit, &mut column);
        unit[b] = czero();
        for (r, &br) in sector.basis_indices.iter().enumerate() {
            m[(r, c)] = column[br];
            column[br] = czero();
        }
        leakage = leakage.max(norm_of(&column));
    }
    if leakage > T::lit(SECTOR_TOLERANCE) {
        return Err(Error::NotConserved {
            norm: leakage.to_f64_lossy(),
        });
    }
    Ok(m)
}

fn embed<T: Real>(n_qubits: usize, sector: &Sector<T>, local: &[Cplx<T>]) -> Result<StateVector<T>> {
    let mut amps = vec![czero(); 1 << n_qubits];
    for (&b, &a) in sector.basis_indices.iter().zip(local) {
        amps[b] = a;
    }
    StateVector::new(n_qubits, amps)
}

/// `max ||H v - E v||` over the given eigenpairs.
pub(crate) fn max_residual<T: Real>(h: &HamiltonianSpec<T>, energies: &[T], states: &[StateVector<T>]) -> T {
    energies
        .iter()
        .zip(states)
        .map(|(&e, v)| {
            let hv = apply_raw(h, v.amplitudes());
            hv.iter()
                .zip(v.amplitudes())
                .map(|(a, b)| (*a - *b * e).norm_sqr())
                .sum::<T>()
                .sqrt()
        })
        .fold(T::zero(), T::max)
}

/// Full spectrum of `h` inside one sector.
pub fn diagonalize_sector<T: Real>(h: &HamiltonianSpec<T>, sector: &Sector<T>, label: HamiltonianLabel) -> Result<SectorEigensystem<T>> {
    let m = sector_matrix(h, sector)?;
    let eig = eigh(&m, T::lit(SECTOR_TOLERANCE))?;
    let states = eig
        .vectors
        .iter()
        .map(|v| embed(h.n_qubits(), sector, v))
        .collect::<Result<Vec<_>>>()?;
    let residual = max_residual(h, &eig.values, &states);
    if residual > T::lit(RESIDUAL_TOLERANCE) {
        return Err(Error::Residual {
            residual: residual.to_f64_lossy(),
        });
    }
    Ok(SectorEigensystem {
        sector: sector.clone(),
        label,
        energies: eig.values,
        states,
    })
}

/// Simultaneous eigenstate of driver and problem used as the phase reference.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceState<T> {
    pub q: T,
    pub level: usize,
    pub state: StateVector<T>,
    pub energy_driver: T,
    pub energy_problem: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSelection<T> {
    pub reference: ReferenceState<T>,
    /// Set when the reference is not the global maximum of the problem
    /// Hamiltonian; adding a penalty term usually fixes this.
    pub warning: Option<String>,
}

/// Checks that `psi` is an eigenstate of `h` and returns its eigenvalue.
fn eigenvalue_of<T: Real>(h: &HamiltonianSpec<T>, psi: &StateVector<T>) -> Option<T> {
    let hv = apply_raw(h, psi.amplitudes());
    let e = crate::operators::inner(psi.amplitudes(), &hv).re;
    let r = hv
        .iter()
        .zip(psi.amplitudes())
        .map(|(a, b)| (*a - *b * e).norm_sqr())
        .sum::<T>()
        .sqrt();
    (r <= T::lit(RESIDUAL_TOLERANCE)).then_some(e)
}

/// Reference at a fixed sector and problem-Hamiltonian level.
pub fn reference_at<T: Real>(dec: &SectorDecomposition<T>, h_d: &HamiltonianSpec<T>, h_p: &HamiltonianSpec<T>, q: T, level: usize) -> Result<ReferenceState<T>> {
    let sector = dec.sector(q)?;
    let sys = diagonalize_sector(h_p, sector, HamiltonianLabel::Problem)?;
    let state = sys
        .states
        .get(level)
        .ok_or_else(|| Error::InvalidParameter(format!("sector q = {q} has no level {level}")))?
        .clone();
    let energy_driver = eigenvalue_of(h_d, &state).ok_or_else(|| {
        Error::NoReference(format!(
            "level {level} of sector q = {q} is not an eigenstate of the driver"
        ))
    })?;
    Ok(ReferenceState {
        q: sector.q_value,
        level,
        state,
        energy_driver,
        energy_problem: sys.energies[level],
    })
}

/// Picks the simultaneous eigenstate with the largest problem energy among
/// sectors of dimension at most `max_sector_dim`.
pub fn select_reference<T: Real>(dec: &SectorDecomposition<T>, h_d: &HamiltonianSpec<T>, h_p: &HamiltonianSpec<T>, max_sector_dim: usize) -> Result<ReferenceSelection<T>> {
    let mut best: Option<ReferenceState<T>> = None;
    let mut global_max = T::neg_infinity();
    let mut any_candidate = false;
    for sector in &dec.sectors {
        let sys = diagonalize_sector(h_p, sector, HamiltonianLabel::Problem)?;
        global_max = global_max.max(*sys.energies.last().expect("nonempty sector"));
        if sector.dim() > max_sector_dim {
            continue;
        }
        any_candidate = true;
        for (level, (state, &e)) in sys.states.iter().zip(&sys.energies).enumerate() {
            let Some(ed) = eigenvalue_of(h_d, state) else {
                continue;
            };
            if best.as_ref().is_none_or(|b| e > b.energy_problem) {
                best = Some(ReferenceState {
                    q: sector.q_value,
                    level,
                    state: state.clone(),
                    energy_driver: ed,
                    energy_problem: e,
                });
            }
        }
    }
    if !any_candidate {
        return Err(Error::NoReference(format!(
            "no sector of dimension <= {max_sector_dim}"
        )));
    }
    let reference = best.ok_or_else(|| {
        Error::NoReference("no simultaneous eigenstate of driver and problem in the candidate sectors".into())
    })?;
    let warning = (reference.energy_problem < global_max - T::lit(RESIDUAL_TOLERANCE)).then(|| {
        format!(
            "reference energy {} is below the problem maximum {}; consider a penalty term",
            reference.energy_problem, global_max
        )
    });
    Ok(ReferenceSelection { reference, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_heisenberg, shipped_model, total_magnetization, Boundary, HeisenbergParams};
    use crate::operators::{materialize, Pauli, PauliString};
    use crate::linalg::eigh;
    use proptest::prelude::*;

    #[test]
    fn magnetization_sectors() {
        let dec = decompose(&total_magnetization::<f64>(4), 4).unwrap();
        assert_eq!(dec.q_values(), vec![-4.0, -2.0, 0.0, 2.0, 4.0]);
        let dims: Vec<_> = dec.sectors.iter().map(|s| s.dim()).collect();
        assert_eq!(dims, vec![1, 4, 6, 4, 1]);
        assert_eq!(dec.sector(0.0).unwrap().dim(), 6);
        assert_eq!(dec.sector(4.0).unwrap().basis_indices, vec![15]);
    }

    #[test]
    fn identity_is_one_sector_and_no_reference() {
        let m = shipped_model::<f64>();
        let id = HamiltonianSpec::identity(4, 1.0);
        let dec = decompose(&id, 4).unwrap();
        assert_eq!(dec.sectors.len(), 1);
        assert_eq!(dec.sectors[0].dim(), 16);
        assert!(matches!(select_reference(&dec, &m.driver, &m.problem, 4), Err(Error::NoReference(_))));
    }

    #[test]
    fn non_diagonal_conserved_rejected() {
        let x = HamiltonianSpec::<f64>::from_labels(2, &[(1.0, "XI")]).unwrap();
        assert_eq!(decompose(&x, 2).unwrap_err(), Error::NonDiagonalConserved);
    }

    #[test]
    fn shipped_sector_spectra() {
        let m = shipped_model::<f64>();
        let dec = decompose(&m.conserved, 4).unwrap();
        let e0 = diagonalize_sector(&m.problem, dec.sector(0.0).unwrap(), HamiltonianLabel::Problem).unwrap();
        assert!((e0.energies[0] + 6.524974).abs() < 1e-5);
        let e2 = diagonalize_sector(&m.problem, dec.sector(2.0).unwrap(), HamiltonianLabel::Problem).unwrap();
        assert_eq!(e2.energies.len(), 4);
        assert!((e2.energies[0] + 4.27369).abs() < 1e-4);
    }

    #[test]
    fn leaking_operator_is_rejected() {
        let dec = decompose(&total_magnetization::<f64>(2), 2).unwrap();
        let x = HamiltonianSpec::from_labels(2, &[(1.0, "XI")]).unwrap();
        assert!(matches!(
            diagonalize_sector(&x, dec.sector(0.0).unwrap(), HamiltonianLabel::Problem),
            Err(Error::NotConserved { .. })
        ));
    }

    #[test]
    fn shipped_reference_is_all_down() {
        let m = shipped_model::<f64>();
        let dec = decompose(&m.conserved, 4).unwrap();
        let sel = select_reference(&dec, &m.driver, &m.problem, 4).unwrap();
        let r = &sel.reference;
        assert_eq!(r.q, -4.0);
        assert!(r.state.amplitudes()[0].norm() > 1.0 - 1e-12);
        // Diagonal element of |0000>: three bonds at +1 and the fields with Z = -1.
        let diag = m.problem.diagonal_element(0);
        assert!((diag - 4.29).abs() < 1e-12);
        assert!((r.energy_problem - diag).abs() < 1e-12);
        assert!(sel.warning.is_none());
    }

    #[test]
    fn non_maximal_reference_warns() {
        // Periodic chain with a field that makes all-up the maximum but
        // limit candidates to fully polarized sectors anyway.
        let h = build_heisenberg::<f64>(&HeisenbergParams {
            j: 1.0,
            b_prime: vec![2.0, 2.0, 2.0, 2.0],
            boundary: Boundary::Periodic,
        })
        .unwrap();
        let d = total_magnetization::<f64>(4);
        let dec = decompose(&d, 4).unwrap();
        let sel = select_reference(&dec, &d, &h, 1).unwrap();
        assert_eq!(sel.reference.q, 4.0);
        assert!(sel.warning.is_none());
        let neg = h.scaled(-1.0);
        let sel = select_reference(&dec, &d, &neg, 1).unwrap();
        assert_eq!(sel.reference.q, -4.0);
        assert!(sel.warning.is_some());
    }

    fn random_conserving(n: usize) -> impl Strategy<Value = HamiltonianSpec<f64>> {
        (proptest::collection::vec(-1.0f64..1.0, n), proptest::collection::vec(-1.0f64..1.0, n))
            .prop_map(move |(fields, bonds)| {
                let mut terms = Vec::new();
                for i in 0..n {
                    terms.push((fields[i], PauliString::from_sparse(n, &[(i, Pauli::Z)]).unwrap()));
                    let j = (i + 1) % n;
                    for op in [Pauli::X, Pauli::Y, Pauli::Z] {
                        terms.push((bonds[i], PauliString::from_sparse(n, &[(i, op), (j, op)]).unwrap()));
                    }
                }
                HamiltonianSpec::new(n, terms).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn sectors_partition_and_spectra_union(h in (3usize..=6).prop_flat_map(random_conserving)) {
            let n = h.n_qubits();
            let dec = decompose(&total_magnetization::<f64>(n), n).unwrap();
            let mut seen = vec![false; 1 << n];
            for s in &dec.sectors {
                for &b in &s.basis_indices {
                    prop_assert!(!seen[b]);
                    seen[b] = true;
                }
            }
            prop_assert!(seen.iter().all(|x| *x));
            let mut union = Vec::new();
            for s in &dec.sectors {
                let sys = diagonalize_sector(&h, s, HamiltonianLabel::Problem).unwrap();
                prop_assert!(max_residual(&h, &sys.energies, &sys.states) <= 1e-9);
                for (i, a) in sys.states.iter().enumerate() {
                    for (j, b) in sys.states.iter().enumerate() {
                        let want = if i == j { 1.0 } else { 0.0 };
                        prop_assert!((a.inner(b).unwrap() - cplx(want, 0.0)).norm() < 1e-10);
                    }
                }
                union.extend(sys.energies);
            }
            union.sort_by(f64::total_cmp);
            let full = eigh(&materialize(&h).unwrap(), 1e-10).unwrap().values;
            for (a, b) in union.iter().zip(&full) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
