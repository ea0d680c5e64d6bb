//! Exact dense diagonalization used as ground truth.

use crate::error::{Error, Result};
use crate::linalg::eigh;
use crate::operators::{materialize, HamiltonianSpec, StateVector};
use crate::scalar::Real;
use crate::symmetry::{max_residual, RESIDUAL_TOLERANCE};

#[derive(Clone, Debug, PartialEq)]
pub struct FullSpectrum<T> {
    /// Ascending, length `2^N`.
    pub energies: Vec<T>,
    pub states: Vec<StateVector<T>>,
}

pub fn exact_diagonalize<T: Real>(h: &HamiltonianSpec<T>) -> Result<FullSpectrum<T>> {
    let m = materialize(h)?;
    let eig = eigh(&m, T::lit(1e-10))?;
    let n = h.n_qubits();
    let states = eig
        .vectors
        .into_iter()
        .map(|v| StateVector::new(n, v))
        .collect::<Result<Vec<_>>>()?;
    let residual = max_residual(h, &eig.values, &states);
    if residual > T::lit(RESIDUAL_TOLERANCE) {
        return Err(Error::Residual {
            residual: residual.to_f64_lossy(),
        });
    }
    Ok(FullSpectrum {
        energies: eig.values,
        states,
    })
}

/// `(level, E_ref - E_level)` sorted by descending gap; ties keep level order.
pub fn gap_table<T: Real>(spec: &FullSpectrum<T>, ref_energy: T) -> Vec<(usize, T)> {
    let mut gaps: Vec<(usize, T)> = spec
        .energies
        .iter()
        .enumerate()
        .map(|(i, &e)| (i, ref_energy - e))
        .collect();
    gaps.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    gaps
}
