//! Time-dependent propagation under `H(t) = F(t) H_D + (1 - F(t)) H_P`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{apply_masked, inner, HamiltonianSpec, MaskedTerm, StateVector, DEFAULT_DENSE_CAP};
use crate::oracle::{exact_diagonalize, FullSpectrum};
use crate::scalar::{cplx, czero, Cplx, Real};

/// Interpolation control `F(t)` with `F = 1` meaning pure driver.
pub trait Control<T: Real>: Sync {
    fn value(&self, t: T) -> Result<T>;
    /// Kinks of `F` inside `(0, end)`; steps never straddle them.
    fn breakpoints(&self) -> Vec<T>;
    fn end(&self) -> T;
}

/// `F = 1 - t/T` on `[0, T]`, 0 on `[T, T + tau]`, `(t - T - tau)/T` up to
/// `2T + tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule<T> {
    pub asp_time: T,
    pub tau: T,
}

impl<T: Real> Schedule<T> {
    pub fn new(asp_time: T, tau: T) -> Result<Self> {
        if !(asp_time > T::zero()) || !asp_time.is_finite() {
            return Err(Error::InvalidParameter(format!("ASP time must be positive, got {asp_time}")));
        }
        if !(tau >= T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be nonnegative, got {tau}")));
        }
        Ok(Self { asp_time, tau })
    }
}

impl<T: Real> Control<T> for Schedule<T> {
    fn value(&self, t: T) -> Result<T> {
        schedule_value(self, t)
    }

    fn breakpoints(&self) -> Vec<T> {
        let mut b = vec![self.asp_time];
        if self.tau > T::zero() {
            b.push(self.asp_time + self.tau);
        }
        b
    }

    fn end(&self) -> T {
        self.asp_time + self.asp_time + self.tau
    }
}

/// Piecewise-linear schedule value.
pub fn schedule_value<T: Real>(s: &Schedule<T>, t: T) -> Result<T> {
    let end = s.end();
    if !(t >= T::zero() && t <= end) {
        return Err(Error::ScheduleDomain {
            t: t.to_f64_lossy(),
            end: end.to_f64_lossy(),
        });
    }
    let big_t = s.asp_time;
    let v = if t <= big_t {
        T::one() - t / big_t
    } else if t <= big_t + s.tau {
        T::zero()
    } else if t == end {
        T::one()
    } else {
        (t - big_t - s.tau) / big_t
    };
    Ok(v)
}

/// Single ramp `F = 1 - t/duration`, driver to problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRamp<T> {
    pub duration: T,
}

impl<T: Real> LinearRamp<T> {
    pub fn new(duration: T) -> Result<Self> {
        if !(duration > T::zero()) || !duration.is_finite() {
            return Err(Error::InvalidParameter(format!("ramp duration must be positive, got {duration}")));
        }
        Ok(Self { duration })
    }
}

impl<T: Real> Control<T> for LinearRamp<T> {
    fn value(&self, t: T) -> Result<T> {
        if !(t >= T::zero() && t <= self.duration) {
            return Err(Error::ScheduleDomain {
                t: t.to_f64_lossy(),
                end: self.duration.to_f64_lossy(),
            });
        }
        Ok(if t == self.duration {
            T::zero()
        } else {
            T::one() - t / self.duration
        })
    }

    fn breakpoints(&self) -> Vec<T> {
        Vec::new()
    }

    fn end(&self) -> T {
        self.duration
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `exp(-i H(t_mid) dt)` per step; second order.
    Midpoint,
    /// Two exponentials at the Gauss-Legendre nodes; fourth order.
    #[default]
    CommutatorFree4,
    /// Classical Runge-Kutta; not norm preserving.
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationSettings {
    pub steps_per_unit_time: usize,
    pub method: Method,
    pub norm_tolerance: f64,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        Self {
            steps_per_unit_time: 200,
            method: Method::CommutatorFree4,
            norm_tolerance: 1e-9,
        }
    }
}

impl PropagationSettings {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_unit_time == 0 {
            return Err(Error::InvalidParameter("steps_per_unit_time must be positive".into()));
        }
        if !(self.norm_tolerance > 0.0) {
            return Err(Error::InvalidParameter("norm_tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    /// `| ||psi|| - 1 |` before renormalization.
    pub drift: f64,
    pub steps: usize,
}

const SQRT3_6: f64 = 0.288_675_134_594_812_9;

/// Driver and problem compiled once for repeated `H(F) v` products.
struct Interpolated<T> {
    d: Vec<MaskedTerm<T>>,
    p: Vec<MaskedTerm<T>>,
    norm_d: T,
    norm_p: T,
}

impl<T: Real> Interpolated<T> {
    fn new(h_d: &HamiltonianSpec<T>, h_p: &HamiltonianSpec<T>) -> Self {
        Self {
            d: h_d.masked_terms(),
            p: h_p.masked_terms(),
            norm_d: h_d.coefficient_norm(),
            norm_p: h_p.coefficient_norm(),
        }
    }

    /// `out = scale * H(f) v`.
    fn apply(&self, f: T, scale: Cplx<T>, v: &[Cplx<T>], out: &mut [Cplx<T>]) {
        out.iter_mut().for_each(|z| *z = czero());
        if f != T::zero() {
            apply_masked(&self.d, scale * f, v, out);
        }
        if f != T::one() {
            apply_masked(&self.p, scale * (T::one() - f), v, out);
        }
    }

    fn norm_bound(&self, f: T) -> T {
        f.abs() * self.norm_d + (T::one() - f).abs() * self.norm_p
    }

    /// `v <- exp(-i dt H(f)) v` by a Taylor series of the action, substepped
    /// so each substep has `|dt| ||H|| <= 1`.
    fn expm(&self, f: T, dt: T, v: &mut Vec<Cplx<T>>, work: &mut Work<T>) {
        let beta = (dt * self.norm_bound(f)).abs();
        let subs = beta.ceil().to_f64_lossy().max(1.0) as usize;
        let h = dt / T::from_usize(subs);
        let eps = T::epsilon() * T::lit(0.01);
        for _ in 0..subs {
            work.term.clone_from(v);
            for k in 1..=60usize {
                let scale = cplx(T::zero(), -h / T::from_usize(k));
                self.apply(f, scale, &work.term, &mut work.next);
                std::mem::swap(&mut work.term, &mut work.next);
                let mut tmax = T::zero();
                for (a, t) in v.iter_mut().zip(&work.term) {
                    *a += *t;
                    tmax = tmax.max(t.norm_sqr());
                }
                if tmax.sqrt() < eps {
                    break;
                }
            }
        }
    }
}

struct Work<T> {
    term: Vec<Cplx<T>>,
    next: Vec<Cplx<T>>,
    k: [Vec<Cplx<T>>; 4],
    tmp: Vec<Cplx<T>>,
}

impl<T: Real> Work<T> {
    fn new(dim: usize) -> Self {
        let z = vec![czero(); dim];
        Self {
            term: z.clone(),
            next: z.clone(),
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            tmp: z,
        }
    }
}

/// Uniform step grid on `[t0, t1]` respecting the control's breakpoints.
fn step_grid<T: Real>(control: &dyn Control<T>, t0: T, t1: T, per_unit: usize) -> Vec<(T, T)> {
    let mut cuts = vec![t0];
    for b in control.breakpoints() {
        if b > t0 && b < t1 {
            cuts.push(b);
        }
    }
    cuts.push(t1);
    let mut steps = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b - a).to_f64_lossy();
        let n = ((len * per_unit as f64) - 1e-9).ceil().max(1.0) as usize;
        let h = (b - a) / T::from_usize(n);
        for i in 0..n {
            let s = a + h * T::from_usize(i);
            let e = if i + 1 == n { b } else { a + h * T::from_usize(i + 1) };
            steps.push((s, e));
        }
    }
    steps
}

fn check_inputs<T: Real>(
    h_d: &HamiltonianSpec<T>,
    h_p: &HamiltonianSpec<T>,
    control: &dyn Control<T>,
    t0: T,
    t1: T,
    psi: &StateVector<T>,
    settings: &PropagationSettings,
) -> Result<()> {
    settings.validate()?;
    for h in [h_d, h_p] {
        if h.n_qubits() != psi.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: psi.n_qubits(),
                found: h.n_qubits(),
            });
        }
    }
    let end = control.end();
    for t in [t0, t1] {
        if !(t >= T::zero() && t <= end) {
            return Err(Error::ScheduleDomain {
                t: t.to_f64_lossy(),
                end: end.to_f64_lossy(),
            });
        }
    }
    if !(t0 < t1) {
        return Err(Error::InvalidParameter(format!("propagation needs t0 < t1, got [{t0}, {t1}]")));
    }
    Ok(())
}

fn cf4_factors<T: Real>(control: &dyn Control<T>, s: T, e: T) -> Result<(T, T)> {
    let h = e - s;
    let c = T::lit(SQRT3_6);
    let half = T::lit(0.5);
    let f1 = control.value(s + h * (half - c))?;
    let f2 = control.value(s + h * (half + c))?;
    let a1 = T::lit(0.25) + c;
    let a2 = T::lit(0.25) - c;
    // a1 H1 + a2 H2 = (1/2) H(F_first), a2 H1 + a1 H2 = (1/2) H(F_second).
    let two = T::lit(2.0);
    Ok((two * (a1 * f1 + a2 * f2), two * (a2 * f1 + a1 * f2)))
}

fn finish<T: Real>(n_qubits: usize, v: Vec<Cplx<T>>, steps: usize, settings: &PropagationSettings) -> Result<(StateVector<T>, PropagationReport)> {
    let (state, drift) = StateVector::renormalized(n_qubits, v)?;
    let drift = drift.to_f64_lossy();
    if !(drift <= settings.norm_tolerance) {
        return Err(Error::NormDrift {
            drift,
            tolerance: settings.norm_tolerance,
        });
    }
    Ok((state, PropagationReport { drift, steps }))
}

/// Solves `i d psi/dt = H(t) psi` from `t0` to `t1`.
pub fn propagate<T: Real>(
    h_d: &HamiltonianSpec<T>,
    h_p: &HamiltonianSpec<T>,
    control: &dyn Control<T>,
    t0: T,
    t1: T,
    psi: &StateVector<T>,
    settings: &PropagationSettings,
) -> Result<StateVector<T>> {
    propagate_with_report(h_d, h_p, control, t0, t1, psi, settings).map(|r| r.0)
}

pub fn propagate_with_report<T: Real>(
    h_d: &HamiltonianSpec<T>,
    h_p: &HamiltonianSpec<T>,
    control: &dyn Control<T>,
    t0: T,
    t1: T,
    psi: &StateVector<T>,
    settings: &PropagationSettings,
) -> Result<(StateVector<T>, PropagationReport)> {
    check_inputs(h_d, h_p, control, t0, t1, psi, settings)?;
    let ham = Interpolated::new(h_d, h_p);
    let steps = step_grid(control, t0, t1, settings.steps_per_unit_time);
    let mut v = psi.amplitudes().to_vec();
    let mut work = Work::new(v.len());
    let half = T::lit(0.5);
    for &(s, e) in &steps {
        let h = e - s;
        match settings.method {
            Method::Midpoint => {
                let f = control.value(s + h * half)?;
                ham.expm(f, h, &mut v, &mut work);
            }
            Method::CommutatorFree4 => {
                let (fa, fb) = cf4_factors(control, s, e)?;
                ham.expm(fa, h * half, &mut v, &mut work);
                ham.expm(fb, h * half, &mut v, &mut work);
            }
            Method::Rk4 => rk4_step(&ham, control, s, h, &mut v, &mut work)?,
        }
    }
    finish(psi.n_qubits(), v, steps.len(), settings)
}

fn rk4_step<T: Real>(ham: &Interpolated<T>, control: &dyn Control<T>, s: T, h: T, v: &mut [Cplx<T>], w: &mut Work<T>) -> Result<()> {
    let mi = cplx(T::zero(), -T::one());
    let half = T::lit(0.5);
    let fs = [
        control.value(s)?,
        control.value(s + h * half)?,
        control.value(s + h * half)?,
        control.value(s + h)?,
    ];
    let weights = [T::zero(), half, half, T::one()];
    for stage in 0..4 {
        if stage == 0 {
            w.tmp.copy_from_slice(v);
        } else {
            let (prev, wt) = (&w.k[stage - 1], weights[stage] * h);
            for ((t, a), k) in w.tmp.iter_mut().zip(v.iter()).zip(prev) {
                *t = *a + *k * wt;
            }
        }
        ham.apply(fs[stage], mi, &w.tmp, &mut w.k[stage]);
    }
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    for (i, a) in v.iter_mut().enumerate() {
        *a += (w.k[0][i] + w.k[1][i] * two + w.k[2][i] * two + w.k[3][i]) * sixth;
    }
    Ok(())
}

/// Applies `U(t1, t0)^dagger` to `psi`, stepping backwards through exactly
/// the same factors [`propagate`] uses. Exponential methods only.
pub fn propagate_adjoint<T: Real>(
    h_d: &HamiltonianSpec<T>,
    h_p: &HamiltonianSpec<T>,
    control: &dyn Control<T>,
    t0: T,
    t1: T,
    psi: &StateVector<T>,
    settings: &PropagationSettings,
) -> Result<StateVector<T>> {
    check_inputs(h_d, h_p, control, t0, t1, psi, settings)?;
    if settings.method == Method::Rk4 {
        return Err(Error::InvalidParameter("the adjoint propagator needs an exponential method".into()));
    }
    let ham = Interpolated::new(h_d, h_p);
    let steps = step_grid(control, t0, t1, settings.steps_per_unit_time);
    let mut v = psi.amplitudes().to_vec();
    let mut work = Work::new(v.len());
    let half = T::lit(0.5);
    for &(s, e) in steps.iter().rev() {
        let h = e - s;
        match settings.method {
            Method::Midpoint => {
                let f = control.value(s + h * half)?;
                ham.expm(f, -h, &mut v, &mut work);
            }
            Method::CommutatorFree4 => {
                let (fa, fb) = cf4_factors(control, s, e)?;
                ham.expm(fb, -h * half, &mut v, &mut work);
                ham.expm(fa, -h * half, &mut v, &mut work);
            }
            Method::Rk4 => unreachable!(),
        }
    }
    finish(psi.n_qubits(), v, steps.len(), settings).map(|r| r.0)
}

/// Exact `exp(-i H tau)` from an eigendecomposition.
#[derive(Clone, Debug)]
pub struct StaticEvolver<T> {
    spectrum: FullSpectrum<T>,
}

impl<T: Real> StaticEvolver<T> {
    pub fn new(h: &HamiltonianSpec<T>) -> Result<Self> {
        Ok(Self {
            spectrum: exact_diagonalize(h)?,
        })
    }

    pub fn from_spectrum(spectrum: FullSpectrum<T>) -> Self {
        Self { spectrum }
    }

    pub fn spectrum(&self) -> &FullSpectrum<T> {
        &self.spectrum
    }

    /// Eigenbasis components of `psi`.
    pub fn coefficients(&self, psi: &[Cplx<T>]) -> Vec<Cplx<T>> {
        self.spectrum
            .states
            .iter()
            .map(|v| inner(v.amplitudes(), psi))
            .collect()
    }

    pub fn evolve(&self, psi: &StateVector<T>, tau: T) -> Result<StateVector<T>> {
        if psi.dim() != self.spectrum.energies.len() {
            return Err(Error::DimensionMismatch {
                expected: self.spectrum.energies.len(),
                found: psi.dim(),
            });
        }
        let coeffs = self.coefficients(psi.amplitudes());
        let mut out = vec![czero(); psi.dim()];
        for ((c, &e), v) in coeffs.iter().zip(&self.spectrum.energies).zip(&self.spectrum.states) {
            let ph = e * tau;
            let factor = *c * cplx(ph.cos(), -ph.sin());
            for (o, a) in out.iter_mut().zip(v.amplitudes()) {
                *o += *a * factor;
            }
        }
        StateVector::new(psi.n_qubits(), out)
    }
}

/// `exp(-i H tau) |psi>`: exact phases through the eigendecomposition within
/// the dense cap, the exponential integrator beyond it.
pub fn evolve_static<T: Real>(h: &HamiltonianSpec<T>, psi: &StateVector<T>, tau: T) -> Result<StateVector<T>> {
    if h.n_qubits() != psi.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: psi.n_qubits(),
            found: h.n_qubits(),
        });
    }
    if tau == T::zero() {
        return Ok(psi.clone());
    }
    if h.n_qubits() <= DEFAULT_DENSE_CAP {
        return StaticEvolver::new(h)?.evolve(psi, tau);
    }
    let ham = Interpolated::new(h, h);
    let mut v = psi.amplitudes().to_vec();
    let mut work = Work::new(v.len());
    ham.expm(T::one(), tau, &mut v, &mut work);
    StateVector::new(psi.n_qubits(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::models::shipped_model;
    use crate::operators::materialize;
    use crate::symmetry::{decompose, diagonalize_sector, HamiltonianLabel};
    use proptest::prelude::*;

    fn distance(a: &StateVector<f64>, b: &StateVector<f64>) -> f64 {
        a.amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| (*x - *y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `exp(-i M tau)` by scaling and squaring a dense Taylor series.
    fn dense_expm(m: &DenseMatrix<f64>, tau: f64) -> DenseMatrix<f64> {
        let norm: f64 = (0..m.rows()).map(|r| (0..m.cols()).map(|c| m[(r, c)].norm()).sum::<f64>()).fold(0.0, f64::max);
        let squarings = ((norm * tau.abs()).log2().ceil().max(0.0) as u32) + 4;
        let h = tau / 2f64.powi(squarings as i32);
        let dim = m.rows();
        let a = DenseMatrix::from_fn(dim, dim, |r, c| m[(r, c)] * cplx(0.0, -h));
        let mut result = DenseMatrix::identity(dim);
        let mut term = DenseMatrix::identity(dim);
        for k in 1..30 {
            term = term.matmul(&a).unwrap();
            term = DenseMatrix::from_fn(dim, dim, |r, c| term[(r, c)] / k as f64);
            result = DenseMatrix::from_fn(dim, dim, |r, c| result[(r, c)] + term[(r, c)]);
        }
        for _ in 0..squarings {
            result = result.matmul(&result).unwrap();
        }
        result
    }

    #[test]
    fn schedule_endpoints_and_plateau() {
        let s = Schedule::new(5.0, 3.0).unwrap();
        assert_eq!(schedule_value(&s, 0.0).unwrap(), 1.0);
        assert_eq!(schedule_value(&s, 2.5).unwrap(), 0.5);
        assert_eq!(schedule_value(&s, 5.0).unwrap(), 0.0);
        assert_eq!(schedule_value(&s, 6.5).unwrap(), 0.0);
        assert_eq!(schedule_value(&s, 8.0).unwrap(), 0.0);
        assert_eq!(schedule_value(&s, 13.0).unwrap(), 1.0);
        assert!((schedule_value(&s, 10.5).unwrap() - 0.5f64).abs() < 1e-15);
        assert!(matches!(schedule_value(&s, 13.5), Err(Error::ScheduleDomain { .. })));
        assert!(schedule_value(&s, -0.1).is_err());
        assert!(Schedule::new(0.0, 1.0).is_err());
        assert!(Schedule::new(1.0, -1.0).is_err());
    }

    #[test]
    fn step_grid_respects_breakpoints() {
        let s = Schedule::new(1.0, 0.5).unwrap();
        let g = step_grid(&s, 0.0, 2.5, 4);
        assert_eq!(g.len(), 4 + 2 + 4);
        assert_eq!(g[3].1, 1.0);
        assert_eq!(g[5].1, 1.5);
        assert_eq!(g.last().unwrap().1, 2.5);
    }

    #[test]
    fn equal_hamiltonians_match_static() {
        let m = shipped_model::<f64>();
        let psi = StateVector::from_ket("1100").unwrap();
        let s = Schedule::new(2.0, 0.0).unwrap();
        let settings = PropagationSettings::default();
        let a = propagate(&m.problem, &m.problem, &s, 0.0, 3.0, &psi, &settings).unwrap();
        let b = evolve_static(&m.problem, &psi, 3.0).unwrap();
        assert!(distance(&a, &b) < 1e-8);
    }

    #[test]
    fn static_matches_dense_expm() {
        let h = HamiltonianSpec::<f64>::from_labels(3, &[(0.7, "XYZ"), (-0.4, "ZZI"), (0.3, "IXI"), (1.1, "YIY")]).unwrap();
        let psi = StateVector::new(3, (0..8).map(|i| cplx(0.1 * i as f64 - 0.3, 0.05 * i as f64)).collect()).unwrap();
        let tau = 2.7;
        let u = dense_expm(&materialize(&h).unwrap(), tau);
        let want = StateVector::new(3, u.matvec(psi.amplitudes()).unwrap()).unwrap();
        assert!(distance(&evolve_static(&h, &psi, tau).unwrap(), &want) < 1e-9);
        let ham = Interpolated::new(&h, &h);
        let mut v = psi.amplitudes().to_vec();
        ham.expm(1.0, tau, &mut v, &mut Work::new(8));
        assert!(distance(&StateVector::new(3, v).unwrap(), &want) < 1e-9);
        assert_eq!(evolve_static(&h, &psi, 0.0).unwrap(), psi);
    }

    #[test]
    fn eigenstate_acquires_phase() {
        let m = shipped_model::<f64>();
        let spec = exact_diagonalize(&m.problem).unwrap();
        let ev = StaticEvolver::from_spectrum(spec.clone());
        let v = &spec.states[2];
        for tau in [0.5, 13.0, 70.0] {
            let out = ev.evolve(v, tau).unwrap();
            let ph = spec.energies[2] * tau;
            let ov = v.inner(&out).unwrap() * cplx(ph.cos(), ph.sin());
            assert!((ov - cplx(1.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn adiabatic_limit_reaches_ground_state() {
        let m = shipped_model::<f64>();
        let psi = StateVector::from_ket("1100").unwrap();
        let ramp = LinearRamp::new(200.0).unwrap();
        let settings = PropagationSettings {
            steps_per_unit_time: 20,
            ..Default::default()
        };
        let out = propagate(&m.driver, &m.problem, &ramp, 0.0, 200.0, &psi, &settings).unwrap();
        let dec = decompose(&m.conserved, 4).unwrap();
        let sys = diagonalize_sector(&m.problem, dec.sector(0.0).unwrap(), HamiltonianLabel::Problem).unwrap();
        assert!(sys.states[0].fidelity(&out).unwrap() >= 0.999);
    }

    #[test]
    fn adjoint_inverts_forward() {
        let m = shipped_model::<f64>();
        let psi = StateVector::new(4, (0..16).map(|i| cplx((i as f64).sin(), (i as f64 * 0.3).cos())).collect()).unwrap();
        let s = Schedule::new(5.0, 0.0).unwrap();
        for method in [Method::Midpoint, Method::CommutatorFree4] {
            let settings = PropagationSettings { method, ..Default::default() };
            let fwd = propagate(&m.driver, &m.problem, &s, 0.0, 5.0, &psi, &settings).unwrap();
            let back = propagate_adjoint(&m.driver, &m.problem, &s, 0.0, 5.0, &fwd, &settings).unwrap();
            assert!(distance(&back, &psi) < 1e-12);
        }
        let rk = PropagationSettings { method: Method::Rk4, ..Default::default() };
        assert!(propagate_adjoint(&m.driver, &m.problem, &s, 0.0, 5.0, &psi, &rk).is_err());
    }

    /// Error of a 2-qubit ramp against a very fine reference, per step count.
    fn ramp_error(method: Method, per_unit: usize) -> f64 {
        let h_d = HamiltonianSpec::<f64>::from_labels(2, &[(1.0, "XI"), (0.6, "IX"), (0.3, "ZZ")]).unwrap();
        let h_p = HamiltonianSpec::<f64>::from_labels(2, &[(1.0, "ZI"), (-0.8, "IZ"), (0.5, "XX")]).unwrap();
        let psi = StateVector::from_ket("10").unwrap();
        let ramp = LinearRamp::new(1.0).unwrap();
        let reference = PropagationSettings { steps_per_unit_time: 2000, ..Default::default() };
        let want = propagate(&h_d, &h_p, &ramp, 0.0, 1.0, &psi, &reference).unwrap();
        let got = propagate(&h_d, &h_p, &ramp, 0.0, 1.0, &psi, &PropagationSettings { steps_per_unit_time: per_unit, method, norm_tolerance: 1e-6 }).unwrap();
        distance(&got, &want)
    }

    #[test]
    fn convergence_orders() {
        for (method, order) in [(Method::Midpoint, 2.0), (Method::CommutatorFree4, 4.0), (Method::Rk4, 4.0)] {
            let e1 = ramp_error(method, 10);
            let e2 = ramp_error(method, 20);
            let slope = (e1 / e2).log2();
            assert!((slope - order).abs() < 0.4, "{method:?}: slope {slope}");
        }
    }

    #[test]
    fn rk4_drift_is_reported() {
        let m = shipped_model::<f64>();
        let psi = StateVector::from_ket("1100").unwrap();
        let s = Schedule::new(5.0, 0.0).unwrap();
        let settings = PropagationSettings { steps_per_unit_time: 10, method: Method::Rk4, norm_tolerance: 1e-9 };
        assert!(matches!(
            propagate(&m.driver, &m.problem, &s, 0.0, 5.0, &psi, &settings),
            Err(Error::NormDrift { .. })
        ));
    }

    fn arb_state(n: usize) -> impl Strategy<Value = StateVector<f64>> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n)
            .prop_filter_map("nonzero", move |v| StateVector::new(n, v.into_iter().map(|(a, b)| cplx(a, b)).collect()).ok())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn linearity(a in arb_state(4), b in arb_state(4), alpha in -1.0f64..1.0, beta in 0.1f64..1.0) {
            let m = shipped_model::<f64>();
            let s = Schedule::new(2.0, 0.5).unwrap();
            let set = PropagationSettings::default();
            let raw: Vec<_> = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| *x * alpha + *y * cplx(0.0, beta)).collect();
            let mix = StateVector::new(4, raw.clone()).unwrap();
            let scale = crate::operators::norm_of(&raw);
            let pa = propagate(&m.driver, &m.problem, &s, 0.0, 4.5, &a, &set).unwrap();
            let pb = propagate(&m.driver, &m.problem, &s, 0.0, 4.5, &b, &set).unwrap();
            let pm = propagate(&m.driver, &m.problem, &s, 0.0, 4.5, &mix, &set).unwrap();
            for i in 0..16 {
                let want = (pa.amplitudes()[i] * alpha + pb.amplitudes()[i] * cplx(0.0, beta)) / scale;
                prop_assert!((pm.amplitudes()[i] - want).norm() < 1e-8);
            }
        }

        #[test]
        fn sector_preservation(q_index in 0usize..5, seed in proptest::collection::vec(-1.0f64..1.0, 12)) {
            let m = shipped_model::<f64>();
            let dec = decompose(&m.conserved, 4).unwrap();
            let sector = &dec.sectors[q_index];
            let mut amps = vec![cplx(0.0, 0.0); 16];
            for (k, &b) in sector.basis_indices.iter().enumerate() {
                amps[b] = cplx(seed[k] + 1.5, seed[k + 6]);
            }
            let psi = StateVector::new(4, amps).unwrap();
            let s = Schedule::new(5.0, 1.0).unwrap();
            let out = propagate(&m.driver, &m.problem, &s, 0.0, 11.0, &psi, &PropagationSettings::default()).unwrap();
            prop_assert!(1.0 - out.weight_on(&sector.basis_indices) <= 1e-9);
        }
    }
}
