//! Fourier analysis of Ramsey series and energy reconstruction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_real;
use crate::models::ModelConfig;
use crate::protocol::{conventional_estimate, sweep, RamseyPlan, RamseySeries, SeriesMode, TauGrid};
use crate::scalar::{cplx, czero, Cplx, Real};
use crate::symmetry::{decompose, diagonalize_sector, HamiltonianLabel};

/// Fewest grid points accepted for spectral analysis.
pub const MIN_SAMPLES: usize = 8;

/// Lowest frequency of the default grid.
pub const DEFAULT_OMEGA_MIN: f64 = 0.05;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    None,
    Hann,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DftOptions {
    pub mean_subtract: bool,
    pub window: Window,
}

impl Default for DftOptions {
    fn default() -> Self {
        Self {
            mean_subtract: true,
            window: Window::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum<T> {
    pub omega: Vec<T>,
    pub values: Vec<Cplx<T>>,
    pub grid: TauGrid<T>,
    pub mean_subtracted: bool,
    pub window: Window,
    /// The probabilities the transform was taken from.
    pub samples: Vec<T>,
}

impl<T: Real> Spectrum<T> {
    pub fn magnitudes(&self) -> Vec<T> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    /// Grid spacing (one refined cell).
    pub fn spacing(&self) -> T {
        self.omega[1] - self.omega[0]
    }

    /// Resolution cell `2 pi / span`.
    pub fn resolution(&self) -> T {
        T::TAU() / self.grid.span()
    }
}

fn prepared_samples<T: Real>(samples: &[T], opts: &DftOptions) -> Vec<T> {
    let n = samples.len();
    let mean = if opts.mean_subtract {
        samples.iter().copied().sum::<T>() / T::from_usize(n)
    } else {
        T::zero()
    };
    samples
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let w = match opts.window {
                Window::None => T::one(),
                Window::Hann => {
                    let x = T::TAU() * T::from_usize(k) / T::from_usize(n - 1);
                    T::lit(0.5) * (T::one() - x.cos())
                }
            };
            (p - mean) * w
        })
        .collect()
}

/// `sum_n x_n e^{-i omega tau_n}` on a uniform grid, by rotation recurrence.
fn transform_at<T: Real>(x: &[T], grid: &TauGrid<T>, omega: T) -> Cplx<T> {
    let dt = grid.span() / T::from_usize(grid.len - 1);
    let step = cplx((omega * dt).cos(), -(omega * dt).sin());
    let mut rot = cplx((omega * grid.tau_min).cos(), -(omega * grid.tau_min).sin());
    let mut acc = czero();
    for &v in x {
        acc += rot * v;
        rot *= step;
    }
    acc
}

/// `f(omega)` at a single, possibly negative, frequency.
pub fn evaluate<T: Real>(series: &RamseySeries<T>, omega: T, opts: &DftOptions) -> Result<Cplx<T>> {
    check_series(series)?;
    Ok(transform_at(&prepared_samples(&series.probabilities, opts), &series.grid, omega))
}

fn check_series<T: Real>(series: &RamseySeries<T>) -> Result<()> {
    if series.probabilities.is_empty() {
        return Err(Error::EmptySeries);
    }
    if series.probabilities.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: series.probabilities.len(),
            need: MIN_SAMPLES,
        });
    }
    Ok(())
}

/// Direct transform on `n_omega` evenly spaced points in `[omega_min, omega_max]`.
pub fn dft<T: Real>(series: &RamseySeries<T>, omega_min: T, omega_max: T, n_omega: usize, opts: &DftOptions) -> Result<Spectrum<T>> {
    check_series(series)?;
    if n_omega < 2 || !(omega_min >= T::zero()) || !(omega_min < omega_max) {
        return Err(Error::InvalidParameter(format!(
            "omega grid needs n >= 2 and 0 <= min < max, got n = {n_omega}, [{omega_min}, {omega_max}]"
        )));
    }
    let x = prepared_samples(&series.probabilities, opts);
    let h = (omega_max - omega_min) / T::from_usize(n_omega - 1);
    let omega: Vec<T> = (0..n_omega).map(|k| omega_min + h * T::from_usize(k)).collect();
    let values = omega.par_iter().map(|&w| transform_at(&x, &series.grid, w)).collect();
    Ok(Spectrum {
        omega,
        values,
        grid: series.grid,
        mean_subtracted: opts.mean_subtract,
        window: opts.window,
        samples: series.probabilities.clone(),
    })
}

/// Grid from [`DEFAULT_OMEGA_MIN`] to `omega_max`, spaced
/// `(2 pi / span) / oversample`.
pub fn oversampled_dft<T: Real>(series: &RamseySeries<T>, omega_max: T, oversample: usize, opts: &DftOptions) -> Result<Spectrum<T>> {
    if oversample == 0 {
        return Err(Error::InvalidParameter("oversample must be positive".into()));
    }
    let omega_min = T::lit(DEFAULT_OMEGA_MIN);
    let spacing = T::TAU() / series.grid.span() / T::from_usize(oversample);
    let n = ((omega_max - omega_min) / spacing).floor().to_f64_lossy() as usize + 1;
    dft(series, omega_min, omega_min + spacing * T::from_usize(n.max(2) - 1), n.max(2), opts)
}

/// `1.2 (E_ref + ||H_P||_1)`: bounds every reference gap with margin.
pub fn suggested_omega_max<T: Real>(reference_energy: T, problem_norm: T) -> T {
    T::lit(1.2) * (reference_energy + problem_norm)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Refinement {
    Quadratic,
    Lsq,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakOptions {
    pub threshold_fraction: f64,
    /// Minimum peak spacing for the quadratic path.
    pub min_separation: f64,
    pub refinement: Refinement,
    /// Cap on sinusoids extracted by the least-squares path.
    pub max_components: usize,
    /// Absolute floor on peak magnitude, e.g. a shot-noise level.
    pub min_magnitude: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.002,
            min_separation: 0.15,
            refinement: Refinement::Lsq,
            max_components: 40,
            min_magnitude: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate<T> {
    pub omega_raw: T,
    pub omega_refined: T,
    /// `|f|` of the full spectrum at `omega_refined`.
    pub magnitude: T,
    /// Fitted sinusoid amplitude (least-squares path), else `2|f|/L`.
    pub amplitude: T,
    pub refinement: Refinement,
    pub uncertainty: T,
}

fn quadratic_offset<T: Real>(y0: T, y1: T, y2: T) -> T {
    let denom = y0 - y1 - y1 + y2;
    if denom >= T::zero() {
        return T::zero();
    }
    (T::lit(0.5) * (y0 - y2) / denom).max(-T::lit(0.5)).min(T::lit(0.5))
}

fn quadratic_at<T: Real>(omega: &[T], mag: &[T], i: usize) -> T {
    if i == 0 || i + 1 >= mag.len() {
        return omega[i];
    }
    omega[i] + quadratic_offset(mag[i - 1], mag[i], mag[i + 1]) * (omega[1] - omega[0])
}

/// Peaks of `spec`, sorted by descending frequency.
pub fn find_peaks<T: Real>(spec: &Spectrum<T>, opts: &PeakOptions) -> Result<Vec<PeakEstimate<T>>> {
    if !(opts.threshold_fraction > 0.0 && opts.threshold_fraction < 1.0) {
        return Err(Error::InvalidParameter("threshold_fraction must lie in (0, 1)".into()));
    }
    let mut peaks = match opts.refinement {
        Refinement::Quadratic => quadratic_peaks(spec, opts),
        Refinement::Lsq => lsq_peaks(spec, opts)?,
    };
    if peaks.is_empty() {
        return Err(Error::NoPeaks);
    }
    peaks.sort_by(|a, b| b.omega_refined.partial_cmp(&a.omega_refined).unwrap_or(std::cmp::Ordering::Equal));
    Ok(peaks)
}

fn quadratic_peaks<T: Real>(spec: &Spectrum<T>, opts: &PeakOptions) -> Vec<PeakEstimate<T>> {
    let mag = spec.magnitudes();
    let max = mag.iter().copied().fold(T::zero(), T::max);
    let thr = (max * T::lit(opts.threshold_fraction)).max(T::lit(opts.min_magnitude));
    let mut cands: Vec<usize> = (1..mag.len().saturating_sub(1))
        .filter(|&i| mag[i] > mag[i - 1] && mag[i] >= mag[i + 1] && mag[i] > thr)
        .collect();
    cands.sort_by(|&a, &b| mag[b].partial_cmp(&mag[a]).unwrap_or(std::cmp::Ordering::Equal));
    let sep = T::lit(opts.min_separation);
    let mut kept: Vec<usize> = Vec::new();
    for i in cands {
        if kept.iter().all(|&k| (spec.omega[k] - spec.omega[i]).abs() >= sep) {
            kept.push(i);
        }
    }
    let n = T::from_usize(spec.samples.len());
    let x = prepared_samples(&spec.samples, &DftOptions { mean_subtract: spec.mean_subtracted, window: spec.window });
    kept.into_iter()
        .map(|i| {
            let w = quadratic_at(&spec.omega, &mag, i);
            let m = transform_at(&x, &spec.grid, w).norm();
            PeakEstimate {
                omega_raw: spec.omega[i],
                omega_refined: w,
                magnitude: m,
                amplitude: m * T::lit(2.0) / n,
                refinement: Refinement::Quadratic,
                uncertainty: T::one() / spec.grid.span(),
            }
        })
        .collect()
}

/// `a + sum_j (c_j cos w_j t + s_j sin w_j t)`; parameters laid out as
/// `[a, w_0, c_0, s_0, w_1, ...]`.
fn sinusoid_model<T: Real>(p: &[T], t: &[T], out: &mut [T]) {
    out.iter_mut().for_each(|y| *y = p[0]);
    for comp in p[1..].chunks_exact(3) {
        let (w, c, s) = (comp[0], comp[1], comp[2]);
        for (y, &tk) in out.iter_mut().zip(t) {
            let (sn, cs) = (w * tk).sin_cos();
            *y += c * cs + s * sn;
        }
    }
}

fn sum_sq<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum()
}

/// Levenberg-Marquardt on the sinusoid model with an analytic Jacobian.
fn lm_fit<T: Real>(t: &[T], y: &[T], p: &mut Vec<T>, max_iter: usize) {
    let n = t.len();
    let np = p.len();
    let mut model = vec![T::zero(); n];
    sinusoid_model(p, t, &mut model);
    let mut cost = sum_sq(y, &model);
    let mut lambda = T::lit(1e-3);
    let mut jac = vec![T::zero(); n * np];
    for _ in 0..max_iter {
        for k in 0..n {
            jac[k * np] = T::one();
        }
        for (j, comp) in p[1..].chunks_exact(3).enumerate() {
            let (w, c, s) = (comp[0], comp[1], comp[2]);
            let col = 1 + 3 * j;
            for (k, &tk) in t.iter().enumerate() {
                let (sn, cs) = (w * tk).sin_cos();
                let row = k * np;
                jac[row + col] = tk * (-c * sn + s * cs);
                jac[row + col + 1] = cs;
                jac[row + col + 2] = sn;
            }
        }
        let mut a = vec![T::zero(); np * np];
        let mut g = vec![T::zero(); np];
        for k in 0..n {
            let row = &jac[k * np..(k + 1) * np];
            let r = y[k] - model[k];
            for i in 0..np {
                g[i] += row[i] * r;
                let ri = row[i];
                for jj in i..np {
                    a[i * np + jj] += ri * row[jj];
                }
            }
        }
        for i in 0..np {
            for jj in 0..i {
                a[i * np + jj] = a[jj * np + i];
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = a.clone();
            for i in 0..np {
                damped[i * np + i] += lambda * a[i * np + i].max(T::lit(1e-30));
            }
            let Some(delta) = solve_real(damped, g.clone()) else {
                lambda *= T::lit(4.0);
                continue;
            };
            let trial: Vec<T> = p.iter().zip(&delta).map(|(x, d)| *x + *d).collect();
            let mut tm = vec![T::zero(); n];
            sinusoid_model(&trial, t, &mut tm);
            let tc = sum_sq(y, &tm);
            if tc < cost {
                let gain = (cost - tc) / cost.max(T::min_positive_value());
                *p = trial;
                model = tm;
                cost = tc;
                lambda = (lambda / T::lit(3.0)).max(T::lit(1e-12));
                improved = gain > T::lit(1e-14);
                break;
            }
            lambda *= T::lit(4.0);
        }
        if !improved {
            break;
        }
    }
}

fn lsq_peaks<T: Real>(spec: &Spectrum<T>, opts: &PeakOptions) -> Result<Vec<PeakEstimate<T>>> {
    let grid = spec.grid;
    let n = spec.samples.len();
    let taus = grid.values();
    // Centred times keep the fit well conditioned; frequencies are unchanged.
    let mid = (grid.tau_min + grid.tau_max) * T::lit(0.5);
    let tc: Vec<T> = taus.iter().map(|&t| t - mid).collect();
    let centred = TauGrid {
        tau_min: grid.tau_min - mid,
        tau_max: grid.tau_max - mid,
        len: grid.len,
    };
    let dopts = DftOptions {
        mean_subtract: spec.mean_subtracted,
        window: spec.window,
    };
    let y = &spec.samples;
    let full_x = prepared_samples(y, &dopts);
    let mag_at = |x: &[T], w: T| transform_at(x, &centred, w).norm();
    let a0 = spec.magnitudes().into_iter().fold(T::zero(), T::max);
    let thr = (a0 * T::lit(opts.threshold_fraction)).max(T::lit(opts.min_magnitude));
    let cell = spec.resolution();

    let mut params = vec![y.iter().copied().sum::<T>() / T::from_usize(n)];
    let mut raws: Vec<(T, T)> = Vec::new();
    let mut model = vec![T::zero(); n];
    for _ in 0..opts.max_components {
        sinusoid_model(&params, &tc, &mut model);
        let resid: Vec<T> = y.iter().zip(&model).map(|(a, b)| *a - *b).collect();
        let rx = prepared_samples(&resid, &dopts);
        let rmag: Vec<T> = spec.omega.par_iter().map(|&w| mag_at(&rx, w)).collect();
        let (imax, &peak) = rmag
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .expect("nonempty grid");
        if peak < thr {
            break;
        }
        let w0 = quadratic_at(&spec.omega, &rmag, imax);
        // Linear projection seeds the new amplitudes.
        let f = transform_at(&resid, &centred, w0);
        let scale = T::lit(2.0) / T::from_usize(n);
        params.extend([w0, f.re * scale, -f.im * scale]);
        raws.push((spec.omega[imax], w0));
        lm_fit(&tc, y, &mut params, 200);
    }
    let span_inv = T::one() / grid.span();
    Ok(params[1..]
        .chunks_exact(3)
        .zip(&raws)
        .map(|(comp, &(raw, quad))| {
            let fitted = comp[0];
            let ok = fitted.is_finite() && fitted > T::zero() && (fitted - raw).abs() <= cell;
            let (w, refinement) = if ok { (fitted, Refinement::Lsq) } else { (quad, Refinement::Quadratic) };
            PeakEstimate {
                omega_raw: raw,
                omega_refined: w,
                magnitude: transform_at(&full_x, &spec.grid, w).norm(),
                amplitude: (comp[1] * comp[1] + comp[2] * comp[2]).sqrt(),
                refinement,
                uncertainty: span_inv,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    /// Matched to an oracle level.
    Level,
    /// No oracle level within one resolution cell; likely `E_j - E_k`.
    CrossTerm,
    /// No oracle supplied.
    Unmatched,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate<T> {
    pub omega_refined: T,
    pub energy: T,
    pub kind: EstimateKind,
    pub matched_level: Option<usize>,
    pub exact: Option<T>,
    pub relative_error: Option<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport<T> {
    pub reference_energy: T,
    /// Sorted by descending frequency.
    pub estimates: Vec<EnergyEstimate<T>>,
}

impl<T: Real> EnergyReport<T> {
    /// Ground-state estimate: the largest-frequency peak.
    pub fn ground_energy(&self) -> Option<T> {
        self.estimates.first().map(|e| e.energy)
    }

    pub fn for_level(&self, level: usize) -> Option<&EnergyEstimate<T>> {
        self.estimates.iter().find(|e| e.matched_level == Some(level))
    }
}

/// `E = E_ref - omega` per peak. With an oracle (level label, energy) list,
/// peaks are matched smallest-distance-first, each level at most once, within
/// `gate`.
pub fn reconstruct<T: Real>(peaks: &[PeakEstimate<T>], reference_energy: T, oracle: Option<&[(usize, T)]>, gate: T) -> Result<EnergyReport<T>> {
    if peaks.is_empty() {
        return Err(Error::NoPeaks);
    }
    if !reference_energy.is_finite() {
        return Err(Error::InvalidParameter("reference energy must be finite".into()));
    }
    let mut estimates: Vec<EnergyEstimate<T>> = peaks
        .iter()
        .map(|p| {
            let energy = reference_energy - p.omega_refined;
            if energy >= reference_energy {
                return Err(Error::AboveReference {
                    energy: energy.to_f64_lossy(),
                    reference: reference_energy.to_f64_lossy(),
                });
            }
            Ok(EnergyEstimate {
                omega_refined: p.omega_refined,
                energy,
                kind: EstimateKind::Unmatched,
                matched_level: None,
                exact: None,
                relative_error: None,
            })
        })
        .collect::<Result<_>>()?;
    if let Some(levels) = oracle {
        let mut pairs: Vec<(T, usize, usize)> = Vec::new();
        for (i, e) in estimates.iter().enumerate() {
            for (k, &(_, exact)) in levels.iter().enumerate() {
                let d = (e.energy - exact).abs();
                if d <= gate {
                    pairs.push((d, i, k));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_peak = vec![false; estimates.len()];
        let mut used_level = vec![false; levels.len()];
        for (_, i, k) in pairs {
            if used_peak[i] || used_level[k] {
                continue;
            }
            used_peak[i] = true;
            used_level[k] = true;
            let (label, exact) = levels[k];
            let e = &mut estimates[i];
            e.kind = EstimateKind::Level;
            e.matched_level = Some(label);
            e.exact = Some(exact);
            e.relative_error = Some(((e.energy - exact) / exact).abs());
        }
        for (i, e) in estimates.iter_mut().enumerate() {
            if !used_peak[i] {
                e.kind = EstimateKind::CrossTerm;
            }
        }
    }
    estimates.sort_by(|a, b| b.omega_refined.partial_cmp(&a.omega_refined).unwrap_or(std::cmp::Ordering::Equal));
    Ok(EnergyReport {
        reference_energy,
        estimates,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub dft: DftOptions,
    pub peaks: PeakOptions,
    /// Upper end of the frequency grid; `None` uses [`suggested_omega_max`].
    pub omega_max: Option<f64>,
    pub oversample: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            dft: DftOptions::default(),
            peaks: PeakOptions::default(),
            omega_max: None,
            oversample: 20,
        }
    }
}

/// Result of the full pipeline for one ground-branch sector.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorRun<T> {
    pub q: T,
    pub series: RamseySeries<T>,
    pub spectrum: Spectrum<T>,
    pub peaks: Vec<PeakEstimate<T>>,
    pub report: EnergyReport<T>,
}

/// Problem-Hamiltonian levels of the plan's ground-branch sector, labelled by
/// their index in the full ascending spectrum.
pub fn sector_levels<T: Real>(plan: &RamseyPlan<T>) -> Result<Vec<(usize, T)>> {
    let sys = diagonalize_sector(&plan.h_p, &plan.driver_sector.sector, HamiltonianLabel::Problem)?;
    let full = &plan.problem_spectrum().energies;
    let mut used = vec![false; full.len()];
    Ok(sys
        .energies
        .iter()
        .map(|&e| {
            let k = (0..full.len())
                .filter(|&k| !used[k])
                .min_by(|&a, &b| (full[a] - e).abs().partial_cmp(&(full[b] - e).abs()).unwrap_or(std::cmp::Ordering::Equal))
                .expect("sector levels appear in the full spectrum");
            used[k] = true;
            (k, e)
        })
        .collect())
}

/// Four standard deviations of `|f|` under binomial shot noise, so a pure
/// noise bin exceeds it with probability `e^-16`. Zero for exact series.
pub fn shot_noise_floor<T: Real>(series: &RamseySeries<T>) -> T {
    match (series.mode, series.shots) {
        (SeriesMode::Sampled, Some(shots)) => {
            let var: T = series
                .probabilities
                .iter()
                .map(|&p| p * (T::one() - p))
                .sum::<T>()
                / T::lit(shots.count as f64);
            T::lit(4.0) * var.sqrt()
        }
        _ => T::zero(),
    }
}

/// Transform, peak extraction and reconstruction of an existing series.
/// Sampled series raise the peak floor to [`shot_noise_floor`].
pub fn analyze<T: Real>(plan: &RamseyPlan<T>, series: RamseySeries<T>, opts: &AnalysisOptions) -> Result<SectorRun<T>> {
    let mut opts = *opts;
    opts.peaks.min_magnitude = opts.peaks.min_magnitude.max(shot_noise_floor(&series).to_f64_lossy());
    let opts = &opts;
    let e_ref = plan.reference.energy_problem;
    let omega_max = opts
        .omega_max
        .map(T::lit)
        .unwrap_or_else(|| suggested_omega_max(e_ref, plan.h_p.coefficient_norm()));
    let spectrum = oversampled_dft(&series, omega_max, opts.oversample, &opts.dft)?;
    let peaks = find_peaks(&spectrum, &opts.peaks)?;
    let levels = sector_levels(plan)?;
    let report = reconstruct(&peaks, e_ref, Some(&levels), spectrum.resolution())?;
    Ok(SectorRun {
        q: plan.ground_sector_q(),
        series,
        spectrum,
        peaks,
        report,
    })
}

/// Sweep plus analysis.
pub fn run_pipeline<T: Real>(plan: &RamseyPlan<T>, opts: &AnalysisOptions) -> Result<SectorRun<T>> {
    analyze(plan, sweep(plan)?, opts)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SectorOutcome<T> {
    /// Full pipeline.
    Spectral(Box<SectorRun<T>>),
    /// One-dimensional sector evaluated as a diagonal element.
    Classical { energy: T },
    Failed { error: Error },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectorScan<T> {
    pub q: T,
    pub dim: usize,
    pub outcome: SectorOutcome<T>,
}

impl<T: Real> SectorScan<T> {
    pub fn ground_energy(&self) -> Option<T> {
        match &self.outcome {
            SectorOutcome::Spectral(run) => run.report.ground_energy(),
            SectorOutcome::Classical { energy } => Some(*energy),
            SectorOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanReport<T> {
    pub sectors: Vec<SectorScan<T>>,
    pub global_minimum: Option<(T, T)>,
}

/// Runs the pipeline in each listed sector (all sectors when empty) and
/// reports the lowest ground estimate with its sector label.
pub fn scan_subspaces<T: Real>(base: &RamseyPlan<T>, sector_list: &[T], opts: &AnalysisOptions) -> Result<ScanReport<T>> {
    let qs: Vec<T> = if sector_list.is_empty() {
        base.decomposition.q_values()
    } else {
        sector_list.to_vec()
    };
    let mut sectors = Vec::with_capacity(qs.len());
    for q in qs {
        let sector = base.decomposition.sector(q)?.clone();
        let outcome = if sector.dim() == 1 {
            SectorOutcome::Classical {
                energy: base.h_p.diagonal_element(sector.basis_indices[0]),
            }
        } else {
            match base.clone().with_sector(q).and_then(|p| run_pipeline(&p, opts)) {
                Ok(run) => SectorOutcome::Spectral(Box::new(run)),
                Err(error) => SectorOutcome::Failed { error },
            }
        };
        sectors.push(SectorScan {
            q: sector.q_value,
            dim: sector.dim(),
            outcome,
        });
    }
    let global_minimum = sectors
        .iter()
        .filter_map(|s| s.ground_energy().map(|e| (e, s.q)))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(ScanReport {
        sectors,
        global_minimum,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow<T> {
    pub total_runtime: T,
    pub proposed_estimate: T,
    pub conventional_estimate: T,
    pub exact: T,
}

/// Proposed versus conventional estimates at equal total runtime `R`. The
/// proposed run keeps `T` and uses `tau in [0, R - 2T]`; the conventional
/// ramp lasts `R`.
pub fn compare_runtimes<T: Real>(model: &ModelConfig<T>, base: &RamseyPlan<T>, runtimes: &[T], opts: &AnalysisOptions) -> Result<Vec<CompareRow<T>>> {
    if runtimes.is_empty() {
        return Err(Error::InvalidParameter("runtime list is empty".into()));
    }
    let exact = {
        let dec = decompose(&model.conserved, model.n_qubits)?;
        let sector = dec.sector(base.ground_sector_q())?;
        diagonalize_sector(&base.h_p, sector, HamiltonianLabel::Problem)?.energies[0]
    };
    runtimes
        .iter()
        .map(|&r| {
            let tau_max = r - base.asp_time - base.asp_time;
            if !(tau_max > T::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "runtime {r} leaves no phase time with T = {}",
                    base.asp_time
                )));
            }
            let mut plan = base.clone();
            plan.grid = TauGrid::new(T::zero(), tau_max, base.grid.len)?;
            let run = run_pipeline(&plan, opts)?;
            let proposed = run.report.ground_energy().ok_or(Error::NoPeaks)?;
            let conventional = conventional_estimate(model, r, &plan.settings)?;
            Ok(CompareRow {
                total_runtime: r,
                proposed_estimate: proposed,
                conventional_estimate: conventional,
                exact,
            })
        })
        .collect()
}
