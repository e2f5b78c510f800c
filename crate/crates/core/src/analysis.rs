//! Peak fitting and the entanglement verdict.

use std::fmt::Write as _;

use nalgebra::{Matrix4, Vector4};

use crate::correlator::Histogram;
use crate::error::{Error, Result};
use crate::model::{self, SourceParams, WasakInputs, FWHM_PER_SIGMA, PS2_PER_S2};

pub const MAX_ITERATIONS: usize = 200;
pub const CONVERGENCE_TOL: f64 = 1e-10;
/// Minimum peak height over baseline, in baseline standard deviations.
pub const MIN_PEAK_SIGNIFICANCE: f64 = 5.0;
pub const MIN_OCCUPIED_BINS: usize = 8;
/// A peak narrower than this many bins at half maximum is unresolved.
pub const MIN_BINS_PER_FWHM: f64 = 2.0;
const REWEIGHT_ROUNDS: usize = 20;
const REWEIGHT_TOL: f64 = 1e-8;

/// A·exp(−(x−μ)²/2s²) + B fitted to a coincidence histogram. Positions in ps
/// relative to the histogram's applied offset.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub amplitude_err: f64,
    pub center: f64,
    pub center_err: f64,
    pub sigma: f64,
    pub sigma_err: f64,
    pub baseline: f64,
    pub baseline_err: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
}

impl GaussianFit {
    pub fn fwhm(&self) -> f64 {
        FWHM_PER_SIGMA * self.sigma
    }

    pub fn fwhm_err(&self) -> f64 {
        FWHM_PER_SIGMA * self.sigma_err
    }

    /// `key = value` lines.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "amplitude = {}", self.amplitude);
        let _ = writeln!(s, "amplitude_err = {}", self.amplitude_err);
        let _ = writeln!(s, "center_ps = {}", self.center);
        let _ = writeln!(s, "center_err_ps = {}", self.center_err);
        let _ = writeln!(s, "sigma_ps = {}", self.sigma);
        let _ = writeln!(s, "sigma_err_ps = {}", self.sigma_err);
        let _ = writeln!(s, "fwhm_ps = {}", self.fwhm());
        let _ = writeln!(s, "fwhm_err_ps = {}", self.fwhm_err());
        let _ = writeln!(s, "baseline = {}", self.baseline);
        let _ = writeln!(s, "baseline_err = {}", self.baseline_err);
        let _ = writeln!(s, "reduced_chi2 = {}", self.reduced_chi2);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        s
    }

    pub const CSV_HEADER: &'static str =
        "amplitude,amplitude_err,center_ps,center_err_ps,sigma_ps,sigma_err_ps,fwhm_ps,fwhm_err_ps,baseline,baseline_err,reduced_chi2";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.amplitude,
            self.amplitude_err,
            self.center,
            self.center_err,
            self.sigma,
            self.sigma_err,
            self.fwhm(),
            self.fwhm_err(),
            self.baseline,
            self.baseline_err,
            self.reduced_chi2
        )
    }
}

pub fn fit_gaussian(h: &Histogram) -> Result<GaussianFit> {
    let x = h.centers_ps();
    let y: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    fit_gaussian_xy(&x, &y)
}

fn model_and_partials(p: &Vector4<f64>, x: f64) -> (f64, Vector4<f64>) {
    let (a, mu, s, _) = (p[0], p[1], p[2], p[3]);
    let u = (x - mu) / s;
    let e = (-0.5 * u * u).exp();
    let f = a * e + p[3];
    (f, Vector4::new(e, a * e * u / s, a * e * u * u / s, 1.0))
}

/// Levenberg–Marquardt minimization of Σ wᵢ(yᵢ − f(xᵢ))² from `p`.
/// Returns the parameters, χ² and iteration count.
fn levenberg_marquardt(
    x: &[f64],
    y: &[f64],
    weights: &[f64],
    mut p: Vector4<f64>,
) -> Result<(Vector4<f64>, f64, usize)> {
    let chi2_of = |p: &Vector4<f64>| -> f64 {
        x.iter()
            .zip(y)
            .zip(weights)
            .map(|((&xi, &yi), &wi)| {
                let r = yi - model_and_partials(p, xi).0;
                wi * r * r
            })
            .sum()
    };
    let mut chi2 = chi2_of(&p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(x, y, weights, &p);
        let mut step = None;
        while lambda < 1e16 {
            let mut m = jtj;
            for k in 0..4 {
                m[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            if let Some(delta) = m.lu().solve(&jtr) {
                let trial = p + delta;
                if trial[2] > 0.0 && trial.iter().all(|v| v.is_finite()) {
                    let c = chi2_of(&trial);
                    if c <= chi2 {
                        step = Some((delta, trial, c));
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        let Some((delta, trial, c)) = step else {
            // no downhill step at any damping: already at the minimum
            return Ok((p, chi2, iterations));
        };
        p = trial;
        chi2 = c;
        lambda = (lambda / 10.0).max(1e-12);
        if !relative_change_above(&delta, &p, CONVERGENCE_TOL) {
            return Ok((p, chi2, iterations));
        }
    }
    Err(Error::FitFailed(format!(
        "no convergence after {MAX_ITERATIONS} iterations (A={:.4}, mu={:.4}, s={:.4}, B={:.4}, chi2={chi2:.4})",
        p[0], p[1], p[2], p[3]
    )))
}

fn relative_change_above(delta: &Vector4<f64>, p: &Vector4<f64>, tol: f64) -> bool {
    let scales = [p[0].abs(), p[2], p[2], p[3].abs().max(1.0)];
    (0..4).any(|k| delta[k].abs() > tol * scales[k].max(1e-300))
}

fn normal_equations(
    x: &[f64],
    y: &[f64],
    weights: &[f64],
    p: &Vector4<f64>,
) -> (Matrix4<f64>, Vector4<f64>) {
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(weights) {
        let (f, g) = model_and_partials(p, xi);
        jtj += (g * g.transpose()) * wi;
        jtr += g * (wi * (yi - f));
    }
    (jtj, jtr)
}

/// Weighted Gaussian-plus-baseline fit with Poisson weights.
///
/// The first pass weights each bin by 1/max(count, 1). Later passes weight by
/// 1/max(model, 1) at the previous solution until the parameters stop
/// moving, which removes the low-count bias of count-based weights.
pub fn fit_gaussian_xy(x: &[f64], y: &[f64]) -> Result<GaussianFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("x and y lengths differ".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) || y.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput(
            "histogram values must be finite and counts >= 0".into(),
        ));
    }
    let occupied = y.iter().filter(|&&v| v > 0.0).count();
    if occupied < MIN_OCCUPIED_BINS {
        return Err(Error::FitFailed(format!(
            "only {occupied} occupied bins, need {MIN_OCCUPIED_BINS}"
        )));
    }
    let n = x.len();
    let mut weights: Vec<f64> = y.iter().map(|&v| 1.0 / v.max(1.0)).collect();
    let (mut p, mut chi2, mut iterations) =
        levenberg_marquardt(x, y, &weights, initial_guess(x, y)?)?;
    for _ in 0..REWEIGHT_ROUNDS {
        weights = x
            .iter()
            .map(|&xi| 1.0 / model_and_partials(&p, xi).0.max(1.0))
            .collect();
        let (np, c, it) = levenberg_marquardt(x, y, &weights, p)?;
        iterations += it;
        let moved = relative_change_above(&(np - p), &np, REWEIGHT_TOL);
        p = np;
        chi2 = c;
        if !moved {
            break;
        }
    }

    let dof = n.saturating_sub(4);
    if dof == 0 {
        return Err(Error::FitFailed(
            "not enough bins for four parameters".into(),
        ));
    }
    let reduced_chi2 = chi2 / dof as f64;
    let (jtj, _) = normal_equations(x, y, &weights, &p);
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::FitFailed("singular covariance".into()))?
        * reduced_chi2.max(1.0); // never tighter than the Poisson errors
    let err = |k: usize| cov[(k, k)].max(0.0).sqrt();

    let fit = GaussianFit {
        amplitude: p[0],
        amplitude_err: err(0),
        center: p[1],
        center_err: err(1),
        sigma: p[2],
        sigma_err: err(2),
        baseline: p[3],
        baseline_err: err(3),
        reduced_chi2,
        iterations,
    };
    if !(fit.amplitude > 0.0) || fit.amplitude < MIN_PEAK_SIGNIFICANCE * fit.amplitude_err {
        return Err(Error::FitFailed(format!(
            "no significant peak (amplitude {:.3} ± {:.3})",
            fit.amplitude, fit.amplitude_err
        )));
    }
    let (lo, hi) = (x[0], x[n - 1]);
    let bin = (hi - lo) / (n - 1) as f64;
    if fit.fwhm() < MIN_BINS_PER_FWHM * bin || !(fit.sigma_err > 0.0 && fit.sigma_err.is_finite()) {
        return Err(Error::FitFailed(format!(
            "unresolved peak (FWHM {:.3} ps with {bin:.3} ps bins)",
            fit.fwhm()
        )));
    }
    if fit.center < lo || fit.center > hi {
        return Err(Error::FitFailed(format!(
            "center {:.3} ps outside histogram [{lo}, {hi}]",
            fit.center
        )));
    }
    Ok(fit)
}

/// Peak bin for μ, half-maximum crossings for s, minimum bin for B. The peak
/// and crossings are located on a 5-bin running mean so that a single noisy
/// bin cannot masquerade as the peak.
fn initial_guess(x: &[f64], y: &[f64]) -> Result<Vector4<f64>> {
    let n = y.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(n);
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let baseline = y.iter().copied().fold(f64::INFINITY, f64::min);
    let raw_max = y.iter().copied().fold(0.0, f64::max);
    if raw_max - baseline < MIN_PEAK_SIGNIFICANCE * baseline.max(1.0).sqrt() {
        return Err(Error::FitFailed(format!(
            "no significant peak: max {raw_max} over baseline {baseline}"
        )));
    }
    let (peak, &top) = smooth
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let amplitude = (top - baseline).max(raw_max - baseline).max(1e-12);
    let half = baseline + 0.5 * (top - baseline);
    let mut left = peak;
    while left > 0 && smooth[left] > half {
        left -= 1;
    }
    let mut right = peak;
    while right + 1 < n && smooth[right] > half {
        right += 1;
    }
    let bin = if n > 1 {
        (x[n - 1] - x[0]) / (n - 1) as f64
    } else {
        1.0
    };
    let fwhm = (x[right] - x[left]).max(bin);
    Ok(Vector4::new(
        amplitude,
        x[peak],
        fwhm / FWHM_PER_SIGMA,
        baseline,
    ))
}

/// (σ², 2σ·σ_err).
pub fn variance_from_fit(fit: &GaussianFit) -> (f64, f64) {
    (fit.sigma * fit.sigma, 2.0 * fit.sigma * fit.sigma_err)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WasakResult {
    pub inputs: WasakInputs,
    pub w: f64,
    pub w_err: f64,
    /// (1 − W)/σ_W when W < 1, else 0.
    pub violation_sigmas: f64,
    /// W < 1 on the point estimate.
    pub violated: bool,
}

impl WasakResult {
    pub fn from_inputs(inputs: WasakInputs) -> Result<Self> {
        let w = model::wasak_w(&inputs)?;
        let w_err = model::wasak_w_uncertainty(&inputs)?;
        let violated = w < 1.0;
        let violation_sigmas = if violated {
            if w_err > 0.0 {
                (1.0 - w) / w_err
            } else {
                f64::INFINITY
            }
        } else {
            0.0
        };
        Ok(WasakResult {
            inputs,
            w,
            w_err,
            violation_sigmas,
            violated,
        })
    }

    /// Audit report listing all inputs and the verdict.
    pub fn report(&self) -> String {
        let i = &self.inputs;
        let mut s = String::new();
        let _ = writeln!(s, "var_before_ps2 = {}", i.var_before);
        let _ = writeln!(s, "var_before_err_ps2 = {}", i.var_before_err);
        let _ = writeln!(s, "var_after_ps2 = {}", i.var_after);
        let _ = writeln!(s, "var_after_err_ps2 = {}", i.var_after_err);
        let _ = writeln!(s, "two_beta_l_ps2 = {}", i.two_beta_l);
        if let Ok(rhs) = model::classical_bound_rhs(i.var_before, i.two_beta_l) {
            let _ = writeln!(s, "classical_bound_ps2 = {rhs}");
        }
        let _ = writeln!(s, "W = {}", self.w);
        let _ = writeln!(s, "W_err = {}", self.w_err);
        let _ = writeln!(s, "violation_sigmas = {}", self.violation_sigmas);
        let _ = writeln!(s, "violated = {}", self.violated);
        s
    }
}

pub fn evaluate_wasak(
    before: &GaussianFit,
    after: &GaussianFit,
    two_beta_l: f64,
) -> Result<WasakResult> {
    let (var_before, var_before_err) = variance_from_fit(before);
    let (var_after, var_after_err) = variance_from_fit(after);
    WasakResult::from_inputs(WasakInputs {
        var_before,
        var_before_err,
        var_after,
        var_after_err,
        two_beta_l,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub slope_err: f64,
    pub intercept: f64,
    pub intercept_err: f64,
    pub dof: usize,
    /// χ²/dof, or None for an exact two-point solution.
    pub reduced_chi2: Option<f64>,
}

impl LinearFit {
    /// True when the line passes exactly through two points and the
    /// uncertainties come from the inputs alone.
    pub fn is_exact(&self) -> bool {
        self.dof == 0
    }
}

/// Weighted least squares on (x, y, σ_y). With all σ_y > 0 the standard
/// errors follow from the input uncertainties; with all σ_y = 0 the fit is
/// unweighted and errors come from the residual scatter (zero for two points).
pub fn fit_linear(points: &[(f64, f64, f64)]) -> Result<LinearFit> {
    if points
        .iter()
        .any(|p| !p.0.is_finite() || !p.1.is_finite() || !(p.2 >= 0.0))
    {
        return Err(Error::InvalidInput(
            "points must be finite with nonnegative errors".into(),
        ));
    }
    let weighted = points.iter().all(|p| p.2 > 0.0);
    if !weighted && points.iter().any(|p| p.2 > 0.0) {
        return Err(Error::InvalidInput(
            "either all or none of the points need uncertainties".into(),
        ));
    }
    let first = points.first().map(|p| p.0);
    if points.len() < 2 || points.iter().all(|p| Some(p.0) == first) {
        return Err(Error::InvalidInput(
            "need at least two distinct abscissae".into(),
        ));
    }
    let w = |p: &(f64, f64, f64)| if weighted { 1.0 / (p.2 * p.2) } else { 1.0 };
    let sw: f64 = points.iter().map(w).sum();
    let xm = points.iter().map(|p| w(p) * p.0).sum::<f64>() / sw;
    let ym = points.iter().map(|p| w(p) * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| w(p) * (p.0 - xm).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| w(p) * (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let dof = points.len() - 2;
    let chi2: f64 = points
        .iter()
        .map(|p| w(p) * (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let reduced_chi2 = (dof > 0).then(|| chi2 / dof as f64);
    // Unweighted: scale by the residual variance.
    let scale = if weighted {
        1.0
    } else {
        reduced_chi2.unwrap_or(0.0)
    };
    let slope_var = scale / sxx;
    let intercept_var = scale * (1.0 / sw + xm * xm / sxx);
    Ok(LinearFit {
        slope,
        slope_err: slope_var.sqrt(),
        intercept,
        intercept_err: intercept_var.sqrt(),
        dof,
        reduced_chi2,
    })
}

/// Sign convention for a fiber's group-velocity dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispersionRegime {
    /// k″ < 0 (standard single-mode fiber at 1.55 µm).
    Anomalous,
    /// k″ > 0 (dispersion-compensating fiber).
    Normal,
}

/// Inverts the far-field width-versus-length slope (ps/km) to k″ (s²/m).
pub fn dispersion_from_slope(
    slope_ps_per_km: f64,
    src: &SourceParams,
    regime: DispersionRegime,
) -> Result<f64> {
    src.validate()?;
    if !(slope_ps_per_km > 0.0) || !slope_ps_per_km.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "slope must be > 0, got {slope_ps_per_km}"
        )));
    }
    let k2_ps2_per_m = slope_ps_per_km / src.eta() / 1e3;
    let magnitude = k2_ps2_per_m / PS2_PER_S2;
    Ok(match regime {
        DispersionRegime::Anomalous => -magnitude,
        DispersionRegime::Normal => magnitude,
    })
}
