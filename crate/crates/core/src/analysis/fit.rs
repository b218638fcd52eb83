//! Weighted least-squares fits of lifetime against ambient error rate.
//!
//! Both models work on `y = log10 T` against `x = log10 p_amb` with
//! `sigma_y = stderr / (T ln 10)`:
//!
//! * linear: `y = -D x + k`
//! * self-correcting: `y = -a L (x + k1) + k2`, with `a = D_eff / L` shared
//!   across lattice sizes.
//!
//! Parameter covariances are scaled by the reduced chi-square, so the quoted
//! errors reflect the observed scatter rather than the input error bars.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::LifetimeDataset;
use crate::error::{invalid, LecError, Result};
use crate::geometry::CodeKind;

/// Smallest log-space error bar; keeps zero-variance points finite.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModel {
    Linear,
    SelfCorrecting,
}

impl FitModel {
    /// The toric2d memory is not self-correcting; the others are.
    pub fn for_code(kind: CodeKind) -> Self {
        match kind {
            CodeKind::Toric2D => FitModel::Linear,
            _ => FitModel::SelfCorrecting,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            FitModel::Linear => &["D_eff", "k"],
            FitModel::SelfCorrecting => &["D_eff_per_L", "k1", "k2"],
        }
    }
}

impl fmt::Display for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitModel::Linear => "linear",
            FitModel::SelfCorrecting => "self_correcting",
        })
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Weighted residuals `(model - y) / sigma` in observation order.
    pub residuals: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// `(L, p_amb)` of rows dropped before fitting.
    pub excluded: Vec<(usize, f64)>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn stderr(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }

    pub fn stderrs(&self) -> Vec<f64> {
        (0..self.params.len()).map(|i| self.stderr(i)).collect()
    }

    /// Effective distance at lattice size `l`.
    pub fn d_eff(&self, l: usize) -> f64 {
        match self.model {
            FitModel::Linear => self.params[0],
            FitModel::SelfCorrecting => self.params[0] * l as f64,
        }
    }

    /// `alpha = 10^k1` for the self-correcting model.
    pub fn alpha(&self) -> Option<f64> {
        (self.model == FitModel::SelfCorrecting).then(|| 10f64.powf(self.params[1]))
    }

    /// `C = 10^k2` for the self-correcting model.
    pub fn c(&self) -> Option<f64> {
        (self.model == FitModel::SelfCorrecting).then(|| 10f64.powf(self.params[2]))
    }

    /// Model prediction of `log10 T`.
    pub fn predict_log10(&self, l: usize, p_amb: f64) -> f64 {
        let x = p_amb.log10();
        match self.model {
            FitModel::Linear => -self.params[0] * x + self.params[1],
            FitModel::SelfCorrecting => -self.params[0] * l as f64 * (x + self.params[1]) + self.params[2],
        }
    }

    /// Parameter table rows, derived `alpha` and `C` included with delta-method errors.
    pub fn rows(&self, circuit: &str, p_gate: f64) -> Vec<FitRow> {
        let mut out: Vec<FitRow> = self
            .model
            .param_names()
            .iter()
            .enumerate()
            .map(|(i, name)| FitRow {
                model: self.model.to_string(),
                circuit: circuit.to_string(),
                p_gate,
                param: name.to_string(),
                value: self.params[i],
                stderr: self.stderr(i),
            })
            .collect();
        if let (Some(alpha), Some(c)) = (self.alpha(), self.c()) {
            let ln10 = std::f64::consts::LN_10;
            for (name, v, i) in [("alpha", alpha, 1), ("C", c, 2)] {
                out.push(FitRow {
                    model: self.model.to_string(),
                    circuit: circuit.to_string(),
                    p_gate,
                    param: name.to_string(),
                    value: v,
                    stderr: v * ln10 * self.stderr(i),
                });
            }
        }
        out
    }
}

/// One line of the fits CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitRow {
    pub model: String,
    pub circuit: String,
    pub p_gate: f64,
    pub param: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug)]
struct Obs {
    x: f64,
    y: f64,
    sigma: f64,
    l: f64,
}

struct Prepared {
    obs: Vec<Obs>,
    excluded: Vec<(usize, f64)>,
    warnings: Vec<String>,
}

fn prepare(datasets: &[LifetimeDataset], min_sizes: usize) -> Result<Prepared> {
    let first = datasets.first().ok_or_else(|| invalid("no datasets to fit"))?;
    let mut obs = Vec::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    let mut per_l: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for ds in datasets {
        if ds.kind != first.kind || ds.p_gate != first.p_gate || ds.circuit != first.circuit {
            return Err(invalid("datasets must share code, circuit and p_gate"));
        }
        for p in &ds.points {
            if p.n == 0 {
                return Err(invalid(format!("L={} p_amb={} has no samples", ds.l, p.p_amb)));
            }
            let reason = if p.censored > 0 {
                Some(format!("{} of {} samples censored", p.censored, p.n))
            } else if p.p_amb <= 0.0 || p.mean <= 0.0 {
                Some("non-positive p_amb or lifetime".to_string())
            } else {
                None
            };
            if let Some(r) = reason {
                warnings.push(format!("excluded L={} p_amb={}: {r}", ds.l, p.p_amb));
                excluded.push((ds.l, p.p_amb));
                continue;
            }
            let sigma = (p.stderr / (p.mean * std::f64::consts::LN_10)).max(SIGMA_FLOOR);
            obs.push(Obs { x: p.p_amb.log10(), y: p.mean.log10(), sigma, l: ds.l as f64 });
            per_l.entry(ds.l).or_default().push(p.p_amb);
        }
    }
    for (l, xs) in &per_l {
        let mut xs = xs.clone();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        if xs.len() < 2 {
            return Err(invalid(format!("L={l} has fewer than two usable p_amb points")));
        }
    }
    if per_l.len() < min_sizes {
        return Err(invalid(format!(
            "the shared-parameter fit needs at least {min_sizes} lattice sizes, got {}",
            per_l.len()
        )));
    }
    Ok(Prepared { obs, excluded, warnings })
}

fn scaled_covariance(unscaled: DMatrix<f64>, chi2: f64, n: usize, p: usize) -> DMatrix<f64> {
    if n > p {
        unscaled * (chi2 / (n - p) as f64)
    } else {
        unscaled
    }
}

fn require_positive(model: FitModel, params: &[f64]) -> Result<()> {
    if params[0] > 0.0 {
        Ok(())
    } else {
        Err(LecError::NoConvergence(format!(
            "{model} fit gives non-positive D_eff ({:.4})",
            params[0]
        )))
    }
}

fn linear_design(obs: &[Obs]) -> (DMatrix<f64>, DVector<f64>) {
    let a = DMatrix::from_fn(obs.len(), 2, |i, j| if j == 0 { -obs[i].x } else { 1.0 } / obs[i].sigma);
    let b = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.y / o.sigma));
    (a, b)
}

/// Closed-form weighted fit of `y = -D x + k`. Sizes are pooled.
pub fn fit_linear(datasets: &[LifetimeDataset]) -> Result<FitResult> {
    let prep = prepare(datasets, 1)?;
    let (a, b) = linear_design(&prep.obs);
    let qr = a.clone().qr();
    let beta = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * &b))
        .ok_or_else(|| invalid("all p_amb values coincide"))?;
    let resid = &a * &beta - &b;
    let chi2 = resid.norm_squared();
    let unscaled = (a.transpose() * &a)
        .try_inverse()
        .ok_or_else(|| invalid("singular normal matrix"))?;
    let params = vec![beta[0], beta[1]];
    require_positive(FitModel::Linear, &params)?;
    Ok(FitResult {
        model: FitModel::Linear,
        params,
        covariance: scaled_covariance(unscaled, chi2, prep.obs.len(), 2),
        residual_norm: chi2.sqrt(),
        residuals: resid.iter().copied().collect(),
        iterations: 0,
        excluded: prep.excluded,
        warnings: prep.warnings,
    })
}

/// The linear model solved by [`levenberg_marquardt`], for cross-checking.
pub fn fit_linear_iterative(datasets: &[LifetimeDataset]) -> Result<FitResult> {
    let prep = prepare(datasets, 1)?;
    let (a, b) = linear_design(&prep.obs);
    let sol = levenberg_marquardt(|p| (&a * p - &b, a.clone()), &[1.0, 0.0], &LmOptions::default())?;
    let params: Vec<f64> = sol.params.iter().copied().collect();
    require_positive(FitModel::Linear, &params)?;
    Ok(FitResult {
        model: FitModel::Linear,
        params,
        covariance: scaled_covariance(sol.jtj_inverse, sol.chi2, prep.obs.len(), 2),
        residual_norm: sol.chi2.sqrt(),
        residuals: sol.residuals.iter().copied().collect(),
        iterations: sol.iterations,
        excluded: prep.excluded,
        warnings: prep.warnings,
    })
}

/// Shared `(D_eff/L, k1, k2)` fit over two or more lattice sizes.
pub fn fit_self_correcting(datasets: &[LifetimeDataset]) -> Result<FitResult> {
    let prep = prepare(datasets, 2)?;
    let obs = &prep.obs;
    let p0 = self_correcting_start(obs);
    let residual = |p: &DVector<f64>| {
        let (a, k1, k2) = (p[0], p[1], p[2]);
        let r = DVector::from_iterator(
            obs.len(),
            obs.iter().map(|o| (-a * o.l * (o.x + k1) + k2 - o.y) / o.sigma),
        );
        let j = DMatrix::from_fn(obs.len(), 3, |i, c| {
            let o = obs[i];
            let d = match c {
                0 => -o.l * (o.x + k1),
                1 => -a * o.l,
                _ => 1.0,
            };
            d / o.sigma
        });
        (r, j)
    };
    let sol = levenberg_marquardt(residual, &p0, &LmOptions::default())?;
    let params: Vec<f64> = sol.params.iter().copied().collect();
    require_positive(FitModel::SelfCorrecting, &params)?;
    Ok(FitResult {
        model: FitModel::SelfCorrecting,
        params,
        covariance: scaled_covariance(sol.jtj_inverse, sol.chi2, obs.len(), 3),
        residual_norm: sol.chi2.sqrt(),
        residuals: sol.residuals.iter().copied().collect(),
        iterations: sol.iterations,
        excluded: prep.excluded,
        warnings: prep.warnings,
    })
}

/// Slope through the extreme-p_amb points of each size, `k1 = 0`, and the
/// mean intercept.
fn self_correcting_start(obs: &[Obs]) -> [f64; 3] {
    let mut by_l: BTreeMap<u64, (Obs, Obs)> = BTreeMap::new();
    for o in obs {
        let e = by_l.entry(o.l.to_bits()).or_insert((*o, *o));
        if o.x < e.0.x {
            e.0 = *o;
        }
        if o.x > e.1.x {
            e.1 = *o;
        }
    }
    let slopes: Vec<f64> = by_l
        .values()
        .map(|(lo, hi)| -(hi.y - lo.y) / (hi.x - lo.x) / lo.l)
        .collect();
    let a = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let k2 = obs.iter().map(|o| o.y + a * o.l * o.x).sum::<f64>() / obs.len() as f64;
    [a, 0.0, k2]
}

/// Picks the model from the code kind.
pub fn fit_deff(datasets: &[LifetimeDataset]) -> Result<FitResult> {
    let kind = datasets.first().ok_or_else(|| invalid("no datasets to fit"))?.kind;
    match FitModel::for_code(kind) {
        FitModel::Linear => fit_linear(datasets),
        FitModel::SelfCorrecting => fit_self_correcting(datasets),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iter: usize,
    pub lambda0: f64,
    /// Relative step size below which the iteration stops.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iter: 500, lambda0: 1e-3, xtol: 1e-13 }
    }
}

#[derive(Clone, Debug)]
pub struct LmSolution {
    pub params: DVector<f64>,
    pub residuals: DVector<f64>,
    pub chi2: f64,
    /// `(J^T J)^-1` at the solution.
    pub jtj_inverse: DMatrix<f64>,
    pub iterations: usize,
}

/// Levenberg-Marquardt with Marquardt's diagonal scaling. `f` returns the
/// weighted residual vector and its Jacobian.
pub fn levenberg_marquardt<F>(f: F, p0: &[f64], opts: &LmOptions) -> Result<LmSolution>
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let mut p = DVector::from_column_slice(p0);
    let (mut r, mut j) = f(&p);
    let mut chi2 = r.norm_squared();
    if !chi2.is_finite() {
        return Err(LecError::NoConvergence("non-finite residuals at the starting point".into()));
    }
    let mut lambda = opts.lambda0;
    for it in 1..=opts.max_iter {
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut a = jtj.clone();
        for i in 0..p.len() {
            a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
        }
        let Some(chol) = a.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let delta = -chol.solve(&g);
        let trial = &p + &delta;
        let (rt, jt) = f(&trial);
        let chi2_t = rt.norm_squared();
        if chi2_t.is_finite() && chi2_t <= chi2 {
            let small = delta
                .iter()
                .zip(trial.iter())
                .all(|(d, x)| d.abs() <= opts.xtol * (x.abs() + opts.xtol));
            p = trial;
            r = rt;
            j = jt;
            chi2 = chi2_t;
            lambda = (lambda / 10.0).max(1e-12);
            if small {
                let jtj_inverse = (j.transpose() * &j)
                    .try_inverse()
                    .ok_or_else(|| LecError::NoConvergence("singular Jacobian at the solution".into()))?;
                return Ok(LmSolution { params: p, residuals: r, chi2, jtj_inverse, iterations: it });
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e20 {
                break;
            }
        }
    }
    Err(LecError::NoConvergence(format!(
        "stopped after {} iterations with chi2={chi2:.6e}, lambda={lambda:.1e}, params={:?}",
        opts.max_iter,
        p.as_slice()
    )))
}

#[cfg(test)]
mod tests {
    use super::super::LifetimePoint;
    use super::*;

    fn dataset(l: usize, pts: &[(f64, f64)]) -> LifetimeDataset {
        LifetimeDataset {
            kind: CodeKind::Toric2D,
            circuit: "c".into(),
            l,
            p_gate: 0.0,
            points: pts
                .iter()
                .map(|&(p_amb, mean)| LifetimePoint { p_amb, mean, stderr: 0.05 * mean, n: 100, censored: 0 })
                .collect(),
        }
    }

    #[test]
    fn two_points_give_exact_slope() {
        let ds = dataset(4, &[(0.01, 100.0), (0.1, 10.0)]);
        let f = fit_linear(&[ds]).unwrap();
        assert!((f.params[0] - 1.0).abs() < 1e-12);
        assert!((f.params[1] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn censored_rows_are_dropped() {
        let mut ds = dataset(4, &[(0.01, 100.0), (0.02, 50.0), (0.04, 25.0)]);
        ds.points[0].censored = 3;
        let f = fit_linear(&[ds]).unwrap();
        assert_eq!(f.excluded, vec![(4, 0.01)]);
        assert_eq!(f.residuals.len(), 2);
    }

    #[test]
    fn lm_solves_rosenbrock() {
        let f = |p: &DVector<f64>| {
            let r = DVector::from_vec(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]);
            let j = DMatrix::from_row_slice(2, 2, &[-20.0 * p[0], 10.0, -1.0, 0.0]);
            (r, j)
        };
        let s = levenberg_marquardt(f, &[-1.2, 1.0], &LmOptions::default()).unwrap();
        assert!((s.params[0] - 1.0).abs() < 1e-8 && (s.params[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn self_correcting_needs_two_sizes() {
        let ds = dataset(4, &[(0.01, 100.0), (0.1, 10.0)]);
        assert!(fit_self_correcting(&[ds]).is_err());
    }

    #[test]
    fn negative_slope_is_rejected() {
        let ds = dataset(4, &[(0.01, 10.0), (0.1, 100.0)]);
        assert!(matches!(fit_linear(&[ds]), Err(LecError::NoConvergence(_))));
    }
}
