//! Sharpe ratios, deflated-Sharpe confidence levels and univariate OLS.

mod impact;
mod normal;

pub use impact::{
    impact_table, write_impact_by_period, write_impact_table, ImpactCell, ImpactOptions, ImpactRow,
    ImpactTable, ReturnKind, WinsorScope, IMPACT_BY_PERIOD_HEADER, IMPACT_TABLE_HEADER,
};
pub use normal::{normal_cdf, normal_inv_cdf, normal_pdf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{mean, sample_std, Scalar};
use crate::strategy::BacktestReport;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Quarterly periods per year, the annualization factor is its square root.
pub const PERIODS_PER_YEAR: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpeResult<T: Scalar = f64> {
    /// `mean / std` in per-period units; this is the ratio that enters deflation.
    pub per_period: T,
    /// `per_period × √4`.
    pub annualized: T,
    pub n_periods: usize,
    pub mean: T,
    pub std: T,
    /// Biased moment estimator `m3 / m2^1.5`.
    pub skewness: T,
    /// Pearson (non-excess) kurtosis `m4 / m2²`; a normal sample gives about 3.
    pub kurtosis: T,
}

/// Sharpe ratio of a per-period PnL series, sample (`n − 1`) standard deviation.
pub fn sharpe<T: Scalar>(pnl: &[T]) -> Result<SharpeResult<T>> {
    if pnl.len() < 2 {
        return Err(Error::Degenerate("need at least two periods"));
    }
    if pnl.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite PnL value".into()));
    }
    if pnl.iter().all(|&x| x == pnl[0]) {
        return Err(Error::Degenerate("zero variance"));
    }
    let m = mean(pnl).expect("non-empty");
    let std = sample_std(pnl).expect("two points");
    if std == T::zero() {
        return Err(Error::Degenerate("zero variance"));
    }
    let per_period = m / std;
    let n = T::of_count(pnl.len());
    let central = |k: i32| pnl.iter().map(|&x| (x - m).powi(k)).sum::<T>() / n;
    let m2 = central(2);
    Ok(SharpeResult {
        per_period,
        annualized: per_period * T::of(PERIODS_PER_YEAR).sqrt(),
        n_periods: pnl.len(),
        mean: m,
        std,
        skewness: central(3) / m2.powf(T::of(1.5)),
        kurtosis: central(4) / (m2 * m2),
    })
}

/// Sharpe ratios of every strategy tried, used to estimate the best Sharpe
/// expected under the null of no skill.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeflationContext<T: Scalar = f64> {
    pub sharpe_set: Vec<T>,
    pub k_trials: usize,
    pub euler_gamma: T,
}

impl<T: Scalar> DeflationContext<T> {
    pub fn new(sharpe_set: Vec<T>) -> Result<Self> {
        if sharpe_set.is_empty() {
            return Err(Error::Empty("sharpe set"));
        }
        Ok(Self {
            k_trials: sharpe_set.len(),
            sharpe_set,
            euler_gamma: T::of(EULER_GAMMA),
        })
    }

    /// Deflation benchmark
    /// `S0 = std(S) · ((1 − γ) Φ⁻¹[1 − 1/K] + γ Φ⁻¹[1 − e⁻¹/K])`.
    ///
    /// The dispersion is the sample standard deviation of the trial set. A
    /// single trial, or trials with identical Sharpe ratios, give `S0 = 0`.
    pub fn s0(&self) -> T {
        let std = match sample_std(&self.sharpe_set) {
            Some(s) if s > T::zero() => s,
            _ => return T::zero(),
        };
        let k = T::of_count(self.k_trials);
        let g = self.euler_gamma;
        let z1 = normal_inv_cdf(T::one() - T::one() / k);
        let z2 = normal_inv_cdf(T::one() - T::of(-1.0).exp() / k);
        std * ((T::one() - g) * z1 + g * z2)
    }
}

/// Confidence level `C = Φ[(S − S0)·√(L − 1) / √(1 − γ3·S + (γ4 − 1)·S²/4)]`
/// for the per-period Sharpe `S` of a series of length `L`.
pub fn deflated_confidence<T: Scalar>(s_k: &SharpeResult<T>, ctx: &DeflationContext<T>) -> Result<T> {
    deflated_confidence_against(s_k, ctx.s0())
}

/// As [`deflated_confidence`] with an explicit benchmark `S0`.
pub fn deflated_confidence_against<T: Scalar>(s_k: &SharpeResult<T>, s0: T) -> Result<T> {
    if s_k.n_periods < 2 {
        return Err(Error::Degenerate("need at least two periods"));
    }
    let s = s_k.per_period;
    let arg = T::one() - s_k.skewness * s + (s_k.kurtosis - T::one()) * s * s / T::of(4.0);
    if arg.is_nan() || arg <= T::zero() {
        return Err(Error::DeflationUndefined(arg.as_f64()));
    }
    let l = T::of_count(s_k.n_periods - 1);
    Ok(normal_cdf((s - s0) * l.sqrt() / arg.sqrt()))
}

/// Fills `deflated_confidence` on every report with a Sharpe ratio, using the
/// Sharpe ratios of all such reports as the trial set.
pub fn deflate_reports<T: Scalar>(reports: &mut [BacktestReport<T>]) -> Result<Option<DeflationContext<T>>> {
    let set: Vec<T> = reports
        .iter()
        .filter_map(|r| r.sharpe.map(|s| s.per_period))
        .collect();
    if set.is_empty() {
        return Ok(None);
    }
    let ctx = DeflationContext::new(set)?;
    let s0 = ctx.s0();
    for r in reports.iter_mut() {
        r.deflated_confidence = match &r.sharpe {
            Some(s) => deflated_confidence_against(s, s0).ok(),
            None => None,
        };
    }
    Ok(Some(ctx))
}

/// Passes iff `1 − C < threshold`; no confidence means fail.
pub fn passes_significance<T: Scalar>(confidence: Option<T>, threshold: f64) -> bool {
    confidence.is_some_and(|c| T::one() - c < T::of(threshold))
}

/// Flags every report and sets the displayed Sharpe, zero for failures.
pub fn significance_filter<T: Scalar>(reports: &mut [BacktestReport<T>], threshold: f64) {
    for r in reports.iter_mut() {
        let pass = passes_significance(r.deflated_confidence, threshold);
        r.significant = Some(pass);
        r.sharpe_display = if pass {
            r.sharpe.map(|s| s.annualized)
        } else {
            Some(T::zero())
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OlsFit<T: Scalar = f64> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    pub n: usize,
}

/// Univariate least squares of `y` on `x` with intercept.
///
/// `R² = 1 − SSR/SST`, clamped to `[0, 1]`; a constant `y` has `R² = 0`.
pub fn ols<T: Scalar>(y: &[T], x: &[T]) -> Result<OlsFit<T>> {
    if y.len() != x.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} responses, {} regressors",
            y.len(),
            x.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("need at least two observations"));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::Degenerate("regressor has zero variance"));
    }
    let mx = mean(x).expect("non-empty");
    let my = mean(y).expect("non-empty");
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for (&xi, &yi) in x.iter().zip(y) {
        sxx = sxx + (xi - mx) * (xi - mx);
        sxy = sxy + (xi - mx) * (yi - my);
    }
    if sxx == T::zero() {
        return Err(Error::Degenerate("regressor has zero variance"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if y.iter().all(|&v| v == y[0]) {
        T::zero()
    } else {
        let sst: T = y.iter().map(|&v| (v - my) * (v - my)).sum();
        let ssr: T = x
            .iter()
            .zip(y)
            .map(|(&xi, &yi)| {
                let e = yi - intercept - slope * xi;
                e * e
            })
            .sum();
        (T::one() - ssr / sst).max(T::zero()).min(T::one())
    };
    Ok(OlsFit {
        slope,
        intercept,
        r_squared,
        n: x.len(),
    })
}

/// R² of the univariate regression; needs at least three observations.
pub fn ols_r2<T: Scalar>(y: &[T], x: &[T]) -> Result<T> {
    if x.len() < 3 {
        return Err(Error::Degenerate("need at least three observations"));
    }
    ols(y, x).map(|f| f.r_squared)
}
