//! Multivariate local-linear regression and product-kernel density
//! estimation.
//!
//! The engine fits weighted least squares of the response on
//! `(1, x - query)` with product-kernel weights, so the intercept estimates
//! the conditional mean at the query and the slopes estimate its partial
//! derivatives. Local-linear fits reproduce affine targets exactly at any
//! kernel and bandwidth; that exactness is what makes the derivative-based
//! recovery downstream unbiased in the state coordinates.

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, SymMatrix};
use crate::scalar::{count, lit, Scalar};

/// Reciprocal-condition threshold below which the local normal equations
/// are considered ill-posed and a ridge term is added.
pub const RCOND_THRESHOLD: f64 = 1e-10;

/// Ridge magnitude, as a fraction of the average diagonal of the local
/// normal equations.
pub const RIDGE_SCALE: f64 = 1e-8;

/// Row-major data matrix: `rows` observations of `cols` regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct Design<T> {
    values: Vec<T>,
    rows: usize,
    cols: usize,
}

impl<T: Scalar> Design<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Data(format!(
                    "ragged design: row {i} has {} entries, expected {d}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Ok(Self { values, rows: n, cols: d })
    }

    /// Builds a design from column slices of equal length.
    pub fn from_columns(cols: &[&[T]]) -> Result<Self> {
        let d = cols.len();
        let n = cols.first().map_or(0, |c| c.len());
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::Data("columns have unequal lengths".into()));
        }
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            for c in cols {
                values.push(c[i]);
            }
        }
        Ok(Self { values, rows: n, cols: d })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// Per-column sample standard deviation.
    pub fn column_sds(&self) -> Vec<T> {
        let n = count::<T>(self.rows);
        (0..self.cols)
            .map(|j| {
                let mut mean = T::zero();
                for i in 0..self.rows {
                    mean += self.row(i)[j];
                }
                mean = mean / n;
                let mut ss = T::zero();
                for i in 0..self.rows {
                    let d = self.row(i)[j] - mean;
                    ss += d * d;
                }
                (ss / (n - T::one()).max(T::one())).sqrt()
            })
            .collect()
    }

    fn check_finite(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("design contains non-finite values".into()));
        }
        Ok(())
    }
}

/// Smoothing kernel shape. Weights are normalized to one at the query
/// point; the density estimator applies the proper integral normalization
/// separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// Parabolic kernel with compact support: zero outside one bandwidth,
    /// which makes the effective sample size an honest local count scale.
    Epanechnikov,
    Gaussian,
}

impl Kernel {
    /// Unit-peak weight at standardized distance `u`.
    #[inline]
    pub fn weight<T: Scalar>(&self, u: T) -> T {
        match self {
            Kernel::Epanechnikov => {
                let v = T::one() - u * u;
                if v > T::zero() {
                    v
                } else {
                    T::zero()
                }
            }
            Kernel::Gaussian => (-u * u / lit::<T>(2.0)).exp(),
        }
    }

    /// Density-normalized kernel value at standardized distance `u`
    /// (integrates to one over the real line).
    #[inline]
    pub fn density<T: Scalar>(&self, u: T) -> T {
        match self {
            Kernel::Epanechnikov => {
                let v = T::one() - u * u;
                if v > T::zero() {
                    lit::<T>(0.75) * v
                } else {
                    T::zero()
                }
            }
            Kernel::Gaussian => {
                (-u * u / lit::<T>(2.0)).exp() / lit::<T>((2.0 * std::f64::consts::PI).sqrt())
            }
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            "gaussian" => Ok(Kernel::Gaussian),
            other => Err(Error::Config(format!(
                "unknown kernel `{other}` (expected epanechnikov or gaussian)"
            ))),
        }
    }
}

/// How fit conditioning was handled at a query point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionFlag {
    Ok,
    /// The local normal equations were near-singular; a small ridge was
    /// added. Never silent: slope estimates are not trustworthy.
    RidgeApplied,
    /// Too little local data; no estimate produced.
    Trimmed,
}

impl ConditionFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionFlag::Ok => "ok",
            ConditionFlag::RidgeApplied => "ridge_applied",
            ConditionFlag::Trimmed => "trimmed",
        }
    }
}

/// Result of one local-linear fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherFit<T> {
    /// Fitted conditional mean at the query; absent when trimmed.
    pub estimate: Option<T>,
    /// Partial derivative per regressor; empty when trimmed.
    pub gradient: Vec<T>,
    /// Sum of kernel weights at the query.
    pub effective_sample_size: T,
    pub condition_flag: ConditionFlag,
}

/// Bandwidth selection rule.
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthRule<T> {
    /// Per-dimension `1.06 * sd(x_j) * n^(-1/(4+d))`.
    RuleOfThumb,
    /// User-fixed per-dimension bandwidths.
    Fixed(Vec<T>),
    /// Leave-one-out cross-validation over a 9-point multiplicative grid
    /// `{0.25, ..., 4} x rule-of-thumb`, scored on a subsample.
    LooCv { cv_subsample_size: usize },
}

/// Bandwidth specification for one regression stage.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSpec<T> {
    pub rule: BandwidthRule<T>,
    pub kernel: Kernel,
}

impl<T: Scalar> Default for BandwidthSpec<T> {
    fn default() -> Self {
        Self { rule: BandwidthRule::RuleOfThumb, kernel: Kernel::Epanechnikov }
    }
}

fn rule_of_thumb<T: Scalar>(x: &Design<T>) -> Vec<T> {
    let n = x.n_rows() as f64;
    let d = x.n_cols() as f64;
    let factor = lit::<T>(1.06 * n.powf(-1.0 / (4.0 + d)));
    x.column_sds()
        .into_iter()
        .map(|sd| {
            let h = sd * factor;
            // Guard against zero-variance columns.
            if h > T::zero() {
                h
            } else {
                lit::<T>(1e-3)
            }
        })
        .collect()
}

/// Selects per-dimension bandwidths for regressing `y` on `x`.
pub fn select_bandwidth<T: Scalar>(
    x: &Design<T>,
    y: &[T],
    spec: &BandwidthSpec<T>,
) -> Result<Vec<T>> {
    match &spec.rule {
        BandwidthRule::Fixed(h) => {
            if h.len() != x.n_cols() {
                return Err(Error::Invalid(format!(
                    "fixed bandwidth has {} entries for {} regressors",
                    h.len(),
                    x.n_cols()
                )));
            }
            if h.iter().any(|&v| !(v > T::zero())) {
                return Err(Error::Invalid("fixed bandwidths must be positive".into()));
            }
            Ok(h.clone())
        }
        BandwidthRule::RuleOfThumb => {
            if x.n_rows() < 20 {
                return Err(Error::InsufficientData(format!(
                    "rule-of-thumb bandwidth needs at least 20 rows, got {}",
                    x.n_rows()
                )));
            }
            Ok(rule_of_thumb(x))
        }
        BandwidthRule::LooCv { cv_subsample_size } => {
            if x.n_rows() < 50 {
                return Err(Error::InsufficientData(format!(
                    "cross-validated bandwidth needs at least 50 rows, got {}",
                    x.n_rows()
                )));
            }
            if y.len() != x.n_rows() {
                return Err(Error::Data("response length does not match design".into()));
            }
            let base = rule_of_thumb(x);
            let m = (*cv_subsample_size).clamp(1, x.n_rows());
            // Deterministic evenly spaced subsample.
            let stride = (x.n_rows() / m).max(1);
            let subsample: Vec<usize> = (0..x.n_rows()).step_by(stride).take(m).collect();

            // Multiplicative grid 2^(-2), 2^(-1.5), ..., 2^2.
            let multipliers: Vec<f64> =
                (0..9).map(|k| 2f64.powf(-2.0 + 0.5 * k as f64)).collect();
            let mut errors = Vec::with_capacity(multipliers.len());
            for &mult in &multipliers {
                let h: Vec<T> = base.iter().map(|&b| b * lit::<T>(mult)).collect();
                let mut sse = T::zero();
                let mut used = 0usize;
                for &i in &subsample {
                    if let Some(pred) = loo_prediction(x, y, i, &h, spec.kernel) {
                        let e = pred - y[i];
                        sse += e * e;
                        used += 1;
                    } else {
                        // A bandwidth that cannot even fit locally is
                        // penalized by the worst possible score.
                        sse = T::infinity();
                        break;
                    }
                }
                errors.push(if used == 0 { T::infinity() } else { sse });
            }
            let min_err = errors.iter().copied().fold(T::infinity(), T::min);
            if !min_err.is_finite() {
                return Err(Error::Numerical(
                    "cross-validation failed at every candidate bandwidth".into(),
                ));
            }
            // Ties (and near-ties, which exact-fit targets produce) break
            // toward the largest bandwidth: lower variance at equal error.
            let tie_band = min_err * lit::<T>(1e-9) + lit::<T>(1e-300);
            let chosen = multipliers
                .iter()
                .zip(&errors)
                .rev()
                .find(|(_, &e)| e <= min_err + tie_band)
                .map(|(&m, _)| m)
                .unwrap_or(1.0);
            Ok(base.iter().map(|&b| b * lit::<T>(chosen)).collect())
        }
    }
}

/// Leave-one-out local-linear prediction at row `i`, or `None` when the
/// local fit is unusable.
fn loo_prediction<T: Scalar>(
    x: &Design<T>,
    y: &[T],
    skip: usize,
    bandwidths: &[T],
    kernel: Kernel,
) -> Option<T> {
    let fit = fit_local_linear_impl(x, y, x.row(skip), bandwidths, kernel, T::zero(), Some(skip))
        .ok()?;
    fit.estimate
}

/// Local-linear fit of `y` on `x` at `query`.
///
/// The intercept of the weighted regression on `(1, x - query)` is the
/// conditional-mean estimate; the slopes are its partial derivatives. When
/// the weighted normal equations have reciprocal condition number below
/// [`RCOND_THRESHOLD`], a ridge of [`RIDGE_SCALE`] times the mean diagonal
/// is added and the fit is flagged. When the effective sample size falls
/// below `trim_threshold`, the fit is trimmed and carries no estimate.
pub fn fit_local_linear<T: Scalar>(
    x: &Design<T>,
    y: &[T],
    query: &[T],
    bandwidths: &[T],
    kernel: Kernel,
    trim_threshold: T,
) -> Result<SmootherFit<T>> {
    fit_local_linear_impl(x, y, query, bandwidths, kernel, trim_threshold, None)
}

fn fit_local_linear_impl<T: Scalar>(
    x: &Design<T>,
    y: &[T],
    query: &[T],
    bandwidths: &[T],
    kernel: Kernel,
    trim_threshold: T,
    skip: Option<usize>,
) -> Result<SmootherFit<T>> {
    let n = x.n_rows();
    let d = x.n_cols();
    if n <= d + 1 {
        return Err(Error::InsufficientData(format!(
            "local-linear fit needs more than {} rows for {d} regressors, got {n}",
            d + 1
        )));
    }
    if y.len() != n {
        return Err(Error::Data(format!("response has {} entries for {n} rows", y.len())));
    }
    if query.len() != d || bandwidths.len() != d {
        return Err(Error::Invalid(format!(
            "query and bandwidths must have {d} entries"
        )));
    }
    if bandwidths.iter().any(|&h| !(h > T::zero()) || !h.is_finite()) {
        return Err(Error::Invalid("bandwidths must be positive and finite".into()));
    }
    x.check_finite()?;
    if y.iter().any(|v| !v.is_finite()) || query.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("response or query contains non-finite values".into()));
    }

    // Accumulate the weighted normal equations in bandwidth-standardized
    // coordinates z_j = (x_j - q_j) / h_j; this keeps the system well
    // scaled, and slopes are mapped back by 1/h_j afterwards.
    let p = d + 1;
    let mut moment = SymMatrix::<T>::zeros(p);
    let mut rhs = vec![T::zero(); p];
    let mut ess = T::zero();
    let mut z = vec![T::zero(); p];
    for i in 0..n {
        if skip == Some(i) {
            continue;
        }
        let row = x.row(i);
        let mut w = T::one();
        for j in 0..d {
            let u = (row[j] - query[j]) / bandwidths[j];
            w = w * kernel.weight(u);
            if w == T::zero() {
                break;
            }
            z[j + 1] = u;
        }
        if w == T::zero() {
            continue;
        }
        z[0] = T::one();
        ess += w;
        let wy = w * y[i];
        for a in 0..p {
            rhs[a] += z[a] * wy;
            let wza = w * z[a];
            for b in a..p {
                moment.add(a, b, wza * z[b]);
            }
        }
    }
    // Mirror the upper triangle.
    for a in 0..p {
        for b in (a + 1)..p {
            let v = moment.get(a, b);
            moment.set(b, a, v);
        }
    }

    if ess < trim_threshold || ess <= T::zero() {
        return Ok(SmootherFit {
            estimate: None,
            gradient: Vec::new(),
            effective_sample_size: ess,
            condition_flag: ConditionFlag::Trimmed,
        });
    }

    let mut flag = ConditionFlag::Ok;
    let mut eigen = sym_eigen(&moment);
    if eigen.reciprocal_condition() < lit::<T>(RCOND_THRESHOLD) {
        let ridge = lit::<T>(RIDGE_SCALE) * moment.trace() / count::<T>(p);
        moment.add_diagonal(ridge);
        eigen = sym_eigen(&moment);
        flag = ConditionFlag::RidgeApplied;
    }
    let coeffs = eigen.solve(&rhs, T::zero());
    let gradient = (0..d).map(|j| coeffs[j + 1] / bandwidths[j]).collect();
    Ok(SmootherFit {
        estimate: Some(coeffs[0]),
        gradient,
        effective_sample_size: ess,
        condition_flag: flag,
    })
}

/// Product-kernel density estimate at `query`.
pub fn estimate_density<T: Scalar>(
    x: &Design<T>,
    query: &[T],
    bandwidths: &[T],
    kernel: Kernel,
) -> Result<T> {
    let n = x.n_rows();
    let d = x.n_cols();
    if n <= d + 1 {
        return Err(Error::InsufficientData(format!(
            "density estimate needs more than {} rows, got {n}",
            d + 1
        )));
    }
    if query.len() != d || bandwidths.len() != d {
        return Err(Error::Invalid(format!("query and bandwidths must have {d} entries")));
    }
    if bandwidths.iter().any(|&h| !(h > T::zero())) {
        return Err(Error::Invalid("bandwidths must be positive".into()));
    }
    x.check_finite()?;
    if query.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("query contains non-finite values".into()));
    }
    let mut total = T::zero();
    for i in 0..n {
        let row = x.row(i);
        let mut k = T::one();
        for j in 0..d {
            let u = (row[j] - query[j]) / bandwidths[j];
            k = k * kernel.density(u) / bandwidths[j];
            if k == T::zero() {
                break;
            }
        }
        total += k;
    }
    Ok(total / count::<T>(n))
}
