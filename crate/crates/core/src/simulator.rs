//! Synthetic cross-sections of profit-maximizing firms.
//!
//! Each firm draws predetermined state inputs, a latent technology index,
//! prices, and an idiosyncratic shock, then chooses its flexible inputs to
//! maximize expected profit. The expected-profit problem has a closed-form
//! solution in logs ([`solve_flexible_inputs`]); an independent grid-plus-
//! Newton maximizer ([`brute_force_profit_maximizer`]) serves as the test
//! oracle for that solution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dataset::{Dataset, FirmRecord, HiddenTruth, PriceVector};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, SymMatrix};
use crate::scalar::{lit, Scalar};
use crate::technology::{CoefficientVector, Omega, OmegaSupport, TechnologySpec};

/// State of one firm at choice time: log state inputs, latent index, and
/// the prices it faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmState<T> {
    pub state_logs: Vec<T>,
    pub omega: Omega<T>,
    pub prices: PriceVector<T>,
}

impl<T: Scalar> FirmState<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.prices.all_positive() {
            return Err(Error::Invalid("all prices must be strictly positive".into()));
        }
        Ok(())
    }
}

/// Mean of the exponentiated shock, `exp(sigma^2 / 2)`, for a centered
/// normal shock with standard deviation `eta_sigma`.
pub fn expected_exp_eta<T: Scalar>(eta_sigma: T) -> T {
    assert!(eta_sigma >= T::zero(), "shock standard deviation must be nonnegative");
    (eta_sigma * eta_sigma / lit::<T>(2.0)).exp()
}

/// Log-output level `sum(beta_state * state) + sum(beta_flex * m) + beta_0`
/// at the given flexible input choice.
pub fn log_output_level<T: Scalar>(
    state: &FirmState<T>,
    betas: &CoefficientVector<T>,
    flex_logs: &[T],
) -> T {
    let mut psi = betas.beta_0;
    for (b, s) in betas.state.iter().zip(&state.state_logs) {
        psi = psi + *b * *s;
    }
    for (b, m) in betas.flex.iter().zip(flex_logs) {
        psi = psi + *b * *m;
    }
    psi
}

/// Expected profit at a candidate flexible input choice (inputs in logs).
pub fn expected_profit<T: Scalar>(
    state: &FirmState<T>,
    betas: &CoefficientVector<T>,
    flex_logs: &[T],
    e_exp_eta: T,
) -> T {
    let revenue = state.prices.output * log_output_level(state, betas, flex_logs).exp() * e_exp_eta;
    let cost: T = state
        .prices
        .flex
        .iter()
        .zip(flex_logs)
        .map(|(&p, &m)| p * m.exp())
        .sum();
    revenue - cost
}

/// Closed-form log flexible input choice of the expected-profit problem.
///
/// With `u = ln p_y + sum(beta_state * state) + beta_0 + ln E[exp eta]`,
/// `c_i = ln(beta_i / p_i)`, and `D = 1 - sum(beta_flex)`, the optimum is
/// `m_i = c_i + (u + sum_j beta_j c_j) / D`, which zeroes every marginal
/// condition `p_y beta_i exp(Psi) E[exp eta] = p_i exp(m_i)`.
pub fn solve_flexible_inputs<T: Scalar>(
    state: &FirmState<T>,
    betas: &CoefficientVector<T>,
    e_exp_eta: T,
) -> Result<Vec<T>> {
    state.validate()?;
    if betas.flex.len() != state.prices.flex.len() {
        return Err(Error::Invalid(format!(
            "{} flexible coefficients but {} flexible prices",
            betas.flex.len(),
            state.prices.flex.len()
        )));
    }
    if betas.state.len() != state.state_logs.len() {
        return Err(Error::Invalid(format!(
            "{} state coefficients but {} state inputs",
            betas.state.len(),
            state.state_logs.len()
        )));
    }
    let slack = T::one() - betas.flex_sum();
    if !(slack > T::zero()) {
        return Err(Error::Invalid(format!(
            "flexible elasticities sum to {} >= 1; no finite input choice exists",
            betas.flex_sum()
        )));
    }
    for &b in &betas.flex {
        if !(b > T::zero()) {
            return Err(Error::Invalid("flexible elasticities must be positive".into()));
        }
    }
    let mut u = state.prices.output.ln() + betas.beta_0 + e_exp_eta.ln();
    for (b, s) in betas.state.iter().zip(&state.state_logs) {
        u = u + *b * *s;
    }
    let c: Vec<T> = betas
        .flex
        .iter()
        .zip(&state.prices.flex)
        .map(|(&b, &p)| (b / p).ln())
        .collect();
    let weighted: T = betas.flex.iter().zip(&c).map(|(&b, &ci)| b * ci).sum();
    let common = (u + weighted) / slack;
    Ok(c.into_iter().map(|ci| ci + common).collect())
}

/// Relative residual of the marginal condition for flexible input
/// `input_index` at the candidate choice `flex_logs`:
/// `(p_y beta_i exp(Psi) E[exp eta] - p_i exp(m_i)) / (p_i exp(m_i))`.
pub fn foc_residual<T: Scalar>(
    state: &FirmState<T>,
    betas: &CoefficientVector<T>,
    flex_logs: &[T],
    e_exp_eta: T,
    input_index: usize,
) -> T {
    let psi = log_output_level(state, betas, flex_logs);
    let marginal_value = state.prices.output * betas.flex[input_index] * psi.exp() * e_exp_eta;
    let marginal_cost = state.prices.flex[input_index] * flex_logs[input_index].exp();
    (marginal_value - marginal_cost) / marginal_cost
}

/// Settings for the brute-force maximizer.
#[derive(Debug, Clone)]
pub struct OracleOptions<T> {
    /// Log-input search range, per input.
    pub grid_min: T,
    pub grid_max: T,
    /// Grid points per input dimension.
    pub grid_points: usize,
    /// Convergence tolerance on the maximum absolute log marginal-condition
    /// residual.
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Scalar> Default for OracleOptions<T> {
    fn default() -> Self {
        Self {
            grid_min: lit(-30.0),
            grid_max: lit(30.0),
            grid_points: 61,
            tolerance: lit(1e-13),
            max_iterations: 100,
        }
    }
}

/// Maximizes the expected-profit objective directly: coarse grid search
/// over log inputs, then Newton iterations on the marginal-condition
/// system. Serves as the independent oracle for
/// [`solve_flexible_inputs`].
pub fn brute_force_profit_maximizer<T: Scalar>(
    state: &FirmState<T>,
    betas: &CoefficientVector<T>,
    e_exp_eta: T,
    options: &OracleOptions<T>,
) -> Result<Vec<T>> {
    state.validate()?;
    let q = betas.flex.len();
    if !(betas.flex_sum() < T::one()) {
        return Err(Error::Invalid(
            "flexible elasticities must sum below one for a finite optimum".into(),
        ));
    }

    // Grid stage: locate the basin of the optimum.
    let n = options.grid_points.max(2);
    let step = (options.grid_max - options.grid_min) / crate::scalar::count::<T>(n - 1);
    let mut best = vec![T::zero(); q];
    let mut best_value = T::neg_infinity();
    let mut indices = vec![0usize; q];
    let mut candidate = vec![T::zero(); q];
    loop {
        for (k, &i) in indices.iter().enumerate() {
            candidate[k] = options.grid_min + step * crate::scalar::count::<T>(i);
        }
        let value = expected_profit(state, betas, &candidate, e_exp_eta);
        if value > best_value {
            best_value = value;
            best.copy_from_slice(&candidate);
        }
        // Odometer increment over the q-dimensional grid.
        let mut dim = 0;
        loop {
            if dim == q {
                break;
            }
            indices[dim] += 1;
            if indices[dim] < n {
                break;
            }
            indices[dim] = 0;
            dim += 1;
        }
        if dim == q {
            break;
        }
    }

    // Newton stage on the log marginal conditions
    // g_i(m) = u + c_i + sum_j b_j m_j - m_i, with Jacobian b_j - delta_ij.
    let mut u = state.prices.output.ln() + betas.beta_0 + e_exp_eta.ln();
    for (b, s) in betas.state.iter().zip(&state.state_logs) {
        u = u + *b * *s;
    }
    let c: Vec<T> = betas
        .flex
        .iter()
        .zip(&state.prices.flex)
        .map(|(&b, &p)| (b / p).ln())
        .collect();
    let residual = |m: &[T]| -> Vec<T> {
        let total: T = betas.flex.iter().zip(m).map(|(&b, &mi)| b * mi).sum();
        (0..q).map(|i| u + c[i] + total - m[i]).collect()
    };

    let mut m = best;
    for _ in 0..options.max_iterations {
        let g = residual(&m);
        let max_res = g.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        if max_res <= options.tolerance {
            return Ok(m);
        }
        // Solve (J) delta = -g with J = ones * b' - I, via Sherman-Morrison:
        // J^{-1} v = -(v + ones * (b' v) / (1 - sum b)).
        let slack = T::one() - betas.flex_sum();
        let dot: T = betas.flex.iter().zip(&g).map(|(&b, &gi)| b * gi).sum();
        for i in 0..q {
            let delta = g[i] + dot / slack;
            m[i] = m[i] + delta;
        }
    }
    let g = residual(&m);
    let max_res = g.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if max_res <= options.tolerance * lit::<T>(1e3) {
        return Ok(m);
    }
    Err(Error::Numerical(format!(
        "profit maximizer did not converge: residual {max_res} after {} iterations",
        options.max_iterations
    )))
}

/// Marginal distribution of one log state input, truncated to a box.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDim<T> {
    pub mean: T,
    pub sd: T,
    pub min: T,
    pub max: T,
}

impl<T: Scalar> StateDim<T> {
    pub fn standard() -> Self {
        Self { mean: T::zero(), sd: T::one(), min: lit(-2.0), max: lit(2.0) }
    }
}

/// Joint distribution of the log state inputs: a multivariate normal with
/// common pairwise correlation, truncated to the per-dimension boxes.
/// The truncation keeps the joint density bounded on a compact set.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution<T> {
    pub dims: Vec<StateDim<T>>,
    pub correlation: T,
}

impl<T: Scalar> StateDistribution<T> {
    pub fn standard(n: usize) -> Self {
        Self { dims: vec![StateDim::standard(); n], correlation: lit(0.3) }
    }
}

/// Price-generating process.
#[derive(Debug, Clone, PartialEq)]
pub enum PriceModel<T> {
    /// All prices identically one (the default). Input costs then equal
    /// input quantities, which the share regressions rely on.
    Unit,
    /// Independent lognormal prices with the given log standard
    /// deviations. `observed` controls whether the price columns are
    /// exposed to the estimator.
    LogNormal { sigma_output: T, sigma_flex: T, observed: bool },
}

/// Optional coupling between the state draws and the latent index,
/// mimicking states chosen one period before the index realizes: both
/// react to a shared previous-period index, and the current index mean
/// reverts toward it, so conditional densities stay non-degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct LagCoupling<T> {
    /// Persistence of the latent index on its previous value, in [0, 1).
    pub persistence: T,
    /// Standard deviation of the index innovation.
    pub innovation_sd: T,
    /// Shift of each state mean per unit of the centered previous index.
    pub state_shift: Vec<T>,
}

/// Full description of one simulated cross-section.
#[derive(Debug, Clone)]
pub struct SimulationConfig<T> {
    pub technology: TechnologySpec<T>,
    pub n_firms: usize,
    pub states: StateDistribution<T>,
    pub prices: PriceModel<T>,
    pub eta_sigma: T,
    pub lag_coupling: Option<LagCoupling<T>>,
    pub seed: u64,
}

impl<T: Scalar> SimulationConfig<T> {
    /// Defaults for a given technology: standard truncated-normal states,
    /// unit prices, shock s.d. 0.1, independent states and index.
    pub fn new(technology: TechnologySpec<T>, n_firms: usize, seed: u64) -> Self {
        let n_states = technology.variant().n_states();
        Self {
            technology,
            n_firms,
            states: StateDistribution::standard(n_states),
            prices: PriceModel::Unit,
            eta_sigma: lit(0.1),
            lag_coupling: None,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_firms == 0 {
            return Err(Error::Invalid("n_firms must be at least 1".into()));
        }
        if self.eta_sigma < T::zero() {
            return Err(Error::Invalid("eta_sigma must be nonnegative".into()));
        }
        if self.states.dims.len() != self.technology.variant().n_states() {
            return Err(Error::Invalid(format!(
                "state distribution has {} dimensions but variant {} needs {}",
                self.states.dims.len(),
                self.technology.variant(),
                self.technology.variant().n_states()
            )));
        }
        for (i, d) in self.states.dims.iter().enumerate() {
            if !(d.sd > T::zero()) || !(d.min < d.max) {
                return Err(Error::Invalid(format!("state dimension {i} is degenerate")));
            }
        }
        if let Some(lag) = &self.lag_coupling {
            if lag.state_shift.len() != self.states.dims.len() {
                return Err(Error::Invalid(
                    "lag coupling must shift every state dimension".into(),
                ));
            }
            if !(lag.persistence >= T::zero() && lag.persistence < T::one()) {
                return Err(Error::Invalid("lag persistence must lie in [0, 1)".into()));
            }
        }
        let report = self.technology.validate_assumptions(1001);
        if !report.all_passed() {
            let failed: Vec<&str> = report
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
                .collect();
            return Err(Error::Invalid(format!(
                "technology fails structural validation: {}",
                failed.join(", ")
            )));
        }
        Ok(())
    }
}

/// RNG for one firm: an independent, scheduler-invariant substream.
fn firm_rng(seed: u64, firm: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(firm.wrapping_add(1));
    rng
}

fn sample_truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, min: f64, max: f64) -> f64 {
    let dist = Normal::new(mean, sd).expect("positive standard deviation");
    for _ in 0..10_000 {
        let v = dist.sample(rng);
        if v >= min && v <= max {
            return v;
        }
    }
    // The box carries almost no mass; fall back to a uniform draw in it.
    min + (max - min) * rng.gen::<f64>()
}

/// Draws correlated state inputs via the Cholesky factor of the
/// equicorrelation matrix, rejecting draws outside the box.
fn sample_states<T: Scalar>(
    rng: &mut ChaCha8Rng,
    dist: &StateDistribution<T>,
    mean_shift: &[f64],
) -> Result<Vec<f64>> {
    let d = dist.dims.len();
    let rho = dist.correlation.to_f64().unwrap_or(0.0);
    if d == 1 || rho == 0.0 {
        return Ok(dist
            .dims
            .iter()
            .enumerate()
            .map(|(i, dim)| {
                sample_truncated_normal(
                    rng,
                    dim.mean.to_f64().unwrap() + mean_shift[i],
                    dim.sd.to_f64().unwrap(),
                    dim.min.to_f64().unwrap(),
                    dim.max.to_f64().unwrap(),
                )
            })
            .collect());
    }
    let mut corr = SymMatrix::<f64>::zeros(d);
    for i in 0..d {
        for j in 0..d {
            corr.set(i, j, if i == j { 1.0 } else { rho });
        }
    }
    let l = cholesky(&corr).ok_or_else(|| {
        Error::Invalid(format!("state correlation {rho} is not positive definite for {d} dims"))
    })?;
    let normal = Normal::new(0.0, 1.0).unwrap();
    'attempt: for _ in 0..10_000 {
        let z: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
        let mut out = vec![0.0; d];
        for i in 0..d {
            let mut v = 0.0;
            for j in 0..=i {
                v += l[i * d + j] * z[j];
            }
            let dim = &dist.dims[i];
            let x = dim.mean.to_f64().unwrap() + mean_shift[i] + dim.sd.to_f64().unwrap() * v;
            if x < dim.min.to_f64().unwrap() || x > dim.max.to_f64().unwrap() {
                continue 'attempt;
            }
            out[i] = x;
        }
        return Ok(out);
    }
    Err(Error::Numerical(
        "state rejection sampling failed: the box carries almost no probability mass".into(),
    ))
}

/// Uniform draw of the latent index over its support.
fn sample_omega<T: Scalar>(rng: &mut ChaCha8Rng, support: OmegaSupport<T>) -> Omega<T> {
    let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| lo + (hi - lo) * rng.gen::<f64>();
    match support {
        OmegaSupport::Interval { min, max } => {
            let v = uniform(rng, min.to_f64().unwrap(), max.to_f64().unwrap());
            Omega::Scalar(lit(v))
        }
        OmegaSupport::Box { a_min, a_max, b_min, b_max } => {
            let a = uniform(rng, a_min.to_f64().unwrap(), a_max.to_f64().unwrap());
            let b = uniform(rng, b_min.to_f64().unwrap(), b_max.to_f64().unwrap());
            Omega::Pair(lit(a), lit(b))
        }
    }
}

/// Simulates one cross-section. Deterministic given the config seed:
/// firms use index-keyed RNG substreams and records are emitted in firm
/// order regardless of the parallel schedule.
pub fn simulate_cross_section<T: Scalar>(config: &SimulationConfig<T>) -> Result<Dataset<T>> {
    config.validate()?;
    let variant = config.technology.variant();
    let n_flex = variant.n_flex();
    let e_exp_eta = expected_exp_eta(config.eta_sigma);
    let observe_prices = match config.prices {
        PriceModel::Unit => false,
        PriceModel::LogNormal { observed, .. } => observed,
    };

    let firms: Result<Vec<FirmRecord<T>>> = (0..config.n_firms as u64)
        .into_par_iter()
        .map(|firm_id| -> Result<FirmRecord<T>> {
            let mut rng = firm_rng(config.seed, firm_id);

            // Draw order is fixed: previous index (if coupled), states,
            // current index, prices, shock.
            let (omega, mean_shift) = match (&config.lag_coupling, config.technology.support()) {
                (Some(lag), OmegaSupport::Interval { min, max }) => {
                    let (lo, hi) = (min.to_f64().unwrap(), max.to_f64().unwrap());
                    let prev = lo + (hi - lo) * rng.gen::<f64>();
                    let mid = 0.5 * (lo + hi);
                    let shift: Vec<f64> = lag
                        .state_shift
                        .iter()
                        .map(|s| s.to_f64().unwrap() * (prev - mid))
                        .collect();
                    let rho = lag.persistence.to_f64().unwrap();
                    let sd = lag.innovation_sd.to_f64().unwrap().max(1e-12);
                    let v = sample_truncated_normal(&mut rng, mid + rho * (prev - mid), sd, lo, hi);
                    (Omega::Scalar(lit(v)), shift)
                }
                _ => {
                    let shift = vec![0.0; config.states.dims.len()];
                    let omega = sample_omega::<T>(&mut rng, config.technology.support());
                    (omega, shift)
                }
            };
            let state_logs_f64 = sample_states(&mut rng, &config.states, &mean_shift)?;
            let state_logs: Vec<T> = state_logs_f64.iter().map(|&v| lit(v)).collect();

            let prices = match config.prices {
                PriceModel::Unit => PriceVector::unit(n_flex),
                PriceModel::LogNormal { sigma_output, sigma_flex, .. } => {
                    let out_dist = Normal::new(0.0, sigma_output.to_f64().unwrap()).map_err(
                        |_| Error::Invalid("output price log-sd must be nonnegative".into()),
                    )?;
                    let flex_dist = Normal::new(0.0, sigma_flex.to_f64().unwrap()).map_err(
                        |_| Error::Invalid("flexible price log-sd must be nonnegative".into()),
                    )?;
                    PriceVector {
                        output: lit(out_dist.sample(&mut rng).exp()),
                        flex: (0..n_flex)
                            .map(|_| lit(flex_dist.sample(&mut rng).exp()))
                            .collect(),
                    }
                }
            };

            let eta: T = if config.eta_sigma > T::zero() {
                let dist = Normal::new(0.0, config.eta_sigma.to_f64().unwrap()).unwrap();
                lit(dist.sample(&mut rng))
            } else {
                T::zero()
            };

            let betas = config.technology.eval_betas(omega)?;
            let state = FirmState { state_logs: state_logs.clone(), omega, prices: prices.clone() };
            let flex_logs = solve_flexible_inputs(&state, &betas, e_exp_eta)?;

            let log_output = log_output_level(&state, &betas, &flex_logs) + eta;
            let output_value = prices.output * log_output.exp();
            let flex_costs: Vec<T> = prices
                .flex
                .iter()
                .zip(&flex_logs)
                .map(|(&p, &m)| p * m.exp())
                .collect();

            Ok(FirmRecord {
                firm_id,
                output_value,
                flex_costs,
                state_logs,
                prices: observe_prices.then(|| prices.clone()),
                truth: Some(HiddenTruth {
                    omega,
                    eta,
                    coefficients: betas,
                    flex_logs,
                    prices,
                    expected_exp_eta: e_exp_eta,
                }),
            })
        })
        .collect();

    Ok(Dataset::new(variant, firms?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::technology::test_fixtures::affine_reference;
    use crate::technology::Coefficient;
    use approx::assert_relative_eq;

    fn unit_state(omega: f64) -> FirmState<f64> {
        FirmState {
            state_logs: vec![0.0, 0.0],
            omega: Omega::Scalar(omega),
            prices: PriceVector::unit(2),
        }
    }

    #[test]
    fn expected_exp_eta_reference_values() {
        assert_eq!(expected_exp_eta(0.0), 1.0);
        assert_relative_eq!(expected_exp_eta(1.0), 1.6487212707001282, epsilon = 1e-12);
        assert_relative_eq!(expected_exp_eta(0.2), 1.0202013400267558, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_matches_brute_force_at_reference_point() {
        let tech = affine_reference();
        let state = unit_state(0.5);
        let betas = tech.eval_betas(Omega::Scalar(0.5)).unwrap();
        let closed = solve_flexible_inputs(&state, &betas, 1.0).unwrap();
        let oracle =
            brute_force_profit_maximizer(&state, &betas, 1.0, &OracleOptions::default()).unwrap();
        for (c, o) in closed.iter().zip(&oracle) {
            assert_relative_eq!(c, o, epsilon = 1e-8);
        }
    }

    #[test]
    fn symmetric_parameters_give_symmetric_inputs() {
        let betas = CoefficientVector {
            state: vec![0.0, 0.0],
            flex: vec![0.25, 0.25],
            beta_0: 0.0,
        };
        let state = unit_state(0.0);
        let closed = solve_flexible_inputs(&state, &betas, 1.0).unwrap();
        assert_relative_eq!(closed[0], closed[1], epsilon = 1e-14);
        let oracle =
            brute_force_profit_maximizer(&state, &betas, 1.0, &OracleOptions::default()).unwrap();
        assert_relative_eq!(oracle[0], oracle[1], epsilon = 1e-8);
    }

    #[test]
    fn output_price_enters_through_the_slack_factor() {
        // With flexible elasticities summing to 0.5, doubling the output
        // price must raise each log input by exactly 2 ln 2.
        let betas = CoefficientVector {
            state: vec![0.1, 0.2],
            flex: vec![0.3, 0.2],
            beta_0: 0.4,
        };
        let mut state = unit_state(0.0);
        state.state_logs = vec![0.7, -0.3];
        let base = solve_flexible_inputs(&state, &betas, 1.2).unwrap();
        state.prices.output = 2.0;
        let doubled = solve_flexible_inputs(&state, &betas, 1.2).unwrap();
        for (b, d) in base.iter().zip(&doubled) {
            assert_relative_eq!(d - b, 2.0 * std::f64::consts::LN_2, epsilon = 1e-12);
        }
        // Cross-check against the independent maximizer at the new price.
        let oracle =
            brute_force_profit_maximizer(&state, &betas, 1.2, &OracleOptions::default()).unwrap();
        for (c, o) in doubled.iter().zip(&oracle) {
            assert_relative_eq!(c, o, epsilon = 1e-8);
        }
    }

    #[test]
    fn foc_residual_zero_at_solution_positive_off_solution() {
        let betas = CoefficientVector {
            state: vec![0.0, 0.0],
            flex: vec![0.4, 0.2],
            beta_0: 0.0,
        };
        let state = unit_state(0.0);
        let m = solve_flexible_inputs(&state, &betas, 1.0).unwrap();
        for i in 0..2 {
            assert!(foc_residual(&state, &betas, &m, 1.0, i).abs() <= 1e-10);
        }
        let off = vec![m[0] + 0.1, m[1]];
        assert!(foc_residual(&state, &betas, &off, 1.0, 0).abs() > 1e-3);
    }

    #[test]
    fn hand_built_case_matches_oracle() {
        let betas = CoefficientVector {
            state: vec![0.0, 0.0],
            flex: vec![0.4, 0.2],
            beta_0: 0.0,
        };
        let state = unit_state(0.0);
        let closed = solve_flexible_inputs(&state, &betas, 1.0).unwrap();
        let oracle =
            brute_force_profit_maximizer(&state, &betas, 1.0, &OracleOptions::default()).unwrap();
        for i in 0..2 {
            assert_relative_eq!(closed[i], oracle[i], epsilon = 1e-8);
            assert!(foc_residual(&state, &betas, &closed, 1.0, i).abs() <= 1e-10);
        }
    }

    #[test]
    fn near_unit_flexible_sum_still_agrees() {
        let betas = CoefficientVector {
            state: vec![0.0, 0.0],
            flex: vec![0.5, 0.49],
            beta_0: 0.0,
        };
        let state = unit_state(0.0);
        let closed = solve_flexible_inputs(&state, &betas, 1.0).unwrap();
        let opts = OracleOptions { grid_min: -10.0, grid_max: 200.0, ..Default::default() };
        let oracle = brute_force_profit_maximizer(&state, &betas, 1.0, &opts).unwrap();
        for (c, o) in closed.iter().zip(&oracle) {
            assert_relative_eq!(c, o, epsilon = 1e-6);
        }
    }

    #[test]
    fn unit_flexible_sum_is_rejected() {
        let betas = CoefficientVector {
            state: vec![0.0, 0.0],
            flex: vec![0.5, 0.5],
            beta_0: 0.0,
        };
        let state = unit_state(0.0);
        assert!(matches!(
            solve_flexible_inputs(&state, &betas, 1.0),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn sigma_zero_output_value_is_exact() {
        let tech = affine_reference();
        let mut config = SimulationConfig::new(tech, 1, 7);
        config.eta_sigma = 0.0;
        let ds = simulate_cross_section(&config).unwrap();
        let firm = &ds.firms[0];
        let truth = firm.truth.as_ref().unwrap();
        let state = FirmState {
            state_logs: firm.state_logs.clone(),
            omega: truth.omega,
            prices: truth.prices.clone(),
        };
        let psi = log_output_level(&state, &truth.coefficients, &truth.flex_logs);
        assert_relative_eq!(firm.output_value, truth.prices.output * psi.exp(), epsilon = 1e-12);
    }

    #[test]
    fn exp_eta_sample_mean_matches_lognormal_mean() {
        let tech = affine_reference();
        let mut config = SimulationConfig::new(tech, 10_000, 99);
        config.eta_sigma = 0.2;
        let ds = simulate_cross_section(&config).unwrap();
        let draws: Vec<f64> =
            ds.firms.iter().map(|f| f.truth.as_ref().unwrap().eta.exp()).collect();
        let mean: f64 = draws.iter().sum::<f64>() / draws.len() as f64;
        let target = expected_exp_eta(0.2f64);
        let sigma2 = 0.2f64 * 0.2;
        let sd = ((sigma2.exp() - 1.0) * (sigma2).exp()).sqrt();
        let se = sd / (draws.len() as f64).sqrt();
        assert!(
            (mean - target).abs() <= 3.0 * se,
            "sample mean {mean} vs expected {target} (se {se})"
        );
    }

    #[test]
    fn cost_ratio_equals_elasticity_ratio_in_every_record() {
        let tech = affine_reference();
        let config = SimulationConfig::new(tech, 500, 13);
        let ds = simulate_cross_section(&config).unwrap();
        for firm in &ds.firms {
            let truth = firm.truth.as_ref().unwrap();
            let cost_ratio = firm.flex_costs[0] / firm.flex_costs[1];
            let beta_ratio = truth.coefficients.flex[0] / truth.coefficients.flex[1];
            assert_relative_eq!(cost_ratio, beta_ratio, epsilon = 1e-10);
        }
    }

    #[test]
    fn foc_residuals_vanish_for_all_simulated_firms() {
        let tech = affine_reference();
        let config = SimulationConfig::new(tech, 300, 21);
        let ds = simulate_cross_section(&config).unwrap();
        for firm in &ds.firms {
            let truth = firm.truth.as_ref().unwrap();
            let state = FirmState {
                state_logs: firm.state_logs.clone(),
                omega: truth.omega,
                prices: truth.prices.clone(),
            };
            for i in 0..2 {
                let res = foc_residual(
                    &state,
                    &truth.coefficients,
                    &truth.flex_logs,
                    truth.expected_exp_eta,
                    i,
                );
                assert!(res.abs() <= 1e-10, "firm {} input {i}: residual {res}", firm.firm_id);
            }
        }
    }

    #[test]
    fn simulation_is_bit_deterministic() {
        let config = SimulationConfig::new(affine_reference(), 200, 31);
        let a = simulate_cross_section(&config).unwrap();
        let b = simulate_cross_section(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lag_coupling_produces_valid_draws() {
        let tech = affine_reference();
        let mut config = SimulationConfig::new(tech, 400, 17);
        config.lag_coupling = Some(LagCoupling {
            persistence: 0.8,
            innovation_sd: 0.15,
            state_shift: vec![0.5, 0.5],
        });
        let ds = simulate_cross_section(&config).unwrap();
        for firm in &ds.firms {
            let w = firm.truth.as_ref().unwrap().omega.as_scalar().unwrap();
            assert!((0.0..=1.0).contains(&w));
        }
    }

    #[test]
    fn lognormal_prices_are_recorded_when_observed() {
        let tech = affine_reference();
        let mut config = SimulationConfig::new(tech, 50, 5);
        config.prices =
            PriceModel::LogNormal { sigma_output: 0.1, sigma_flex: 0.1, observed: true };
        let ds = simulate_cross_section(&config).unwrap();
        assert!(ds.firms.iter().all(|f| f.prices.is_some()));
        // Costs still satisfy the ratio identity through the price terms.
        for firm in &ds.firms {
            let truth = firm.truth.as_ref().unwrap();
            let lhs = firm.flex_costs[0] / firm.flex_costs[1];
            let rhs = truth.coefficients.flex[0] / truth.coefficients.flex[1];
            assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
        }
    }

    #[test]
    fn three_flexible_variant_simulates_and_solves() {
        let tech = TechnologySpec::three_flexible(
            Coefficient::constant(0.25),
            Coefficient::constant(0.30),
            Coefficient::Affine { intercept: 0.15, slope: 0.1 },
            Coefficient::constant(0.15),
            Coefficient::constant(0.2),
            Coefficient::Affine { intercept: 0.0, slope: 1.0 },
            crate::technology::OmegaSupport::interval(0.0, 1.0),
        )
        .unwrap();
        let config = SimulationConfig::new(tech, 100, 3);
        let ds = simulate_cross_section(&config).unwrap();
        assert_eq!(ds.firms[0].flex_costs.len(), 3);
        for firm in &ds.firms {
            let truth = firm.truth.as_ref().unwrap();
            let state = FirmState {
                state_logs: firm.state_logs.clone(),
                omega: truth.omega,
                prices: truth.prices.clone(),
            };
            for i in 0..3 {
                let res = foc_residual(
                    &state,
                    &truth.coefficients,
                    &truth.flex_logs,
                    truth.expected_exp_eta,
                    i,
                );
                assert!(res.abs() <= 1e-10);
            }
        }
    }
}
