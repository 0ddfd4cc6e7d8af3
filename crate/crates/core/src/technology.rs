//! Heterogeneous-coefficient technologies.
//!
//! A technology maps a latent index `omega` to the full set of output
//! elasticities of a log-linear production function: one coefficient per
//! predetermined (state) input, one per flexible input, and an additive
//! intercept. The structural requirements that make the downstream
//! recovery work — strictly positive flexible elasticities, diminishing
//! returns over the flexible inputs, and an invertible elasticity ratio —
//! are validated here on a grid over the support.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Scalar};

/// Latent technology index: scalar for every variant except the
/// three-flexible-input model driven by a two-dimensional index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Omega<T> {
    Scalar(T),
    Pair(T, T),
}

impl<T: Scalar> Omega<T> {
    pub fn dim(&self) -> usize {
        match self {
            Omega::Scalar(_) => 1,
            Omega::Pair(_, _) => 2,
        }
    }

    /// First (or only) coordinate.
    pub fn first(&self) -> T {
        match *self {
            Omega::Scalar(a) | Omega::Pair(a, _) => a,
        }
    }

    pub fn as_scalar(&self) -> Option<T> {
        match *self {
            Omega::Scalar(a) => Some(a),
            Omega::Pair(_, _) => None,
        }
    }

    pub fn coords(&self) -> Vec<T> {
        match *self {
            Omega::Scalar(a) => vec![a],
            Omega::Pair(a, b) => vec![a, b],
        }
    }
}

impl<T: fmt::Display> fmt::Display for Omega<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Omega::Scalar(a) => write!(f, "{a}"),
            Omega::Pair(a, b) => write!(f, "({a}, {b})"),
        }
    }
}

/// Support of the latent index: a closed interval, or a closed box for the
/// two-dimensional case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaSupport<T> {
    Interval { min: T, max: T },
    Box { a_min: T, a_max: T, b_min: T, b_max: T },
}

impl<T: Scalar> OmegaSupport<T> {
    pub fn interval(min: T, max: T) -> Self {
        OmegaSupport::Interval { min, max }
    }

    pub fn dim(&self) -> usize {
        match self {
            OmegaSupport::Interval { .. } => 1,
            OmegaSupport::Box { .. } => 2,
        }
    }

    pub fn contains(&self, omega: Omega<T>) -> bool {
        match (*self, omega) {
            (OmegaSupport::Interval { min, max }, Omega::Scalar(a)) => a >= min && a <= max,
            (OmegaSupport::Box { a_min, a_max, b_min, b_max }, Omega::Pair(a, b)) => {
                a >= a_min && a <= a_max && b >= b_min && b <= b_max
            }
            _ => false,
        }
    }

    /// Uniform grid over the support: `n` points per axis (so `n * n`
    /// points over a box). Requires `n >= 2`.
    pub fn grid(&self, n: usize) -> Vec<Omega<T>> {
        assert!(n >= 2, "grid size must be at least 2");
        let steps = count::<T>(n - 1);
        match *self {
            OmegaSupport::Interval { min, max } => (0..n)
                .map(|i| Omega::Scalar(min + (max - min) * count::<T>(i) / steps))
                .collect(),
            OmegaSupport::Box { a_min, a_max, b_min, b_max } => {
                let mut pts = Vec::with_capacity(n * n);
                for i in 0..n {
                    let a = a_min + (a_max - a_min) * count::<T>(i) / steps;
                    for j in 0..n {
                        let b = b_min + (b_max - b_min) * count::<T>(j) / steps;
                        pts.push(Omega::Pair(a, b));
                    }
                }
                pts
            }
        }
    }
}

/// One coefficient function of the latent index.
#[derive(Clone)]
pub enum Coefficient<T> {
    /// `intercept + slope * omega` (scalar index).
    Affine { intercept: T, slope: T },
    /// `intercept + slope_a * omega_a + slope_b * omega_b` (pair index).
    Affine2 { intercept: T, slope_a: T, slope_b: T },
    /// `base + gain / (1 + exp(-steepness * (omega - center)))` (scalar index).
    Logistic { base: T, gain: T, center: T, steepness: T },
    /// Arbitrary user-supplied function. Not serializable to config form.
    Custom(Arc<dyn Fn(Omega<T>) -> T + Send + Sync>),
}

impl<T: Scalar> Coefficient<T> {
    pub fn constant(value: T) -> Self {
        Coefficient::Affine { intercept: value, slope: T::zero() }
    }

    pub fn eval(&self, omega: Omega<T>) -> T {
        match self {
            Coefficient::Affine { intercept, slope } => *intercept + *slope * omega.first(),
            Coefficient::Affine2 { intercept, slope_a, slope_b } => match omega {
                Omega::Pair(a, b) => *intercept + *slope_a * a + *slope_b * b,
                Omega::Scalar(a) => *intercept + *slope_a * a,
            },
            Coefficient::Logistic { base, gain, center, steepness } => {
                let z = *steepness * (omega.first() - *center);
                *base + *gain / (T::one() + (-z).exp())
            }
            Coefficient::Custom(f) => f(omega),
        }
    }

    fn family(&self) -> FamilyTag {
        match self {
            Coefficient::Affine { .. } | Coefficient::Affine2 { .. } => FamilyTag::Affine,
            Coefficient::Logistic { .. } => FamilyTag::Logistic,
            Coefficient::Custom(_) => FamilyTag::Custom,
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Coefficient<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Affine { intercept, slope } => f
                .debug_struct("Affine")
                .field("intercept", intercept)
                .field("slope", slope)
                .finish(),
            Coefficient::Affine2 { intercept, slope_a, slope_b } => f
                .debug_struct("Affine2")
                .field("intercept", intercept)
                .field("slope_a", slope_a)
                .field("slope_b", slope_b)
                .finish(),
            Coefficient::Logistic { base, gain, center, steepness } => f
                .debug_struct("Logistic")
                .field("base", base)
                .field("gain", gain)
                .field("center", center)
                .field("steepness", steepness)
                .finish(),
            Coefficient::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Identifier of the parametric family behind a technology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyTag {
    Affine,
    Logistic,
    Custom,
    Mixed,
}

impl FamilyTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            FamilyTag::Affine => "affine",
            FamilyTag::Logistic => "logistic",
            FamilyTag::Custom => "custom",
            FamilyTag::Mixed => "mixed",
        }
    }

    fn combine(tags: impl Iterator<Item = FamilyTag>) -> FamilyTag {
        let mut acc: Option<FamilyTag> = None;
        for t in tags {
            acc = Some(match acc {
                None => t,
                Some(prev) if prev == t => prev,
                Some(_) => return FamilyTag::Mixed,
            });
        }
        acc.unwrap_or(FamilyTag::Mixed)
    }
}

/// Production-model variant. The variant fixes how many predetermined
/// (state) inputs and flexible inputs the model has and what the dataset
/// columns are called.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    /// Two state inputs (labor, capital) and two flexible inputs.
    Baseline,
    /// Skilled and unskilled labor as separate states, plus capital.
    TwoLabor,
    /// Three flexible inputs; latent index may be one- or two-dimensional.
    ThreeFlexible,
    /// Labor chosen concurrently with a single material input; capital is
    /// the only state.
    SingleMFlexibleLabor,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::Baseline,
        ModelVariant::TwoLabor,
        ModelVariant::ThreeFlexible,
        ModelVariant::SingleMFlexibleLabor,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelVariant::Baseline => "baseline",
            ModelVariant::TwoLabor => "two_labor",
            ModelVariant::ThreeFlexible => "three_flexible",
            ModelVariant::SingleMFlexibleLabor => "single_m_flexible_labor",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ModelVariant::Baseline),
            "two_labor" => Ok(ModelVariant::TwoLabor),
            "three_flexible" => Ok(ModelVariant::ThreeFlexible),
            "single_m_flexible_labor" | "single_m" => Ok(ModelVariant::SingleMFlexibleLabor),
            other => Err(Error::Config(format!(
                "unknown model variant `{other}` (expected baseline, two_labor, \
                 three_flexible, or single_m_flexible_labor)"
            ))),
        }
    }

    pub fn n_states(&self) -> usize {
        self.state_columns().len()
    }

    pub fn n_flex(&self) -> usize {
        self.flex_cost_columns().len()
    }

    /// Number of cost-ratio control variables: consecutive-pair ratios of
    /// the flexible input costs.
    pub fn n_ratios(&self) -> usize {
        match self {
            ModelVariant::ThreeFlexible => 2,
            _ => 1,
        }
    }

    /// Dataset column names of the log state inputs, in canonical order.
    pub fn state_columns(&self) -> &'static [&'static str] {
        match self {
            ModelVariant::Baseline => &["log_labor", "log_capital"],
            ModelVariant::TwoLabor => &["log_labor_s", "log_labor_u", "log_capital"],
            ModelVariant::ThreeFlexible => &["log_labor", "log_capital"],
            ModelVariant::SingleMFlexibleLabor => &["log_capital"],
        }
    }

    /// Dataset column names of the flexible input costs, in canonical order.
    pub fn flex_cost_columns(&self) -> &'static [&'static str] {
        match self {
            ModelVariant::Baseline | ModelVariant::TwoLabor => &["cost_m1", "cost_m2"],
            ModelVariant::ThreeFlexible => &["cost_m1", "cost_m2", "cost_m3"],
            ModelVariant::SingleMFlexibleLabor => &["cost_l", "cost_m"],
        }
    }

    /// Optional observed-price column names: output price first, then one
    /// per flexible input.
    pub fn price_columns(&self) -> Vec<&'static str> {
        let mut cols = vec!["p_y"];
        cols.extend(match self {
            ModelVariant::Baseline | ModelVariant::TwoLabor => ["p_m1", "p_m2"].as_slice(),
            ModelVariant::ThreeFlexible => ["p_m1", "p_m2", "p_m3"].as_slice(),
            ModelVariant::SingleMFlexibleLabor => ["p_l", "p_m"].as_slice(),
        });
        cols
    }

    /// Names of the state-input elasticities, aligned with `state_columns`.
    pub fn state_coefficient_names(&self) -> &'static [&'static str] {
        match self {
            ModelVariant::Baseline => &["beta_l", "beta_k"],
            ModelVariant::TwoLabor => &["beta_ls", "beta_lu", "beta_k"],
            ModelVariant::ThreeFlexible => &["beta_l", "beta_k"],
            ModelVariant::SingleMFlexibleLabor => &["beta_k"],
        }
    }

    /// Names of the flexible-input elasticities, aligned with
    /// `flex_cost_columns`.
    pub fn flex_coefficient_names(&self) -> &'static [&'static str] {
        match self {
            ModelVariant::Baseline | ModelVariant::TwoLabor => &["beta_m1", "beta_m2"],
            ModelVariant::ThreeFlexible => &["beta_m1", "beta_m2", "beta_m3"],
            ModelVariant::SingleMFlexibleLabor => &["beta_l", "beta_m"],
        }
    }

    /// Names of the ex-ante share estimates, aligned with flexible inputs.
    pub fn share_names(&self) -> &'static [&'static str] {
        match self {
            ModelVariant::Baseline | ModelVariant::TwoLabor => &["s1", "s2"],
            ModelVariant::ThreeFlexible => &["s1", "s2", "s3"],
            ModelVariant::SingleMFlexibleLabor => &["s_l", "s_m"],
        }
    }

    /// Names of the cost-ratio controls.
    pub fn ratio_names(&self) -> &'static [&'static str] {
        match self {
            ModelVariant::ThreeFlexible => &["r12", "r23"],
            ModelVariant::SingleMFlexibleLabor => &["r_lm"],
            _ => &["r12"],
        }
    }

    /// All coefficient names in report order: states, flexibles, intercept.
    pub fn coefficient_names(&self) -> Vec<&'static str> {
        let mut names: Vec<&'static str> = self.state_coefficient_names().to_vec();
        names.extend(self.flex_coefficient_names());
        names.push("beta_0");
        names
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Coefficient values at one latent-index point: one entry per state input
/// and per flexible input (in the variant's canonical order) plus the
/// additive intercept. For the baseline variant the order is
/// `state = [beta_l, beta_k]`, `flex = [beta_m1, beta_m2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector<T> {
    pub state: Vec<T>,
    pub flex: Vec<T>,
    pub beta_0: T,
}

impl<T: Scalar> CoefficientVector<T> {
    pub fn flex_sum(&self) -> T {
        self.flex.iter().copied().sum()
    }

    /// All coefficients in report order (states, flexibles, intercept).
    pub fn report_values(&self) -> Vec<T> {
        let mut v = self.state.clone();
        v.extend_from_slice(&self.flex);
        v.push(self.beta_0);
        v
    }
}

/// Names of the structural requirements checked by
/// [`TechnologySpec::validate_assumptions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionName {
    /// Every flexible elasticity is strictly positive on the support.
    FlexiblePositivity,
    /// Flexible elasticities sum strictly below one on the support.
    DiminishingFlexibleReturns,
    /// The first-pair elasticity ratio is strictly monotone (scalar index).
    MonotoneRatio,
    /// The consecutive-pair ratio map is injective on the grid (pair index).
    InjectiveRatioPair,
}

impl AssumptionName {
    pub fn as_str(&self) -> &'static str {
        match self {
            AssumptionName::FlexiblePositivity => "flexible_positivity",
            AssumptionName::DiminishingFlexibleReturns => "diminishing_flexible_returns",
            AssumptionName::MonotoneRatio => "monotone_ratio",
            AssumptionName::InjectiveRatioPair => "injective_ratio_pair",
        }
    }
}

/// A grid point at which an assumption check failed.
#[derive(Debug, Clone)]
pub struct Violation<T> {
    pub omega: Omega<T>,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct AssumptionCheck<T> {
    pub name: AssumptionName,
    pub passed: bool,
    pub first_violation: Option<Violation<T>>,
}

/// Outcome of grid-based validation of the structural requirements.
#[derive(Debug, Clone)]
pub struct ValidationReport<T> {
    pub grid_size: usize,
    pub checks: Vec<AssumptionCheck<T>>,
}

impl<T> ValidationReport<T> {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: AssumptionName) -> Option<&AssumptionCheck<T>> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// A heterogeneous-coefficient technology for one model variant.
#[derive(Debug, Clone)]
pub struct TechnologySpec<T> {
    variant: ModelVariant,
    state_coefs: Vec<Coefficient<T>>,
    flex_coefs: Vec<Coefficient<T>>,
    intercept: Coefficient<T>,
    support: OmegaSupport<T>,
    family: FamilyTag,
}

impl<T: Scalar> TechnologySpec<T> {
    /// Baseline model: states (labor, capital), flexible inputs (m1, m2).
    pub fn baseline(
        beta_l: Coefficient<T>,
        beta_k: Coefficient<T>,
        beta_m1: Coefficient<T>,
        beta_m2: Coefficient<T>,
        beta_0: Coefficient<T>,
        support: OmegaSupport<T>,
    ) -> Result<Self> {
        Self::new(
            ModelVariant::Baseline,
            vec![beta_l, beta_k],
            vec![beta_m1, beta_m2],
            beta_0,
            support,
        )
    }

    /// Two labor types: states (skilled labor, unskilled labor, capital).
    pub fn two_labor(
        beta_ls: Coefficient<T>,
        beta_lu: Coefficient<T>,
        beta_k: Coefficient<T>,
        beta_m1: Coefficient<T>,
        beta_m2: Coefficient<T>,
        beta_0: Coefficient<T>,
        support: OmegaSupport<T>,
    ) -> Result<Self> {
        Self::new(
            ModelVariant::TwoLabor,
            vec![beta_ls, beta_lu, beta_k],
            vec![beta_m1, beta_m2],
            beta_0,
            support,
        )
    }

    /// Three flexible inputs; the support may be an interval or a box.
    pub fn three_flexible(
        beta_l: Coefficient<T>,
        beta_k: Coefficient<T>,
        beta_m1: Coefficient<T>,
        beta_m2: Coefficient<T>,
        beta_m3: Coefficient<T>,
        beta_0: Coefficient<T>,
        support: OmegaSupport<T>,
    ) -> Result<Self> {
        Self::new(
            ModelVariant::ThreeFlexible,
            vec![beta_l, beta_k],
            vec![beta_m1, beta_m2, beta_m3],
            beta_0,
            support,
        )
    }

    /// Single material with concurrently chosen labor: flexible inputs are
    /// (labor, material), capital is the only state.
    pub fn single_m(
        beta_l: Coefficient<T>,
        beta_k: Coefficient<T>,
        beta_m: Coefficient<T>,
        beta_0: Coefficient<T>,
        support: OmegaSupport<T>,
    ) -> Result<Self> {
        Self::new(
            ModelVariant::SingleMFlexibleLabor,
            vec![beta_k],
            vec![beta_l, beta_m],
            beta_0,
            support,
        )
    }

    /// General constructor; the coefficient vectors must match the
    /// variant's arities.
    pub fn new(
        variant: ModelVariant,
        state_coefs: Vec<Coefficient<T>>,
        flex_coefs: Vec<Coefficient<T>>,
        intercept: Coefficient<T>,
        support: OmegaSupport<T>,
    ) -> Result<Self> {
        if state_coefs.len() != variant.n_states() {
            return Err(Error::Invalid(format!(
                "variant {variant} expects {} state coefficients, got {}",
                variant.n_states(),
                state_coefs.len()
            )));
        }
        if flex_coefs.len() != variant.n_flex() {
            return Err(Error::Invalid(format!(
                "variant {variant} expects {} flexible coefficients, got {}",
                variant.n_flex(),
                flex_coefs.len()
            )));
        }
        if support.dim() == 2 && variant != ModelVariant::ThreeFlexible {
            return Err(Error::Invalid(format!(
                "a two-dimensional latent index is only supported by the \
                 three_flexible variant, not {variant}"
            )));
        }
        match support {
            OmegaSupport::Interval { min, max } if !(min < max) => {
                return Err(Error::Invalid("empty latent-index interval".into()));
            }
            OmegaSupport::Box { a_min, a_max, b_min, b_max }
                if !(a_min < a_max && b_min < b_max) =>
            {
                return Err(Error::Invalid("empty latent-index box".into()));
            }
            _ => {}
        }
        let family = FamilyTag::combine(
            state_coefs
                .iter()
                .chain(flex_coefs.iter())
                .chain(std::iter::once(&intercept))
                .map(Coefficient::family),
        );
        Ok(Self { variant, state_coefs, flex_coefs, intercept, support, family })
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn support(&self) -> OmegaSupport<T> {
        self.support
    }

    pub fn family_tag(&self) -> FamilyTag {
        self.family
    }

    pub fn state_coefs(&self) -> &[Coefficient<T>] {
        &self.state_coefs
    }

    pub fn flex_coefs(&self) -> &[Coefficient<T>] {
        &self.flex_coefs
    }

    pub fn intercept_coef(&self) -> &Coefficient<T> {
        &self.intercept
    }

    /// Evaluates all coefficient functions at `omega`.
    ///
    /// Errors when `omega` lies outside the declared support.
    pub fn eval_betas(&self, omega: Omega<T>) -> Result<CoefficientVector<T>> {
        if !self.support.contains(omega) {
            return Err(Error::Domain(format!(
                "latent index {omega} is outside the technology support"
            )));
        }
        Ok(CoefficientVector {
            state: self.state_coefs.iter().map(|c| c.eval(omega)).collect(),
            flex: self.flex_coefs.iter().map(|c| c.eval(omega)).collect(),
            beta_0: self.intercept.eval(omega),
        })
    }

    /// Ratio of the first two flexible elasticities at `omega`.
    pub fn flex_ratio(&self, omega: Omega<T>) -> T {
        self.flex_coefs[0].eval(omega) / self.flex_coefs[1].eval(omega)
    }

    /// Second consecutive ratio (flex 2 over flex 3); three-flexible only.
    pub fn flex_ratio_23(&self, omega: Omega<T>) -> T {
        self.flex_coefs[1].eval(omega) / self.flex_coefs[2].eval(omega)
    }

    /// Checks the structural requirements on a uniform grid of
    /// `grid_size` points per support axis. Failures are report entries,
    /// never errors; the first violating grid point is recorded.
    pub fn validate_assumptions(&self, grid_size: usize) -> ValidationReport<T> {
        assert!(grid_size >= 2, "grid size must be at least 2");
        let grid = self.support.grid(grid_size);
        let mut checks = Vec::new();

        // Strict positivity of every flexible elasticity.
        let mut positivity = AssumptionCheck {
            name: AssumptionName::FlexiblePositivity,
            passed: true,
            first_violation: None,
        };
        'pos: for &omega in &grid {
            for (i, c) in self.flex_coefs.iter().enumerate() {
                let v = c.eval(omega);
                if !(v > T::zero()) {
                    positivity.passed = false;
                    positivity.first_violation = Some(Violation {
                        omega,
                        detail: format!("flexible coefficient {i} = {v} is not positive"),
                    });
                    break 'pos;
                }
            }
        }
        checks.push(positivity);

        // Flexible elasticities sum strictly below one.
        let mut diminishing = AssumptionCheck {
            name: AssumptionName::DiminishingFlexibleReturns,
            passed: true,
            first_violation: None,
        };
        for &omega in &grid {
            let sum: T = self.flex_coefs.iter().map(|c| c.eval(omega)).sum();
            if !(sum < T::one()) {
                diminishing.passed = false;
                diminishing.first_violation = Some(Violation {
                    omega,
                    detail: format!("flexible coefficients sum to {sum} >= 1"),
                });
                break;
            }
        }
        checks.push(diminishing);

        match self.support.dim() {
            1 => checks.push(self.check_monotone_ratio(&grid)),
            _ => checks.push(self.check_injective_pair(&grid)),
        }

        ValidationReport { grid_size, checks }
    }

    /// Strict monotonicity of the first-pair ratio along the grid: a
    /// checkable sufficient condition for an invertible ratio map.
    fn check_monotone_ratio(&self, grid: &[Omega<T>]) -> AssumptionCheck<T> {
        let ratios: Vec<T> = grid.iter().map(|&w| self.flex_ratio(w)).collect();
        let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
        let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
        if increasing || decreasing {
            return AssumptionCheck {
                name: AssumptionName::MonotoneRatio,
                passed: true,
                first_violation: None,
            };
        }
        // Report the first adjacent pair that breaks the dominant direction.
        let up = ratios.windows(2).filter(|w| w[1] > w[0]).count();
        let down = ratios.windows(2).filter(|w| w[1] < w[0]).count();
        let want_increasing = up >= down;
        let idx = ratios
            .windows(2)
            .position(|w| if want_increasing { w[1] <= w[0] } else { w[1] >= w[0] })
            .unwrap_or(0);
        AssumptionCheck {
            name: AssumptionName::MonotoneRatio,
            passed: false,
            first_violation: Some(Violation {
                omega: grid[idx + 1],
                detail: format!(
                    "elasticity ratio is not strictly monotone: {} then {}",
                    ratios[idx],
                    ratios[idx + 1]
                ),
            }),
        }
    }

    /// Grid injectivity of the consecutive-ratio pair map: no two distant
    /// grid points may produce (near-)identical ratio pairs.
    fn check_injective_pair(&self, grid: &[Omega<T>]) -> AssumptionCheck<T> {
        let mut entries: Vec<(T, T, Omega<T>)> = grid
            .iter()
            .map(|&w| (self.flex_ratio(w), self.flex_ratio_23(w), w))
            .collect();
        entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // Tolerance for "same ratio pair", relative to the observed spread.
        let spread = |sel: fn(&(T, T, Omega<T>)) -> T, es: &[(T, T, Omega<T>)]| {
            let mut lo = T::infinity();
            let mut hi = T::neg_infinity();
            for e in es {
                let v = sel(e);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            hi - lo
        };
        let tol_r = (spread(|e| e.0, &entries) + spread(|e| e.1, &entries)) * lit::<T>(1e-6)
            + lit::<T>(1e-12);
        let cell = match self.support {
            OmegaSupport::Box { a_min, a_max, b_min, b_max } => {
                let n = (grid.len() as f64).sqrt().round().max(2.0);
                let step = lit::<T>(1.0 / (n - 1.0));
                ((a_max - a_min) + (b_max - b_min)) * step
            }
            OmegaSupport::Interval { .. } => T::zero(),
        };
        for i in 0..entries.len() {
            let (r1, r2, w) = entries[i];
            for e in entries.iter().skip(i + 1) {
                if e.0 - r1 > tol_r {
                    break;
                }
                if (e.1 - r2).abs() <= tol_r {
                    let dw = match (w, e.2) {
                        (Omega::Pair(a, b), Omega::Pair(c, d)) => (a - c).abs().max((b - d).abs()),
                        _ => T::zero(),
                    };
                    if dw > cell * lit::<T>(1.5) {
                        return AssumptionCheck {
                            name: AssumptionName::InjectiveRatioPair,
                            passed: false,
                            first_violation: Some(Violation {
                                omega: w,
                                detail: format!(
                                    "ratio pair ({r1}, {r2}) also attained near {}",
                                    e.2
                                ),
                            }),
                        };
                    }
                }
            }
        }
        AssumptionCheck {
            name: AssumptionName::InjectiveRatioPair,
            passed: true,
            first_violation: None,
        }
    }

    /// Attainable range of the first-pair ratio over the support
    /// (assumes a validated, monotone ratio).
    pub fn ratio_range(&self) -> (T, T) {
        match self.support {
            OmegaSupport::Interval { min, max } => {
                let lo = self.flex_ratio(Omega::Scalar(min));
                let hi = self.flex_ratio(Omega::Scalar(max));
                if lo <= hi {
                    (lo, hi)
                } else {
                    (hi, lo)
                }
            }
            OmegaSupport::Box { .. } => {
                let grid = self.support.grid(64);
                let mut lo = T::infinity();
                let mut hi = T::neg_infinity();
                for w in grid {
                    let r = self.flex_ratio(w);
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
                (lo, hi)
            }
        }
    }

    /// Inverts the first-pair elasticity ratio: returns the scalar `omega`
    /// with `flex_ratio(omega) = r`, to a relative accuracy of
    /// `1e-12 * max(1, r)`.
    ///
    /// Affine and shared-shape logistic flexible coefficients invert in
    /// closed form; anything else falls back to bisection on the monotone
    /// ratio. Errors when `r` lies outside the attainable range or the
    /// support is two-dimensional (use [`Self::ratio_pair_to_omega`]).
    pub fn ratio_to_omega(&self, r: T) -> Result<T> {
        if !(r > T::zero()) || !r.is_finite() {
            return Err(Error::Domain(format!("cost ratio must be positive and finite, got {r}")));
        }
        let (min, max) = match self.support {
            OmegaSupport::Interval { min, max } => (min, max),
            OmegaSupport::Box { .. } => {
                return Err(Error::Domain(
                    "scalar ratio inversion requires a one-dimensional latent index".into(),
                ))
            }
        };
        let (r_lo, r_hi) = self.ratio_range();
        let slack = lit::<T>(1e-9) * (T::one() + r_hi.abs());
        if r < r_lo - slack || r > r_hi + slack {
            return Err(Error::Domain(format!(
                "ratio {r} is outside the attainable range [{r_lo}, {r_hi}]"
            )));
        }
        let r = r.min(r_hi).max(r_lo);

        if let Some(omega) = self.closed_form_ratio_inverse(r) {
            return Ok(omega.min(max).max(min));
        }

        // Bisection on the (validated) monotone ratio.
        let increasing = self.flex_ratio(Omega::Scalar(max)) > self.flex_ratio(Omega::Scalar(min));
        let mut lo = min;
        let mut hi = max;
        for _ in 0..200 {
            let mid = (lo + hi) / lit::<T>(2.0);
            let v = self.flex_ratio(Omega::Scalar(mid));
            let below = if increasing { v < r } else { v > r };
            if below {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * (T::one() + lo.abs() + hi.abs()) {
                break;
            }
        }
        let omega = (lo + hi) / lit::<T>(2.0);
        let achieved = self.flex_ratio(Omega::Scalar(omega));
        let tol = lit::<T>(1e-12) * T::one().max(r);
        if (achieved - r).abs() > tol * lit::<T>(1e3) {
            return Err(Error::Numerical(format!(
                "ratio inversion stalled: wanted {r}, reached {achieved}"
            )));
        }
        Ok(omega)
    }

    fn closed_form_ratio_inverse(&self, r: T) -> Option<T> {
        match (&self.flex_coefs[0], &self.flex_coefs[1]) {
            (
                Coefficient::Affine { intercept: a1, slope: b1 },
                Coefficient::Affine { intercept: a2, slope: b2 },
            ) => {
                // (a1 + b1 w) / (a2 + b2 w) = r  =>  w = (r a2 - a1) / (b1 - r b2)
                let denom = *b1 - r * *b2;
                if denom == T::zero() {
                    return None;
                }
                Some((r * *a2 - *a1) / denom)
            }
            (
                Coefficient::Logistic { base: a1, gain: g1, center: c1, steepness: k1 },
                Coefficient::Logistic { base: a2, gain: g2, center: c2, steepness: k2 },
            ) if c1 == c2 && k1 == k2 => {
                // With a shared logistic shape s = sigma(k (w - c)):
                // (a1 + g1 s) / (a2 + g2 s) = r  =>  s = (a1 - r a2) / (r g2 - g1)
                let denom = r * *g2 - *g1;
                if denom == T::zero() {
                    return None;
                }
                let s = (*a1 - r * *a2) / denom;
                if !(s > T::zero() && s < T::one()) {
                    return None;
                }
                let z = (s / (T::one() - s)).ln();
                Some(*c1 + z / *k1)
            }
            _ => None,
        }
    }

    /// Inverts the consecutive-ratio pair map of a two-dimensional
    /// technology: nearest grid point, refined by damped Newton steps with
    /// finite-difference Jacobian.
    pub fn ratio_pair_to_omega(&self, r12: T, r23: T) -> Result<Omega<T>> {
        let (a_min, a_max, b_min, b_max) = match self.support {
            OmegaSupport::Box { a_min, a_max, b_min, b_max } => (a_min, a_max, b_min, b_max),
            OmegaSupport::Interval { .. } => {
                return Err(Error::Domain(
                    "pair inversion requires a two-dimensional latent index".into(),
                ))
            }
        };
        let grid = self.support.grid(101);
        let mut best = grid[0];
        let mut best_err = T::infinity();
        for &w in &grid {
            let e1 = self.flex_ratio(w) - r12;
            let e2 = self.flex_ratio_23(w) - r23;
            let err = e1 * e1 + e2 * e2;
            if err < best_err {
                best_err = err;
                best = w;
            }
        }
        let (mut a, mut b) = match best {
            Omega::Pair(a, b) => (a, b),
            Omega::Scalar(_) => unreachable!("box grid yields pairs"),
        };
        let h_a = (a_max - a_min) * lit::<T>(1e-7);
        let h_b = (b_max - b_min) * lit::<T>(1e-7);
        let clamp = |x: T, lo: T, hi: T| x.min(hi).max(lo);
        for _ in 0..60 {
            let w = Omega::Pair(a, b);
            let f1 = self.flex_ratio(w) - r12;
            let f2 = self.flex_ratio_23(w) - r23;
            let tol = lit::<T>(1e-13) * (T::one() + r12.abs() + r23.abs());
            if f1.abs() <= tol && f2.abs() <= tol {
                break;
            }
            let wa = Omega::Pair(clamp(a + h_a, a_min, a_max), b);
            let wb = Omega::Pair(a, clamp(b + h_b, b_min, b_max));
            let da = match wa {
                Omega::Pair(x, _) => x - a,
                _ => h_a,
            };
            let db = match wb {
                Omega::Pair(_, y) => y - b,
                _ => h_b,
            };
            let j11 = (self.flex_ratio(wa) - self.flex_ratio(w)) / da;
            let j12 = (self.flex_ratio(wb) - self.flex_ratio(w)) / db;
            let j21 = (self.flex_ratio_23(wa) - self.flex_ratio_23(w)) / da;
            let j22 = (self.flex_ratio_23(wb) - self.flex_ratio_23(w)) / db;
            let det = j11 * j22 - j12 * j21;
            if det.abs() < lit::<T>(1e-30) {
                break;
            }
            let step_a = (f1 * j22 - f2 * j12) / det;
            let step_b = (f2 * j11 - f1 * j21) / det;
            a = clamp(a - step_a, a_min, a_max);
            b = clamp(b - step_b, b_min, b_max);
        }
        let w = Omega::Pair(a, b);
        let tol = lit::<T>(1e-10) * (T::one() + r12.abs() + r23.abs());
        let e1 = (self.flex_ratio(w) - r12).abs();
        let e2 = (self.flex_ratio_23(w) - r23).abs();
        if e1 > tol || e2 > tol {
            return Err(Error::Domain(format!(
                "ratio pair ({r12}, {r23}) is not attained on the support \
                 (closest residuals {e1}, {e2})"
            )));
        }
        Ok(w)
    }
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    use super::*;

    /// Reference affine technology used across the test suite:
    /// constant labor/capital elasticities, one drifting flexible
    /// elasticity, intercept equal to the latent index.
    pub fn affine_reference() -> TechnologySpec<f64> {
        TechnologySpec::baseline(
            Coefficient::constant(0.25),
            Coefficient::constant(0.30),
            Coefficient::Affine { intercept: 0.2, slope: 0.1 },
            Coefficient::constant(0.20),
            Coefficient::Affine { intercept: 0.0, slope: 1.0 },
            OmegaSupport::interval(0.0, 1.0),
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_fixtures::affine_reference;
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn eval_betas_at_endpoints_and_midpoint() {
        let tech = affine_reference();
        let at = |w: f64| tech.eval_betas(Omega::Scalar(w)).unwrap();

        let b = at(0.0);
        assert_eq!(b.state, vec![0.25, 0.30]);
        assert_eq!(b.flex, vec![0.20, 0.20]);
        assert_eq!(b.beta_0, 0.0);

        let b = at(1.0);
        assert_eq!(b.state, vec![0.25, 0.30]);
        assert_relative_eq!(b.flex[0], 0.30, epsilon = 1e-15);
        assert_eq!(b.flex[1], 0.20);
        assert_eq!(b.beta_0, 1.0);

        let b = at(0.5);
        assert_eq!(b.flex[0], 0.25);
        assert_eq!(b.flex[1], 0.20);
        assert_eq!(b.beta_0, 0.5);
    }

    #[test]
    fn eval_betas_outside_support_is_domain_error() {
        let tech = affine_reference();
        assert!(matches!(tech.eval_betas(Omega::Scalar(1.5)), Err(Error::Domain(_))));
        assert!(matches!(tech.eval_betas(Omega::Scalar(-0.1)), Err(Error::Domain(_))));
    }

    #[test]
    fn validation_passes_for_reference_technology() {
        let report = affine_reference().validate_assumptions(101);
        assert!(report.all_passed(), "{report:?}");
    }

    #[test]
    fn constant_ratio_fails_monotonicity() {
        let tech = TechnologySpec::baseline(
            Coefficient::constant(0.25),
            Coefficient::constant(0.30),
            Coefficient::constant(0.2),
            Coefficient::constant(0.2),
            Coefficient::Affine { intercept: 0.0, slope: 1.0 },
            OmegaSupport::interval(0.0, 1.0),
        )
        .unwrap();
        let report = tech.validate_assumptions(101);
        let check = report.check(AssumptionName::MonotoneRatio).unwrap();
        assert!(!check.passed);
        assert!(report.check(AssumptionName::FlexiblePositivity).unwrap().passed);
        assert!(report.check(AssumptionName::DiminishingFlexibleReturns).unwrap().passed);
    }

    #[test]
    fn excessive_flex_sum_fails_at_lower_endpoint() {
        let tech = TechnologySpec::baseline(
            Coefficient::constant(0.25),
            Coefficient::constant(0.30),
            Coefficient::Affine { intercept: 0.6, slope: 0.1 },
            Coefficient::constant(0.5),
            Coefficient::Affine { intercept: 0.0, slope: 1.0 },
            OmegaSupport::interval(0.0, 1.0),
        )
        .unwrap();
        let report = tech.validate_assumptions(101);
        let check = report.check(AssumptionName::DiminishingFlexibleReturns).unwrap();
        assert!(!check.passed);
        let violation = check.first_violation.as_ref().unwrap();
        assert_eq!(violation.omega, Omega::Scalar(0.0));
    }

    #[test]
    fn validation_is_deterministic() {
        let tech = affine_reference();
        let a = format!("{:?}", tech.validate_assumptions(101));
        let b = format!("{:?}", tech.validate_assumptions(101));
        assert_eq!(a, b);
    }

    #[test]
    fn ratio_inversion_reference_values() {
        let tech = affine_reference();
        // ratio = 1 + 0.5 w, so w = 2 (r - 1)
        assert_relative_eq!(tech.ratio_to_omega(1.25).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(tech.ratio_to_omega(1.0).unwrap(), 0.0, epsilon = 1e-12);
        match tech.ratio_to_omega(2.0) {
            Err(Error::Domain(msg)) => assert!(msg.contains("1.5"), "message: {msg}"),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn custom_coefficients_invert_by_bisection() {
        let tech = TechnologySpec::baseline(
            Coefficient::constant(0.25),
            Coefficient::constant(0.30),
            Coefficient::Custom(Arc::new(|w: Omega<f64>| 0.2 + 0.1 * w.first().powi(3))),
            Coefficient::constant(0.2),
            Coefficient::Affine { intercept: 0.0, slope: 1.0 },
            OmegaSupport::interval(0.0, 1.0),
        )
        .unwrap();
        assert!(tech.validate_assumptions(101).all_passed());
        for &w in &[0.1, 0.5, 0.73, 0.99] {
            let r = tech.flex_ratio(Omega::Scalar(w));
            let back = tech.ratio_to_omega(r).unwrap();
            assert_relative_eq!(back, w, epsilon = 1e-10);
        }
    }

    #[test]
    fn logistic_pair_inverts_in_closed_form() {
        let tech = TechnologySpec::baseline(
            Coefficient::constant(0.25),
            Coefficient::constant(0.30),
            Coefficient::Logistic { base: 0.15, gain: 0.2, center: 0.5, steepness: 2.0 },
            Coefficient::Logistic { base: 0.2, gain: 0.05, center: 0.5, steepness: 2.0 },
            Coefficient::Affine { intercept: 0.0, slope: 1.0 },
            OmegaSupport::interval(0.0, 1.0),
        )
        .unwrap();
        assert!(tech.validate_assumptions(201).all_passed());
        for &w in &[0.05, 0.4, 0.8] {
            let r = tech.flex_ratio(Omega::Scalar(w));
            let back = tech.ratio_to_omega(r).unwrap();
            assert_relative_eq!(back, w, epsilon = 1e-11);
        }
    }

    #[test]
    fn pair_map_round_trips_on_two_dimensional_support() {
        let tech = TechnologySpec::three_flexible(
            Coefficient::constant(0.25),
            Coefficient::constant(0.30),
            Coefficient::Affine2 { intercept: 0.15, slope_a: 0.1, slope_b: 0.0 },
            Coefficient::constant(0.15),
            Coefficient::Affine2 { intercept: 0.15, slope_a: 0.0, slope_b: 0.1 },
            Coefficient::Affine2 { intercept: 0.0, slope_a: 0.5, slope_b: 0.5 },
            OmegaSupport::Box { a_min: 0.0, a_max: 1.0, b_min: 0.0, b_max: 1.0 },
        )
        .unwrap();
        assert!(tech.validate_assumptions(41).all_passed());
        for &(a, b) in &[(0.2, 0.7), (0.5, 0.5), (0.9, 0.1)] {
            let w = Omega::Pair(a, b);
            let r12 = tech.flex_ratio(w);
            let r23 = tech.flex_ratio_23(w);
            match tech.ratio_pair_to_omega(r12, r23).unwrap() {
                Omega::Pair(x, y) => {
                    assert_relative_eq!(x, a, epsilon = 1e-8);
                    assert_relative_eq!(y, b, epsilon = 1e-8);
                }
                Omega::Scalar(_) => panic!("expected pair"),
            }
        }
    }

    #[test]
    fn non_injective_pair_map_is_detected() {
        // Both ratios depend on omega_a only, so omega_b is unidentified.
        let tech = TechnologySpec::three_flexible(
            Coefficient::constant(0.25),
            Coefficient::constant(0.30),
            Coefficient::Affine2 { intercept: 0.15, slope_a: 0.1, slope_b: 0.0 },
            Coefficient::constant(0.15),
            Coefficient::constant(0.2),
            Coefficient::Affine2 { intercept: 0.0, slope_a: 0.5, slope_b: 0.5 },
            OmegaSupport::Box { a_min: 0.0, a_max: 1.0, b_min: 0.0, b_max: 1.0 },
        )
        .unwrap();
        let report = tech.validate_assumptions(41);
        assert!(!report.check(AssumptionName::InjectiveRatioPair).unwrap().passed);
    }

    proptest! {
        /// Ratio round trip on randomly parametrized valid affine
        /// technologies.
        #[test]
        fn ratio_round_trip_affine(
            a1 in 0.1f64..0.3,
            slope in 0.05f64..0.2,
            a2 in 0.1f64..0.3,
            w in 0.0f64..1.0,
        ) {
            let tech = TechnologySpec::baseline(
                Coefficient::constant(0.25),
                Coefficient::constant(0.30),
                Coefficient::Affine { intercept: a1, slope },
                Coefficient::constant(a2),
                Coefficient::Affine { intercept: 0.0, slope: 1.0 },
                OmegaSupport::interval(0.0, 1.0),
            ).unwrap();
            prop_assume!(tech.validate_assumptions(64).all_passed());
            let r = tech.flex_ratio(Omega::Scalar(w));
            let back = tech.ratio_to_omega(r).unwrap();
            prop_assert!((back - w).abs() <= 1e-10);
        }

        /// Coefficients from a validated spec satisfy the structural
        /// bounds everywhere on a fine grid.
        #[test]
        fn eval_betas_respects_invariants(seed_slope in 0.02f64..0.15) {
            let tech = TechnologySpec::baseline(
                Coefficient::constant(0.25),
                Coefficient::constant(0.30),
                Coefficient::Affine { intercept: 0.2, slope: seed_slope },
                Coefficient::constant(0.2),
                Coefficient::Affine { intercept: 0.0, slope: 1.0 },
                OmegaSupport::interval(0.0, 1.0),
            ).unwrap();
            prop_assume!(tech.validate_assumptions(64).all_passed());
            for w in tech.support().grid(1000) {
                let b = tech.eval_betas(w).unwrap();
                prop_assert!(b.flex.iter().all(|&v| v > 0.0));
                prop_assert!(b.flex_sum() < 1.0);
            }
        }
    }
}
