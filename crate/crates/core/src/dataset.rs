//! Firm-level cross-section data.
//!
//! A record stores exactly what the recovery pipeline is allowed to see —
//! output value, flexible input costs, and log state inputs, all in the
//! variant's canonical order — plus an optional hidden-truth block that
//! only simulated data carries.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::technology::{CoefficientVector, ModelVariant, Omega};

/// Output price plus one price per flexible input.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector<T> {
    pub output: T,
    pub flex: Vec<T>,
}

impl<T: Scalar> PriceVector<T> {
    pub fn unit(n_flex: usize) -> Self {
        Self { output: T::one(), flex: vec![T::one(); n_flex] }
    }

    pub fn all_positive(&self) -> bool {
        self.output > T::zero() && self.flex.iter().all(|&p| p > T::zero())
    }
}

/// Simulation-only truth attached to a record. Never present in ingested
/// real data unless the file explicitly carries `true_` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTruth<T> {
    pub omega: Omega<T>,
    pub eta: T,
    pub coefficients: CoefficientVector<T>,
    /// Log quantities of the flexible inputs.
    pub flex_logs: Vec<T>,
    pub prices: PriceVector<T>,
    /// Mean of the exponentiated shock used in the firm's objective.
    pub expected_exp_eta: T,
}

/// One firm-period observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmRecord<T> {
    pub firm_id: u64,
    /// Output price times output quantity (currency).
    pub output_value: T,
    /// Cost of each flexible input (currency), canonical order.
    pub flex_costs: Vec<T>,
    /// Log quantity of each state input, canonical order.
    pub state_logs: Vec<T>,
    /// Observed prices, when the dataset carries price columns.
    pub prices: Option<PriceVector<T>>,
    pub truth: Option<HiddenTruth<T>>,
}

impl<T: Scalar> FirmRecord<T> {
    /// Checks positivity and arity against the variant schema.
    pub fn validate(&self, variant: ModelVariant) -> Result<()> {
        if self.flex_costs.len() != variant.n_flex() {
            return Err(Error::Schema(format!(
                "firm {}: expected {} flexible costs for {variant}, got {}",
                self.firm_id,
                variant.n_flex(),
                self.flex_costs.len()
            )));
        }
        if self.state_logs.len() != variant.n_states() {
            return Err(Error::Schema(format!(
                "firm {}: expected {} state inputs for {variant}, got {}",
                self.firm_id,
                variant.n_states(),
                self.state_logs.len()
            )));
        }
        if !(self.output_value > T::zero()) || !self.output_value.is_finite() {
            return Err(Error::Data(format!(
                "firm {}: output value must be positive and finite",
                self.firm_id
            )));
        }
        for (i, &c) in self.flex_costs.iter().enumerate() {
            if !(c > T::zero()) || !c.is_finite() {
                return Err(Error::Data(format!(
                    "firm {}: flexible cost {i} must be positive and finite",
                    self.firm_id
                )));
            }
        }
        if self.state_logs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("firm {}: non-finite state input", self.firm_id)));
        }
        if let Some(p) = &self.prices {
            if p.flex.len() != variant.n_flex() {
                return Err(Error::Schema(format!(
                    "firm {}: expected {} flexible prices, got {}",
                    self.firm_id,
                    variant.n_flex(),
                    p.flex.len()
                )));
            }
            if !p.all_positive() {
                return Err(Error::Data(format!("firm {}: nonpositive price", self.firm_id)));
            }
        }
        Ok(())
    }
}

/// A cross-section of firms under one model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub variant: ModelVariant,
    pub firms: Vec<FirmRecord<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(variant: ModelVariant, firms: Vec<FirmRecord<T>>) -> Self {
        Self { variant, firms }
    }

    pub fn len(&self) -> usize {
        self.firms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.firms.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.firms {
            f.validate(self.variant)?;
        }
        Ok(())
    }

    /// Copy with every hidden-truth block removed.
    pub fn observables_only(&self) -> Dataset<T> {
        Dataset {
            variant: self.variant,
            firms: self
                .firms
                .iter()
                .map(|f| FirmRecord { truth: None, ..f.clone() })
                .collect(),
        }
    }

    /// Copy with all currency-denominated quantities (output value,
    /// flexible costs, and any prices, observed or hidden) multiplied by
    /// `factor`. Log quantities are unchanged.
    pub fn scale_currency(&self, factor: T) -> Dataset<T> {
        let scale_prices = |p: &PriceVector<T>| PriceVector {
            output: p.output * factor,
            flex: p.flex.iter().map(|&v| v * factor).collect(),
        };
        Dataset {
            variant: self.variant,
            firms: self
                .firms
                .iter()
                .map(|f| FirmRecord {
                    firm_id: f.firm_id,
                    output_value: f.output_value * factor,
                    flex_costs: f.flex_costs.iter().map(|&c| c * factor).collect(),
                    state_logs: f.state_logs.clone(),
                    prices: f.prices.as_ref().map(scale_prices),
                    truth: f.truth.as_ref().map(|t| HiddenTruth {
                        prices: scale_prices(&t.prices),
                        ..t.clone()
                    }),
                })
                .collect(),
        }
    }

    /// True coefficient values for one firm in report order, when truth is
    /// present.
    pub fn true_coefficients(&self, idx: usize) -> Option<Vec<T>> {
        self.firms[idx].truth.as_ref().map(|t| t.coefficients.report_values())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: u64) -> FirmRecord<f64> {
        FirmRecord {
            firm_id: id,
            output_value: 2.0,
            flex_costs: vec![0.5, 0.25],
            state_logs: vec![0.1, -0.2],
            prices: None,
            truth: None,
        }
    }

    #[test]
    fn validate_catches_nonpositive_cost() {
        let mut r = record(0);
        r.flex_costs[1] = 0.0;
        assert!(matches!(r.validate(ModelVariant::Baseline), Err(Error::Data(_))));
    }

    #[test]
    fn validate_catches_arity_mismatch() {
        let r = record(0);
        assert!(matches!(r.validate(ModelVariant::TwoLabor), Err(Error::Schema(_))));
    }

    #[test]
    fn observables_only_strips_truth() {
        let mut r = record(0);
        r.truth = Some(HiddenTruth {
            omega: Omega::Scalar(0.5),
            eta: 0.0,
            coefficients: CoefficientVector {
                state: vec![0.25, 0.3],
                flex: vec![0.25, 0.2],
                beta_0: 0.5,
            },
            flex_logs: vec![0.0, 0.0],
            prices: PriceVector::unit(2),
            expected_exp_eta: 1.0,
        });
        let ds = Dataset::new(ModelVariant::Baseline, vec![r]);
        let stripped = ds.observables_only();
        assert!(stripped.firms[0].truth.is_none());
        assert_eq!(stripped.firms[0].output_value, ds.firms[0].output_value);
    }

    #[test]
    fn scale_currency_touches_only_currency_fields() {
        let ds = Dataset::new(ModelVariant::Baseline, vec![record(0)]);
        let scaled = ds.scale_currency(7.3);
        assert_eq!(scaled.firms[0].output_value, 2.0 * 7.3);
        assert_eq!(scaled.firms[0].flex_costs[0], 0.5 * 7.3);
        assert_eq!(scaled.firms[0].state_logs, ds.firms[0].state_logs);
    }
}
