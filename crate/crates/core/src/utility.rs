//! Representative utility, multinomial logit probabilities and the panel
//! log-likelihood.

use serde::{Deserialize, Serialize};

use crate::data::{ChoiceDataset, ChoiceTask, PersonRecord};
use crate::error::{Error, Result};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

/// How a person-level parameter vector maps onto alternative attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `V = Σ_r params[r] · x[attributes[r]]`.
    LinearPreference { attributes: Vec<usize> },
    /// `V = α·d + exp(β)·(−p + Σ_r γ_r · x[wtp_attributes[r]])`, with the
    /// parameter vector laid out as `[α, β, γ_1, …, γ_m]`.
    WtpSpace {
        mod_dummy: usize,
        price: usize,
        wtp_attributes: Vec<usize>,
    },
}

impl UtilitySpec {
    pub fn n_params(&self) -> usize {
        match self {
            UtilitySpec::LinearPreference { attributes } => attributes.len(),
            UtilitySpec::WtpSpace { wtp_attributes, .. } => 2 + wtp_attributes.len(),
        }
    }

    /// Human-readable parameter names given the dataset attribute names.
    pub fn param_names(&self, attribute_names: &[String]) -> Vec<String> {
        let name = |i: usize| {
            attribute_names
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("x{i}"))
        };
        match self {
            UtilitySpec::LinearPreference { attributes } => {
                attributes.iter().map(|&i| name(i)).collect()
            }
            UtilitySpec::WtpSpace { wtp_attributes, .. } => {
                let mut out = vec!["alpha".to_string(), "beta".to_string()];
                out.extend(wtp_attributes.iter().map(|&i| format!("wtp_{}", name(i))));
                out
            }
        }
    }

    /// Checks that every referenced attribute exists and that the price
    /// column is not reused as a non-price attribute.
    pub fn check(&self, n_attributes: usize) -> Result<()> {
        let check_idx = |i: usize| {
            if i >= n_attributes {
                Err(Error::Shape(format!(
                    "attribute index {i} out of range for {n_attributes} attributes"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            UtilitySpec::LinearPreference { attributes } => {
                if attributes.is_empty() {
                    return Err(Error::Config("linear utility needs at least one attribute".into()));
                }
                attributes.iter().try_for_each(|&i| check_idx(i))
            }
            UtilitySpec::WtpSpace {
                mod_dummy,
                price,
                wtp_attributes,
            } => {
                check_idx(*mod_dummy)?;
                check_idx(*price)?;
                wtp_attributes.iter().try_for_each(|&i| check_idx(i))?;
                if wtp_attributes.contains(price) {
                    return Err(Error::Config(
                        "price column must be distinct from the WTP attributes".into(),
                    ));
                }
                if wtp_attributes.is_empty() {
                    return Err(Error::Config("WTP-space utility needs at least one WTP attribute".into()));
                }
                Ok(())
            }
        }
    }

    /// Representative utility of one alternative.
    ///
    /// `row` must have been validated against the spec; only `params` length
    /// is checked here.
    pub fn representative_utility(&self, params: &[f64], row: &[f64]) -> Result<f64> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        self.check(row.len())?;
        Ok(self.utility_unchecked(params, row))
    }

    #[inline]
    pub(crate) fn utility_unchecked(&self, params: &[f64], row: &[f64]) -> f64 {
        match self {
            UtilitySpec::LinearPreference { attributes } => attributes
                .iter()
                .zip(params)
                .map(|(&i, b)| b * row[i])
                .sum(),
            UtilitySpec::WtpSpace {
                mod_dummy,
                price,
                wtp_attributes,
            } => {
                let wtp: f64 = wtp_attributes
                    .iter()
                    .zip(&params[2..])
                    .map(|(&i, g)| g * row[i])
                    .sum();
                params[0] * row[*mod_dummy] + params[1].exp() * (-row[*price] + wtp)
            }
        }
    }

    /// MNL choice probabilities over the task's alternatives; unavailable
    /// alternatives get probability zero.
    pub fn mnl_probabilities(&self, params: &[f64], task: &ChoiceTask) -> Result<Vec<f64>> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let j = task.n_alternatives();
        if j == 0 || task.attributes.len() % j != 0 {
            return Err(Error::Shape("malformed task attribute matrix".into()));
        }
        let width = task.attributes.len() / j;
        self.check(width)?;
        if !task.available.iter().any(|a| *a) {
            return Err(Error::Shape("task has no available alternatives".into()));
        }
        let mut out = vec![0.0; j];
        self.probabilities_into(params, task, width, &mut out);
        Ok(out)
    }

    /// Softmax with max-subtraction, written into `out` (length J).
    pub(crate) fn probabilities_into(
        &self,
        params: &[f64],
        task: &ChoiceTask,
        width: usize,
        out: &mut [f64],
    ) {
        let mut max = f64::NEG_INFINITY;
        for (a, o) in out.iter_mut().enumerate() {
            if task.available[a] {
                let v = self.utility_unchecked(params, task.row(a, width));
                *o = v;
                if v > max {
                    max = v;
                }
            }
        }
        let mut total = 0.0;
        for (a, o) in out.iter_mut().enumerate() {
            if task.available[a] {
                *o = (*o - max).exp();
                total += *o;
            } else {
                *o = 0.0;
            }
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    /// Log-probability of the chosen alternative, floored at `ln(1e-300)`.
    /// Returns NaN when any utility is non-finite.
    #[inline]
    pub(crate) fn chosen_log_prob(&self, params: &[f64], task: &ChoiceTask, width: usize) -> f64 {
        let j = task.alt_ids.len();
        let mut buf = [0.0_f64; 32];
        let mut heap;
        let vals: &mut [f64] = if j <= 32 {
            &mut buf[..j]
        } else {
            heap = vec![0.0; j];
            &mut heap
        };
        let mut max = f64::NEG_INFINITY;
        for (a, v) in vals.iter_mut().enumerate() {
            if task.available[a] {
                *v = self.utility_unchecked(params, task.row(a, width));
                if !v.is_finite() {
                    return f64::NAN;
                }
                max = max.max(*v);
            }
        }
        let mut total = 0.0;
        for (a, v) in vals.iter().enumerate() {
            if task.available[a] {
                total += (v - max).exp();
            }
        }
        let lp = vals[task.chosen] - max - total.ln();
        lp.max(PROB_FLOOR.ln())
    }

    /// Panel log-likelihood of one person's sequence of choices.
    pub fn person_log_likelihood(&self, params: &[f64], person: &PersonRecord, width: usize) -> f64 {
        person
            .tasks
            .iter()
            .map(|t| self.chosen_log_prob(params, t, width))
            .sum()
    }

    /// Per-task chosen log-probabilities, in task order.
    pub fn pointwise_log_likelihood(
        &self,
        params: &[f64],
        person: &PersonRecord,
        width: usize,
        out: &mut Vec<f64>,
    ) {
        out.clear();
        out.extend(
            person
                .tasks
                .iter()
                .map(|t| self.chosen_log_prob(params, t, width)),
        );
    }
}

/// Convenience wrapper validating against a dataset before evaluating.
pub fn person_log_likelihood(
    spec: &UtilitySpec,
    params: &[f64],
    person: &PersonRecord,
    data: &ChoiceDataset,
) -> Result<f64> {
    if params.len() != spec.n_params() {
        return Err(Error::Shape(format!(
            "expected {} parameters, got {}",
            spec.n_params(),
            params.len()
        )));
    }
    spec.check(data.n_attributes())?;
    Ok(spec.person_log_likelihood(params, person, data.n_attributes()))
}

/// Role of a block of person-level parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockRole {
    /// Independent normal parameter (its own univariate normal block).
    Normal,
    /// Parameters governed by the configured mixing distribution.
    Mixing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub indices: Vec<usize>,
    pub role: BlockRole,
}

/// Disjoint cover of the person-level parameter vector by blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPartition {
    pub blocks: Vec<ParamBlock>,
}

impl ParamPartition {
    /// Linear utilities put every parameter in the mixing block. In WTP space
    /// α and β are separate univariate normal blocks (zero correlation
    /// between them) and γ is the mixing block.
    pub fn for_spec(spec: &UtilitySpec) -> Self {
        match spec {
            UtilitySpec::LinearPreference { attributes } => Self {
                blocks: vec![ParamBlock {
                    indices: (0..attributes.len()).collect(),
                    role: BlockRole::Mixing,
                }],
            },
            UtilitySpec::WtpSpace { wtp_attributes, .. } => Self {
                blocks: vec![
                    ParamBlock {
                        indices: vec![0],
                        role: BlockRole::Normal,
                    },
                    ParamBlock {
                        indices: vec![1],
                        role: BlockRole::Normal,
                    },
                    ParamBlock {
                        indices: (2..2 + wtp_attributes.len()).collect(),
                        role: BlockRole::Mixing,
                    },
                ],
            },
        }
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.indices.len()).sum()
    }

    /// True when the blocks are disjoint and cover `0..n_params`.
    pub fn is_valid(&self) -> bool {
        let n = self.n_params();
        let mut seen = vec![false; n];
        for b in &self.blocks {
            for &i in &b.indices {
                if i >= n || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn task(rows: Vec<Vec<f64>>, chosen: usize) -> ChoiceTask {
        let j = rows.len();
        ChoiceTask {
            task_id: "t".into(),
            alt_ids: (0..j).map(|a| a.to_string()).collect(),
            attributes: rows.concat(),
            available: vec![true; j],
            chosen,
        }
    }

    fn wtp() -> UtilitySpec {
        UtilitySpec::WtpSpace {
            mod_dummy: 0,
            price: 1,
            wtp_attributes: vec![2],
        }
    }

    #[test]
    fn wtp_utilities() {
        let u = wtp();
        assert_relative_eq!(
            u.representative_utility(&[0.0, 0.0, 0.0], &[0.0, 3.0, 1.0]).unwrap(),
            -3.0
        );
        assert_relative_eq!(
            u.representative_utility(&[0.0, 2f64.ln(), 5.0], &[0.0, 0.0, 1.0]).unwrap(),
            10.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn linear_utility_and_shape_error() {
        let u = UtilitySpec::LinearPreference {
            attributes: vec![0, 1],
        };
        assert_relative_eq!(u.representative_utility(&[1.0, -1.0], &[2.0, 3.0]).unwrap(), -1.0);
        assert!(matches!(
            u.representative_utility(&[1.0], &[2.0, 3.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn analytic_logit_values() {
        let u = UtilitySpec::LinearPreference { attributes: vec![0] };
        let equal = task(vec![vec![1.0]; 5], 0);
        for p in u.mnl_probabilities(&[0.7], &equal).unwrap() {
            assert_relative_eq!(p, 0.2, epsilon = 1e-15);
        }
        let gap = task(vec![vec![3f64.ln()], vec![0.0]], 0);
        let p = u.mnl_probabilities(&[1.0], &gap).unwrap();
        assert_relative_eq!(p[0], 0.75, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn person_log_likelihood_values() {
        let u = UtilitySpec::LinearPreference {
            attributes: vec![0, 1],
        };
        let person = PersonRecord {
            person_id: "p".into(),
            tasks: vec![task(vec![vec![1.0, 2.0]; 5], 2)],
        };
        assert_relative_eq!(
            u.person_log_likelihood(&[0.3, 0.1], &person, 2),
            0.2f64.ln(),
            epsilon = 1e-14
        );
        let person3 = PersonRecord {
            person_id: "p".into(),
            tasks: (0..3)
                .map(|t| task(vec![vec![t as f64, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]], t))
                .collect(),
        };
        assert_relative_eq!(
            u.person_log_likelihood(&[0.0, 0.0], &person3, 2),
            3.0 * (1.0f64 / 3.0).ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn unavailable_alternatives_get_zero() {
        let u = UtilitySpec::LinearPreference { attributes: vec![0] };
        let mut t = task(vec![vec![1.0], vec![2.0], vec![3.0]], 0);
        t.available[2] = false;
        let p = u.mnl_probabilities(&[1.0], &t).unwrap();
        assert_eq!(p[2], 0.0);
        assert_relative_eq!(p[0] + p[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn extreme_utilities_have_finite_floored_log_prob() {
        let u = UtilitySpec::LinearPreference { attributes: vec![0] };
        let t = task(vec![vec![-1000.0], vec![1000.0]], 0);
        let lp = u.chosen_log_prob(&[1.0], &t, 1);
        assert_relative_eq!(lp, PROB_FLOOR.ln());
    }

    #[test]
    fn wtp_partition_is_valid() {
        let p = ParamPartition::for_spec(&UtilitySpec::WtpSpace {
            mod_dummy: 0,
            price: 1,
            wtp_attributes: vec![2, 3, 4],
        });
        assert!(p.is_valid());
        assert_eq!(p.n_params(), 5);
        assert_eq!(p.blocks[2].indices, vec![2, 3, 4]);
    }

    #[test]
    fn price_must_be_distinct() {
        let u = UtilitySpec::WtpSpace {
            mod_dummy: 0,
            price: 1,
            wtp_attributes: vec![1, 2],
        };
        assert!(u.check(3).is_err());
    }

    proptest! {
        #[test]
        fn softmax_normalized_and_shift_invariant(
            vals in proptest::collection::vec(-700.0f64..700.0, 2..8),
            shift in -50.0f64..50.0,
        ) {
            let u = UtilitySpec::LinearPreference { attributes: vec![0, 1] };
            let rows: Vec<Vec<f64>> = vals.iter().map(|v| vec![*v, 1.0]).collect();
            let t = task(rows, 0);
            let p = u.mnl_probabilities(&[1.0, 0.0], &t).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let q = u.mnl_probabilities(&[1.0, shift], &t).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-14);
            }
        }

        #[test]
        fn raising_price_lowers_probability(
            beta in -3.0f64..1.0,
            gamma in -2.0f64..2.0,
            prices in proptest::collection::vec(0.0f64..5.0, 3),
            bump in 0.1f64..5.0,
            alt in 0usize..3,
        ) {
            let u = wtp();
            let rows: Vec<Vec<f64>> = prices.iter().enumerate()
                .map(|(j, p)| vec![(j == 0) as u8 as f64, *p, j as f64])
                .collect();
            let t = task(rows.clone(), 0);
            let mut bumped = rows;
            bumped[alt][1] += bump;
            let t2 = task(bumped, 0);
            let params = [0.3, beta, gamma];
            let p = u.mnl_probabilities(&params, &t).unwrap();
            let q = u.mnl_probabilities(&params, &t2).unwrap();
            prop_assert!(q[alt] < p[alt]);
        }

        #[test]
        fn log_likelihood_matches_product_form(
            params in proptest::collection::vec(-2.0f64..2.0, 2),
            xs in proptest::collection::vec(-5.0f64..5.0, 24),
            choices in proptest::collection::vec(0usize..4, 3),
        ) {
            let u = UtilitySpec::LinearPreference { attributes: vec![0, 1] };
            let tasks: Vec<ChoiceTask> = (0..3).map(|t| {
                let rows = (0..4).map(|a| vec![xs[t * 8 + 2 * a], xs[t * 8 + 2 * a + 1]]).collect();
                task(rows, choices[t])
            }).collect();
            let person = PersonRecord { person_id: "p".into(), tasks };
            let product: f64 = person.tasks.iter().map(|t| {
                let v: Vec<f64> = (0..4).map(|a| params[0] * t.row(a, 2)[0] + params[1] * t.row(a, 2)[1]).collect();
                let denom: f64 = v.iter().map(|x| x.exp()).sum();
                v[t.chosen].exp() / denom
            }).product();
            let ll = u.person_log_likelihood(&params, &person, 2);
            prop_assert!((ll - product.ln()).abs() < 1e-12);
        }
    }
}
