//! Softmax routing over gate reconstruction errors and task relatedness.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::gate::AutoencoderGate;
use crate::preprocess::{preprocess, ReferenceStats};
use crate::{Error, Matrix, Result};

/// Default routing softmax temperature.
pub const DEFAULT_TEMPERATURE: f64 = 2.0;
/// Default probability threshold for activating additional experts.
pub const DEFAULT_ACTIVATION_THRESHOLD: f64 = 0.1;
/// Default relatedness above which LwF is used instead of fine-tuning.
pub const DEFAULT_REL_THRESHOLD: f64 = 0.85;
/// Own-gate errors at or below this make relatedness undefined.
pub const MIN_ERROR_BASE: f64 = 1e-12;
/// Name reported when no prior task exists and the base model is used.
pub const BASE_MODEL: &str = "<base>";

/// How a new expert inherits from its prior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransferMethod {
    #[serde(rename = "lwf")]
    LwF,
    #[serde(rename = "finetune")]
    FineTune,
}

impl TransferMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TransferMethod::LwF => "lwf",
            TransferMethod::FineTune => "finetune",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lwf" => Some(TransferMethod::LwF),
            "finetune" => Some(TransferMethod::FineTune),
            _ => None,
        }
    }
}

impl fmt::Display for TransferMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordered gates sharing one standardization regime.
#[derive(Clone, Debug, PartialEq)]
pub struct GateEnsemble {
    gates: Vec<AutoencoderGate>,
    stats: ReferenceStats,
    temperature: f64,
}

impl GateEnsemble {
    pub fn new(stats: ReferenceStats, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        Ok(Self {
            gates: Vec::new(),
            stats,
            temperature,
        })
    }

    /// Builds an ensemble and validates every gate against it.
    pub fn with_gates(
        stats: ReferenceStats,
        temperature: f64,
        gates: impl IntoIterator<Item = AutoencoderGate>,
    ) -> Result<Self> {
        let mut e = Self::new(stats, temperature)?;
        for g in gates {
            e.push(g)?;
        }
        Ok(e)
    }

    /// Appends a gate; it must use this ensemble's statistics and a new name.
    pub fn push(&mut self, gate: AutoencoderGate) -> Result<()> {
        self.check_gate(&gate)?;
        if self.gates.iter().any(|g| g.task_name == gate.task_name) {
            return Err(Error::DuplicateTask(gate.task_name));
        }
        self.gates.push(gate);
        Ok(())
    }

    fn check_gate(&self, gate: &AutoencoderGate) -> Result<()> {
        if gate.stats_source_id != self.stats.source_id() {
            return Err(Error::StatsRegime {
                expected: self.stats.source_id().into(),
                found: gate.stats_source_id.clone(),
            });
        }
        if gate.input_dim() != self.stats.dim() {
            return Err(Error::Dimension(format!(
                "gate `{}` expects {} features, ensemble uses {}",
                gate.task_name,
                gate.input_dim(),
                self.stats.dim()
            )));
        }
        Ok(())
    }

    pub fn gates(&self) -> &[AutoencoderGate] {
        &self.gates
    }

    pub fn stats(&self) -> &ReferenceStats {
        &self.stats
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn index_of(&self, task: &str) -> Option<usize> {
        self.gates.iter().position(|g| g.task_name == task)
    }

    /// `errors[i][r]` is gate `i`'s reconstruction error on row `r`.
    pub fn error_table(&self, x: &Matrix<f32>) -> Result<Vec<Vec<f32>>> {
        let p = preprocess(x, &self.stats)?;
        self.gates.iter().map(|g| g.preprocessed_errors(&p)).collect()
    }
}

/// Outcome of routing one sample through every gate.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingDecision {
    pub errors: Vec<f32>,
    pub probabilities: Vec<f64>,
    pub selected: usize,
    pub activated: Vec<usize>,
}

/// `p_i = exp(−er_i / t) / Σ_j exp(−er_j / t)`, computed after subtracting the
/// smallest error.
pub fn gate_probabilities(errors: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    if errors.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::Parameter("reconstruction errors must be finite".into()));
    }
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = errors
        .iter()
        .map(|&e| libm::exp(-(e - min) / temperature))
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Index of the smallest value; ties go to the lowest index.
pub(crate) fn argmin<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Combines per-gate errors of one sample into a routing decision.
pub fn decide(errors: Vec<f32>, temperature: f64, activation_threshold: f64) -> Result<RoutingDecision> {
    let wide: Vec<f64> = errors.iter().map(|&e| e as f64).collect();
    let probabilities = gate_probabilities(&wide, temperature)?;
    let selected = argmin(&errors);
    let activated = probabilities
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= activation_threshold)
        .map(|(i, _)| i)
        .collect();
    Ok(RoutingDecision {
        errors,
        probabilities,
        selected,
        activated,
    })
}

/// Routes one raw sample.
pub fn route(
    ensemble: &GateEnsemble,
    x: &[f32],
    activation_threshold: f64,
) -> Result<RoutingDecision> {
    Ok(route_batch(ensemble, &Matrix::row_vector(x), activation_threshold)?
        .pop()
        .expect("one row"))
}

/// Routes every row of `x`.
pub fn route_batch(
    ensemble: &GateEnsemble,
    x: &Matrix<f32>,
    activation_threshold: f64,
) -> Result<Vec<RoutingDecision>> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let table = ensemble.error_table(x)?;
    (0..x.rows())
        .map(|r| {
            let errors = table.iter().map(|col| col[r]).collect();
            decide(errors, ensemble.temperature, activation_threshold)
        })
        .collect()
}

/// `Rel = 1 − (Er_a − Er_k) / Er_k`, unclamped.
pub fn task_relatedness(own_error: f64, prior_error: f64) -> Result<f64> {
    if !own_error.is_finite() || !prior_error.is_finite() {
        return Err(Error::Parameter("relatedness inputs must be finite".into()));
    }
    if own_error <= MIN_ERROR_BASE {
        return Err(Error::DegenerateErrorBase(own_error));
    }
    Ok(1.0 - (prior_error - own_error) / own_error)
}

/// Relatedness of the new task to one prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelatednessEntry {
    pub prior_task: String,
    /// Mean error of the new task's own gate on its validation data.
    pub own_error: f64,
    /// Mean error of the prior's gate on the same data.
    pub prior_error: f64,
    pub rel: f64,
}

/// Relatedness of a new task to every prior and the resulting transfer choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelatednessReport {
    pub new_task: String,
    pub entries: Vec<RelatednessEntry>,
    /// Index of the chosen prior in the ensemble; `None` means the base model.
    pub chosen_index: Option<usize>,
    pub chosen_prior: String,
    pub method: TransferMethod,
    pub rel_threshold: f64,
}

impl RelatednessReport {
    /// Relatedness of the chosen prior, if any.
    pub fn chosen_rel(&self) -> Option<f64> {
        self.chosen_index.map(|i| self.entries[i].rel)
    }
}

/// Compares the new gate with every prior gate on the new task's validation
/// data and picks the most related prior.
pub fn select_most_related(
    ensemble: &GateEnsemble,
    new_gate: &AutoencoderGate,
    validation: &Matrix<f32>,
    rel_threshold: f64,
) -> Result<RelatednessReport> {
    if validation.rows() == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let stats = ensemble.stats();
    let mut report = RelatednessReport {
        new_task: new_gate.task_name.clone(),
        entries: Vec::with_capacity(ensemble.len()),
        chosen_index: None,
        chosen_prior: BASE_MODEL.into(),
        method: TransferMethod::FineTune,
        rel_threshold,
    };
    if ensemble.is_empty() {
        return Ok(report);
    }
    let own_error = new_gate.mean_reconstruction_error(validation, stats)?;
    for gate in ensemble.gates() {
        let prior_error = gate.mean_reconstruction_error(validation, stats)?;
        report.entries.push(RelatednessEntry {
            prior_task: gate.task_name.clone(),
            own_error,
            prior_error,
            rel: task_relatedness(own_error, prior_error)?,
        });
    }
    let rels: Vec<f64> = report.entries.iter().map(|e| e.rel).collect();
    let best = argmax(&rels);
    report.chosen_index = Some(best);
    report.chosen_prior = report.entries[best].prior_task.clone();
    if rels[best] > rel_threshold {
        report.method = TransferMethod::LwF;
    }
    Ok(report)
}

/// Relatedness in both directions: `rel_ab` treats A as the new task and B as
/// the prior (A's validation data measured by B's gate), `rel_ba` the reverse.
pub fn relatedness_asymmetry_probe(
    gate_a: &AutoencoderGate,
    gate_b: &AutoencoderGate,
    val_a: &Matrix<f32>,
    val_b: &Matrix<f32>,
    stats: &ReferenceStats,
) -> Result<(f64, f64)> {
    let rel_ab = task_relatedness(
        gate_a.mean_reconstruction_error(val_a, stats)?,
        gate_b.mean_reconstruction_error(val_a, stats)?,
    )?;
    let rel_ba = task_relatedness(
        gate_b.mean_reconstruction_error(val_b, stats)?,
        gate_a.mean_reconstruction_error(val_b, stats)?,
    )?;
    Ok((rel_ab, rel_ba))
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Parameter(format!(
            "temperature must be positive, got {t}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn equal_errors_are_uniform() {
        let p = gate_probabilities(&[0.3, 0.3, 0.3], 2.0).unwrap();
        for v in p {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_gate_softmax() {
        let p = gate_probabilities(&[0.0, 2.0], 2.0).unwrap();
        assert_abs_diff_eq!(p[0], 0.7311, epsilon = 1e-4);
        assert_abs_diff_eq!(p[1], 0.2689, epsilon = 1e-4);
    }

    #[test]
    fn high_temperature_flattens() {
        let p = gate_probabilities(&[0.0, 2.0], 1e9).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn probability_errors() {
        assert_eq!(gate_probabilities(&[], 2.0), Err(Error::EmptyEnsemble));
        assert!(matches!(
            gate_probabilities(&[1.0], 0.0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            gate_probabilities(&[1.0], -1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn activation_threshold_example() {
        let d = decide(vec![0.0, 0.1, 8.0], 2.0, 0.1).unwrap();
        // exp(0), exp(-0.05), exp(-4) normalized by their sum 1.969545
        assert_abs_diff_eq!(d.probabilities[0], 0.507731, epsilon = 1e-5);
        assert_abs_diff_eq!(d.probabilities[1], 0.482969, epsilon = 1e-5);
        assert_abs_diff_eq!(d.probabilities[2], 0.009300, epsilon = 1e-5);
        assert_eq!(d.activated, vec![0, 1]);
        assert_eq!(d.selected, 0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmin(&[1.0, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[2.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn relatedness_examples() {
        assert_eq!(task_relatedness(0.37, 0.37).unwrap(), 1.0);
        assert_abs_diff_eq!(task_relatedness(0.5, 1.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(task_relatedness(0.5, 0.6).unwrap(), 0.8, epsilon = 1e-12);
        assert!(matches!(
            task_relatedness(0.0, 0.6),
            Err(Error::DegenerateErrorBase(_))
        ));
        // raw, unclamped values
        assert!(task_relatedness(0.1, 1.0).unwrap() < 0.0);
        assert!(task_relatedness(0.5, 0.1).unwrap() > 1.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [TransferMethod::LwF, TransferMethod::FineTune] {
            assert_eq!(TransferMethod::parse(m.as_str()), Some(m));
        }
    }

    proptest! {
        #[test]
        fn softmax_properties(
            errs in proptest::collection::vec(0.0f64..1.0, 1..8),
            shift in -5.0f64..5.0,
            t in 0.01f64..100.0,
            t2 in 0.01f64..100.0,
        ) {
            let p = gate_probabilities(&errs, t).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
            let shifted: Vec<f64> = errs.iter().map(|e| e + shift).collect();
            let ps = gate_probabilities(&shifted, t).unwrap();
            for (a, b) in p.iter().zip(&ps) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            for i in 0..errs.len() {
                for j in 0..errs.len() {
                    if errs[i] < errs[j] { prop_assert!(p[i] >= p[j]); }
                    if errs[i] + 1e-6 < errs[j] { prop_assert!(p[i] > p[j]); }
                }
            }
            let p2 = gate_probabilities(&errs, t2).unwrap();
            prop_assert_eq!(argmax(&p), argmin(&errs));
            prop_assert_eq!(argmax(&p2), argmin(&errs));
        }

        #[test]
        fn relatedness_monotone(er_k in 1e-6f64..10.0, a in 0.0f64..10.0, b in 0.0f64..10.0) {
            prop_assert_eq!(task_relatedness(er_k, er_k).unwrap(), 1.0);
            let ra = task_relatedness(er_k, a).unwrap();
            let rb = task_relatedness(er_k, b).unwrap();
            if a < b { prop_assert!(ra > rb); }
            prop_assert_eq!(ra < 1.0, a > er_k);
        }
    }
}
