//! End-to-end analysis pipeline and bound-verification sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cycle::{check_decoding_symmetry, ExperimentSettings, OutcomeSet, QecCycleSpec};
use crate::error::{Error, Result};
use crate::extraction::{
    cycle_transfer, effective_prep_transfer, meas_transfer, CycleTransfer, MeasTransfer,
    PrepTransfer,
};
use crate::markov::{
    build_model, exact_eigenvalue_series, outcome_probability, MarkovModel, ModelOptions,
};
use crate::numfmt::format_float;
use crate::pauli::PauliLabel;

/// Gaps below this many ulps of the compared values are floating-point rounding.
pub const ROUNDING_ULPS: f64 = 64.0;

/// Smallest gap the comparison of `a` and `b` can resolve.
pub fn rounding_floor(a: f64, b: f64) -> f64 {
    ROUNDING_ULPS * f64::EPSILON * a.abs().max(b.abs()).max(1.0)
}

/// Extracted transfers and the model built from them.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub transfer: CycleTransfer,
    pub preps: Vec<PrepTransfer>,
    pub meas: Vec<MeasTransfer>,
    pub model: MarkovModel,
    /// `None` when the exhaustive check exceeds its capacity.
    pub decoding_symmetric: Option<bool>,
}

/// Runs extraction for every preparation and measurement and builds the model.
pub fn analyze(
    spec: &QecCycleSpec,
    settings: &ExperimentSettings,
    opts: &ModelOptions,
) -> Result<Analysis> {
    let transfer = cycle_transfer(spec)?;
    let preps = settings
        .preps
        .iter()
        .map(|p| effective_prep_transfer(p, spec, &transfer))
        .collect::<Result<Vec<_>>>()?;
    let meas = settings
        .meas
        .iter()
        .map(|m| meas_transfer(m, spec))
        .collect::<Result<Vec<_>>>()?;
    let model = build_model(&transfer, &preps, &meas, opts)?;
    Ok(Analysis {
        transfer,
        preps,
        meas,
        model,
        decoding_symmetric: check_decoding_symmetry(&spec.code).ok(),
    })
}

/// Eigenvalue-level comparison for one (setting, Pauli, K).
#[derive(Clone, Debug, PartialEq)]
pub struct EigenRow {
    pub prep: usize,
    pub meas: usize,
    pub pauli: String,
    pub k: usize,
    pub exact: f64,
    pub model: f64,
    pub gap: f64,
    pub bound: f64,
    /// `gap ≤ bound` with no allowance for rounding.
    pub within_bound: bool,
    /// `gap ≤ bound + rounding_floor(exact, model)`.
    pub pass: bool,
}

/// Probability-level comparison for one (setting, outcome, K).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbRow {
    pub prep: usize,
    pub meas: usize,
    pub outcome: String,
    pub k: usize,
    pub exact: f64,
    pub model: f64,
    pub gap: f64,
    pub bound: f64,
    /// `gap ≤ bound` with no allowance for rounding.
    pub within_bound: bool,
    /// `gap ≤ bound + rounding_floor(exact, model)`.
    pub pass: bool,
}

/// Headline quantities of a verification run.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub f1: f64,
    pub eps1: f64,
    pub eps: f64,
    pub g_prime: f64,
    pub g_total: f64,
    pub smip: bool,
    pub decoding_symmetric: Option<bool>,
    pub hypothesis_ok: bool,
    pub hypothesis_failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub eigen: Vec<EigenRow>,
    pub probability: Vec<ProbRow>,
    pub summary: Summary,
}

/// Text label of an outcome set, e.g. `00+11`.
pub fn outcome_label(set: &OutcomeSet) -> String {
    set.iter()
        .map(|b| b.to_string())
        .collect::<Vec<_>>()
        .join("+")
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.eigen.iter().all(|r| r.pass) && self.probability.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> usize {
        self.eigen.iter().filter(|r| !r.pass).count()
            + self.probability.iter().filter(|r| !r.pass).count()
    }

    /// Checks whose gap exceeds the bound before the rounding allowance.
    pub fn strict_failures(&self) -> usize {
        self.eigen.iter().filter(|r| !r.within_bound).count()
            + self.probability.iter().filter(|r| !r.within_bound).count()
    }

    pub fn max_eigen_gap(&self) -> f64 {
        self.eigen.iter().fold(0.0, |m, r| m.max(r.gap))
    }

    pub fn max_probability_gap(&self) -> f64 {
        self.probability.iter().fold(0.0, |m, r| m.max(r.gap))
    }

    pub fn write_eigen_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "prep",
            "meas",
            "pauli",
            "k",
            "exact",
            "model",
            "gap",
            "bound",
            "within_bound",
            "pass",
        ])
        .map_err(csv_err)?;
        for r in &self.eigen {
            w.write_record([
                r.prep.to_string(),
                r.meas.to_string(),
                r.pauli.clone(),
                r.k.to_string(),
                format_float(r.exact),
                format_float(r.model),
                format_float(r.gap),
                format_float(r.bound),
                r.within_bound.to_string(),
                r.pass.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Validation(e.to_string()))
    }

    pub fn write_probability_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "prep",
            "meas",
            "outcome",
            "k",
            "exact",
            "model",
            "gap",
            "bound",
            "within_bound",
            "pass",
        ])
        .map_err(csv_err)?;
        for r in &self.probability {
            w.write_record([
                r.prep.to_string(),
                r.meas.to_string(),
                r.outcome.clone(),
                r.k.to_string(),
                format_float(r.exact),
                format_float(r.model),
                format_float(r.gap),
                format_float(r.bound),
                r.within_bound.to_string(),
                r.pass.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Validation(e.to_string()))
    }

    pub fn summary_json(&self) -> Value {
        let s = &self.summary;
        json!({
            "f1": s.f1,
            "eps1": s.eps1,
            "eps": s.eps,
            "g_prime": s.g_prime,
            "g_total": s.g_total,
            "smip": s.smip,
            "decoding_symmetric": s.decoding_symmetric,
            "hypothesis_ok": s.hypothesis_ok,
            "hypothesis_failures": s.hypothesis_failures,
            "eigen_checks": self.eigen.len(),
            "probability_checks": self.probability.len(),
            "failures": self.failures(),
            "strict_failures": self.strict_failures(),
            "rounding_ulps": ROUNDING_ULPS,
            "max_eigen_gap": self.max_eigen_gap(),
            "max_probability_gap": self.max_probability_gap(),
            "all_pass": self.all_pass(),
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv write failed: {e}"))
}

/// Compares exact and model predictions for every selected setting, Pauli and
/// `K` in `k_min..=k_max`, at both the eigenvalue and the probability level.
pub fn verify(
    analysis: &Analysis,
    settings: &ExperimentSettings,
    outcomes: &[OutcomeSet],
    k_min: usize,
    k_max: usize,
) -> Result<VerificationReport> {
    if k_min > k_max {
        return Err(Error::Validation(format!(
            "empty K range {k_min}..={k_max}"
        )));
    }
    let model = &analysis.model;
    let t = &analysis.transfer;
    let n_l = t.n_l();
    let per_setting = settings
        .pairs
        .par_iter()
        .map(|&(p, m)| -> Result<(Vec<EigenRow>, Vec<ProbRow>)> {
            let series: Vec<Vec<f64>> = (0..t.num_paulis())
                .map(|pauli| {
                    exact_eigenvalue_series(t, &analysis.preps[p], &analysis.meas[m], pauli, k_max)
                })
                .collect::<Result<_>>()?;
            let mut eigen = Vec::new();
            for (pauli, s) in series.iter().enumerate() {
                let label = PauliLabel::from_table_index(n_l, pauli).to_string();
                for (k, &exact) in s.iter().enumerate().skip(k_min) {
                    let predicted = model.predict_eigenvalue(p, m, pauli, k);
                    let gap = (exact - predicted).abs();
                    let bound = model.eigen_bound(k);
                    eigen.push(EigenRow {
                        prep: p,
                        meas: m,
                        pauli: label.clone(),
                        k,
                        exact,
                        model: predicted,
                        gap,
                        bound,
                        within_bound: gap <= bound,
                        pass: gap <= bound + rounding_floor(exact, predicted),
                    });
                }
            }
            let sigma = &settings.preps[p].sigma;
            let mut probability = Vec::new();
            for outcome in outcomes {
                let label = outcome_label(outcome);
                #[allow(clippy::needless_range_loop)]
                for k in k_min..=k_max {
                    let exact = outcome_probability(sigma, outcome, |pauli| Ok(series[pauli][k]))?;
                    let predicted = outcome_probability(sigma, outcome, |pauli| {
                        Ok(model.predict_eigenvalue(p, m, pauli, k))
                    })?;
                    let gap = (exact - predicted).abs();
                    let bound = model.probability_bound(k);
                    probability.push(ProbRow {
                        prep: p,
                        meas: m,
                        outcome: label.clone(),
                        k,
                        exact,
                        model: predicted,
                        gap,
                        bound,
                        within_bound: gap <= bound,
                        pass: gap <= bound + rounding_floor(exact, predicted),
                    });
                }
            }
            Ok((eigen, probability))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut eigen, mut probability) = (Vec::new(), Vec::new());
    for (e, p) in per_setting {
        eigen.extend(e);
        probability.extend(p);
    }
    Ok(VerificationReport {
        eigen,
        probability,
        summary: Summary {
            f1: model.f1,
            eps1: model.eps1,
            eps: model.eps,
            g_prime: model.g_prime,
            g_total: model.g_total,
            smip: t.smip(),
            decoding_symmetric: analysis.decoding_symmetric,
            hypothesis_ok: model.hypothesis_ok,
            hypothesis_failures: model.hypothesis_failures.clone(),
        },
    })
}
