//! Transfer matrices, dominant-eigenpair perturbation analysis and assembly of
//! the approximate logical Markovian model with its error-bound constants.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cycle::{LogicalState, OutcomeSet};
use crate::error::{check_width, Error, Result};
use crate::extraction::{
    entanglement_fidelity, single_cycle_channel, CycleTransfer, MeasTransfer, PrepTransfer,
};
use crate::pauli::{PauliEigenTable, PauliLabel, XzMask};

/// Largest syndrome-space dimension handled by the dense eigensolver.
pub const MAX_EIGEN_DIM: usize = 4096;

/// Tolerance on `γ^prep = γ` for the preparation requirement.
pub const PREP_MATCH_TOL: f64 = 1e-12;

/// Largest single-cycle infidelity covered by the bound.
pub const EPS1_THRESHOLD: f64 = 1.0 / 64.0;

/// Largest a-priori perturbation norm accepted in place of the infidelity condition.
pub const EPS_PRIME_THRESHOLD: f64 = 0.25;

const IMAG_TOL: f64 = 1e-9;
const MIN_WINDOW: f64 = 1e-8;

/// `F_P`, `T_P = √Σ F_P √Σ` and the syndrome marginal for one logical Pauli.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix {
    pub pauli: usize,
    pub f: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub gamma: DVector<f64>,
}

impl TransferMatrix {
    pub fn sqrt_gamma(&self) -> DVector<f64> {
        self.gamma.map(f64::sqrt)
    }
}

/// Builds `F_P[i,j] = W_P[i,j] / γ_i` (1 where `γ_i = 0`) and `T_P`.
pub fn transfer_matrix(t: &CycleTransfer, p: usize) -> Result<TransferMatrix> {
    let gamma = t.syndrome_marginal()?.clone();
    if p >= t.num_paulis() {
        return Err(Error::Dimension {
            expected: t.num_paulis(),
            actual: p,
        });
    }
    let w = t.weighted(p);
    let dim = t.dim();
    let f = DMatrix::from_fn(dim, dim, |i, j| {
        if gamma[i] == 0.0 {
            1.0
        } else {
            w[(i, j)] / gamma[i]
        }
    });
    let sq = gamma.map(f64::sqrt);
    let tm = DMatrix::from_fn(dim, dim, |i, j| sq[i] * f[(i, j)] * sq[j]);
    Ok(TransferMatrix {
        pauli: p,
        f,
        t: tm,
        gamma,
    })
}

/// Three sizes of the perturbation `E_P = (N − F_P)/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationNorms {
    /// `γᵀ E_P γ`.
    pub gamma_e: f64,
    /// `‖√Σ E_P √Σ‖_F`.
    pub frobenius: f64,
    /// `‖√Σ E_P √Σ‖_op`.
    pub opnorm: f64,
}

pub fn perturbation_norms(tm: &TransferMatrix) -> PerturbationNorms {
    let dim = tm.f.nrows();
    let e = tm.f.map(|v| (1.0 - v) / 2.0);
    let sq = tm.sqrt_gamma();
    let scaled = DMatrix::from_fn(dim, dim, |i, j| sq[i] * e[(i, j)] * sq[j]);
    PerturbationNorms {
        gamma_e: tm.gamma.dot(&(&e * &tm.gamma)),
        frobenius: scaled.norm(),
        opnorm: operator_norm(&scaled),
    }
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

fn check_dim(tm: &TransferMatrix) -> Result<()> {
    if tm.t.nrows() > MAX_EIGEN_DIM {
        Err(Error::Capacity(format!(
            "eigen-decomposition of dimension {} exceeds {MAX_EIGEN_DIM}",
            tm.t.nrows()
        )))
    } else {
        Ok(())
    }
}

fn unit_eigenvector(tm: &TransferMatrix, lambda: f64) -> (f64, DVector<f64>) {
    let dim = tm.t.nrows();
    let sq = tm.sqrt_gamma();
    let norm = sq.norm();
    // √γ is an exact eigenvector in rank-one situations; keep it bit-exact there.
    if norm > 0.0 {
        let u = &sq / norm;
        let rayleigh = u.dot(&(&tm.t * &u));
        let scale = tm.t.amax().max(1.0);
        if (&tm.t * &u - &u * rayleigh).amax() <= 1e-15 * scale && (rayleigh - lambda).abs() <= 1e-9
        {
            return (rayleigh, u);
        }
    }
    let shifted = &tm.t - DMatrix::identity(dim, dim) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |best, (i, &s)| if s < best.1 { (i, s) } else { best },
        )
        .0;
    let mut v: DVector<f64> = v_t.row(k).transpose();
    v /= v.norm();
    let overlap = sq.dot(&v);
    let flip = if overlap.abs() > 1e-14 {
        overlap < 0.0
    } else {
        v.iter().find(|x| x.abs() > 1e-14).is_some_and(|x| *x < 0.0)
    };
    if flip {
        v = -v;
    }
    let rayleigh = v.dot(&(&tm.t * &v));
    (rayleigh, v)
}

/// Selects the unique eigenvalue with `|1 − λ| ≤ window` and its unit right
/// eigenvector, oriented so that `⟨√γ|v⟩ ≥ 0`.
pub fn dominant_eigenpair(tm: &TransferMatrix, window: f64) -> Result<(f64, DVector<f64>)> {
    check_dim(tm)?;
    let eigs = tm.t.complex_eigenvalues();
    let inside: Vec<_> = eigs
        .iter()
        .filter(|z| (**z - 1.0).norm() <= window)
        .collect();
    match inside.as_slice() {
        [] => Err(Error::Hypothesis(format!(
            "no eigenvalue within {window} of 1 for Pauli {}",
            tm.pauli
        ))),
        [z] if z.im.abs() > IMAG_TOL => Err(Error::Hypothesis(format!(
            "eigenvalue {z} within the window is not real"
        ))),
        [z] => Ok(unit_eigenvector(tm, z.re)),
        many => Err(Error::Hypothesis(format!(
            "{} eigenvalues within {window} of 1 for Pauli {}",
            many.len(),
            tm.pauli
        ))),
    }
}

/// Real eigenvalue of largest magnitude, for analyses outside the bound's hypotheses.
pub fn largest_real_eigenpair(tm: &TransferMatrix) -> Result<(f64, DVector<f64>)> {
    check_dim(tm)?;
    let eigs = tm.t.complex_eigenvalues();
    let best = eigs
        .iter()
        .filter(|z| z.im.abs() <= IMAG_TOL)
        .max_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))
        .ok_or_else(|| Error::Hypothesis("transfer matrix has no real eigenvalue".into()))?;
    Ok(unit_eigenvector(tm, best.re))
}

/// Dominant eigenvalue, eigenvector, `‖E′‖_op` and the geometric-sum vector `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenAnalysis {
    pub lambda: f64,
    pub v: DVector<f64>,
    pub residual_norm: f64,
    pub f_vec: DVector<f64>,
}

/// `E′ = T − λ v vᵀ`; returns `‖E′‖_op` and `f` solving `(I − E′ᵀ/λ) f = v`.
pub fn residual_and_f(
    tm: &TransferMatrix,
    lambda: f64,
    v: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let e_prime = residual_matrix(tm, lambda, v);
    let residual = operator_norm(&e_prime);
    if residual >= lambda.abs() {
        return Err(Error::Hypothesis(format!(
            "residual norm {residual} is not below the eigenvalue {lambda}"
        )));
    }
    let dim = v.len();
    let system = DMatrix::identity(dim, dim) - e_prime.transpose() / lambda;
    let f = system
        .lu()
        .solve(v)
        .ok_or_else(|| Error::Hypothesis("geometric-sum system is singular".into()))?;
    Ok((residual, f))
}

/// `E′ = T − λ v vᵀ`.
pub fn residual_matrix(tm: &TransferMatrix, lambda: f64, v: &DVector<f64>) -> DMatrix<f64> {
    &tm.t - v * v.transpose() * lambda
}

/// `ε = 2(1+√2)√ε₁` and `G′ = 1 + 1/(1 − ε/(1 − 2√ε₁))`.
pub fn bound_constants(eps1: f64) -> (f64, f64) {
    let root = eps1.max(0.0).sqrt();
    let eps = 2.0 * (1.0 + std::f64::consts::SQRT_2) * root;
    (eps, 1.0 + 1.0 / (1.0 - eps / (1.0 - 2.0 * root)))
}

/// Constants when the perturbation norm `ε′` is known a priori:
/// `ε = (1+√2)ε′` and `G′ = 1 + 1/(1 − ε/(1 − ε′))`.
pub fn bound_constants_from_norm(eps_prime: f64) -> (f64, f64) {
    let eps = (1.0 + std::f64::consts::SQRT_2) * eps_prime;
    (eps, 1.0 + 1.0 / (1.0 - eps / (1.0 - eps_prime)))
}

/// Exact eigenvalue series `λ^(K)` for `K = 0..=k_max` of the total logical channel,
/// `measᵀ W_P^K diag(γ^prep) prep`.
pub fn exact_eigenvalue_series(
    t: &CycleTransfer,
    pt: &PrepTransfer,
    mt: &MeasTransfer,
    p: usize,
    k_max: usize,
) -> Result<Vec<f64>> {
    t.syndrome_marginal()?;
    check_width(t.dim(), pt.gamma().len())?;
    check_width(t.dim(), mt.tables().len())?;
    let meas = mt.vector(p);
    let mut state = pt.gamma().component_mul(&pt.vector(p));
    let w = t.weighted(p);
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(meas.dot(&state));
    for _ in 0..k_max {
        state = w * state;
        out.push(meas.dot(&state));
    }
    Ok(out)
}

/// Exact `λ^(K)_{p,m,P}`.
pub fn exact_eigenvalue(
    t: &CycleTransfer,
    pt: &PrepTransfer,
    mt: &MeasTransfer,
    p: usize,
    k: usize,
) -> Result<f64> {
    Ok(exact_eigenvalue_series(t, pt, mt, p, k)?[k])
}

/// Options for [`build_model`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModelOptions {
    /// Eigenvalue window; defaults to `ε` (floored at 1e-8).
    pub eps_window: Option<f64>,
    /// A-priori perturbation norm `ε′` replacing the infidelity-based constants.
    pub eps_prime: Option<f64>,
    /// Record eigenvalue-window failures as hypothesis failures instead of erroring.
    pub lenient: bool,
}

/// The approximate logical Markovian model and its bound constants.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovModel {
    pub n_l: usize,
    pub chi: PauliEigenTable,
    pub analyses: Vec<EigenAnalysis>,
    /// `c_prep[prep][P]`.
    pub c_prep: Vec<Vec<f64>>,
    /// `c_meas[meas][P]`.
    pub c_meas: Vec<Vec<f64>>,
    pub lambda1: PauliEigenTable,
    pub f1: f64,
    pub eps1: f64,
    pub eps: f64,
    pub g_prime: f64,
    pub g_total: f64,
    pub eps_window: f64,
    pub hypothesis_ok: bool,
    /// Human-readable reasons when `hypothesis_ok` is false.
    pub hypothesis_failures: Vec<String>,
}

impl MarkovModel {
    /// `C^prep C^meas χ_P^K`.
    pub fn predict_eigenvalue(&self, prep: usize, meas: usize, p: usize, k: usize) -> f64 {
        self.c_prep[prep][p] * self.c_meas[meas][p] * powi(self.chi.at(p), k)
    }

    /// Eigenvalue-level bound `G′ ε^K`.
    pub fn eigen_bound(&self, k: usize) -> f64 {
        self.g_prime * powi(self.eps, k)
    }

    /// Probability-level bound `G ε^K` with `G = G′ √D`.
    pub fn probability_bound(&self, k: usize) -> f64 {
        self.g_total * powi(self.eps, k)
    }

    pub fn to_json(&self) -> Value {
        let chi: serde_json::Map<String, Value> = (0..self.chi.len())
            .map(|p| {
                (
                    PauliLabel::from_table_index(self.n_l, p).to_string(),
                    json!(self.chi.at(p)),
                )
            })
            .collect();
        let per_pauli = |rows: &[Vec<f64>]| -> Vec<Value> {
            rows.iter()
                .map(|row| {
                    let m: serde_json::Map<String, Value> = row
                        .iter()
                        .enumerate()
                        .map(|(p, v)| {
                            (
                                PauliLabel::from_table_index(self.n_l, p).to_string(),
                                json!(v),
                            )
                        })
                        .collect();
                    Value::Object(m)
                })
                .collect()
        };
        json!({
            "chi": chi,
            "c_prep": per_pauli(&self.c_prep),
            "c_meas": per_pauli(&self.c_meas),
            "eps1": self.eps1,
            "eps": self.eps,
            "g_prime": self.g_prime,
            "g_total": self.g_total,
            "f1": self.f1,
            "eps_window": self.eps_window,
            "hypothesis_ok": self.hypothesis_ok,
            "hypothesis_failures": self.hypothesis_failures,
        })
    }
}

fn powi(x: f64, k: usize) -> f64 {
    x.powi(k as i32)
}

/// Constructs the model for the given preparation and measurement transfers.
pub fn build_model(
    t: &CycleTransfer,
    preps: &[PrepTransfer],
    meas: &[MeasTransfer],
    opts: &ModelOptions,
) -> Result<MarkovModel> {
    let gamma = t.syndrome_marginal()?.clone();
    let lambda1 = single_cycle_channel(t)?;
    let f1 = entanglement_fidelity(&lambda1);
    let eps1 = (1.0 - f1).max(0.0);
    let mut failures = Vec::new();
    let (eps, g_prime) = match opts.eps_prime {
        Some(ep) => {
            if ep > EPS_PRIME_THRESHOLD {
                failures.push(format!(
                    "perturbation norm {ep} exceeds {EPS_PRIME_THRESHOLD}"
                ));
            }
            bound_constants_from_norm(ep)
        }
        None => {
            if eps1 > EPS1_THRESHOLD {
                failures.push(format!("single-cycle infidelity {eps1} exceeds 1/64"));
            }
            bound_constants(eps1)
        }
    };
    for (i, pt) in preps.iter().enumerate() {
        check_width(t.dim(), pt.gamma().len())?;
        let gap = (pt.gamma() - &gamma).amax();
        if gap > PREP_MATCH_TOL {
            failures.push(format!(
                "preparation {i} syndrome distribution differs from the cycle marginal by {gap:e}"
            ));
        }
    }
    for mt in meas {
        check_width(t.dim(), mt.tables().len())?;
    }
    let window = opts.eps_window.unwrap_or(eps.max(MIN_WINDOW));
    let strict = failures.is_empty() && !opts.lenient;
    let results: Vec<Result<(EigenAnalysis, Option<String>)>> = (0..t.num_paulis())
        .into_par_iter()
        .map(|p| analyze_pauli(t, p, window, strict))
        .collect();
    let mut analyses = Vec::with_capacity(results.len());
    for r in results {
        let (a, note) = r?;
        if let Some(note) = note {
            failures.push(note);
        }
        analyses.push(a);
    }
    let sq = gamma.map(f64::sqrt);
    let c_prep = preps
        .iter()
        .map(|pt| {
            analyses
                .iter()
                .enumerate()
                .map(|(p, a)| a.f_vec.dot(&sq.component_mul(&pt.vector(p))))
                .collect()
        })
        .collect();
    let c_meas = meas
        .iter()
        .map(|mt| {
            analyses
                .iter()
                .enumerate()
                .map(|(p, a)| sq.component_mul(&mt.vector(p)).dot(&a.v))
                .collect()
        })
        .collect();
    let n_l = t.n_l();
    let chi = PauliEigenTable::from_values(n_l, analyses.iter().map(|a| a.lambda).collect())?;
    Ok(MarkovModel {
        n_l,
        chi,
        analyses,
        c_prep,
        c_meas,
        lambda1,
        f1,
        eps1,
        eps,
        g_prime,
        g_total: g_prime * ((1usize << n_l) as f64).sqrt(),
        eps_window: window,
        hypothesis_ok: failures.is_empty(),
        hypothesis_failures: failures,
    })
}

fn analyze_pauli(
    t: &CycleTransfer,
    p: usize,
    window: f64,
    strict: bool,
) -> Result<(EigenAnalysis, Option<String>)> {
    let tm = transfer_matrix(t, p)?;
    let label = PauliLabel::from_table_index(t.n_l(), p);
    let (pair, mut note) = match dominant_eigenpair(&tm, window) {
        Ok(pair) => (pair, None),
        Err(e) if !strict => (
            largest_real_eigenpair(&tm)?,
            Some(format!("eigenvalue window ({label}): {e}")),
        ),
        Err(e) => return Err(e),
    };
    let (lambda, v) = pair;
    let (residual_norm, f_vec) = match residual_and_f(&tm, lambda, &v) {
        Ok(r) => r,
        Err(e) if !strict => {
            note.get_or_insert(format!("residual ({label}): {e}"));
            (operator_norm(&residual_matrix(&tm, lambda, &v)), v.clone())
        }
        Err(e) => return Err(e),
    };
    Ok((
        EigenAnalysis {
            lambda,
            v,
            residual_norm,
            f_vec,
        },
        note,
    ))
}

/// `tr(E_e P)` for each logical Pauli: the signed count of labels in the set for
/// Z-type `P`, zero otherwise.
pub fn povm_traces(n_l: usize, outcome: &OutcomeSet) -> Result<Vec<f64>> {
    for x in outcome {
        check_width(n_l, x.len())?;
    }
    let xs: Vec<u32> = outcome.iter().map(|x| x.index() as u32).collect();
    Ok((0..1usize << (2 * n_l))
        .map(|p| {
            let m = XzMask::from_table_index(n_l, p);
            if m.x != 0 {
                0.0
            } else {
                xs.iter()
                    .map(|&x| {
                        if (m.z & x).count_ones() % 2 == 1 {
                            -1.0
                        } else {
                            1.0
                        }
                    })
                    .sum()
            }
        })
        .collect())
}

/// `D⁻¹ Σ_P tr(E_e P) λ_P tr(P σ)` with `λ_P` supplied per Pauli table index.
pub fn outcome_probability(
    sigma: &LogicalState,
    outcome: &OutcomeSet,
    mut eigenvalue: impl FnMut(usize) -> Result<f64>,
) -> Result<f64> {
    let n_l = sigma.n_l();
    let traces = povm_traces(n_l, outcome)?;
    let mut total = 0.0;
    for (p, tr) in traces.iter().enumerate() {
        let e = sigma.expectations()[p];
        if *tr != 0.0 && e != 0.0 {
            total += tr * e * eigenvalue(p)?;
        }
    }
    Ok(total / (1usize << n_l) as f64)
}

/// Model probability of an outcome set after `k` cycles.
pub fn predict_probability(
    model: &MarkovModel,
    prep: usize,
    meas: usize,
    k: usize,
    sigma: &LogicalState,
    outcome: &OutcomeSet,
) -> Result<f64> {
    check_width(model.n_l, sigma.n_l())?;
    outcome_probability(sigma, outcome, |p| {
        Ok(model.predict_eigenvalue(prep, meas, p, k))
    })
}

/// Exact probability of an outcome set after `k` cycles.
pub fn exact_probability(
    t: &CycleTransfer,
    pt: &PrepTransfer,
    mt: &MeasTransfer,
    k: usize,
    sigma: &LogicalState,
    outcome: &OutcomeSet,
) -> Result<f64> {
    check_width(t.n_l(), sigma.n_l())?;
    outcome_probability(sigma, outcome, |p| exact_eigenvalue(t, pt, mt, p, k))
}

/// `√D · max_P |ε_P|`.
pub fn pauli_diag_probability_bound(eig_errors: &[f64], d: usize) -> f64 {
    (d as f64).sqrt() * eig_errors.iter().fold(0.0f64, |m, e| m.max(e.abs()))
}

/// One row of [`lambda1_first_order_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct FirstOrderRow {
    pub pauli: String,
    pub lambda1: f64,
    pub chi: f64,
    pub gap: f64,
}

/// Compares `λ_{1,P} = γᵀ F_P γ`, the first-order estimate, with the dominant eigenvalue `χ_P`.
pub fn lambda1_first_order_report(t: &CycleTransfer) -> Result<Vec<FirstOrderRow>> {
    let lambda1 = single_cycle_channel(t)?;
    let (eps, _) = bound_constants((1.0 - entanglement_fidelity(&lambda1)).max(0.0));
    (0..t.num_paulis())
        .map(|p| {
            let tm = transfer_matrix(t, p)?;
            let chi = match dominant_eigenpair(&tm, eps.max(MIN_WINDOW)) {
                Ok((l, _)) => l,
                Err(_) => largest_real_eigenpair(&tm)?.0,
            };
            let l1 = lambda1.at(p);
            Ok(FirstOrderRow {
                pauli: PauliLabel::from_table_index(t.n_l(), p).to_string(),
                lambda1: l1,
                chi,
                gap: (l1 - chi).abs(),
            })
        })
        .collect()
}
