//! Exact extraction of the syndrome Markov process and the corrected-frame
//! conditional logical channels of preparation, QEC cycles and measurement.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cycle::{MeasSpec, PrepSpec, QecCycleSpec};
use crate::error::{Error, Result};
use crate::numfmt::format_float;
use crate::pauli::{sign_table, PauliChannel, PauliEigenTable, PauliLabel, XzMask};

/// Default tolerance of [`check_smip`].
pub const SMIP_TOL: f64 = 1e-12;

/// Tolerance when comparing measurement statistics across logical inputs.
pub const MEAS_INDEPENDENCE_TOL: f64 = 1e-12;

/// One noise term split by register, in index form.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SplitTerm {
    pub logical: XzMask,
    pub x_s: u64,
    pub x_o: u64,
    pub prob: f64,
}

pub(crate) fn split_terms(ch: &PauliChannel) -> Vec<SplitTerm> {
    let registers = ch.layout().num_registers();
    ch.terms()
        .iter()
        .map(|(label, prob)| SplitTerm {
            logical: XzMask::from_label(&label.register(0)),
            x_s: label.x_part(1).index(),
            x_o: if registers > 3 {
                label.x_part(3).index()
            } else {
                0
            },
            prob: *prob,
        })
        .collect()
}

fn check_noise_layout(ch: &PauliChannel, expected: &[usize], what: &str) -> Result<()> {
    if ch.layout().widths() != expected {
        return Err(Error::Layout(format!(
            "{what} noise layout {:?} does not match {expected:?}",
            ch.layout()
        )));
    }
    ch.check_normalized()
}

/// Syndrome transition probabilities and γ-weighted corrected-frame eigenvalues of one cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleTransfer {
    n_l: usize,
    n_s: usize,
    gamma: DMatrix<f64>,
    weighted: Vec<DMatrix<f64>>,
    smip: bool,
    marginal: DVector<f64>,
    randomized: bool,
}

impl CycleTransfer {
    fn assemble(
        n_l: usize,
        n_s: usize,
        columns: Vec<(Vec<f64>, Vec<Vec<f64>>)>,
        randomized: bool,
    ) -> Self {
        let dim = 1usize << n_s;
        let num_p = 1usize << (2 * n_l);
        let gamma = DMatrix::from_fn(dim, dim, |i, j| columns[j].0[i]);
        let weighted = (0..num_p)
            .map(|p| DMatrix::from_fn(dim, dim, |i, j| columns[j].1[p][i]))
            .collect();
        let marginal = DVector::from_fn(dim, |i, _| gamma.row(i).sum() / dim as f64);
        let mut t = Self {
            n_l,
            n_s,
            gamma,
            weighted,
            smip: false,
            marginal,
            randomized,
        };
        t.smip = check_smip(&t, SMIP_TOL);
        t
    }

    pub fn n_l(&self) -> usize {
        self.n_l
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn num_paulis(&self) -> usize {
        self.weighted.len()
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    /// `γ[s_out, s_in]`.
    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// `W_P[s_out, s_in] = γ[s_out, s_in] · λ̃[s_out, s_in, P]` for the table index of `P`.
    pub fn weighted(&self, p: usize) -> &DMatrix<f64> {
        &self.weighted[p]
    }

    pub fn weighted_for(&self, p: &PauliLabel) -> Result<&DMatrix<f64>> {
        crate::error::check_width(self.n_l, p.num_qubits())?;
        Ok(&self.weighted[p.table_index()])
    }

    /// Whether the marginal-independence check passed at the default tolerance.
    pub fn smip(&self) -> bool {
        self.smip
    }

    pub fn is_randomized(&self) -> bool {
        self.randomized
    }

    /// Syndrome marginal `γ_s`; defined only when the marginal independence property holds.
    pub fn syndrome_marginal(&self) -> Result<&DVector<f64>> {
        if self.smip {
            Ok(&self.marginal)
        } else {
            Err(Error::Precondition(
                "syndrome marginal independence does not hold for this cycle".into(),
            ))
        }
    }

    /// Corrected-frame eigenvalue `λ̃[s_out, s_in, P]`, or 1 where `γ = 0`.
    pub fn conditional_eigenvalue(&self, s_out: usize, s_in: usize, p: usize) -> f64 {
        let g = self.gamma[(s_out, s_in)];
        if g == 0.0 {
            1.0
        } else {
            self.weighted[p][(s_out, s_in)] / g
        }
    }

    /// Column sums of `γ` equal 1 and `|W_P| ≤ γ` entrywise, within `tol`.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        for (j, col) in self.gamma.column_iter().enumerate() {
            let sum: f64 = col.sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::Validation(format!(
                    "column {j} of gamma sums to {sum}"
                )));
            }
        }
        for (p, w) in self.weighted.iter().enumerate() {
            for (a, g) in w.iter().zip(self.gamma.iter()) {
                if a.abs() > g + tol {
                    return Err(Error::Validation(format!(
                        "weighted eigenvalue {a} exceeds gamma {g} for Pauli {p}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// JSON export with nested row-major arrays.
    pub fn to_json(&self) -> Value {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        let weighted: serde_json::Map<String, Value> = self
            .weighted
            .iter()
            .enumerate()
            .map(|(p, w)| {
                (
                    PauliLabel::from_table_index(self.n_l, p).to_string(),
                    json!(rows(w)),
                )
            })
            .collect();
        json!({
            "n_l": self.n_l,
            "n_s": self.n_s,
            "randomized": self.randomized,
            "smip": self.smip,
            "gamma": rows(&self.gamma),
            "syndrome_marginal": if self.smip {
                json!(self.marginal.iter().copied().collect::<Vec<_>>())
            } else {
                Value::Null
            },
            "weighted_eigen": weighted,
        })
    }

    /// CSV export, one row per `(s_out, s_in, P)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
        w.write_record(["s_out", "s_in", "pauli", "gamma", "weighted_eigen"])
            .map_err(io)?;
        let dim = self.dim();
        for s_out in 0..dim {
            for s_in in 0..dim {
                for p in 0..self.num_paulis() {
                    w.write_record([
                        crate::pauli::BitString::from_index(self.n_s, s_out as u64).to_string(),
                        crate::pauli::BitString::from_index(self.n_s, s_in as u64).to_string(),
                        PauliLabel::from_table_index(self.n_l, p).to_string(),
                        format_float(self.gamma[(s_out, s_in)]),
                        format_float(self.weighted[p][(s_out, s_in)]),
                    ])
                    .map_err(io)?;
                }
            }
        }
        w.flush()
            .map_err(|e| Error::Validation(format!("csv write failed: {e}")))
    }
}

fn check_cycle(spec: &QecCycleSpec) -> Result<()> {
    spec.validate()
}

/// Exact one-cycle transfer tables. Delegates to [`randomized_cycle_transfer`]
/// when the spec enables syndrome randomization.
pub fn cycle_transfer(spec: &QecCycleSpec) -> Result<CycleTransfer> {
    if spec.randomize_syndrome {
        return randomized_cycle_transfer(spec);
    }
    check_cycle(spec)?;
    let l = spec.layout;
    let terms = split_terms(&spec.noise);
    let signs = sign_table(l.n_l);
    let s_star = spec.s_star_index();
    let columns = (0..l.num_syndromes() as u64)
        .into_par_iter()
        .map(|s_in| {
            let mut g = vec![0.0; l.num_syndromes()];
            let mut w = vec![vec![0.0; l.num_syndromes()]; l.num_paulis()];
            let enc = spec.code.encode_index(s_in);
            let undo_in = spec.cor_tilde(s_in);
            for t in &terms {
                let dec = spec.code.decode_index(enc ^ t.x_o);
                let s_out = s_in ^ t.x_s ^ s_star ^ dec;
                let net = spec
                    .cor_tilde(s_out)
                    .compose(spec.decoder.mask(dec ^ s_star))
                    .compose(t.logical)
                    .compose(undo_in);
                accumulate(
                    &mut g,
                    &mut w,
                    &signs[net.table_index(l.n_l)],
                    s_out as usize,
                    t.prob,
                );
            }
            (g, w)
        })
        .collect();
    Ok(CycleTransfer::assemble(l.n_l, l.n_s, columns, false))
}

fn accumulate(g: &mut [f64], w: &mut [Vec<f64>], signs: &[f64], s_out: usize, prob: f64) {
    g[s_out] += prob;
    for (row, sign) in w.iter_mut().zip(signs) {
        row[s_out] += prob * sign;
    }
}

/// Transfer tables of the cycle with syndrome randomization, averaged over all `σ`.
pub fn randomized_cycle_transfer(spec: &QecCycleSpec) -> Result<CycleTransfer> {
    check_cycle(spec)?;
    let l = spec.layout;
    let terms = split_terms(&spec.noise);
    let signs = sign_table(l.n_l);
    let s_star = spec.s_star_index();
    let n = l.num_syndromes() as u64;
    let weight = 1.0 / n as f64;
    // Decoded outcome for every (σ, term), shared by all input columns.
    let decoded: Vec<Vec<u64>> = (0..n)
        .into_par_iter()
        .map(|sigma| {
            let enc = spec.code.encode_index(sigma);
            terms
                .iter()
                .map(|t| spec.code.decode_index(enc ^ t.x_o))
                .collect()
        })
        .collect();
    let columns = (0..n)
        .into_par_iter()
        .map(|s_in| {
            let mut g = vec![0.0; l.num_syndromes()];
            let mut w = vec![vec![0.0; l.num_syndromes()]; l.num_paulis()];
            let undo_in = spec.cor_tilde(s_in);
            for sigma in 0..n {
                for (t, &dec) in terms.iter().zip(&decoded[sigma as usize]) {
                    let s_out = sigma ^ t.x_s ^ s_star ^ dec;
                    let s_err = s_in ^ sigma ^ dec ^ s_star;
                    let net = spec
                        .cor_tilde(s_out)
                        .compose(spec.decoder.mask(s_err))
                        .compose(t.logical)
                        .compose(undo_in);
                    accumulate(
                        &mut g,
                        &mut w,
                        &signs[net.table_index(l.n_l)],
                        s_out as usize,
                        t.prob * weight,
                    );
                }
            }
            (g, w)
        })
        .collect();
    Ok(CycleTransfer::assemble(l.n_l, l.n_s, columns, true))
}

/// True iff every row of `γ` is constant to within `tol`.
pub fn check_smip(t: &CycleTransfer, tol: f64) -> bool {
    t.gamma.row_iter().all(|row| {
        let (lo, hi) = row
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo <= tol
    })
}

/// Syndrome distribution and corrected-frame channels after state preparation.
#[derive(Clone, Debug, PartialEq)]
pub struct PrepTransfer {
    gamma: DVector<f64>,
    eigen: Vec<PauliEigenTable>,
}

impl PrepTransfer {
    pub fn new(gamma: DVector<f64>, eigen: Vec<PauliEigenTable>) -> Result<Self> {
        crate::error::check_width(gamma.len(), eigen.len())?;
        Ok(Self { gamma, eigen })
    }

    /// `γ^prep_{s₀}`.
    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub fn eigen(&self, s0: usize) -> &PauliEigenTable {
        &self.eigen[s0]
    }

    pub fn tables(&self) -> &[PauliEigenTable] {
        &self.eigen
    }

    /// Per-syndrome eigenvalues for the Pauli with table index `p`.
    pub fn vector(&self, p: usize) -> DVector<f64> {
        DVector::from_fn(self.eigen.len(), |s, _| self.eigen[s].at(p))
    }
}

/// Corrected-frame channels of a noisy logical measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasTransfer {
    eigen: Vec<PauliEigenTable>,
}

impl MeasTransfer {
    pub fn new(eigen: Vec<PauliEigenTable>) -> Self {
        Self { eigen }
    }

    pub fn eigen(&self, s: usize) -> &PauliEigenTable {
        &self.eigen[s]
    }

    pub fn tables(&self) -> &[PauliEigenTable] {
        &self.eigen
    }

    pub fn vector(&self, p: usize) -> DVector<f64> {
        DVector::from_fn(self.eigen.len(), |s, _| self.eigen[s].at(p))
    }
}

fn tables_from_weighted(
    n_l: usize,
    gamma: &[f64],
    weighted: &[Vec<f64>],
) -> Result<Vec<PauliEigenTable>> {
    gamma
        .iter()
        .zip(weighted)
        .map(|(&g, w)| {
            if g == 0.0 {
                Ok(PauliEigenTable::identity(n_l))
            } else {
                PauliEigenTable::from_values(n_l, w.iter().map(|v| v / g).collect())
            }
        })
        .collect()
}

/// Preparation transfer (without absorbing a cycle, regardless of the prep's flag).
pub fn prep_transfer(prep: &PrepSpec, spec: &QecCycleSpec) -> Result<PrepTransfer> {
    let l = spec.layout;
    check_noise_layout(&prep.noise, &[l.n_l, l.n_s], "preparation")?;
    crate::error::check_width(l.n_l, prep.sigma.n_l())?;
    let signs = sign_table(l.n_l);
    let mut gamma = vec![0.0; l.num_syndromes()];
    let mut weighted = vec![vec![0.0; l.num_paulis()]; l.num_syndromes()];
    for t in split_terms(&prep.noise) {
        let s0 = (spec.s_star_index() ^ t.x_s) as usize;
        let net = spec.cor_tilde(s0 as u64).compose(t.logical);
        gamma[s0] += t.prob;
        for (acc, sign) in weighted[s0].iter_mut().zip(&signs[net.table_index(l.n_l)]) {
            *acc += t.prob * sign;
        }
    }
    let eigen = tables_from_weighted(l.n_l, &gamma, &weighted)?;
    Ok(PrepTransfer {
        gamma: DVector::from_vec(gamma),
        eigen,
    })
}

/// Preparation transfer honoring `absorb_first_cycle`.
pub fn effective_prep_transfer(
    prep: &PrepSpec,
    spec: &QecCycleSpec,
    t: &CycleTransfer,
) -> Result<PrepTransfer> {
    let pt = prep_transfer(prep, spec)?;
    if prep.absorb_first_cycle {
        absorb_cycle_into_prep(&pt, t)
    } else {
        Ok(pt)
    }
}

/// Measurement transfer. Errors with `Unsupported` when the implied error
/// distribution depends on the logical input.
pub fn meas_transfer(meas: &MeasSpec, spec: &QecCycleSpec) -> Result<MeasTransfer> {
    let l = spec.layout;
    meas.check(&l)?;
    let terms: Vec<(u64, u64, u64, f64)> = split_terms(&meas.noise)
        .into_iter()
        .map(|t| (t.logical.x as u64, t.x_s, t.x_o, t.prob))
        .collect();
    let d = l.logical_dim();
    let eigen = (0..l.num_syndromes() as u64)
        .into_par_iter()
        .map(|s| {
            let flips = |x: u64| -> Vec<f64> {
                let mut dist = vec![0.0; d];
                let o = meas.readout.encode(&l, x, s);
                for &(xl, xs, xo, prob) in &terms {
                    let outcome = meas.readout.decode(spec, x ^ xl, s ^ xs, o ^ xo);
                    dist[(outcome ^ x) as usize] += prob;
                }
                dist
            };
            let reference = flips(0);
            for x in 1..d as u64 {
                let other = flips(x);
                let gap = reference
                    .iter()
                    .zip(&other)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if gap > MEAS_INDEPENDENCE_TOL {
                    return Err(Error::Unsupported(format!(
                        "measurement error distribution depends on the logical input \
                         (syndrome {s}, input {x}, deviation {gap:e})"
                    )));
                }
            }
            Ok(flip_table(l.n_l, &reference, spec.cor_tilde(s).x))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasTransfer { eigen })
}

/// Eigenvalues of the X-type channel `Σ_{x′} p_{x′} X^{x′ + offset}`.
fn flip_table(n_l: usize, dist: &[f64], offset: u32) -> PauliEigenTable {
    let values = (0..1usize << (2 * n_l))
        .map(|p| {
            let z = XzMask::from_table_index(n_l, p).z;
            dist.iter()
                .enumerate()
                .map(|(x, &prob)| {
                    if ((x as u32 ^ offset) & z).count_ones() % 2 == 1 {
                        -prob
                    } else {
                        prob
                    }
                })
                .sum()
        })
        .collect();
    PauliEigenTable::from_values(n_l, values).expect("table size matches n_l")
}

/// Single-cycle logical channel `λ_{1,P} = Σ_{i,j} W_P[i,j] γ_j`.
pub fn single_cycle_channel(t: &CycleTransfer) -> Result<PauliEigenTable> {
    let marginal = t.syndrome_marginal()?;
    let values = t.weighted.iter().map(|w| (w * marginal).sum()).collect();
    PauliEigenTable::from_values(t.n_l, values)
}

/// Entanglement fidelity `D⁻² Σ_P λ_P` of a Pauli-diagonal channel.
pub fn entanglement_fidelity(table: &PauliEigenTable) -> f64 {
    table.values().iter().sum::<f64>() / table.len() as f64
}

/// Prepends one cycle to a preparation, so the resulting syndrome distribution
/// equals the cycle's syndrome marginal.
pub fn absorb_cycle_into_prep(pt: &PrepTransfer, t: &CycleTransfer) -> Result<PrepTransfer> {
    let marginal = t.syndrome_marginal()?.clone();
    crate::error::check_width(t.dim(), pt.gamma.len())?;
    let dim = t.dim();
    let mut weighted = vec![vec![0.0; t.num_paulis()]; dim];
    for (p, w) in t.weighted.iter().enumerate() {
        let v = DVector::from_fn(dim, |s0, _| pt.gamma[s0] * pt.eigen[s0].at(p));
        let image = w * v;
        for s1 in 0..dim {
            weighted[s1][p] = image[s1];
        }
    }
    let eigen = tables_from_weighted(t.n_l, marginal.as_slice(), &weighted)?;
    Ok(PrepTransfer {
        gamma: marginal,
        eigen,
    })
}
