//! QEC cycle specifications in the Clifford frame: register layouts, syndrome
//! codes, decoder tables, preparations, measurements and experiment settings.
//!
//! Internally every bitstring of at most 64 bits is handled in index form
//! (qubit 1 is the most significant bit), so XOR of indices is bitstring addition.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use crate::error::{check_width, Error, Result};
use crate::pauli::{BitString, Layout, PauliChannel, PauliLabel, XzMask};

/// Largest supported syndrome register.
pub const MAX_SYNDROME_BITS: usize = 12;
/// Largest supported cycle outcome register.
pub const MAX_OUTCOME_BITS: usize = 20;
/// Largest supported logical register (tables have `4^n_L` entries).
pub const MAX_LOGICAL_QUBITS: usize = 4;
/// Largest supported measurement outcome register.
pub const MAX_READOUT_BITS: usize = 60;

pub(crate) fn bit(index: u64, n: usize, j: usize) -> bool {
    (index >> (n - 1 - j)) & 1 == 1
}

pub(crate) fn with_bit(index: u64, n: usize, j: usize) -> u64 {
    index | (1u64 << (n - 1 - j))
}

fn mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Qubit counts of the logical (L), syndrome (S), ancilla (A) and outcome (O) registers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegisterLayout {
    pub n_l: usize,
    pub n_s: usize,
    pub n_a: usize,
    pub n_o: usize,
}

impl RegisterLayout {
    pub fn new(n_l: usize, n_s: usize, n_a: usize, n_o: usize) -> Result<Self> {
        let layout = Self { n_l, n_s, n_a, n_o };
        let problems = layout.problems();
        match problems.into_iter().next() {
            None => Ok(layout),
            Some(p) => Err(if p.contains("exceeds") {
                Error::Capacity(p)
            } else {
                Error::Validation(p)
            }),
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_l == 0 {
            out.push("layout.nL must be at least 1".to_string());
        }
        if self.n_s == 0 {
            out.push("layout.nS must be at least 1".to_string());
        }
        if self.n_o < self.n_s {
            out.push(format!(
                "layout.nO = {} is smaller than nS = {}",
                self.n_o, self.n_s
            ));
        }
        if self.n_l > MAX_LOGICAL_QUBITS {
            out.push(format!(
                "layout.nL = {} exceeds the cap {MAX_LOGICAL_QUBITS}",
                self.n_l
            ));
        }
        if self.n_s > MAX_SYNDROME_BITS {
            out.push(format!(
                "layout.nS = {} exceeds the cap {MAX_SYNDROME_BITS}",
                self.n_s
            ));
        }
        if self.n_o > MAX_OUTCOME_BITS {
            out.push(format!(
                "layout.nO = {} exceeds the cap {MAX_OUTCOME_BITS}",
                self.n_o
            ));
        }
        out
    }

    /// Layout `L ⊗ S ⊗ A ⊗ O` of cycle noise.
    pub fn noise_layout(&self) -> Layout {
        Layout::new(&[self.n_l, self.n_s, self.n_a, self.n_o])
    }

    /// Layout `L ⊗ S` of preparation noise.
    pub fn prep_layout(&self) -> Layout {
        Layout::new(&[self.n_l, self.n_s])
    }

    /// Layout `L ⊗ S ⊗ A ⊗ O′` of measurement noise for a readout register of width `n_o`.
    pub fn meas_layout(&self, n_o: usize) -> Layout {
        Layout::new(&[self.n_l, self.n_s, self.n_a, n_o])
    }

    pub fn num_syndromes(&self) -> usize {
        1 << self.n_s
    }

    /// Logical dimension `D = 2^n_L`.
    pub fn logical_dim(&self) -> usize {
        1 << self.n_l
    }

    /// Number of logical Paulis, `4^n_L`.
    pub fn num_paulis(&self) -> usize {
        1 << (2 * self.n_l)
    }
}

/// Linear code `E(s) = G s` with minimum-weight decoding.
#[derive(Clone)]
pub struct LinearCode {
    n_s: usize,
    n_o: usize,
    columns: Vec<u64>,
    cache: Arc<RwLock<HashMap<u64, u64>>>,
}

impl LinearCode {
    fn encode(&self, s: u64) -> u64 {
        (0..self.n_s)
            .filter(|&j| bit(s, self.n_s, j))
            .fold(0, |acc, j| acc ^ self.columns[j])
    }

    fn decode(&self, theta: u64) -> u64 {
        if let Some(&hit) = self
            .cache
            .read()
            .expect("decoder cache poisoned")
            .get(&theta)
        {
            return hit;
        }
        let mut best = (u32::MAX, 0u64);
        for s in 0..1u64 << self.n_s {
            let d = (theta ^ self.encode(s)).count_ones();
            if d < best.0 {
                best = (d, s);
            }
        }
        self.cache
            .write()
            .expect("decoder cache poisoned")
            .insert(theta, best.1);
        best.1
    }
}

/// Explicit encode and decode truth tables.
#[derive(Clone, Debug)]
pub struct TableCode {
    n_s: usize,
    n_o: usize,
    encode: Vec<u64>,
    decode: Vec<u64>,
}

/// Syndrome encoding `E: S → O` and decoding `D: O → S`.
#[derive(Clone)]
pub enum SyndromeCode {
    /// Bitwise `r`-fold repetition in per-bit blocks with majority decoding
    /// (ties, possible only for even `r`, decode to 0).
    Repetition {
        n_s: usize,
        repeats: usize,
    },
    Linear(LinearCode),
    Table(TableCode),
}

impl fmt::Debug for SyndromeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyndromeCode::Repetition { n_s, repeats } => {
                write!(f, "Repetition {{ n_s: {n_s}, repeats: {repeats} }}")
            }
            SyndromeCode::Linear(c) => write!(f, "Linear {{ n_s: {}, n_o: {} }}", c.n_s, c.n_o),
            SyndromeCode::Table(c) => write!(f, "Table {{ n_s: {}, n_o: {} }}", c.n_s, c.n_o),
        }
    }
}

impl SyndromeCode {
    /// `E = D = identity` on `n` bits.
    pub fn identity(n: usize) -> Self {
        SyndromeCode::Repetition { n_s: n, repeats: 1 }
    }

    /// Repetition code of any `r ≥ 1`; see [`build_repetition_cycle`] for the odd-`r` builder.
    pub fn repetition(n_s: usize, repeats: usize) -> Result<Self> {
        if repeats == 0 {
            return Err(Error::Validation(
                "repetition count must be at least 1".into(),
            ));
        }
        if n_s * repeats > 64 {
            return Err(Error::Capacity(format!("{n_s}×{repeats} outcome bits")));
        }
        Ok(SyndromeCode::Repetition { n_s, repeats })
    }

    /// Code given by explicit tables: `encode[s]` for every `s` and `decode[θ]` for every `θ`.
    pub fn table(n_s: usize, n_o: usize, encode: Vec<u64>, decode: Vec<u64>) -> Result<Self> {
        if n_o > MAX_OUTCOME_BITS {
            return Err(Error::Capacity(format!(
                "table code with {n_o} outcome bits exceeds the cap {MAX_OUTCOME_BITS}"
            )));
        }
        check_width(1 << n_s, encode.len())?;
        check_width(1 << n_o, decode.len())?;
        if encode.iter().any(|&t| t > mask(n_o)) || decode.iter().any(|&s| s > mask(n_s)) {
            return Err(Error::Validation(
                "table entry wider than its register".into(),
            ));
        }
        Ok(SyndromeCode::Table(TableCode {
            n_s,
            n_o,
            encode,
            decode,
        }))
    }

    pub fn n_s(&self) -> usize {
        match self {
            SyndromeCode::Repetition { n_s, .. } => *n_s,
            SyndromeCode::Linear(c) => c.n_s,
            SyndromeCode::Table(c) => c.n_s,
        }
    }

    pub fn n_o(&self) -> usize {
        match self {
            SyndromeCode::Repetition { n_s, repeats } => n_s * repeats,
            SyndromeCode::Linear(c) => c.n_o,
            SyndromeCode::Table(c) => c.n_o,
        }
    }

    /// `E` on index form.
    pub fn encode_index(&self, s: u64) -> u64 {
        match self {
            SyndromeCode::Repetition { n_s, repeats } => {
                let n_o = n_s * repeats;
                let mut out = 0;
                for j in 0..*n_s {
                    if bit(s, *n_s, j) {
                        for k in 0..*repeats {
                            out = with_bit(out, n_o, j * repeats + k);
                        }
                    }
                }
                out
            }
            SyndromeCode::Linear(c) => c.encode(s),
            SyndromeCode::Table(c) => c.encode[s as usize],
        }
    }

    /// `D` on index form.
    pub fn decode_index(&self, theta: u64) -> u64 {
        match self {
            SyndromeCode::Repetition { n_s, repeats } => {
                let n_o = n_s * repeats;
                let mut out = 0;
                for j in 0..*n_s {
                    let ones = (0..*repeats)
                        .filter(|&k| bit(theta, n_o, j * repeats + k))
                        .count();
                    if 2 * ones > *repeats {
                        out = with_bit(out, *n_s, j);
                    }
                }
                out
            }
            SyndromeCode::Linear(c) => c.decode(theta),
            SyndromeCode::Table(c) => c.decode[theta as usize],
        }
    }

    pub fn encode(&self, s: &BitString) -> Result<BitString> {
        check_width(self.n_s(), s.len())?;
        Ok(BitString::from_index(
            self.n_o(),
            self.encode_index(s.index()),
        ))
    }

    pub fn decode(&self, theta: &BitString) -> Result<BitString> {
        check_width(self.n_o(), theta.len())?;
        Ok(BitString::from_index(
            self.n_s(),
            self.decode_index(theta.index()),
        ))
    }

    /// All `s` with `D(E(s)) ≠ s`.
    pub fn round_trip_failures(&self) -> Vec<u64> {
        (0..1u64 << self.n_s())
            .filter(|&s| self.decode_index(self.encode_index(s)) != s)
            .collect()
    }
}

/// Builds a linear code from the rows of its `n_O × n_S` generator matrix.
/// Decoding is minimum-weight with ties broken toward the lexicographically smallest `s`.
pub fn build_linear_code(generator_rows: &[Vec<bool>]) -> Result<SyndromeCode> {
    let n_o = generator_rows.len();
    let n_s = generator_rows.first().map_or(0, |r| r.len());
    if n_s == 0 || n_o == 0 {
        return Err(Error::Validation("generator matrix is empty".into()));
    }
    for row in generator_rows {
        check_width(n_s, row.len())?;
    }
    if n_o > MAX_OUTCOME_BITS || n_s > MAX_SYNDROME_BITS {
        return Err(Error::Capacity(format!("{n_o}×{n_s} generator matrix")));
    }
    let columns: Vec<u64> = (0..n_s)
        .map(|j| {
            (0..n_o)
                .filter(|&i| generator_rows[i][j])
                .fold(0, |acc, i| with_bit(acc, n_o, i))
        })
        .collect();
    if gf2_rank(&columns) < n_s {
        return Err(Error::Validation(
            "generator matrix does not have full column rank".into(),
        ));
    }
    Ok(SyndromeCode::Linear(LinearCode {
        n_s,
        n_o,
        columns,
        cache: Arc::new(RwLock::new(HashMap::new())),
    }))
}

fn gf2_rank(vectors: &[u64]) -> usize {
    let mut basis: Vec<u64> = Vec::new();
    for &v in vectors {
        let mut v = v;
        for &b in &basis {
            v = v.min(v ^ b);
        }
        if v != 0 {
            basis.push(v);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

/// Whether `D(E(s) + θ′) = s + D(θ′)` for every `s` and `θ′`.
pub fn check_decoding_symmetry(code: &SyndromeCode) -> Result<bool> {
    let (n_s, n_o) = (code.n_s(), code.n_o());
    if n_s + n_o > 26 {
        return Err(Error::Capacity(format!(
            "exhaustive symmetry check over 2^{} pairs",
            n_s + n_o
        )));
    }
    let decoded: Vec<u64> = (0..1u64 << n_o).map(|t| code.decode_index(t)).collect();
    for s in 0..1u64 << n_s {
        let e = code.encode_index(s);
        for theta in 0..1u64 << n_o {
            if decoded[(e ^ theta) as usize] != s ^ decoded[theta as usize] {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Logical correction for every error syndrome.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderTable {
    n_l: usize,
    corrections: Vec<PauliLabel>,
    masks: Vec<XzMask>,
}

impl DecoderTable {
    /// `corrections[s]` is applied for error syndrome index `s`; one entry per syndrome.
    pub fn new(n_s: usize, n_l: usize, corrections: Vec<PauliLabel>) -> Result<Self> {
        check_width(1 << n_s, corrections.len())?;
        for c in &corrections {
            if c.layout().widths() != [n_l] {
                return Err(Error::Layout(format!(
                    "correction {c} is not a label on {n_l} logical qubits"
                )));
            }
        }
        let masks = corrections.iter().map(XzMask::from_label).collect();
        Ok(Self {
            n_l,
            corrections,
            masks,
        })
    }

    /// The decoder that never corrects.
    pub fn trivial(n_s: usize, n_l: usize) -> Self {
        let id = PauliLabel::identity(&Layout::single(n_l));
        Self::new(n_s, n_l, vec![id; 1 << n_s]).expect("consistent widths")
    }

    pub fn n_l(&self) -> usize {
        self.n_l
    }

    pub fn len(&self) -> usize {
        self.corrections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corrections.is_empty()
    }

    pub fn correction(&self, s_err: &BitString) -> Result<&PauliLabel> {
        check_width(self.len().trailing_zeros() as usize, s_err.len())?;
        Ok(&self.corrections[s_err.index() as usize])
    }

    pub fn corrections(&self) -> &[PauliLabel] {
        &self.corrections
    }

    pub(crate) fn mask(&self, s_err: u64) -> XzMask {
        self.masks[s_err as usize]
    }
}

/// Full description of one (repeated) QEC cycle.
#[derive(Clone, Debug)]
pub struct QecCycleSpec {
    pub layout: RegisterLayout,
    pub code: SyndromeCode,
    pub decoder: DecoderTable,
    pub s_star: BitString,
    pub noise: PauliChannel,
    pub randomize_syndrome: bool,
}

impl QecCycleSpec {
    pub(crate) fn s_star_index(&self) -> u64 {
        self.s_star.index()
    }

    /// Frame correction conditioned on the true syndrome `s`: the decoder entry for `s + s*`.
    pub(crate) fn cor_tilde(&self, s: u64) -> XzMask {
        self.decoder.mask(s ^ self.s_star_index())
    }

    pub fn validate(&self) -> Result<()> {
        let report = validate_spec(self);
        if report.is_clean() {
            Ok(())
        } else {
            Err(Error::Validation(report.violations.join("; ")))
        }
    }
}

/// Outcome of [`validate_spec`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Collects every rule violation of a cycle specification.
pub fn validate_spec(spec: &QecCycleSpec) -> ValidationReport {
    let mut report = ValidationReport {
        violations: spec.layout.problems(),
        warnings: Vec::new(),
    };
    let l = spec.layout;
    let v = &mut report.violations;
    let code_ok = spec.code.n_s() == l.n_s && spec.code.n_o() == l.n_o;
    if !code_ok {
        v.push(format!(
            "code maps {} syndrome bits to {} outcome bits, layout has nS = {}, nO = {}",
            spec.code.n_s(),
            spec.code.n_o(),
            l.n_s,
            l.n_o
        ));
    } else if l.n_s <= MAX_SYNDROME_BITS {
        let failures = spec.code.round_trip_failures();
        if let Some(&s) = failures.first() {
            v.push(format!(
                "D(E(s)) != s for {} syndrome(s), first s = {}",
                failures.len(),
                BitString::from_index(l.n_s, s)
            ));
        }
    }
    if spec.decoder.len() != 1 << l.n_s.min(MAX_SYNDROME_BITS) || spec.decoder.n_l() != l.n_l {
        v.push(format!(
            "decoder has {} entries on {} logical qubits, expected {} on {}",
            spec.decoder.len(),
            spec.decoder.n_l(),
            1usize << l.n_s.min(MAX_SYNDROME_BITS),
            l.n_l
        ));
    } else if !spec.decoder.corrections()[0].is_identity() {
        v.push(format!(
            "decoder correction for the trivial syndrome is {}, not the identity",
            spec.decoder.corrections()[0]
        ));
    }
    if spec.s_star.len() != l.n_s {
        v.push(format!(
            "s_star has width {}, expected {}",
            spec.s_star.len(),
            l.n_s
        ));
    }
    if spec.noise.layout().widths() != [l.n_l, l.n_s, l.n_a, l.n_o] {
        v.push(format!(
            "noise layout {:?} does not match registers ({}, {}, {}, {})",
            spec.noise.layout(),
            l.n_l,
            l.n_s,
            l.n_a,
            l.n_o
        ));
    }
    if let Err(e) = spec.noise.check_normalized() {
        v.push(format!("noise: {e}"));
    }
    if code_ok && !spec.randomize_syndrome && l.n_s + l.n_o <= 26 {
        if let Ok(false) = check_decoding_symmetry(&spec.code) {
            report.warnings.push(
                "syndrome code is not decoding-symmetric; the marginal independence property \
                 may fail, consider enabling randomize_syndrome"
                    .into(),
            );
        }
    }
    if let SyndromeCode::Repetition { repeats, .. } = spec.code {
        if repeats.is_multiple_of(2) && !spec.randomize_syndrome {
            report.warnings.push(format!(
                "repetition count {repeats} is even; majority ties are possible, \
                 consider enabling randomize_syndrome"
            ));
        }
    }
    report
}

/// Builds a cycle whose syndrome readout is `r`-fold repetition with majority decoding.
pub fn build_repetition_cycle(
    n_s: usize,
    repeats: usize,
    s_star: BitString,
    decoder: DecoderTable,
    noise: PauliChannel,
) -> Result<QecCycleSpec> {
    if repeats.is_multiple_of(2) {
        return Err(Error::Validation(format!(
            "repetition count {repeats} is even so majority decoding is not decoding-symmetric; \
             use an odd count or enable randomize_syndrome"
        )));
    }
    let widths = noise.layout().widths().to_vec();
    if widths.len() != 4 {
        return Err(Error::Layout("noise must span L, S, A and O".into()));
    }
    let layout = RegisterLayout::new(widths[0], n_s, widths[2], n_s * repeats)?;
    let spec = QecCycleSpec {
        layout,
        code: SyndromeCode::repetition(n_s, repeats)?,
        decoder,
        s_star,
        noise,
        randomize_syndrome: false,
    };
    spec.validate()?;
    Ok(spec)
}

/// Logical input state as its Pauli expectation table `tr(P σ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicalState {
    n_l: usize,
    expectations: Vec<f64>,
}

impl LogicalState {
    /// Computational basis state `|x⟩`.
    pub fn basis(x: &BitString) -> Self {
        let n = x.len();
        let xi = x.index() as u32;
        let expectations = (0..1usize << (2 * n))
            .map(|i| {
                let p = XzMask::from_table_index(n, i);
                if p.x != 0 {
                    0.0
                } else if (p.z & xi).count_ones() % 2 == 1 {
                    -1.0
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            n_l: n,
            expectations,
        }
    }

    pub fn from_expectations(n_l: usize, expectations: Vec<f64>) -> Result<Self> {
        check_width(1 << (2 * n_l), expectations.len())?;
        if (expectations[0] - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "identity expectation is {}, not 1",
                expectations[0]
            )));
        }
        if let Some(v) = expectations
            .iter()
            .find(|v| v.is_nan() || v.abs() > 1.0 + 1e-12)
        {
            return Err(Error::Validation(format!(
                "expectation {v} outside [-1, 1]"
            )));
        }
        Ok(Self { n_l, expectations })
    }

    pub fn n_l(&self) -> usize {
        self.n_l
    }

    pub fn expectations(&self) -> &[f64] {
        &self.expectations
    }

    pub fn expectation(&self, p: &PauliLabel) -> Result<f64> {
        check_width(self.n_l, p.num_qubits())?;
        Ok(self.expectations[p.table_index()])
    }

    /// Computational-basis populations `⟨x|σ|x⟩`, indexed by `x`.
    pub fn populations(&self) -> Vec<f64> {
        let n = self.n_l;
        let d = 1usize << n;
        let z_type: Vec<(u32, f64)> = (0..1usize << (2 * n))
            .map(|i| (XzMask::from_table_index(n, i), self.expectations[i]))
            .filter(|(p, _)| p.x == 0)
            .map(|(p, e)| (p.z, e))
            .collect();
        (0..d as u32)
            .map(|x| {
                z_type
                    .iter()
                    .map(|&(z, e)| if (z & x).count_ones() % 2 == 1 { -e } else { e })
                    .sum::<f64>()
                    / d as f64
            })
            .collect()
    }
}

/// Noisy logical state preparation.
#[derive(Clone, Debug)]
pub struct PrepSpec {
    pub sigma: LogicalState,
    /// Pauli channel over `L ⊗ S` applied after the ideal encoding.
    pub noise: PauliChannel,
    /// Treat the first QEC cycle as part of the preparation.
    pub absorb_first_cycle: bool,
}

impl PrepSpec {
    pub fn noiseless(sigma: LogicalState, layout: &RegisterLayout) -> Self {
        Self {
            sigma,
            noise: PauliChannel::identity(&layout.prep_layout()),
            absorb_first_cycle: false,
        }
    }
}

pub type EncodeFn = dyn Fn(u64, u64) -> u64 + Send + Sync;
pub type DecodeFn = dyn Fn(u64, u64, u64) -> u64 + Send + Sync;

/// How a destructive logical measurement writes and reads its outcome.
#[derive(Clone)]
pub enum Readout {
    /// `E_M` writes `repeats − 1` extra copies of `(x_L ‖ s)` into the outcome
    /// register. `D_M` takes a per-position majority over all copies (the measured
    /// L and S registers included) and applies the X part of the decoder
    /// correction for the decoded syndrome. `repeats = 1` reads L and S directly.
    Decoded { repeats: usize },
    /// Arbitrary encoder `E_M(x_L, s)` and decoder `D_M(x, s, o)` on index form.
    Custom {
        n_o: usize,
        encode: Arc<EncodeFn>,
        decode: Arc<DecodeFn>,
    },
}

impl fmt::Debug for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Readout::Decoded { repeats } => write!(f, "Decoded {{ repeats: {repeats} }}"),
            Readout::Custom { n_o, .. } => write!(f, "Custom {{ n_o: {n_o} }}"),
        }
    }
}

impl Readout {
    pub fn width(&self, layout: &RegisterLayout) -> usize {
        match self {
            Readout::Decoded { repeats } => repeats.saturating_sub(1) * (layout.n_l + layout.n_s),
            Readout::Custom { n_o, .. } => *n_o,
        }
    }

    pub(crate) fn encode(&self, layout: &RegisterLayout, x: u64, s: u64) -> u64 {
        match self {
            Readout::Decoded { repeats } => {
                let w = layout.n_l + layout.n_s;
                let word = (x << layout.n_s) | s;
                (0..repeats.saturating_sub(1)).fold(0, |acc, _| (acc << w) | word)
            }
            Readout::Custom { encode, .. } => encode(x, s),
        }
    }

    /// Logical outcome from the measured L, S and outcome registers.
    pub(crate) fn decode(&self, spec: &QecCycleSpec, x: u64, s: u64, o: u64) -> u64 {
        match self {
            Readout::Decoded { repeats } => {
                let l = spec.layout;
                let w = l.n_l + l.n_s;
                let first = (x << l.n_s) | s;
                let copies: Vec<u64> = std::iter::once(first)
                    .chain((0..repeats.saturating_sub(1)).map(|k| (o >> (w * k)) & mask(w)))
                    .collect();
                let mut word = 0u64;
                for b in 0..w {
                    let ones = copies.iter().filter(|c| (*c >> b) & 1 == 1).count();
                    if 2 * ones > copies.len() {
                        word |= 1 << b;
                    }
                }
                let (x_hat, s_hat) = (word >> l.n_s, word & mask(l.n_s));
                x_hat ^ spec.cor_tilde(s_hat).x as u64
            }
            Readout::Custom { decode, .. } => decode(x, s, o),
        }
    }
}

/// Noisy destructive computational-basis logical measurement.
#[derive(Clone, Debug)]
pub struct MeasSpec {
    pub readout: Readout,
    /// Pauli channel over `L ⊗ S ⊗ A ⊗ O′` applied after the readout encoding.
    pub noise: PauliChannel,
}

impl MeasSpec {
    pub fn noiseless(layout: &RegisterLayout) -> Self {
        let readout = Readout::Decoded { repeats: 1 };
        let noise = PauliChannel::identity(&layout.meas_layout(readout.width(layout)));
        Self { readout, noise }
    }

    pub fn check(&self, layout: &RegisterLayout) -> Result<()> {
        let n_o = self.readout.width(layout);
        if n_o > MAX_READOUT_BITS {
            return Err(Error::Capacity(format!("readout register of {n_o} bits")));
        }
        if self.noise.layout().widths() != [layout.n_l, layout.n_s, layout.n_a, n_o] {
            return Err(Error::Layout(format!(
                "measurement noise layout {:?} does not match ({}, {}, {}, {n_o})",
                self.noise.layout(),
                layout.n_l,
                layout.n_s,
                layout.n_a
            )));
        }
        self.noise.check_normalized()
    }
}

/// Preparations, measurements and the (prep, meas) pairs actually run.
#[derive(Clone, Debug)]
pub struct ExperimentSettings {
    pub preps: Vec<PrepSpec>,
    pub meas: Vec<MeasSpec>,
    pub pairs: Vec<(usize, usize)>,
}

impl ExperimentSettings {
    pub fn new(
        preps: Vec<PrepSpec>,
        meas: Vec<MeasSpec>,
        pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Validation("no experiment settings selected".into()));
        }
        if let Some(&(p, m)) = pairs
            .iter()
            .find(|(p, m)| *p >= preps.len() || *m >= meas.len())
        {
            return Err(Error::Validation(format!(
                "setting ({p}, {m}) out of range"
            )));
        }
        Ok(Self { preps, meas, pairs })
    }

    /// Every prep paired with every measurement.
    pub fn all_pairs(preps: Vec<PrepSpec>, meas: Vec<MeasSpec>) -> Result<Self> {
        let pairs = (0..preps.len())
            .flat_map(|p| (0..meas.len()).map(move |m| (p, m)))
            .collect();
        Self::new(preps, meas, pairs)
    }
}

/// A POVM element given by the set of logical basis labels it projects onto.
pub type OutcomeSet = Vec<BitString>;

/// Checks that `partition` covers each of the `2^n_l` basis labels exactly once.
pub fn povm_elements(n_l: usize, partition: Vec<OutcomeSet>) -> Result<Vec<OutcomeSet>> {
    let mut seen = vec![false; 1 << n_l];
    for set in &partition {
        for label in set {
            check_width(n_l, label.len())?;
            let i = label.index() as usize;
            if seen[i] {
                return Err(Error::Validation(format!(
                    "basis label {label} appears twice"
                )));
            }
            seen[i] = true;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Validation(format!(
            "basis label {} is not covered",
            BitString::from_index(n_l, i as u64)
        )));
    }
    Ok(partition)
}

/// One POVM element per basis label.
pub fn singleton_povm(n_l: usize) -> Vec<OutcomeSet> {
    BitString::all(n_l).map(|b| vec![b]).collect()
}
