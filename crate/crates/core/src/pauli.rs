//! Phase-free Pauli superoperator algebra.
//!
//! Pauli labels are stored in the symplectic representation: one bit vector for
//! the X part and one for the Z part, over a layout of named registers. Since
//! every object here is a superoperator `ρ ↦ PρP`, global phases are never
//! stored and composition is plain XOR of the two parts.
//!
//! Bitstrings print with qubit 1 as the leftmost character. The integer index of
//! a bitstring uses the same order, so the leftmost qubit is the most significant
//! bit and numeric order coincides with lexicographic order.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use smallvec::SmallVec;

use crate::error::{check_width, Error, Result};

/// Tolerance for channel normalization.
pub const NORMALIZATION_TOL: f64 = 1e-12;

type Words = SmallVec<[u64; 1]>;

fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

/// A fixed-width vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    len: usize,
    words: Words,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        let mut words = Words::new();
        words.resize(words_for(len), 0);
        Self { len, words }
    }

    /// Builds a bitstring from its integer index (qubit 1 is the most significant bit).
    pub fn from_index(len: usize, index: u64) -> Self {
        assert!(len <= 64, "index form is limited to 64 bits");
        let mut out = Self::zeros(len);
        for j in 0..len {
            if (index >> (len - 1 - j)) & 1 == 1 {
                out.set(j, true);
            }
        }
        out
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut out = Self::zeros(bits.len());
        for (j, &b) in bits.iter().enumerate() {
            out.set(j, b);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, j: usize) -> bool {
        assert!(j < self.len, "bit {j} out of range for width {}", self.len);
        (self.words[j / 64] >> (j % 64)) & 1 == 1
    }

    pub fn set(&mut self, j: usize, value: bool) {
        assert!(j < self.len, "bit {j} out of range for width {}", self.len);
        let mask = 1u64 << (j % 64);
        if value {
            self.words[j / 64] |= mask;
        } else {
            self.words[j / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, j: usize) {
        assert!(j < self.len, "bit {j} out of range for width {}", self.len);
        self.words[j / 64] ^= 1u64 << (j % 64);
    }

    /// Integer index with qubit 1 as the most significant bit.
    pub fn index(&self) -> u64 {
        assert!(self.len <= 64, "index form is limited to 64 bits");
        (0..self.len).fold(0u64, |acc, j| (acc << 1) | self.get(j) as u64)
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Bitwise XOR; widths must agree.
    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        check_width(self.len, other.len)?;
        let mut out = self.clone();
        out.xor_assign_unchecked(other);
        Ok(out)
    }

    pub(crate) fn xor_assign_unchecked(&mut self, other: &BitString) {
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a ^= b;
        }
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitString) -> Result<bool> {
        check_width(self.len, other.len)?;
        let ones: u32 = self
            .words
            .iter()
            .zip(other.words.iter())
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        Ok(ones % 2 == 1)
    }

    pub fn slice(&self, start: usize, len: usize) -> BitString {
        assert!(start + len <= self.len);
        let mut out = BitString::zeros(len);
        for j in 0..len {
            if self.get(start + j) {
                out.set(j, true);
            }
        }
        out
    }

    pub fn concat(parts: &[&BitString]) -> BitString {
        let total = parts.iter().map(|p| p.len).sum();
        let mut out = BitString::zeros(total);
        let mut offset = 0;
        for part in parts {
            for j in 0..part.len {
                if part.get(j) {
                    out.set(offset + j, true);
                }
            }
            offset += part.len;
        }
        out
    }

    /// All bitstrings of the given width in index order.
    pub fn all(len: usize) -> impl Iterator<Item = BitString> {
        assert!(len < 64);
        (0..1u64 << len).map(move |i| BitString::from_index(len, i))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len {
            f.write_str(if self.get(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut out = BitString::zeros(s.chars().count());
        for (j, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => out.set(j, true),
                other => return Err(Error::Parse(format!("invalid bit '{other}' in \"{s}\""))),
            }
        }
        Ok(out)
    }
}

/// Ordered register widths a Pauli label spans.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Layout {
    widths: Arc<[usize]>,
    offsets: Arc<[usize]>,
}

impl Layout {
    pub fn new(widths: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(widths.len());
        let mut acc = 0;
        for &w in widths {
            offsets.push(acc);
            acc += w;
        }
        Self {
            widths: widths.into(),
            offsets: offsets.into(),
        }
    }

    /// Single register of `n` qubits.
    pub fn single(n: usize) -> Self {
        Self::new(&[n])
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn num_registers(&self) -> usize {
        self.widths.len()
    }

    pub fn total(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn offset(&self, register: usize) -> usize {
        self.offsets[register]
    }

    pub fn width(&self, register: usize) -> usize {
        self.widths[register]
    }
}

impl fmt::Debug for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Layout{:?}", &*self.widths)
    }
}

/// Single-qubit Pauli letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Letter {
    I,
    X,
    Y,
    Z,
}

impl Letter {
    pub fn from_xz(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Letter::I,
            (true, false) => Letter::X,
            (true, true) => Letter::Y,
            (false, true) => Letter::Z,
        }
    }

    pub fn xz(self) -> (bool, bool) {
        match self {
            Letter::I => (false, false),
            Letter::X => (true, false),
            Letter::Y => (true, true),
            Letter::Z => (false, true),
        }
    }

    /// Position in the (I, X, Y, Z) ordering used by eigenvalue tables.
    pub fn code(self) -> usize {
        match self {
            Letter::I => 0,
            Letter::X => 1,
            Letter::Y => 2,
            Letter::Z => 3,
        }
    }

    pub fn from_code(code: usize) -> Self {
        match code {
            0 => Letter::I,
            1 => Letter::X,
            2 => Letter::Y,
            3 => Letter::Z,
            _ => panic!("letter code {code} out of range"),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }

    fn parse(c: char) -> Result<Self> {
        match c.to_ascii_uppercase() {
            'I' => Ok(Letter::I),
            'X' => Ok(Letter::X),
            'Y' => Ok(Letter::Y),
            'Z' => Ok(Letter::Z),
            other => Err(Error::Parse(format!("invalid Pauli letter '{other}'"))),
        }
    }
}

/// A phase-free Pauli superoperator over a register layout.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PauliLabel {
    layout: Layout,
    x: BitString,
    z: BitString,
}

impl PauliLabel {
    pub fn identity(layout: &Layout) -> Self {
        let n = layout.total();
        Self {
            layout: layout.clone(),
            x: BitString::zeros(n),
            z: BitString::zeros(n),
        }
    }

    pub fn from_parts(layout: &Layout, x: BitString, z: BitString) -> Result<Self> {
        check_width(layout.total(), x.len())?;
        check_width(layout.total(), z.len())?;
        Ok(Self {
            layout: layout.clone(),
            x,
            z,
        })
    }

    pub fn from_letters(layout: &Layout, letters: &[Letter]) -> Result<Self> {
        check_width(layout.total(), letters.len())?;
        let mut out = Self::identity(layout);
        for (j, l) in letters.iter().enumerate() {
            let (x, z) = l.xz();
            out.x.set(j, x);
            out.z.set(j, z);
        }
        Ok(out)
    }

    /// Parses the `"XI|ZZ|I|XY"` text form against a layout (case-insensitive).
    pub fn parse(text: &str, layout: &Layout) -> Result<Self> {
        let groups: Vec<&str> = text.trim().split('|').collect();
        if groups.len() != layout.num_registers() {
            return Err(Error::Parse(format!(
                "\"{text}\": expected {} register groups, found {}",
                layout.num_registers(),
                groups.len()
            )));
        }
        let mut letters = Vec::with_capacity(layout.total());
        for (r, group) in groups.iter().enumerate() {
            let group = group.trim();
            let count = group.chars().count();
            if count != layout.width(r) {
                return Err(Error::Parse(format!(
                    "\"{text}\": register {r} has width {} but group \"{group}\" has {count} letters",
                    layout.width(r)
                )));
            }
            for c in group.chars() {
                letters.push(Letter::parse(c)?);
            }
        }
        Self::from_letters(layout, &letters)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_qubits(&self) -> usize {
        self.x.len()
    }

    pub fn x_bits(&self) -> &BitString {
        &self.x
    }

    pub fn z_bits(&self) -> &BitString {
        &self.z
    }

    pub fn letter(&self, j: usize) -> Letter {
        Letter::from_xz(self.x.get(j), self.z.get(j))
    }

    pub fn is_identity(&self) -> bool {
        self.x.is_zero() && self.z.is_zero()
    }

    /// True when the label has no X or Y letters.
    pub fn is_z_type(&self) -> bool {
        self.x.is_zero()
    }

    /// Restriction to one register, as a label over a single-register layout.
    pub fn register(&self, r: usize) -> PauliLabel {
        let (start, width) = (self.layout.offset(r), self.layout.width(r));
        PauliLabel {
            layout: Layout::single(width),
            x: self.x.slice(start, width),
            z: self.z.slice(start, width),
        }
    }

    pub fn x_part(&self, r: usize) -> BitString {
        self.x.slice(self.layout.offset(r), self.layout.width(r))
    }

    pub fn z_part(&self, r: usize) -> BitString {
        self.z.slice(self.layout.offset(r), self.layout.width(r))
    }

    /// Tensor product of labels, concatenating their layouts.
    pub fn tensor(parts: &[&PauliLabel]) -> PauliLabel {
        let widths: Vec<usize> = parts
            .iter()
            .flat_map(|p| p.layout.widths().iter().copied())
            .collect();
        let xs: Vec<&BitString> = parts.iter().map(|p| &p.x).collect();
        let zs: Vec<&BitString> = parts.iter().map(|p| &p.z).collect();
        PauliLabel {
            layout: Layout::new(&widths),
            x: BitString::concat(&xs),
            z: BitString::concat(&zs),
        }
    }

    fn check_layout(&self, other: &PauliLabel) -> Result<()> {
        if self.layout.widths() == other.layout.widths() {
            Ok(())
        } else {
            check_width(self.num_qubits(), other.num_qubits())?;
            Err(Error::Layout(format!(
                "{:?} vs {:?}",
                self.layout, other.layout
            )))
        }
    }

    /// Composition of the two superoperators (phases dropped).
    pub fn compose(&self, other: &PauliLabel) -> Result<PauliLabel> {
        self.check_layout(other)?;
        let mut out = self.clone();
        out.x.xor_assign_unchecked(&other.x);
        out.z.xor_assign_unchecked(&other.z);
        Ok(out)
    }

    /// `+1` if the operators commute, `-1` if they anticommute.
    pub fn conjugation_sign(&self, other: &PauliLabel) -> Result<i8> {
        self.check_layout(other)?;
        let odd = self.x.dot(&other.z)? ^ self.z.dot(&other.x)?;
        Ok(if odd { -1 } else { 1 })
    }

    /// Position of this label in the (I, X, Y, Z)-ordered table over its qubits.
    pub fn table_index(&self) -> usize {
        let n = self.num_qubits();
        assert!(n <= 16, "table index limited to 16 qubits");
        (0..n).fold(0usize, |acc, j| acc * 4 + self.letter(j).code())
    }

    /// Inverse of [`PauliLabel::table_index`] over a single register of `n` qubits.
    pub fn from_table_index(n: usize, index: usize) -> PauliLabel {
        let layout = Layout::single(n);
        let mut out = PauliLabel::identity(&layout);
        let mut rest = index;
        for j in (0..n).rev() {
            let (x, z) = Letter::from_code(rest % 4).xz();
            out.x.set(j, x);
            out.z.set(j, z);
            rest /= 4;
        }
        out
    }

    /// All `4^n` labels on a single register in table order.
    pub fn all(n: usize) -> impl Iterator<Item = PauliLabel> {
        (0..1usize << (2 * n)).map(move |i| PauliLabel::from_table_index(n, i))
    }
}

impl fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.layout.num_registers() {
            if r > 0 {
                f.write_str("|")?;
            }
            let start = self.layout.offset(r);
            for j in start..start + self.layout.width(r) {
                write!(f, "{}", self.letter(j).as_char())?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliLabel({self})")
    }
}

/// Returns 1 iff `P` maps the basis state `|0⟩` to `|s⟩`, i.e. `x(P) = s`.
pub fn indicator(s: &BitString, p: &PauliLabel) -> Result<u8> {
    check_width(p.num_qubits(), s.len())?;
    Ok((p.x_bits() == s) as u8)
}

/// Image of the basis label `s` under conjugation by `P`.
pub fn apply_to_basis(p: &PauliLabel, s: &BitString) -> Result<BitString> {
    s.xor(p.x_bits())
}

/// Compact (x, z) masks of a label on at most 32 qubits, qubit 1 most significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub(crate) struct XzMask {
    pub x: u32,
    pub z: u32,
}

impl XzMask {
    pub fn from_label(p: &PauliLabel) -> Self {
        Self {
            x: p.x_bits().index() as u32,
            z: p.z_bits().index() as u32,
        }
    }

    pub fn compose(self, other: XzMask) -> XzMask {
        XzMask {
            x: self.x ^ other.x,
            z: self.z ^ other.z,
        }
    }

    /// True when the two operators anticommute.
    pub fn anticommutes(self, other: XzMask) -> bool {
        ((self.x & other.z) ^ (self.z & other.x)).count_ones() % 2 == 1
    }

    pub fn table_index(self, n: usize) -> usize {
        (0..n).fold(0usize, |acc, j| {
            let bit = n - 1 - j;
            let x = (self.x >> bit) & 1 == 1;
            let z = (self.z >> bit) & 1 == 1;
            acc * 4 + Letter::from_xz(x, z).code()
        })
    }

    pub fn from_table_index(n: usize, index: usize) -> XzMask {
        let mut out = XzMask::default();
        let mut rest = index;
        for j in 0..n {
            let (x, z) = Letter::from_code(rest % 4).xz();
            out.x |= (x as u32) << j;
            out.z |= (z as u32) << j;
            rest /= 4;
        }
        out
    }
}

/// Precomputed sign table `sign[P][Q] = ±1` over all `4^n` labels.
pub(crate) fn sign_table(n: usize) -> Vec<Vec<f64>> {
    let count = 1usize << (2 * n);
    let masks: Vec<XzMask> = (0..count).map(|i| XzMask::from_table_index(n, i)).collect();
    masks
        .iter()
        .map(|&p| {
            masks
                .iter()
                .map(|&q| if p.anticommutes(q) { -1.0 } else { 1.0 })
                .collect()
        })
        .collect()
}

/// A Pauli channel: a probability mixture of Pauli superoperators.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliChannel {
    layout: Layout,
    terms: Vec<(PauliLabel, f64)>,
}

impl PauliChannel {
    /// Builds a normalized channel. Zero-probability terms are dropped; duplicate
    /// labels, negative probabilities and a total off 1 by more than 1e-12 are errors.
    pub fn new(layout: &Layout, terms: Vec<(PauliLabel, f64)>) -> Result<Self> {
        let ch = Self::new_unnormalized(layout, terms)?;
        ch.check_normalized()?;
        Ok(ch)
    }

    /// Like [`PauliChannel::new`] but without the normalization check, so that
    /// user input can be carried into a validation report.
    pub fn new_unnormalized(layout: &Layout, terms: Vec<(PauliLabel, f64)>) -> Result<Self> {
        let mut kept: Vec<(PauliLabel, f64)> = Vec::with_capacity(terms.len());
        let mut seen = std::collections::HashSet::new();
        for (label, prob) in terms {
            if label.layout().widths() != layout.widths() {
                return Err(Error::Layout(format!(
                    "term {label} does not match {layout:?}"
                )));
            }
            if !prob.is_finite() || !(0.0..=1.0).contains(&prob) {
                return Err(Error::Validation(format!(
                    "probability {prob} of {label} outside [0, 1]"
                )));
            }
            if !seen.insert(label.clone()) {
                return Err(Error::Validation(format!("duplicate term {label}")));
            }
            if prob > 0.0 {
                kept.push((label, prob));
            }
        }
        Ok(Self {
            layout: layout.clone(),
            terms: kept,
        })
    }

    pub fn identity(layout: &Layout) -> Self {
        Self {
            layout: layout.clone(),
            terms: vec![(PauliLabel::identity(layout), 1.0)],
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn terms(&self) -> &[(PauliLabel, f64)] {
        &self.terms
    }

    pub fn total_probability(&self) -> f64 {
        self.terms.iter().map(|(_, p)| p).sum()
    }

    pub fn check_normalized(&self) -> Result<()> {
        let total = self.total_probability();
        if (total - 1.0).abs() <= NORMALIZATION_TOL {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "channel probabilities sum to {total}, not 1"
            )))
        }
    }

    /// Probability of the identity term.
    pub fn identity_probability(&self) -> f64 {
        self.terms
            .iter()
            .filter(|(l, _)| l.is_identity())
            .map(|(_, p)| p)
            .sum()
    }

    /// Pauli eigenvalue for `Q`.
    pub fn eigenvalue(&self, q: &PauliLabel) -> Result<f64> {
        channel_eigenvalue(self, q)
    }

    /// Full eigenvalue table; the channel must live on a single register.
    pub fn eigen_table(&self) -> Result<PauliEigenTable> {
        self.check_normalized()?;
        let n = self.layout.total();
        if n > 8 {
            return Err(Error::Capacity(format!("eigen table over {n} qubits")));
        }
        let masks: Vec<(XzMask, f64)> = self
            .terms
            .iter()
            .map(|(l, p)| (XzMask::from_label(l), *p))
            .collect();
        let values = (0..1usize << (2 * n))
            .map(|qi| {
                let q = XzMask::from_table_index(n, qi);
                masks
                    .iter()
                    .map(|&(m, p)| if m.anticommutes(q) { -p } else { p })
                    .sum()
            })
            .collect();
        Ok(PauliEigenTable { n, values })
    }
}

/// `Σ_P prob(P) · sign(P, Q)`.
pub fn channel_eigenvalue(ch: &PauliChannel, q: &PauliLabel) -> Result<f64> {
    ch.check_normalized()?;
    let mut total = 0.0;
    for (label, prob) in &ch.terms {
        total += *prob * f64::from(label.conjugation_sign(q)?);
    }
    Ok(total)
}

/// Phase-free composition of two Pauli superoperators.
pub fn compose_superops(p: &PauliLabel, q: &PauliLabel) -> Result<PauliLabel> {
    p.compose(q)
}

/// `±1` from the symplectic form of the two labels.
pub fn conjugation_sign(p: &PauliLabel, q: &PauliLabel) -> Result<i8> {
    p.conjugation_sign(q)
}

/// Pauli eigenvalues of a Pauli-diagonal superoperator on `n` qubits, in
/// (I, X, Y, Z)-lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliEigenTable {
    n: usize,
    values: Vec<f64>,
}

impl PauliEigenTable {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            values: vec![1.0; 1 << (2 * n)],
        }
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        check_width(1 << (2 * n), values.len())?;
        Ok(Self { n, values })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn get(&self, p: &PauliLabel) -> Result<f64> {
        check_width(self.n, p.num_qubits())?;
        Ok(self.values[p.table_index()])
    }

    /// Largest `|λ_P|`; the operator norm of the superoperator.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Checks `λ_I = 1` and all entries in `[-1, 1]` within `tol`.
    pub fn check_channel_like(&self, tol: f64) -> Result<()> {
        if (self.values[0] - 1.0).abs() > tol {
            return Err(Error::NotAChannel(format!(
                "identity eigenvalue {} is not 1",
                self.values[0]
            )));
        }
        if let Some(v) = self.values.iter().find(|v| v.abs() > 1.0 + tol) {
            return Err(Error::NotAChannel(format!(
                "eigenvalue {v} outside [-1, 1]"
            )));
        }
        Ok(())
    }

    /// Entrywise product: the table of the composed channel.
    pub fn compose(&self, other: &PauliEigenTable) -> Result<PauliEigenTable> {
        check_width(self.n, other.n)?;
        Ok(PauliEigenTable {
            n: self.n,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }
}

/// Capacity of [`dense_superoperator`].
pub const DENSE_MAX_QUBITS: usize = 3;

fn single_qubit_matrix(letter: Letter) -> DMatrix<Complex64> {
    let (o, l, i) = (
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
    );
    let entries = match letter {
        Letter::I => [l, o, o, l],
        Letter::X => [o, l, l, o],
        Letter::Y => [o, -i, i, o],
        Letter::Z => [l, o, o, -l],
    };
    DMatrix::from_row_slice(2, 2, &entries)
}

/// Dense operator matrix of a Pauli label (with the standard `Y` phase).
pub fn pauli_matrix(p: &PauliLabel) -> DMatrix<Complex64> {
    let mut out = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    for j in 0..p.num_qubits() {
        out = out.kronecker(&single_qubit_matrix(p.letter(j)));
    }
    out
}

/// Pauli-transfer matrix `R[Q, Q'] = tr(Q Λ(Q')) / 2^n`, built by explicit
/// matrix conjugation. Only defined for `n ≤ 3`.
pub fn dense_superoperator(ch: &PauliChannel) -> Result<DMatrix<f64>> {
    ch.check_normalized()?;
    let n = ch.layout().total();
    if n > DENSE_MAX_QUBITS {
        return Err(Error::Capacity(format!(
            "dense superoperator limited to {DENSE_MAX_QUBITS} qubits, got {n}"
        )));
    }
    let dim = 1usize << n;
    let basis: Vec<DMatrix<Complex64>> = PauliLabel::all(n).map(|p| pauli_matrix(&p)).collect();
    let kraus: Vec<(DMatrix<Complex64>, f64)> = ch
        .terms()
        .iter()
        .map(|(l, p)| (pauli_matrix(l), *p))
        .collect();
    let count = basis.len();
    let mut out = DMatrix::zeros(count, count);
    for (col, q_in) in basis.iter().enumerate() {
        let mut image = DMatrix::<Complex64>::zeros(dim, dim);
        for (k, p) in &kraus {
            image += (k * q_in * k.adjoint()) * Complex64::new(*p, 0.0);
        }
        for (row, q_out) in basis.iter().enumerate() {
            out[(row, col)] = (q_out * &image).trace().re / dim as f64;
        }
    }
    Ok(out)
}
