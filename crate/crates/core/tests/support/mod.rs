//! Random specification generators shared by the integration tests.
#![allow(dead_code)]

use logmarkov::cycle::{
    build_linear_code, check_decoding_symmetry, DecoderTable, LogicalState, MeasSpec, OutcomeSet,
    PrepSpec, QecCycleSpec, Readout, RegisterLayout, SyndromeCode,
};
use logmarkov::extraction::{cycle_transfer, entanglement_fidelity, single_cycle_channel};
use logmarkov::pauli::{BitString, Layout, Letter, PauliChannel, PauliLabel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_label(rng: &mut ChaCha8Rng, layout: &Layout) -> PauliLabel {
    let letters: Vec<Letter> = (0..layout.total())
        .map(|_| Letter::from_code(rng.random_range(0..4)))
        .collect();
    PauliLabel::from_letters(layout, &letters).unwrap()
}

/// Relative weights of non-identity noise terms; scaled to a total error probability on demand.
#[derive(Clone, Debug)]
pub struct NoiseShape {
    pub layout: Layout,
    pub terms: Vec<(PauliLabel, f64)>,
}

impl NoiseShape {
    pub fn random(rng: &mut ChaCha8Rng, layout: &Layout, count: usize) -> Self {
        let mut terms: Vec<(PauliLabel, f64)> = Vec::new();
        while terms.len() < count {
            let label = random_label(rng, layout);
            if label.is_identity() || terms.iter().any(|(l, _)| *l == label) {
                continue;
            }
            terms.push((label, rng.random_range(0.1..1.0)));
        }
        let total: f64 = terms.iter().map(|(_, w)| w).sum();
        for t in &mut terms {
            t.1 /= total;
        }
        Self {
            layout: layout.clone(),
            terms,
        }
    }

    pub fn channel(&self, total: f64) -> PauliChannel {
        let mut terms = vec![(PauliLabel::identity(&self.layout), 1.0 - total)];
        terms.extend(self.terms.iter().map(|(l, w)| (l.clone(), w * total)));
        let sum: f64 = terms.iter().map(|(_, p)| p).sum();
        terms[0].1 += 1.0 - sum;
        PauliChannel::new(&self.layout, terms).unwrap()
    }
}

/// Random encoder with a decoder satisfying `D(E(s)) = s`, typically not decoding-symmetric.
pub fn random_table_code(rng: &mut ChaCha8Rng, n_s: usize, extra: usize) -> SyndromeCode {
    let n_o = n_s + extra;
    let mut images: Vec<u64> = (0..1u64 << n_o).collect();
    images.shuffle(rng);
    let encode: Vec<u64> = images[..1 << n_s].to_vec();
    let mut decode: Vec<u64> = (0..1u64 << n_o)
        .map(|_| rng.random_range(0..1u64 << n_s))
        .collect();
    for (s, &e) in encode.iter().enumerate() {
        decode[e as usize] = s as u64;
    }
    SyndromeCode::table(n_s, n_o, encode, decode).unwrap()
}

/// A code known to be decoding-symmetric.
pub fn random_symmetric_code(rng: &mut ChaCha8Rng, n_s: usize) -> SyndromeCode {
    match rng.random_range(0..3) {
        0 => SyndromeCode::identity(n_s),
        1 => SyndromeCode::repetition(n_s, if n_s <= 3 { 3 } else { 1 }).unwrap(),
        _ => {
            // Identity block stacked on random parity rows; min-weight decoding of
            // such codes is checked and replaced by repetition when asymmetric.
            let extra = rng.random_range(1..=2usize);
            let mut rows: Vec<Vec<bool>> = (0..n_s)
                .map(|i| (0..n_s).map(|j| i == j).collect())
                .collect();
            for _ in 0..extra {
                rows.push((0..n_s).map(|_| rng.random_bool(0.5)).collect());
            }
            let code = build_linear_code(&rows).unwrap();
            if check_decoding_symmetry(&code).unwrap() {
                code
            } else {
                SyndromeCode::repetition(n_s, 1).unwrap()
            }
        }
    }
}

pub fn random_decoder(rng: &mut ChaCha8Rng, n_s: usize, n_l: usize) -> DecoderTable {
    let layout = Layout::single(n_l);
    let corrections = (0..1usize << n_s)
        .map(|s| {
            if s == 0 {
                PauliLabel::identity(&layout)
            } else {
                random_label(rng, &layout)
            }
        })
        .collect();
    DecoderTable::new(n_s, n_l, corrections).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, n_l: usize) -> LogicalState {
    let x = BitString::from_index(n_l, rng.random_range(0..1u64 << n_l));
    let basis = LogicalState::basis(&x);
    let plus: Vec<f64> = (0..1usize << (2 * n_l))
        .map(|i| {
            let p = PauliLabel::from_table_index(n_l, i);
            if p.z_bits().is_zero() {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let w = rng.random_range(0.0..1.0);
    let mixed = basis
        .expectations()
        .iter()
        .zip(&plus)
        .map(|(a, b)| w * a + (1.0 - w) * b)
        .collect();
    LogicalState::from_expectations(n_l, mixed).unwrap()
}

#[derive(Clone, Debug)]
pub struct CaseOptions {
    pub n_l: Option<usize>,
    pub n_s: Option<usize>,
    pub symmetric: bool,
    pub randomize: bool,
    pub absorb: bool,
    pub noise_terms: usize,
    pub noise_total: f64,
}

impl Default for CaseOptions {
    fn default() -> Self {
        Self {
            n_l: None,
            n_s: None,
            symmetric: false,
            randomize: true,
            absorb: true,
            noise_terms: 6,
            noise_total: 0.01,
        }
    }
}

/// A random experiment: one cycle, two preparations and two measurements.
#[derive(Clone, Debug)]
pub struct Case {
    pub spec: QecCycleSpec,
    pub shape: NoiseShape,
    pub preps: Vec<PrepSpec>,
    pub meas: Vec<MeasSpec>,
    pub outcomes: Vec<OutcomeSet>,
}

impl Case {
    pub fn with_noise_total(&self, total: f64) -> Case {
        let mut c = self.clone();
        c.spec.noise = self.shape.channel(total);
        c
    }

    pub fn eps1(&self) -> f64 {
        let t = cycle_transfer(&self.spec).unwrap();
        1.0 - entanglement_fidelity(&single_cycle_channel(&t).unwrap())
    }

    /// Rescales the cycle noise so that the single-cycle infidelity is `target`.
    pub fn calibrated(&self, target: f64) -> Option<Case> {
        let (mut lo, mut hi) = (0.0, 0.2);
        if self.with_noise_total(hi).eps1() < target {
            return None;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.with_noise_total(mid).eps1() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(self.with_noise_total(0.5 * (lo + hi)))
    }
}

pub fn random_case(seed: u64, opts: &CaseOptions) -> Case {
    let mut rng = rng(seed);
    let n_l = opts.n_l.unwrap_or_else(|| rng.random_range(1..=2));
    let n_s = opts.n_s.unwrap_or_else(|| rng.random_range(1..=4));
    let code = if opts.symmetric {
        random_symmetric_code(&mut rng, n_s)
    } else {
        let extra = rng.random_range(0..=2);
        random_table_code(&mut rng, n_s, extra)
    };
    let n_a = rng.random_range(0..=1);
    let layout = RegisterLayout::new(n_l, n_s, n_a, code.n_o()).unwrap();
    let shape = NoiseShape::random(&mut rng, &layout.noise_layout(), opts.noise_terms);
    let s_star = BitString::from_index(n_s, rng.random_range(0..1u64 << n_s));
    let spec = QecCycleSpec {
        layout,
        code,
        decoder: random_decoder(&mut rng, n_s, n_l),
        s_star,
        noise: shape.channel(opts.noise_total),
        randomize_syndrome: opts.randomize,
    };
    spec.validate().unwrap();
    let preps = (0..2)
        .map(|_| {
            let prep_shape = NoiseShape::random(&mut rng, &layout.prep_layout(), 3);
            PrepSpec {
                sigma: random_state(&mut rng, n_l),
                noise: prep_shape.channel(rng.random_range(0.0..0.01)),
                absorb_first_cycle: opts.absorb,
            }
        })
        .collect();
    let meas = (0..2)
        .map(|i| {
            let readout = Readout::Decoded { repeats: 1 + 2 * i };
            let width = readout.width(&layout);
            let meas_shape = NoiseShape::random(&mut rng, &layout.meas_layout(width), 3);
            MeasSpec {
                readout,
                noise: meas_shape.channel(rng.random_range(0.0..0.01)),
            }
        })
        .collect();
    let mut outcomes: Vec<OutcomeSet> = BitString::all(n_l).map(|b| vec![b]).collect();
    outcomes.push(
        BitString::all(n_l)
            .filter(|b| b.weight() % 2 == 0)
            .collect(),
    );
    Case {
        spec,
        shape,
        preps,
        meas,
        outcomes,
    }
}
