//! Independent oracles: an exact forward path sum over the joint
//! (logical Pauli frame, syndrome) chain and a Monte-Carlo trajectory sampler.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cycle::{LogicalState, MeasSpec, OutcomeSet, PrepSpec, QecCycleSpec};
use crate::error::{check_width, Error, Result};
use crate::extraction::{split_terms, CycleTransfer, MeasTransfer, PrepTransfer, SplitTerm};
use crate::pauli::{sign_table, Layout, PauliChannel, PauliEigenTable, PauliLabel, XzMask};

/// Output syndrome with the sparse Pauli-index to weight map of one transfer cell.
type SparseCell = (usize, Vec<(usize, f64)>);

/// Tolerance for negative probabilities produced by inverting eigenvalue tables.
pub const NEGATIVE_TOL: f64 = 1e-10;

/// Largest joint state space of [`path_sum_exact`].
pub const MAX_JOINT_STATES: usize = 1_000_000;

/// Shots per Monte-Carlo shard; fixed so results do not depend on parallelism.
pub const SHARD_SHOTS: u64 = 4096;

/// Mixture probabilities `p_ℓ = D⁻² Σ_Q λ_Q sign(P_ℓ, Q)` in table order.
fn eigen_to_probs(table: &PauliEigenTable, signs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let count = table.len() as f64;
    let raw: Vec<f64> = signs
        .iter()
        .map(|row| {
            row.iter()
                .zip(table.values())
                .map(|(s, v)| s * v)
                .sum::<f64>()
                / count
        })
        .collect();
    if let Some((i, p)) = raw.iter().enumerate().find(|(_, p)| **p < -NEGATIVE_TOL) {
        return Err(Error::NotAChannel(format!(
            "reconstructed probability {p:e} for {}",
            PauliLabel::from_table_index(table.num_qubits(), i)
        )));
    }
    let clamped: Vec<f64> = raw.into_iter().map(|p| p.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if (total - 1.0).abs() > NEGATIVE_TOL {
        return Err(Error::NotAChannel(format!("probabilities sum to {total}")));
    }
    Ok(clamped.into_iter().map(|p| p / total).collect())
}

/// Inverse Walsh–Hadamard transform of an eigenvalue table into a Pauli channel.
pub fn eigen_table_to_channel(table: &PauliEigenTable) -> Result<PauliChannel> {
    let n = table.num_qubits();
    let probs = eigen_to_probs(table, &sign_table(n))?;
    let terms = probs
        .into_iter()
        .enumerate()
        .map(|(i, p)| (PauliLabel::from_table_index(n, i), p))
        .collect();
    PauliChannel::new_unnormalized(&Layout::single(n), terms)
}

/// Outcome distribution over logical basis labels and over requested outcome sets.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    pub basis: Vec<f64>,
    pub outcomes: Vec<f64>,
}

fn finish(n_l: usize, basis: Vec<f64>, outcomes: &[OutcomeSet]) -> Result<OutcomeDistribution> {
    let probs = outcomes
        .iter()
        .map(|set| {
            set.iter()
                .map(|x| {
                    check_width(n_l, x.len())?;
                    Ok(basis[x.index() as usize])
                })
                .sum::<Result<f64>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OutcomeDistribution {
        basis,
        outcomes: probs,
    })
}

fn compose_table(n_l: usize) -> Vec<Vec<usize>> {
    let count = 1usize << (2 * n_l);
    let masks: Vec<XzMask> = (0..count)
        .map(|i| XzMask::from_table_index(n_l, i))
        .collect();
    masks
        .iter()
        .map(|a| {
            masks
                .iter()
                .map(|b| a.compose(*b).table_index(n_l))
                .collect()
        })
        .collect()
}

/// Basis populations after the logical frame distribution `frames` acts on `σ`.
fn measure_frames(n_l: usize, frames: &[f64], sigma: &LogicalState) -> Vec<f64> {
    let pops = sigma.populations();
    let mut basis = vec![0.0; 1 << n_l];
    for (l, &w) in frames.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let flip = XzMask::from_table_index(n_l, l).x as usize;
        for (x, b) in basis.iter_mut().enumerate() {
            *b += w * pops[x ^ flip];
        }
    }
    basis
}

/// Exact outcome distribution after `k` cycles by dynamic programming over the
/// joint (logical frame, syndrome) distribution, using explicit Pauli channels
/// reconstructed from every conditional eigenvalue table.
pub fn path_sum_exact(
    t: &CycleTransfer,
    pt: &PrepTransfer,
    mt: &MeasTransfer,
    k: usize,
    sigma: &LogicalState,
    outcomes: &[OutcomeSet],
) -> Result<OutcomeDistribution> {
    let n_l = t.n_l();
    let np = t.num_paulis();
    let dim = t.dim();
    check_width(n_l, sigma.n_l())?;
    check_width(dim, pt.gamma().len())?;
    check_width(dim, mt.tables().len())?;
    if np * dim > MAX_JOINT_STATES {
        return Err(Error::Capacity(format!("{} joint states", np * dim)));
    }
    let signs = sign_table(n_l);
    let compose = compose_table(n_l);

    let mut state = vec![0.0; np * dim];
    for s0 in 0..dim {
        let g = pt.gamma()[s0];
        if g > 0.0 {
            let q = eigen_to_probs(pt.eigen(s0), &signs)?;
            for (l, p) in q.iter().enumerate() {
                state[s0 * np + l] = g * p;
            }
        }
    }

    // Sparse explicit channel for every reachable (s_out, s_in) cell.
    let cells: Vec<Vec<SparseCell>> = (0..dim)
        .into_par_iter()
        .map(|s_in| {
            (0..dim)
                .filter(|&s_out| t.gamma()[(s_out, s_in)] > 0.0)
                .map(|s_out| {
                    let g = t.gamma()[(s_out, s_in)];
                    let values = (0..np).map(|p| t.weighted(p)[(s_out, s_in)] / g).collect();
                    let table = PauliEigenTable::from_values(n_l, values)?;
                    let q = eigen_to_probs(&table, &signs)?;
                    let sparse = q
                        .into_iter()
                        .enumerate()
                        .filter(|(_, p)| *p > 0.0)
                        .map(|(l, p)| (l, g * p))
                        .collect();
                    Ok((s_out, sparse))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    for _ in 0..k {
        let mut next = vec![0.0; np * dim];
        for (s_in, row) in cells.iter().enumerate() {
            let block = &state[s_in * np..(s_in + 1) * np];
            if block.iter().all(|&w| w == 0.0) {
                continue;
            }
            for (s_out, channel) in row {
                let target = &mut next[s_out * np..(s_out + 1) * np];
                for (l, &w) in block.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for &(e, p) in channel {
                        target[compose[e][l]] += w * p;
                    }
                }
            }
        }
        state = next;
    }

    let mut frames = vec![0.0; np];
    for s in 0..dim {
        let block = &state[s * np..(s + 1) * np];
        if block.iter().all(|&w| w == 0.0) {
            continue;
        }
        let q = eigen_to_probs(mt.eigen(s), &signs)?;
        for (l, &w) in block.iter().enumerate() {
            for (e, &p) in q.iter().enumerate() {
                frames[compose[e][l]] += w * p;
            }
        }
    }
    finish(n_l, measure_frames(n_l, &frames, sigma), outcomes)
}

fn check_inputs(spec: &QecCycleSpec, prep: &PrepSpec, meas: &MeasSpec) -> Result<()> {
    spec.validate()?;
    let l = spec.layout;
    if prep.noise.layout().widths() != [l.n_l, l.n_s] {
        return Err(Error::Layout("preparation noise must span L and S".into()));
    }
    prep.noise.check_normalized()?;
    check_width(l.n_l, prep.sigma.n_l())?;
    meas.check(&l)
}

/// Outcome of one cycle for one noise term (and randomization draw `sigma`):
/// the next syndrome and the decoder correction applied.
fn cycle_step(
    spec: &QecCycleSpec,
    term: &SplitTerm,
    s_in: u64,
    sigma: Option<u64>,
) -> (u64, XzMask) {
    let s_star = spec.s_star_index();
    match sigma {
        None => {
            let dec = spec
                .code
                .decode_index(spec.code.encode_index(s_in) ^ term.x_o);
            (
                s_in ^ term.x_s ^ s_star ^ dec,
                spec.decoder.mask(dec ^ s_star),
            )
        }
        Some(sigma) => {
            let dec = spec
                .code
                .decode_index(spec.code.encode_index(sigma) ^ term.x_o);
            (
                sigma ^ term.x_s ^ s_star ^ dec,
                spec.decoder.mask(s_in ^ sigma ^ dec ^ s_star),
            )
        }
    }
}

/// Exact outcome distribution computed directly from the raw noise terms,
/// tracking the physical (uncorrected-frame) logical Pauli and syndrome.
/// An absorbed preparation runs one extra cycle.
pub fn raw_path_sum(
    spec: &QecCycleSpec,
    prep: &PrepSpec,
    meas: &MeasSpec,
    k: usize,
    outcomes: &[OutcomeSet],
) -> Result<OutcomeDistribution> {
    check_inputs(spec, prep, meas)?;
    let l = spec.layout;
    let np = l.num_paulis();
    let dim = l.num_syndromes();
    if np * dim > MAX_JOINT_STATES {
        return Err(Error::Capacity(format!("{} joint states", np * dim)));
    }
    let compose = compose_table(l.n_l);
    let mut state = vec![0.0; np * dim];
    for t in split_terms(&prep.noise) {
        let s0 = (spec.s_star_index() ^ t.x_s) as usize;
        state[s0 * np + t.logical.table_index(l.n_l)] += t.prob;
    }
    let terms = split_terms(&spec.noise);
    let draws: Vec<Option<u64>> = if spec.randomize_syndrome {
        (0..dim as u64).map(Some).collect()
    } else {
        vec![None]
    };
    let draw_weight = 1.0 / draws.len() as f64;
    let cycles = k + prep.absorb_first_cycle as usize;
    for _ in 0..cycles {
        let mut next = vec![0.0; np * dim];
        for s_in in 0..dim {
            let block = &state[s_in * np..(s_in + 1) * np];
            if block.iter().all(|&w| w == 0.0) {
                continue;
            }
            for &draw in &draws {
                for t in &terms {
                    let (s_out, fix) = cycle_step(spec, t, s_in as u64, draw);
                    let e = fix.compose(t.logical).table_index(l.n_l);
                    let p = t.prob * draw_weight;
                    for (frame, &w) in block.iter().enumerate() {
                        if w != 0.0 {
                            next[s_out as usize * np + compose[e][frame]] += w * p;
                        }
                    }
                }
            }
        }
        state = next;
    }
    let pops = prep.sigma.populations();
    let meas_terms = split_terms(&meas.noise);
    let mut basis = vec![0.0; l.logical_dim()];
    for s in 0..dim {
        for frame in 0..np {
            let w = state[s * np + frame];
            if w == 0.0 {
                continue;
            }
            let flip = XzMask::from_table_index(l.n_l, frame).x as u64;
            for x in 0..l.logical_dim() as u64 {
                let px = w * pops[(x ^ flip) as usize];
                if px == 0.0 {
                    continue;
                }
                let o = meas.readout.encode(&l, x, s as u64);
                for t in &meas_terms {
                    let out = meas.readout.decode(
                        spec,
                        x ^ t.logical.x as u64,
                        s as u64 ^ t.x_s,
                        o ^ t.x_o,
                    );
                    basis[out as usize] += px * t.prob;
                }
            }
        }
    }
    finish(l.n_l, basis, outcomes)
}

/// When decoder corrections enter the tracked logical frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FrameMode {
    /// Compose each correction into the frame in the cycle it is applied.
    #[default]
    PerCycle,
    /// Accumulate corrections separately and apply them once before measurement.
    Deferred,
}

/// Monte-Carlo outcome counts over logical basis labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrajectoryCounts {
    pub n_l: usize,
    pub counts: Vec<u64>,
    pub shots: u64,
    pub seed: u64,
}

impl TrajectoryCounts {
    /// Total count of the labels in an outcome set.
    pub fn count(&self, outcome: &OutcomeSet) -> u64 {
        outcome
            .iter()
            .map(|x| self.counts[x.index() as usize])
            .sum()
    }

    pub fn frequency(&self, outcome: &OutcomeSet) -> f64 {
        self.count(outcome) as f64 / self.shots as f64
    }

    /// CSV with header `outcome,count,shots,seed`, one row per basis label.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
        w.write_record(["outcome", "count", "shots", "seed"])
            .map_err(err)?;
        for (x, c) in self.counts.iter().enumerate() {
            w.write_record([
                crate::pauli::BitString::from_index(self.n_l, x as u64).to_string(),
                c.to_string(),
                self.shots.to_string(),
                self.seed.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::Validation(format!("csv write failed: {e}")))
    }
}

/// SplitMix64 finalizer, used to derive shard seeds from `seed + shard`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Sampler<T> {
    items: Vec<T>,
    cumulative: Vec<f64>,
}

impl<T: Copy> Sampler<T> {
    fn new(weighted: impl IntoIterator<Item = (T, f64)>) -> Self {
        let mut items = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (item, w) in weighted {
            if w > 0.0 {
                acc += w;
                items.push(item);
                cumulative.push(acc);
            }
        }
        Self { items, cumulative }
    }

    fn draw(&self, rng: &mut impl Rng) -> T {
        let total = *self.cumulative.last().expect("non-empty distribution");
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.items[i.min(self.items.len() - 1)]
    }
}

/// Monte-Carlo sampling of the full noisy experiment with `k` cycles.
pub fn trajectory_sample(
    spec: &QecCycleSpec,
    prep: &PrepSpec,
    meas: &MeasSpec,
    k: usize,
    shots: u64,
    seed: u64,
) -> Result<TrajectoryCounts> {
    trajectory_sample_with(spec, prep, meas, k, shots, seed, FrameMode::PerCycle)
}

/// [`trajectory_sample`] with an explicit frame-tracking mode.
pub fn trajectory_sample_with(
    spec: &QecCycleSpec,
    prep: &PrepSpec,
    meas: &MeasSpec,
    k: usize,
    shots: u64,
    seed: u64,
    mode: FrameMode,
) -> Result<TrajectoryCounts> {
    check_inputs(spec, prep, meas)?;
    if shots == 0 {
        return Err(Error::Validation("shots must be at least 1".into()));
    }
    let l = spec.layout;
    let prep_terms = Sampler::new(split_terms(&prep.noise).into_iter().map(|t| (t, t.prob)));
    let cycle_terms = Sampler::new(split_terms(&spec.noise).into_iter().map(|t| (t, t.prob)));
    let meas_terms = Sampler::new(split_terms(&meas.noise).into_iter().map(|t| (t, t.prob)));
    let pops = Sampler::new(
        prep.sigma
            .populations()
            .into_iter()
            .enumerate()
            .map(|(x, p)| (x as u64, p)),
    );
    let cycles = k + prep.absorb_first_cycle as usize;
    let n_syn = l.num_syndromes() as u64;
    let shards = shots.div_ceil(SHARD_SHOTS);
    let partials: Vec<Vec<u64>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed.wrapping_add(shard)));
            let mut counts = vec![0u64; l.logical_dim()];
            let n = SHARD_SHOTS.min(shots - shard * SHARD_SHOTS);
            for _ in 0..n {
                let t = prep_terms.draw(&mut rng);
                let mut s = spec.s_star_index() ^ t.x_s;
                let mut frame = t.logical;
                let mut pending = XzMask::default();
                for _ in 0..cycles {
                    let t = cycle_terms.draw(&mut rng);
                    let draw = spec.randomize_syndrome.then(|| rng.random_range(0..n_syn));
                    let (s_out, fix) = cycle_step(spec, &t, s, draw);
                    frame = frame.compose(t.logical);
                    match mode {
                        FrameMode::PerCycle => frame = frame.compose(fix),
                        FrameMode::Deferred => pending = pending.compose(fix),
                    }
                    s = s_out;
                }
                frame = frame.compose(pending);
                let x = pops.draw(&mut rng) ^ frame.x as u64;
                let m = meas_terms.draw(&mut rng);
                let o = meas.readout.encode(&l, x, s) ^ m.x_o;
                let out = meas
                    .readout
                    .decode(spec, x ^ m.logical.x as u64, s ^ m.x_s, o);
                counts[out as usize] += 1;
            }
            counts
        })
        .collect();
    let mut counts = vec![0u64; l.logical_dim()];
    for part in partials {
        for (c, p) in counts.iter_mut().zip(part) {
            *c += p;
        }
    }
    Ok(TrajectoryCounts {
        n_l: l.n_l,
        counts,
        shots,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::{build_repetition_cycle, singleton_povm, DecoderTable};
    use crate::extraction::{cycle_transfer, meas_transfer, prep_transfer};
    use crate::pauli::BitString;

    fn flip_spec(q: f64) -> QecCycleSpec {
        let layout = Layout::new(&[1, 1, 0, 3]);
        let noise = PauliChannel::new(
            &layout,
            vec![
                (PauliLabel::parse("I|I||III", &layout).unwrap(), 1.0 - q),
                (PauliLabel::parse("X|I||III", &layout).unwrap(), q),
            ],
        )
        .unwrap();
        build_repetition_cycle(
            1,
            3,
            BitString::zeros(1),
            DecoderTable::trivial(1, 1),
            noise,
        )
        .unwrap()
    }

    #[test]
    fn eigen_table_inverse_examples() {
        let id = eigen_table_to_channel(&PauliEigenTable::identity(1)).unwrap();
        assert_eq!(id.terms().len(), 1);
        assert!(id.terms()[0].0.is_identity());

        let q = 0.15;
        let t =
            PauliEigenTable::from_values(1, vec![1.0, 1.0, 1.0 - 2.0 * q, 1.0 - 2.0 * q]).unwrap();
        let ch = eigen_table_to_channel(&t).unwrap();
        let x = PauliLabel::parse("X", &Layout::single(1)).unwrap();
        let px = ch.terms().iter().find(|(l, _)| *l == x).unwrap().1;
        assert!((px - q).abs() < 1e-15);
        assert!((ch.identity_probability() - (1.0 - q)).abs() < 1e-15);

        let bad = PauliEigenTable::from_values(1, vec![1.0, -1.0, -1.0, -1.0]).unwrap();
        assert!(matches!(
            eigen_table_to_channel(&bad),
            Err(Error::NotAChannel(_))
        ));
    }

    #[test]
    fn flip_model_closed_form() {
        let q = 0.1;
        let spec = flip_spec(q);
        let sigma = LogicalState::basis(&BitString::zeros(1));
        let prep = PrepSpec::noiseless(sigma.clone(), &spec.layout);
        let meas = MeasSpec::noiseless(&spec.layout);
        let t = cycle_transfer(&spec).unwrap();
        let pt = prep_transfer(&prep, &spec).unwrap();
        let mt = meas_transfer(&meas, &spec).unwrap();
        let outcomes = singleton_povm(1);
        for k in 0..8 {
            let closed = (1.0 + (1.0 - 2.0 * q).powi(k as i32)) / 2.0;
            let a = path_sum_exact(&t, &pt, &mt, k, &sigma, &outcomes).unwrap();
            let b = raw_path_sum(&spec, &prep, &meas, k, &outcomes).unwrap();
            assert!((a.outcomes[0] - closed).abs() < 1e-14);
            assert!((b.outcomes[0] - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn noiseless_sampling_is_ideal() {
        let spec = flip_spec(0.0);
        let sigma = LogicalState::basis(&BitString::zeros(1));
        let prep = PrepSpec::noiseless(sigma, &spec.layout);
        let meas = MeasSpec::noiseless(&spec.layout);
        let c = trajectory_sample(&spec, &prep, &meas, 4, 1000, 3).unwrap();
        assert_eq!(c.counts, vec![1000, 0]);
    }

    #[test]
    fn sampling_is_deterministic_and_frame_mode_invariant() {
        let spec = flip_spec(0.1);
        let sigma = LogicalState::basis(&BitString::zeros(1));
        let prep = PrepSpec::noiseless(sigma, &spec.layout);
        let meas = MeasSpec::noiseless(&spec.layout);
        let a = trajectory_sample(&spec, &prep, &meas, 5, 10_000, 42).unwrap();
        let b = trajectory_sample(&spec, &prep, &meas, 5, 10_000, 42).unwrap();
        let c = trajectory_sample_with(&spec, &prep, &meas, 5, 10_000, 42, FrameMode::Deferred)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let d = pool.install(|| trajectory_sample(&spec, &prep, &meas, 5, 10_000, 42).unwrap());
        assert_eq!(a, d);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("outcome,count,shots,seed\n0,"));
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the SplitMix64 generator seeded with 0.
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(splitmix64(0x9e37_79b9_7f4a_7c15), 0x6e78_9e6a_a1b9_65f4);
    }
}
