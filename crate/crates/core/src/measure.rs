//! Effective information of a layer-to-layer connection and its
//! decompositions.
//!
//! A measurement drives every input node of a [`LayerSlice`] with independent
//! uniform noise over its perturbation range, pushes each draw through the
//! weights and output activation, bins both sides, and estimates:
//!
//! * `ei`: plug-in MI between the joint input state and joint output state;
//! * `ei_parts`: the sum of pairwise MIs `I(x_i, y_j)` under the same noise;
//! * `sensitivity`: the sum over pairs of `I(x_i, f(w_ji·x_i))`, i.e. each
//!   edge driven on its own with every other input held at 0;
//! * `degeneracy = sensitivity − ei` and `phi = ei − ei_parts`.
//!
//! Sample `t` of input node `i` is the `t·n_in + i`-th draw of the ChaCha8
//! stream keyed by the config seed. Samples are processed in fixed-size
//! blocks that can be regenerated independently, and every tally is an
//! integer count merged by addition, so results are bit-identical for any
//! number of workers. Sensitivity reads node `i`'s coordinate of the same
//! stream, so for a single edge all three quantities coincide exactly.
//!
//! Binning and activations are monotone, so for a fixed input node the pair
//! `(input bin, output bin of f(w_ji·x_i))` over all `j` is a step function
//! of `x_i`. Its breakpoints are located once by bisection over the float
//! ordering, and each sample then costs one binary search per input node
//! instead of one activation per edge.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationKind, Interval};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::mi::{mi_from_spectra, state_space, BinningScheme, CountSpectrum, PairTable};
use crate::nn::Network;
use crate::rng;

const BLOCK: u64 = 1 << 14;
const PERTURBATION_STREAM: u64 = 0;
const DENSE_MARGINAL_LIMIT: u128 = 1 << 22;

/// One measurement target: `n_in` upstream nodes feeding `n_out` downstream
/// nodes through an `n_out × n_in` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSlice {
    weights: Matrix,
    out_activation: ActivationKind,
    in_ranges: Vec<Interval>,
}

impl LayerSlice {
    pub fn new(weights: Matrix, out_activation: ActivationKind, in_ranges: Vec<Interval>) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::Config(
                "a layer slice needs at least one input and one output".into(),
            ));
        }
        if in_ranges.len() != weights.cols() {
            return Err(Error::Dimension {
                context: "input perturbation ranges",
                expected: weights.cols(),
                actual: in_ranges.len(),
            });
        }
        if !weights.is_finite() {
            return Err(Error::Domain("slice weights must be finite".into()));
        }
        for r in &in_ranges {
            Interval::new(r.lo, r.hi)?;
        }
        Ok(LayerSlice {
            weights,
            out_activation,
            in_ranges,
        })
    }

    /// Input ranges follow the upstream activation; `None` marks the network
    /// input layer, perturbed over `[0, 1]`.
    pub fn with_upstream(
        weights: Matrix,
        out_activation: ActivationKind,
        upstream: Option<ActivationKind>,
    ) -> Result<Self> {
        let range = upstream.map_or(Interval::UNIT, ActivationKind::perturbation_range);
        let n = weights.cols();
        Self::new(weights, out_activation, vec![range; n])
    }

    /// `1 → 1` edge whose input node shares the output's activation.
    pub fn single_edge(weight: f64, activation: ActivationKind) -> Result<Self> {
        Self::with_upstream(Matrix::from_vec(1, 1, vec![weight])?, activation, Some(activation))
    }

    /// `n → 1` slice with the given incoming weights; inputs share the
    /// output's activation.
    pub fn fan_in(weights: &[f64], activation: ActivationKind) -> Result<Self> {
        Self::with_upstream(
            Matrix::from_vec(1, weights.len(), weights.to_vec())?,
            activation,
            Some(activation),
        )
    }

    /// Transition `k` of a network (layer `k`'s weights).
    pub fn from_network(net: &Network, k: usize) -> Result<Self> {
        let layer = net.layers().get(k).ok_or(Error::Dimension {
            context: "layer index",
            expected: net.layers().len(),
            actual: k,
        })?;
        let upstream = k.checked_sub(1).map(|p| net.layers()[p].activation);
        Self::with_upstream(layer.weights.clone(), layer.activation, upstream)
    }

    pub fn n_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn out_activation(&self) -> ActivationKind {
        self.out_activation
    }

    pub fn in_ranges(&self) -> &[Interval] {
        &self.in_ranges
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub samples: u64,
    pub bins: u32,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            samples: 10_000_000,
            bins: 8,
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn new(samples: u64, bins: u32, seed: u64) -> Self {
        PerturbationConfig { samples, bins, seed }
    }

    pub fn with_samples(self, samples: u64) -> Self {
        PerturbationConfig { samples, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if self.bins < 2 {
            return Err(Error::Config(format!("bins must be at least 2, got {}", self.bins)));
        }
        Ok(())
    }
}

/// One measurement record. `ei`, `degeneracy` and `phi` are absent when the
/// joint state space of the slice does not fit a key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EIResult {
    pub ei: Option<f64>,
    pub ei_parts: f64,
    pub sensitivity: f64,
    pub degeneracy: Option<f64>,
    pub phi: Option<f64>,
    pub samples_used: u64,
    pub bins: u32,
    pub seed: u64,
}

/// Iterator over `(input, output)` sample pairs of the max-entropy
/// perturbation of a slice.
pub struct PerturbationStream<'a> {
    slice: &'a LayerSlice,
    rng: rand_chacha::ChaCha8Rng,
    remaining: u64,
}

impl Iterator for PerturbationStream<'_> {
    type Item = (Vec<f64>, Vec<f64>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let x: Vec<f64> = self
            .slice
            .in_ranges
            .iter()
            .map(|r| r.lo + r.width() * rng::unit_f64(self.rng.next_u64()))
            .collect();
        let y = (0..self.slice.n_out())
            .map(|j| {
                self.slice
                    .out_activation
                    .apply_unchecked(dot(self.slice.weights.row(j), &x))
            })
            .collect();
        Some((x, y))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

/// Sample stream of `do(L1 = uniform)`: each input node i.i.d. uniform over
/// its range, output `f(W·x)`. Deterministic in `cfg.seed`.
pub fn perturb_layer_max_entropy<'a>(slice: &'a LayerSlice, cfg: &PerturbationConfig) -> PerturbationStream<'a> {
    PerturbationStream {
        slice,
        rng: rng::stream_at(cfg.seed, PERTURBATION_STREAM, 0),
        remaining: cfg.samples,
    }
}

#[derive(Debug, Clone, Copy)]
struct Wanted {
    joint: bool,
    parts: bool,
    sensitivity: bool,
}

/// Layout of a packed `(x_state, y_state)` key: `x << y_bits | y`.
#[derive(Debug, Clone, Copy)]
struct KeyLayout {
    y_bits: u32,
    y_space: u128,
}

fn bits_for(space: u128) -> u32 {
    if space <= 1 {
        0
    } else {
        128 - (space - 1).leading_zeros()
    }
}

enum KeyBuf {
    Narrow(Vec<u64>),
    Wide(Vec<u128>),
    Split(Vec<(u128, u128)>),
}

impl KeyBuf {
    fn append(&mut self, other: KeyBuf) {
        match (self, other) {
            (KeyBuf::Narrow(a), KeyBuf::Narrow(mut b)) => a.append(&mut b),
            (KeyBuf::Wide(a), KeyBuf::Wide(mut b)) => a.append(&mut b),
            (KeyBuf::Split(a), KeyBuf::Split(mut b)) => a.append(&mut b),
            _ => unreachable!("key buffers of one measurement share a layout"),
        }
    }
}

struct JointPlan {
    layout: KeyLayout,
    x_bits: u32,
}

impl JointPlan {
    fn new(slice: &LayerSlice, bins: u32) -> Result<Self> {
        let x_space = state_space(bins, slice.n_in())?;
        let y_space = state_space(bins, slice.n_out())?;
        Ok(JointPlan {
            layout: KeyLayout {
                y_bits: bits_for(y_space),
                y_space,
            },
            x_bits: bits_for(x_space),
        })
    }

    fn empty_buf(&self, capacity: usize) -> KeyBuf {
        let bits = self.x_bits + self.layout.y_bits;
        if bits <= 64 {
            KeyBuf::Narrow(Vec::with_capacity(capacity))
        } else if bits <= 128 {
            KeyBuf::Wide(Vec::with_capacity(capacity))
        } else {
            KeyBuf::Split(Vec::with_capacity(capacity))
        }
    }
}

/// Step function of one input node: `cuts` are the ascending points where
/// the input bin or any edge's output bin changes, and interval `k`
/// (`[cuts[k-1], cuts[k])`) maps to `cells[k·(n_out+1)..]` = input bin
/// followed by one output bin per downstream node.
struct EdgeSteps {
    cuts: Vec<f64>,
    cells: Vec<u32>,
}

/// Monotone-order integer key of a float.
fn ord_key(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    if b < 0 {
        b ^ i64::MAX
    } else {
        b
    }
}

fn from_ord_key(k: i64) -> f64 {
    let b = if k < 0 { k ^ i64::MAX } else { k };
    f64::from_bits(b as u64)
}

/// Points in `(lo, hi]` where the monotone step function `f` changes value:
/// each is the smallest float carrying the new value.
fn step_cuts(f: &dyn Fn(f64) -> u32, lo: f64, hi: f64, out: &mut Vec<f64>) {
    fn go(f: &dyn Fn(f64) -> u32, a: i64, fa: u32, b: i64, fb: u32, out: &mut Vec<f64>) {
        if fa == fb {
            return;
        }
        if b - a == 1 {
            out.push(from_ord_key(b));
            return;
        }
        let m = a + (b - a) / 2;
        let fm = f(from_ord_key(m));
        go(f, a, fa, m, fm, out);
        go(f, m, fm, b, fb, out);
    }
    go(f, ord_key(lo), f(lo), ord_key(hi), f(hi), out);
}

impl EdgeSteps {
    fn new(slice: &LayerSlice, i: usize, in_scheme: &BinningScheme, out_scheme: &BinningScheme) -> Self {
        let r = slice.in_ranges[i];
        let act = slice.out_activation;
        let n_out = slice.n_out();
        let out_bin = |j: usize, x: f64| out_scheme.index(act.apply_unchecked(slice.weights.get(j, i) * x));
        let mut cuts = Vec::new();
        step_cuts(&|x| in_scheme.index(x), r.lo, r.hi, &mut cuts);
        for j in 0..n_out {
            step_cuts(&|x| out_bin(j, x), r.lo, r.hi, &mut cuts);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut cells = Vec::with_capacity((cuts.len() + 1) * (n_out + 1));
        for k in 0..=cuts.len() {
            let x = if k == 0 { r.lo } else { cuts[k - 1] };
            cells.push(in_scheme.index(x));
            cells.extend((0..n_out).map(|j| out_bin(j, x)));
        }
        EdgeSteps { cuts, cells }
    }

    #[inline]
    fn interval(&self, x: f64) -> usize {
        self.cuts.partition_point(|&c| c <= x)
    }
}

struct Tally {
    keys: Option<KeyBuf>,
    parts: Vec<PairTable>,
    /// Per input node, sample counts in each interval of its [`EdgeSteps`].
    steps: Vec<Vec<u64>>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        match (&mut self.keys, other.keys) {
            (Some(a), Some(b)) => a.append(b),
            (None, b) => self.keys = b,
            _ => {}
        }
        for (a, b) in self.parts.iter_mut().zip(&other.parts) {
            a.merge(b);
        }
        for (a, b) in self.steps.iter_mut().zip(&other.steps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }
}

struct Engine<'a> {
    slice: &'a LayerSlice,
    cfg: PerturbationConfig,
    wanted: Wanted,
    plan: Option<JointPlan>,
    in_schemes: Vec<BinningScheme>,
    out_scheme: BinningScheme,
    /// Per-node step functions; empty when sensitivity is read off the
    /// parts tables.
    edge_steps: Vec<EdgeSteps>,
}

impl<'a> Engine<'a> {
    fn new(slice: &'a LayerSlice, cfg: &PerturbationConfig, mut wanted: Wanted) -> Result<Self> {
        cfg.validate()?;
        // with one input node the edge procedure is the joint one, so its
        // tables are the parts tables
        let reuse_parts = wanted.sensitivity && slice.n_in() == 1;
        if reuse_parts {
            wanted.parts = true;
        }
        let plan = if wanted.joint {
            Some(JointPlan::new(slice, cfg.bins)?)
        } else {
            None
        };
        let in_schemes = slice
            .in_ranges
            .iter()
            .map(|&r| BinningScheme::new(cfg.bins, r))
            .collect::<Result<Vec<_>>>()?;
        let out_scheme = BinningScheme::new(cfg.bins, slice.out_activation.output_range())?;
        let edge_steps = if wanted.sensitivity && !reuse_parts {
            (0..slice.n_in())
                .map(|i| EdgeSteps::new(slice, i, &in_schemes[i], &out_scheme))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Engine {
            slice,
            cfg: *cfg,
            wanted,
            plan,
            in_schemes,
            out_scheme,
            edge_steps,
        })
    }

    /// Sensitivity tables, one per `(i, j)` pair in row-major order.
    fn sensitivity_tables(&self, tally: &Tally) -> Vec<PairTable> {
        if self.edge_steps.is_empty() {
            return tally.parts.clone();
        }
        let b = self.cfg.bins as usize;
        let n_out = self.slice.n_out();
        let mut tables = vec![PairTable::new(b, b); self.slice.n_in() * n_out];
        for (i, (steps, counts)) in self.edge_steps.iter().zip(&tally.steps).enumerate() {
            for (k, &c) in counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let cell = &steps.cells[k * (n_out + 1)..(k + 1) * (n_out + 1)];
                for j in 0..n_out {
                    tables[i * n_out + j].add_count(cell[0] as usize, cell[1 + j] as usize, c);
                }
            }
        }
        tables
    }

    fn empty_tally(&self, capacity: usize) -> Tally {
        let b = self.cfg.bins as usize;
        let pairs = self.slice.n_in() * self.slice.n_out();
        Tally {
            keys: self.plan.as_ref().map(|p| p.empty_buf(capacity)),
            parts: if self.wanted.parts {
                vec![PairTable::new(b, b); pairs]
            } else {
                Vec::new()
            },
            steps: self.edge_steps.iter().map(|e| vec![0; e.cuts.len() + 1]).collect(),
        }
    }

    fn fill_block(&self, tally: &mut Tally, block: u64) {
        let n_in = self.slice.n_in();
        let n_out = self.slice.n_out();
        let bins = self.cfg.bins as u128;
        let start = block * BLOCK;
        let end = (start + BLOCK).min(self.cfg.samples);
        let mut rng = rng::stream_at(self.cfg.seed, PERTURBATION_STREAM, start * n_in as u64);
        let act = self.slice.out_activation;
        let w = &self.slice.weights;

        let mut x = vec![0.0; n_in];
        let mut bx = vec![0u32; n_in];
        let mut by = vec![0u32; n_out];

        for _ in start..end {
            for i in 0..n_in {
                let r = self.slice.in_ranges[i];
                x[i] = r.lo + r.width() * rng::unit_f64(rng.next_u64());
                bx[i] = self.in_schemes[i].index(x[i]);
            }
            for (j, b) in by.iter_mut().enumerate() {
                *b = self.out_scheme.index(act.apply_unchecked(dot(w.row(j), &x)));
            }

            if let (Some(plan), Some(keys)) = (&self.plan, tally.keys.as_mut()) {
                let mut xk = 0u128;
                for &b in bx.iter().rev() {
                    xk = xk * bins + b as u128;
                }
                let mut yk = 0u128;
                for &b in by.iter().rev() {
                    yk = yk * bins + b as u128;
                }
                match keys {
                    KeyBuf::Narrow(v) => v.push(((xk << plan.layout.y_bits) | yk) as u64),
                    KeyBuf::Wide(v) => v.push((xk << plan.layout.y_bits) | yk),
                    KeyBuf::Split(v) => v.push((xk, yk)),
                }
            }

            if self.wanted.parts {
                for (row, &bi) in tally.parts.chunks_mut(n_out).zip(&bx) {
                    for (t, &bj) in row.iter_mut().zip(&by) {
                        t.add(bi as usize, bj as usize);
                    }
                }
            }

            for ((steps, counts), &xi) in self.edge_steps.iter().zip(tally.steps.iter_mut()).zip(&x) {
                counts[steps.interval(xi)] += 1;
            }
        }
    }

    fn run(&self) -> Tally {
        let blocks = self.cfg.samples.div_ceil(BLOCK);
        let per_block = BLOCK.min(self.cfg.samples) as usize;
        (0..blocks)
            .into_par_iter()
            .fold(
                || self.empty_tally(0),
                |mut tally, b| {
                    if let Some(keys) = tally.keys.as_mut() {
                        reserve(keys, per_block);
                    }
                    self.fill_block(&mut tally, b);
                    tally
                },
            )
            .reduce(|| self.empty_tally(0), Tally::merge)
    }
}

fn reserve(keys: &mut KeyBuf, n: usize) {
    match keys {
        KeyBuf::Narrow(v) => v.reserve(n),
        KeyBuf::Wide(v) => v.reserve(n),
        KeyBuf::Split(v) => v.reserve(n),
    }
}

/// Joint, x-marginal and y-marginal count spectra of sorted packed keys.
fn packed_spectra<K>(keys: &mut [K], layout: KeyLayout, widen: impl Fn(K) -> u128 + Sync) -> [CountSpectrum; 3]
where
    K: Ord + Copy + Send,
{
    keys.par_sort_unstable();
    let joint = CountSpectrum::from_sorted_runs(keys);
    let mask = if layout.y_bits == 0 {
        0
    } else {
        u128::MAX >> (128 - layout.y_bits)
    };

    let mut x = CountSpectrum::new();
    let mut i = 0;
    while i < keys.len() {
        let xi = widen(keys[i]) >> layout.y_bits;
        let mut j = i + 1;
        while j < keys.len() && widen(keys[j]) >> layout.y_bits == xi {
            j += 1;
        }
        x.add((j - i) as u64, 1);
        i = j;
    }

    let y = if layout.y_space <= DENSE_MARGINAL_LIMIT {
        let mut counts = vec![0u64; layout.y_space as usize];
        for &k in keys.iter() {
            counts[(widen(k) & mask) as usize] += 1;
        }
        CountSpectrum::from_counts(counts)
    } else {
        let mut ys: Vec<u128> = keys.iter().map(|&k| widen(k) & mask).collect();
        ys.par_sort_unstable();
        CountSpectrum::from_sorted_runs(&ys)
    };
    [joint, x, y]
}

fn joint_mi(keys: KeyBuf, layout: KeyLayout) -> f64 {
    let [j, x, y] = match keys {
        KeyBuf::Narrow(mut v) => packed_spectra(&mut v, layout, |k| k as u128),
        KeyBuf::Wide(mut v) => packed_spectra(&mut v, layout, |k| k),
        KeyBuf::Split(mut v) => {
            v.par_sort_unstable();
            let joint = CountSpectrum::from_sorted_runs(&v);
            let mut xs: Vec<u128> = v.iter().map(|p| p.0).collect();
            xs.par_sort_unstable();
            let mut ys: Vec<u128> = v.iter().map(|p| p.1).collect();
            ys.par_sort_unstable();
            [
                joint,
                CountSpectrum::from_sorted_runs(&xs),
                CountSpectrum::from_sorted_runs(&ys),
            ]
        }
    };
    mi_from_spectra(&j, &x, &y)
}

fn sum_pair_mi(tables: &[PairTable]) -> Result<f64> {
    tables.iter().map(PairTable::mutual_information).sum()
}

struct Measured {
    ei: Option<f64>,
    ei_parts: Option<f64>,
    sensitivity: Option<f64>,
}

fn measure(slice: &LayerSlice, cfg: &PerturbationConfig, wanted: Wanted) -> Result<Measured> {
    let engine = Engine::new(slice, cfg, wanted)?;
    let tally = engine.run();
    let ei_parts = if wanted.parts {
        Some(sum_pair_mi(&tally.parts)?)
    } else {
        None
    };
    let sensitivity = if wanted.sensitivity {
        Some(sum_pair_mi(&engine.sensitivity_tables(&tally))?)
    } else {
        None
    };
    let ei = match (tally.keys, &engine.plan) {
        (Some(keys), Some(plan)) => Some(joint_mi(keys, plan.layout)),
        _ => None,
    };
    Ok(Measured {
        ei,
        ei_parts,
        sensitivity,
    })
}

/// MI between the joint input state and joint output state under the
/// max-entropy perturbation.
pub fn ei_joint(slice: &LayerSlice, cfg: &PerturbationConfig) -> Result<f64> {
    let m = measure(
        slice,
        cfg,
        Wanted {
            joint: true,
            parts: false,
            sensitivity: false,
        },
    )?;
    Ok(m.ei.expect("joint requested"))
}

/// Sum over all `(i, j)` of the pairwise MI between input node `i` and output
/// node `j` under the joint perturbation.
pub fn ei_parts(slice: &LayerSlice, cfg: &PerturbationConfig) -> Result<f64> {
    let m = measure(
        slice,
        cfg,
        Wanted {
            joint: false,
            parts: true,
            sensitivity: false,
        },
    )?;
    Ok(m.ei_parts.expect("parts requested"))
}

/// Sum over all `(i, j)` of the MI of edge `i → j` driven alone.
pub fn sensitivity(slice: &LayerSlice, cfg: &PerturbationConfig) -> Result<f64> {
    let m = measure(
        slice,
        cfg,
        Wanted {
            joint: false,
            parts: false,
            sensitivity: true,
        },
    )?;
    Ok(m.sensitivity.expect("sensitivity requested"))
}

pub fn degeneracy(sensitivity: f64, ei: f64) -> f64 {
    sensitivity - ei
}

pub fn phi_feedforward(ei: f64, ei_parts: f64) -> f64 {
    ei - ei_parts
}

/// Whether the joint input and output state spaces fit a key.
pub fn joint_feasible(slice: &LayerSlice, bins: u32) -> bool {
    state_space(bins, slice.n_in()).is_ok() && state_space(bins, slice.n_out()).is_ok()
}

/// All metrics from a single pass over the perturbation stream. When the
/// joint state space is too large, `ei`, `degeneracy` and `phi` are `None`.
pub fn measure_all(slice: &LayerSlice, cfg: &PerturbationConfig) -> Result<EIResult> {
    let joint = joint_feasible(slice, cfg.bins);
    if !joint {
        log::warn!(
            "joint EI skipped for a {}→{} slice at {} bins: state space exceeds key capacity",
            slice.n_in(),
            slice.n_out(),
            cfg.bins
        );
    }
    let m = measure(
        slice,
        cfg,
        Wanted {
            joint,
            parts: true,
            sensitivity: true,
        },
    )?;
    let ei_parts = m.ei_parts.expect("parts requested");
    let sens = m.sensitivity.expect("sensitivity requested");
    Ok(EIResult {
        ei: m.ei,
        ei_parts,
        sensitivity: sens,
        degeneracy: m.ei.map(|ei| degeneracy(sens, ei)),
        phi: m.ei.map(|ei| phi_feedforward(ei, ei_parts)),
        samples_used: cfg.samples,
        bins: cfg.bins,
        seed: cfg.seed,
    })
}

/// [`measure_all`] for every transition of a network.
pub fn measure_network(net: &Network, cfg: &PerturbationConfig) -> Result<Vec<EIResult>> {
    (0..net.layers().len())
        .map(|k| measure_all(&LayerSlice::from_network(net, k)?, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mi::JointHistogram;

    fn cfg(samples: u64, bins: u32, seed: u64) -> PerturbationConfig {
        PerturbationConfig::new(samples, bins, seed)
    }

    fn slice(rows: &[Vec<f64>], kind: ActivationKind) -> LayerSlice {
        LayerSlice::with_upstream(Matrix::from_rows(rows).unwrap(), kind, Some(kind)).unwrap()
    }

    #[test]
    fn stream_respects_ranges() {
        let s =
            LayerSlice::with_upstream(Matrix::zeros(1, 3), ActivationKind::Tanh, Some(ActivationKind::Tanh)).unwrap();
        for (x, y) in perturb_layer_max_entropy(&s, &cfg(2000, 8, 1)) {
            assert!(x.iter().all(|v| (-1.0..1.0).contains(v)));
            assert_eq!(y, vec![0.0]);
        }
        let s = LayerSlice::with_upstream(Matrix::zeros(2, 2), ActivationKind::Sigmoid, None).unwrap();
        for (x, y) in perturb_layer_max_entropy(&s, &cfg(2000, 8, 1)) {
            assert!(x.iter().all(|v| (0.0..1.0).contains(v)));
            assert_eq!(y, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn stream_inputs_are_uniform() {
        // χ² over 16 cells per node; 15 dof, 0.999 quantile ≈ 37.7
        let s = slice(&[vec![1.0, -2.0]], ActivationKind::Sigmoid);
        let n = 1_000_000u64;
        let mut counts = [[0u64; 16]; 2];
        for (x, _) in perturb_layer_max_entropy(&s, &cfg(n, 8, 3)) {
            for i in 0..2 {
                counts[i][(x[i] * 16.0) as usize] += 1;
            }
        }
        let expected = n as f64 / 16.0;
        for c in counts {
            let chi2: f64 = c.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
            assert!(chi2 < 37.7, "chi2 = {chi2}");
        }
    }

    #[test]
    fn engine_agrees_with_sparse_histogram_route() {
        let s = slice(&[vec![2.0, -1.0, 0.5], vec![0.3, 3.0, -4.0]], ActivationKind::Sigmoid);
        let c = cfg(50_000, 8, 5);
        let ins: Vec<_> = s
            .in_ranges()
            .iter()
            .map(|&r| BinningScheme::new(8, r).unwrap())
            .collect();
        let out = BinningScheme::new(8, ActivationKind::Sigmoid.output_range()).unwrap();
        let mut h = JointHistogram::new();
        for (x, y) in perturb_layer_max_entropy(&s, &c) {
            let bx: Vec<u32> = x.iter().zip(&ins).map(|(&v, sc)| sc.index(v)).collect();
            let by: Vec<u32> = y.iter().map(|&v| out.index(v)).collect();
            h.accumulate(
                crate::mi::joint_state_encode(&bx, 8).unwrap(),
                crate::mi::joint_state_encode(&by, 8).unwrap(),
            );
        }
        assert_eq!(ei_joint(&s, &c).unwrap(), h.mutual_information().unwrap());
    }

    #[test]
    fn sensitivity_matches_direct_edge_evaluation() {
        for kind in ActivationKind::ALL {
            let s = slice(&[vec![2.5, -1.3, 0.0], vec![-7.0, 0.2, 4.4]], kind);
            let c = cfg(40_000, 16, 6);
            let ins: Vec<_> = s
                .in_ranges()
                .iter()
                .map(|&r| BinningScheme::new(16, r).unwrap())
                .collect();
            let out = BinningScheme::new(16, kind.output_range()).unwrap();
            let mut tables = vec![PairTable::new(16, 16); 6];
            for (x, _) in perturb_layer_max_entropy(&s, &c) {
                for i in 0..3 {
                    for j in 0..2 {
                        let y = kind.apply_unchecked(s.weights().get(j, i) * x[i]);
                        tables[i * 2 + j].add(ins[i].index(x[i]) as usize, out.index(y) as usize);
                    }
                }
            }
            let direct: f64 = tables.iter().map(|t| t.mutual_information().unwrap()).sum();
            assert_eq!(sensitivity(&s, &c).unwrap(), direct, "{kind}");
        }
    }

    #[test]
    fn step_cuts_find_every_change() {
        let scheme = BinningScheme::new(8, Interval::SYMMETRIC_UNIT).unwrap();
        let mut cuts = Vec::new();
        step_cuts(&|x| scheme.index(x), -1.0, 1.0, &mut cuts);
        assert_eq!(cuts.len(), 7);
        for (k, &c) in cuts.iter().enumerate() {
            assert!((c - (-0.75 + 0.25 * k as f64)).abs() < 1e-12);
            let before = from_ord_key(ord_key(c) - 1);
            assert_eq!(scheme.index(before) + 1, scheme.index(c));
        }
        for k in [-1.0, -0.3, 0.0, 0.3, 1.0f64] {
            assert_eq!(from_ord_key(ord_key(k)), k);
        }
        assert!(ord_key(-0.0) < ord_key(0.0));
    }

    #[test]
    fn zero_weights_measure_nothing() {
        for kind in ActivationKind::ALL {
            let s = LayerSlice::with_upstream(Matrix::zeros(3, 2), kind, Some(kind)).unwrap();
            let r = measure_all(&s, &cfg(20_000, 8, 2)).unwrap();
            assert_eq!(r.ei, Some(0.0));
            assert_eq!(r.ei_parts, 0.0);
            assert_eq!(r.sensitivity, 0.0);
            assert_eq!(r.degeneracy, Some(0.0));
            assert_eq!(r.phi, Some(0.0));
        }
    }

    #[test]
    fn single_edge_quantities_coincide() {
        for kind in ActivationKind::ALL {
            for w in [-3.0, 0.4, 1.0, 2.7] {
                let s = LayerSlice::single_edge(w, kind).unwrap();
                let c = cfg(30_000, 16, 9);
                let ei = ei_joint(&s, &c).unwrap();
                assert_eq!(ei_parts(&s, &c).unwrap(), ei);
                assert_eq!(sensitivity(&s, &c).unwrap(), ei);
                let r = measure_all(&s, &c).unwrap();
                assert_eq!(r.ei, Some(ei));
                assert_eq!(r.degeneracy, Some(0.0));
                assert_eq!(r.phi, Some(0.0));
            }
        }
    }

    #[test]
    fn measure_all_matches_individual_operations() {
        let s = slice(
            &[vec![1.5, -0.7, 2.2], vec![-2.0, 0.1, 0.9], vec![0.0, 3.3, -1.1]],
            ActivationKind::Sigmoid,
        );
        let c = cfg(40_000, 8, 17);
        let r = measure_all(&s, &c).unwrap();
        let ei = ei_joint(&s, &c).unwrap();
        let parts = ei_parts(&s, &c).unwrap();
        let sens = sensitivity(&s, &c).unwrap();
        assert_eq!(r.ei, Some(ei));
        assert_eq!(r.ei_parts, parts);
        assert_eq!(r.sensitivity, sens);
        assert_eq!(r.degeneracy, Some(sens - ei));
        assert_eq!(r.phi, Some(ei - parts));
        assert!((r.phi.unwrap() - (ei - parts)).abs() < 1e-12);
        assert_eq!((r.samples_used, r.bins, r.seed), (40_000, 8, 17));
    }

    #[test]
    fn deterministic_per_seed() {
        let s = slice(&[vec![1.0, 2.0], vec![-1.0, 0.5]], ActivationKind::Tanh);
        let a = measure_all(&s, &cfg(30_000, 8, 4)).unwrap();
        assert_eq!(a, measure_all(&s, &cfg(30_000, 8, 4)).unwrap());
        assert_ne!(a, measure_all(&s, &cfg(30_000, 8, 5)).unwrap());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = slice(&[vec![1.0, 2.0, -0.5], vec![-1.0, 0.5, 2.0]], ActivationKind::Sigmoid);
        let c = cfg(100_000, 8, 4);
        let one = crate::parallel::with_workers(1, || measure_all(&s, &c).unwrap());
        let three = crate::parallel::with_workers(3, || measure_all(&s, &c).unwrap());
        assert_eq!(one, three);
    }

    #[test]
    fn output_relabeling_is_exact_and_input_relabeling_is_statistical() {
        let s = slice(&[vec![1.0, 2.0, -0.5], vec![-1.0, 0.5, 2.0]], ActivationKind::Sigmoid);
        let c = cfg(200_000, 8, 8);
        let ei = ei_joint(&s, &c).unwrap();
        let swapped_rows = slice(&[vec![-1.0, 0.5, 2.0], vec![1.0, 2.0, -0.5]], ActivationKind::Sigmoid);
        assert_eq!(ei_joint(&swapped_rows, &c).unwrap(), ei);
        let perm = [2, 0, 1];
        let permuted = LayerSlice::with_upstream(
            s.weights().permute_cols(&perm),
            ActivationKind::Sigmoid,
            Some(ActivationKind::Sigmoid),
        )
        .unwrap();
        assert!((ei_joint(&permuted, &c).unwrap() - ei).abs() < 0.02);
    }

    #[test]
    fn wide_keys_use_split_layout() {
        // 2^5 bins over 20 inputs = 100 bits of input key, plus 5 bits of output
        let s = LayerSlice::with_upstream(
            Matrix::from_fn(1, 20, |_, c| if c == 0 { 3.0 } else { 0.0 }),
            ActivationKind::Sigmoid,
            None,
        )
        .unwrap();
        let narrow = LayerSlice::single_edge(3.0, ActivationKind::Sigmoid).unwrap();
        let c = cfg(20_000, 32, 1);
        let ei = ei_joint(&s, &c).unwrap();
        assert!(ei > 0.0);
        // every input state is distinct, so MI equals the output entropy
        let ys: Vec<f64> = perturb_layer_max_entropy(&s, &c).map(|(_, y)| y[0]).collect();
        let out = BinningScheme::new(32, Interval::UNIT).unwrap();
        let spec = CountSpectrum::from_counts({
            let mut counts = [0u64; 32];
            for y in ys {
                counts[out.index(y) as usize] += 1;
            }
            counts
        });
        assert!((ei - spec.entropy_bits()).abs() < 1e-9);
        assert!(ei_joint(&narrow, &c).unwrap() <= ei + 1e-9);
    }

    #[test]
    fn capacity_is_reported() {
        let s = LayerSlice::with_upstream(Matrix::zeros(1, 43), ActivationKind::Sigmoid, None).unwrap();
        assert!(matches!(ei_joint(&s, &cfg(100, 8, 0)), Err(Error::Capacity { .. })));
        let r = measure_all(&s, &cfg(100, 8, 0)).unwrap();
        assert_eq!(r.ei, None);
        assert_eq!(r.degeneracy, None);
        assert_eq!(r.phi, None);
        assert_eq!(r.sensitivity, 0.0);
    }

    #[test]
    fn invalid_configs_rejected() {
        let s = LayerSlice::single_edge(1.0, ActivationKind::Sigmoid).unwrap();
        assert!(ei_joint(&s, &cfg(0, 8, 0)).is_err());
        assert!(ei_joint(&s, &cfg(10, 1, 0)).is_err());
        assert!(LayerSlice::new(Matrix::zeros(1, 2), ActivationKind::Relu, vec![Interval::UNIT]).is_err());
    }

    #[test]
    fn algebraic_helpers() {
        assert_eq!(degeneracy(2.5, 1.0), 1.5);
        assert_eq!(phi_feedforward(1.0, 1.25), -0.25);
    }
}
