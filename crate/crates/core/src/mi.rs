//! Equal-width binning and plug-in mutual information over discrete states.
//!
//! All estimators reduce a table of counts to its *count spectrum*: how many
//! cells hold each distinct count. Plug-in entropy depends only on that
//! spectrum, so two tables with the same counts in a different arrangement
//! (merged shards, transposes, dense vs sparse storage) give bit-identical
//! results. Information is reported in bits.

use std::collections::{BTreeMap, HashMap};

use crate::activation::Interval;
use crate::error::{Error, Result};

/// Equal-width bins over a closed range. Values outside the range are
/// clipped into the edge bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinningScheme {
    bins: u32,
    range: Interval,
    width: f64,
}

impl BinningScheme {
    pub fn new(bins: u32, range: Interval) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
        }
        let range = Interval::new(range.lo, range.hi)?;
        Ok(BinningScheme {
            bins,
            range,
            width: range.width() / bins as f64,
        })
    }

    pub fn bins(&self) -> u32 {
        self.bins
    }

    pub fn range(&self) -> Interval {
        self.range
    }

    /// Bin index of a finite value; see [`bin_value`].
    #[inline]
    pub fn index(&self, v: f64) -> u32 {
        let clipped = v.clamp(self.range.lo, self.range.hi);
        // non-negative, so truncation is floor
        let idx = ((clipped - self.range.lo) / self.width) as u32;
        idx.min(self.bins - 1)
    }
}

/// Clip `v` into the scheme's range and return its bin; the upper edge falls
/// in the last bin.
pub fn bin_value(v: f64, scheme: &BinningScheme) -> Result<u32> {
    if !v.is_finite() {
        return Err(Error::Domain(format!("cannot bin non-finite value {v}")));
    }
    Ok(scheme.index(v))
}

/// Number of joint states of `width` nodes with `bins` states each, or a
/// capacity error when it does not fit a 128-bit key.
pub fn state_space(bins: u32, width: usize) -> Result<u128> {
    u32::try_from(width)
        .ok()
        .and_then(|w| (bins as u128).checked_pow(w))
        .ok_or(Error::Capacity {
            bins,
            width,
            capacity_bits: 128,
        })
}

/// Mixed-radix key `Σ idx_k · bins^k`.
pub fn joint_state_encode(indices: &[u32], bins: u32) -> Result<u128> {
    state_space(bins, indices.len())?;
    let mut key = 0u128;
    let mut place = 1u128;
    for (k, &idx) in indices.iter().enumerate() {
        if idx >= bins {
            return Err(Error::Domain(format!(
                "bin index {idx} at position {k} is not below {bins}"
            )));
        }
        key += idx as u128 * place;
        place = place.wrapping_mul(bins as u128);
    }
    Ok(key)
}

/// Multiset of cell counts: `multiplicity[c]` cells hold count `c`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountSpectrum {
    small: Vec<u64>,
    large: BTreeMap<u64, u64>,
    total: u64,
}

const SMALL_COUNTS: u64 = 4096;

impl CountSpectrum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record `multiplicity` cells that each hold `count` observations.
    pub fn add(&mut self, count: u64, multiplicity: u64) {
        if count == 0 || multiplicity == 0 {
            return;
        }
        if count < SMALL_COUNTS {
            let c = count as usize;
            if self.small.len() <= c {
                self.small.resize(c + 1, 0);
            }
            self.small[c] += multiplicity;
        } else {
            *self.large.entry(count).or_insert(0) += multiplicity;
        }
        self.total += count * multiplicity;
    }

    pub fn from_counts(counts: impl IntoIterator<Item = u64>) -> Self {
        let mut s = Self::new();
        for c in counts {
            s.add(c, 1);
        }
        s
    }

    /// Run lengths of a sorted sequence.
    pub fn from_sorted_runs<T: PartialEq>(sorted: &[T]) -> Self {
        let mut s = Self::new();
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i + 1;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            s.add((j - i) as u64, 1);
            i = j;
        }
        s
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn occupied_cells(&self) -> u64 {
        self.small.iter().sum::<u64>() + self.large.values().sum::<u64>()
    }

    /// `(count, multiplicity)` pairs in increasing count order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.small
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0)
            .map(|(c, &m)| (c as u64, m))
            .chain(self.large.iter().map(|(&c, &m)| (c, m)))
    }

    /// Plug-in entropy in bits, `Σ (c/N)·log2(N/c)` summed in count order.
    pub fn entropy_bits(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let n = self.total as f64;
        self.iter()
            .map(|(c, m)| {
                let c = c as f64;
                m as f64 * (c / n) * (n / c).log2()
            })
            .sum()
    }
}

/// Plug-in MI from the spectra of the joint table and both marginals.
pub fn mi_from_spectra(joint: &CountSpectrum, x: &CountSpectrum, y: &CountSpectrum) -> f64 {
    let hx = x.entropy_bits();
    let hy = y.entropy_bits();
    let hxy = joint.entropy_bits();
    ((hx + hy) - hxy).max(0.0)
}

/// Sparse joint histogram over `(x_key, y_key)` pairs of joint-state keys.
#[derive(Debug, Clone, Default)]
pub struct JointHistogram {
    joint: HashMap<(u128, u128), u64>,
    x_marginal: HashMap<u128, u64>,
    y_marginal: HashMap<u128, u64>,
    total: u64,
}

impl JointHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, x_key: u128, y_key: u128) {
        self.add_count(x_key, y_key, 1);
    }

    pub fn add_count(&mut self, x_key: u128, y_key: u128, count: u64) {
        if count == 0 {
            return;
        }
        *self.joint.entry((x_key, y_key)).or_insert(0) += count;
        *self.x_marginal.entry(x_key).or_insert(0) += count;
        *self.y_marginal.entry(y_key).or_insert(0) += count;
        self.total += count;
    }

    /// Add every count of `other` into `self`.
    pub fn merge(&mut self, other: &JointHistogram) {
        for (&(x, y), &c) in &other.joint {
            self.add_count(x, y, c);
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, x_key: u128, y_key: u128) -> u64 {
        self.joint.get(&(x_key, y_key)).copied().unwrap_or(0)
    }

    pub fn x_count(&self, x_key: u128) -> u64 {
        self.x_marginal.get(&x_key).copied().unwrap_or(0)
    }

    pub fn y_count(&self, y_key: u128) -> u64 {
        self.y_marginal.get(&y_key).copied().unwrap_or(0)
    }

    pub fn cells(&self) -> impl Iterator<Item = ((u128, u128), u64)> + '_ {
        self.joint.iter().map(|(&k, &c)| (k, c))
    }

    pub fn occupied_cells(&self) -> usize {
        self.joint.len()
    }

    /// Histogram with the roles of x and y swapped.
    pub fn transposed(&self) -> JointHistogram {
        let mut t = JointHistogram::new();
        for (&(x, y), &c) in &self.joint {
            t.add_count(y, x, c);
        }
        t
    }

    pub fn spectra(&self) -> (CountSpectrum, CountSpectrum, CountSpectrum) {
        (
            CountSpectrum::from_counts(self.joint.values().copied()),
            CountSpectrum::from_counts(self.x_marginal.values().copied()),
            CountSpectrum::from_counts(self.y_marginal.values().copied()),
        )
    }

    pub fn entropy_x(&self) -> f64 {
        CountSpectrum::from_counts(self.x_marginal.values().copied()).entropy_bits()
    }

    pub fn entropy_y(&self) -> f64 {
        CountSpectrum::from_counts(self.y_marginal.values().copied()).entropy_bits()
    }

    pub fn mutual_information(&self) -> Result<f64> {
        mutual_information(self)
    }
}

/// Plug-in estimate `Σ p̂(x,y) log2(p̂(x,y) / p̂(x)p̂(y))` in bits.
pub fn mutual_information(h: &JointHistogram) -> Result<f64> {
    if h.total == 0 {
        return Err(Error::Domain("mutual information of an empty histogram".into()));
    }
    let (j, x, y) = h.spectra();
    Ok(mi_from_spectra(&j, &x, &y))
}

/// Dense `rows × cols` count table for a pair of scalar binned variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
}

impl PairTable {
    pub fn new(rows: usize, cols: usize) -> Self {
        PairTable {
            rows,
            cols,
            counts: vec![0; rows * cols],
        }
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize) {
        self.counts[r * self.cols + c] += 1;
    }

    #[inline]
    pub fn add_count(&mut self, r: usize, c: usize, n: u64) {
        self.counts[r * self.cols + c] += n;
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.counts[r * self.cols + c]
    }

    pub fn merge(&mut self, other: &PairTable) {
        debug_assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mutual_information(&self) -> Result<f64> {
        if self.total() == 0 {
            return Err(Error::Domain("mutual information of an empty table".into()));
        }
        let joint = CountSpectrum::from_counts(self.counts.iter().copied());
        let x = CountSpectrum::from_counts(
            (0..self.rows).map(|r| self.counts[r * self.cols..(r + 1) * self.cols].iter().sum()),
        );
        let y = CountSpectrum::from_counts(
            (0..self.cols).map(|c| (0..self.rows).map(|r| self.counts[r * self.cols + c]).sum()),
        );
        Ok(mi_from_spectra(&joint, &x, &y))
    }
}
