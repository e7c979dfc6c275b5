//! Generativity metrics over per-step classifier states: visited digits,
//! state times, transitions, transition matrices and per-step curves.
//!
//! States are `0..=9` for digits and [`NON_DIGIT`] (10) for the non-digit
//! class.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, CLASS_COUNT, DIGIT_COUNT, NON_DIGIT};

/// Per-step classifier states of one trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSequence(Vec<u8>);

impl StateSequence {
    pub fn new(states: Vec<u8>) -> Result<Self> {
        if let Some(s) = states.iter().find(|&&s| usize::from(s) >= CLASS_COUNT) {
            return Err(Error::arg(format!("state {s} outside 0..=10")));
        }
        Ok(Self(states))
    }

    pub fn states(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[u8]> for StateSequence {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// Number of distinct digit states (non-digit excluded).
pub fn states_visited(s: &[u8]) -> usize {
    let mut seen = [false; DIGIT_COUNT];
    for &x in s {
        if let Some(slot) = seen.get_mut(usize::from(x)) {
            *slot = true;
        }
    }
    seen.iter().filter(|&&b| b).count()
}

/// Steps spent in each state; sums to the sequence length.
pub fn state_times(s: &[u8]) -> [usize; CLASS_COUNT] {
    let mut t = [0; CLASS_COUNT];
    for &x in s {
        t[usize::from(x).min(CLASS_COUNT - 1)] += 1;
    }
    t
}

/// Which state changes count as transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransitionPolicy {
    /// Every change except into the non-digit state.
    #[default]
    ExcludeIntoNonDigit,
    /// Only changes between two digit states.
    DigitToDigit,
}

pub fn transition_count(s: &[u8]) -> usize {
    transition_count_with(s, TransitionPolicy::default())
}

pub fn transition_count_with(s: &[u8], policy: TransitionPolicy) -> usize {
    s.windows(2)
        .filter(|w| {
            w[0] != w[1]
                && w[1] != NON_DIGIT
                && (policy == TransitionPolicy::ExcludeIntoNonDigit || w[0] != NON_DIGIT)
        })
        .count()
}

/// Counts of consecutive state pairs (self-pairs included) and their
/// row-normalized probabilities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    counts: [[u64; CLASS_COUNT]; CLASS_COUNT],
}

impl TransitionMatrix {
    pub fn from_counts(counts: [[u64; CLASS_COUNT]; CLASS_COUNT]) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[[u64; CLASS_COUNT]; CLASS_COUNT] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, from: usize) -> u64 {
        self.counts[from].iter().sum()
    }

    /// States never observed as a transition source; their rows are all zero.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..CLASS_COUNT).filter(|&r| self.row_total(r) == 0).collect()
    }

    pub fn probabilities(&self) -> [[f64; CLASS_COUNT]; CLASS_COUNT] {
        let mut p = [[0.0; CLASS_COUNT]; CLASS_COUNT];
        for (r, row) in p.iter_mut().enumerate() {
            let total = self.row_total(r);
            if total > 0 {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = self.counts[r][c] as f64 / total as f64;
                }
            }
        }
        p
    }

    pub fn probability(&self, from: usize, to: usize) -> f64 {
        let total = self.row_total(from);
        if total == 0 {
            0.0
        } else {
            self.counts[from][to] as f64 / total as f64
        }
    }

    /// Self-transition probabilities of the digit states 0–9.
    pub fn digit_self_probabilities(&self) -> Vec<f64> {
        (0..DIGIT_COUNT).map(|d| self.probability(d, d)).collect()
    }

    /// All 110 off-diagonal entries, row-major.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let p = self.probabilities();
        let mut out = Vec::with_capacity(CLASS_COUNT * (CLASS_COUNT - 1));
        for (r, row) in p.iter().enumerate() {
            out.extend(row.iter().enumerate().filter(|&(c, _)| c != r).map(|(_, &v)| v));
        }
        out
    }

    pub fn merge(&mut self, other: &TransitionMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }
}

/// Pools consecutive pairs over all sequences. Fails when no sequence has a
/// pair.
pub fn transition_matrix<S: AsRef<[u8]>>(seqs: &[S]) -> Result<TransitionMatrix> {
    let mut counts = [[0u64; CLASS_COUNT]; CLASS_COUNT];
    for s in seqs {
        for w in s.as_ref().windows(2) {
            let (a, b) = (usize::from(w[0]), usize::from(w[1]));
            if a >= CLASS_COUNT || b >= CLASS_COUNT {
                return Err(Error::arg(format!("state pair ({a}, {b}) outside 0..=10")));
            }
            counts[a][b] += 1;
        }
    }
    if counts.iter().flatten().all(|&c| c == 0) {
        return Err(Error::arg("transition matrix needs a sequence of length at least 2"));
    }
    Ok(TransitionMatrix { counts })
}

fn common_len<T, S: AsRef<[T]>>(seqs: &[S]) -> Result<usize> {
    let first = seqs.first().ok_or_else(|| Error::arg("empty trajectory group"))?.as_ref().len();
    if let Some(bad) = seqs.iter().find(|s| s.as_ref().len() != first) {
        return Err(Error::dim("sequence length", first, bad.as_ref().len()));
    }
    Ok(first)
}

/// Per step, the fraction of sequences whose state equals `digit`.
pub fn accuracy_curve<S: AsRef<[u8]>>(seqs: &[S], digit: u8) -> Result<Vec<f64>> {
    accuracy_curve_any(seqs, &[digit])
}

/// Per step, the fraction of sequences whose state is one of `targets`.
pub fn accuracy_curve_any<S: AsRef<[u8]>>(seqs: &[S], targets: &[u8]) -> Result<Vec<f64>> {
    let len = common_len(seqs)?;
    let mut hits = vec![0usize; len];
    for s in seqs {
        for (h, x) in hits.iter_mut().zip(s.as_ref()) {
            *h += usize::from(targets.contains(x));
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / seqs.len() as f64).collect())
}

/// Per-step mean of `values` across sequences (entropy, active fraction).
pub fn mean_curve<S: AsRef<[f64]>>(seqs: &[S]) -> Result<Vec<f64>> {
    let len = common_len(seqs)?;
    let mut sums = vec![0.0f64; len];
    for s in seqs {
        for (acc, &x) in sums.iter_mut().zip(s.as_ref()) {
            *acc += x;
        }
    }
    Ok(sums.into_iter().map(|v| v / seqs.len() as f64).collect())
}

/// Per-step mean softmax entropy.
pub fn entropy_curve<S: AsRef<[f64]>>(entropies: &[S]) -> Result<Vec<f64>> {
    mean_curve(entropies)
}
