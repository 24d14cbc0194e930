//! Sequence matching over overloaded candidate lists.
//!
//! A query window of `L` quantized frames pulls the union of the buckets its
//! frames resolve to. Every candidate `i` is scored as the aligned sum
//! `sum_k delta(ref[clamp(i + k - L/2)], frame[k])` under constant velocity,
//! where `delta` is the symmetric center-gap distance and a reference's
//! quantization vector is read back from the address it was stored under.
//!
//! `L = 1` uses the single-frame best match stored in the index instead.

use std::collections::{HashMap, VecDeque};

use crate::error::{invalid, Result};
use crate::hashindex::InvertedIndex;
use crate::quantizer::{QuantVector, Quantizer};

/// Per-dimension `K x K` table of `|c[j][a] - c[j][b]|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdcTable {
    k: usize,
    d: usize,
    gaps: Vec<f64>,
}

impl SdcTable {
    pub fn new(qz: &Quantizer) -> Self {
        let (k, d) = (qz.k(), qz.d());
        let mut gaps = Vec::with_capacity(d * k * k);
        for j in 0..d {
            let c = qz.centers(j);
            for a in 0..k {
                for b in 0..k {
                    gaps.push((c[a] - c[b]).abs());
                }
            }
        }
        Self { k, d, gaps }
    }

    #[inline]
    pub fn gap(&self, j: usize, a: u16, b: u16) -> f64 {
        self.gaps[(j * self.k + a as usize) * self.k + b as usize]
    }

    /// Row of gaps against a fixed query vector: `cost[j * K + a] = gap(j, a, q[j])`.
    pub fn query_costs(&self, q: &[u16]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.d * self.k);
        for (j, &b) in q.iter().enumerate() {
            for a in 0..self.k as u16 {
                out.push(self.gap(j, a, b));
            }
        }
        out
    }

    pub fn distance(&self, qa: &[u16], qb: &[u16]) -> f64 {
        qa.iter()
            .zip(qb)
            .enumerate()
            .fold(0.0, |s, (j, (&a, &b))| s + self.gap(j, a, b))
    }
}

/// Center-gap distance between two quantization vectors.
pub fn sdc_distance(qz: &Quantizer, qa: &QuantVector, qb: &QuantVector) -> Result<f64> {
    if qa.len() != qz.d() || qb.len() != qz.d() {
        return invalid(format!(
            "quantization vectors of length {} and {} for d={}",
            qa.len(),
            qb.len(),
            qz.d()
        ));
    }
    if qa.0.iter().chain(&qb.0).any(|&v| v as usize >= qz.k()) {
        return invalid(format!("quantization index not below K={}", qz.k()));
    }
    Ok(SdcTable::new(qz).distance(&qa.0, &qb.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMatch {
    pub best: usize,
    pub score: f64,
    /// Deduplicated, ascending candidate references.
    pub candidates: Vec<u32>,
    /// Frames whose address was unoccupied and redirected.
    pub fallback_frames: usize,
}

impl SequenceMatch {
    pub fn candidates_probed(&self) -> usize {
        self.candidates.len()
    }
}

/// Read-only scoring context shared by batch and online matching.
#[derive(Debug)]
pub struct Matcher<'a> {
    index: &'a InvertedIndex,
    qz: &'a Quantizer,
    table: SdcTable,
    /// Quantization digits of every reference, decoded from its address.
    ref_digits: Vec<u16>,
}

impl<'a> Matcher<'a> {
    pub fn new(index: &'a InvertedIndex, qz: &'a Quantizer) -> Result<Self> {
        if index.k() != qz.k() || index.d() != qz.d() || index.quantizer_id() != qz.fingerprint() {
            return invalid("index was built with a different quantizer");
        }
        let d = qz.d();
        let mut ref_digits = vec![0u16; index.ref_count() * d];
        for (i, &h) in index.ref_addresses().iter().enumerate() {
            qz.unhash_into(h, &mut ref_digits[i * d..(i + 1) * d]);
        }
        Ok(Self {
            index,
            qz,
            table: SdcTable::new(qz),
            ref_digits,
        })
    }

    pub fn index(&self) -> &InvertedIndex {
        self.index
    }

    pub fn quantizer(&self) -> &Quantizer {
        self.qz
    }

    pub fn table(&self) -> &SdcTable {
        &self.table
    }

    fn check_frame(&self, q: &QuantVector) -> Result<()> {
        if q.len() != self.qz.d() || q.0.iter().any(|&v| v as usize >= self.qz.k()) {
            return invalid(format!("query frame is not a valid {}-dim quantization vector", self.qz.d()));
        }
        Ok(())
    }

    #[inline]
    fn clamp_ref(&self, i: i64) -> usize {
        i.clamp(0, self.index.ref_count() as i64 - 1) as usize
    }

    /// `delta(ref, frame)` with the frame given as a cost row.
    #[inline]
    fn pair_cost(&self, reference: usize, costs: &[f64]) -> f64 {
        let d = self.qz.d();
        let k = self.qz.k();
        let digits = &self.ref_digits[reference * d..(reference + 1) * d];
        digits
            .iter()
            .enumerate()
            .fold(0.0, |s, (j, &a)| s + costs[j * k + a as usize])
    }

    fn single_frame(&self, q: &QuantVector) -> Result<SequenceMatch> {
        let h = self.qz.hash(q)?;
        let lookup = self.index.lookup(h)?;
        let best = self.index.query_single(h)?;
        let d = self.qz.d();
        let score = self.table.distance(&self.ref_digits[best * d..(best + 1) * d], &q.0);
        Ok(SequenceMatch {
            best,
            score,
            candidates: lookup.candidates.to_vec(),
            fallback_frames: lookup.fallback as usize,
        })
    }

    /// Scores the whole window at once.
    pub fn match_sequence(&self, window: &[QuantVector]) -> Result<SequenceMatch> {
        if window.is_empty() {
            return invalid("empty query window");
        }
        for q in window {
            self.check_frame(q)?;
        }
        if window.len() == 1 {
            return self.single_frame(&window[0]);
        }
        let half = (window.len() / 2) as i64;
        let mut candidates = Vec::new();
        let mut fallback_frames = 0;
        let mut costs = Vec::with_capacity(window.len());
        for q in window {
            let lookup = self.index.lookup(self.qz.hash(q)?)?;
            fallback_frames += lookup.fallback as usize;
            candidates.extend_from_slice(lookup.candidates);
            costs.push(self.table.query_costs(&q.0));
        }
        candidates.sort_unstable();
        candidates.dedup();

        let mut best = (f64::INFINITY, usize::MAX);
        for &i in &candidates {
            let mut s = 0.0;
            for (k, c) in costs.iter().enumerate() {
                s += self.pair_cost(self.clamp_ref(i as i64 + k as i64 - half), c);
            }
            if s < best.0 {
                best = (s, i as usize);
            }
        }
        Ok(SequenceMatch {
            best: best.1,
            score: best.0,
            candidates,
            fallback_frames,
        })
    }
}

/// Free-function form of [`Matcher::match_sequence`] that also checks `L`.
pub fn match_sequence(
    index: &InvertedIndex,
    qz: &Quantizer,
    window: &[QuantVector],
    l: usize,
) -> Result<SequenceMatch> {
    if window.len() != l {
        return invalid(format!("window has {} frames, L = {l}", window.len()));
    }
    Matcher::new(index, qz)?.match_sequence(window)
}

#[derive(Debug)]
struct Frame {
    q: QuantVector,
    costs: Vec<f64>,
    candidates: Vec<u32>,
    fallback: bool,
}

/// Online matcher over a sliding window of the last `L` frames.
///
/// Pair costs are cached per diagonal `c = reference - frame`: under constant
/// velocity the candidate `i` at window center `t` sits on diagonal `i - t`,
/// and a diagonal's cached pairs stay valid as the window slides, so each new
/// frame costs one pair per surviving diagonal plus full windows for diagonals
/// seen for the first time.
#[derive(Debug)]
pub struct SequenceMatcher<'m, 'a> {
    matcher: &'m Matcher<'a>,
    l: usize,
    frames: VecDeque<Frame>,
    /// Absolute index of the next frame.
    next_frame: i64,
    /// How many frames in the window list each candidate.
    listed: HashMap<u32, u32>,
    /// Pair costs in frame order for every cached diagonal.
    diagonals: HashMap<i64, VecDeque<f64>>,
}

impl<'m, 'a> SequenceMatcher<'m, 'a> {
    pub fn new(matcher: &'m Matcher<'a>, l: usize) -> Result<Self> {
        if l == 0 {
            return invalid("sequence length must be >= 1");
        }
        Ok(Self {
            matcher,
            l,
            frames: VecDeque::with_capacity(l + 1),
            next_frame: 0,
            listed: HashMap::new(),
            diagonals: HashMap::new(),
        })
    }

    pub fn sequence_length(&self) -> usize {
        self.l
    }

    /// Diagonals carried over to the next frame.
    pub fn cached_diagonals(&self) -> usize {
        self.diagonals.len()
    }

    /// Adds a frame; returns a match once `L` frames have been seen.
    pub fn push(&mut self, q: QuantVector) -> Result<Option<SequenceMatch>> {
        let m = self.matcher;
        m.check_frame(&q)?;
        if self.l == 1 {
            self.next_frame += 1;
            return m.single_frame(&q).map(Some);
        }
        let lookup = m.index.lookup(m.qz.hash(&q)?)?;
        let frame = Frame {
            costs: m.table.query_costs(&q.0),
            candidates: lookup.candidates.to_vec(),
            fallback: lookup.fallback,
            q,
        };
        let f = self.next_frame;
        self.next_frame += 1;
        for &i in &frame.candidates {
            *self.listed.entry(i).or_insert(0) += 1;
        }
        // Extend cached diagonals by the new frame.
        for (&c, pairs) in self.diagonals.iter_mut() {
            pairs.push_back(m.pair_cost(m.clamp_ref(f + c), &frame.costs));
        }
        self.frames.push_back(frame);
        if self.frames.len() > self.l {
            let old = self.frames.pop_front().unwrap();
            for i in old.candidates {
                let n = self.listed.get_mut(&i).unwrap();
                *n -= 1;
                if *n == 0 {
                    self.listed.remove(&i);
                }
            }
            for pairs in self.diagonals.values_mut() {
                pairs.pop_front();
            }
        }
        if self.frames.len() < self.l {
            return Ok(None);
        }

        let first = f - self.l as i64 + 1;
        let center = first + (self.l / 2) as i64;
        let mut candidates: Vec<u32> = self.listed.keys().copied().collect();
        candidates.sort_unstable();

        let mut kept: HashMap<i64, VecDeque<f64>> = HashMap::with_capacity(candidates.len());
        let mut best = (f64::INFINITY, usize::MAX);
        for &i in &candidates {
            let c = i as i64 - center;
            let pairs = match self.diagonals.remove(&c) {
                Some(p) => p,
                None => self
                    .frames
                    .iter()
                    .enumerate()
                    .map(|(k, fr)| m.pair_cost(m.clamp_ref(first + k as i64 + c), &fr.costs))
                    .collect(),
            };
            debug_assert_eq!(pairs.len(), self.l);
            let s = pairs.iter().fold(0.0, |s, v| s + v);
            if s < best.0 {
                best = (s, i as usize);
            }
            kept.insert(c, pairs);
        }
        self.diagonals = kept;

        Ok(Some(SequenceMatch {
            best: best.1,
            score: best.0,
            candidates,
            fallback_frames: self.frames.iter().filter(|fr| fr.fallback).count(),
        }))
    }

    /// Frames currently in the window, oldest first.
    pub fn window(&self) -> Vec<QuantVector> {
        self.frames.iter().map(|f| f.q.clone()).collect()
    }
}
