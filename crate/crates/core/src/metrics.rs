//! Corpus-level BLEU-4, NIST-4 and ROUGE-4 F with one reference per segment.
//!
//! Scorers are generic over the token type and compare tokens exactly.
//! Sums run in segment order so results are bit-stable across runs.

use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

use crate::error::{Error, Result};

const MAX_N: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Smoothing {
    #[default]
    None,
    /// Adds one to the matched and total counts for n > 1.
    AddOne,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub bleu4: f64,
    pub nist4: f64,
    pub rouge4_f: f64,
    pub segments: usize,
}

impl MetricReport {
    /// `BLEU\tNIST\tROUGE` with BLEU and ROUGE scaled to 0..100.
    pub fn tsv(&self) -> String {
        format!("{:.2}\t{:.4}\t{:.2}", self.bleu4 * 100.0, self.nist4, self.rouge4_f * 100.0)
    }
}

pub fn evaluate<T, S>(hypotheses: &[S], references: &[S]) -> Result<MetricReport>
where
    T: Eq + Hash,
    S: AsRef<[T]>,
{
    Ok(MetricReport {
        bleu4: bleu4(hypotheses, references)?,
        nist4: nist4(hypotheses, references)?,
        rouge4_f: rouge4_f(hypotheses, references)?,
        segments: hypotheses.len(),
    })
}

fn check<A, B>(h: &[A], r: &[B]) -> Result<()> {
    if h.len() != r.len() {
        return Err(Error::SegmentMismatch {
            hypotheses: h.len(),
            references: r.len(),
        });
    }
    Ok(())
}

fn counts<T: Eq + Hash>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    for g in seq.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

fn total_ngrams(len: usize, n: usize) -> usize {
    (len + 1).saturating_sub(n)
}

/// Clipped matches of `hyp` n-grams against `reference`.
fn clipped_matches<T: Eq + Hash>(hyp: &[T], reference: &[T], n: usize) -> usize {
    let mut budget = counts(reference, n);
    let mut matched = 0;
    for g in hyp.windows(n) {
        if let Some(c) = budget.get_mut(g) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    matched
}

pub fn bleu4<T, S>(hypotheses: &[S], references: &[S]) -> Result<f64>
where
    T: Eq + Hash,
    S: AsRef<[T]>,
{
    bleu4_with(hypotheses, references, Smoothing::None)
}

pub fn bleu4_with<T, S>(hypotheses: &[S], references: &[S], smoothing: Smoothing) -> Result<f64>
where
    T: Eq + Hash,
    S: AsRef<[T]>,
{
    check(hypotheses, references)?;
    let mut matched = [0usize; MAX_N];
    let mut total = [0usize; MAX_N];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hypotheses.iter().zip(references) {
        let (h, rf) = (h.as_ref(), rf.as_ref());
        c += h.len();
        r += rf.len();
        for n in 1..=MAX_N {
            matched[n - 1] += clipped_matches(h, rf, n);
            total[n - 1] += total_ngrams(h.len(), n);
        }
    }
    if c == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..MAX_N {
        let (m, t) = match (smoothing, n) {
            (Smoothing::AddOne, n) if n > 0 => (matched[n] + 1, total[n] + 1),
            _ => (matched[n], total[n]),
        };
        if m == 0 || t == 0 {
            return Ok(0.0);
        }
        log_sum += (m as f64 / t as f64).ln();
    }
    let bp = (1.0 - r as f64 / c as f64).min(0.0).exp();
    Ok(bp * (log_sum / MAX_N as f64).exp())
}

/// NIST-4 with information weights from the reference side:
/// `info(w1..wn) = log2(count(w1..wn-1) / count(w1..wn))`, where the empty
/// prefix counts every reference word. The sum over n of matched
/// information per hypothesis n-gram is scaled by
/// `exp(-beta * ln^2(min(1, hyp_len / ref_len)))`, with beta chosen so that a
/// length ratio of 2/3 gives a factor of 1/2.
pub fn nist4<T, S>(hypotheses: &[S], references: &[S]) -> Result<f64>
where
    T: Eq + Hash,
    S: AsRef<[T]>,
{
    check(hypotheses, references)?;
    let mut ref_counts: HashMap<&[T], usize> = HashMap::new();
    let mut ref_words = 0usize;
    for rf in references {
        let rf = rf.as_ref();
        ref_words += rf.len();
        for n in 1..=MAX_N {
            for g in rf.windows(n) {
                *ref_counts.entry(g).or_insert(0) += 1;
            }
        }
    }
    let info = |g: &[T]| -> f64 {
        let prefix = if g.len() == 1 {
            ref_words
        } else {
            ref_counts[&g[..g.len() - 1]]
        };
        (prefix as f64 / ref_counts[g] as f64).log2()
    };

    let mut hyp_words = 0usize;
    let mut matched_info = [0.0f64; MAX_N];
    let mut hyp_total = [0usize; MAX_N];
    for (h, rf) in hypotheses.iter().zip(references) {
        let (h, rf) = (h.as_ref(), rf.as_ref());
        hyp_words += h.len();
        for n in 1..=MAX_N {
            hyp_total[n - 1] += total_ngrams(h.len(), n);
            let mut budget = counts(rf, n);
            for g in h.windows(n) {
                if let Some(c) = budget.get_mut(g) {
                    if *c > 0 {
                        *c -= 1;
                        matched_info[n - 1] += info(g);
                    }
                }
            }
        }
    }
    if hyp_words == 0 || ref_words == 0 {
        return Ok(0.0);
    }
    let score: f64 = (0..MAX_N).map(|n| matched_info[n] / hyp_total[n].max(1) as f64).sum();
    Ok(score * nist_length_penalty(hyp_words as f64 / ref_words as f64))
}

fn nist_length_penalty(ratio: f64) -> f64 {
    let beta = -(0.5f64.ln()) / 1.5f64.ln().powi(2);
    let l = ratio.min(1.0).ln();
    (-beta * l * l).exp()
}

/// ROUGE-4 F1 per segment, macro-averaged. A segment where neither side has
/// a 4-gram is skipped; one where only one side lacks them scores 0.
pub fn rouge4_f<T, S>(hypotheses: &[S], references: &[S]) -> Result<f64>
where
    T: Eq + Hash,
    S: AsRef<[T]>,
{
    check(hypotheses, references)?;
    let mut sum = 0.0;
    let mut scored = 0usize;
    for (h, rf) in hypotheses.iter().zip(references) {
        let (h, rf) = (h.as_ref(), rf.as_ref());
        let (th, tr) = (total_ngrams(h.len(), MAX_N), total_ngrams(rf.len(), MAX_N));
        if th == 0 && tr == 0 {
            continue;
        }
        scored += 1;
        let m = clipped_matches(h, rf, MAX_N);
        if m > 0 {
            let p = m as f64 / th as f64;
            let r = m as f64 / tr as f64;
            sum += 2.0 * p * r / (p + r);
        }
    }
    Ok(if scored == 0 { 0.0 } else { sum / scored as f64 })
}
