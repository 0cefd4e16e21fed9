//! Token-level Levenshtein alignment and mutated-position extraction.

use serde::{Deserialize, Serialize};

use crate::text::TokenSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Match,
    Substitute,
    Insert,
    Delete,
}

/// One step of an edit script from the original sequence to the generated one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub src_index: Option<usize>,
    pub dst_index: Option<usize>,
}

impl EditOp {
    fn new(kind: EditKind, src: Option<usize>, dst: Option<usize>) -> Self {
        Self {
            kind,
            src_index: src,
            dst_index: dst,
        }
    }
}

/// An optimal edit script plus the positions it touches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffAlignment {
    pub ops: Vec<EditOp>,
    pub distance: usize,
    /// `dst_index` of every substitute and insert, ascending.
    pub mutated_dst_indices: Vec<usize>,
    /// `src_index` of every substitute and delete, ascending.
    pub mutated_src_indices: Vec<usize>,
}

impl DiffAlignment {
    fn from_ops(ops: Vec<EditOp>) -> Self {
        let distance = ops.iter().filter(|op| op.kind != EditKind::Match).count();
        let mut dst: Vec<usize> = ops
            .iter()
            .filter(|op| matches!(op.kind, EditKind::Substitute | EditKind::Insert))
            .filter_map(|op| op.dst_index)
            .collect();
        let mut src: Vec<usize> = ops
            .iter()
            .filter(|op| matches!(op.kind, EditKind::Substitute | EditKind::Delete))
            .filter_map(|op| op.src_index)
            .collect();
        dst.sort_unstable();
        dst.dedup();
        src.sort_unstable();
        src.dedup();
        Self {
            ops,
            distance,
            mutated_dst_indices: dst,
            mutated_src_indices: src,
        }
    }

    /// Applies the script to `original`, producing the edited token list.
    ///
    /// Insert and substitute ops carry no payload, so their tokens are taken
    /// from `generated` by `dst_index`.
    pub fn replay<'a, T: PartialEq>(&self, original: &'a [T], generated: &'a [T]) -> Vec<&'a T> {
        let mut out = Vec::with_capacity(generated.len());
        for op in &self.ops {
            match op.kind {
                EditKind::Match => out.push(&original[op.src_index.unwrap()]),
                EditKind::Substitute | EditKind::Insert => {
                    out.push(&generated[op.dst_index.unwrap()])
                }
                EditKind::Delete => {}
            }
        }
        out
    }
}

/// Aligns two token sequences by token text.
pub fn levenshtein_align(a: &TokenSequence, b: &TokenSequence) -> DiffAlignment {
    align_slices(&a.texts(), &b.texts())
}

const INF: u32 = u32::MAX / 2;

/// Levenshtein alignment over arbitrary comparable items.
///
/// Runs a banded DP whose band doubles until the distance fits inside it, at
/// which point the banded table agrees with the full table on every cell an
/// optimal path can touch. Backtrace prefers substitute, then delete, then
/// insert among equal-cost steps.
pub fn align_slices<T: PartialEq>(a: &[T], b: &[T]) -> DiffAlignment {
    let (n, m) = (a.len(), b.len());
    let full = n.max(m);
    let mut band = n.abs_diff(m).max(1);
    loop {
        let band_eff = band.min(full.max(1));
        let table = fill_banded(a, b, band_eff);
        let dist = table[n * (m + 1) + m] as usize;
        if dist <= band_eff || band_eff >= full {
            return DiffAlignment::from_ops(backtrace(a, b, &table));
        }
        band *= 2;
    }
}

fn fill_banded<T: PartialEq>(a: &[T], b: &[T], band: usize) -> Vec<u32> {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut d = vec![INF; (n + 1) * w];
    for (j, cell) in d.iter_mut().take(m.min(band) + 1).enumerate() {
        *cell = j as u32;
    }
    for i in 1..=n {
        if i <= band {
            d[i * w] = i as u32;
        }
        let lo = i.saturating_sub(band).max(1);
        let hi = (i + band).min(m);
        for j in lo..=hi {
            let sub = d[(i - 1) * w + j - 1] + u32::from(a[i - 1] != b[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    d
}

fn backtrace<T: PartialEq>(a: &[T], b: &[T], d: &[u32]) -> Vec<EditOp> {
    let w = b.len() + 1;
    let (mut i, mut j) = (a.len(), b.len());
    let mut ops = Vec::with_capacity(i.max(j));
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = a[i - 1] == b[j - 1];
            if d[(i - 1) * w + j - 1] + u32::from(!same) == here {
                let kind = if same {
                    EditKind::Match
                } else {
                    EditKind::Substitute
                };
                ops.push(EditOp::new(kind, Some(i - 1), Some(j - 1)));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            ops.push(EditOp::new(EditKind::Delete, Some(i - 1), None));
            i -= 1;
        } else {
            ops.push(EditOp::new(EditKind::Insert, None, Some(j - 1)));
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Pairs each mutation with a centre in both sequences.
///
/// Substitutions pair their own indices. An insert pairs its `dst_index` with
/// the source index of the nearest preceding match or substitute (0 if none);
/// a delete pairs its `src_index` with the destination index of the nearest
/// preceding match or substitute (0 if none). Output is sorted by the
/// destination anchor, stable in script order.
pub fn mutated_pairs(al: &DiffAlignment) -> Vec<(usize, usize)> {
    let mut last_src = 0;
    let mut last_dst = 0;
    let mut pairs = Vec::new();
    for op in &al.ops {
        match op.kind {
            EditKind::Match => {
                last_src = op.src_index.unwrap();
                last_dst = op.dst_index.unwrap();
            }
            EditKind::Substitute => {
                let (s, d) = (op.src_index.unwrap(), op.dst_index.unwrap());
                pairs.push((s, d));
                last_src = s;
                last_dst = d;
            }
            EditKind::Insert => pairs.push((last_src, op.dst_index.unwrap())),
            EditKind::Delete => pairs.push((op.src_index.unwrap(), last_dst)),
        }
    }
    pairs.sort_by_key(|&(_, d)| d);
    pairs
}
