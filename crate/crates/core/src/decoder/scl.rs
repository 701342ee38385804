use super::{check_input, DecodePath, DecoderConfig, DecoderState, FlipSpec};
use crate::code::PolarCode;
use crate::error::DecodeError;
use crate::kernels::{llr_combine_g, pm_increment, CheckKernel};

/// Working memory of one list entry.
///
/// `alpha` and `beta` hold one level per stage: level `s` (size `2^s`, for
/// `s < n`) lives at offset `2^s`. Level `n` is the channel itself.
#[derive(Clone)]
struct ListPath {
    alpha: Vec<f64>,
    beta: Vec<u8>,
    decisions: Vec<u8>,
    gradient: Vec<f64>,
    bit_llrs: Vec<f64>,
    pm: f64,
}

impl ListPath {
    fn new(n: usize) -> Self {
        Self {
            alpha: vec![0.0; n.max(1)],
            beta: vec![0; n.max(1)],
            decisions: vec![0; n],
            gradient: vec![0.0; n],
            bit_llrs: vec![0.0; n],
            pm: 0.0,
        }
    }

    /// Brings the level-0 LLR up to date for bit `i` and returns it.
    fn bit_llr(&mut self, channel: &[f64], i: usize, stages: u32, kernel: CheckKernel) -> f64 {
        if stages == 0 {
            return channel[0];
        }
        let top = if i == 0 {
            stages
        } else {
            i.trailing_zeros() + 1
        };
        for level in (1..=top).rev() {
            let half = 1usize << (level - 1);
            let (lower, upper) = self.alpha.split_at_mut(2 * half);
            let parent: &[f64] = if level == stages {
                channel
            } else {
                &upper[..2 * half]
            };
            let child = &mut lower[half..2 * half];
            if level == top && i != 0 {
                let partial = &self.beta[half..2 * half];
                for j in 0..half {
                    child[j] = llr_combine_g(parent[j], parent[j + half], partial[j]);
                }
            } else {
                for j in 0..half {
                    child[j] = kernel.apply(parent[j], parent[j + half]);
                }
            }
        }
        self.alpha[1]
    }

    fn commit(&mut self, i: usize, bit: u8, llr: f64, stages: u32, scratch: &mut Vec<u8>) {
        let inc = pm_increment(llr, bit);
        self.pm += inc;
        self.decisions[i] = bit;
        self.gradient[i] = inc;
        self.bit_llrs[i] = llr;
        if stages == 0 {
            return;
        }
        scratch.clear();
        scratch.push(bit);
        let mut level = 0u32;
        while level < stages && (i >> level) & 1 == 1 {
            let size = 1usize << level;
            let left = &self.beta[size..2 * size];
            let right = scratch.clone();
            scratch.clear();
            scratch.extend(left.iter().zip(&right).map(|(l, r)| l ^ r));
            scratch.extend_from_slice(&right);
            level += 1;
        }
        if level < stages {
            let size = 1usize << level;
            self.beta[size..2 * size].copy_from_slice(scratch);
        }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    parent: usize,
    bit: u8,
    llr: f64,
    pm: f64,
}

/// Indices (into `sorted`) of the candidates kept at one free bit.
///
/// Normal selection keeps the `L` lowest metrics. At a flip position the
/// complement is kept instead; while the list is not yet full (no candidate
/// would be discarded) every path keeps only its less likely extension.
fn survivors(sorted: &[Candidate], list_size: usize, flip: bool) -> Vec<usize> {
    let c = sorted.len();
    if !flip {
        return (0..c.min(list_size)).collect();
    }
    if c > list_size {
        return (list_size..c).collect();
    }
    let mut seen = vec![false; c];
    let mut keep = Vec::with_capacity(c / 2);
    for (rank, cand) in sorted.iter().enumerate() {
        if seen[cand.parent] {
            keep.push(rank);
        } else {
            seen[cand.parent] = true;
        }
    }
    keep
}

/// CRC-aided successive-cancellation list decoding.
///
/// Ties between equal metrics are broken by parent slot, then decision 0
/// before 1, so the output is a pure function of the inputs.
pub fn scl_decode(
    code: &PolarCode,
    llrs: &[f64],
    config: &DecoderConfig,
    flips: &FlipSpec,
) -> Result<DecoderState, DecodeError> {
    if config.list_size == 0 {
        return Err(DecodeError::EmptyList);
    }
    check_input(code, llrs)?;
    let flip = flips.mask(code)?;
    let n = code.n_bits();
    let stages = n.trailing_zeros();
    let list_size = config.list_size;
    let mut paths = vec![ListPath::new(n)];
    let mut scratch = Vec::with_capacity(n);
    let mut candidates: Vec<Candidate> = Vec::with_capacity(2 * list_size);

    for i in 0..n {
        if code.is_frozen(i) {
            for p in paths.iter_mut() {
                let llr = p.bit_llr(llrs, i, stages, config.kernel);
                p.commit(i, 0, llr, stages, &mut scratch);
            }
            continue;
        }
        candidates.clear();
        for (parent, p) in paths.iter_mut().enumerate() {
            let llr = p.bit_llr(llrs, i, stages, config.kernel);
            for bit in 0..2u8 {
                candidates.push(Candidate {
                    parent,
                    bit,
                    llr,
                    pm: p.pm + pm_increment(llr, bit),
                });
            }
        }
        // Candidates are generated in (parent, bit) order, so a stable sort
        // realizes the tie-break rule.
        candidates.sort_by(|a, b| a.pm.total_cmp(&b.pm));
        let keep = survivors(&candidates, list_size, flip[i]);

        let mut remaining = vec![0usize; paths.len()];
        for &r in &keep {
            remaining[candidates[r].parent] += 1;
        }
        let mut old: Vec<Option<ListPath>> = paths.drain(..).map(Some).collect();
        for &r in &keep {
            let cand = candidates[r];
            remaining[cand.parent] -= 1;
            let mut child = if remaining[cand.parent] == 0 {
                old[cand.parent].take().expect("parent consumed once")
            } else {
                old[cand.parent].as_ref().expect("parent alive").clone()
            };
            child.commit(i, cand.bit, cand.llr, stages, &mut scratch);
            paths.push(child);
        }
    }

    let finished = paths
        .into_iter()
        .enumerate()
        .map(|(id, p)| DecodePath {
            id,
            decisions: p.decisions,
            path_metric: p.pm,
            gradient: p.gradient,
            bit_llrs: p.bit_llrs,
        })
        .collect();
    Ok(DecoderState::from_paths(code, llrs, finished))
}
