use super::{check_input, DecodePath, DecoderState, FlipSpec};
use crate::code::PolarCode;
use crate::error::DecodeError;
use crate::kernels::{hard_decision, llr_combine_g, pm_increment, CheckKernel};

struct Trace<'a> {
    frozen: &'a [bool],
    flip: &'a [bool],
    kernel: CheckKernel,
    decisions: Vec<u8>,
    gradient: Vec<f64>,
    bit_llrs: Vec<f64>,
    path_metric: f64,
}

impl Trace<'_> {
    /// Decodes the subtree whose leaves start at `base` and returns its
    /// re-encoded partial sums.
    fn node(&mut self, alpha: &[f64], base: usize) -> Vec<u8> {
        if alpha.len() == 1 {
            let llr = alpha[0];
            let bit = if self.frozen[base] {
                0
            } else {
                hard_decision(llr) ^ self.flip[base] as u8
            };
            let inc = pm_increment(llr, bit);
            self.path_metric += inc;
            self.decisions[base] = bit;
            self.gradient[base] = inc;
            self.bit_llrs[base] = llr;
            return vec![bit];
        }
        let half = alpha.len() / 2;
        let (a, b) = alpha.split_at(half);
        let left: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| self.kernel.apply(x, y))
            .collect();
        let beta_left = self.node(&left, base);
        let right: Vec<f64> = a
            .iter()
            .zip(b)
            .zip(&beta_left)
            .map(|((&x, &y), &s)| llr_combine_g(x, y, s))
            .collect();
        let beta_right = self.node(&right, base + half);
        let mut beta: Vec<u8> = beta_left
            .iter()
            .zip(&beta_right)
            .map(|(l, r)| l ^ r)
            .collect();
        beta.extend_from_slice(&beta_right);
        beta
    }
}

/// Successive-cancellation decoding with optional decision inversion.
pub fn sc_decode(
    code: &PolarCode,
    llrs: &[f64],
    flips: &FlipSpec,
    kernel: CheckKernel,
) -> Result<DecoderState, DecodeError> {
    check_input(code, llrs)?;
    let flip = flips.mask(code)?;
    let n = code.n_bits();
    let mut trace = Trace {
        frozen: code.frozen_mask(),
        flip: &flip,
        kernel,
        decisions: vec![0; n],
        gradient: vec![0.0; n],
        bit_llrs: vec![0.0; n],
        path_metric: 0.0,
    };
    trace.node(llrs, 0);
    let path = DecodePath {
        id: 0,
        decisions: trace.decisions,
        path_metric: trace.path_metric,
        gradient: trace.gradient,
        bit_llrs: trace.bit_llrs,
    };
    Ok(DecoderState::from_paths(code, llrs, vec![path]))
}
