//! LLR-domain kernels of the SC trellis and the path-metric increment.

use serde::{Deserialize, Serialize};

/// Inputs to the check-node kernel are saturated to this magnitude.
pub const LLR_CLAMP: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CheckKernel {
    /// `2 atanh(tanh(a/2) tanh(b/2))`.
    #[default]
    Exact,
    /// `sign(a) sign(b) min(|a|, |b|)`.
    MinSum,
}

/// Softplus `ln(1 + e^x)` without overflow or loss of small values.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Exact boxplus `2 atanh(tanh(a/2) tanh(b/2))`.
///
/// When both magnitudes are at least 1 the equivalent form
/// `sign(a)sign(b)[min(|a|,|b|) + ln(1+e^-(|a|+|b|)) - ln(1+e^-||a|-|b||)]` is used;
/// the product of the two tanh values would round towards 1 there. Below that
/// the tanh form keeps full relative precision of small outputs.
#[inline]
pub fn llr_combine_f(a: f64, b: f64) -> f64 {
    let a = a.clamp(-LLR_CLAMP, LLR_CLAMP);
    let b = b.clamp(-LLR_CLAMP, LLR_CLAMP);
    if a.abs().min(b.abs()) < 1.0 {
        return 2.0 * ((0.5 * a).tanh() * (0.5 * b).tanh()).atanh();
    }
    let (x, y) = (a.abs(), b.abs());
    let magnitude = x.min(y) + (-(x + y)).exp().ln_1p() - (-(x - y).abs()).exp().ln_1p();
    if (a < 0.0) != (b < 0.0) {
        -magnitude
    } else {
        magnitude
    }
}

#[inline]
pub fn llr_combine_f_min_sum(a: f64, b: f64) -> f64 {
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    sign * a.abs().min(b.abs())
}

impl CheckKernel {
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            CheckKernel::Exact => llr_combine_f(a, b),
            CheckKernel::MinSum => llr_combine_f_min_sum(a, b),
        }
    }
}

/// `b + (1 - 2s) a`.
#[inline]
pub fn llr_combine_g(a: f64, b: f64, partial_sum: u8) -> f64 {
    if partial_sum & 1 == 0 {
        b + a
    } else {
        b - a
    }
}

/// Path-metric increment `ln(1 + e^{-(1 - 2u) L})` for deciding `u` on a bit
/// whose LLR is `L`.
#[inline]
pub fn pm_increment(bit_llr: f64, decision: u8) -> f64 {
    if decision & 1 == 0 {
        softplus(-bit_llr)
    } else {
        softplus(bit_llr)
    }
}

#[inline]
pub fn hard_decision(bit_llr: f64) -> u8 {
    (bit_llr < 0.0) as u8
}
