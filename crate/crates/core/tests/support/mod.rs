//! Shared helpers for the integration targets: a double-double reference for
//! the LLR kernels, a brute-force ML decoder and small code fixtures.

#![allow(dead_code)]

use polarflip::{Crc, PolarCode};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`, about 106 bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn mul_f(self, x: f64) -> Dd {
        self.mul(Dd::from(x))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f(q2));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from(q3))
    }

    /// `e^x - 1`: Taylor series on `x / 2^k`, then `k` doublings
    /// `expm1(2y) = expm1(y) (expm1(y) + 2)`.
    pub fn expm1(self) -> Dd {
        let mut k = 0;
        let mut r = self;
        while r.hi.abs() > 1.0 / 256.0 {
            r = r.mul_f(0.5);
            k += 1;
        }
        let mut term = r;
        let mut sum = r;
        for i in 2..30 {
            term = term.mul(r).div(Dd::from(i as f64));
            sum = sum.add(term);
            if term.hi.abs() < 1e-40 * sum.hi.abs().max(1e-300) {
                break;
            }
        }
        for _ in 0..k {
            sum = sum.mul(sum.add(Dd::from(2.0)));
        }
        sum
    }

    /// `e^x` with full relative precision for large negative `x`.
    pub fn exp(self) -> Dd {
        let mut k = 0;
        let mut r = self;
        while r.hi.abs() > 1.0 / 256.0 {
            r = r.mul_f(0.5);
            k += 1;
        }
        let mut e = r.expm1().add(Dd::ONE);
        for _ in 0..k {
            e = e.mul(e);
        }
        e
    }

    /// `ln(1 + z)` for `z > -1`, by Newton steps on `expm1(y) = z`.
    pub fn ln1p(self) -> Dd {
        let mut y = Dd::from(self.hi.ln_1p());
        for _ in 0..3 {
            let e = y.expm1();
            y = y.sub(e.sub(self).div(e.add(Dd::ONE)));
        }
        y
    }
}

/// `ln(1 + e^x)`.
pub fn softplus_ref(x: f64) -> f64 {
    let x = Dd::from(x);
    if x.hi <= 0.0 {
        x.exp().ln1p().to_f64()
    } else {
        x.add(x.neg().exp().ln1p()).to_f64()
    }
}

/// `ln(1 + e^{-(1-2u) L})`.
pub fn pm_increment_ref(l: f64, u: u8) -> f64 {
    if u == 0 {
        softplus_ref(-l)
    } else {
        softplus_ref(l)
    }
}

/// `ln((1 + e^{a+b}) / (e^a + e^b))`, written as
/// `sign * ln1p((e^|a|-1)(e^|b|-1) / (e^|a| + e^|b|))`, which stays accurate when
/// either input is tiny.
pub fn boxplus_ref(a: f64, b: f64) -> f64 {
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    let (x, y) = (Dd::from(a.abs()), Dd::from(b.abs()));
    // Divide through by e^{|a|+|b|} so nothing overflows.
    let (ex, ey) = (x.neg().exp(), y.neg().exp());
    let num = Dd::ONE.sub(ex).mul(Dd::ONE.sub(ey));
    let den = ex.add(ey);
    sign * num.div(den).ln1p().to_f64()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}

/// Codeword maximizing `sum (1 - 2 c_i) r_i` over every message.
pub fn ml_codeword(code: &PolarCode, llrs: &[f64]) -> Vec<u8> {
    let k = code.k_info();
    let mut best: Option<(f64, Vec<u8>)> = None;
    for m in 0..1u32 << k {
        let msg: Vec<u8> = (0..k).map(|i| ((m >> (k - 1 - i)) & 1) as u8).collect();
        let u = code.u_from_message(&msg).unwrap();
        let c = code.encode(&u).unwrap().0;
        let corr: f64 = c
            .iter()
            .zip(llrs)
            .map(|(&b, &r)| if b == 0 { r } else { -r })
            .sum();
        if best.as_ref().is_none_or(|(s, _)| corr > *s) {
            best = Some((corr, c));
        }
    }
    best.unwrap().1
}

/// The N = 16 fixture of the flip-tree checks: free positions
/// `{2, 7, 9, 10, .., 15}`, one message bit and an 8-bit CRC. With every LLR
/// at -3 no flip combination over `{2, 7, 9, 10}` passes the CRC.
pub fn tree_fixture() -> (PolarCode, Vec<f64>) {
    let mut frozen = vec![true; 16];
    for i in [2, 7, 9, 10, 11, 12, 13, 14, 15] {
        frozen[i] = false;
    }
    let code = PolarCode::from_frozen_mask(1, Crc::new(8, 0x07).unwrap(), frozen, 2.0).unwrap();
    (code, vec![-3.0; 16])
}

/// Queues of the Phase-II tree: attempt `j` flips every earlier position the
/// validator confirmed, plus `ranked[j]`.
pub fn tree_queues(ranked: &[usize], continues: &[bool]) -> Vec<Vec<usize>> {
    (0..ranked.len())
        .map(|j| {
            let mut q: Vec<usize> = (0..j)
                .filter(|&i| continues[i])
                .map(|i| ranked[i])
                .collect();
            q.push(ranked[j]);
            q
        })
        .collect()
}
