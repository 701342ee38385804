//! Bitwise MSB-first CRC over bit slices.
//!
//! The default generator is the 16-bit CCITT polynomial `0x1021` with a zero
//! initial register, no reflection and no output XOR. Widths from 1 to 32 bits
//! are supported so that tiny codes (e.g. `N = 16`) can carry a short CRC.

use serde::{Deserialize, Serialize};

use crate::error::CodeError;

/// Default generator polynomial (x^16 + x^12 + x^5 + 1), implicit leading term.
pub const DEFAULT_CRC16_POLY: u32 = 0x1021;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Crc {
    width: u8,
    poly: u32,
    init: u32,
}

impl Crc {
    /// A CRC with zero initial register. `width == 0` gives an empty CRC that
    /// always passes.
    pub fn new(width: u8, poly: u32) -> Result<Self, CodeError> {
        Self::with_init(width, poly, 0)
    }

    pub fn with_init(width: u8, poly: u32, init: u32) -> Result<Self, CodeError> {
        if width > 32 {
            return Err(CodeError::InvalidCrc(format!(
                "width {width} exceeds 32 bits"
            )));
        }
        let mask = Self::mask_for(width);
        if width > 0 && poly & mask == 0 {
            return Err(CodeError::InvalidCrc(format!(
                "polynomial {poly:#x} has no terms within width {width}"
            )));
        }
        if poly & !mask != 0 || init & !mask != 0 {
            return Err(CodeError::InvalidCrc(format!(
                "polynomial {poly:#x} / init {init:#x} do not fit in {width} bits"
            )));
        }
        Ok(Self { width, poly, init })
    }

    pub fn ccitt16() -> Self {
        Self {
            width: 16,
            poly: DEFAULT_CRC16_POLY,
            init: 0,
        }
    }

    pub fn none() -> Self {
        Self {
            width: 0,
            poly: 0,
            init: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn poly(&self) -> u32 {
        self.poly
    }

    pub fn init(&self) -> u32 {
        self.init
    }

    fn mask_for(width: u8) -> u32 {
        if width == 32 {
            u32::MAX
        } else {
            (1u32 << width) - 1
        }
    }

    /// Register contents after shifting in `bits` (each 0 or 1).
    pub fn remainder(&self, bits: &[u8]) -> u32 {
        if self.width == 0 {
            return 0;
        }
        let mask = Self::mask_for(self.width);
        let top = 1u32 << (self.width - 1);
        let mut reg = self.init;
        for &b in bits {
            let feedback = ((reg & top) != 0) ^ (b & 1 == 1);
            reg = (reg << 1) & mask;
            if feedback {
                reg ^= self.poly;
            }
        }
        reg
    }

    /// Remainder over a byte string, MSB of each byte first.
    pub fn remainder_bytes(&self, bytes: &[u8]) -> u32 {
        let bits: Vec<u8> = bytes
            .iter()
            .flat_map(|&byte| (0..8).rev().map(move |s| (byte >> s) & 1))
            .collect();
        self.remainder(&bits)
    }

    /// `message` followed by its `width` remainder bits, MSB first.
    pub fn attach(&self, message: &[u8]) -> Vec<u8> {
        let rem = self.remainder(message);
        let mut out = Vec::with_capacity(message.len() + self.width());
        out.extend_from_slice(message);
        out.extend((0..self.width).rev().map(|s| ((rem >> s) & 1) as u8));
        out
    }

    /// Checks a payload laid out as `message || crc`.
    pub fn check(&self, word: &[u8]) -> bool {
        let w = self.width();
        if word.len() < w {
            return false;
        }
        let (message, tail) = word.split_at(word.len() - w);
        let rem = self.remainder(message);
        tail.iter()
            .enumerate()
            .all(|(j, &b)| ((rem >> (w - 1 - j)) & 1) as u8 == b)
    }
}

impl Default for Crc {
    fn default() -> Self {
        Self::ccitt16()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ccitt_false_check_string() {
        let crc = Crc::with_init(16, 0x1021, 0xFFFF).unwrap();
        assert_eq!(crc.remainder_bytes(b"123456789"), 0x29B1);
    }

    #[test]
    fn xmodem_check_string() {
        // Zero-init variant of the same polynomial (CRC-16/XMODEM).
        assert_eq!(Crc::ccitt16().remainder_bytes(b"123456789"), 0x31C3);
    }

    #[test]
    fn zero_message_zero_remainder() {
        let crc = Crc::ccitt16();
        assert_eq!(crc.remainder(&[0u8; 40]), 0);
        assert!(crc.attach(&[0u8; 40])[40..].iter().all(|&b| b == 0));
    }

    #[test]
    fn every_single_bit_flip_detected_k32() {
        let crc = Crc::ccitt16();
        let msg: Vec<u8> = (0..32).map(|i| ((i * 7 + 3) % 5 == 0) as u8).collect();
        let word = crc.attach(&msg);
        assert!(crc.check(&word));
        for i in 0..word.len() {
            let mut bad = word.clone();
            bad[i] ^= 1;
            assert!(!crc.check(&bad), "flip at {i} went undetected");
        }
    }

    #[test]
    fn random_corruption_pass_rate_near_two_to_minus_sixteen() {
        use rand::{Rng, SeedableRng};
        let crc = Crc::ccitt16();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let trials = 1_000_000u64;
        let mut passes = 0u64;
        for _ in 0..trials {
            let word: Vec<u8> = (0..48).map(|_| rng.random_range(0..2u8)).collect();
            passes += crc.check(&word) as u64;
        }
        let p = 1.0 / 65536.0;
        let mean = trials as f64 * p;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (passes as f64 - mean).abs() <= 3.0 * sigma,
            "passes {passes} vs expected {mean:.1} +- {:.1}",
            3.0 * sigma
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Crc::new(33, 1).is_err());
        assert!(Crc::new(4, 0x10).is_err());
        assert!(Crc::new(4, 0).is_err());
        assert!(Crc::new(4, 0x3).is_ok());
    }

    #[test]
    fn empty_crc_always_passes() {
        let crc = Crc::none();
        assert_eq!(crc.attach(&[1, 0, 1]), vec![1, 0, 1]);
        assert!(crc.check(&[1, 1, 1]));
    }

    proptest! {
        #[test]
        fn attach_then_check_passes(msg in proptest::collection::vec(0u8..2, 0..200)) {
            let crc = Crc::ccitt16();
            prop_assert!(crc.check(&crc.attach(&msg)));
        }
    }
}
