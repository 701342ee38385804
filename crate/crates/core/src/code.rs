//! Polar code parameters, construction and encoding.
//!
//! Encoding uses natural bit order: `x = u F^{(x)n}` with `F = [[1, 0], [1, 1]]`
//! and no bit-reversal permutation. The `K + crc_len` free positions of `u`
//! carry the message followed by its CRC, in ascending index order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::construction::{ga_channel_means, reliability_order};
use crate::crc::Crc;
use crate::error::CodeError;

/// Default design SNR (Eb/N0, dB) for Gaussian-approximation construction.
pub const DEFAULT_DESIGN_SNR_DB: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstructionMethod {
    GaussianApproximation,
    ExternalFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarCode {
    n_bits: usize,
    k_info: usize,
    crc: Crc,
    frozen: Vec<bool>,
    free: Vec<usize>,
    design_snr_db: f64,
}

/// A length-`N` vector of `u`-domain bits after polar encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codeword(pub Vec<u8>);

impl PolarCode {
    pub fn construct(
        n_bits: usize,
        k_info: usize,
        crc: Crc,
        method: &ConstructionMethod,
        design_snr_db: f64,
    ) -> Result<Self, CodeError> {
        validate_sizes(n_bits, k_info, crc.width())?;
        let frozen = match method {
            ConstructionMethod::GaussianApproximation => {
                ga_frozen_mask(n_bits, k_info, crc.width(), design_snr_db)
            }
            ConstructionMethod::ExternalFile(path) => {
                let (n, k, c, mask) = read_frozen_file(path)?;
                if (n, k, c) != (n_bits, k_info, crc.width()) {
                    return Err(CodeError::FrozenFile(format!(
                        "file describes ({n}, {k}, crc {c}), requested ({n_bits}, {k_info}, crc {})",
                        crc.width()
                    )));
                }
                mask
            }
        };
        Self::from_frozen_mask(k_info, crc, frozen, design_snr_db)
    }

    /// GA construction with the 16-bit CCITT CRC.
    pub fn ga(n_bits: usize, k_info: usize, design_snr_db: f64) -> Result<Self, CodeError> {
        Self::construct(
            n_bits,
            k_info,
            Crc::ccitt16(),
            &ConstructionMethod::GaussianApproximation,
            design_snr_db,
        )
    }

    pub fn from_frozen_mask(
        k_info: usize,
        crc: Crc,
        frozen: Vec<bool>,
        design_snr_db: f64,
    ) -> Result<Self, CodeError> {
        let n_bits = frozen.len();
        validate_sizes(n_bits, k_info, crc.width())?;
        let free: Vec<usize> = (0..n_bits).filter(|&i| !frozen[i]).collect();
        if free.len() != k_info + crc.width() {
            return Err(CodeError::FrozenFile(format!(
                "{} free positions, expected {}",
                free.len(),
                k_info + crc.width()
            )));
        }
        Ok(Self {
            n_bits,
            k_info,
            crc,
            frozen,
            free,
            design_snr_db,
        })
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn k_info(&self) -> usize {
        self.k_info
    }

    pub fn crc_len(&self) -> usize {
        self.crc.width()
    }

    pub fn crc(&self) -> &Crc {
        &self.crc
    }

    pub fn design_snr_db(&self) -> f64 {
        self.design_snr_db
    }

    /// Information rate `K / N` (CRC bits excluded).
    pub fn rate(&self) -> f64 {
        self.k_info as f64 / self.n_bits as f64
    }

    pub fn frozen_mask(&self) -> &[bool] {
        &self.frozen
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    pub fn is_free(&self, i: usize) -> bool {
        i < self.n_bits && !self.frozen[i]
    }

    /// Free positions in ascending order.
    pub fn free_positions(&self) -> &[usize] {
        &self.free
    }

    /// Builds the `u`-vector carrying `message || crc(message)`.
    pub fn u_from_message(&self, message: &[u8]) -> Result<Vec<u8>, CodeError> {
        if message.len() != self.k_info {
            return Err(CodeError::LengthMismatch {
                expected: self.k_info,
                got: message.len(),
            });
        }
        let payload = self.crc.attach(message);
        let mut u = vec![0u8; self.n_bits];
        for (&pos, &bit) in self.free.iter().zip(&payload) {
            u[pos] = bit;
        }
        Ok(u)
    }

    /// The `K + crc_len` free bits of `u`, in index order.
    pub fn payload(&self, u: &[u8]) -> Vec<u8> {
        self.free.iter().map(|&i| u[i]).collect()
    }

    /// The `K` message bits of `u`.
    pub fn message(&self, u: &[u8]) -> Vec<u8> {
        self.free[..self.k_info].iter().map(|&i| u[i]).collect()
    }

    pub fn crc_check(&self, u: &[u8]) -> bool {
        self.crc.check(&self.payload(u))
    }

    pub fn encode(&self, u: &[u8]) -> Result<Codeword, CodeError> {
        if u.len() != self.n_bits {
            return Err(CodeError::LengthMismatch {
                expected: self.n_bits,
                got: u.len(),
            });
        }
        if let Some(i) = (0..self.n_bits).find(|&i| self.frozen[i] && u[i] != 0) {
            return Err(CodeError::FrozenViolation(i));
        }
        let mut x = u.to_vec();
        polar_transform(&mut x);
        Ok(Codeword(x))
    }

    /// SHA-256 over a canonical description of the code (sizes, CRC, frozen set).
    pub fn digest(&self) -> [u8; 32] {
        let mut text = format!(
            "polar-code-v1 n={} k={} crc={}:{:#x}:{:#x} frozen=",
            self.n_bits,
            self.k_info,
            self.crc.width(),
            self.crc.poly(),
            self.crc.init()
        );
        for &f in &self.frozen {
            text.push(if f { '1' } else { '0' });
        }
        Sha256::digest(text.as_bytes()).into()
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest())
    }

    /// Frozen-set file text: `N K crc_len` then `N` space-separated 0/1 flags.
    pub fn frozen_file_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.n_bits, self.k_info, self.crc.width());
        for (i, &f) in self.frozen.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", f as u8);
        }
        out.push('\n');
        out
    }

    pub fn write_frozen_file(&self, path: &Path) -> Result<(), CodeError> {
        fs::write(path, self.frozen_file_text())?;
        Ok(())
    }
}

fn validate_sizes(n_bits: usize, k_info: usize, crc_len: usize) -> Result<(), CodeError> {
    if n_bits == 0 || !n_bits.is_power_of_two() {
        return Err(CodeError::LengthNotPowerOfTwo(n_bits));
    }
    if k_info + crc_len > n_bits {
        return Err(CodeError::RateTooHigh {
            n_bits,
            k_info,
            crc_len,
        });
    }
    Ok(())
}

fn ga_frozen_mask(n_bits: usize, k_info: usize, crc_len: usize, design_snr_db: f64) -> Vec<bool> {
    // Channel LLR mean 2/sigma^2 under the Eb/N0 convention of the simulator.
    let rate_bits = if k_info > 0 {
        k_info
    } else {
        (k_info + crc_len).max(1)
    };
    let rate = rate_bits as f64 / n_bits as f64;
    let mean = 4.0 * rate * 10f64.powf(design_snr_db / 10.0);
    let order = reliability_order(&ga_channel_means(n_bits, mean));
    let mut frozen = vec![false; n_bits];
    for &i in &order[..n_bits - k_info - crc_len] {
        frozen[i] = true;
    }
    frozen
}

/// Parses frozen-set file text into `(N, K, crc_len, mask)`.
pub fn parse_frozen_file(text: &str) -> Result<(usize, usize, usize, Vec<bool>), CodeError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CodeError::FrozenFile("missing header line".into()))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| CodeError::FrozenFile(format!("bad header '{header}': {e}")))?;
    let [n, k, c] = nums[..] else {
        return Err(CodeError::FrozenFile(format!(
            "header needs 3 fields, got '{header}'"
        )));
    };
    let mask: Vec<bool> = lines
        .flat_map(|l| l.split_whitespace())
        .map(|t| match t {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(CodeError::FrozenFile(format!("bad flag '{other}'"))),
        })
        .collect::<Result<_, _>>()?;
    if mask.len() != n {
        return Err(CodeError::FrozenFile(format!(
            "{} flags for N = {n}",
            mask.len()
        )));
    }
    let free = mask.iter().filter(|&&f| !f).count();
    if free != k + c {
        return Err(CodeError::FrozenFile(format!(
            "{free} free flags, header implies {}",
            k + c
        )));
    }
    Ok((n, k, c, mask))
}

pub fn read_frozen_file(path: &Path) -> Result<(usize, usize, usize, Vec<bool>), CodeError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CodeError::FrozenFile(format!("{}: {e}", path.display())))?;
    parse_frozen_file(&text)
}

/// In-place `x = x F^{(x)n}` over GF(2). The transform is its own inverse.
pub fn polar_transform(bits: &mut [u8]) {
    let n = bits.len();
    debug_assert!(n.is_power_of_two());
    let mut half = 1;
    while half < n {
        for block in bits.chunks_mut(2 * half) {
            let (left, right) = block.split_at_mut(half);
            for (l, r) in left.iter_mut().zip(right.iter()) {
                *l ^= *r;
            }
        }
        half *= 2;
    }
}
