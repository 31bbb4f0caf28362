//! Seeded Toeplitz hashing of raw outcome blocks.
//!
//! Each outcome is written as its symbol index (one bit in discard mode, two in
//! keep mode) and a block of `n` outcomes is multiplied over GF(2) by an
//! `m × n_in` Toeplitz matrix defined by a seed of `n_in + m − 1` bits, with
//! `m = ⌊n·h_min − 2·log2(1/ε)⌋`.

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::simulate::rng_for;
use crate::transitions::{Outcome, OutcomeMode};

/// Packed bit string, bit `i` stored in word `i / 64` at position `i % 64`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            s.set(i, b);
        }
        s
    }

    /// `len` bits drawn from ChaCha seeded with `seed`.
    pub fn random(len: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, 1);
        let mut words: Vec<u64> = (0..len.div_ceil(64)).map(|_| rng.next_u64()).collect();
        if len % 64 != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (len % 64)) - 1;
            }
        }
        Self { words, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn push(&mut self, v: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, v);
    }

    pub fn extend(&mut self, other: &BitString) {
        for i in 0..other.len {
            self.push(other.get(i));
        }
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor(&self, other: &BitString) -> BitString {
        assert_eq!(self.len, other.len);
        BitString {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a ^ b)
                .collect(),
            len: self.len,
        }
    }

    /// 64 bits starting at bit `start`; bits past the end read as zero.
    fn window(&self, start: usize) -> u64 {
        let (q, s) = (start / 64, start % 64);
        let lo = self.words.get(q).copied().unwrap_or(0);
        if s == 0 {
            return lo;
        }
        let hi = self.words.get(q + 1).copied().unwrap_or(0);
        (lo >> s) | (hi << (64 - s))
    }

    /// Packs the bits into bytes, most significant bit first.
    pub fn to_bytes_msb(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len.div_ceil(8)];
        for i in 0..self.len {
            if self.get(i) {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    pub fn from_bytes_msb(bytes: &[u8], len: usize) -> Self {
        let mut s = Self::zeros(len);
        for i in 0..len {
            s.set(i, bytes[i / 8] & (0x80 >> (i % 8)) != 0);
        }
        s
    }

    pub fn to_bit_string(&self) -> String {
        (0..self.len)
            .map(|i| if self.get(i) { '1' } else { '0' })
            .collect()
    }
}

/// Transport encoding: discard mode `a→0, b→1` (coincidences dropped); keep
/// mode uses the prefix-free code `a→0, b→10, ab→11`.
pub fn encode_outcomes(outcomes: &[Outcome], mode: OutcomeMode) -> BitString {
    let mut bits = BitString::default();
    for &o in outcomes {
        match (mode, o) {
            (OutcomeMode::DiscardCoincidences, Outcome::AB) => {}
            (OutcomeMode::DiscardCoincidences, x) => bits.push(x == Outcome::B),
            (OutcomeMode::KeepCoincidences, Outcome::A) => bits.push(false),
            (OutcomeMode::KeepCoincidences, Outcome::B) => {
                bits.push(true);
                bits.push(false);
            }
            (OutcomeMode::KeepCoincidences, Outcome::AB) => {
                bits.push(true);
                bits.push(true);
            }
        }
    }
    bits
}

/// Text description of the transport code, for metadata.
pub fn encoding_description(mode: OutcomeMode) -> &'static str {
    match mode {
        OutcomeMode::DiscardCoincidences => "a=0,b=1 (coincidences dropped)",
        OutcomeMode::KeepCoincidences => "a=0,b=10,ab=11",
    }
}

/// Bits per outcome in the hashed representation.
pub fn bits_per_symbol(mode: OutcomeMode) -> usize {
    match mode {
        OutcomeMode::DiscardCoincidences => 1,
        OutcomeMode::KeepCoincidences => 2,
    }
}

/// Fixed-width symbol indices (`a=0, b=1, ab=2`), least significant bit first.
pub fn symbol_index_bits(block: &[Outcome], mode: OutcomeMode) -> Result<BitString> {
    let w = bits_per_symbol(mode);
    let mut bits = BitString::zeros(block.len() * w);
    for (i, &o) in block.iter().enumerate() {
        if mode == OutcomeMode::DiscardCoincidences && o == Outcome::AB {
            return Err(Error::Config(
                "coincidence outcome in a discard-mode block".into(),
            ));
        }
        for k in 0..w {
            bits.set(i * w + k, (o.index() >> k) & 1 == 1);
        }
    }
    Ok(bits)
}

/// Output length `⌊n·h − 2·log2(1/ε)⌋`.
pub fn output_length(n: usize, h_min_per_outcome: f64, security_eps: f64) -> Result<usize> {
    if !(h_min_per_outcome > 0.0 && h_min_per_outcome.is_finite()) {
        return Err(Error::Config(format!(
            "min-entropy per outcome must be positive, got {h_min_per_outcome}; run `optimum` or pass --h-min"
        )));
    }
    if !(security_eps > 0.0 && security_eps <= 1.0) {
        return Err(Error::Config(format!(
            "security epsilon must lie in (0, 1], got {security_eps}"
        )));
    }
    let m = (n as f64 * h_min_per_outcome - 2.0 * (1.0 / security_eps).log2()).floor();
    if m < 1.0 {
        return Err(Error::Config(format!(
            "block of {n} outcomes yields no output (m = {m})"
        )));
    }
    Ok(m as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorConfig {
    pub mode: OutcomeMode,
    pub h_min_per_outcome: f64,
    pub block_len_n: usize,
    pub security_eps: f64,
    pub seed: BitString,
}

pub const DEFAULT_BLOCK_LEN: usize = 4096;
pub const DEFAULT_SECURITY_EPS: f64 = 5.421_010_862_427_522e-20; // 2^-64

impl ExtractorConfig {
    /// Configuration whose seed is expanded from `seed` with ChaCha.
    pub fn seeded(mode: OutcomeMode, h_min: f64, n: usize, eps: f64, seed: u64) -> Result<Self> {
        let m = output_length(n, h_min, eps)?;
        let seed = BitString::random(n * bits_per_symbol(mode) + m - 1, seed);
        let c = Self {
            mode,
            h_min_per_outcome: h_min,
            block_len_n: n,
            security_eps: eps,
            seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn input_bits(&self) -> usize {
        self.block_len_n * bits_per_symbol(self.mode)
    }

    pub fn output_bits(&self) -> Result<usize> {
        output_length(self.block_len_n, self.h_min_per_outcome, self.security_eps)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.output_bits()?;
        let n_in = self.input_bits();
        if m > n_in {
            return Err(Error::Config(format!(
                "output length {m} exceeds the {n_in} input bits"
            )));
        }
        if self.seed.len() != n_in + m - 1 {
            return Err(Error::Config(format!(
                "seed has {} bits, expected n_in + m - 1 = {}",
                self.seed.len(),
                n_in + m - 1
            )));
        }
        Ok(())
    }

    pub fn seed_sha256(&self) -> String {
        let digest = Sha256::digest(self.seed.to_bytes_msb());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `y_i = ⊕_j seed[i + n_in − 1 − j] · x_j`, the Toeplitz product.
pub fn toeplitz_hash(seed: &BitString, x: &BitString, m: usize) -> BitString {
    let n_in = x.len();
    assert_eq!(seed.len(), n_in + m - 1, "seed length must be n_in + m - 1");
    // y_i = parity(seed[i .. i + n_in] & reverse(x))
    let mut rev = BitString::zeros(n_in);
    for j in 0..n_in {
        rev.set(n_in - 1 - j, x.get(j));
    }
    let words = n_in.div_ceil(64);
    let tail_mask = if n_in % 64 == 0 {
        u64::MAX
    } else {
        (1u64 << (n_in % 64)) - 1
    };
    let mut y = BitString::zeros(m);
    for i in 0..m {
        let mut acc = 0u64;
        for w in 0..words {
            let mut s = seed.window(i + 64 * w);
            if w == words - 1 {
                s &= tail_mask;
            }
            acc ^= s & rev.words[w];
        }
        if acc.count_ones() % 2 == 1 {
            y.set(i, true);
        }
    }
    y
}

/// Hashes one block of exactly `n` outcomes.
pub fn extract_block(block: &[Outcome], config: &ExtractorConfig) -> Result<BitString> {
    config.validate()?;
    if block.len() != config.block_len_n {
        return Err(Error::Config(format!(
            "block has {} outcomes, expected {}",
            block.len(),
            config.block_len_n
        )));
    }
    let x = symbol_index_bits(block, config.mode)?;
    Ok(toeplitz_hash(&config.seed, &x, config.output_bits()?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractionMetadata {
    pub mode: OutcomeMode,
    pub encoding: String,
    pub hashed_representation: String,
    pub seed_sha256: String,
    pub n: usize,
    pub m: usize,
    pub h_min: f64,
    pub security_eps: f64,
    pub blocks: usize,
    pub output_bits: usize,
    pub m_over_n: f64,
    pub outcomes_unused: usize,
}

/// Extracts every complete block of the outcome sequence (coincidences are
/// dropped first in discard mode). Blocks are processed in parallel and
/// concatenated in order.
pub fn extract_stream(
    outcomes: &[Outcome],
    config: &ExtractorConfig,
) -> Result<(BitString, ExtractionMetadata)> {
    config.validate()?;
    let symbols: Vec<Outcome> = match config.mode {
        OutcomeMode::DiscardCoincidences => outcomes
            .iter()
            .copied()
            .filter(|o| *o != Outcome::AB)
            .collect(),
        OutcomeMode::KeepCoincidences => outcomes.to_vec(),
    };
    let n = config.block_len_n;
    let m = config.output_bits()?;
    let parts: Vec<BitString> = symbols
        .par_chunks_exact(n)
        .map(|b| extract_block(b, config))
        .collect::<Result<_>>()?;
    let mut out = BitString::default();
    for p in &parts {
        out.extend(p);
    }
    let meta = ExtractionMetadata {
        mode: config.mode,
        encoding: encoding_description(config.mode).into(),
        hashed_representation: format!(
            "{}-bit symbol index (a=0, b=1, ab=2)",
            bits_per_symbol(config.mode)
        ),
        seed_sha256: config.seed_sha256(),
        n,
        m,
        h_min: config.h_min_per_outcome,
        security_eps: config.security_eps,
        blocks: parts.len(),
        output_bits: out.len(),
        m_over_n: m as f64 / n as f64,
        outcomes_unused: symbols.len() % n,
    };
    Ok((out, meta))
}

/// p-values of a small statistical battery on a bit string.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatteryResult {
    pub monobit: f64,
    pub runs: f64,
    pub serial_1: f64,
    pub serial_2: f64,
}

impl BatteryResult {
    pub fn passes(&self, alpha: f64) -> bool {
        [self.monobit, self.runs, self.serial_1, self.serial_2]
            .iter()
            .all(|p| *p >= alpha)
    }
}

fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Frequency, runs and two-bit serial tests.
pub fn statistical_battery(bits: &BitString) -> Result<BatteryResult> {
    let n = bits.len();
    if n < 100 {
        return Err(Error::InsufficientData {
            got: n as u64,
            need: 100,
        });
    }
    let nf = n as f64;
    let ones = bits.count_ones() as f64;
    let s = (2.0 * ones - nf).abs() / nf.sqrt();
    let monobit = erfc(s / std::f64::consts::SQRT_2);

    let pi = ones / nf;
    let runs = if (pi - 0.5).abs() >= 2.0 / nf.sqrt() {
        0.0
    } else {
        let v = 1 + (1..n).filter(|&i| bits.get(i) != bits.get(i - 1)).count();
        let num = (v as f64 - 2.0 * nf * pi * (1.0 - pi)).abs();
        erfc(num / (2.0 * (2.0 * nf).sqrt() * pi * (1.0 - pi)))
    };

    // Overlapping pattern counts with wrap-around.
    let psi = |m: usize| -> f64 {
        if m == 0 {
            return 0.0;
        }
        let mut counts = vec![0u64; 1 << m];
        for i in 0..n {
            let mut idx = 0;
            for k in 0..m {
                idx = (idx << 1) | bits.get((i + k) % n) as usize;
            }
            counts[idx] += 1;
        }
        (1u64 << m) as f64 / nf * counts.iter().map(|&c| (c * c) as f64).sum::<f64>() - nf
    };
    let (p2, p1, p0) = (psi(2), psi(1), psi(0));
    let d1 = p2 - p1;
    let d2 = p2 - 2.0 * p1 + p0;
    Ok(BatteryResult {
        monobit,
        runs,
        serial_1: gamma_ur(1.0, d1 / 2.0),
        serial_2: gamma_ur(0.5, d2 / 2.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_examples() {
        use Outcome::*;
        let d = encode_outcomes(&[A, B, A], OutcomeMode::DiscardCoincidences);
        assert_eq!(d.to_bit_string(), "010");
        assert_eq!(
            encode_outcomes(&[AB], OutcomeMode::KeepCoincidences).to_bit_string(),
            "11"
        );
        assert_eq!(
            encode_outcomes(&[A, B, AB], OutcomeMode::KeepCoincidences).to_bit_string(),
            "01011"
        );
        assert!(encode_outcomes(&[], OutcomeMode::KeepCoincidences).is_empty());
        assert_eq!(
            encode_outcomes(&[A, AB, B], OutcomeMode::DiscardCoincidences).to_bit_string(),
            "01"
        );
    }

    #[test]
    fn output_length_examples() {
        assert_eq!(
            output_length(4096, 0.9, DEFAULT_SECURITY_EPS).unwrap(),
            3558
        );
        assert_eq!(output_length(100, 1.0, 1.0).unwrap(), 100);
        assert!(output_length(4096, 0.0, 1e-6).is_err());
        assert!(output_length(100, 0.5, 2f64.powi(-64)).is_err());
        assert!(output_length(100, 0.5, 0.0).is_err());
    }

    #[test]
    fn identity_seed_passes_through() {
        use Outcome::*;
        let n = 130;
        let block: Vec<Outcome> = (0..n)
            .map(|i| if (i * 7) % 3 == 0 { B } else { A })
            .collect();
        let mut seed = BitString::zeros(2 * n - 1);
        seed.set(n - 1, true);
        let cfg = ExtractorConfig {
            mode: OutcomeMode::DiscardCoincidences,
            h_min_per_outcome: 1.0,
            block_len_n: n,
            security_eps: 1.0,
            seed,
        };
        let out = extract_block(&block, &cfg).unwrap();
        assert_eq!(
            out,
            encode_outcomes(&block, OutcomeMode::DiscardCoincidences)
        );
    }

    #[test]
    fn seed_length_is_checked() {
        let mut cfg =
            ExtractorConfig::seeded(OutcomeMode::KeepCoincidences, 1.2, 512, 1e-6, 7).unwrap();
        assert_eq!(cfg.seed.len(), 1024 + cfg.output_bits().unwrap() - 1);
        cfg.seed.push(true);
        let block = vec![Outcome::A; 512];
        assert!(matches!(extract_block(&block, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn bytes_are_msb_first() {
        let b =
            BitString::from_bools(&[true, false, false, false, false, false, false, true, true]);
        assert_eq!(b.to_bytes_msb(), vec![0x81, 0x80]);
        assert_eq!(BitString::from_bytes_msb(&[0x81, 0x80], 9), b);
    }

    #[test]
    fn battery_flags_constant_stream() {
        let mut zeros = BitString::zeros(10_000);
        zeros.set(5, true);
        assert!(!statistical_battery(&zeros).unwrap().passes(0.01));
        let random = BitString::random(100_000, 99);
        assert!(statistical_battery(&random).unwrap().passes(0.01));
    }
}
