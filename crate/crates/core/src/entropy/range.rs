//! Carry-less range coder with 64-bit state and 16-bit table precision.
//!
//! Payload layout (see `docs/FORMATS.md`):
//!
//! ```text
//! coder bytes (MSB-first renormalization output, then 2 flush bytes)
//! tail: u32 LE = CRC-32 of (n as u32 LE || coder bytes)
//! ```
//!
//! An empty symbol array produces no coder bytes, only the tail.

use super::cdf::{QuantizedCDF, PRECISION_BITS};
use crate::error::{Error, Result};

const TOP: u64 = 1 << 56;
const BOT: u64 = 1 << 48;
const FLUSH_BYTES: usize = 2;
const INIT_BYTES: usize = 8;
const TAIL_BYTES: usize = 4;

pub struct RangeEncoder {
    low: u64,
    range: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u64::MAX,
            out: Vec::new(),
        }
    }

    fn encode_raw(&mut self, start: u32, freq: u32) {
        debug_assert!(freq > 0);
        let r = self.range >> PRECISION_BITS;
        self.low += r * start as u64;
        self.range = r * freq as u64;
        self.normalize();
    }

    fn normalize(&mut self) {
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.out.push((self.low >> 56) as u8);
            self.low <<= 8;
            self.range <<= 8;
        }
    }

    pub fn encode(&mut self, symbol: i32, table: &QuantizedCDF) -> Result<()> {
        let slot = table.slot(symbol).ok_or(Error::SymbolOutOfRange {
            symbol,
            min: table.min_sym(),
            max: table.max_sym(),
        })?;
        let (start, freq) = table.start_freq(slot);
        self.encode_raw(start, freq);
        if Some(slot) == table.escape_slot() {
            let z = zigzag(symbol);
            self.encode_raw(z >> 16, 1);
            self.encode_raw(z & 0xFFFF, 1);
        }
        Ok(())
    }

    /// Shortest byte string that pins the final interval: the smallest
    /// multiple of 2^48 at or above `low`.
    pub fn finish(mut self) -> Vec<u8> {
        let v = (self.low.wrapping_add(BOT - 1)) & !(BOT - 1);
        self.out.push((v >> 56) as u8);
        self.out.push((v >> 48) as u8);
        self.out
    }
}

pub struct RangeDecoder<'a> {
    low: u64,
    range: u64,
    code: u64,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut d = RangeDecoder {
            low: 0,
            range: u64::MAX,
            code: 0,
            input,
            pos: 0,
        };
        for _ in 0..INIT_BYTES {
            d.code = (d.code << 8) | d.next_byte() as u64;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    fn target(&self) -> Result<(u64, u32)> {
        let r = self.range >> PRECISION_BITS;
        let t = self.code.wrapping_sub(self.low) / r;
        if t >= 1 << PRECISION_BITS {
            return Err(Error::CorruptStream("code value outside the coding interval".into()));
        }
        Ok((r, t as u32))
    }

    fn consume(&mut self, r: u64, start: u32, freq: u32) {
        self.low += r * start as u64;
        self.range = r * freq as u64;
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.code = (self.code << 8) | self.next_byte() as u64;
            self.low <<= 8;
            self.range <<= 8;
        }
    }

    fn decode_raw16(&mut self) -> Result<u32> {
        let (r, t) = self.target()?;
        self.consume(r, t, 1);
        Ok(t)
    }

    pub fn decode(&mut self, table: &QuantizedCDF) -> Result<i32> {
        let (r, t) = self.target()?;
        let slot = table.find(t);
        let (start, freq) = table.start_freq(slot);
        self.consume(r, start, freq);
        if Some(slot) == table.escape_slot() {
            let hi = self.decode_raw16()?;
            let lo = self.decode_raw16()?;
            let v = unzigzag((hi << 16) | lo);
            if v >= table.min_sym() && v <= table.max_sym() {
                return Err(Error::CorruptStream(format!("escaped symbol {v} lies inside the support")));
            }
            return Ok(v);
        }
        Ok(table.min_sym() + slot as i32)
    }

    /// Coder bytes the encoder must have produced to reach this state.
    fn implied_len(&self) -> usize {
        self.pos + FLUSH_BYTES - INIT_BYTES
    }
}

fn zigzag(v: i32) -> u32 {
    ((v << 1) ^ (v >> 31)) as u32
}

fn unzigzag(z: u32) -> i32 {
    ((z >> 1) as i32) ^ -((z & 1) as i32)
}

fn tail_checksum(n: usize, coder_bytes: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&(n as u32).to_le_bytes());
    h.update(coder_bytes);
    h.finalize()
}

/// Encodes `symbols[i]` under `tables[i]`.
pub fn range_encode(symbols: &[i32], tables: &[&QuantizedCDF]) -> Result<Vec<u8>> {
    if symbols.len() != tables.len() {
        return Err(crate::error::shape_err("range_encode tables", symbols.len(), tables.len()));
    }
    let mut bytes = if symbols.is_empty() {
        Vec::new()
    } else {
        let mut enc = RangeEncoder::new();
        for (&s, t) in symbols.iter().zip(tables) {
            enc.encode(s, t)?;
        }
        enc.finish()
    };
    let tail = tail_checksum(symbols.len(), &bytes);
    bytes.extend_from_slice(&tail.to_le_bytes());
    Ok(bytes)
}

/// Decodes `n` symbols; `tables` must match the ones used to encode.
pub fn range_decode(payload: &[u8], tables: &[&QuantizedCDF], n: usize) -> Result<Vec<i32>> {
    if tables.len() != n {
        return Err(crate::error::shape_err("range_decode tables", n, tables.len()));
    }
    if payload.len() < TAIL_BYTES {
        return Err(Error::CorruptStream(format!("payload of {} bytes has no tail", payload.len())));
    }
    let (coder, tail) = payload.split_at(payload.len() - TAIL_BYTES);
    let expected = u32::from_le_bytes(tail.try_into().expect("4-byte tail"));
    if tail_checksum(n, coder) != expected {
        return Err(Error::CorruptStream("payload checksum mismatch".into()));
    }
    if n == 0 {
        if !coder.is_empty() {
            return Err(Error::CorruptStream("coder bytes present for an empty symbol array".into()));
        }
        return Ok(Vec::new());
    }
    let mut dec = RangeDecoder::new(coder);
    let mut out = Vec::with_capacity(n);
    for t in tables {
        out.push(dec.decode(t)?);
    }
    if dec.implied_len() != coder.len() {
        return Err(Error::CorruptStream(format!(
            "decoder consumed {} coder bytes, payload holds {}",
            dec.implied_len(),
            coder.len()
        )));
    }
    Ok(out)
}

/// Ideal code length of `symbols` under the quantized tables, in bits.
pub fn table_entropy_bits(symbols: &[i32], tables: &[&QuantizedCDF]) -> Option<f64> {
    symbols.iter().zip(tables).map(|(&s, t)| t.code_length_bits(s)).sum()
}
