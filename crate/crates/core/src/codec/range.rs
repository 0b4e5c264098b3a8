//! Byte-oriented range coder over static frequency tables.
//!
//! The coder keeps a 64-bit range normalized to at least 2⁵⁶ and a 65-bit low
//! end. Carries into already-emitted bytes are resolved LZMA style: the last
//! byte that could still receive a carry is cached along with a run of pending
//! `0xFF` bytes. Tables may total up to 2³² which still leaves 24 bits of
//! resolution per step.

use crate::error::{Error, Result};
use crate::quant::FrequencyTable;

const TOP: u64 = 1 << 56;
const LOW_MASK: u128 = (1u128 << 56) - 1;
const FLUSH_SHIFTS: usize = 9;

/// Cumulative view of a frequency table.
struct Cumulative {
    min_sym: i64,
    cum: Vec<u64>,
    total: u64,
}

impl Cumulative {
    fn new(table: &FrequencyTable) -> Self {
        let mut cum = Vec::with_capacity(table.counts().len() + 1);
        let mut acc = 0u64;
        cum.push(0);
        for &c in table.counts() {
            acc += c;
            cum.push(acc);
        }
        Self {
            min_sym: table.min_sym(),
            cum,
            total: acc,
        }
    }

    /// Index of the slot whose cumulative interval contains `v`.
    fn find(&self, v: u64) -> usize {
        self.cum.partition_point(|&c| c <= v) - 1
    }
}

struct Encoder {
    low: u128,
    range: u64,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Encoder {
    fn new() -> Self {
        Self {
            low: 0,
            range: u64::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn encode(&mut self, cum: u64, freq: u64, total: u64) {
        let r = self.range / total;
        self.low += (r as u128) * (cum as u128);
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        let carry = (self.low >> 64) as u8;
        if (self.low as u64) < 0xFF00_0000_0000_0000 || carry != 0 {
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 56) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & LOW_MASK) << 8;
    }

    fn finish(mut self) -> Vec<u8> {
        for _ in 0..FLUSH_SHIFTS {
            self.shift_low();
        }
        // The leading byte stands for the integer part of the code value, which is always 0.
        debug_assert_eq!(self.out.first(), Some(&0));
        self.out.remove(0);
        self.out
    }
}

/// Arithmetic-codes `symbols` under `table`.
pub fn ac_encode(symbols: &[i64], table: &FrequencyTable) -> Result<Vec<u8>> {
    let cum = Cumulative::new(table);
    let mut enc = Encoder::new();
    for &s in symbols {
        if s < table.min_sym() || s > table.max_sym() {
            return Err(Error::SymbolOutOfRange {
                symbol: s,
                min: table.min_sym(),
                max: table.max_sym(),
            });
        }
        let i = (s - cum.min_sym) as usize;
        enc.encode(cum.cum[i], cum.cum[i + 1] - cum.cum[i], cum.total);
    }
    Ok(enc.finish())
}

/// Decodes exactly `count` symbols; the stream must be consumed exactly.
pub fn ac_decode(bytes: &[u8], table: &FrequencyTable, count: usize) -> Result<Vec<i64>> {
    let cum = Cumulative::new(table);
    let mut pos = 0usize;
    let mut next = || -> Result<u8> {
        let b = *bytes
            .get(pos)
            .ok_or_else(|| Error::CorruptStream("arithmetic block truncated".into()))?;
        pos += 1;
        Ok(b)
    };
    let mut code = 0u64;
    for _ in 0..8 {
        code = (code << 8) | next()? as u64;
    }
    let mut range = u64::MAX;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let r = range / cum.total;
        let v = code / r;
        if v >= cum.total {
            return Err(Error::CorruptStream("code value outside table".into()));
        }
        let i = cum.find(v);
        code -= r * cum.cum[i];
        range = r * (cum.cum[i + 1] - cum.cum[i]);
        while range < TOP {
            range <<= 8;
            code = (code << 8) | next()? as u64;
        }
        out.push(cum.min_sym + i as i64);
    }
    drop(next);
    if pos != bytes.len() {
        return Err(Error::CorruptStream(format!(
            "{} trailing bytes after arithmetic block",
            bytes.len() - pos
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn degenerate_run_is_tiny() {
        // One symbol counted 1001 times in a table of two symbols: about 1.4 bits of content.
        let table = FrequencyTable::from_counts(0, vec![1001, 1]).unwrap();
        let symbols = vec![0i64; 1000];
        let bytes = ac_encode(&symbols, &table).unwrap();
        assert!(bytes.len() <= 24, "{} bytes", bytes.len());
        assert_eq!(ac_decode(&bytes, &table, 1000).unwrap(), symbols);
    }

    #[test]
    fn uniform_binary_costs_one_bit_per_symbol() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let symbols: Vec<i64> = (0..1024).map(|_| rng.gen_range(0..2)).collect();
        let table = FrequencyTable::from_counts(0, vec![1, 1]).unwrap();
        let bytes = ac_encode(&symbols, &table).unwrap();
        assert!((128..=144).contains(&bytes.len()), "{} bytes", bytes.len());
        assert_eq!(ac_decode(&bytes, &table, 1024).unwrap(), symbols);
    }

    #[test]
    fn empty_sequence() {
        let table = FrequencyTable::from_counts(-3, vec![1, 2, 3]).unwrap();
        let bytes = ac_encode(&[], &table).unwrap();
        assert!(bytes.len() <= 8);
        assert!(ac_decode(&bytes, &table, 0).unwrap().is_empty());
    }

    #[test]
    fn single_symbol_alphabet() {
        let table = FrequencyTable::build(&[7; 50]).unwrap();
        let bytes = ac_encode(&[7; 50], &table).unwrap();
        assert_eq!(ac_decode(&bytes, &table, 50).unwrap(), vec![7; 50]);
    }

    #[test]
    fn out_of_range_symbol() {
        let table = FrequencyTable::build(&[0, 1, 2]).unwrap();
        assert!(matches!(
            ac_encode(&[1, 3], &table),
            Err(Error::SymbolOutOfRange { symbol: 3, .. })
        ));
    }

    #[test]
    fn truncation_and_padding_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let symbols: Vec<i64> = (0..500).map(|_| rng.gen_range(-20..20)).collect();
        let table = FrequencyTable::build(&symbols).unwrap();
        let bytes = ac_encode(&symbols, &table).unwrap();
        for cut in [1, 2, 8, bytes.len() / 2] {
            let r = ac_decode(&bytes[..bytes.len() - cut], &table, symbols.len());
            assert!(matches!(r, Err(Error::CorruptStream(_))), "cut {cut}");
        }
        let mut padded = bytes.clone();
        padded.push(0);
        assert!(matches!(
            ac_decode(&padded, &table, symbols.len()),
            Err(Error::CorruptStream(_))
        ));
    }

    #[test]
    fn carry_heavy_streams_roundtrip() {
        // Highly skewed tables keep the low end near the top of the range and exercise carries.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let table = FrequencyTable::from_counts(0, vec![1, u32::MAX as u64 - 2]).unwrap();
            let symbols: Vec<i64> = (0..2000)
                .map(|_| if rng.gen_ratio(1, 1000) { 0 } else { 1 })
                .collect();
            let bytes = ac_encode(&symbols, &table).unwrap();
            assert_eq!(ac_decode(&bytes, &table, symbols.len()).unwrap(), symbols);
        }
    }
}
