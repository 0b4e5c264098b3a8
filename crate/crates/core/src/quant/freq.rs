use crate::codec::varint::{read_uvarint, read_zigzag, write_uvarint, write_zigzag};
use crate::error::{Error, Result};

/// Symbol counts over a contiguous integer range, add-one smoothed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyTable {
    min_sym: i64,
    counts: Vec<u64>,
    total: u64,
}

impl FrequencyTable {
    /// Counts `symbols` over their observed `[min, max]` range plus one per symbol.
    pub fn build(symbols: &[i64]) -> Result<Self> {
        let (&min, &max) = match (symbols.iter().min(), symbols.iter().max()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::EmptyTensor),
        };
        let width = (max - min) as usize + 1;
        let mut counts = vec![1u64; width];
        for &s in symbols {
            counts[(s - min) as usize] += 1;
        }
        Ok(Self {
            min_sym: min,
            total: symbols.len() as u64 + width as u64,
            counts,
        })
    }

    /// Table from explicit counts; every count must be positive.
    pub fn from_counts(min_sym: i64, counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() || counts.contains(&0) {
            return Err(Error::CorruptStream("frequency table has empty slots".into()));
        }
        let total = counts
            .iter()
            .try_fold(0u64, |a, &c| a.checked_add(c))
            .filter(|&t| t <= u32::MAX as u64)
            .ok_or_else(|| Error::CorruptStream("frequency total too large".into()))?;
        Ok(Self {
            min_sym,
            counts,
            total,
        })
    }

    pub fn min_sym(&self) -> i64 {
        self.min_sym
    }

    pub fn max_sym(&self) -> i64 {
        self.min_sym + self.counts.len() as i64 - 1
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, symbol: i64) -> Option<u64> {
        if symbol < self.min_sym || symbol > self.max_sym() {
            None
        } else {
            Some(self.counts[(symbol - self.min_sym) as usize])
        }
    }

    /// Ideal code length `−Σ log₂(count_s / total)` of `symbols` in bits.
    pub fn code_length_bits(&self, symbols: &[i64]) -> f64 {
        let total = self.total as f64;
        symbols
            .iter()
            .map(|&s| {
                let c = self.count(s).unwrap_or(0) as f64;
                -(c / total).log2()
            })
            .sum()
    }

    /// `min_sym` (zigzag varint), width (varint), then each count (varint).
    pub fn write(&self, out: &mut Vec<u8>) {
        write_zigzag(out, self.min_sym);
        write_uvarint(out, self.counts.len() as u64);
        for &c in &self.counts {
            write_uvarint(out, c);
        }
    }

    pub fn read(buf: &[u8], pos: &mut usize) -> Result<Self> {
        let min_sym = read_zigzag(buf, pos)?;
        let width = read_uvarint(buf, pos)? as usize;
        // Each count needs at least one byte.
        if width == 0 || width > buf.len().saturating_sub(*pos) {
            return Err(Error::CorruptStream(format!("bad table width {width}")));
        }
        let counts = (0..width)
            .map(|_| read_uvarint(buf, pos))
            .collect::<Result<Vec<_>>>()?;
        Self::from_counts(min_sym, counts)
    }
}
