use crate::error::{Error, Result};

pub const PRECISION_BITS: u32 = 16;
pub const TOTAL_FREQ: u32 = 1 << PRECISION_BITS;

/// Cumulative frequency table over a contiguous integer support, scaled to
/// [`TOTAL_FREQ`]. With `escape` set, one extra slot after the support codes
/// out-of-range symbols, whose value then follows as 32 raw bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedCDF {
    min_sym: i32,
    cum_freq: Vec<u32>,
    escape: bool,
}

impl QuantizedCDF {
    pub fn min_sym(&self) -> i32 {
        self.min_sym
    }

    /// Inclusive upper end of the support.
    pub fn max_sym(&self) -> i32 {
        self.min_sym + self.support_len() as i32 - 1
    }

    pub fn support_len(&self) -> usize {
        self.cum_freq.len() - 1 - self.escape as usize
    }

    pub fn has_escape(&self) -> bool {
        self.escape
    }

    pub fn cum_freq(&self) -> &[u32] {
        &self.cum_freq
    }

    /// Slot index of `symbol`, or the escape slot when it lies outside the
    /// support.
    pub(crate) fn slot(&self, symbol: i32) -> Option<usize> {
        if symbol >= self.min_sym && symbol <= self.max_sym() {
            Some((symbol - self.min_sym) as usize)
        } else if self.escape {
            Some(self.support_len())
        } else {
            None
        }
    }

    pub(crate) fn escape_slot(&self) -> Option<usize> {
        self.escape.then(|| self.support_len())
    }

    pub(crate) fn start_freq(&self, slot: usize) -> (u32, u32) {
        (self.cum_freq[slot], self.cum_freq[slot + 1] - self.cum_freq[slot])
    }

    /// Slot whose interval contains `target`.
    pub(crate) fn find(&self, target: u32) -> usize {
        // last index i with cum_freq[i] <= target
        self.cum_freq.partition_point(|&c| c <= target) - 1
    }

    /// Probability the table assigns to `symbol`, counting escape bits.
    pub fn code_length_bits(&self, symbol: i32) -> Option<f64> {
        let slot = self.slot(symbol)?;
        let (_, f) = self.start_freq(slot);
        let base = PRECISION_BITS as f64 - (f as f64).log2();
        Some(if Some(slot) == self.escape_slot() { base + 32.0 } else { base })
    }
}

/// Quantizes a PMF over `min_sym..min_sym + pmf.len()` to 16-bit
/// frequencies. Every slot keeps frequency at least 1; with `escape`, the
/// mass missing from `pmf` goes to the escape slot.
pub fn build_cdf_table(pmf: &[f64], min_sym: i32, escape: bool) -> Result<QuantizedCDF> {
    if pmf.is_empty() {
        return Err(Error::InvalidArgument("empty PMF support".into()));
    }
    let slots = pmf.len() + escape as usize;
    if slots > TOTAL_FREQ as usize {
        return Err(Error::InvalidArgument(format!("support of {slots} slots exceeds table precision")));
    }
    if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidArgument("PMF entries must be finite and non-negative".into()));
    }
    let mass: f64 = pmf.iter().sum();
    if mass > 1.0 + 1e-6 {
        return Err(Error::InvalidArgument(format!("PMF sums to {mass} > 1")));
    }
    let mut probs: Vec<f64> = pmf.to_vec();
    if escape {
        probs.push((1.0 - mass).max(0.0));
    }
    let total: f64 = probs.iter().sum();
    let scale = if total > 0.0 { TOTAL_FREQ as f64 / total } else { 0.0 };
    let mut freq: Vec<i64> = probs.iter().map(|p| ((p * scale).round() as i64).max(1)).collect();

    // Settle the rounding residue on the largest entries, never below 1.
    let mut diff = TOTAL_FREQ as i64 - freq.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..freq.len()).collect();
    order.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(a.cmp(&b)));
    while diff != 0 {
        let mut progressed = false;
        for &i in &order {
            if diff > 0 {
                freq[i] += 1;
                diff -= 1;
                progressed = true;
            } else if freq[i] > 1 {
                freq[i] -= 1;
                diff += 1;
                progressed = true;
            }
            if diff == 0 {
                break;
            }
        }
        debug_assert!(progressed);
    }

    let mut cum_freq = Vec::with_capacity(freq.len() + 1);
    let mut acc = 0u32;
    cum_freq.push(0);
    for f in freq {
        acc += f as u32;
        cum_freq.push(acc);
    }
    debug_assert_eq!(acc, TOTAL_FREQ);
    Ok(QuantizedCDF { min_sym, cum_freq, escape })
}
