//! Order-independent summation of non-negative `f64` values.
//!
//! [`ExactSum`] keeps the running total as a wide fixed-point integer whose
//! least significant bit is 2^-1074 (the smallest subnormal), so every
//! finite non-negative double is added without rounding. The only rounding
//! happens once, in [`ExactSum::to_f64`], which is round-to-nearest-even.
//! Two accumulators fed the same multiset of values in any order, or split
//! across any number of partial sums and merged, read out bitwise-equal.

/// Bits needed to place any finite double (mantissa 53 bits shifted up to
/// 2^971) plus 64 bits of carry headroom.
const LIMBS: usize = 34;

#[derive(Clone, PartialEq, Eq)]
pub struct ExactSum {
    limbs: [u64; LIMBS],
}

impl Default for ExactSum {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for ExactSum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("ExactSum").field(&self.to_f64()).finish()
    }
}

impl ExactSum {
    pub const fn new() -> Self {
        Self { limbs: [0; LIMBS] }
    }

    /// Adds `value`, which must be finite and non-negative.
    pub fn add(&mut self, value: f64) {
        assert!(
            value.is_finite() && value >= 0.0,
            "ExactSum accepts finite non-negative values, got {value}"
        );
        let bits = value.to_bits();
        let exponent = ((bits >> 52) & 0x7ff) as usize;
        let fraction = bits & ((1u64 << 52) - 1);
        let (mantissa, position) = if exponent == 0 {
            (fraction, 0)
        } else {
            (fraction | (1u64 << 52), exponent - 1)
        };
        if mantissa == 0 {
            return;
        }
        let index = position / 64;
        let offset = position % 64;
        let low = mantissa << offset;
        let high = if offset == 0 {
            0
        } else {
            mantissa >> (64 - offset)
        };
        self.add_at(index, low);
        if high != 0 {
            self.add_at(index + 1, high);
        }
    }

    fn add_at(&mut self, mut index: usize, value: u64) {
        let (sum, mut carry) = self.limbs[index].overflowing_add(value);
        self.limbs[index] = sum;
        while carry {
            index += 1;
            let (sum, c) = self.limbs[index].overflowing_add(1);
            self.limbs[index] = sum;
            carry = c;
        }
    }

    pub fn merge(&mut self, other: &ExactSum) {
        let mut carry = false;
        for (mine, theirs) in self.limbs.iter_mut().zip(other.limbs.iter()) {
            let (s1, c1) = mine.overflowing_add(*theirs);
            let (s2, c2) = s1.overflowing_add(carry as u64);
            *mine = s2;
            carry = c1 || c2;
        }
        debug_assert!(!carry, "ExactSum overflow");
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(|&l| l == 0)
    }

    fn bit(&self, position: usize) -> bool {
        (self.limbs[position / 64] >> (position % 64)) & 1 == 1
    }

    /// 64 bits starting at `position` (bits past the top read as zero).
    fn window(&self, position: usize) -> u64 {
        let index = position / 64;
        let offset = position % 64;
        let low = self.limbs[index] >> offset;
        if offset == 0 || index + 1 >= LIMBS {
            low
        } else {
            low | (self.limbs[index + 1] << (64 - offset))
        }
    }

    fn any_below(&self, position: usize) -> bool {
        let index = position / 64;
        let offset = position % 64;
        if self.limbs[..index].iter().any(|&l| l != 0) {
            return true;
        }
        offset > 0 && self.limbs[index] & ((1u64 << offset) - 1) != 0
    }

    /// Correctly rounded (nearest, ties to even) value of the sum.
    pub fn to_f64(&self) -> f64 {
        let Some(top) = self
            .limbs
            .iter()
            .rposition(|&l| l != 0)
            .map(|i| i * 64 + 63 - self.limbs[i].leading_zeros() as usize)
        else {
            return 0.0;
        };
        if top < 53 {
            // Fits in a subnormal or the lowest normal binade without rounding.
            return self.limbs[0] as f64 * f64::from_bits(1);
        }
        let shift = top - 52;
        let mut mantissa = self.window(shift) & ((1u64 << 53) - 1);
        let round = self.bit(shift - 1);
        let sticky = self.any_below(shift - 1);
        let mut biased = top as u64 - 51;
        if round && (sticky || mantissa & 1 == 1) {
            mantissa += 1;
            if mantissa == 1u64 << 53 {
                mantissa >>= 1;
                biased += 1;
            }
        }
        if biased >= 0x7ff {
            return f64::INFINITY;
        }
        f64::from_bits((biased << 52) | (mantissa & ((1u64 << 52) - 1)))
    }
}

impl std::iter::FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut sum = ExactSum::new();
        for v in iter {
            sum.add(v);
        }
        sum
    }
}
