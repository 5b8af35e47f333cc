//! Binary fixed-point fractions in `[0, 1)`.
//!
//! A [`Fixed`] holds `numerator / 2^bits` as little-endian 64-bit limbs. All
//! arithmetic is modulo 1 and exact; the only lossy operation is conversion to
//! `f64`, which is monotone in the exact value.

use std::cmp::Ordering;

use num_bigint::BigUint;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct Fixed {
    limbs: Vec<u64>,
    bits: u32,
}

fn limb_count(bits: u32) -> usize {
    bits.div_ceil(64) as usize
}

/// `2^exp` for any exponent, flushing to zero below the subnormal range.
pub(crate) fn pow2(exp: i64) -> f64 {
    if exp > 1023 {
        return f64::INFINITY;
    }
    if exp >= -1022 {
        return f64::from_bits(((exp + 1023) as u64) << 52);
    }
    if exp >= -1074 {
        return f64::from_bits(1u64 << (exp + 1074));
    }
    0.0
}

impl Fixed {
    pub(crate) fn zero(bits: u32) -> Self {
        assert!(bits > 0, "fixed-point precision must be positive");
        Fixed {
            limbs: vec![0; limb_count(bits)],
            bits,
        }
    }

    /// Builds from little-endian limbs, masking anything at or above `2^bits`.
    pub(crate) fn from_limbs(mut limbs: Vec<u64>, bits: u32) -> Self {
        limbs.resize(limb_count(bits), 0);
        let mut f = Fixed { limbs, bits };
        f.mask();
        f
    }

    /// Reads `words` as the binary expansion `0.w0 w1 w2 ...` (most significant
    /// word first) and keeps the leading `bits` bits.
    pub(crate) fn from_top_words(words: &[u64], bits: u32) -> Self {
        let n = limb_count(bits);
        assert!(words.len() >= n, "not enough random words for precision");
        let limbs: Vec<u64> = words[..n].iter().rev().copied().collect();
        let surplus = (n as u32) * 64 - bits;
        Fixed::from_limbs(shr(&limbs, surplus), bits)
    }

    pub(crate) fn from_biguint(n: &BigUint, bits: u32) -> Option<Self> {
        if n.bits() > u64::from(bits) {
            return None;
        }
        Some(Fixed::from_limbs(n.to_u64_digits(), bits))
    }

    pub(crate) fn to_biguint(&self) -> BigUint {
        let mut words = Vec::with_capacity(self.limbs.len() * 2);
        for &l in &self.limbs {
            words.push(l as u32);
            words.push((l >> 32) as u32);
        }
        BigUint::new(words)
    }

    /// `floor(num * 2^bits / den)`; requires `num < den`.
    pub(crate) fn from_ratio(num: u64, den: u64, bits: u32) -> Option<Self> {
        if den == 0 || num >= den {
            return None;
        }
        let scaled = (BigUint::from(num) << bits) / BigUint::from(den);
        Fixed::from_biguint(&scaled, bits)
    }

    pub(crate) fn bits(&self) -> u32 {
        self.bits
    }

    fn mask(&mut self) {
        let rem = self.bits % 64;
        if rem != 0 {
            if let Some(top) = self.limbs.last_mut() {
                *top &= (1u64 << rem) - 1;
            }
        }
    }

    /// True when the value is at least 1/2.
    pub(crate) fn top_bit(&self) -> bool {
        let idx = self.bits - 1;
        (self.limbs[(idx / 64) as usize] >> (idx % 64)) & 1 == 1
    }

    /// Re-expresses the value at a new precision, truncating when narrowing.
    pub(crate) fn with_bits(&self, bits: u32) -> Fixed {
        match bits.cmp(&self.bits) {
            Ordering::Equal => self.clone(),
            Ordering::Greater => {
                let shift = bits - self.bits;
                Fixed::from_limbs(shl(&self.limbs, shift, limb_count(bits)), bits)
            }
            Ordering::Less => {
                let shift = self.bits - bits;
                Fixed::from_limbs(shr(&self.limbs, shift), bits)
            }
        }
    }

    /// `(self + other) mod 1`; both operands share a precision.
    pub(crate) fn add_mod(&self, other: &Fixed) -> Fixed {
        debug_assert_eq!(self.bits, other.bits);
        let mut out = Vec::with_capacity(self.limbs.len());
        let mut carry = false;
        for (&a, &b) in self.limbs.iter().zip(&other.limbs) {
            let (s1, c1) = a.overflowing_add(b);
            let (s2, c2) = s1.overflowing_add(carry as u64);
            out.push(s2);
            carry = c1 || c2;
        }
        let mut f = Fixed {
            limbs: out,
            bits: self.bits,
        };
        f.mask();
        f
    }

    /// `(self * factor) mod 1`.
    pub(crate) fn mul_small_mod(&self, factor: u64) -> Fixed {
        let mut out = Vec::with_capacity(self.limbs.len());
        let mut carry: u128 = 0;
        for &a in &self.limbs {
            let wide = u128::from(a) * u128::from(factor) + carry;
            out.push(wide as u64);
            carry = wide >> 64;
        }
        let mut f = Fixed {
            limbs: out,
            bits: self.bits,
        };
        f.mask();
        f
    }

    /// `(1 - self) mod 1`.
    pub(crate) fn neg_mod(&self) -> Fixed {
        let mut out = Vec::with_capacity(self.limbs.len());
        let mut borrow = false;
        for &a in &self.limbs {
            let (d1, b1) = 0u64.overflowing_sub(a);
            let (d2, b2) = d1.overflowing_sub(borrow as u64);
            out.push(d2);
            borrow = b1 || b2;
        }
        let mut f = Fixed {
            limbs: out,
            bits: self.bits,
        };
        f.mask();
        f
    }

    /// `|self - other|`; both operands share a precision.
    pub(crate) fn abs_diff(&self, other: &Fixed) -> Fixed {
        debug_assert_eq!(self.bits, other.bits);
        let (hi, lo) = if self >= other {
            (self, other)
        } else {
            (other, self)
        };
        Fixed {
            limbs: sub_limbs(&hi.limbs, &lo.limbs),
            bits: self.bits,
        }
    }

    /// Ordering of `a + b` (without wrapping) relative to `self`.
    pub(crate) fn cmp_sum(&self, a: &Fixed, b: &Fixed) -> Ordering {
        debug_assert!(self.bits == a.bits && a.bits == b.bits);
        let mut sum = Vec::with_capacity(a.limbs.len() + 1);
        let mut carry = false;
        for (&x, &y) in a.limbs.iter().zip(&b.limbs) {
            let (s1, c1) = x.overflowing_add(y);
            let (s2, c2) = s1.overflowing_add(carry as u64);
            sum.push(s2);
            carry = c1 || c2;
        }
        sum.push(carry as u64);
        let mut me = self.limbs.clone();
        me.push(0);
        cmp_limbs(&sum, &me)
    }

    /// `self - (a + b)` as a float, assuming `self > a + b`.
    pub(crate) fn excess_over_sum(&self, a: &Fixed, b: &Fixed) -> f64 {
        let ab = a.add_mod(b);
        let wrapped = ab < *a;
        if wrapped {
            return 0.0;
        }
        self.abs_diff(&ab).to_f64()
    }

    /// Nearest-below 64-bit window of the value, rounded to `f64`.
    pub(crate) fn to_f64(&self) -> f64 {
        let Some(top) = self.limbs.iter().rposition(|&l| l != 0) else {
            return 0.0;
        };
        let hi = self.limbs[top];
        let lo = if top > 0 { self.limbs[top - 1] } else { 0 };
        let lz = hi.leading_zeros();
        let window = if lz == 0 {
            hi
        } else {
            (hi << lz) | (lo >> (64 - lz))
        };
        let exp = (top as i64) * 64 - i64::from(lz) - i64::from(self.bits);
        let m = window as f64;
        // Split the scaling so intermediate values stay normal.
        if exp < -900 {
            m * pow2(-900) * pow2(exp + 900)
        } else {
            m * pow2(exp)
        }
    }

    pub(crate) fn to_hex(&self) -> String {
        let digits = self.bits.div_ceil(4) as usize;
        format!("{:0>width$}", self.to_biguint().to_str_radix(16), width = digits)
    }

    pub(crate) fn from_hex(hex: &str, bits: u32) -> Option<Fixed> {
        let n = BigUint::parse_bytes(hex.as_bytes(), 16)?;
        Fixed::from_biguint(&n, bits)
    }
}

impl PartialOrd for Fixed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fixed {
    /// Orders by value; precisions must agree for a meaningful comparison.
    fn cmp(&self, other: &Self) -> Ordering {
        debug_assert_eq!(self.bits, other.bits);
        cmp_limbs(&self.limbs, &other.limbs)
    }
}

fn cmp_limbs(a: &[u64], b: &[u64]) -> Ordering {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().rev().zip(b.iter().rev()) {
        match x.cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

fn sub_limbs(hi: &[u64], lo: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(hi.len());
    let mut borrow = false;
    for (&a, &b) in hi.iter().zip(lo) {
        let (d1, b1) = a.overflowing_sub(b);
        let (d2, b2) = d1.overflowing_sub(borrow as u64);
        out.push(d2);
        borrow = b1 || b2;
    }
    debug_assert!(!borrow);
    out
}

fn shl(limbs: &[u64], shift: u32, out_len: usize) -> Vec<u64> {
    let words = (shift / 64) as usize;
    let bits = shift % 64;
    let mut out = vec![0u64; out_len];
    for (i, &l) in limbs.iter().enumerate() {
        let j = i + words;
        if j < out_len {
            out[j] |= l << bits;
        }
        if bits != 0 && j + 1 < out_len {
            out[j + 1] |= l >> (64 - bits);
        }
    }
    out
}

fn shr(limbs: &[u64], shift: u32) -> Vec<u64> {
    let words = (shift / 64) as usize;
    let bits = shift % 64;
    let mut out = vec![0u64; limbs.len().saturating_sub(words)];
    for (i, o) in out.iter_mut().enumerate() {
        let src = i + words;
        *o = limbs[src] >> bits;
        if bits != 0 && src + 1 < limbs.len() {
            *o |= limbs[src + 1] << (64 - bits);
        }
    }
    out
}
