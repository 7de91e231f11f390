//! Bit-packed binary strings over machine words.
//!
//! `BitString` is the workhorse for measurement outcomes, Pauli masks and
//! GF(2) linear algebra. All hot operations (XOR, AND-parity, popcount)
//! run word-wise.

use rand::Rng;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString {
    n: usize,
    words: Vec<u64>,
}

impl BitString {
    pub fn zeros(n: usize) -> Self {
        Self { n, words: vec![0; n.div_ceil(WORD_BITS)] }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                s.set(i, true);
            }
        }
        s
    }

    /// Uniformly random string of length `n`.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let mut s = Self::zeros(n);
        for w in s.words.iter_mut() {
            *w = rng.gen();
        }
        s.mask_tail();
        s
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.n);
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.n);
        let w = &mut self.words[i / WORD_BITS];
        let m = 1u64 << (i % WORD_BITS);
        if v {
            *w |= m;
        } else {
            *w &= !m;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.n);
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn words_mut(&mut self) -> &mut [u64] {
        &mut self.words
    }

    /// Zero out bits beyond `n` (callers that poke words directly must
    /// re-establish this invariant).
    pub fn mask_tail(&mut self) {
        let rem = self.n % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    #[inline]
    pub fn xor_assign(&mut self, other: &BitString) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= *b;
        }
    }

    pub fn or_assign(&mut self, other: &BitString) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Parity of `self & other`, the GF(2) inner product.
    #[inline]
    pub fn and_parity(&self, other: &BitString) -> bool {
        debug_assert_eq!(self.n, other.n);
        let mut acc = 0u64;
        for (a, b) in self.words.iter().zip(&other.words) {
            acc ^= a & b;
        }
        acc.count_ones() & 1 == 1
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Indices of set bits, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * WORD_BITS + b)
                }
            })
        })
    }

    /// Index of the lowest set bit, if any.
    pub fn first_one(&self) -> Option<usize> {
        for (wi, &w) in self.words.iter().enumerate() {
            if w != 0 {
                return Some(wi * WORD_BITS + w.trailing_zeros() as usize);
            }
        }
        None
    }

    /// Fixed-width `0`/`1` text, index 0 leftmost.
    pub fn to_01_string(&self) -> String {
        (0..self.n).map(|i| if self.get(i) { '1' } else { '0' }).collect()
    }

    pub fn parse_01(text: &str) -> Result<Self> {
        let mut s = Self::zeros(text.len());
        for (i, c) in text.chars().enumerate() {
            match c {
                '0' => {}
                '1' => s.set(i, true),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "bitstring may contain only 0/1, got {c:?}"
                    )))
                }
            }
        }
        Ok(s)
    }

    /// Value of the string read as a little-endian integer (bit 0 = LSB).
    /// Only valid for `n <= 64`; used by dense oracles.
    pub fn as_index(&self) -> usize {
        debug_assert!(self.n <= WORD_BITS);
        self.words.first().copied().unwrap_or(0) as usize
    }

    pub fn from_index(n: usize, idx: usize) -> Self {
        debug_assert!(n <= WORD_BITS);
        let mut s = Self::zeros(n);
        if !s.words.is_empty() {
            s.words[0] = idx as u64;
        }
        s.mask_tail();
        s
    }
}

impl std::fmt::Debug for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitString({})", self.to_01_string())
    }
}
