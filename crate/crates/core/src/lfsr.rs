//! Galois linear-feedback shift register.
//!
//! The register state is an `m`-bit integer whose least-significant bit is
//! `h_0`. The feedback polynomial word stores `q_1` in bit 0 and `q_m` in bit
//! `m - 1`. One clock step is
//!
//! ```text
//! h_i'     = h_{i+1} ^ (q_{i+1} & h_0)    for 0 <= i < m - 1
//! h_{m-1}' = q_m & h_0 = h_0
//! ```
//!
//! which in integer form is a right shift followed by a conditional XOR with
//! the polynomial word. This is the layout used by the LR-FHSS device driver,
//! whose case-1 polynomials `{33, 45, 48, 51, 54, 57}` are all maximal under
//! it.

use thiserror::Error;

/// Largest register supported. Every state fits a `u32` and exhaustive period
/// measurement stays cheap.
pub const MAX_REGISTER_SIZE: u32 = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LfsrError {
    #[error("register size {0} is outside 1..={MAX_REGISTER_SIZE}")]
    InvalidSize(u32),
    #[error("polynomial {polynomial:#x} is not a {size}-bit word with its top coefficient set")]
    InvalidPolynomial { polynomial: u32, size: u32 },
    #[error("state {state} is outside 1..2^{size}")]
    InvalidState { state: u32, size: u32 },
}

/// Register size, feedback polynomial and seed of a Galois LFSR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LfsrConfig {
    size: u32,
    polynomial: u32,
    initial_state: u32,
}

impl LfsrConfig {
    pub fn new(size: u32, polynomial: u32, initial_state: u32) -> Result<Self, LfsrError> {
        if size == 0 || size > MAX_REGISTER_SIZE {
            return Err(LfsrError::InvalidSize(size));
        }
        if polynomial >> (size - 1) != 1 {
            return Err(LfsrError::InvalidPolynomial { polynomial, size });
        }
        let config = Self { size, polynomial, initial_state };
        config.check_state(initial_state)?;
        Ok(config)
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn polynomial(&self) -> u32 {
        self.polynomial
    }

    pub fn initial_state(&self) -> u32 {
        self.initial_state
    }

    /// Number of distinct nonzero states, `2^m - 1`.
    pub fn maximal_period(&self) -> usize {
        (1usize << self.size) - 1
    }

    /// Same register and polynomial, different seed.
    pub fn with_initial_state(&self, initial_state: u32) -> Result<Self, LfsrError> {
        Self::new(self.size, self.polynomial, initial_state)
    }

    fn check_state(&self, state: u32) -> Result<(), LfsrError> {
        if state == 0 || u64::from(state) >= 1u64 << self.size {
            return Err(LfsrError::InvalidState { state, size: self.size });
        }
        Ok(())
    }

    /// One clock step from `state`. Zero is absorbing and therefore rejected.
    pub fn advance(&self, state: u32) -> Result<u32, LfsrError> {
        self.check_state(state)?;
        Ok(self.step(state))
    }

    #[inline]
    fn step(&self, state: u32) -> u32 {
        let feedback = if state & 1 == 1 { self.polynomial } else { 0 };
        (state >> 1) ^ feedback
    }

    /// Endless iterator over register states, starting with the seed.
    pub fn states(&self) -> States {
        States { config: *self, state: self.initial_state }
    }

    /// The first `count` states; element 0 is the seed and the cycle repeats
    /// once the period is exhausted.
    pub fn state_sequence(&self, count: usize) -> Vec<u32> {
        self.states().take(count).collect()
    }

    /// Output bit stream `h_0` of successive states.
    pub fn output_bits(&self, count: usize) -> Vec<u8> {
        self.states().take(count).map(|s| (s & 1) as u8).collect()
    }

    /// Smallest `t >= 1` with `state(t) == state(0)`.
    pub fn period(&self) -> usize {
        let mut state = self.step(self.initial_state);
        let mut t = 1;
        while state != self.initial_state {
            state = self.step(state);
            t += 1;
        }
        t
    }

    pub fn is_maximal(&self) -> bool {
        self.period() == self.maximal_period()
    }
}

/// Iterator returned by [`LfsrConfig::states`].
#[derive(Debug, Clone)]
pub struct States {
    config: LfsrConfig,
    state: u32,
}

impl Iterator for States {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        let current = self.state;
        self.state = self.config.step(current);
        Some(current)
    }
}
