//! 8-bit Fibonacci LFSR driving pseudo-random cache replacement.
//!
//! Feedback polynomial x^8 + x^6 + x^5 + x^4 + 1 (taps 8, 6, 5, 4), which is
//! primitive, so every nonzero state lies on a single cycle of length 255.

use serde::{Deserialize, Serialize};

/// Mask of the tapped bits (1-indexed positions 8, 6, 5, 4).
const TAP_MASK: u8 = 0b1011_1000;

/// Reset value of every cache LFSR.
pub const LFSR_SEED: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lfsr8 {
    state: u8,
}

impl Lfsr8 {
    /// Panics on a zero seed; the all-zero state is a fixed point of the
    /// recurrence and is excluded by construction.
    pub fn new(seed: u8) -> Self {
        assert!(seed != 0, "LFSR seed must be nonzero");
        Self { state: seed }
    }

    pub fn state(&self) -> u8 {
        self.state
    }

    /// Advances one step and returns the low `victim_bits` bits of the new state.
    pub fn next(&mut self, victim_bits: u32) -> usize {
        let feedback = (self.state & TAP_MASK).count_ones() as u8 & 1;
        self.state = (self.state << 1) | feedback;
        debug_assert!(self.state != 0);
        self.peek(victim_bits)
    }

    /// Low `victim_bits` bits of the current state without advancing.
    pub fn peek(&self, victim_bits: u32) -> usize {
        (self.state as usize) & ((1usize << victim_bits) - 1)
    }
}

impl Default for Lfsr8 {
    fn default() -> Self {
        Self::new(LFSR_SEED)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_states_from_one() {
        // Frozen from a direct bitwise evaluation of taps {8,6,5,4}.
        let expected = [0x02, 0x04, 0x08, 0x11, 0x23, 0x47, 0x8e, 0x1c];
        let mut lfsr = Lfsr8::new(1);
        for want in expected {
            lfsr.next(3);
            assert_eq!(lfsr.state(), want);
        }
    }

    #[test]
    fn every_seed_has_period_255() {
        for seed in 1..=255u8 {
            let mut lfsr = Lfsr8::new(seed);
            let mut steps = 0;
            loop {
                lfsr.next(0);
                steps += 1;
                if lfsr.state() == seed {
                    break;
                }
                assert!(steps < 255, "seed {seed:#x} cycled early");
            }
            assert_eq!(steps, 255, "seed {seed:#x}");
        }
    }

    #[test]
    fn victim_bits_are_masked_low_bits() {
        let mut a = Lfsr8::new(0x8e);
        let mut b = a;
        let v = a.next(3);
        assert_eq!(v, a.state() as usize & 7);
        assert!(v < 8);
        assert_eq!(b.next(3), v);
    }

    #[test]
    #[should_panic]
    fn zero_seed_rejected() {
        Lfsr8::new(0);
    }
}
