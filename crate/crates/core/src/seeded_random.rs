//! Deterministic replacement for `Math.random` and `crypto.getRandomValues`
//! used by the client shim. The generator is a linear congruential
//! recurrence seeded from the capture time, so two replays of the same
//! memento draw the same numbers.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

pub const MULTIPLIER: u64 = 9301;
pub const INCREMENT: u64 = 49297;
pub const MODULUS: u64 = 233280;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed % MODULUS,
        }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    /// Advances once and returns the new state.
    pub fn next_state(&mut self) -> u64 {
        self.state = (MULTIPLIER * self.state + INCREMENT) % MODULUS;
        self.state
    }

    /// Next draw in `[0, 1)`.
    pub fn next_draw(&mut self) -> f64 {
        self.next_state() as f64 / MODULUS as f64
    }

    /// `floor(2^32 * draw)` without going through floating point.
    fn next_word(&mut self) -> u32 {
        ((self.next_state() << 32) / MODULUS) as u32
    }

    pub fn fill_u8(&mut self, buf: &mut [u8]) {
        for b in buf {
            *b = self.next_word() as u8;
        }
    }

    pub fn fill_u16(&mut self, buf: &mut [u16]) {
        for v in buf {
            *v = self.next_word() as u16;
        }
    }

    pub fn fill_u32(&mut self, buf: &mut [u32]) {
        for v in buf {
            *v = self.next_word();
        }
    }

    /// Two draws per element, high word first.
    pub fn fill_u64(&mut self, buf: &mut [u64]) {
        for v in buf {
            let hi = self.next_word() as u64;
            let lo = self.next_word() as u64;
            *v = (hi << 32) | lo;
        }
    }
}

/// Formats `state / MODULUS` with 12 decimals, rounding half up, using
/// integer arithmetic only.
pub fn format_draw(state: u64) -> String {
    let num = state as u128 * 1_000_000_000_000;
    let m = MODULUS as u128;
    let mut q = num / m;
    if 2 * (num % m) >= m {
        q += 1;
    }
    format!("{}.{:012}", q / 1_000_000_000_000, q % 1_000_000_000_000)
}

/// First `n` draws for `seed`, one per line, newline terminated.
pub fn golden_vectors(seed: u64, n: usize) -> String {
    let mut lcg = Lcg::new(seed);
    let mut out = String::with_capacity(n * 15);
    for _ in 0..n {
        let _ = writeln!(out, "{}", format_draw(lcg.next_state()));
    }
    out
}

pub fn write_golden_vectors(path: &Path, seed: u64, n: usize) -> io::Result<()> {
    std::fs::write(path, golden_vectors(seed, n))
}
