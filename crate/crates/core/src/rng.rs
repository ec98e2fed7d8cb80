//! Seeded random streams shared by the splitter and the synthetic generator.
//!
//! Every stream is a PCG XSL-RR 128/64 generator (`rand_pcg::Pcg64`,
//! multiplier `0x2360ED051FC65DA44385DF649FCCF645`) constructed as
//! `Pcg64::new(seed as u128, label as u128)`, where `label` is a fixed
//! per-purpose stream constant. Derived draws:
//!
//! * uniform in `[0, 1)`: `(next_u64() >> 11) as f64 * 2^-53`
//! * index in `0..n`: `((next_u64() as u128 * n as u128) >> 64)`
//! * standard normal: Box-Muller on two uniforms `u1, u2`, returning
//!   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`; one normal per pair of uniforms.
//!
//! These definitions are simple enough to reproduce in any language.

use rand_core::Rng;
use rand_pcg::Pcg64;

/// Fixed stream labels. Changing any of these changes every seeded output.
pub mod stream {
    pub const SPLIT: u64 = 0x5350_4c49;
    pub const PROTOTYPES: u64 = 0x5052_4f54;
    pub const VISUAL_NOISE: u64 = 0x5649_534e;
    pub const SIDE_NOISE: u64 = 0x5349_4445;
    pub const SIDE_MAP: u64 = 0x4d41_5050;
    pub const TEST_NOISE: u64 = 0x5445_5354;
    pub const PAIRS: u64 = 0x5041_4952;
    pub const BANDWIDTH: u64 = 0x4241_4e44;
    pub const TUNING: u64 = 0x5455_4e45;
}

#[derive(Debug, Clone)]
pub struct SeededStream {
    inner: Pcg64,
}

impl SeededStream {
    pub fn new(seed: u64, label: u64) -> Self {
        Self {
            inner: Pcg64::new(seed as u128, label as u128),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn index(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut s = SeededStream::new(7, stream::SPLIT);
            (0..4).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = SeededStream::new(7, stream::SPLIT);
            (0..4).map(|_| s.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut s = SeededStream::new(7, stream::PROTOTYPES);
            (0..4).map(|_| s.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn normal_moments() {
        let mut s = SeededStream::new(1, stream::VISUAL_NOISE);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn index_in_range() {
        let mut s = SeededStream::new(3, stream::SPLIT);
        for n in 1..50 {
            assert!(s.index(n) < n);
        }
    }
}
