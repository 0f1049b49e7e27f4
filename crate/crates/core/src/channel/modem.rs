//! Gray-mapped square QAM.
//!
//! The first `m/2` bits of a symbol select the in-phase level and the last
//! `m/2` bits the quadrature level. Each axis uses a reflected Gray code, so
//! neighbouring amplitude levels differ in exactly one bit. The constellation
//! has unit average energy before power scaling.

use num_complex::Complex64;

use super::ber::ModOrder;
use super::fading::ChannelState;
use crate::error::{Error, Result};
use crate::vq::{bits_to_index, index_to_bits};

/// Precomputed modulator/detector for one modulation order, working on
/// integer symbol labels (big-endian, `m` bits).
#[derive(Debug, Clone)]
pub struct Modem {
    order: ModOrder,
    half: u32,
    side: u32,
    scale: f64,
}

#[inline]
fn gray(l: u32) -> u32 {
    l ^ (l >> 1)
}

#[inline]
fn gray_inverse(mut g: u32) -> u32 {
    let mut l = g;
    while g > 1 {
        g >>= 1;
        l ^= g;
    }
    l
}

impl Modem {
    pub fn new(order: ModOrder) -> Self {
        let side = order.side();
        Modem {
            order,
            half: order.bits() / 2,
            side,
            scale: (3.0 / (2.0 * (order.points() as f64 - 1.0))).sqrt(),
        }
    }

    pub fn order(&self) -> ModOrder {
        self.order
    }

    #[inline]
    fn level(&self, label: u32) -> f64 {
        let l = gray_inverse(label) as f64;
        (2.0 * l - (self.side as f64 - 1.0)) * self.scale
    }

    #[inline]
    fn slice(&self, x: f64) -> u32 {
        let l = ((x / self.scale + (self.side as f64 - 1.0)) / 2.0).round();
        gray(l.clamp(0.0, self.side as f64 - 1.0) as u32)
    }

    /// Unit-energy constellation point for an `m`-bit label.
    #[inline]
    pub fn map(&self, label: u32) -> Complex64 {
        let mask = (1 << self.half) - 1;
        Complex64::new(self.level(label >> self.half), self.level(label & mask))
    }

    /// Label of the constellation point nearest to `z`.
    #[inline]
    pub fn demap(&self, z: Complex64) -> u32 {
        (self.slice(z.re) << self.half) | self.slice(z.im)
    }

    pub fn constellation(&self) -> Vec<Complex64> {
        (0..self.order.points()).map(|l| self.map(l)).collect()
    }
}

/// Transmitted symbol `sqrt(p) * s` for the `m` bits in `bits`.
pub fn qam_modulate(bits: &[u8], m: ModOrder, p: f64) -> Result<Complex64> {
    if bits.len() != m.bits() as usize {
        return Err(Error::BitLength {
            got: bits.len(),
            expected: m.bits() as usize,
        });
    }
    let label = bits_to_index(bits)? as u32;
    Ok(Modem::new(m).map(label) * p.sqrt())
}

/// Equalizes `y` by `h`, removes the power scaling and returns the Gray
/// demapping of the nearest constellation point.
pub fn qam_detect(y: Complex64, state: &ChannelState, m: ModOrder, p: f64) -> Vec<u8> {
    let z = y / (state.h * p.sqrt());
    let label = Modem::new(m).demap(z);
    index_to_bits(label as usize, m.bits()).expect("label fits in m bits")
}
