//! Gray-mapped constellations and the nearest-point quantizer.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstellationName {
    Bpsk,
    Qpsk,
}

/// A finite symbol alphabet with a Gray bit labelling.
///
/// Point `i` carries the `bits_per_symbol` bits of `i` (MSB first); the point
/// order is chosen so that nearest neighbours differ in a single bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    name: ConstellationName,
    points: Vec<Complex64>,
    bits_per_symbol: usize,
}

impl Constellation {
    pub fn new(name: ConstellationName) -> Self {
        let points = match name {
            ConstellationName::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            ConstellationName::Qpsk => vec![
                Complex64::new(1.0, 1.0),
                Complex64::new(1.0, -1.0),
                Complex64::new(-1.0, 1.0),
                Complex64::new(-1.0, -1.0),
            ],
        };
        Self::from_points(name, points).expect("built-in constellation is valid")
    }

    pub fn bpsk() -> Self {
        Self::new(ConstellationName::Bpsk)
    }

    pub fn qpsk() -> Self {
        Self::new(ConstellationName::Qpsk)
    }

    /// Builds a constellation from explicit points labelled by their index.
    pub fn from_points(name: ConstellationName, points: Vec<Complex64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("constellation has no points".into()));
        }
        if !points.len().is_power_of_two() {
            return Err(Error::Config(format!(
                "constellation size {} is not a power of two",
                points.len()
            )));
        }
        for (i, a) in points.iter().enumerate() {
            if points[..i].iter().any(|b| b == a) {
                return Err(Error::Config("constellation points must be distinct".into()));
            }
        }
        let bits_per_symbol = points.len().trailing_zeros() as usize;
        Ok(Self {
            name,
            points,
            bits_per_symbol,
        })
    }

    pub fn name(&self) -> ConstellationName {
        self.name
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Mean symbol energy over uniformly used points.
    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn nearest_index(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn quantize(&self, z: Complex64) -> Complex64 {
        self.points[self.nearest_index(z)]
    }

    /// Maps a bit stream (one bit per `u8`, values 0/1) onto symbols.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let k = self.bits_per_symbol;
        if !bits.len().is_multiple_of(k) {
            return Err(Error::BitCount {
                bits: bits.len(),
                needed: k,
            });
        }
        Ok(bits
            .chunks_exact(k)
            .map(|chunk| {
                let idx = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
                self.points[idx]
            })
            .collect())
    }

    /// Hard decision bits for a received value.
    pub fn demap(&self, z: Complex64, out: &mut Vec<u8>) {
        let idx = self.nearest_index(z);
        for shift in (0..self.bits_per_symbol).rev() {
            out.push(((idx >> shift) & 1) as u8);
        }
    }

    pub fn demap_all(&self, zs: &[Complex64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(zs.len() * self.bits_per_symbol);
        for &z in zs {
            self.demap(z, &mut out);
        }
        out
    }
}
