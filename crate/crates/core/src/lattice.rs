//! Lattice points of Z^d for d in {3, 4, 5} and a fast hashed site set.

use std::collections::HashSet;
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 5;

/// Ambient dimension, restricted to the transient low-dimensional regime 3..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dim(u8);

impl Dim {
    pub const D3: Dim = Dim(3);
    pub const D4: Dim = Dim(4);
    pub const D5: Dim = Dim(5);

    pub fn new(d: usize) -> Result<Self> {
        match d {
            3..=5 => Ok(Dim(d as u8)),
            _ => Err(Error::UnsupportedDimension(d)),
        }
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    pub fn all() -> [Dim; 3] {
        [Dim::D3, Dim::D4, Dim::D5]
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point of Z^d stored in a fixed five-slot array; unused trailing slots are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Site(pub [i32; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    pub fn from_slice(coords: &[i32]) -> Self {
        assert!(coords.len() <= MAX_DIM, "at most {MAX_DIM} coordinates");
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    /// Unit vector along `axis` scaled by `k`.
    pub fn axis(axis: usize, k: i32) -> Self {
        let mut c = [0; MAX_DIM];
        c[axis] = k;
        Site(c)
    }

    #[inline]
    pub fn add(self, other: Site) -> Site {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0) {
            *a += b;
        }
        Site(c)
    }

    #[inline]
    pub fn sub(self, other: Site) -> Site {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0) {
            *a -= b;
        }
        Site(c)
    }

    #[inline]
    pub fn neg(self) -> Site {
        Site(self.0.map(|a| -a))
    }

    #[inline]
    pub fn norm_sq(self) -> i64 {
        self.0.iter().map(|&a| (a as i64) * (a as i64)).sum()
    }

    #[inline]
    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    #[inline]
    pub fn sup_norm(self) -> u32 {
        self.0.iter().map(|a| a.unsigned_abs()).max().unwrap_or(0)
    }

    #[inline]
    pub fn l1_norm(self) -> u64 {
        self.0.iter().map(|a| a.unsigned_abs() as u64).sum()
    }

    pub fn coords(&self, dim: Dim) -> &[i32] {
        &self.0[..dim.get()]
    }

    /// Sorted absolute coordinates: the orbit representative under the
    /// hyperoctahedral group (coordinate permutations and sign flips).
    pub fn canonical(self, dim: Dim) -> [u32; MAX_DIM] {
        let d = dim.get();
        let mut a = [0u32; MAX_DIM];
        for i in 0..d {
            a[i] = self.0[i].unsigned_abs();
        }
        a[..d].sort_unstable();
        a
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // trailing zero slots are indistinguishable from genuine zero coordinates,
        // so print all five
        write!(f, "Site{:?}", self.0)
    }
}

/// Hasher for [`Site`]: folds the coordinates into one word and finishes with a
/// splitmix64 avalanche.
#[derive(Default, Clone, Copy)]
pub struct SiteHasher(u64);

impl Hasher for SiteHasher {
    #[inline]
    fn finish(&self) -> u64 {
        splitmix64(self.0)
    }

    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(buf));
        }
    }

    #[inline]
    fn write_i32(&mut self, i: i32) {
        self.0 = self.0.rotate_left(13) ^ (i as u32 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }

    #[inline]
    fn write_u64(&mut self, i: u64) {
        self.0 = self.0.rotate_left(13) ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }

    #[inline]
    fn write_usize(&mut self, i: usize) {
        self.write_u64(i as u64);
    }
}

pub type SiteSet = HashSet<Site, BuildHasherDefault<SiteHasher>>;

pub fn new_site_set(capacity: usize) -> SiteSet {
    SiteSet::with_capacity_and_hasher(capacity, Default::default())
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_validation() {
        assert!(Dim::new(2).is_err());
        assert!(Dim::new(6).is_err());
        assert_eq!(Dim::new(4).unwrap().get(), 4);
    }

    #[test]
    fn canonical_is_symmetric() {
        let d = Dim::D4;
        let x = Site::from_slice(&[3, -1, 0, -7]);
        let y = Site::from_slice(&[-7, 0, 1, 3]);
        assert_eq!(x.canonical(d), y.canonical(d));
        assert_eq!(x.canonical(d), x.neg().canonical(d));
        assert_eq!(&x.canonical(d)[..4], &[0, 1, 3, 7]);
    }

    #[test]
    fn site_set_dedups() {
        let mut s = new_site_set(4);
        s.insert(Site::ORIGIN);
        s.insert(Site::axis(0, 1));
        s.insert(Site::axis(0, 1));
        assert_eq!(s.len(), 2);
    }
}
