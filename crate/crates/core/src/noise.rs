//! The shared noise field `U_n(i)`.
//!
//! Every coupled process in the crate reads its randomness from a [`Field`]:
//! a pure map from a lattice site to a uniform value in `[0, 1)`. The
//! production field is a counter-based generator, so any site can be
//! evaluated in any order and always yields the same value.

use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// A source of uniforms indexed by lattice sites `(n, i)`.
pub trait Field: Sync {
    fn u(&self, n: i64, i: i64) -> f64;
}

impl<F: Field + ?Sized> Field for &F {
    #[inline]
    fn u(&self, n: i64, i: i64) -> f64 {
        (**self).u(n, i)
    }
}

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const ROW_KEY: u64 = 0xd1b5_4a32_d192_ed03;
const COL_KEY: u64 = 0xaef1_7502_108e_f2d9;

/// Seed for replica `index` of an experiment seeded with `seed`.
#[inline]
pub fn child_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(GOLDEN)))
}

/// 53-bit uniform in `[0, 1)`.
#[inline]
pub fn to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Counter-based field keyed by a 64-bit seed, optionally shifted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseField {
    seed: u64,
    dn: i64,
    di: i64,
}

impl NoiseField {
    pub fn new(seed: u64) -> Self {
        NoiseField { seed, dn: 0, di: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn offset(&self) -> (i64, i64) {
        (self.dn, self.di)
    }

    /// The field `(n, i) -> u(n + dn, i + di)`.
    pub fn shifted(&self, dn: i64, di: i64) -> Self {
        NoiseField {
            seed: self.seed,
            dn: self.dn.wrapping_add(dn),
            di: self.di.wrapping_add(di),
        }
    }

    /// An independent field for replica `index`.
    pub fn child(&self, index: u64) -> Self {
        NoiseField::new(child_seed(self.seed, index))
    }

    #[inline]
    pub fn bits(&self, n: i64, i: i64) -> u64 {
        let n = n.wrapping_add(self.dn) as u64;
        let i = i.wrapping_add(self.di) as u64;
        let h = mix64(self.seed.wrapping_add(GOLDEN));
        let h = mix64(h ^ n.wrapping_mul(ROW_KEY));
        mix64(h ^ i.wrapping_mul(COL_KEY))
    }
}

impl Field for NoiseField {
    #[inline]
    fn u(&self, n: i64, i: i64) -> f64 {
        to_unit(self.bits(n, i))
    }
}

/// Constant field, for forcing one branch of an updating function.
#[derive(Clone, Copy, Debug)]
pub struct ConstField(pub f64);

impl Field for ConstField {
    fn u(&self, _n: i64, _i: i64) -> f64 {
        self.0
    }
}

/// Field defined by a closure.
pub struct FnField<F>(pub F);

impl<F: Fn(i64, i64) -> f64 + Sync> Field for FnField<F> {
    fn u(&self, n: i64, i: i64) -> f64 {
        (self.0)(n, i)
    }
}

/// `(n, i) -> inner.u(n + dn, i + di)` for any field.
pub struct Shifted<F> {
    pub inner: F,
    pub dn: i64,
    pub di: i64,
}

impl<F: Field> Field for Shifted<F> {
    #[inline]
    fn u(&self, n: i64, i: i64) -> f64 {
        self.inner.u(n.wrapping_add(self.dn), i.wrapping_add(self.di))
    }
}

/// Wraps a field and records the highest level and number of evaluations.
pub struct LevelProbe<F> {
    inner: F,
    max_level: AtomicI64,
    evaluations: AtomicU64,
}

impl<F: Field> LevelProbe<F> {
    pub fn new(inner: F) -> Self {
        LevelProbe {
            inner,
            max_level: AtomicI64::new(i64::MIN),
            evaluations: AtomicU64::new(0),
        }
    }

    /// Highest `n` evaluated so far, `None` before the first evaluation.
    pub fn max_level(&self) -> Option<i64> {
        let m = self.max_level.load(Ordering::Relaxed);
        (m != i64::MIN).then_some(m)
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.max_level.store(i64::MIN, Ordering::Relaxed);
        self.evaluations.store(0, Ordering::Relaxed);
    }
}

impl<F: Field> Field for LevelProbe<F> {
    fn u(&self, n: i64, i: i64) -> f64 {
        self.max_level.fetch_max(n, Ordering::Relaxed);
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.inner.u(n, i)
    }
}
