//! Finite abelian groups written as products of cyclic factors.
//!
//! Elements are handled in two forms: [`Symbol`], an explicit residue
//! vector, and a canonical `u32` index (mixed radix, last factor fastest).
//! Windows store indices; the `*_idx` methods do arithmetic on them directly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};

/// Largest supported group order. Keeps `order` (the envelope's `?` code) in `u32`.
pub const MAX_ORDER: u32 = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GroupSpec {
    factors: Vec<u32>,
    order: u32,
}

/// A group element as residues, one per cyclic factor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Symbol {
    residues: Vec<u32>,
}

impl Symbol {
    pub fn new(residues: Vec<u32>) -> Self {
        Symbol { residues }
    }

    pub fn residues(&self) -> &[u32] {
        &self.residues
    }
}

impl GroupSpec {
    pub fn new(factors: Vec<u32>) -> Result<Self> {
        if factors.is_empty() {
            return Err(usage("group-factors", "at least one cyclic factor is required"));
        }
        if factors.contains(&0) {
            return Err(usage("group-factors", "cyclic factors must be >= 1"));
        }
        let order = factors
            .iter()
            .try_fold(1u64, |acc, &m| {
                let next = acc * u64::from(m);
                (next <= u64::from(MAX_ORDER)).then_some(next)
            })
            .ok_or_else(|| usage("group-order", format!("order exceeds {MAX_ORDER}")))?;
        if order < 2 {
            return Err(usage("group-order", "the group must have at least two elements"));
        }
        Ok(GroupSpec {
            factors,
            order: order as u32,
        })
    }

    pub fn cyclic(m: u32) -> Result<Self> {
        Self::new(vec![m])
    }

    /// Z/2, the bit-packed fast-path group.
    pub fn z2() -> Self {
        GroupSpec {
            factors: vec![2],
            order: 2,
        }
    }

    pub fn factors(&self) -> &[u32] {
        &self.factors
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn is_z2(&self) -> bool {
        self.factors == [2]
    }

    /// Least common multiple of the factors: `exponent() * a = 0` for every `a`.
    pub fn exponent(&self) -> u64 {
        fn gcd(a: u64, b: u64) -> u64 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        self.factors
            .iter()
            .fold(1u64, |acc, &m| acc / gcd(acc, u64::from(m)) * u64::from(m))
    }

    /// Returns `Some((prime, power))` when the order is a prime power.
    pub fn prime_power(&self) -> Option<(u32, u32)> {
        let mut n = self.order;
        let mut p = 2;
        while p * p <= n && !n.is_multiple_of(p) {
            p += 1;
        }
        if !n.is_multiple_of(p) {
            p = n;
        }
        let mut k = 0;
        while n.is_multiple_of(p) {
            n /= p;
            k += 1;
        }
        (n == 1).then_some((p, k))
    }

    pub fn zero(&self) -> Symbol {
        Symbol {
            residues: vec![0; self.factors.len()],
        }
    }

    fn check(&self, s: &Symbol) -> Result<()> {
        if s.residues.len() != self.factors.len()
            || s.residues.iter().zip(&self.factors).any(|(&r, &m)| r >= m)
        {
            return Err(usage(
                "group-membership",
                format!("{:?} is not an element of {}", s.residues, self),
            ));
        }
        Ok(())
    }

    pub fn add(&self, a: &Symbol, b: &Symbol) -> Result<Symbol> {
        self.check(a)?;
        self.check(b)?;
        let residues = a
            .residues
            .iter()
            .zip(&b.residues)
            .zip(&self.factors)
            .map(|((&x, &y), &m)| (x + y) % m)
            .collect();
        Ok(Symbol { residues })
    }

    pub fn neg(&self, a: &Symbol) -> Result<Symbol> {
        self.check(a)?;
        let residues = a
            .residues
            .iter()
            .zip(&self.factors)
            .map(|(&x, &m)| (m - x) % m)
            .collect();
        Ok(Symbol { residues })
    }

    pub fn index(&self, s: &Symbol) -> Result<u32> {
        self.check(s)?;
        Ok(s
            .residues
            .iter()
            .zip(&self.factors)
            .fold(0u32, |acc, (&r, &m)| acc * m + r))
    }

    pub fn symbol_from_index(&self, k: u32) -> Result<Symbol> {
        if k >= self.order {
            return Err(usage(
                "symbol-index",
                format!("index {k} outside [0, {})", self.order),
            ));
        }
        let mut residues = vec![0; self.factors.len()];
        let mut rest = k;
        for (slot, &m) in residues.iter_mut().zip(&self.factors).rev() {
            *slot = rest % m;
            rest /= m;
        }
        Ok(Symbol { residues })
    }

    /// Addition on canonical indices. Inputs must be `< order`.
    #[inline]
    pub fn add_idx(&self, a: u32, b: u32) -> u32 {
        debug_assert!(a < self.order && b < self.order);
        if let [m] = self.factors[..] {
            let s = a + b;
            return if s >= m { s - m } else { s };
        }
        let (mut a, mut b) = (a, b);
        let mut out = 0;
        let mut weight = 1;
        for &m in self.factors.iter().rev() {
            out += ((a % m + b % m) % m) * weight;
            weight *= m;
            a /= m;
            b /= m;
        }
        out
    }

    #[inline]
    pub fn neg_idx(&self, a: u32) -> u32 {
        debug_assert!(a < self.order);
        if let [m] = self.factors[..] {
            return (m - a) % m;
        }
        let mut a = a;
        let mut out = 0;
        let mut weight = 1;
        for &m in self.factors.iter().rev() {
            out += ((m - a % m) % m) * weight;
            weight *= m;
            a /= m;
        }
        out
    }

    #[inline]
    pub fn sub_idx(&self, a: u32, b: u32) -> u32 {
        self.add_idx(a, self.neg_idx(b))
    }

    /// `c * a` for a nonnegative integer `c`.
    pub fn scale_idx(&self, a: u32, c: u64) -> u32 {
        let mut a = a;
        let mut out = 0;
        let mut weight = 1;
        for &m in self.factors.iter().rev() {
            let m64 = u64::from(m);
            let r = (u64::from(a % m) * (c % m64)) % m64;
            out += r as u32 * weight;
            weight *= m;
            a /= m;
        }
        out
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.factors.iter().map(u32::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for GroupSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let factors = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|_| usage("group-syntax", format!("bad factor {t:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        GroupSpec::new(factors)
    }
}

impl TryFrom<String> for GroupSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GroupSpec> for String {
    fn from(g: GroupSpec) -> String {
        g.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(r: &[u32]) -> Symbol {
        Symbol::new(r.to_vec())
    }

    #[test]
    fn addition_examples() {
        let z2 = GroupSpec::z2();
        assert_eq!(z2.add(&sym(&[1]), &sym(&[1])).unwrap(), sym(&[0]));
        let z3 = GroupSpec::cyclic(3).unwrap();
        assert_eq!(z3.add(&sym(&[2]), &sym(&[2])).unwrap(), sym(&[1]));
        let v4: GroupSpec = "2,2".parse().unwrap();
        assert_eq!(v4.add(&sym(&[1, 0]), &sym(&[1, 1])).unwrap(), sym(&[0, 1]));
    }

    #[test]
    fn negation_examples() {
        assert_eq!(GroupSpec::z2().neg(&sym(&[1])).unwrap(), sym(&[1]));
        let z3 = GroupSpec::cyclic(3).unwrap();
        assert_eq!(z3.neg(&sym(&[2])).unwrap(), sym(&[1]));
        let v4: GroupSpec = "2,2".parse().unwrap();
        assert_eq!(v4.neg(&sym(&[1, 1])).unwrap(), sym(&[1, 1]));
    }

    #[test]
    fn index_examples() {
        let z3 = GroupSpec::cyclic(3).unwrap();
        assert_eq!(z3.symbol_from_index(0).unwrap(), sym(&[0]));
        let v4: GroupSpec = "2,2".parse().unwrap();
        assert_eq!(v4.symbol_from_index(3).unwrap(), sym(&[1, 1]));
        assert_eq!(v4.symbol_from_index(1).unwrap(), sym(&[0, 1]));
        assert_eq!(GroupSpec::z2().symbol_from_index(1).unwrap(), sym(&[1]));
        assert!(matches!(
            v4.symbol_from_index(4),
            Err(Error::Usage { constraint: "symbol-index", .. })
        ));
    }

    #[test]
    fn mismatched_group_is_usage_error() {
        let z3 = GroupSpec::cyclic(3).unwrap();
        assert!(z3.add(&sym(&[1, 0]), &sym(&[1])).is_err());
        assert!(z3.add(&sym(&[3]), &sym(&[1])).is_err());
    }

    #[test]
    fn rejects_degenerate_groups() {
        assert!(GroupSpec::new(vec![]).is_err());
        assert!(GroupSpec::new(vec![1]).is_err());
        assert!(GroupSpec::new(vec![0, 2]).is_err());
        assert!(GroupSpec::new(vec![1, 2]).is_ok());
        assert!("2,x".parse::<GroupSpec>().is_err());
    }

    fn small_groups() -> Vec<GroupSpec> {
        let mut out = Vec::new();
        for m in 2..=16 {
            out.push(GroupSpec::cyclic(m).unwrap());
        }
        for spec in ["2,2", "2,3", "3,3", "2,2,2", "2,4", "4,2", "2,2,2,2", "1,5"] {
            out.push(spec.parse().unwrap());
        }
        out
    }

    #[test]
    fn group_axioms_exhaustive() {
        for g in small_groups() {
            let n = g.order();
            let zero = g.zero();
            for a in 0..n {
                let sa = g.symbol_from_index(a).unwrap();
                assert_eq!(g.index(&sa).unwrap(), a);
                assert_eq!(g.add(&sa, &zero).unwrap(), sa);
                assert_eq!(g.add(&sa, &g.neg(&sa).unwrap()).unwrap(), zero);
                assert_eq!(g.add(&g.neg(&sa).unwrap(), &sa).unwrap(), zero);
                assert_eq!(g.add_idx(a, g.neg_idx(a)), 0);
                for b in 0..n {
                    let sb = g.symbol_from_index(b).unwrap();
                    let ab = g.add(&sa, &sb).unwrap();
                    assert_eq!(ab, g.add(&sb, &sa).unwrap());
                    assert_eq!(g.index(&ab).unwrap(), g.add_idx(a, b));
                }
            }
            // associativity on a deterministic sample of triples
            for a in 0..n {
                let b = (a * 7 + 3) % n;
                let c = (a * 5 + 1) % n;
                assert_eq!(
                    g.add_idx(g.add_idx(a, b), c),
                    g.add_idx(a, g.add_idx(b, c))
                );
            }
        }
    }

    #[test]
    fn scale_matches_repeated_addition() {
        for g in small_groups() {
            for a in 0..g.order() {
                let mut acc = 0;
                for c in 0..20u64 {
                    assert_eq!(g.scale_idx(a, c), acc);
                    acc = g.add_idx(acc, a);
                }
                assert_eq!(g.scale_idx(a, g.exponent()), 0);
            }
        }
    }

    #[test]
    fn prime_power_detection() {
        assert_eq!(GroupSpec::z2().prime_power(), Some((2, 1)));
        assert_eq!("2,2".parse::<GroupSpec>().unwrap().prime_power(), Some((2, 2)));
        assert_eq!(GroupSpec::cyclic(9).unwrap().prime_power(), Some((3, 2)));
        assert_eq!(GroupSpec::cyclic(6).unwrap().prime_power(), None);
        assert_eq!(GroupSpec::cyclic(7).unwrap().prime_power(), Some((7, 1)));
    }

    #[test]
    fn display_roundtrip() {
        let g: GroupSpec = "2, 3".parse().unwrap();
        assert_eq!(g.to_string(), "2,3");
        assert_eq!(g.to_string().parse::<GroupSpec>().unwrap(), g);
    }
}
