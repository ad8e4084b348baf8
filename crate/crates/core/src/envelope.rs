//! The envelope automaton over `A ∪ {?}`.
//!
//! A `?` cell stands for "not yet determined by the noise". The envelope runs
//! on the same uniforms as the chain: on `I_?` it propagates `?` from either
//! parent, on `I_a` it writes `a` regardless of the parents. Started from the
//! all-`?` configuration, every cell it does determine agrees with every
//! chain sharing the noise.
//!
//! Envelope windows reuse [`Window`], with `?` encoded as the index `|A|`.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::ca::{Boundary, Window};
use crate::error::{resource, usage, Result};
use crate::noise::Field;
use crate::pca::{local_prob, EpsilonParams, IntervalPartition};

/// A symbol of `A` or the mark `?`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvSymbol {
    Known(u32),
    Unknown,
}

impl EnvSymbol {
    /// Packed cell code: the symbol index, or `order` for `?`.
    pub fn code(self, order: u32) -> u32 {
        match self {
            EnvSymbol::Known(a) => {
                debug_assert!(a < order);
                a
            }
            EnvSymbol::Unknown => order,
        }
    }

    pub fn from_code(code: u32, order: u32) -> Self {
        if code >= order {
            EnvSymbol::Unknown
        } else {
            EnvSymbol::Known(code)
        }
    }

    pub fn is_unknown(self) -> bool {
        self == EnvSymbol::Unknown
    }
}

impl fmt::Display for EnvSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSymbol::Known(a) => write!(f, "{a}"),
            EnvSymbol::Unknown => f.write_str("?"),
        }
    }
}

impl Serialize for EnvSymbol {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// `f_env(a | bc)`.
pub fn f_env(params: &EpsilonParams, a: EnvSymbol, b: EnvSymbol, c: EnvSymbol) -> f64 {
    let open = b.is_unknown() || c.is_unknown();
    match (a, b, c) {
        (EnvSymbol::Known(a), EnvSymbol::Known(b), EnvSymbol::Known(c)) => local_prob(params, a, b, c),
        (EnvSymbol::Unknown, _, _) if !open => 0.0,
        (EnvSymbol::Known(_), _, _) => params.epsilon / (f64::from(params.order()) - 1.0),
        (EnvSymbol::Unknown, _, _) => 1.0 - params.epst,
    }
}

/// Checks the closed table against its definition: for `a ∈ A`, the
/// minimum of `f(a | b'c')` over completions `b'c'` of `bc`, and the
/// leftover mass for `?`.
pub fn verify_env_table(params: &EpsilonParams) -> bool {
    let order = params.order();
    let syms: Vec<EnvSymbol> = (0..=order).map(|c| EnvSymbol::from_code(c, order)).collect();
    let completions = |s: EnvSymbol| -> Vec<u32> {
        match s {
            EnvSymbol::Known(a) => vec![a],
            EnvSymbol::Unknown => (0..order).collect(),
        }
    };
    for &b in &syms {
        for &c in &syms {
            let mut known_mass = 0.0;
            for a in 0..order {
                let mut min = f64::INFINITY;
                for &bb in &completions(b) {
                    for &cc in &completions(c) {
                        min = min.min(local_prob(params, a, bb, cc));
                    }
                }
                if (f_env(params, EnvSymbol::Known(a), b, c) - min).abs() > 1e-15 {
                    return false;
                }
                known_mass += min;
            }
            let q = f_env(params, EnvSymbol::Unknown, b, c);
            if (q - (1.0 - known_mass)).abs() > 1e-12 {
                return false;
            }
        }
    }
    true
}

/// `phi_env` on packed codes.
#[inline]
pub fn phi_env_code(params: &EpsilonParams, part: &IntervalPartition, b: u32, c: u32, u: f64) -> u32 {
    let q = params.order();
    match part.locate(u) {
        Some(a) => a,
        None if b == q || c == q => q,
        None => params.group.add_idx(b, c),
    }
}

pub fn phi_env(params: &EpsilonParams, b: EnvSymbol, c: EnvSymbol, u: f64) -> EnvSymbol {
    let q = params.order();
    let part = params.updating_partition();
    EnvSymbol::from_code(phi_env_code(params, &part, b.code(q), c.code(q), u), q)
}

/// All-`?` envelope window.
pub fn all_unknown(params: &EpsilonParams, base: i64, time: i64, width: usize) -> Window {
    Window {
        base,
        time,
        cells: vec![params.order(); width],
    }
}

/// One envelope step from `w.time` to `w.time + 1`.
pub fn env_step<F: Field>(params: &EpsilonParams, w: &Window, field: &F, boundary: Boundary) -> Result<Window> {
    let part = params.updating_partition();
    let n = w.time + 1;
    let len = w.len();
    let out = match boundary {
        Boundary::Cone => {
            if len < 2 {
                return Err(resource("cone-width", "envelope window exhausted"));
            }
            len - 1
        }
        Boundary::Torus => len,
    };
    let cells = (0..out)
        .map(|k| {
            let i = w.base + k as i64;
            phi_env_code(params, &part, w.cells[k], w.cells[(k + 1) % len], field.u(n, i))
        })
        .collect();
    Ok(Window {
        base: w.base,
        time: n,
        cells,
    })
}

/// Envelope trajectory from all-`?` on `[base, base + width - 1]` at time
/// `n0` up to time `to_time`.
pub fn simulate_envelope<F: Field>(
    params: &EpsilonParams,
    n0: i64,
    to_time: i64,
    base: i64,
    width: usize,
    field: &F,
    boundary: Boundary,
) -> Result<Vec<Window>> {
    if to_time < n0 {
        return Err(usage("envelope-times", "to_time must not precede n0"));
    }
    let steps = (to_time - n0) as usize;
    if width == 0 || (boundary == Boundary::Cone && width < steps + 1) {
        return Err(resource(
            "cone-width",
            format!("{steps} cone steps need width >= {}, got {width}", steps + 1),
        ));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(all_unknown(params, base, n0, width));
    for _ in 0..steps {
        let next = env_step(params, out.last().unwrap(), field, boundary)?;
        out.push(next);
    }
    Ok(out)
}

/// Fraction of `?` cells in an envelope window.
pub fn question_density(params: &EpsilonParams, w: &Window) -> f64 {
    let q = params.order();
    w.cells.iter().filter(|&&c| c == q).count() as f64 / w.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupSpec;
    use crate::noise::NoiseField;
    use crate::pca::simulate_chain;
    use EnvSymbol::{Known, Unknown};

    fn z2(eps: f64) -> EpsilonParams {
        EpsilonParams::new(GroupSpec::z2(), eps).unwrap()
    }

    #[test]
    fn f_env_examples() {
        let p = z2(0.25);
        assert_eq!(f_env(&p, Unknown, Known(0), Known(1)), 0.0);
        assert_eq!(f_env(&p, Known(1), Unknown, Known(0)), 0.25);
        assert_eq!(f_env(&p, Unknown, Unknown, Unknown), 0.5);
    }

    #[test]
    fn table_matches_min_over_completions() {
        for (g, eps) in [
            (GroupSpec::z2(), 0.1),
            (GroupSpec::z2(), 0.4),
            (GroupSpec::cyclic(3).unwrap(), 0.5),
            ("2,2".parse().unwrap(), 0.3),
            (GroupSpec::cyclic(5).unwrap(), 0.7),
        ] {
            let p = EpsilonParams::new(g, eps).unwrap();
            assert!(verify_env_table(&p));
        }
    }

    #[test]
    fn normalization() {
        let p = EpsilonParams::new(GroupSpec::cyclic(3).unwrap(), 0.45).unwrap();
        let q = p.order();
        for b in 0..=q {
            for c in 0..=q {
                let (b, c) = (EnvSymbol::from_code(b, q), EnvSymbol::from_code(c, q));
                let s: f64 = (0..=q).map(|a| f_env(&p, EnvSymbol::from_code(a, q), b, c)).sum();
                assert!((s - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn phi_env_examples() {
        let p = z2(0.25);
        assert_eq!(phi_env(&p, Known(1), Known(1), 0.2), Known(0));
        assert_eq!(phi_env(&p, Unknown, Known(1), 0.1), Unknown);
        assert_eq!(phi_env(&p, Unknown, Known(1), 0.8), Known(1));
        assert_eq!(phi_env(&p, Known(0), Unknown, 0.6), Known(0));
    }

    #[test]
    fn phi_env_pushforward() {
        let p = EpsilonParams::new(GroupSpec::cyclic(3).unwrap(), 0.3).unwrap();
        let part = p.updating_partition();
        let q = p.order();
        for b in 0..=q {
            for c in 0..=q {
                let mut mass = vec![0.0; q as usize + 1];
                let (lo, hi) = part.rest();
                mass[phi_env_code(&p, &part, b, c, lo) as usize] += hi - lo;
                for a in 0..q {
                    let (lo, hi) = part.slot(a);
                    mass[phi_env_code(&p, &part, b, c, lo) as usize] += hi - lo;
                }
                for a in 0..=q {
                    let expect = f_env(
                        &p,
                        EnvSymbol::from_code(a, q),
                        EnvSymbol::from_code(b, q),
                        EnvSymbol::from_code(c, q),
                    );
                    assert!((mass[a as usize] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn first_step_from_all_unknown() {
        let p = z2(0.25);
        let f = NoiseField::new(4);
        let traj = simulate_envelope(&p, -10, -9, 0, 20, &f, Boundary::Cone).unwrap();
        for (k, &c) in traj[1].cells.iter().enumerate() {
            assert_eq!(c == 2, f.u(-9, k as i64) < p.p);
        }
    }

    #[test]
    fn deeper_start_refines() {
        let p = EpsilonParams::new(GroupSpec::cyclic(3).unwrap(), 0.35).unwrap();
        let q = p.order();
        for s in 0..200 {
            let f = NoiseField::new(s);
            let a = simulate_envelope(&p, -20, 0, 0, 21, &f, Boundary::Cone).unwrap();
            let b = simulate_envelope(&p, -27, 0, 0, 28, &f, Boundary::Cone).unwrap();
            for n in 0..=20usize {
                let shallow = &a[n];
                let deep = &b[n + 7];
                for (k, &v) in shallow.cells.iter().enumerate() {
                    if v != q {
                        assert_eq!(deep.cells[k], v);
                    }
                }
            }
        }
    }

    #[test]
    fn envelope_sandwiches_chain() {
        let p = z2(0.3);
        let q = p.order();
        for s in 0..200u64 {
            let f = NoiseField::new(s);
            let x0 = Window {
                base: 0,
                time: -30,
                cells: (0..31).map(|i| (NoiseField::new(!s).u(0, i) < 0.5) as u32).collect(),
            };
            let chain = simulate_chain(&p, &x0, &f, 0, Boundary::Cone).unwrap();
            let env = simulate_envelope(&p, -30, 0, 0, 31, &f, Boundary::Cone).unwrap();
            for (x, e) in chain.iter().zip(&env) {
                for (&xv, &ev) in x.cells.iter().zip(&e.cells) {
                    assert!(ev == q || ev == xv);
                }
            }
        }
    }

    #[test]
    fn narrow_cone_is_a_resource_error() {
        let p = z2(0.3);
        let err = simulate_envelope(&p, -10, 0, 0, 5, &NoiseField::new(1), Boundary::Cone).unwrap_err();
        assert!(matches!(err, crate::Error::Resource { .. }));
    }
}
