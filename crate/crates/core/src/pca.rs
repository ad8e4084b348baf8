//! The probabilistic automaton `tau_eps`: `X_{n+1} = tau X_n + xi_{n+1}` with
//! i.i.d. errors that are `0` with probability `1 - eps` and uniform over the
//! nonzero symbols otherwise.
//!
//! Everything is driven through the updating function [`phi_eps`], which
//! turns one uniform `u` into the next cell value. The unit interval is
//! split as `I_? = [0, 1 - epst)` followed by `|A|` intervals `I_a` of
//! length `epst / |A|`, in canonical symbol order.

use serde::Serialize;

use crate::ca::{Boundary, Window};
use crate::error::{resource, usage, Result};
use crate::group::GroupSpec;
use crate::noise::Field;

/// `eps` together with its derived quantities `epst = eps |A| / (|A| - 1)`
/// and the percolation parameter `p = 1 - epst`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonParams {
    pub epsilon: f64,
    pub group: GroupSpec,
    pub epst: f64,
    pub p: f64,
}

impl EpsilonParams {
    /// Requires `0 < eps < (|A| - 1) / |A|`, i.e. `1 - eps > eps / (|A| - 1)`.
    pub fn new(group: GroupSpec, epsilon: f64) -> Result<Self> {
        let a = f64::from(group.order());
        let upper = (a - 1.0) / a;
        if !(epsilon > 0.0 && epsilon < upper) {
            return Err(usage(
                "epsilon-range",
                format!("epsilon = {epsilon} must lie strictly inside (0, {upper}) for |A| = {a}"),
            ));
        }
        Ok(Self::build(group, epsilon))
    }

    /// The limiting kernel `epst = 1`: every cell is a fresh uniform symbol.
    pub fn pure_noise(group: GroupSpec) -> Self {
        let a = f64::from(group.order());
        Self::build(group, (a - 1.0) / a)
    }

    fn build(group: GroupSpec, epsilon: f64) -> Self {
        let a = f64::from(group.order());
        let epst = (epsilon * a / (a - 1.0)).min(1.0);
        EpsilonParams {
            epsilon,
            group,
            epst,
            p: 1.0 - epst,
        }
    }

    pub fn order(&self) -> u32 {
        self.group.order()
    }

    /// Length of each `I_a` (and each `J_b`).
    pub fn slot(&self) -> f64 {
        self.epst / f64::from(self.order())
    }

    pub fn updating_partition(&self) -> IntervalPartition {
        IntervalPartition::new(self, PartitionStyle::Updating)
    }

    pub fn cosiness_partition(&self) -> IntervalPartition {
        IntervalPartition::new(self, PartitionStyle::Cosiness)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PartitionStyle {
    /// `I_? = [0, 1 - epst)` then `I_a`, `a` in canonical order.
    Updating,
    /// `J_b`, `b` in canonical order, covering `[0, epst)`, then `[epst, 1)`.
    Cosiness,
}

/// A split of `[0, 1)` into one "rest" interval and `|A|` labelled slots of
/// length `epst / |A|`. All intervals are half-open.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalPartition {
    pub style: PartitionStyle,
    /// `starts[a]` is the left end of the slot labelled `a`; `starts[|A|]` its right end.
    starts: Vec<f64>,
    rest: (f64, f64),
}

impl IntervalPartition {
    fn new(params: &EpsilonParams, style: PartitionStyle) -> Self {
        let order = params.order() as usize;
        let slot = params.slot();
        let (offset, rest) = match style {
            PartitionStyle::Updating => (params.p, (0.0, params.p)),
            PartitionStyle::Cosiness => (0.0, (params.epst, 1.0)),
        };
        let mut starts: Vec<f64> = (0..order).map(|a| offset + a as f64 * slot).collect();
        starts.push(match style {
            PartitionStyle::Updating => 1.0,
            PartitionStyle::Cosiness => params.epst,
        });
        IntervalPartition { style, starts, rest }
    }

    /// The slot `[lo, hi)` labelled `a`.
    pub fn slot(&self, a: u32) -> (f64, f64) {
        (self.starts[a as usize], self.starts[a as usize + 1])
    }

    /// The unlabelled interval (`I_?` or `[epst, 1)`).
    pub fn rest(&self) -> (f64, f64) {
        self.rest
    }

    /// Label of the slot containing `u`, or `None` for the rest interval.
    #[inline]
    pub fn locate(&self, u: f64) -> Option<u32> {
        let order = self.starts.len() - 1;
        let (lo, hi) = (self.starts[0], self.starts[order]);
        if u < lo || u >= hi {
            return None;
        }
        let width = (hi - lo) / order as f64;
        let mut a = (((u - lo) / width) as usize).min(order - 1);
        while a > 0 && u < self.starts[a] {
            a -= 1;
        }
        while a + 1 < order && u >= self.starts[a + 1] {
            a += 1;
        }
        Some(a as u32)
    }
}

/// `f(a | bc)`: `1 - eps` when `a = b + c`, else `eps / (|A| - 1)`.
pub fn local_prob(params: &EpsilonParams, a: u32, b: u32, c: u32) -> f64 {
    if params.group.add_idx(b, c) == a {
        1.0 - params.epsilon
    } else {
        params.epsilon / (f64::from(params.order()) - 1.0)
    }
}

/// Updating function: `b + c` on `I_?`, the label `a` on `I_a`.
#[inline]
pub fn phi_eps(params: &EpsilonParams, part: &IntervalPartition, b: u32, c: u32, u: f64) -> u32 {
    match part.locate(u) {
        Some(a) => a,
        None => params.group.add_idx(b, c),
    }
}

/// One step from `w` (at time `w.time`) to time `w.time + 1`, reading noise
/// row `w.time + 1`.
pub fn pca_step<F: Field>(params: &EpsilonParams, w: &Window, field: &F, boundary: Boundary) -> Result<Window> {
    let part = params.updating_partition();
    let n = w.time + 1;
    let len = w.len();
    let cells = match boundary {
        Boundary::Cone => {
            if len < 2 {
                return Err(resource("cone-width", "window exhausted: pca_step needs length >= 2"));
            }
            (0..len - 1)
                .map(|k| {
                    let i = w.base + k as i64;
                    phi_eps(params, &part, w.cells[k], w.cells[k + 1], field.u(n, i))
                })
                .collect()
        }
        Boundary::Torus => (0..len)
            .map(|k| {
                let i = w.base + k as i64;
                phi_eps(params, &part, w.cells[k], w.cells[(k + 1) % len], field.u(n, i))
            })
            .collect(),
    };
    Ok(Window {
        base: w.base,
        time: n,
        cells,
    })
}

/// Trajectory `[x0, X_{from+1}, ..., X_to]` with `from = x0.time`.
pub fn simulate_chain<F: Field>(
    params: &EpsilonParams,
    x0: &Window,
    field: &F,
    to_time: i64,
    boundary: Boundary,
) -> Result<Vec<Window>> {
    if to_time < x0.time {
        return Err(usage("chain-times", "to_time must not precede the start time"));
    }
    let steps = (to_time - x0.time) as usize;
    if boundary == Boundary::Cone && x0.len() < steps + 1 {
        return Err(resource(
            "cone-width",
            format!("{steps} cone steps need width >= {}, got {}", steps + 1, x0.len()),
        ));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0.clone());
    for _ in 0..steps {
        let next = pca_step(params, out.last().unwrap(), field, boundary)?;
        out.push(next);
    }
    Ok(out)
}

/// The sites a set of targets actually depends on.
///
/// Walking down from the targets, an `I_?` draw at `(m, j)` makes both
/// parents `(m-1, j)` and `(m-1, j+1)` needed; any other draw fixes the cell
/// outright. Levels are stored from `start` up to the target time with the
/// noise value of every needed site, so chains can be evaluated on just
/// these cells.
#[derive(Clone, Debug)]
pub struct DependencyCone {
    pub start: i64,
    /// `levels[k]` holds sorted `(position, u)` pairs at time `start + k`.
    levels: Vec<Vec<(i64, f64)>>,
}

impl DependencyCone {
    pub fn build<F: Field>(params: &EpsilonParams, field: &F, target_time: i64, sites: &[i64], start: i64) -> Result<Self> {
        if start > target_time {
            return Err(usage("cone-times", "start must not exceed the target time"));
        }
        let steps = (target_time - start) as usize;
        let mut levels: Vec<Vec<(i64, f64)>> = vec![Vec::new(); steps + 1];
        let mut current: Vec<i64> = sites.to_vec();
        current.sort_unstable();
        current.dedup();
        for k in (0..=steps).rev() {
            let n = start + k as i64;
            if k == 0 {
                levels[0] = current.iter().map(|&j| (j, f64::NAN)).collect();
                break;
            }
            let mut next = Vec::new();
            let mut row = Vec::with_capacity(current.len());
            for &j in &current {
                let u = field.u(n, j);
                row.push((j, u));
                if u < params.p {
                    next.push(j);
                    next.push(j + 1);
                }
            }
            levels[k] = row;
            next.dedup();
            current = next;
        }
        Ok(DependencyCone { start, levels })
    }

    pub fn target_time(&self) -> i64 {
        self.start + self.levels.len() as i64 - 1
    }

    /// Number of needed sites at each level, bottom first.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    /// Needed positions at time `start + k`.
    pub fn positions(&self, k: usize) -> impl Iterator<Item = i64> + '_ {
        self.levels[k].iter().map(|&(j, _)| j)
    }

    /// Evaluates a chain (or the envelope, with `unknown = Some(code)`) on the
    /// needed cells. `init(j)` gives the cell at `(start, j)`. Returns values
    /// per level aligned with [`positions`](Self::positions).
    pub fn evaluate(
        &self,
        params: &EpsilonParams,
        unknown: Option<u32>,
        init: impl Fn(i64) -> u32,
    ) -> Vec<Vec<u32>> {
        let part = params.updating_partition();
        let mut out: Vec<Vec<u32>> = Vec::with_capacity(self.levels.len());
        out.push(self.levels[0].iter().map(|&(j, _)| init(j)).collect());
        for k in 1..self.levels.len() {
            let below = &self.levels[k - 1];
            let vals_below = &out[k - 1];
            let lookup = |j: i64| -> u32 {
                let idx = below
                    .binary_search_by_key(&j, |&(p, _)| p)
                    .expect("parent of an I_? cell is always needed");
                vals_below[idx]
            };
            let row = self.levels[k]
                .iter()
                .map(|&(j, u)| match part.locate(u) {
                    Some(a) => a,
                    None => {
                        let (b, c) = (lookup(j), lookup(j + 1));
                        match unknown {
                            Some(q) if b == q || c == q => q,
                            _ => params.group.add_idx(b, c),
                        }
                    }
                })
                .collect();
            out.push(row);
        }
        out
    }

    /// Values at the target level for the requested sites, in input order.
    pub fn read_targets(&self, values: &[Vec<u32>], sites: &[i64]) -> Vec<u32> {
        let top = self.levels.len() - 1;
        sites
            .iter()
            .map(|&j| {
                let idx = self.levels[top]
                    .binary_search_by_key(&j, |&(p, _)| p)
                    .expect("target is in the cone");
                values[top][idx]
            })
            .collect()
    }
}

/// Cells at `(target_time, sites)` of the chain started from the configuration
/// `init` at time `start`, evaluated on the dependency cone only.
pub fn evaluate_lazy<F: Field>(
    params: &EpsilonParams,
    field: &F,
    start: i64,
    init: impl Fn(i64) -> u32,
    target_time: i64,
    sites: &[i64],
) -> Result<Vec<u32>> {
    let cone = DependencyCone::build(params, field, target_time, sites, start)?;
    let vals = cone.evaluate(params, None, init);
    Ok(cone.read_targets(&vals, sites))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{chi_square_test, DiscreteDistribution, FrequencyTable};
    use crate::noise::{ConstField, NoiseField};

    fn z2(eps: f64) -> EpsilonParams {
        EpsilonParams::new(GroupSpec::z2(), eps).unwrap()
    }

    #[test]
    fn params_derivation() {
        let p = z2(0.25);
        assert_eq!(p.epst, 0.5);
        assert_eq!(p.p, 0.5);
        let p3 = EpsilonParams::new(GroupSpec::cyclic(3).unwrap(), 0.4).unwrap();
        assert!((p3.epst - 0.6).abs() < 1e-15);
        assert!(EpsilonParams::new(GroupSpec::z2(), 0.5).is_err());
        assert!(EpsilonParams::new(GroupSpec::z2(), 0.0).is_err());
        assert!(EpsilonParams::new(GroupSpec::z2(), f64::NAN).is_err());
        assert!(EpsilonParams::new(GroupSpec::cyclic(3).unwrap(), 0.6).is_ok());
    }

    #[test]
    fn local_prob_examples() {
        let p = z2(0.25);
        assert_eq!(local_prob(&p, 1, 0, 1), 0.75);
        assert_eq!(local_prob(&p, 0, 0, 1), 0.25);
        for g in [GroupSpec::cyclic(3).unwrap(), "2,2".parse().unwrap()] {
            let p = EpsilonParams::new(g.clone(), 0.3).unwrap();
            for b in 0..g.order() {
                for c in 0..g.order() {
                    let s: f64 = (0..g.order()).map(|a| local_prob(&p, a, b, c)).sum();
                    assert!((s - 1.0).abs() < 1e-15);
                    for a in 0..g.order() {
                        // minoration f(a|bc) >= epst / |A|
                        assert!(local_prob(&p, a, b, c) >= p.slot() - 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn phi_examples() {
        let p = z2(0.25);
        let part = p.updating_partition();
        assert_eq!(part.slot(0), (0.5, 0.75));
        assert_eq!(part.slot(1), (0.75, 1.0));
        assert_eq!(phi_eps(&p, &part, 1, 1, 0.3), 0);
        assert_eq!(phi_eps(&p, &part, 1, 1, 0.8), 1);
        assert_eq!(phi_eps(&p, &part, 1, 1, 0.5), 0);
        assert_eq!(phi_eps(&p, &part, 0, 0, 0.75), 1);
    }

    #[test]
    fn phi_pushforward_is_local_prob() {
        // exact interval-length accounting
        for (g, eps) in [
            (GroupSpec::z2(), 0.25),
            (GroupSpec::cyclic(3).unwrap(), 0.4),
            ("2,2".parse::<GroupSpec>().unwrap(), 0.1),
            (GroupSpec::cyclic(5).unwrap(), 0.7),
        ] {
            let p = EpsilonParams::new(g.clone(), eps).unwrap();
            let part = p.updating_partition();
            for b in 0..g.order() {
                for c in 0..g.order() {
                    let mut mass = vec![0.0; g.order() as usize];
                    let (lo, hi) = part.rest();
                    mass[g.add_idx(b, c) as usize] += hi - lo;
                    for a in 0..g.order() {
                        let (lo, hi) = part.slot(a);
                        mass[a as usize] += hi - lo;
                        assert_eq!(phi_eps(&p, &part, b, c, lo), a);
                    }
                    for a in 0..g.order() {
                        assert!((mass[a as usize] - local_prob(&p, a, b, c)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn phi_law_monte_carlo() {
        let p = z2(0.25);
        let part = p.updating_partition();
        let f = NoiseField::new(5);
        let n = 1_000_000;
        let ones = (0..n).filter(|&i| phi_eps(&p, &part, 0, 1, f.u(0, i)) == 1).count();
        assert!((ones as f64 / n as f64 - 0.75).abs() < 0.002);
    }

    #[test]
    fn forced_deterministic_branch_is_tau() {
        let g = GroupSpec::cyclic(3).unwrap();
        let p = EpsilonParams::new(g.clone(), 0.2).unwrap();
        let w = Window::new(&g, 4, 10, vec![2, 0, 1, 1, 2]).unwrap();
        let stepped = pca_step(&p, &w, &ConstField(0.0), Boundary::Cone).unwrap();
        let tau = crate::ca::tau_step(&g, &w).unwrap();
        assert_eq!(stepped.cells, tau.cells);
        assert_eq!((stepped.base, stepped.time), (4, 11));
    }

    #[test]
    fn pure_noise_ignores_input() {
        let g = GroupSpec::z2();
        let p = EpsilonParams::pure_noise(g.clone());
        assert_eq!(p.p, 0.0);
        let f = NoiseField::new(31);
        // contingency of (input cell pair, output) must show independence
        let mut counts = [[0u64; 2]; 4];
        for r in 0..10_000 {
            let b = (r % 2) as u32;
            let c = ((r / 2) % 2) as u32;
            let w = Window::new(&g, 0, r, vec![b, c]).unwrap();
            let out = pca_step(&p, &w, &f, Boundary::Cone).unwrap();
            counts[(2 * b + c) as usize][out.cells[0] as usize] += 1;
        }
        let row_tot: Vec<f64> = counts.iter().map(|r| (r[0] + r[1]) as f64).collect();
        let col_tot = [0, 1].map(|k| counts.iter().map(|r| r[k]).sum::<u64>() as f64);
        let n = 10_000.0;
        let stat: f64 = (0..4)
            .flat_map(|i| (0..2).map(move |k| (i, k)))
            .map(|(i, k)| {
                let e = row_tot[i] * col_tot[k] / n;
                (counts[i][k] as f64 - e).powi(2) / e
            })
            .sum();
        assert!(crate::analysis::chi_square_sf(stat, 3) > 0.01);
    }

    #[test]
    fn cone_errors_and_zero_steps() {
        let g = GroupSpec::z2();
        let p = z2(0.2);
        let f = NoiseField::new(1);
        let w = Window::new(&g, 0, 0, vec![1]).unwrap();
        assert!(matches!(
            pca_step(&p, &w, &f, Boundary::Cone),
            Err(crate::Error::Resource { .. })
        ));
        assert_eq!(simulate_chain(&p, &w, &f, 0, Boundary::Cone).unwrap(), vec![w.clone()]);
        assert!(simulate_chain(&p, &w, &f, 3, Boundary::Cone).is_err());
    }

    #[test]
    fn chain_reproducible_and_seed_sensitive() {
        let g = GroupSpec::z2();
        let p = z2(0.2);
        let x0 = Window::new(&g, 0, -30, vec![0; 64]).unwrap();
        let a = simulate_chain(&p, &x0, &NoiseField::new(3), 0, Boundary::Torus).unwrap();
        let b = simulate_chain(&p, &x0, &NoiseField::new(3), 0, Boundary::Torus).unwrap();
        assert_eq!(a, b);
        let mut differ = 0;
        for s in 0..200 {
            let c = simulate_chain(&p, &x0, &NoiseField::new(1000 + s), -29, Boundary::Torus).unwrap();
            let d = simulate_chain(&p, &x0, &NoiseField::new(5000 + s), -29, Boundary::Torus).unwrap();
            if c[1] != d[1] {
                differ += 1;
            }
        }
        // per-site disagreement is at least epst (1 - epst) ... any site suffices
        assert!(differ >= 195);
    }

    #[test]
    fn uniform_is_invariant_exact() {
        // enumerate A^L for Z/2, L = 12, push one cone step, integrate the noise exactly
        let p = z2(0.3);
        let len = 12usize;
        let mut law = vec![0.0f64; 1 << (len - 1)];
        for x in 0..(1u32 << len) {
            let tau: Vec<u32> = (0..len - 1).map(|i| (x >> i ^ x >> (i + 1)) & 1).collect();
            for y in 0..(1u32 << (len - 1)) {
                let prob: f64 = (0..len - 1)
                    .map(|i| local_prob(&p, y >> i & 1, tau[i], 0))
                    .product();
                law[y as usize] += prob / f64::from(1u32 << len);
            }
        }
        let u = 1.0 / f64::from(1u32 << (len - 1));
        assert!(law.iter().all(|&q| (q - u).abs() < 1e-15));
    }

    #[test]
    fn stationarity_monte_carlo() {
        let g = GroupSpec::z2();
        let p = z2(0.1);
        let reps = 100_000;
        let mut table = FrequencyTable::with_bins(16);
        for r in 0..reps {
            let f = NoiseField::new(crate::noise::child_seed(77, r));
            let cells: Vec<u32> = (0..20).map(|i| (f.u(-1, i) * 2.0) as u32).collect();
            let x = Window::new(&g, 0, -1, cells).unwrap();
            let y = pca_step(&p, &x, &f, Boundary::Torus).unwrap();
            let key = (0..4).fold(0usize, |k, i| 2 * k + y.cells[i] as usize);
            table.record(key);
        }
        let res = chi_square_test(&table, &DiscreteDistribution::uniform(16)).unwrap();
        assert!(res.passes(0.01), "{res:?}");
    }

    #[test]
    fn lazy_matches_full_simulation() {
        for (g, eps) in [(GroupSpec::z2(), 0.15), (GroupSpec::cyclic(3).unwrap(), 0.3)] {
            let p = EpsilonParams::new(g.clone(), eps).unwrap();
            for s in 0..50u64 {
                let f = NoiseField::new(900 + s);
                let steps = 25usize;
                let cells: Vec<u32> = (0..40).map(|i| ((i * 7 + s as usize) % g.order() as usize) as u32).collect();
                let x0 = Window::new(&g, -3, -(steps as i64), cells.clone()).unwrap();
                let traj = simulate_chain(&p, &x0, &f, 0, Boundary::Cone).unwrap();
                let sites: Vec<i64> = (-3..10).collect();
                let lazy = evaluate_lazy(&p, &f, -(steps as i64), |j| cells[(j + 3) as usize], 0, &sites).unwrap();
                let top = traj.last().unwrap();
                let full: Vec<u32> = sites.iter().map(|&j| top.at(j)).collect();
                assert_eq!(lazy, full);
            }
        }
    }
}
