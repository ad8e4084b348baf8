//! Oriented site percolation driven by the noise field.
//!
//! Site `(n, i)` is open iff `U_n(i) < p`, and edges point from `(n, i)` to
//! `(n+1, i)` and `(n+1, i-1)`. With `p = 1 - epst` this is exactly the
//! `I_?` event of the updating function, which is what ties percolation to
//! the envelope automaton.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::wilson_interval;
use crate::bits::BitRow;
use crate::error::{usage, Result};
use crate::noise::{Field, NoiseField};

#[derive(Clone, Debug)]
pub struct PercConfig<F = NoiseField> {
    pub p: f64,
    pub field: F,
}

impl<F: Field> PercConfig<F> {
    pub fn new(p: f64, field: F) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(usage("percolation-p", format!("p must lie in [0, 1], got {p}")));
        }
        Ok(PercConfig { p, field })
    }

    #[inline]
    pub fn is_open(&self, n: i64, i: i64) -> bool {
        self.field.u(n, i) < self.p
    }
}

/// Sites leading to a target `(n, i)`, level by level downwards.
///
/// Level `m` is stored as a bitset over offsets `0..=n-m` relative to `i`,
/// since every site leading to the target lies in `[i, i + (n - m)]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackwardCluster {
    pub target: (i64, i64),
    levels: Vec<Vec<u64>>,
    /// Deepest level computed.
    pub exhausted_at: i64,
    /// No empty level was found within the depth cap.
    pub truncated: bool,
}

impl BackwardCluster {
    fn offset_bits(&self, m: i64) -> Option<&[u64]> {
        let d = self.target.0 - m;
        if d < 0 {
            return None;
        }
        self.levels.get(d as usize).map(Vec::as_slice)
    }

    /// Whether `(m, j)` leads to the target, for levels down to `exhausted_at`.
    pub fn leads(&self, m: i64, j: i64) -> bool {
        let o = j - self.target.1;
        match self.offset_bits(m) {
            Some(bits) if o >= 0 && o <= self.target.0 - m => bits[o as usize / 64] >> (o % 64) & 1 == 1,
            _ => false,
        }
    }

    /// Leading positions at level `m`, ascending.
    pub fn level(&self, m: i64) -> Vec<i64> {
        let Some(bits) = self.offset_bits(m) else {
            return Vec::new();
        };
        let i = self.target.1;
        bits.iter()
            .enumerate()
            .flat_map(|(w, &word)| (0..64).filter(move |b| word >> b & 1 == 1).map(move |b| i + (w * 64 + b) as i64))
            .collect()
    }

    /// Number of levels computed, target level included.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn size(&self) -> u64 {
        self.levels
            .iter()
            .flat_map(|l| l.iter())
            .map(|w| u64::from(w.count_ones()))
            .sum()
    }

    pub fn horizon(&self) -> Horizon {
        if self.truncated {
            Horizon::Truncated {
                searched_to: self.exhausted_at,
            }
        } else {
            Horizon::Found(self.exhausted_at)
        }
    }
}

/// Greatest level `m <= n` with no site leading to `(n, i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Found(i64),
    Truncated { searched_to: i64 },
}

impl Horizon {
    pub fn level(self) -> Option<i64> {
        match self {
            Horizon::Found(m) => Some(m),
            Horizon::Truncated { .. } => None,
        }
    }
}

/// Level-synchronous backward sweep from `(n, i)`, at most `depth_cap`
/// levels below `n`.
pub fn backward_cluster<F: Field>(c: &PercConfig<F>, n: i64, i: i64, depth_cap: u64) -> BackwardCluster {
    let mut levels = vec![vec![u64::from(c.is_open(n, i))]];
    let mut d = 0u64;
    while levels[d as usize].iter().any(|&w| w != 0) {
        if d == depth_cap {
            return BackwardCluster {
                target: (n, i),
                levels,
                exhausted_at: n - d as i64,
                truncated: true,
            };
        }
        d += 1;
        let m = n - d as i64;
        let prev = &levels[d as usize - 1];
        // candidate offset o: prev[o] (straight edge) or prev[o - 1] (diagonal edge)
        let nw = (d as usize + 1).div_ceil(64);
        let mut next = vec![0u64; nw];
        for w in 0..nw {
            let here = prev.get(w).copied().unwrap_or(0);
            let carry = if w > 0 { prev[w - 1] >> 63 } else { 0 };
            let mut cand = here | (here << 1) | carry;
            let mut open = 0u64;
            while cand != 0 {
                let b = cand.trailing_zeros();
                cand &= cand - 1;
                if c.is_open(m, i + (w * 64) as i64 + i64::from(b)) {
                    open |= 1 << b;
                }
            }
            next[w] = open;
        }
        levels.push(next);
    }
    BackwardCluster {
        target: (n, i),
        levels,
        exhausted_at: n - d as i64,
        truncated: false,
    }
}

pub fn horizon_n0<F: Field>(c: &PercConfig<F>, n: i64, i: i64, depth_cap: u64) -> Horizon {
    backward_cluster(c, n, i, depth_cap).horizon()
}

/// Open sites of a rectangle `[n_lo, n_hi] x [base, base + width - 1]`.
#[derive(Clone, Debug)]
pub struct OpenGrid {
    pub n_lo: i64,
    pub base: i64,
    rows: Vec<BitRow>,
}

impl OpenGrid {
    pub fn new<F: Field>(c: &PercConfig<F>, n_lo: i64, n_hi: i64, base: i64, width: usize) -> Self {
        assert!(n_hi >= n_lo && width >= 1);
        let rows = (n_lo..=n_hi)
            .map(|n| BitRow::from_fn(width, |k| c.is_open(n, base + k as i64)))
            .collect();
        OpenGrid { n_lo, base, rows }
    }

    pub fn row(&self, n: i64) -> &BitRow {
        &self.rows[(n - self.n_lo) as usize]
    }

    pub fn n_hi(&self) -> i64 {
        self.n_lo + self.rows.len() as i64 - 1
    }
}

/// For each level `m` in `[from, grid.n_hi()]`, the sites of the shrinking
/// cone `[base, base + width - 1 - (m - from)]` reached by an open path
/// starting at some open site of level `from`.
pub fn reached_from_level(grid: &OpenGrid, from: i64) -> Vec<BitRow> {
    let mut out = vec![grid.row(from).clone()];
    for m in from + 1..=grid.n_hi() {
        let prev = out.last().unwrap();
        let len = prev.len() - 1;
        let spread = prev.or(&prev.rotate_down()).truncated(len);
        out.push(grid.row(m).truncated(len).and(&spread));
    }
    out
}

/// Direction of the survival sweep from the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `(0, 0)` leads to some site at level `d`.
    Forward,
    /// Some site at level `-d` leads to `(0, 0)`.
    Backward,
}

/// Per-depth survival frequencies from the origin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub p: f64,
    pub depth: u64,
    pub width: usize,
    pub replicas: u64,
    pub seed: u64,
    pub direction: Direction,
    /// `alive[d]`: replicas with an open path spanning `d` levels.
    pub alive: Vec<u64>,
}

impl SurvivalCurve {
    pub fn survival(&self, d: usize) -> f64 {
        self.alive[d] as f64 / self.replicas as f64
    }

    pub fn estimate(&self) -> f64 {
        self.survival(self.depth as usize)
    }

    pub fn interval(&self) -> (f64, f64) {
        wilson_interval(self.alive[self.depth as usize], self.replicas, 0.95)
    }
}

/// Number of levels an open path from the origin survives on a width-`width`
/// torus, capped at `depth`; `None` if the origin is closed.
pub fn survival_run<F: Field>(c: &PercConfig<F>, depth: u64, width: usize, direction: Direction) -> Option<u64> {
    if !c.is_open(0, 0) {
        return None;
    }
    let mut row = BitRow::zeros(width);
    row.set(0, true);
    for d in 1..=depth {
        let (n, spread) = match direction {
            Direction::Forward => (d as i64, row.or(&row.rotate_down())),
            Direction::Backward => (-(d as i64), row.or(&row.rotate_up())),
        };
        let mut next = BitRow::zeros(width);
        for k in spread.ones() {
            if c.is_open(n, k as i64) {
                next.set(k, true);
            }
        }
        if !next.any() {
            return Some(d - 1);
        }
        row = next;
    }
    Some(depth)
}

/// Survival curve over `replicas` fields `NoiseField::new(seed).child(r)`.
pub fn survival_estimate(
    p: f64,
    depth: u64,
    width: usize,
    replicas: u64,
    seed: u64,
    direction: Direction,
) -> Result<SurvivalCurve> {
    if replicas == 0 {
        return Err(usage("replicas", "at least one replica is required"));
    }
    if width < 2 {
        return Err(usage("torus-width", "survival needs a torus of width >= 2"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(usage("percolation-p", format!("p must lie in [0, 1], got {p}")));
    }
    let root = NoiseField::new(seed);
    let reached: Vec<Option<u64>> = (0..replicas)
        .into_par_iter()
        .map(|r| survival_run(&PercConfig { p, field: root.child(r) }, depth, width, direction))
        .collect();
    let mut alive = vec![0u64; depth as usize + 1];
    for d in reached.into_iter().flatten() {
        for a in &mut alive[..=d as usize] {
            *a += 1;
        }
    }
    Ok(SurvivalCurve {
        p,
        depth,
        width,
        replicas,
        seed,
        direction,
        alive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::FnField;
    use std::collections::BTreeSet;

    #[test]
    fn extreme_p() {
        let f = NoiseField::new(3);
        let closed = PercConfig::new(0.0, f).unwrap();
        let open = PercConfig::new(1.0, f).unwrap();
        for n in -20..20 {
            for i in -20..20 {
                assert!(!closed.is_open(n, i));
                assert!(open.is_open(n, i));
            }
        }
        assert!(PercConfig::new(1.5, f).is_err());
    }

    #[test]
    fn open_fraction() {
        let c = PercConfig::new(0.7, NoiseField::new(11)).unwrap();
        let mut open = 0u64;
        for n in 0..1000 {
            for i in 0..1000 {
                open += u64::from(c.is_open(n, i));
            }
        }
        let frac = open as f64 / 1e6;
        assert!((frac - 0.7).abs() < 0.002, "{frac}");
    }

    #[test]
    fn closed_target_gives_empty_cluster() {
        let c = PercConfig::new(0.0, NoiseField::new(1)).unwrap();
        let cl = backward_cluster(&c, 5, -3, 100);
        assert_eq!(cl.horizon(), Horizon::Found(5));
        assert!(cl.level(5).is_empty());
    }

    // 4x4 fixture, levels 0..=3 top to bottom, positions 0..=3; target (3, 0).
    //   level 3: 1 . . .
    //   level 2: 1 1 . .
    //   level 1: . 1 1 1
    //   level 0: 1 . 1 1
    #[test]
    fn hand_drawn_fixture() {
        let open: BTreeSet<(i64, i64)> = [(3, 0), (2, 0), (2, 1), (1, 1), (1, 2), (1, 3), (0, 0), (0, 2), (0, 3)]
            .into_iter()
            .collect();
        let field = FnField(move |n, i| if open.contains(&(n, i)) { 0.0 } else { 1.0 });
        let c = PercConfig::new(0.5, field).unwrap();
        let cl = backward_cluster(&c, 3, 0, 10);
        assert_eq!(cl.level(3), vec![0]);
        assert_eq!(cl.level(2), vec![0, 1]);
        assert_eq!(cl.level(1), vec![1, 2]);
        assert_eq!(cl.level(0), vec![2, 3]);
        assert_eq!(cl.level(-1), Vec::<i64>::new());
        assert_eq!(cl.horizon(), Horizon::Found(-1));
    }

    fn forward_bfs<F: Field>(c: &PercConfig<F>, from: (i64, i64), to_level: i64) -> BTreeSet<(i64, i64)> {
        let mut seen = BTreeSet::new();
        if !c.is_open(from.0, from.1) {
            return seen;
        }
        let mut stack = vec![from];
        while let Some((n, i)) = stack.pop() {
            if !seen.insert((n, i)) || n == to_level {
                continue;
            }
            for s in [(n + 1, i), (n + 1, i - 1)] {
                if c.is_open(s.0, s.1) {
                    stack.push(s);
                }
            }
        }
        seen
    }

    #[test]
    fn cluster_matches_forward_search() {
        for s in 0..60 {
            let c = PercConfig::new(0.62, NoiseField::new(s)).unwrap();
            let (n, i) = (4, -2);
            let cl = backward_cluster(&c, n, i, 12);
            for m in n - 12..=n {
                for j in i - 2..=i + 16 {
                    let reaches = forward_bfs(&c, (m, j), n).contains(&(n, i));
                    if m >= cl.exhausted_at {
                        assert_eq!(cl.leads(m, j), reaches, "seed {s} site ({m},{j})");
                    }
                }
            }
            for m in cl.exhausted_at..=n {
                for j in cl.level(m) {
                    assert!(j >= i && j <= i + (n - m));
                }
            }
        }
    }

    #[test]
    fn subcritical_horizons_found() {
        let root = NoiseField::new(77);
        let mut truncations = 0;
        for r in 0..10_000u64 {
            let c = PercConfig::new(0.4, root.child(r)).unwrap();
            match horizon_n0(&c, 0, 0, 500) {
                Horizon::Found(m) => assert!(m <= 0),
                Horizon::Truncated { .. } => truncations += 1,
            }
        }
        assert_eq!(truncations, 0);
    }

    #[test]
    fn failing_levels_form_a_down_set() {
        for s in 0..300 {
            let c = PercConfig::new(0.55, NoiseField::new(s)).unwrap();
            let cl = backward_cluster(&c, 0, 0, 400);
            let Horizon::Found(h) = cl.horizon() else { continue };
            // every level strictly above the horizon has a leader
            for m in h + 1..=0 {
                assert!(!cl.level(m).is_empty());
            }
            // nothing below the horizon can reach: the sweep from an empty level stays empty
            for m in h - 5..h {
                for j in 0..=(-m) {
                    if c.is_open(m, j) {
                        let fwd = forward_bfs(&c, (m, j), 0);
                        assert!(!fwd.contains(&(0, 0)));
                    }
                }
            }
        }
    }

    #[test]
    fn truncation_is_reported() {
        let c = PercConfig::new(1.0, NoiseField::new(0)).unwrap();
        let cl = backward_cluster(&c, 0, 0, 50);
        assert!(cl.truncated);
        assert_eq!(cl.horizon(), Horizon::Truncated { searched_to: -50 });
        assert_eq!(cl.level(-50).len(), 51);
        let none = backward_cluster(&c, 0, 0, 0);
        assert_eq!(none.horizon(), Horizon::Truncated { searched_to: 0 });
    }

    #[test]
    fn grid_sweep_matches_clusters() {
        for s in 0..30 {
            let c = PercConfig::new(0.6, NoiseField::new(s)).unwrap();
            let grid = OpenGrid::new(&c, -20, 0, 0, 30);
            let reached = reached_from_level(&grid, -19);
            for (k, row) in reached.iter().enumerate() {
                let n = -19 + k as i64;
                for j in 0..row.len() {
                    let cl = backward_cluster(&c, n, j as i64, 100);
                    let expect = !cl.level(-19).is_empty();
                    assert_eq!(row.get(j), expect, "seed {s} ({n},{j})");
                }
            }
        }
    }

    #[test]
    fn survival_extremes() {
        let zero = survival_estimate(0.0, 50, 128, 20, 1, Direction::Forward).unwrap();
        assert_eq!(zero.estimate(), 0.0);
        let one = survival_estimate(1.0, 50, 128, 20, 1, Direction::Backward).unwrap();
        assert_eq!(one.estimate(), 1.0);
        assert!(survival_estimate(0.5, 10, 128, 0, 1, Direction::Forward).is_err());
    }

    #[test]
    fn survival_monotone_in_depth() {
        let c = survival_estimate(0.7, 100, 256, 200, 5, Direction::Forward).unwrap();
        for d in 1..=100 {
            assert!(c.alive[d] <= c.alive[d - 1]);
        }
    }
}
