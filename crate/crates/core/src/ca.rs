//! The deterministic automaton `(tau x)(i) = x(i) + x(i+1)` on finite windows.
//!
//! Windows shrink on the right: a window over `[b, b+L-1]` at time `n` maps
//! to a window over `[b, b+L-2]` at time `n - 1`, since the deterministic
//! filtration reads `X_{n-1} = tau X_n`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitRow;
use crate::error::{resource, usage, Result};
use crate::group::GroupSpec;

/// Finite-window boundary handling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Each step drops the rightmost cell.
    Cone,
    /// Periodic ring of fixed width.
    Torus,
}

/// A block of cells (canonical symbol indices) over `[base, base + len - 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Window {
    pub base: i64,
    pub time: i64,
    pub cells: Vec<u32>,
}

impl Window {
    pub fn new(group: &GroupSpec, base: i64, time: i64, cells: Vec<u32>) -> Result<Self> {
        if cells.is_empty() {
            return Err(usage("window-nonempty", "a window needs at least one cell"));
        }
        if let Some(&bad) = cells.iter().find(|&&c| c >= group.order()) {
            return Err(usage(
                "window-membership",
                format!("cell value {bad} is not an element of {group}"),
            ));
        }
        Ok(Window { base, time, cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Last covered site.
    pub fn end(&self) -> i64 {
        self.base + self.cells.len() as i64 - 1
    }

    pub fn contains(&self, i: i64) -> bool {
        i >= self.base && i <= self.end()
    }

    /// Cell at absolute site `i`.
    pub fn at(&self, i: i64) -> u32 {
        self.cells[(i - self.base) as usize]
    }

    /// Restriction to `[lo, hi]`.
    pub fn slice(&self, lo: i64, hi: i64) -> Window {
        assert!(self.contains(lo) && self.contains(hi) && lo <= hi);
        Window {
            base: lo,
            time: self.time,
            cells: self.cells[(lo - self.base) as usize..=(hi - self.base) as usize].to_vec(),
        }
    }
}

pub fn tau_step(group: &GroupSpec, w: &Window) -> Result<Window> {
    if w.len() < 2 {
        return Err(usage("tau-width", "tau_step needs a window of length >= 2"));
    }
    let cells = w
        .cells
        .windows(2)
        .map(|p| group.add_idx(p[0], p[1]))
        .collect();
    Ok(Window {
        base: w.base,
        time: w.time - 1,
        cells,
    })
}

/// One step on a ring of fixed width. Z/2 runs bit-packed.
pub fn tau_step_torus(group: &GroupSpec, w: &Window) -> Window {
    let len = w.len();
    let cells = if group.is_z2() {
        BitRow::from_cells(&w.cells).tau().to_cells()
    } else {
        (0..len)
            .map(|i| group.add_idx(w.cells[i], w.cells[(i + 1) % len]))
            .collect()
    };
    Window {
        base: w.base,
        time: w.time - 1,
        cells,
    }
}

pub fn tau_iterate(group: &GroupSpec, w: &Window, t: usize) -> Result<Window> {
    if w.len() < t + 1 {
        return Err(usage(
            "tau-width",
            format!("{t} iterations need a window of length >= {}", t + 1),
        ));
    }
    let mut cur = w.clone();
    for _ in 0..t {
        cur = tau_step(group, &cur)?;
    }
    Ok(cur)
}

/// The unique block `w'` over `[j, k+1]` with `w'(anchor_pos) = anchor` and
/// `tau w' = w`, where `w` covers `[j, k]`.
pub fn inverse_block(group: &GroupSpec, w: &Window, anchor: u32, anchor_pos: i64) -> Result<Window> {
    let j = w.base;
    let k = w.end();
    if anchor_pos < j || anchor_pos > k + 1 {
        return Err(usage(
            "anchor-position",
            format!("anchor position {anchor_pos} outside [{j}, {}]", k + 1),
        ));
    }
    if anchor >= group.order() {
        return Err(usage("window-membership", format!("anchor {anchor} not in {group}")));
    }
    let len = w.len() + 1;
    let p = (anchor_pos - j) as usize;
    let mut out = vec![0u32; len];
    out[p] = anchor;
    for h in p..len - 1 {
        out[h + 1] = group.sub_idx(w.cells[h], out[h]);
    }
    for h in (0..p).rev() {
        out[h] = group.sub_idx(w.cells[h], out[h + 1]);
    }
    Ok(Window {
        base: j,
        time: w.time + 1,
        cells: out,
    })
}

/// One observed cell `X_time(pos) = value`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub time: i64,
    pub pos: i64,
    pub value: u32,
}

/// Rebuilds `X_n[i_m, i_m + n - m]` from the observations
/// `X_m(i_m), ..., X_n(i_n)` along a path with `i_{l+1} - i_l` in `{0, 1}`.
pub fn reconstruct_along_path(group: &GroupSpec, observations: &[Observation]) -> Result<Window> {
    let first = observations
        .first()
        .ok_or_else(|| usage("path-nonempty", "at least one observation is required"))?;
    for pair in observations.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b.time != a.time + 1 {
            return Err(usage("path-times", "observation times must be consecutive"));
        }
        if b.pos != a.pos && b.pos != a.pos + 1 {
            return Err(usage(
                "path-step",
                format!("position step {} -> {} is neither 0 nor +1", a.pos, b.pos),
            ));
        }
    }
    let mut w = Window::new(group, first.pos, first.time, vec![first.value])?;
    for obs in &observations[1..] {
        w = inverse_block(group, &w, obs.value, obs.pos)?;
    }
    Ok(w)
}

/// Enumeration budget for exact laws, in configurations.
pub const ENUMERATION_LIMIT: u64 = 1 << 24;

/// Exact joint law of `(X_0(i_0), X_{-1}(i_{-1}), ..., X_{-d}(i_{-d}))` under a
/// uniform `X_0` on the window `[lo, lo + len - 1]`, `lo = min(positions)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiagonalLaw {
    pub group: GroupSpec,
    pub positions: Vec<i64>,
    /// Indexed by mixed radix over levels, level 0 most significant.
    pub counts: Vec<u64>,
    pub total: u64,
}

impl DiagonalLaw {
    pub fn depth(&self) -> usize {
        self.positions.len() - 1
    }

    /// Symbol at each level for outcome `index`.
    pub fn outcome(&self, index: usize) -> Vec<u32> {
        let a = self.group.order() as usize;
        let mut out = vec![0u32; self.positions.len()];
        let mut rest = index;
        for slot in out.iter_mut().rev() {
            *slot = (rest % a) as u32;
            rest /= a;
        }
        out
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.counts[index] as f64 / self.total as f64
    }

    /// Probability rendered as a reduced fraction for prime-power orders,
    /// otherwise as a binary64 decimal.
    pub fn probability_text(&self, index: usize) -> String {
        if self.group.prime_power().is_some() {
            let (num, den) = reduce(self.counts[index], self.total);
            format!("{num}/{den}")
        } else {
            format!("{}", self.probability(index))
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let cols: Vec<String> = (0..self.positions.len()).map(|d| format!("x_level_m{d}")).collect();
        let _ = writeln!(s, "{},probability", cols.join(","));
        for idx in 0..self.counts.len() {
            let o: Vec<String> = self.outcome(idx).iter().map(u32::to_string).collect();
            let _ = writeln!(s, "{},{}", o.join(","), self.probability_text(idx));
        }
        s
    }
}

fn reduce(a: u64, b: u64) -> (u64, u64) {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let g = gcd(a, b).max(1);
    (a / g, b / g)
}

pub fn exact_diagonal_law(group: &GroupSpec, len: usize, positions: &[i64]) -> Result<DiagonalLaw> {
    if positions.is_empty() {
        return Err(usage("diagonal-positions", "need one position per level"));
    }
    let depth = positions.len() - 1;
    let a = u64::from(group.order());
    let configs = (0..len)
        .try_fold(1u64, |acc, _| acc.checked_mul(a).filter(|&c| c <= ENUMERATION_LIMIT))
        .ok_or_else(|| {
            resource(
                "enumeration",
                format!("|A|^L = {a}^{len} exceeds the limit {ENUMERATION_LIMIT}"),
            )
        })?;
    let lo = *positions.iter().min().unwrap();
    for (d, &p) in positions.iter().enumerate() {
        let hi = lo + len as i64 - 1 - d as i64;
        if p > hi {
            return Err(usage(
                "diagonal-cone",
                format!("position {p} at level -{d} outside the cone [{lo}, {hi}]"),
            ));
        }
    }
    let offsets: Vec<usize> = positions.iter().map(|&p| (p - lo) as usize).collect();
    let outcomes = (a as usize).pow(positions.len() as u32);

    let chunk = 1u64 << 12;
    let chunks = configs.div_ceil(chunk);
    let counts = (0..chunks)
        .into_par_iter()
        .fold(
            || vec![0u64; outcomes],
            |mut acc, c| {
                let start = c * chunk;
                let end = (start + chunk).min(configs);
                let mut cells = decode(start, len, group.order());
                let mut row = vec![0u32; len];
                for _ in start..end {
                    row.copy_from_slice(&cells);
                    let mut key = row[offsets[0]] as usize;
                    for (d, &off) in offsets.iter().enumerate().skip(1) {
                        let width = len - d;
                        for h in 0..width {
                            row[h] = group.add_idx(row[h], row[h + 1]);
                        }
                        key = key * a as usize + row[off] as usize;
                    }
                    acc[key] += 1;
                    increment(&mut cells, group.order());
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; outcomes],
            |mut x, y| {
                for (p, q) in x.iter_mut().zip(y) {
                    *p += q;
                }
                x
            },
        );
    debug_assert_eq!(depth + 1, positions.len());
    Ok(DiagonalLaw {
        group: group.clone(),
        positions: positions.to_vec(),
        counts,
        total: configs,
    })
}

/// Configuration number `k` with the last cell varying fastest.
fn decode(mut k: u64, len: usize, order: u32) -> Vec<u32> {
    let mut cells = vec![0u32; len];
    for slot in cells.iter_mut().rev() {
        *slot = (k % u64::from(order)) as u32;
        k /= u64::from(order);
    }
    cells
}

fn increment(cells: &mut [u32], order: u32) {
    for c in cells.iter_mut().rev() {
        *c += 1;
        if *c < order {
            return;
        }
        *c = 0;
    }
}

/// All configurations of `len` cells, last cell fastest.
pub fn enumerate_blocks(order: u32, len: usize) -> impl Iterator<Item = Vec<u32>> {
    let total = u64::from(order).pow(len as u32);
    (0..total).map(move |k| decode(k, len, order))
}
