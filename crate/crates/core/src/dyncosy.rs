//! The equivariant coupling for `A = Z/2` and the difference process it
//! induces.
//!
//! Both copies share the noise; wherever `tau Z_{n-1}(i) = 0` the two error
//! variables coincide, otherwise they are chosen with disjoint supports so
//! that the copies agree with probability `2 eps`. The difference `Z` is then
//! itself an automaton on `{0, 1}`:
//! `Z_n(i) = 0` if `tau Z_{n-1}(i) = 0`, else `0` iff `U_n(i) < 2 eps`.

use rayon::prelude::*;
use serde::Serialize;

use crate::bits::BitRow;
use crate::ca::Window;
use crate::error::{usage, Result};
use crate::group::GroupSpec;
use crate::noise::{Field, NoiseField};

/// Calibration constants for the survival contrast at width 4096 and depth
/// 500. Survival of the difference process is only known to hold for some
/// positive density, not a specific one, so these thresholds are chosen to
/// separate the two regimes, not derived.
pub const SURVIVAL_DENSITY_MIN: f64 = 0.05;
pub const EXTINCTION_DENSITY_MAX: f64 = 0.01;
pub const LOW_NOISE_EPSILON: f64 = 0.02;
pub const HIGH_NOISE_EPSILON: f64 = 0.45;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZPcaParams {
    pub epsilon: f64,
    pub width: usize,
    pub depth: u64,
}

impl ZPcaParams {
    pub fn new(epsilon: f64, width: usize, depth: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(usage(
                "dyncosy-epsilon",
                format!("epsilon must lie in (0, 1/2] so that 2 eps <= 1, got {epsilon}"),
            ));
        }
        if width < 2 {
            return Err(usage("torus-width", "the torus needs width >= 2"));
        }
        Ok(ZPcaParams { epsilon, width, depth })
    }

    /// Probability that a site with `tau Z != 0` is cleared.
    pub fn kill(&self) -> f64 {
        2.0 * self.epsilon
    }
}

/// Only `Z/2` is supported.
pub fn require_z2(group: &GroupSpec) -> Result<()> {
    if !group.is_z2() {
        return Err(usage(
            "dyncosy-group",
            format!("the equivariant coupling is implemented for Z/2 only, got {group}"),
        ));
    }
    Ok(())
}

/// One step on a bit row: reads noise row `n`.
pub fn z_step_bits<F: Field>(params: &ZPcaParams, z: &BitRow, field: &F, n: i64) -> BitRow {
    let t = z.tau();
    let mut next = BitRow::zeros(z.len());
    for k in t.ones() {
        if field.u(n, k as i64) >= params.kill() {
            next.set(k, true);
        }
    }
    next
}

/// One torus step of a `Z/2` window from `z.time` to `n = z.time + 1`.
pub fn z_step<F: Field>(params: &ZPcaParams, z: &Window, field: &F) -> Result<Window> {
    if let Some(&bad) = z.cells.iter().find(|&&c| c > 1) {
        return Err(usage("window-membership", format!("cell value {bad} is not in Z/2")));
    }
    let base = z.base;
    let shifted = crate::noise::Shifted {
        inner: field,
        dn: 0,
        di: base,
    };
    let row = z_step_bits(params, &BitRow::from_cells(&z.cells), &shifted, z.time + 1);
    Ok(Window {
        base,
        time: z.time + 1,
        cells: row.to_cells(),
    })
}

/// Initial row: i.i.d. uniform bits read from noise row 0.
pub fn initial_row<F: Field>(width: usize, field: &F) -> BitRow {
    BitRow::from_fn(width, |k| field.u(0, k as i64) < 0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityCurve {
    pub epsilon: f64,
    pub width: usize,
    pub depth: u64,
    pub seed: u64,
    /// `ones[t]`: number of ones at step `t`, `t = 0..=depth`.
    pub ones: Vec<u64>,
}

impl DensityCurve {
    pub fn density(&self, t: usize) -> f64 {
        self.ones[t] as f64 / self.width as f64
    }

    pub fn final_density(&self) -> f64 {
        self.density(self.depth as usize)
    }
}

pub fn density_trajectory(params: &ZPcaParams, seed: u64) -> DensityCurve {
    let field = NoiseField::new(seed);
    let mut z = initial_row(params.width, &field);
    let mut ones = Vec::with_capacity(params.depth as usize + 1);
    ones.push(z.count_ones());
    for n in 1..=params.depth as i64 {
        z = z_step_bits(params, &z, &field, n);
        ones.push(z.count_ones());
    }
    DensityCurve {
        epsilon: params.epsilon,
        width: params.width,
        depth: params.depth,
        seed,
        ones,
    }
}

/// Counts of `Z_n(i) != tau Z_{n-1}(i)` over all cells of `replicas`
/// trajectories, as `(deviations, cells)`.
pub fn deviation_counts(params: &ZPcaParams, replicas: u64, seed: u64) -> (u64, u64) {
    let root = NoiseField::new(seed);
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let field = root.child(r);
            let mut z = initial_row(params.width, &field);
            let mut dev = 0;
            for n in 1..=params.depth as i64 {
                let next = z_step_bits(params, &z, &field, n);
                dev += next.xor(&z.tau()).count_ones();
                z = next;
            }
            (dev, params.depth * params.width as u64)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}
