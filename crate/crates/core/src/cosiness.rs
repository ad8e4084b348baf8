//! Real-time coupling of two copies of the `tau_eps` chain that are
//! independent before time `n0` and agree on `[-k, k]` at time 0 with high
//! probability.
//!
//! Only the difference process `Z = X' - X''` is simulated by default. At
//! each time `n` the coupling looks at the projection `tau^{|n-1|}(Z_{n-1})`
//! on `[-k, k]`, picks the leftmost nonzero column `j`, and plays the
//! strategy `S_{-a}` on the single site of diagonal `D(j)` at level `n`
//! (all other sites play `S_0`). A draw below `epst` there clears column `j`.
//!
//! The projection is maintained incrementally: a correction `d` at site `s`
//! of level `n` shifts the projection at column `i` by `C(|n|, s - i) d`.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{geometric_sum_cdf, wilson_interval};
use crate::ca::{tau_iterate, tau_step, Window};
use crate::error::{usage, Result};
use crate::noise::{Field, NoiseField, Shifted};
use crate::pca::{local_prob, EpsilonParams};

/// Levels scanned past `n0` before a hitting time is declared infinite.
pub const HIT_SCAN_CAP: i64 = 1 << 22;

/// `g_a(u)`: `a + b` for `u` in `J_b`, `0` for `u >= epst`.
pub fn g_map(params: &EpsilonParams, a: u32, u: f64) -> u32 {
    match params.cosiness_partition().locate(u) {
        Some(b) => params.group.add_idx(a, b),
        None => 0,
    }
}

/// `g_a(u) - g_0(u)`, the increment of `Z` at a site playing `S_a`.
pub fn strategy_delta(params: &EpsilonParams, a: u32, u: f64) -> u32 {
    params
        .group
        .sub_idx(g_map(params, a, u), g_map(params, 0, u))
}

/// One replica of the coupling.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingRun {
    /// `Z_0[-k, k]` is all zero.
    pub success: bool,
    /// The projection was already zero at `n0`.
    pub initially_zero: bool,
    /// `T(-k), ..., T(k)`; `None` when no hit occurred within [`HIT_SCAN_CAP`] levels.
    pub hit_times: Vec<Option<i64>>,
    /// Number of steps at which the strategy site actually cleared a column.
    pub clearings: u32,
    /// `Z_0[-k, k]`.
    pub residual: Vec<u32>,
    pub seed: Option<u64>,
    pub trace: Option<Vec<TraceStep>>,
}

impl CouplingRun {
    pub fn t_k(&self) -> Option<i64> {
        *self.hit_times.last().expect("2k+1 hit times")
    }

    /// `T(k) <= 0`.
    pub fn target_hit(&self) -> bool {
        matches!(self.t_k(), Some(t) if t <= 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub time: i64,
    /// Blocked column `j_{n-1}`; `k + 1` once the target is clear.
    pub column: i64,
    pub fired: bool,
}

/// Per-`(k, n0, group)` tables shared by all replicas.
#[derive(Clone, Debug)]
pub struct CouplingPlan {
    params: EpsilonParams,
    k: i64,
    n0: i64,
    /// `C(|n0|, r) mod exponent`, `r = 0..=|n0|`.
    full_row: Vec<u64>,
    /// `low[m][r] = C(m, r) mod exponent`, `r = 0..=2k`, `m = 0..=|n0|`.
    low: Vec<Vec<u64>>,
}

/// Options beyond the plain Z-only run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record per-step column and firing.
    pub trace: bool,
    /// Also simulate the full `Z` window and recompute the projection from
    /// scratch at every step; panics on disagreement.
    pub cross_check: bool,
}

impl CouplingPlan {
    pub fn new(params: &EpsilonParams, k: i64, n0: i64) -> Result<Self> {
        if k < 0 {
            return Err(usage("coupling-k", "k must be >= 0"));
        }
        if n0 > -1 {
            return Err(usage("coupling-n0", "n0 must be <= -1"));
        }
        let e = params.group.exponent();
        let depth = (-n0) as usize;
        let cols = 2 * k as usize + 1;
        let mut low = Vec::with_capacity(depth + 1);
        let mut row = vec![1u64];
        let mut full_row = vec![1u64];
        for m in 0..=depth {
            if m > 0 {
                let mut next = vec![1u64; m + 1];
                for r in 1..m {
                    next[r] = (row[r - 1] + row[r]) % e;
                }
                row = next;
            }
            let mut trunc: Vec<u64> = row.iter().take(cols).copied().collect();
            trunc.resize(cols, 0);
            low.push(trunc);
            if m == depth {
                full_row = row.clone();
            }
        }
        Ok(CouplingPlan {
            params: params.clone(),
            k,
            n0,
            full_row,
            low,
        })
    }

    pub fn k(&self) -> i64 {
        self.k
    }

    pub fn n0(&self) -> i64 {
        self.n0
    }

    #[inline]
    fn binom(&self, m: usize, r: usize) -> u64 {
        self.low[m][r]
    }

    /// `Z_{n0}(i)`: a uniform symbol read from noise row `n0`.
    fn initial_cell<F: Field>(&self, field: &F, i: i64) -> u32 {
        let order = self.params.order();
        ((field.u(self.n0, i) * f64::from(order)) as u32).min(order - 1)
    }

    /// `T(-k), ..., T(k)` from the diagonals' noise alone.
    pub fn hit_times<F: Field>(&self, field: &F) -> Vec<Option<i64>> {
        let mut out = Vec::with_capacity(2 * self.k as usize + 1);
        let mut after = self.n0;
        for j in -self.k..=self.k {
            let found = (after + 1..=self.n0 + HIT_SCAN_CAP).find(|&n| field.u(n, j - n) < self.params.epst);
            out.push(found);
            match found {
                Some(t) => after = t,
                None => {
                    out.resize(2 * self.k as usize + 1, None);
                    break;
                }
            }
        }
        out
    }

    pub fn run<F: Field>(&self, field: &F, opts: RunOptions) -> CouplingRun {
        self.run_from(field, |i| self.initial_cell(field, i), opts)
    }

    /// Runs from an arbitrary `Z_{n0}` on `[-k, k + |n0|]`.
    pub fn run_from<F: Field>(&self, field: &F, init: impl Fn(i64) -> u32, opts: RunOptions) -> CouplingRun {
        let g = &self.params.group;
        let k = self.k;
        let depth = (-self.n0) as usize;
        let cols = 2 * k as usize + 1;

        // proj[c] = tau^{|n|}(Z_n)(c - k)
        let mut proj = vec![0u32; cols];
        for (c, slot) in proj.iter_mut().enumerate() {
            let i = c as i64 - k;
            let mut acc = 0;
            for (r, &b) in self.full_row.iter().enumerate() {
                if b != 0 {
                    acc = g.add_idx(acc, g.scale_idx(init(i + r as i64), b));
                }
            }
            *slot = acc;
        }
        let initially_zero = proj.iter().all(|&v| v == 0);

        let mut z_full = opts.cross_check.then(|| {
            let cells = (-k..=k + depth as i64).map(&init).collect();
            Window {
                base: -k,
                time: self.n0,
                cells,
            }
        });
        if let Some(z) = &z_full {
            let check = tau_iterate(g, z, depth).expect("cone width");
            assert_eq!(check.cells, proj, "initial projection mismatch");
        }

        let mut trace = opts.trace.then(Vec::new);
        let mut clearings = 0;
        for n in self.n0 + 1..=0 {
            let m = (-n) as usize;
            let column = proj.iter().position(|&v| v != 0);
            let mut fired = false;
            let mut site_delta = None;
            if let Some(c) = column {
                let j = c as i64 - k;
                let site = j - n;
                let u = field.u(n, site);
                let a = proj[c];
                let delta = strategy_delta(&self.params, g.neg_idx(a), u);
                if delta != 0 {
                    fired = true;
                    clearings += 1;
                    // column i = j + d receives C(m, m - d) * delta = C(m, d) * delta
                    for d in 0..cols - c {
                        let coeff = self.binom(m, d);
                        if coeff != 0 {
                            proj[c + d] = g.add_idx(proj[c + d], g.scale_idx(delta, coeff));
                        }
                    }
                    debug_assert_eq!(proj[c], 0);
                }
                site_delta = Some((site, delta));
            }
            if let Some(t) = trace.as_mut() {
                t.push(TraceStep {
                    time: n,
                    column: column.map_or(k + 1, |c| c as i64 - k),
                    fired,
                });
            }
            if let Some(z) = z_full.as_mut() {
                let mut next = tau_step(g, z).expect("cone width");
                next.time = n;
                if let Some((site, delta)) = site_delta {
                    let idx = (site - next.base) as usize;
                    next.cells[idx] = g.add_idx(next.cells[idx], delta);
                }
                let check = tau_iterate(g, &next, m).expect("cone width");
                assert_eq!(check.cells, proj, "incremental projection diverged at n={n}");
                *z = next;
            }
        }
        CouplingRun {
            success: proj.iter().all(|&v| v == 0),
            residual: proj,
            initially_zero,
            hit_times: self.hit_times(field),
            clearings,
            seed: None,
            trace,
        }
    }
}

pub fn run_coupling<F: Field>(params: &EpsilonParams, k: i64, n0: i64, field: &F) -> Result<CouplingRun> {
    Ok(CouplingPlan::new(params, k, n0)?.run(field, RunOptions::default()))
}

/// Coupling for the extended target `(X_n[-k, k] : -k <= n <= 0)`: couple
/// `Z_{-k}[-2k, 2k]` to zero, then play `S_0` on levels `-k+1..0`.
/// Success implies `Z_n[-k, k] = 0` for every `n` in `[-k, 0]`. Hit times
/// are reported in the frame shifted forward by `k`.
pub fn run_extended_target<F: Field>(params: &EpsilonParams, k: i64, n0: i64, field: &F) -> Result<CouplingRun> {
    if n0 > -k - 1 {
        return Err(usage("coupling-n0", "extended target needs n0 <= -k - 1"));
    }
    let shifted = Shifted {
        inner: field,
        dn: -k,
        di: 0,
    };
    let plan = CouplingPlan::new(params, 2 * k, n0 + k)?;
    // success at time -k means tau^l Z_{-k}[-2k, 2k - l] = 0 for l <= k,
    // which covers [-k, k] on every later level under S_0.
    let run = plan.run(&shifted, RunOptions::default());
    Ok(run)
}

/// Transition counts `(b, c) -> a` of the two explicit marginal chains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarginalCounts {
    /// `counts[(b * |A| + c) * |A| + a]`, pooled over both copies.
    pub counts: Vec<u64>,
    /// Replicas where `X' - X''` differed from the Z-only simulation.
    pub z_mismatches: u64,
}

/// Runs the coupling with both chains `X'` and `X''` simulated explicitly.
/// `X'_{n0}` reads noise row `n0`, `X''_{n0}` row `n0 - 1`. Returns the
/// pooled one-step transitions and whether `X' - X''` matches the Z-only run.
pub fn run_explicit<F: Field>(plan: &CouplingPlan, field: &F) -> (MarginalCounts, bool) {
    let params = &plan.params;
    let g = &params.group;
    let order = g.order() as usize;
    let k = plan.k;
    let depth = (-plan.n0) as usize;
    let part = params.cosiness_partition();
    let g_of = |a: u32, u: f64| match part.locate(u) {
        Some(b) => g.add_idx(a, b),
        None => 0,
    };
    let cell = |n: i64, i: i64| ((field.u(n, i) * order as f64) as u32).min(order as u32 - 1);
    let mut x1: Vec<u32> = (-k..=k + depth as i64).map(|i| cell(plan.n0, i)).collect();
    let mut x2: Vec<u32> = (-k..=k + depth as i64).map(|i| cell(plan.n0 - 1, i)).collect();
    let z_init: Vec<u32> = x1.iter().zip(&x2).map(|(&a, &b)| g.sub_idx(a, b)).collect();
    let mut counts = vec![0u64; order * order * order];
    for n in plan.n0 + 1..=0 {
        let m = (-n) as usize;
        let z: Vec<u32> = x1.iter().zip(&x2).map(|(&a, &b)| g.sub_idx(a, b)).collect();
        let zw = Window {
            base: -k,
            time: n - 1,
            cells: z,
        };
        let proj = tau_iterate(g, &zw, m + 1).expect("cone width").cells;
        let strategy = proj
            .iter()
            .position(|&v| v != 0)
            .map(|c| (c as i64 - k - n, g.neg_idx(proj[c])));
        let width = x1.len() - 1;
        let mut y1 = vec![0u32; width];
        let mut y2 = vec![0u32; width];
        for h in 0..width {
            let i = -k + h as i64;
            let u = field.u(n, i);
            let a1 = match strategy {
                Some((site, a)) if site == i => a,
                _ => 0,
            };
            y1[h] = g.add_idx(g.add_idx(x1[h], x1[h + 1]), g_of(a1, u));
            y2[h] = g.add_idx(g.add_idx(x2[h], x2[h + 1]), g_of(0, u));
            for (x, y) in [(&x1, &y1), (&x2, &y2)] {
                let key = (x[h] as usize * order + x[h + 1] as usize) * order + y[h] as usize;
                counts[key] += 1;
            }
        }
        x1 = y1;
        x2 = y2;
    }
    let z0: Vec<u32> = x1.iter().zip(&x2).map(|(&a, &b)| g.sub_idx(a, b)).collect();
    let zrun = plan.run_from(field, |i| z_init[(i + k) as usize], RunOptions::default());
    let agrees = zrun.residual == z0;
    (
        MarginalCounts {
            counts,
            z_mismatches: u64::from(!agrees),
        },
        agrees,
    )
}

/// Expected one-step law for [`MarginalCounts`] conditioned on `(b, c)`.
pub fn transition_law(params: &EpsilonParams, b: u32, c: u32) -> Vec<f64> {
    (0..params.order()).map(|a| local_prob(params, a, b, c)).collect()
}

/// Monte Carlo summary of many replicas.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeetingEstimate {
    pub k: i64,
    pub n0: i64,
    pub replicas: u64,
    pub successes: u64,
    /// Replicas with `T(k) <= 0`.
    pub target_hits: u64,
    /// Replicas with `T(k) <= 0` but no success. Must be zero.
    pub implication_violations: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub exact_lower_bound: f64,
}

impl MeetingEstimate {
    /// Success frequency minus `T(k) <= 0` frequency.
    pub fn gap(&self) -> f64 {
        (self.successes as f64 - self.target_hits as f64) / self.replicas as f64
    }

    pub fn target_hit_frequency(&self) -> f64 {
        self.target_hits as f64 / self.replicas as f64
    }
}

/// Runs `replicas` couplings, replica `r` on `NoiseField::new(seed).child(r)`.
pub fn collect_runs(params: &EpsilonParams, k: i64, n0: i64, replicas: u64, seed: u64) -> Result<Vec<CouplingRun>> {
    let plan = CouplingPlan::new(params, k, n0)?;
    let root = NoiseField::new(seed);
    Ok((0..replicas)
        .into_par_iter()
        .map(|r| {
            let field = root.child(r);
            let mut run = plan.run(&field, RunOptions::default());
            run.seed = Some(field.seed());
            run
        })
        .collect())
}

pub fn summarize(params: &EpsilonParams, k: i64, n0: i64, runs: &[CouplingRun]) -> MeetingEstimate {
    let replicas = runs.len() as u64;
    let successes = runs.iter().filter(|r| r.success).count() as u64;
    let target_hits = runs.iter().filter(|r| r.target_hit()).count() as u64;
    let implication_violations = runs.iter().filter(|r| r.target_hit() && !r.success).count() as u64;
    let (ci_lo, ci_hi) = wilson_interval(successes, replicas, 0.95);
    MeetingEstimate {
        k,
        n0,
        replicas,
        successes,
        target_hits,
        implication_violations,
        estimate: successes as f64 / replicas as f64,
        ci_lo,
        ci_hi,
        exact_lower_bound: meeting_lower_bound(params, k, n0),
    }
}

pub fn meeting_probability(params: &EpsilonParams, k: i64, n0: i64, replicas: u64, seed: u64) -> Result<MeetingEstimate> {
    if replicas == 0 {
        return Err(usage("replicas", "at least one replica is required"));
    }
    let runs = collect_runs(params, k, n0, replicas, seed)?;
    Ok(summarize(params, k, n0, &runs))
}

/// `P(T(k) <= 0) = P(G_1 + ... + G_{2k+1} <= |n0|)` with `G ~ geometric(epst)`.
pub fn meeting_lower_bound(params: &EpsilonParams, k: i64, n0: i64) -> f64 {
    assert!(k >= 0 && n0 <= -1);
    if params.epst >= 1.0 {
        return if -n0 > 2 * k { 1.0 } else { 0.0 };
    }
    geometric_sum_cdf(params.epst, (2 * k + 1) as u32, -n0)
}

/// Pooled increments `T(-k) - n0` and `T(j+1) - T(j)`.
pub fn hit_increments(n0: i64, runs: &[CouplingRun]) -> Vec<i64> {
    let mut out = Vec::new();
    for run in runs {
        let mut prev = n0;
        for t in run.hit_times.iter().map_while(|t| *t) {
            out.push(t - prev);
            prev = t;
        }
    }
    out
}
