//! Verification suites: the exact oracles and Monte Carlo checks that the
//! library is expected to pass, grouped by area and numbered by criterion.
//!
//! Checks that compare two computations on the same noise draw their fields
//! from a [`NoiseSource`], so a deliberately corrupted source makes them
//! fail with the name of the broken invariant.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use super::config::{Experiment, ExperimentConfig, Format, Suite};
use super::output::Check;
use crate::analysis::{
    binomial_sigma, chi_square_test, DiscreteDistribution, FrequencyTable,
};
use crate::ca::{enumerate_blocks, exact_diagonal_law, inverse_block, tau_step, Boundary, Window};
use crate::cftp::{check_equivariance, ergodicity_tv, sample_site, two_start_agreement, CftpOptions, InitialConfig};
use crate::cosiness::{collect_runs, meeting_lower_bound, summarize, CouplingRun};
use crate::dyncosy::{
    density_trajectory, deviation_counts, ZPcaParams, EXTINCTION_DENSITY_MAX, HIGH_NOISE_EPSILON, LOW_NOISE_EPSILON,
    SURVIVAL_DENSITY_MIN,
};
use crate::envelope::simulate_envelope;
use crate::error::Result;
use crate::group::GroupSpec;
use crate::noise::{child_seed, mix64, to_unit, Field, NoiseField};
use crate::pca::{simulate_chain, EpsilonParams};
use crate::percolation::{reached_from_level, survival_estimate, Direction, OpenGrid, PercConfig};

/// Sample sizes: `Full` is the size the criteria are stated for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Full,
    Quick,
}

impl Scale {
    fn n(self, full: u64, quick: u64) -> u64 {
        match self {
            Scale::Full => full,
            Scale::Quick => quick,
        }
    }

    /// At quick scale a fixed tolerance is widened to four standard errors
    /// when sampling noise alone would exceed it.
    fn tol(self, tol: f64, sigma: f64) -> f64 {
        match self {
            Scale::Full => tol,
            Scale::Quick => tol.max(4.0 * sigma),
        }
    }
}

/// Where the checks get their noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseSource {
    Honest,
    /// Every evaluation returns a fresh value, so two reads of the same site
    /// disagree. Only useful to prove that the checks notice.
    Corrupted,
}

impl NoiseSource {
    pub fn field(self, seed: u64) -> SourceField {
        match self {
            NoiseSource::Honest => SourceField::Honest(NoiseField::new(seed)),
            NoiseSource::Corrupted => SourceField::Corrupted(NoiseField::new(seed), AtomicU64::new(0)),
        }
    }
}

pub enum SourceField {
    Honest(NoiseField),
    Corrupted(NoiseField, AtomicU64),
}

impl Field for SourceField {
    fn u(&self, n: i64, i: i64) -> f64 {
        match self {
            SourceField::Honest(f) => f.u(n, i),
            SourceField::Corrupted(f, calls) => {
                let c = calls.fetch_add(1, Ordering::Relaxed);
                to_unit(mix64(f.bits(n, i) ^ mix64(c)))
            }
        }
    }
}

fn timed(criterion: u8, invariant: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let t = Instant::now();
    let (passed, detail) = match body() {
        Ok(r) => r,
        Err(e) => (false, e.to_string()),
    };
    Check {
        criterion,
        invariant,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn z2() -> GroupSpec {
    GroupSpec::z2()
}

/// Every `tau`-preimage block built from an anchor maps back to its block
/// and carries the anchor.
pub fn block_inverse_roundtrip() -> Check {
    timed(1, "block-inverse-roundtrip", || {
        let groups = [z2(), GroupSpec::cyclic(3)?, GroupSpec::new(vec![2, 2])?];
        let mut cases = 0u64;
        let mut failures = 0u64;
        for g in &groups {
            for len in 1..=6 {
                for cells in enumerate_blocks(g.order(), len) {
                    let w = Window { base: 0, time: 0, cells };
                    for a in 0..g.order() {
                        for pos in 0..=len as i64 {
                            let inv = inverse_block(g, &w, a, pos)?;
                            cases += 1;
                            if tau_step(g, &inv)? != w || inv.at(pos) != a {
                                failures += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok((failures == 0, format!("{cases} cases, {failures} failures")))
    })
}

/// Cells along a diagonal path of the deterministic automaton are i.i.d.
/// uniform.
pub fn diagonal_independence() -> Check {
    timed(2, "diagonal-independence", || {
        let positions: Vec<i64> = (0..=5).map(|d: i64| -(d / 2)).collect();
        let law = exact_diagonal_law(&z2(), 12, &positions)?;
        let target = 1.0 / 64.0;
        let worst = (0..law.counts.len())
            .map(|k| (law.probability(k) - target).abs())
            .fold(0.0, f64::max);
        Ok((
            law.counts.len() == 64 && worst <= 1e-12,
            format!("{} outcomes, max |P - 2^-6| = {worst:e}", law.counts.len()),
        ))
    })
}

/// Meeting probabilities of the coupling and the law of the hitting-time
/// increments.
pub fn coupling_checks(scale: Scale, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let p = EpsilonParams::new(z2(), 0.25).expect("valid epsilon");
    let reps = scale.n(100_000, 10_000);
    let mut runs_k1: Vec<CouplingRun> = Vec::new();
    let mut violations = 0u64;

    out.push(timed(3, "meeting-probability-k0", || {
        let runs = collect_runs(&p, 0, -10, reps, child_seed(seed, 30))?;
        let est = summarize(&p, 0, -10, &runs);
        violations += est.implication_violations;
        let exact = 0.9990234375;
        let bound_ok = (meeting_lower_bound(&p, 0, -10) - exact).abs() < 1e-12;
        let tol = scale.tol(0.005, binomial_sigma(exact, reps));
        Ok((
            bound_ok && (est.estimate - exact).abs() <= tol,
            format!("success {:.6} vs {exact} +- {tol}, {} replicas", est.estimate, reps),
        ))
    }));

    out.push(timed(3, "target-hit-probability-k1", || {
        let runs = collect_runs(&p, 1, -10, reps, child_seed(seed, 31))?;
        let est = summarize(&p, 1, -10, &runs);
        violations += est.implication_violations;
        let exact = 0.9453125;
        let bound_ok = (meeting_lower_bound(&p, 1, -10) - exact).abs() < 1e-12;
        let tol = scale.tol(0.01, binomial_sigma(exact, reps));
        let hit = est.target_hit_frequency();
        let ok = bound_ok && (hit - exact).abs() <= tol && est.estimate >= exact - tol;
        runs_k1 = runs;
        Ok((
            ok,
            format!(
                "P(T(1) <= 0) {hit:.6} vs {exact} +- {tol}; success {:.6}; gap {:.6}",
                est.estimate,
                est.gap()
            ),
        ))
    }));

    out.push(timed(3, "hit-implies-success", || {
        Ok((violations == 0, format!("{violations} replicas with T(k) <= 0 but no success")))
    }));

    out.push(timed(4, "geometric-increments", || {
        let max = 25i64;
        let mut table = FrequencyTable::new((1..=max).collect(), vec![0; max as usize])?;
        for run in &runs_k1 {
            let hits: Vec<i64> = run.hit_times.iter().map_while(|t| *t).collect();
            for w in hits.windows(2) {
                table.record(((w[1] - w[0]).min(max) - 1) as usize);
            }
        }
        let chi = chi_square_test(&table, &DiscreteDistribution::geometric_truncated(p.epst, max))?;
        Ok((
            chi.passes(0.01),
            format!(
                "{} increments, chi2 = {:.3} on {} dof, p = {:.4}",
                table.total(),
                chi.statistic,
                chi.dof,
                chi.p_value
            ),
        ))
    }));
    out
}

fn mixed_params(r: u64) -> EpsilonParams {
    let (g, eps) = match r % 6 {
        0 => (z2(), 0.2),
        1 => (z2(), 0.3),
        2 => (z2(), 0.4),
        3 => (GroupSpec::cyclic(3).unwrap(), 0.3),
        4 => (GroupSpec::cyclic(3).unwrap(), 0.55),
        _ => (GroupSpec::new(vec![2, 2]).unwrap(), 0.4),
    };
    EpsilonParams::new(g, eps).expect("valid epsilon")
}

/// `?` in the envelope started all-`?` at `n0` is exactly backward
/// reachability from level `n0 + 1`.
pub fn envelope_percolation_equivalence(scale: Scale, seed: u64, source: NoiseSource) -> Check {
    timed(5, "envelope-percolation-equivalence", || {
        let fields = scale.n(1000, 100);
        let (width, depth) = (128usize, 64i64);
        let mut mismatches = 0u64;
        let mut cells = 0u64;
        for r in 0..fields {
            let params = mixed_params(r);
            let q = params.order();
            let field = source.field(child_seed(seed, 50 + r));
            let env = simulate_envelope(&params, -depth, 0, 0, width, &field, Boundary::Cone)?;
            let perc = PercConfig::new(params.p, &field)?;
            let grid = OpenGrid::new(&perc, -depth + 1, 0, 0, width - 1);
            let reached = reached_from_level(&grid, -depth + 1);
            for (row, bits) in env[1..].iter().zip(&reached) {
                for (k, &c) in row.cells.iter().enumerate() {
                    cells += 1;
                    if (c == q) != bits.get(k) {
                        mismatches += 1;
                    }
                }
            }
        }
        Ok((
            mismatches == 0,
            format!("{fields} fields, {cells} cells, {mismatches} mismatches"),
        ))
    })
}

/// Every determined envelope cell equals the chain cell started from any
/// configuration with the same noise.
pub fn synchronization(scale: Scale, seed: u64, source: NoiseSource) -> Check {
    timed(6, "envelope-sandwich", || {
        let fields = scale.n(1000, 100);
        let (width, depth) = (128usize, 64i64);
        let mut determined = 0u64;
        let mut mismatches = 0u64;
        for r in 0..fields {
            let params = mixed_params(r);
            let q = params.order();
            let field = source.field(child_seed(seed, 60 + r));
            let init = NoiseField::new(child_seed(seed ^ 0xa11ce, r));
            let x0 = Window {
                base: 0,
                time: -depth,
                cells: (0..width as i64)
                    .map(|j| ((init.u(0, j) * f64::from(q)) as u32).min(q - 1))
                    .collect(),
            };
            let chain = simulate_chain(&params, &x0, &field, 0, Boundary::Cone)?;
            let env = simulate_envelope(&params, -depth, 0, 0, width, &field, Boundary::Cone)?;
            for (x, e) in chain.iter().zip(&env) {
                for (&xv, &ev) in x.cells.iter().zip(&e.cells) {
                    if ev != q {
                        determined += 1;
                        if ev != xv {
                            mismatches += 1;
                        }
                    }
                }
            }
        }
        Ok((
            mismatches == 0,
            format!("{fields} fields, {determined} determined cells, {mismatches} mismatches"),
        ))
    })
}

/// Horizons, marginals, shift-equivariance and two-start agreement of the
/// stationary sampler in the subcritical regime.
pub fn cftp_checks(scale: Scale, seed: u64, source: NoiseSource) -> Vec<Check> {
    let mut out = Vec::new();
    let p = EpsilonParams::new(z2(), 0.3).expect("valid epsilon");
    let opts = CftpOptions {
        depth_cap: 500,
        ..CftpOptions::default()
    };
    let reps = scale.n(100_000, 10_000);
    let mut windows: Vec<Option<[u32; 4]>> = Vec::new();

    out.push(timed(7, "cftp-horizon-found", || {
        let root = child_seed(seed, 70);
        windows = (0..reps)
            .map(|r| {
                let field = source.field(child_seed(root, r));
                let mut w = [0u32; 4];
                for (k, slot) in w.iter_mut().enumerate() {
                    match sample_site(&p, 0, k as i64, &field, opts)?.value {
                        Some(v) => *slot = v,
                        None => return Ok(None),
                    }
                }
                Ok(Some(w))
            })
            .collect::<Result<_>>()?;
        let truncated = windows.iter().filter(|w| w.is_none()).count();
        Ok((
            truncated == 0,
            format!("{reps} fields x 4 sites, depth cap 500, {truncated} truncated windows"),
        ))
    }));

    out.push(timed(7, "cftp-single-cell-marginal", || {
        let got: Vec<[u32; 4]> = windows.iter().flatten().copied().collect();
        let n = got.len() as u64;
        let ones = got.iter().filter(|w| w[0] == 1).count() as f64 / n as f64;
        let tol = scale.tol(0.005, binomial_sigma(0.5, n));
        Ok(((ones - 0.5).abs() <= tol, format!("P(X_0(0) = 1) = {ones:.5} over {n} samples, tol {tol}")))
    }));

    out.push(timed(7, "cftp-window-uniform", || {
        let table = FrequencyTable::from_samples(
            16,
            windows
                .iter()
                .flatten()
                .map(|w| w.iter().fold(0usize, |acc, &v| acc * 2 + v as usize)),
        );
        let chi = chi_square_test(&table, &DiscreteDistribution::uniform(16))?;
        Ok((
            chi.passes(0.01),
            format!("4-cell windows: chi2 = {:.3}, p = {:.4}", chi.statistic, chi.p_value),
        ))
    }));

    out.push(timed(7, "cftp-shift-equivariance", || {
        let trials = scale.n(1000, 200);
        let r = check_equivariance(&p, &NoiseField::new(child_seed(seed, 71)), trials, seed, CftpOptions::default())?;
        Ok((
            r.passed(),
            format!("{} / {} shifts agree, {} truncated", r.agreements, r.trials, r.truncations),
        ))
    }));

    out.push(timed(7, "cftp-two-start-agreement", || {
        let reps = scale.n(10_000, 1000);
        let n0 = -500i64;
        let zeros = Window {
            base: 0,
            time: n0,
            cells: vec![0; 501],
        };
        let ones = Window {
            cells: vec![1; 501],
            ..zeros.clone()
        };
        let root = child_seed(seed, 72);
        let mut agree = 0u64;
        let mut determined = 0u64;
        for r in 0..reps {
            let field = source.field(child_seed(root, r));
            let rep = two_start_agreement(&p, n0, &zeros, &ones, &field)?;
            agree += u64::from(rep.agree_at_origin);
            determined += u64::from(rep.envelope_determined);
        }
        Ok((
            agree == reps,
            format!("{agree} / {reps} agree at (0,0), envelope determined in {determined}"),
        ))
    }));
    out
}

/// Survival from the origin below and above the critical window.
pub fn percolation_checks(scale: Scale, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let reps = scale.n(200, 50);
    out.push(timed(8, "percolation-bracket", || {
        let lo = survival_estimate(0.60, 200, 4096, reps, child_seed(seed, 80), Direction::Forward)?;
        let hi = survival_estimate(0.80, 200, 4096, reps, child_seed(seed, 81), Direction::Forward)?;
        Ok((
            lo.estimate() < 0.01 && hi.estimate() > 0.2,
            format!(
                "survival to depth 200: p=0.60 -> {:.4}, p=0.80 -> {:.4} ({reps} replicas)",
                lo.estimate(),
                hi.estimate()
            ),
        ))
    }));
    out.push(timed(8, "percolation-time-symmetry", || {
        let reps = scale.n(4000, 1000);
        let fwd = survival_estimate(0.7, 40, 256, reps, child_seed(seed, 82), Direction::Forward)?;
        let bwd = survival_estimate(0.7, 40, 256, reps, child_seed(seed, 83), Direction::Backward)?;
        let (a, b) = (fwd.estimate(), bwd.estimate());
        let sigma = (binomial_sigma(a, reps).powi(2) + binomial_sigma(b, reps).powi(2)).sqrt();
        Ok((
            (a - b).abs() <= 3.0 * sigma.max(1e-12),
            format!("P(O_40) = {a:.4}, P(O_-40) = {b:.4}, 3 sigma = {:.4}", 3.0 * sigma),
        ))
    }));
    out
}

/// TV distance to uniform of the 3-cell window law from adversarial starts.
pub fn ergodicity_checks(scale: Scale, seed: u64) -> Vec<Check> {
    let p = EpsilonParams::new(z2(), 0.3).expect("valid epsilon");
    let reps = scale.n(100_000, 10_000);
    InitialConfig::adversarial(p.order())
        .into_iter()
        .enumerate()
        .map(|(k, init)| {
            timed(9, "markov-ergodicity", || {
                let pt = ergodicity_tv(&p, &init, 200, 3, reps, child_seed(seed, 90 + k as u64))?;
                Ok((pt.tv < 0.02, format!("{}: TV = {:.5} at depth 200, {reps} replicas", pt.init, pt.tv)))
            })
        })
        .collect()
}

/// Survival contrast of the difference process and the one-step deviation
/// bound.
pub fn dyncosy_checks(scale: Scale, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(timed(10, "dyncosy-low-noise-survival", || {
        let c = density_trajectory(&ZPcaParams::new(LOW_NOISE_EPSILON, 4096, 500)?, child_seed(seed, 100));
        let d = c.final_density();
        Ok((
            d >= SURVIVAL_DENSITY_MIN,
            format!("eps={LOW_NOISE_EPSILON}: final density {d:.4} (>= {SURVIVAL_DENSITY_MIN})"),
        ))
    }));
    out.push(timed(10, "dyncosy-high-noise-extinction", || {
        let c = density_trajectory(&ZPcaParams::new(HIGH_NOISE_EPSILON, 4096, 500)?, child_seed(seed, 101));
        let d = c.final_density();
        Ok((
            d <= EXTINCTION_DENSITY_MAX,
            format!("eps={HIGH_NOISE_EPSILON}: final density {d:.4} (<= {EXTINCTION_DENSITY_MAX})"),
        ))
    }));
    out.push(timed(10, "dyncosy-deviation-bound", || {
        let eps = 0.1;
        let params = ZPcaParams::new(eps, 4096, scale.n(250, 50))?;
        let (dev, cells) = deviation_counts(&params, 1, child_seed(seed, 102));
        let rate = dev as f64 / cells as f64;
        let bound = 2.0 * eps + 3.0 * binomial_sigma(2.0 * eps, cells);
        Ok((rate <= bound, format!("{cells} cells, deviation rate {rate:.5} <= {bound:.5}")))
    }));
    out
}

/// Small configurations of every experiment, for rerun comparisons.
pub fn reproducibility_configs(seed: u64) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for e in [
        Experiment::Cosy,
        Experiment::Perc,
        Experiment::Envelope,
        Experiment::Cftp,
        Experiment::Dyncosy,
        Experiment::Diag,
        Experiment::Ergo,
        Experiment::Verify,
    ] {
        let mut c = ExperimentConfig::defaults(e);
        c.suite = Suite::Static;
        c.seed = seed;
        c.replicas = 500;
        c.width = 256;
        c.depth = 40;
        c.depths = vec![5, 20];
        c.len = 8;
        c.positions = vec![0, 0, -1];
        c.sites = "0:0,0:1,-3:7,5:-2".parse().expect("valid sites");
        out.push(c);
    }
    let mut ext = ExperimentConfig::defaults(Experiment::Cosy);
    ext.extended_target = true;
    ext.replicas = 500;
    ext.seed = seed;
    out.push(ext);
    out
}

/// Every experiment rerun with the same config yields byte-identical data.
pub fn reproducibility(seed: u64) -> Check {
    timed(11, "reproducibility", || {
        let mut diffs = Vec::new();
        let configs = reproducibility_configs(seed);
        for c in &configs {
            for format in [Format::Csv, Format::Json] {
                let c = ExperimentConfig { format, ..c.clone() };
                let a = super::execute(&c)?;
                let b = super::execute(&c)?;
                let same = a.csv_body() == b.csv_body()
                    && serde_json::to_string(&a.payload).ok() == serde_json::to_string(&b.payload).ok();
                if !same {
                    diffs.push(c.experiment.name());
                }
            }
        }
        Ok((
            diffs.is_empty(),
            format!("{} configurations rerun; differing: {diffs:?}", configs.len()),
        ))
    })
}

/// Runs a suite.
pub fn run_suite(suite: Suite, scale: Scale, seed: u64, source: NoiseSource) -> Vec<Check> {
    let mut out = Vec::new();
    let has = |s: Suite| suite == s || suite == Suite::All;
    if has(Suite::Static) {
        out.push(block_inverse_roundtrip());
        out.push(diagonal_independence());
    }
    if has(Suite::Cosy) {
        out.extend(coupling_checks(scale, seed));
    }
    if has(Suite::Envelope) {
        out.push(envelope_percolation_equivalence(scale, seed, source));
        out.push(synchronization(scale, seed, source));
    }
    if has(Suite::Cftp) {
        out.extend(cftp_checks(scale, seed, source));
        out.extend(ergodicity_checks(scale, seed));
    }
    if has(Suite::Percolation) {
        out.extend(percolation_checks(scale, seed));
    }
    if has(Suite::Dyncosy) {
        out.extend(dyncosy_checks(scale, seed));
    }
    if suite == Suite::All {
        out.push(reproducibility(seed));
    }
    out
}
