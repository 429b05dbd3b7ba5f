//! Pure scheduling decisions: MaxWeight selection over a candidate set,
//! greedy packing for the index baselines, backfilling, the Pseudo-MW trace
//! heuristic, and the nonpreemptive modulated-service-rate machinery.
//!
//! Everything here is a function of explicit state; the engine owns job
//! storage and calls in on every state change.

use rand::Rng;

use crate::dominance::{max_dominance_lp, construct_beta_2b, construct_beta_2j, RateVector, ServiceMix};
use crate::error::{Error, Result};
use crate::grid::{CandidateSet, Grid, ServiceOption, TypeId};

/// Tolerance on true-capacity sums; absorbs accumulated addition error.
pub const CAP_TOL: f64 = 1e-12;

pub fn fits(used: &[f64], req: &[f64]) -> bool {
    used.iter().zip(req).all(|(u, r)| u + r <= 1.0 + CAP_TOL)
}

/// The option maximizing the queue-weighted job count <M, q>. Ties prefer
/// more jobs in service, then the lexicographically smallest count vector;
/// a zero maximum means idle (None). Candidate sets iterate in ascending
/// lexicographic order, so keeping the first of an exact tie realizes the
/// final tie-break.
pub fn maxweight_select<'a>(q: &[u32], candidates: &'a CandidateSet) -> Option<&'a ServiceOption> {
    let mut best: Option<(&'a ServiceOption, u64, u32)> = None;
    for opt in candidates.iter() {
        let w = opt.weight(q);
        if w == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, bw, bj)) => w > bw || (w == bw && opt.total_jobs() > bj),
        };
        if better {
            best = Some((opt, w, opt.total_jobs()));
        }
    }
    best.map(|(o, _, _)| o)
}

/// Greedily select jobs in the iterator's order while they fit on top of
/// `used`, which accumulates the selections. `stop_on_misfit` makes the
/// first failure final (head-of-line blocking); otherwise misfits are
/// skipped and the scan continues.
pub fn greedy_pack<'a, I>(jobs: I, used: &mut [f64], stop_on_misfit: bool) -> Vec<u64>
where
    I: IntoIterator<Item = (u64, &'a [f64])>,
{
    let mut out = Vec::new();
    for (id, req) in jobs {
        if fits(used, req) {
            for (u, r) in used.iter_mut().zip(req) {
                *u += r;
            }
            out.push(id);
        } else if stop_on_misfit {
            break;
        }
    }
    out
}

/// Pack additional waiting jobs (arrival order) into the true capacity left
/// over by a base schedule. Never unseats the base selections.
pub fn backfill<'a, I>(waiting: I, true_used: &mut [f64]) -> Vec<u64>
where
    I: IntoIterator<Item = (u64, &'a [f64])>,
{
    greedy_pack(waiting, true_used, false)
}

/// Trace heuristic: group waiting jobs by exact requirement value, order
/// groups by requirement divided by group size (ascending, ties to the
/// smaller requirement), then greedy-pack in that order, skipping misfits.
/// `jobs` must be sorted by requirement, oldest first within equal values.
pub fn pseudo_mw_select(jobs: &[(u64, f64)]) -> Vec<u64> {
    let mut groups: Vec<(f64, usize, usize)> = Vec::new(); // value, start, len
    for (i, &(_, r)) in jobs.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if g.0 == r => g.2 += 1,
            _ => groups.push((r, i, 1)),
        }
    }
    groups.sort_by(|a, b| {
        let ra = a.0 / a.2 as f64;
        let rb = b.0 / b.2 as f64;
        ra.partial_cmp(&rb).unwrap().then(a.0.partial_cmp(&b.0).unwrap())
    });
    let mut used = 0.0f64;
    let mut out = Vec::new();
    for &(r, start, len) in &groups {
        for &(id, _) in &jobs[start..start + len] {
            if used + r <= 1.0 + CAP_TOL {
                used += r;
                out.push(id);
            }
        }
    }
    out
}

/// How the modulated-service-rate mix is obtained offline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecomputeMethod {
    Lp,
    Construction2B,
    Construction2J,
}

/// Offline mix for the nonpreemptive modulated policy: a dominant mix with
/// support no larger than the type count. The LP route fails with a
/// not-stabilizable error when no mix dominates at this K; the construction
/// routes propagate their own infeasibility errors.
pub fn nmsr_precompute(
    rates: &RateVector,
    grid: &Grid,
    candidates: &CandidateSet,
    method: PrecomputeMethod,
    epsilon: f64,
    lp_cap: usize,
) -> Result<ServiceMix> {
    match method {
        PrecomputeMethod::Lp => {
            let (delta, mix) = max_dominance_lp(rates, candidates, lp_cap)?;
            if delta <= 0.0 {
                return Err(Error::NotStabilizable { delta });
            }
            Ok(mix)
        }
        PrecomputeMethod::Construction2B => {
            if grid.dim() != 1 {
                return Err(Error::NotOneDimensional { context: "the 2-Bucket construction" });
            }
            let lambda = rates.total();
            let p: Vec<f64> = rates.rates().iter().map(|r| r / lambda).collect();
            construct_beta_2b(&p, lambda, epsilon)
        }
        PrecomputeMethod::Construction2J => construct_beta_2j(rates, grid, epsilon),
    }
}

/// One jump of the modulating chain: the next option is drawn from the mix
/// renormalized over its support, independent of the current one.
pub fn sample_mix_index<R: Rng>(mix: &ServiceMix, rng: &mut R) -> usize {
    debug_assert!(!mix.is_empty());
    let u: f64 = rng.gen::<f64>() * mix.total_mass();
    let mut acc = 0.0;
    for (i, (_, w)) in mix.entries().iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    mix.entries().len() - 1
}

/// Start waiting jobs (arrival order) under the active option: a job starts
/// only if its type has a free slot, the rounded-up utilization of slotted
/// jobs stays within the grid, and the true utilization of everything in
/// service stays within capacity. All three aggregates are updated with each
/// admission. Running jobs are never touched.
pub fn nmsr_admit<'a, I>(
    waiting: I,
    option: &ServiceOption,
    grid: &Grid,
    in_service_counts: &mut [u32],
    used_units: &mut [u64],
    true_used: &mut [f64],
) -> Vec<u64>
where
    I: IntoIterator<Item = (u64, TypeId, &'a [f64])>,
{
    let ks = grid.k();
    let mut out = Vec::new();
    for (id, ty, req) in waiting {
        if in_service_counts[ty] >= option.count(ty) {
            continue;
        }
        let coords = grid.coords(ty);
        let rounded_ok = used_units
            .iter()
            .zip(&coords)
            .zip(ks)
            .all(|((&u, &c), &k)| u + c as u64 <= k as u64);
        if !rounded_ok || !fits(true_used, req) {
            continue;
        }
        in_service_counts[ty] += 1;
        for ((u, &c), (t, r)) in
            used_units.iter_mut().zip(&coords).zip(true_used.iter_mut().zip(req))
        {
            *u += c as u64;
            *t += r;
        }
        out.push(id);
    }
    out
}
