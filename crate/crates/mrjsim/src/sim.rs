//! Event-driven simulation of the queue.
//!
//! Arrivals are Poisson, service durations Exp(1), and the schedule is
//! recomputed on every state change. Memorylessness carries the whole
//! design: the next event time is exponential with the sum of the active
//! rates, the event category is chosen proportionally, the completing job
//! is uniform over the jobs in service, and preempted jobs simply return
//! to waiting with no remaining-time bookkeeping.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Bound;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use smallvec::SmallVec;

use crate::dist::{ArrivalSpec, Dist, Req};
use crate::dominance::{RateVector, ServiceMix, DEFAULT_EPSILON, DEFAULT_LP_CAP};
use crate::error::{Error, Result};
use crate::grid::{
    efficient_set_2b, efficient_set_2j, efficient_set_xp, enumerate_candidates, CandidateSet,
    Grid, Provenance, TypeId, DEFAULT_ENUM_CAP,
};
use crate::policy::{
    backfill, greedy_pack, maxweight_select, nmsr_admit, nmsr_precompute, pseudo_mw_select,
    sample_mix_index, PrecomputeMethod, CAP_TOL,
};

pub const DEFAULT_N_JOBS: u64 = 1_000_000;
pub const DEFAULT_MAX_QUEUE: usize = 10_000;
pub const DEFAULT_MAX_MRT: f64 = 1_000.0;

/// How often (in events) the running mean response time is compared with
/// its cutoff.
const MRT_CHECK_EVERY: u64 = 10_000;

/// Where jobs come from: i.i.d. requirement samples, or a fixed sequence
/// consumed in order (arrival epochs are Poisson either way).
#[derive(Debug, Clone)]
pub enum Source {
    Iid(ArrivalSpec),
    Trace { lambda: f64, values: Arc<Vec<f64>>, label: String },
}

impl Source {
    pub fn lambda(&self) -> f64 {
        match self {
            Source::Iid(spec) => spec.lambda,
            Source::Trace { lambda, .. } => *lambda,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Source::Iid(spec) => spec.dist.label(),
            Source::Trace { label, .. } => label.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    MaxWeight(Provenance),
    Nmsr { method: PrecomputeMethod, theta: f64 },
    Fcfs,
    FirstFit,
    BestFit,
    Lsf,
    PseudoMw,
}

/// A policy choice as named in configs: the base kind plus the optional
/// backfilling pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub backfill: bool,
}

pub const DEFAULT_THETA: f64 = 0.1;

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec { kind, backfill: false }
    }

    pub fn with_backfill(kind: PolicyKind) -> Self {
        PolicySpec { kind, backfill: true }
    }

    pub fn name(&self) -> String {
        let base = match self.kind {
            PolicyKind::MaxWeight(Provenance::Full) => "k-mw",
            PolicyKind::MaxWeight(Provenance::TwoJob) => "2j-emw",
            PolicyKind::MaxWeight(Provenance::TwoBucket) => "2b-emw",
            PolicyKind::MaxWeight(Provenance::PairwiseExtreme) => "xp-emw",
            PolicyKind::MaxWeight(Provenance::Explicit) => "custom-mw",
            PolicyKind::Nmsr { .. } => "k-nmsr",
            PolicyKind::Fcfs => "fcfs",
            PolicyKind::FirstFit => "first-fit",
            PolicyKind::BestFit => "best-fit",
            PolicyKind::Lsf => "lsf",
            PolicyKind::PseudoMw => "pseudo-mw",
        };
        if self.backfill {
            format!("{base}-b")
        } else {
            base.to_string()
        }
    }

    pub fn theta(&self) -> f64 {
        match self.kind {
            PolicyKind::Nmsr { theta, .. } => theta,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub source: Source,
    pub policy: PolicySpec,
    pub grid: Grid,
    pub n_jobs: u64,
    pub seed: u64,
    pub max_queue: usize,
    pub max_mrt: f64,
    pub warmup: u64,
    pub epsilon: f64,
}

impl SimConfig {
    pub fn new(source: Source, policy: PolicySpec, grid: Grid) -> Self {
        SimConfig {
            source,
            policy,
            grid,
            n_jobs: DEFAULT_N_JOBS,
            seed: 0,
            max_queue: DEFAULT_MAX_QUEUE,
            max_mrt: DEFAULT_MAX_MRT,
            warmup: 0,
            epsilon: DEFAULT_EPSILON,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_jobs == 0 {
            return Err(Error::config("jobs", "job budget must be at least 1"));
        }
        if self.max_queue == 0 || !(self.max_mrt > 0.0) {
            return Err(Error::config("cutoff", "instability cutoffs must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    /// Jobs completed before the run ended.
    pub completed: u64,
    /// Completions counted in the mean (after the warmup discard).
    pub counted: u64,
    /// Mean response time over counted completions; None when nothing
    /// completed past warmup.
    pub mean_response_time: Option<f64>,
    pub max_queue_len: usize,
    pub unstable: bool,
    pub events: u64,
    pub wall_secs: f64,
    pub seed: u64,
}

enum Prep {
    MaxWeight { candidates: CandidateSet },
    Greedy { kind: GreedyKind },
    PseudoMw,
    Nmsr { mix: ServiceMix, theta: f64 },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum GreedyKind {
    Fcfs,
    FirstFit,
    BestFit,
    Lsf,
}

fn prepare(cfg: &SimConfig) -> Result<Prep> {
    let grid = &cfg.grid;
    match cfg.policy.kind {
        PolicyKind::MaxWeight(prov) => {
            let candidates = match prov {
                Provenance::Full => enumerate_candidates(grid, DEFAULT_ENUM_CAP)?,
                Provenance::TwoJob => efficient_set_2j(grid)?,
                Provenance::TwoBucket => efficient_set_2b(grid)?,
                Provenance::PairwiseExtreme => efficient_set_xp(grid)?,
                Provenance::Explicit => {
                    return Err(Error::config("policy", "custom candidate sets are not wired up"))
                }
            };
            Ok(Prep::MaxWeight { candidates })
        }
        PolicyKind::Nmsr { method, .. } => {
            let theta = cfg.policy.theta();
            if !(theta > 0.0) {
                return Err(Error::InvalidTheta(theta));
            }
            let rates = match &cfg.source {
                Source::Iid(spec) => RateVector::from_arrivals(spec, grid)?,
                Source::Trace { lambda, values, .. } => {
                    let spec = ArrivalSpec::new(*lambda, Dist::empirical(values.as_ref().clone())?)?;
                    RateVector::from_arrivals(&spec, grid)?
                }
            };
            let candidates = enumerate_candidates(grid, DEFAULT_LP_CAP)?;
            let mix = nmsr_precompute(&rates, grid, &candidates, method, cfg.epsilon, DEFAULT_LP_CAP)?;
            Ok(Prep::Nmsr { mix, theta })
        }
        PolicyKind::Fcfs => Ok(Prep::Greedy { kind: GreedyKind::Fcfs }),
        PolicyKind::FirstFit => Ok(Prep::Greedy { kind: GreedyKind::FirstFit }),
        PolicyKind::BestFit => Ok(Prep::Greedy { kind: GreedyKind::BestFit }),
        PolicyKind::Lsf => Ok(Prep::Greedy { kind: GreedyKind::Lsf }),
        PolicyKind::PseudoMw => {
            if grid.dim() != 1 {
                return Err(Error::NotOneDimensional { context: "the pseudo-MaxWeight policy" });
            }
            Ok(Prep::PseudoMw)
        }
    }
}

struct Job {
    arrival: f64,
    ty: TypeId,
    req: Req,
}

/// Sort key for size-ordered scans: the requirement in d=1, the maximum
/// coordinate otherwise. Positive floats order like their bit patterns.
fn size_key(dim: usize, seq: u64, job: &Job) -> (u64, u64) {
    let v = if dim == 1 {
        job.req[0]
    } else {
        job.req.iter().cloned().fold(0.0, f64::max)
    };
    (v.to_bits(), seq)
}

/// Greedy descending-size packing on one resource via range queries:
/// repeatedly take the largest job that still fits. Equivalent to a
/// skip-scan in decreasing size order, without visiting the misfits.
/// Set keys are (size bits, seq); positive floats order like their bits.
fn pack_desc_1d(set: &BTreeSet<(u64, u64)>, req_of: impl Fn(u64) -> f64) -> Vec<u64> {
    let mut used = 0.0f64;
    let mut picked = Vec::new();
    let mut last: Option<(u64, u64)> = None;
    loop {
        let cap = 1.0 + CAP_TOL - used;
        if cap <= 0.0 {
            break;
        }
        let cap_key = (cap.min(1.0).to_bits(), u64::MAX);
        let upper = match last {
            Some(k) if k <= cap_key => Bound::Excluded(k),
            _ => Bound::Included(cap_key),
        };
        let Some(&(bits, seq)) = set.range((Bound::Unbounded, upper)).next_back() else {
            break;
        };
        used += req_of(seq);
        picked.push(seq);
        last = Some((bits, seq));
    }
    picked
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    prep: Prep,
    dim: usize,
    // all jobs in the system, keyed by arrival sequence number
    jobs: BTreeMap<u64, Job>,
    q_counts: Vec<u32>,
    // arrival-ordered ids per type, for oldest-first MaxWeight realization
    per_type: Option<Vec<BTreeSet<u64>>>,
    // (size bits, seq) for size-ordered scans; key is the requirement in
    // d=1 and the maximum coordinate otherwise
    by_size: Option<BTreeSet<(u64, u64)>>,
    serving: Vec<u64>,
    // parallel to serving under nMSR: true for slot-admitted jobs, false
    // for backfilled ones
    slotted: Vec<bool>,
    serving_set: BTreeSet<u64>,
    cur_option: usize,
    scratch_counts: Vec<u32>,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, prep: Prep) -> Self {
        let num_types = cfg.grid.num_types();
        let per_type = match prep {
            Prep::MaxWeight { .. } => Some(vec![BTreeSet::new(); num_types]),
            _ => None,
        };
        let by_size = match prep {
            Prep::Greedy { kind: GreedyKind::BestFit | GreedyKind::Lsf } | Prep::PseudoMw => {
                Some(BTreeSet::new())
            }
            _ => None,
        };
        Sim {
            cfg,
            prep,
            dim: cfg.grid.dim(),
            jobs: BTreeMap::new(),
            q_counts: vec![0; num_types],
            per_type,
            by_size,
            serving: Vec::new(),
            slotted: Vec::new(),
            serving_set: BTreeSet::new(),
            cur_option: 0,
            scratch_counts: vec![0; num_types],
        }
    }

    fn insert_job(&mut self, seq: u64, job: Job) {
        self.q_counts[job.ty] += 1;
        if let Some(pt) = &mut self.per_type {
            pt[job.ty].insert(seq);
        }
        let key = size_key(self.dim, seq, &job);
        if let Some(bs) = &mut self.by_size {
            bs.insert(key);
        }
        self.jobs.insert(seq, job);
    }

    fn remove_job(&mut self, seq: u64) -> Job {
        let job = self.jobs.remove(&seq).expect("completing job exists");
        self.q_counts[job.ty] -= 1;
        if let Some(pt) = &mut self.per_type {
            pt[job.ty].remove(&seq);
        }
        let key = size_key(self.dim, seq, &job);
        if let Some(bs) = &mut self.by_size {
            bs.remove(&key);
        }
        job
    }

    /// Recompute the schedule after a state change. For preemptive kinds
    /// the previous schedule dissolves entirely; under nMSR only new
    /// admissions happen here.
    fn reschedule(&mut self) {
        match &self.prep {
            Prep::MaxWeight { candidates } => {
                self.serving.clear();
                let mut used: SmallVec<[f64; 4]> = smallvec::smallvec![0.0; self.dim];
                if let Some(opt) = maxweight_select(&self.q_counts, candidates) {
                    let pt = self.per_type.as_ref().expect("per-type index present");
                    for &(ty, m) in opt.entries() {
                        for &seq in pt[ty].iter().take(m as usize) {
                            self.serving.push(seq);
                            let req = &self.jobs[&seq].req;
                            for (u, r) in used.iter_mut().zip(req.iter()) {
                                *u += r;
                            }
                        }
                    }
                }
                if self.cfg.policy.backfill {
                    self.serving.sort_unstable();
                    let serving = &self.serving;
                    let waiting = self
                        .jobs
                        .iter()
                        .filter(|(seq, _)| serving.binary_search(*seq).is_err())
                        .map(|(&seq, job)| (seq, &job.req[..]));
                    let extra = backfill(waiting, &mut used);
                    self.serving.extend(extra);
                    self.assert_work_conserving();
                }
                self.audit();
            }
            Prep::Greedy { kind } => {
                let kind = *kind;
                self.serving = self.greedy_schedule(kind);
                if self.cfg.policy.backfill {
                    self.apply_backfill();
                }
                if kind == GreedyKind::FirstFit {
                    self.assert_work_conserving();
                }
                self.audit();
            }
            Prep::PseudoMw => {
                let bs = self.by_size.as_ref().expect("size index present");
                let ordered: Vec<(u64, f64)> =
                    bs.iter().map(|&(bits, seq)| (seq, f64::from_bits(bits))).collect();
                self.serving = pseudo_mw_select(&ordered);
                if self.cfg.policy.backfill {
                    self.apply_backfill();
                }
                self.audit();
            }
            Prep::Nmsr { mix, .. } => {
                // rebuild the slotted aggregates from scratch; incremental
                // float state would drift over millions of events
                self.scratch_counts.fill(0);
                let mut units = vec![0u64; self.dim];
                let mut true_used = vec![0.0f64; self.dim];
                for (i, &seq) in self.serving.iter().enumerate() {
                    let job = &self.jobs[&seq];
                    for (t, r) in true_used.iter_mut().zip(job.req.iter()) {
                        *t += r;
                    }
                    if self.slotted[i] {
                        self.scratch_counts[job.ty] += 1;
                        for (u, &c) in units.iter_mut().zip(&self.cfg.grid.coords(job.ty)) {
                            *u += c as u64;
                        }
                    }
                }
                let option = &mix.entries()[self.cur_option].0;
                let serving_set = &self.serving_set;
                let waiting = self
                    .jobs
                    .iter()
                    .filter(|(seq, _)| !serving_set.contains(*seq))
                    .map(|(&seq, job)| (seq, job.ty, &job.req[..]));
                let started = nmsr_admit(
                    waiting,
                    option,
                    &self.cfg.grid,
                    &mut self.scratch_counts,
                    &mut units,
                    &mut true_used,
                );
                for seq in started {
                    self.serving.push(seq);
                    self.slotted.push(true);
                    self.serving_set.insert(seq);
                }
                if self.cfg.policy.backfill {
                    let serving_set = &self.serving_set;
                    let waiting = self
                        .jobs
                        .iter()
                        .filter(|(seq, _)| !serving_set.contains(*seq))
                        .map(|(&seq, job)| (seq, &job.req[..]));
                    let extra = backfill(waiting, &mut true_used);
                    for seq in extra {
                        self.serving.push(seq);
                        self.slotted.push(false);
                        self.serving_set.insert(seq);
                    }
                }
                self.audit();
            }
        }
    }

    fn greedy_schedule(&self, kind: GreedyKind) -> Vec<u64> {
        let mut used: SmallVec<[f64; 4]> = smallvec::smallvec![0.0; self.dim];
        match kind {
            GreedyKind::Fcfs => greedy_pack(
                self.jobs.iter().map(|(&seq, job)| (seq, &job.req[..])),
                &mut used,
                true,
            ),
            GreedyKind::FirstFit => greedy_pack(
                self.jobs.iter().map(|(&seq, job)| (seq, &job.req[..])),
                &mut used,
                false,
            ),
            GreedyKind::BestFit => {
                let bs = self.by_size.as_ref().expect("size index present");
                if self.dim == 1 {
                    pack_desc_1d(bs, |seq| self.jobs[&seq].req[0])
                } else {
                    greedy_pack(
                        bs.iter().rev().map(|&(_, seq)| (seq, &self.jobs[&seq].req[..])),
                        &mut used,
                        false,
                    )
                }
            }
            GreedyKind::Lsf => {
                let bs = self.by_size.as_ref().expect("size index present");
                greedy_pack(
                    bs.iter().map(|&(_, seq)| (seq, &self.jobs[&seq].req[..])),
                    &mut used,
                    self.dim == 1,
                )
            }
        }
    }

    fn apply_backfill(&mut self) {
        let mut used: SmallVec<[f64; 4]> = smallvec::smallvec![0.0; self.dim];
        self.serving.sort_unstable();
        for &seq in &self.serving {
            for (u, r) in used.iter_mut().zip(self.jobs[&seq].req.iter()) {
                *u += r;
            }
        }
        let serving = &self.serving;
        let waiting = self
            .jobs
            .iter()
            .filter(|(seq, _)| serving.binary_search(*seq).is_err())
            .map(|(&seq, job)| (seq, &job.req[..]));
        let extra = backfill(waiting, &mut used);
        self.serving.extend(extra);
    }

    /// Independent recomputation of the capacity constraint on every
    /// schedule: the sum of true requirements in service must fit.
    fn audit(&self) {
        let mut used: SmallVec<[f64; 4]> = smallvec::smallvec![0.0; self.dim];
        for &seq in &self.serving {
            for (u, r) in used.iter_mut().zip(self.jobs[&seq].req.iter()) {
                *u += r;
            }
        }
        for (l, &u) in used.iter().enumerate() {
            assert!(
                u <= 1.0 + CAP_TOL,
                "capacity audit failed: resource {l} at {u} under {}",
                self.cfg.policy.name()
            );
        }
    }

    fn assert_work_conserving(&self) {
        assert!(
            !(self.serving.is_empty() && !self.jobs.is_empty()),
            "work conservation audit failed: idle schedule with {} jobs waiting under {}",
            self.jobs.len(),
            self.cfg.policy.name()
        );
    }
}

pub fn run_simulation(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let started = Instant::now();
    let prep = prepare(cfg)?;
    let lambda = cfg.source.lambda();
    let budget = match &cfg.source {
        Source::Iid(_) => cfg.n_jobs,
        Source::Trace { values, .. } => cfg.n_jobs.min(values.len() as u64),
    };
    if let Source::Trace { .. } = cfg.source {
        if cfg.grid.dim() != 1 {
            return Err(Error::NotOneDimensional { context: "trace-driven arrivals" });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sim = Sim::new(cfg, prep);
    if let Prep::Nmsr { mix, .. } = &sim.prep {
        sim.cur_option = sample_mix_index(mix, &mut rng);
    }
    let theta = match &sim.prep {
        Prep::Nmsr { theta, .. } => *theta,
        _ => 0.0,
    };

    let mut t = 0.0f64;
    let mut arrived = 0u64;
    let mut completed = 0u64;
    let mut counted = 0u64;
    let mut rt_sum = 0.0f64;
    let mut max_queue_len = 0usize;
    let mut unstable = false;
    let mut events = 0u64;
    // safety net against a schedule that stops serving: no legitimate run
    // needs anywhere near this many events before a cutoff fires
    let event_cap = 64 * budget + 10_000_000;

    loop {
        if arrived == budget && sim.jobs.is_empty() {
            break;
        }
        let lam = if arrived < budget { lambda } else { 0.0 };
        let srate = sim.serving.len() as f64;
        let total = lam + srate + theta;
        debug_assert!(total > 0.0, "no active clocks with jobs in system");
        let step: f64 = rng.sample(Exp1);
        t += step / total;
        events += 1;

        let u: f64 = rng.gen::<f64>() * total;
        if u < lam {
            arrived += 1;
            let req: Req = match &cfg.source {
                Source::Iid(spec) => spec.dist.sample(&mut rng),
                Source::Trace { values, .. } => {
                    smallvec::smallvec![values[(arrived - 1) as usize]]
                }
            };
            let ty = cfg.grid.job_type(&req)?;
            sim.insert_job(arrived, Job { arrival: t, ty, req });
            sim.reschedule();
        } else if u < lam + srate {
            let idx = rng.gen_range(0..sim.serving.len());
            let seq = sim.serving[idx];
            if matches!(sim.prep, Prep::Nmsr { .. }) {
                sim.serving.swap_remove(idx);
                sim.slotted.swap_remove(idx);
                sim.serving_set.remove(&seq);
            }
            let job = sim.remove_job(seq);
            completed += 1;
            if completed > cfg.warmup {
                rt_sum += t - job.arrival;
                counted += 1;
            }
            sim.reschedule();
        } else {
            let mix = match &sim.prep {
                Prep::Nmsr { mix, .. } => mix,
                _ => unreachable!("jump event without a modulating chain"),
            };
            sim.cur_option = sample_mix_index(mix, &mut rng);
            sim.reschedule();
        }

        let in_system = sim.jobs.len();
        if in_system > max_queue_len {
            max_queue_len = in_system;
        }
        if in_system > cfg.max_queue {
            unstable = true;
            break;
        }
        if events % MRT_CHECK_EVERY == 0 && counted > 0 && rt_sum / counted as f64 > cfg.max_mrt {
            unstable = true;
            break;
        }
        if events >= event_cap {
            unstable = true;
            break;
        }
    }

    Ok(SimResult {
        completed,
        counted,
        mean_response_time: (counted > 0).then(|| rt_sum / counted as f64),
        max_queue_len,
        unstable,
        events,
        wall_secs: started.elapsed().as_secs_f64(),
        seed: cfg.seed,
    })
}

/// Run a batch of configurations, optionally on a bounded worker pool.
/// Results keep the input order regardless of completion order; each run
/// is independent and fully determined by its own config and seed.
pub fn run_many(configs: &[SimConfig], workers: Option<usize>) -> Vec<Result<SimResult>> {
    let run_all = || configs.par_iter().map(run_simulation).collect();
    match workers {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("worker pool")
            .install(run_all),
        _ => run_all(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Dist;

    fn iid(lambda: f64, dist: Dist) -> Source {
        Source::Iid(ArrivalSpec::new(lambda, dist).unwrap())
    }

    fn mw(prov: Provenance) -> PolicySpec {
        PolicySpec::new(PolicyKind::MaxWeight(prov))
    }

    #[test]
    fn mm1_matches_oracle_roughly() {
        let mut cfg = SimConfig::new(
            iid(0.5, Dist::PointMass { value: 1.0 }),
            mw(Provenance::Full),
            Grid::one_dim(1),
        );
        cfg.n_jobs = 40_000;
        cfg.seed = 1;
        let res = run_simulation(&cfg).unwrap();
        assert!(!res.unstable);
        assert_eq!(res.completed, 40_000);
        let mrt = res.mean_response_time.unwrap();
        assert!((mrt - 2.0).abs() / 2.0 < 0.1, "MRT {mrt} too far from 2.0");
    }

    #[test]
    fn identical_seeds_reproduce_bitwise() {
        let mut cfg = SimConfig::new(
            iid(1.2, Dist::Uniform),
            PolicySpec::new(PolicyKind::FirstFit),
            Grid::one_dim(8),
        );
        cfg.n_jobs = 5_000;
        cfg.seed = 77;
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        assert_eq!(a.mean_response_time.unwrap().to_bits(), b.mean_response_time.unwrap().to_bits());
        assert_eq!(a.events, b.events);
        assert_eq!(a.max_queue_len, b.max_queue_len);

        cfg.seed = 78;
        let c = run_simulation(&cfg).unwrap();
        assert_ne!(a.mean_response_time.unwrap().to_bits(), c.mean_response_time.unwrap().to_bits());
    }

    #[test]
    fn all_jobs_complete_on_natural_end() {
        for policy in [
            mw(Provenance::Full),
            mw(Provenance::TwoJob),
            mw(Provenance::TwoBucket),
            mw(Provenance::PairwiseExtreme),
            PolicySpec::with_backfill(PolicyKind::MaxWeight(Provenance::TwoJob)),
            PolicySpec::new(PolicyKind::Fcfs),
            PolicySpec::new(PolicyKind::FirstFit),
            PolicySpec::new(PolicyKind::BestFit),
            PolicySpec::new(PolicyKind::Lsf),
            PolicySpec::new(PolicyKind::PseudoMw),
            PolicySpec::new(PolicyKind::Nmsr {
                method: PrecomputeMethod::Lp,
                theta: 0.1,
            }),
        ] {
            let mut cfg =
                SimConfig::new(iid(1.0, Dist::Uniform), policy, Grid::one_dim(4));
            cfg.n_jobs = 3_000;
            cfg.seed = 5;
            let res = run_simulation(&cfg).unwrap();
            assert!(!res.unstable, "{} flagged unstable", policy.name());
            assert_eq!(res.completed, 3_000, "{} lost jobs", policy.name());
            assert!(res.mean_response_time.unwrap() > 0.9);
        }
    }

    #[test]
    fn overload_trips_queue_cutoff() {
        let mut cfg = SimConfig::new(
            iid(2.0, Dist::PointMass { value: 1.0 }),
            mw(Provenance::Full),
            Grid::one_dim(1),
        );
        cfg.n_jobs = 1_000_000;
        cfg.seed = 3;
        let res = run_simulation(&cfg).unwrap();
        assert!(res.unstable);
        // whichever cutoff fired, its condition must hold at the break
        assert!(
            res.max_queue_len > DEFAULT_MAX_QUEUE
                || res.mean_response_time.unwrap() > DEFAULT_MAX_MRT
        );
        assert!(res.completed < 1_000_000);
    }

    #[test]
    fn mrt_cutoff_fires_with_partial_mean() {
        let mut cfg = SimConfig::new(
            iid(0.95, Dist::PointMass { value: 1.0 }),
            mw(Provenance::Full),
            Grid::one_dim(1),
        );
        cfg.n_jobs = 1_000_000;
        cfg.seed = 9;
        cfg.max_mrt = 2.0; // M/M/1 at rho=0.95 has E[T]=20
        let res = run_simulation(&cfg).unwrap();
        assert!(res.unstable);
        assert!(res.mean_response_time.unwrap() > 2.0);
        assert!(res.completed < 1_000_000);
    }

    #[test]
    fn trace_source_consumes_values_in_order() {
        let values = Arc::new(vec![0.5, 0.2, 0.9]);
        let mut cfg = SimConfig::new(
            Source::Trace { lambda: 1.0, values: values.clone(), label: "trace:test".into() },
            PolicySpec::new(PolicyKind::FirstFit),
            Grid::one_dim(4),
        );
        cfg.seed = 11;
        let res = run_simulation(&cfg).unwrap();
        assert_eq!(res.completed, 3, "stream length bounds the run");
        assert!(!res.unstable);

        cfg.n_jobs = 2;
        let res = run_simulation(&cfg).unwrap();
        assert_eq!(res.completed, 2, "explicit budget truncates the stream");
    }

    #[test]
    fn warmup_discards_early_completions() {
        let mut cfg = SimConfig::new(
            iid(0.5, Dist::PointMass { value: 1.0 }),
            mw(Provenance::Full),
            Grid::one_dim(1),
        );
        cfg.n_jobs = 1_000;
        cfg.warmup = 200;
        let res = run_simulation(&cfg).unwrap();
        assert_eq!(res.completed, 1_000);
        assert_eq!(res.counted, 800);
    }

    #[test]
    fn sweep_keeps_input_order_and_seeds() {
        let mut configs = Vec::new();
        for (i, lambda) in [0.4, 0.8, 1.2].iter().enumerate() {
            let mut cfg = SimConfig::new(
                iid(*lambda, Dist::Uniform),
                PolicySpec::new(PolicyKind::FirstFit),
                Grid::one_dim(4),
            );
            cfg.n_jobs = 2_000;
            cfg.seed = 100 + i as u64;
            configs.push(cfg);
        }
        let results = run_many(&configs, Some(2));
        assert_eq!(results.len(), 3);
        for (i, res) in results.iter().enumerate() {
            let res = res.as_ref().unwrap();
            assert_eq!(res.seed, 100 + i as u64);
            assert_eq!(res.completed, 2_000);
        }
        // heavier load should respond slower, light one faster
        let first = results[0].as_ref().unwrap().mean_response_time.unwrap();
        let last = results[2].as_ref().unwrap().mean_response_time.unwrap();
        assert!(first < last);
    }

    #[test]
    fn prep_errors_surface_not_panic() {
        let cfg = SimConfig::new(
            iid(1.0, Dist::Uniform),
            mw(Provenance::TwoBucket),
            Grid::one_dim(6),
        );
        assert!(matches!(run_simulation(&cfg), Err(Error::NotPowerOfTwo { k: 6 })));

        let mut cfg = SimConfig::new(
            iid(1.9, Dist::Uniform),
            PolicySpec::new(PolicyKind::Nmsr { method: PrecomputeMethod::Lp, theta: 0.1 }),
            Grid::one_dim(3),
        );
        cfg.n_jobs = 10;
        assert!(matches!(run_simulation(&cfg), Err(Error::NotStabilizable { .. })));

        let cfg = SimConfig::new(
            iid(1.0, Dist::Uniform),
            PolicySpec::new(PolicyKind::Nmsr { method: PrecomputeMethod::Lp, theta: 0.0 }),
            Grid::one_dim(2),
        );
        assert!(matches!(run_simulation(&cfg), Err(Error::InvalidTheta(t)) if t == 0.0));
    }

    #[test]
    fn desc_packing_matches_naive_scan() {

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..300 {
            let n = rng.gen_range(1..40);
            let mut set = BTreeSet::new();
            let mut reqs = std::collections::HashMap::new();
            for seq in 0..n {
                // mix continuous sizes with repeated ones to exercise ties
                let v: f64 = if rng.gen_bool(0.3) {
                    [0.1, 0.25, 0.3][rng.gen_range(0..3)]
                } else {
                    rng.gen_range(0.01..1.0)
                };
                set.insert((v.to_bits(), seq));
                reqs.insert(seq, v);
            }
            let fast = pack_desc_1d(&set, |seq| reqs[&seq]);
            let mut used = 0.0;
            let mut naive = Vec::new();
            for &(bits, seq) in set.iter().rev() {
                let v = f64::from_bits(bits);
                if used + v <= 1.0 + CAP_TOL {
                    used += v;
                    naive.push(seq);
                }
            }
            assert_eq!(fast, naive, "case {case} diverged");
        }
    }

    #[test]
    fn nmsr_runs_with_construction_mix() {
        let mut cfg = SimConfig::new(
            iid(1.0, Dist::Uniform),
            PolicySpec::new(PolicyKind::Nmsr {
                method: PrecomputeMethod::Construction2J,
                theta: 0.2,
            }),
            Grid::one_dim(5),
        );
        cfg.n_jobs = 3_000;
        cfg.seed = 13;
        let res = run_simulation(&cfg).unwrap();
        assert_eq!(res.completed, 3_000);
        assert!(!res.unstable);

        // backfilled variant also drains fully
        let mut cfg2 = cfg.clone();
        cfg2.policy = PolicySpec::with_backfill(PolicyKind::Nmsr {
            method: PrecomputeMethod::Construction2J,
            theta: 0.2,
        });
        let res = run_simulation(&cfg2).unwrap();
        assert_eq!(res.completed, 3_000);
    }

    #[test]
    fn multiresource_policies_run() {
        let grid = Grid::new(vec![3, 3]).unwrap();
        let dist = Dist::Product(vec![Dist::Uniform, Dist::Uniform]);
        for policy in [
            mw(Provenance::Full),
            mw(Provenance::TwoJob),
            PolicySpec::new(PolicyKind::BestFit),
            PolicySpec::new(PolicyKind::Lsf),
        ] {
            let mut cfg = SimConfig::new(iid(0.8, dist.clone()), policy, grid.clone());
            cfg.n_jobs = 1_500;
            cfg.seed = 17;
            let res = run_simulation(&cfg).unwrap();
            assert_eq!(res.completed, 1_500, "{} lost jobs", policy.name());
        }
    }

    #[test]
    fn policy_names_round_out() {
        assert_eq!(mw(Provenance::Full).name(), "k-mw");
        assert_eq!(
            PolicySpec::with_backfill(PolicyKind::MaxWeight(Provenance::TwoJob)).name(),
            "2j-emw-b"
        );
        assert_eq!(
            PolicySpec::new(PolicyKind::Nmsr { method: PrecomputeMethod::Lp, theta: 0.1 })
                .name(),
            "k-nmsr"
        );
        assert_eq!(PolicySpec::new(PolicyKind::PseudoMw).name(), "pseudo-mw");
    }
}
