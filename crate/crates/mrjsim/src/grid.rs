//! Discretization of the requirement cube into job types and enumeration of
//! admissible service options.
//!
//! A grid with per-resource resolution K splits coordinate l into buckets
//! ((i-1)/K_l, i/K_l]. A job of requirement v has type ceil(K_l * v_l) per
//! coordinate. A service option is a multiset of job types whose rounded-up
//! requirements fit the unit capacity, i.e. sum_i i_l * M(i) <= K_l for every
//! resource l.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Flat, zero-based index of a job type in lexicographic coordinate order.
pub type TypeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    k: Vec<u32>,
}

impl Grid {
    pub fn new(k: Vec<u32>) -> Result<Self> {
        if k.is_empty() || k.iter().any(|&x| x == 0) {
            return Err(Error::InvalidGrid);
        }
        Ok(Grid { k })
    }

    /// One resource with resolution `k`.
    pub fn one_dim(k: u32) -> Self {
        Grid { k: vec![k] }
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }

    pub fn k(&self) -> &[u32] {
        &self.k
    }

    /// Resolution of a one-dimensional grid.
    pub fn k1(&self) -> u32 {
        debug_assert_eq!(self.dim(), 1);
        self.k[0]
    }

    /// Number of job types, prod_l K_l.
    pub fn num_types(&self) -> usize {
        self.k.iter().map(|&x| x as usize).product()
    }

    /// Type of a requirement vector: i_l = ceil(K_l * v_l), so v_l = i/K_l
    /// lands in type i (buckets are left-open, right-closed).
    pub fn job_type(&self, v: &[f64]) -> Result<TypeId> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        let mut idx = 0usize;
        for (l, (&x, &k)) in v.iter().zip(&self.k).enumerate() {
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::RequirementOutOfRange { value: x, coord: l });
            }
            let i = (k as f64 * x).ceil() as u32;
            let i = i.clamp(1, k); // ceil of a positive product is already in [1, K]
            idx = idx * k as usize + (i - 1) as usize;
        }
        Ok(idx)
    }

    /// One-based coordinates of a flat type index.
    pub fn coords(&self, t: TypeId) -> Vec<u32> {
        debug_assert!(t < self.num_types());
        let mut rem = t;
        let mut out = vec![0u32; self.dim()];
        for l in (0..self.dim()).rev() {
            let k = self.k[l] as usize;
            out[l] = (rem % k) as u32 + 1;
            rem /= k;
        }
        out
    }

    pub fn type_of_coords(&self, c: &[u32]) -> TypeId {
        debug_assert_eq!(c.len(), self.dim());
        let mut idx = 0usize;
        for (&i, &k) in c.iter().zip(&self.k) {
            debug_assert!(i >= 1 && i <= k);
            idx = idx * k as usize + (i - 1) as usize;
        }
        idx
    }

    /// Rounded-up requirement i_l / K_l of a type, written into `out`.
    pub fn rounded_req(&self, t: TypeId, out: &mut [f64]) {
        let mut rem = t;
        for l in (0..self.dim()).rev() {
            let k = self.k[l] as usize;
            out[l] = ((rem % k) + 1) as f64 / k as f64;
            rem /= k;
        }
    }

    /// Human-readable type name: the 1-based bucket index, parenthesized per
    /// coordinate for d >= 2.
    pub fn type_label(&self, t: TypeId) -> String {
        let c = self.coords(t);
        if self.dim() == 1 {
            c[0].to_string()
        } else {
            let parts: Vec<String> = c.iter().map(|x| x.to_string()).collect();
            format!("({})", parts.join(","))
        }
    }
}

/// A multiset of job types scheduled together: sorted sparse (type, count)
/// pairs with positive counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ServiceOption {
    counts: Vec<(TypeId, u32)>,
}

impl ServiceOption {
    pub fn empty() -> Self {
        ServiceOption::default()
    }

    /// Normalizes: sorts by type, merges duplicates, drops zero counts.
    pub fn new(mut counts: Vec<(TypeId, u32)>) -> Self {
        counts.retain(|&(_, c)| c > 0);
        counts.sort_unstable_by_key(|&(t, _)| t);
        let mut merged: Vec<(TypeId, u32)> = Vec::with_capacity(counts.len());
        for (t, c) in counts {
            match merged.last_mut() {
                Some((lt, lc)) if *lt == t => *lc += c,
                _ => merged.push((t, c)),
            }
        }
        ServiceOption { counts: merged }
    }

    pub fn entries(&self) -> &[(TypeId, u32)] {
        &self.counts
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, t: TypeId) -> u32 {
        match self.counts.binary_search_by_key(&t, |&(ty, _)| ty) {
            Ok(i) => self.counts[i].1,
            Err(_) => 0,
        }
    }

    pub fn total_jobs(&self) -> u32 {
        self.counts.iter().map(|&(_, c)| c).sum()
    }

    /// Inner product with a per-type occupancy vector.
    pub fn weight(&self, q: &[u32]) -> u64 {
        self.counts
            .iter()
            .map(|&(t, c)| c as u64 * q[t] as u64)
            .sum()
    }

    /// Whether the rounded-up demand fits capacity: sum_i i_l * M(i) <= K_l.
    pub fn is_feasible(&self, grid: &Grid) -> bool {
        let d = grid.dim();
        let mut used = vec![0u64; d];
        for &(t, c) in &self.counts {
            let coords = grid.coords(t);
            for l in 0..d {
                used[l] += coords[l] as u64 * c as u64;
            }
        }
        used.iter().zip(grid.k()).all(|(&u, &k)| u <= k as u64)
    }

    /// Per-resource rounded-up utilization sum_i i_l * M(i), in grid units.
    pub fn utilization(&self, grid: &Grid) -> Vec<u64> {
        let d = grid.dim();
        let mut used = vec![0u64; d];
        for &(t, c) in &self.counts {
            let coords = grid.coords(t);
            for l in 0..d {
                used[l] += coords[l] as u64 * c as u64;
            }
        }
        used
    }

    /// Order of the dense count vectors, compared lexicographically by type.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        let mut a = self.counts.iter().peekable();
        let mut b = other.counts.iter().peekable();
        loop {
            match (a.peek(), b.peek()) {
                (None, None) => return Ordering::Equal,
                // remaining entries are positive at types the other lacks
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&&(ta, ca)), Some(&&(tb, cb))) => {
                    if ta < tb {
                        return Ordering::Greater; // self positive where other is zero
                    }
                    if tb < ta {
                        return Ordering::Less;
                    }
                    if ca != cb {
                        return ca.cmp(&cb);
                    }
                    a.next();
                    b.next();
                }
            }
        }
    }
}

/// How a candidate set was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Full,
    TwoJob,
    TwoBucket,
    PairwiseExtreme,
    Explicit,
}

/// A deduplicated, lexicographically sorted set of service options.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    options: Vec<ServiceOption>,
    pub provenance: Provenance,
}

impl CandidateSet {
    pub fn new(mut options: Vec<ServiceOption>, provenance: Provenance) -> Self {
        options.sort_unstable_by(|a, b| a.lex_cmp(b));
        options.dedup();
        CandidateSet { options, provenance }
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn options(&self) -> &[ServiceOption] {
        &self.options
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ServiceOption> {
        self.options.iter()
    }

    pub fn contains(&self, opt: &ServiceOption) -> bool {
        self.options
            .binary_search_by(|probe| probe.lex_cmp(opt))
            .is_ok()
    }

    /// One option per line as sorted `type:count` pairs; the zero option is an
    /// empty line.
    pub fn to_text(&self, grid: &Grid) -> String {
        let mut out = String::new();
        for opt in &self.options {
            let mut first = true;
            for &(t, c) in opt.entries() {
                if !first {
                    out.push(' ');
                }
                let _ = write!(out, "{}:{}", grid.type_label(t), c);
                first = false;
            }
            out.push('\n');
        }
        out
    }
}

pub const DEFAULT_ENUM_CAP: usize = 10_000_000;

/// Every admissible service option over the grid, the all-zero option
/// included, in lexicographic dense-count order. Errors once the set would
/// exceed `cap`.
pub fn enumerate_candidates(grid: &Grid, cap: usize) -> Result<CandidateSet> {
    let n = grid.num_types();
    let coords: Vec<Vec<u32>> = (0..n).map(|t| grid.coords(t)).collect();
    let mut budget: Vec<u64> = grid.k().iter().map(|&k| k as u64).collect();
    let mut out: Vec<ServiceOption> = Vec::new();
    let mut stack: Vec<(TypeId, u32)> = Vec::new();

    fn rec(
        t: TypeId,
        n: usize,
        coords: &[Vec<u32>],
        budget: &mut [u64],
        stack: &mut Vec<(TypeId, u32)>,
        out: &mut Vec<ServiceOption>,
        cap: usize,
    ) -> Result<()> {
        if t == n {
            if out.len() == cap {
                return Err(Error::EnumerationTooLarge { cap });
            }
            out.push(ServiceOption { counts: stack.clone() });
            return Ok(());
        }
        let c = &coords[t];
        let max: u64 = budget
            .iter()
            .zip(c)
            .map(|(&b, &x)| b / x as u64)
            .min()
            .unwrap();
        for m in 0..=max {
            if m > 0 {
                for (b, &x) in budget.iter_mut().zip(c) {
                    *b -= x as u64;
                }
                if m == 1 {
                    stack.push((t, 1));
                } else {
                    stack.last_mut().unwrap().1 = m as u32;
                }
            }
            rec(t + 1, n, coords, budget, stack, out, cap)?;
        }
        // restore the budget consumed by this type
        if max > 0 {
            for (b, &x) in budget.iter_mut().zip(c) {
                *b += max * x as u64;
            }
            stack.pop();
        }
        Ok(())
    }

    rec(0, n, &coords, &mut budget, &mut stack, &mut out, cap)?;
    Ok(CandidateSet { options: out, provenance: Provenance::Full })
}

/// The 2-Job efficient set: the full-capacity singleton, complementary pairs
/// {j, K-j}, and for boundary-heavy multiresource grids one singleton per
/// boundary type. All grid coordinates must share parity; an even grid adds
/// the self-complementary pair {K/2, K/2}.
pub fn efficient_set_2j(grid: &Grid) -> Result<CandidateSet> {
    let d = grid.dim();
    let mut opts: Vec<ServiceOption> = Vec::new();
    if d == 1 {
        let k = grid.k1();
        opts.push(ServiceOption::new(vec![(k as usize - 1, 1)]));
        for j in 1..k.div_ceil(2) {
            if j == k - j {
                continue;
            }
            opts.push(ServiceOption::new(vec![
                (j as usize - 1, 1),
                ((k - j) as usize - 1, 1),
            ]));
        }
        if k % 2 == 0 && k >= 2 {
            opts.push(ServiceOption::new(vec![(k as usize / 2 - 1, 2)]));
        }
        return Ok(CandidateSet::new(opts, Provenance::TwoJob));
    }

    let ks = grid.k();
    let all_odd = ks.iter().all(|&k| k % 2 == 1);
    let all_even = ks.iter().all(|&k| k % 2 == 0);
    if !all_odd && !all_even {
        return Err(Error::BadParity {
            got: ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("x"),
        });
    }

    // boundary singletons: one per type touching some K_l
    for t in 0..grid.num_types() {
        let c = grid.coords(t);
        if c.iter().zip(ks).any(|(&i, &k)| i == k) {
            opts.push(ServiceOption::new(vec![(t, 1)]));
        }
    }
    // pairs {j, K-j} over j_1 in ceil((K_1+1)/2)..K_1-1, j_l in 1..K_l-1
    let lo1 = (ks[0] + 1).div_ceil(2);
    let mut j = vec![0u32; d];
    fn pairs(
        l: usize,
        d: usize,
        lo1: u32,
        ks: &[u32],
        j: &mut Vec<u32>,
        grid: &Grid,
        opts: &mut Vec<ServiceOption>,
    ) {
        if l == d {
            let comp: Vec<u32> = j.iter().zip(ks).map(|(&x, &k)| k - x).collect();
            opts.push(ServiceOption::new(vec![
                (grid.type_of_coords(j), 1),
                (grid.type_of_coords(&comp), 1),
            ]));
            return;
        }
        let lo = if l == 0 { lo1 } else { 1 };
        for x in lo..ks[l] {
            j[l] = x;
            pairs(l + 1, d, lo1, ks, j, grid, opts);
        }
    }
    pairs(0, d, lo1, ks, &mut j, grid, &mut opts);

    if all_even {
        let half: Vec<u32> = ks.iter().map(|&k| k / 2).collect();
        opts.push(ServiceOption::new(vec![(grid.type_of_coords(&half), 2)]));
    }
    Ok(CandidateSet::new(opts, Provenance::TwoJob))
}

/// The 2-Bucket efficient set for a one-dimensional grid with K = 2^L: each
/// type k is served by an option that pads k up to its enclosing power of two
/// and replicates to fill capacity exactly.
pub fn efficient_set_2b(grid: &Grid) -> Result<CandidateSet> {
    if grid.dim() != 1 {
        return Err(Error::NotOneDimensional { context: "the 2-Bucket efficient set" });
    }
    let k = grid.k1();
    if !k.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { k });
    }
    let opts = (1..=k).map(|j| two_bucket_option(k, j)).collect();
    Ok(CandidateSet::new(opts, Provenance::TwoBucket))
}

/// The 2-Bucket option that serves type `j` on a one-dimensional grid with
/// K = 2^L: pad j up to its enclosing power of two, replicate to fill
/// capacity exactly.
pub fn two_bucket_option(k: u32, j: u32) -> ServiceOption {
    debug_assert!(k.is_power_of_two() && (1..=k).contains(&j));
    let l = ceil_log2(j);
    let reps = 1u32 << (k.trailing_zeros() - l);
    if j.is_power_of_two() {
        ServiceOption::new(vec![(j as usize - 1, reps)])
    } else {
        let pad = (1u32 << l) - j;
        ServiceOption::new(vec![(j as usize - 1, reps), (pad as usize - 1, reps)])
    }
}

/// Pairwise-extreme set for even K in one dimension: full-utilization options
/// that are not the sum of two distinct full-utilization options at K/2. A
/// cheap proxy for the extreme vertices of the candidate polytope.
pub fn efficient_set_xp(grid: &Grid) -> Result<CandidateSet> {
    if grid.dim() != 1 {
        return Err(Error::NotOneDimensional { context: "the pairwise-extreme set" });
    }
    let k = grid.k1();
    if k % 2 != 0 {
        return Err(Error::NotEven { k });
    }
    let full = exact_partitions(k);
    let halves = exact_partitions(k / 2);
    let mut sums: HashSet<ServiceOption> = HashSet::new();
    for i in 0..halves.len() {
        for j in (i + 1)..halves.len() {
            let mut merged = halves[i].counts.clone();
            merged.extend_from_slice(&halves[j].counts);
            sums.insert(ServiceOption::new(merged));
        }
    }
    let opts: Vec<ServiceOption> = full.into_iter().filter(|m| !sums.contains(m)).collect();
    Ok(CandidateSet::new(opts, Provenance::PairwiseExtreme))
}

/// All options with sum k * M(k) exactly n (integer partitions of n as type
/// multisets, types being 1..=n).
fn exact_partitions(n: u32) -> Vec<ServiceOption> {
    let mut out = Vec::new();
    let mut parts: Vec<(TypeId, u32)> = Vec::new();
    fn rec(rem: u32, max_part: u32, parts: &mut Vec<(TypeId, u32)>, out: &mut Vec<ServiceOption>) {
        if rem == 0 {
            let mut cs = parts.clone();
            cs.reverse(); // built from largest part down; store ascending
            out.push(ServiceOption { counts: cs });
            return;
        }
        for part in (1..=max_part.min(rem)).rev() {
            let max_count = rem / part;
            for count in 1..=max_count {
                parts.push((part as usize - 1, count));
                rec(rem - part * count, part - 1, parts, out);
                parts.pop();
            }
        }
    }
    rec(n, n, &mut parts, &mut out);
    out
}

pub(crate) fn ceil_log2(x: u32) -> u32 {
    debug_assert!(x >= 1);
    32 - (x - 1).leading_zeros().min(32)
}
