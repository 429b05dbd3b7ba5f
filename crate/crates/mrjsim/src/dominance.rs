//! Stability math over a discretization grid: arrival-rate vectors, service
//! mixes, the dominance certificate, explicit stabilizing constructions, the
//! max-margin linear program, K-selection formulas, load normalization, and
//! the Lipschitz density sup bound.
//!
//! A service mix beta assigns probabilities to service options. It dominates
//! an arrival-rate vector Lambda when every type is served faster than it
//! arrives; the margin delta = min_i eta(i)/Lambda(i) - 1 over arriving types
//! is the stability certificate, and delta > 0 guarantees a stabilizing
//! policy exists at this K.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::dist::{ArrivalSpec, Dist};
use crate::error::{Error, Result};
use crate::grid::{ceil_log2, two_bucket_option, CandidateSet, Grid, ServiceOption, TypeId};
use crate::lp;

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_LP_CAP: usize = 10_000;

/// Per-type arrival rates Lambda(i), one entry per job type of the grid.
#[derive(Debug, Clone)]
pub struct RateVector {
    rates: Vec<f64>,
}

impl RateVector {
    pub fn new(rates: Vec<f64>) -> Self {
        debug_assert!(rates.iter().all(|&r| r >= 0.0));
        RateVector { rates }
    }

    /// Discretized arrival measure: rates(i) = lambda * P(V in bucket i).
    pub fn from_arrivals(spec: &ArrivalSpec, grid: &Grid) -> Result<Self> {
        let rates = (0..grid.num_types())
            .map(|t| Ok(spec.lambda * spec.dist.bucket_probability(grid, t)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(RateVector { rates })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Total arrival rate, lambda up to bucket-integration error.
    pub fn total(&self) -> f64 {
        self.rates.iter().sum()
    }
}

/// A probability distribution over service options; mass not assigned to any
/// option is idle slack.
#[derive(Debug, Clone, Default)]
pub struct ServiceMix {
    entries: Vec<(ServiceOption, f64)>,
}

impl ServiceMix {
    /// Keeps only entries with positive weight.
    pub fn new(entries: Vec<(ServiceOption, f64)>) -> Self {
        let entries = entries.into_iter().filter(|&(_, w)| w > 0.0).collect();
        ServiceMix { entries }
    }

    pub fn empty() -> Self {
        ServiceMix::default()
    }

    pub fn entries(&self) -> &[(ServiceOption, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w).sum()
    }

    pub fn slack(&self) -> f64 {
        1.0 - self.total_mass()
    }

    /// Induced service rates eta(i) = sum_M beta(M) * M(i).
    pub fn service_rates(&self, num_types: usize) -> Vec<f64> {
        let mut eta = vec![0.0; num_types];
        for (opt, w) in &self.entries {
            for &(t, c) in opt.entries() {
                eta[t] += w * c as f64;
            }
        }
        eta
    }
}

#[derive(Debug, Clone)]
pub struct PerType {
    pub ty: TypeId,
    pub arrival: f64,
    pub service: f64,
}

/// Outcome of the dominance check. `delta` is the minimum service margin
/// over types that actually arrive; the mix is a stability certificate
/// exactly when `satisfied`.
#[derive(Debug, Clone)]
pub struct DominanceReport {
    pub delta: f64,
    pub satisfied: bool,
    pub per_type: Vec<PerType>,
}

impl DominanceReport {
    /// CSV table of per-type rates; the ratio column is blank for types that
    /// never arrive.
    pub fn table(&self, grid: &Grid) -> String {
        let mut out = String::from("type,arrival_rate,service_rate,ratio\n");
        for row in &self.per_type {
            let _ = write!(out, "{},{},{}", grid.type_label(row.ty), row.arrival, row.service);
            if row.arrival > 0.0 {
                let _ = writeln!(out, ",{}", row.service / row.arrival);
            } else {
                out.push_str(",\n");
            }
        }
        out
    }
}

/// delta = min over arriving types of eta(i)/Lambda(i) - 1. An unserved
/// arriving type gives delta = -1; a rate vector with no arriving types is
/// vacuously dominated (delta = +inf).
pub fn check_dominance(mix: &ServiceMix, rates: &RateVector) -> DominanceReport {
    let eta = mix.service_rates(rates.len());
    let mut delta = f64::INFINITY;
    let mut per_type = Vec::with_capacity(rates.len());
    for (ty, (&a, &s)) in rates.rates().iter().zip(&eta).enumerate() {
        if a > 0.0 {
            delta = delta.min(s / a - 1.0);
        }
        per_type.push(PerType { ty, arrival: a, service: s });
    }
    DominanceReport { delta, satisfied: delta > 0.0, per_type }
}

/// Stabilizing mix over the 2-Bucket set from bucket masses `p` (weakly
/// decreasing, length K = 2^L). Folds the mass sequence in half each round;
/// the surviving prefix entries become option weights such that the induced
/// service rate is (1+epsilon)*lambda*p_k exactly for every type k.
pub fn construct_beta_2b(p: &[f64], lambda: f64, epsilon: f64) -> Result<ServiceMix> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let k = p.len() as u32;
    if k == 0 || !k.is_power_of_two() {
        return Err(Error::NotPowerOfTwo { k });
    }
    for j in 1..p.len() {
        if p[j] > p[j - 1] + 1e-12 {
            return Err(Error::MassesNotDecreasing { index: j + 1, prev: p[j - 1], value: p[j] });
        }
    }

    let big_l = k.trailing_zeros();
    // proxy[j] is the round-(L - ceil_log2(j)) entry at index j; each round
    // freezes the back half of its live prefix
    let mut proxy = vec![0.0f64; k as usize + 1];
    let mut cur = p.to_vec();
    for j in (k / 2 + 1)..=k {
        proxy[j as usize] = cur[(j - 1) as usize];
    }
    for r in 1..=big_l {
        let n_r = 1u32 << (big_l - r);
        let mut next = vec![0.0f64; n_r as usize];
        for j in 1..n_r {
            let v = cur[(j - 1) as usize] - cur[(2 * n_r - j - 1) as usize];
            if v < -1e-12 {
                return Err(Error::ConstructionInfeasible { round: r as usize, index: j as usize });
            }
            next[(j - 1) as usize] = v.max(0.0);
        }
        next[(n_r - 1) as usize] = cur[(n_r - 1) as usize];
        cur = next;
        for j in (n_r / 2 + 1)..=n_r {
            proxy[j as usize] = cur[(j - 1) as usize];
        }
    }

    let scale = (1.0 + epsilon) * lambda;
    let mut entries = Vec::with_capacity(k as usize);
    let mut mass = 0.0;
    for j in 1..=k {
        let reps = 1u64 << (big_l - ceil_log2(j));
        let beta = scale * proxy[j as usize] / reps as f64;
        mass += beta;
        if beta > 0.0 {
            entries.push((two_bucket_option(k, j), beta));
        }
    }
    if mass > 1.0 {
        // suggest a resolution from the bucket-midpoint mean estimate
        let mean_est =
            p.iter().enumerate().map(|(i, &pi)| pi * (i as f64 + 0.5)).sum::<f64>() / k as f64;
        let required_k = select_k_2b(lambda, mean_est).ok();
        return Err(Error::MassOverflow { mass, required_k });
    }
    Ok(ServiceMix::new(entries))
}

/// Stabilizing mix over the 2-Job set: the full-capacity singleton and each
/// boundary singleton get (1+epsilon) times their own arrival rate, each
/// complementary pair gets (1+epsilon) times the larger of its two rates.
/// Requires odd K per coordinate so no type pairs with itself.
pub fn construct_beta_2j(rates: &RateVector, grid: &Grid, epsilon: f64) -> Result<ServiceMix> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if rates.len() != grid.num_types() {
        return Err(Error::DimensionMismatch { expected: grid.num_types(), got: rates.len() });
    }
    let ks = grid.k();
    if ks.iter().any(|&x| x % 2 == 0) {
        return Err(Error::NotOdd {
            got: ks.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("x"),
        });
    }

    let scale = 1.0 + epsilon;
    let r = rates.rates();
    let d = grid.dim();
    let mut entries: Vec<(ServiceOption, f64)> = Vec::new();
    if d == 1 {
        let k = grid.k1();
        entries.push((
            ServiceOption::new(vec![(k as usize - 1, 1)]),
            scale * r[k as usize - 1],
        ));
        for j in 1..=(k - 1) / 2 {
            let opt = ServiceOption::new(vec![(j as usize - 1, 1), ((k - j) as usize - 1, 1)]);
            entries.push((opt, scale * r[j as usize - 1].max(r[(k - j) as usize - 1])));
        }
    } else {
        for t in 0..grid.num_types() {
            let c = grid.coords(t);
            if c.iter().zip(ks).any(|(&i, &x)| i == x) {
                entries.push((ServiceOption::new(vec![(t, 1)]), scale * r[t]));
            }
        }
        let lo1 = (ks[0] + 1) / 2; // first coordinate strictly above K_1/2
        let mut j = vec![0u32; d];
        pair_box(0, lo1, ks, &mut j, grid, &mut |grid, j| {
            let comp: Vec<u32> = j.iter().zip(ks).map(|(&x, &k)| k - x).collect();
            let a = grid.type_of_coords(j);
            let b = grid.type_of_coords(&comp);
            entries.push((
                ServiceOption::new(vec![(a, 1), (b, 1)]),
                scale * r[a].max(r[b]),
            ));
        });
    }

    let mass: f64 = entries.iter().map(|&(_, w)| w).sum();
    if mass > 1.0 {
        let required_k = select_k_2j(rates.total(), d, true).ok();
        return Err(Error::MassOverflow { mass, required_k });
    }
    Ok(ServiceMix::new(entries))
}

fn pair_box(
    l: usize,
    lo1: u32,
    ks: &[u32],
    j: &mut Vec<u32>,
    grid: &Grid,
    f: &mut impl FnMut(&Grid, &[u32]),
) {
    if l == ks.len() {
        f(grid, j);
        return;
    }
    let lo = if l == 0 { lo1 } else { 1 };
    for x in lo..ks[l] {
        j[l] = x;
        pair_box(l + 1, lo1, ks, j, grid, f);
    }
}

/// Largest delta such that some mix serves every arriving type at
/// (1+delta) times its rate: maximize gamma = 1+delta subject to
/// gamma*Lambda(i) <= sum_M beta(M)*M(i) and sum beta <= 1.
pub fn max_dominance_lp(
    rates: &RateVector,
    candidates: &CandidateSet,
    cap: usize,
) -> Result<(f64, ServiceMix)> {
    if candidates.len() > cap {
        return Err(Error::LpTooLarge { cap });
    }
    let n_opts = candidates.len();
    let mut rows = Vec::new();
    let mut b = Vec::new();
    for (i, &a) in rates.rates().iter().enumerate() {
        if a <= 0.0 {
            continue;
        }
        let mut row = vec![0.0; 1 + n_opts];
        row[0] = a;
        for (m, opt) in candidates.iter().enumerate() {
            row[1 + m] = -(opt.count(i) as f64);
        }
        rows.push(row);
        b.push(0.0);
    }
    let mut budget = vec![1.0; 1 + n_opts];
    budget[0] = 0.0;
    rows.push(budget);
    b.push(1.0);

    let mut c = vec![0.0; 1 + n_opts];
    c[0] = 1.0;
    let sol = lp::maximize(&c, &rows, &b)?;
    let entries: Vec<(ServiceOption, f64)> = candidates
        .iter()
        .zip(&sol.x[1..])
        .filter(|&(_, &w)| w > 1e-12)
        .map(|(o, &w)| (o.clone(), w))
        .collect();
    Ok((sol.objective - 1.0, ServiceMix::new(entries)))
}

fn snap_to_integer(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 { r } else { x }
}

/// Smallest power-of-two resolution the folding construction is guaranteed
/// to stabilize: K = 2^L with L = floor(-log2(1/lambda - E V)) + 1.
pub fn select_k_2b(lambda: f64, mean_v: f64) -> Result<u32> {
    debug_assert!(lambda > 0.0 && mean_v > 0.0);
    let slack = 1.0 / lambda - mean_v;
    if slack <= 0.0 {
        return Err(Error::NoStableK {
            reason: format!(
                "lambda * E[V] = {:.6} reaches the capacity bound of 1",
                lambda * mean_v
            ),
        });
    }
    let l = (snap_to_integer(-slack.log2()).floor() as i64 + 1).max(0);
    if l > 31 {
        return Err(Error::KOutOfRange);
    }
    Ok(1u32 << l)
}

/// Smallest odd resolution the pairing construction is guaranteed to
/// stabilize: the least odd K with K >= floor(lambda/(2-lambda)) + 1 in one
/// dimension, or K >= floor(2*lambda*d/(2-lambda)) + 1 for uniform
/// multiresource requirements.
pub fn select_k_2j(lambda: f64, d: usize, uniform: bool) -> Result<u32> {
    debug_assert!(lambda > 0.0 && d >= 1);
    if lambda >= 2.0 {
        return Err(Error::NoStableK {
            reason: format!("lambda = {lambda} >= 2: the pairing bound needs lambda < 2"),
        });
    }
    if d >= 2 && !uniform {
        return Err(Error::NoStableK {
            reason: "the multiresource K-selection formula covers uniform requirements only"
                .into(),
        });
    }
    let ratio = if d == 1 {
        lambda / (2.0 - lambda)
    } else {
        2.0 * lambda * d as f64 / (2.0 - lambda)
    };
    let bound = snap_to_integer(ratio).floor() as u64 + 1;
    let k = if bound % 2 == 1 { bound } else { bound + 1 };
    u32::try_from(k).map_err(|_| Error::KOutOfRange)
}

/// Normalized load rho = lambda / lambda*, with lambda* supplied or known
/// for the distribution family.
pub fn stability_load(spec: &ArrivalSpec, lambda_star: Option<f64>) -> Result<f64> {
    let ls = match lambda_star {
        Some(v) if v > 0.0 => v,
        Some(v) => {
            return Err(Error::config("lambda-star", format!("must be positive, got {v}")))
        }
        None => intrinsic_lambda_star(&spec.dist).ok_or(Error::UnknownStabilityBoundary)?,
    };
    Ok(spec.lambda / ls)
}

/// The known stability boundary of a distribution family: 2 for requirement
/// laws symmetric about 1/2 (pairing fills capacity in the K limit), the
/// capacity bound 1/E V for decreasing densities where it is achieved, the
/// exact packing bound floor(1/v) for a point mass. None when the boundary
/// is not known.
pub fn intrinsic_lambda_star(dist: &Dist) -> Option<f64> {
    match dist {
        Dist::Uniform => Some(2.0),
        Dist::TruncatedNormal { mean, .. } if *mean == 0.5 => Some(2.0),
        Dist::TriangularDecreasing | Dist::BoundedLomax { .. } => Some(1.0 / dist.mean()[0]),
        Dist::PointMass { value } => Some((1.0 / value + 1e-9).floor()),
        Dist::Product(ds) if ds.iter().all(|m| matches!(m, Dist::Uniform)) => Some(2.0),
        _ => None,
    }
}

/// Upper bound on the sup of a Lipschitz density on the unit cube:
/// L(C,d) = ((d+1) pi^{d/2} max(C,C*)^d / (2^d Gamma(d/2+1)))^{1/(d+1)},
/// where C* makes the bound its own fixed point.
pub fn lipschitz_sup_bound(c: f64, d: u32) -> f64 {
    debug_assert!(c >= 0.0 && d >= 1);
    let c_star = lipschitz_fixed_point(d);
    let m = c.max(c_star);
    if d == 1 {
        // sqrt keeps the d=1 values exact where the powers cancel
        (c_star * m).sqrt()
    } else {
        (c_star * m.powi(d as i32)).powf(1.0 / (d as f64 + 1.0))
    }
}

fn lipschitz_fixed_point(d: u32) -> f64 {
    (d as f64 + 1.0) * pi_pow_half(d) / (2f64.powi(d as i32) * gamma_half(d + 2))
}

fn pi_pow_half(d: u32) -> f64 {
    let whole = PI.powi((d / 2) as i32);
    if d % 2 == 1 { whole * PI.sqrt() } else { whole }
}

/// Gamma(n/2) for integer n >= 1 by the recurrence from Gamma(1/2) = sqrt(pi)
/// and Gamma(1) = 1.
fn gamma_half(n: u32) -> f64 {
    match n {
        1 => PI.sqrt(),
        2 => 1.0,
        _ => (n as f64 / 2.0 - 1.0) * gamma_half(n - 2),
    }
}
