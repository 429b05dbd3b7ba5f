//! Requirement distributions on (0, 1]^d.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::grid::{Grid, TypeId};

/// A sampled requirement vector. Inline storage covers d <= 2 without allocating.
pub type Req = SmallVec<[f64; 2]>;

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Requirement distribution of a single job. All families have support inside
/// (0, 1] per coordinate; `Product` composes independent one-dimensional
/// marginals for multiresource jobs.
#[derive(Debug, Clone, PartialEq)]
pub enum Dist {
    /// Uniform on (0, 1].
    Uniform,
    /// Normal(mean, sd) conditioned on [0, 1].
    TruncatedNormal { mean: f64, sd: f64 },
    /// Lomax(shape, scale) conditioned on [0, 1]. With shape 2, scale 1 the
    /// density is 8/3 * (1+v)^-3.
    BoundedLomax { shape: f64, scale: f64 },
    /// Density 2 - 2v on [0, 1].
    TriangularDecreasing,
    /// Isosceles triangle on [lower, upper].
    SymmetricTriangular { lower: f64, upper: f64 },
    /// Deterministic requirement.
    PointMass { value: f64 },
    /// Independent one-dimensional marginals, one per resource.
    Product(Vec<Dist>),
    /// Uniform draw from a fixed list of observed values (kept sorted).
    Empirical(Vec<f64>),
}

impl Dist {
    /// Empirical distribution over `values`; sorts and validates the support.
    pub fn empirical(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDistribution("empirical value list is empty".into()));
        }
        for &v in &values {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::RequirementOutOfRange { value: v, coord: 0 });
            }
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Dist::Empirical(values))
    }

    pub fn dim(&self) -> usize {
        match self {
            Dist::Product(ds) => ds.len(),
            _ => 1,
        }
    }

    /// The marginal of coordinate `l`.
    pub fn marginal(&self, l: usize) -> &Dist {
        match self {
            Dist::Product(ds) => &ds[l],
            d => {
                debug_assert_eq!(l, 0);
                d
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Dist::Uniform | Dist::TriangularDecreasing => Ok(()),
            Dist::TruncatedNormal { sd, .. } => {
                if *sd > 0.0 && sd.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidDistribution(format!("sd must be positive, got {sd}")))
                }
            }
            Dist::BoundedLomax { shape, scale } => {
                if *shape > 0.0 && *scale > 0.0 && shape.is_finite() && scale.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidDistribution(format!(
                        "shape and scale must be positive, got ({shape}, {scale})"
                    )))
                }
            }
            Dist::SymmetricTriangular { lower, upper } => {
                if *lower >= 0.0 && lower < upper && *upper <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidDistribution(format!(
                        "need 0 <= lower < upper <= 1, got ({lower}, {upper})"
                    )))
                }
            }
            Dist::PointMass { value } => {
                if *value > 0.0 && *value <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::RequirementOutOfRange { value: *value, coord: 0 })
                }
            }
            Dist::Product(ds) => {
                if ds.is_empty() {
                    return Err(Error::InvalidDistribution("product of zero marginals".into()));
                }
                for d in ds {
                    if matches!(d, Dist::Product(_)) {
                        return Err(Error::InvalidDistribution("nested product".into()));
                    }
                    d.validate()?;
                }
                Ok(())
            }
            Dist::Empirical(values) => {
                if values.is_empty() {
                    return Err(Error::InvalidDistribution("empirical value list is empty".into()));
                }
                for &v in values {
                    if !(v > 0.0 && v <= 1.0) {
                        return Err(Error::RequirementOutOfRange { value: v, coord: 0 });
                    }
                }
                Ok(())
            }
        }
    }

    /// Probability density at `v`. Zero outside the support; an error for the
    /// atomic families (PointMass, Empirical), which have no density.
    pub fn pdf(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        match self {
            Dist::Product(ds) => {
                let mut p = 1.0;
                for (d, &x) in ds.iter().zip(v) {
                    p *= d.pdf(&[x])?;
                }
                Ok(p)
            }
            _ => self.pdf1(v[0]),
        }
    }

    fn pdf1(&self, v: f64) -> Result<f64> {
        let val = match self {
            Dist::Uniform => {
                if v > 0.0 && v <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Dist::TruncatedNormal { mean, sd } => {
                if (0.0..=1.0).contains(&v) {
                    let z = (normal_cdf((1.0 - mean) / sd) - normal_cdf(-mean / sd)).max(f64::MIN_POSITIVE);
                    normal_pdf((v - mean) / sd) / (sd * z)
                } else {
                    0.0
                }
            }
            Dist::BoundedLomax { shape, scale } => {
                if (0.0..=1.0).contains(&v) {
                    let z = 1.0 - (1.0 + 1.0 / scale).powf(-shape);
                    (shape / scale) * (1.0 + v / scale).powf(-(shape + 1.0)) / z
                } else {
                    0.0
                }
            }
            Dist::TriangularDecreasing => {
                if (0.0..=1.0).contains(&v) {
                    2.0 - 2.0 * v
                } else {
                    0.0
                }
            }
            Dist::SymmetricTriangular { lower, upper } => {
                let w = upper - lower;
                let mid = 0.5 * (lower + upper);
                if v < *lower || v > *upper {
                    0.0
                } else if v <= mid {
                    4.0 * (v - lower) / (w * w)
                } else {
                    4.0 * (upper - v) / (w * w)
                }
            }
            Dist::PointMass { .. } | Dist::Empirical(_) => return Err(Error::NoDensity),
            Dist::Product(_) => unreachable!(),
        };
        Ok(val)
    }

    /// One-dimensional CDF, defined for every family except `Product`.
    /// For the atomic families this is the exact step function, which is what
    /// bucket probabilities need.
    pub fn cdf1(&self, v: f64) -> Result<f64> {
        let val = match self {
            Dist::Uniform => v.clamp(0.0, 1.0),
            Dist::TruncatedNormal { mean, sd } => {
                if v <= 0.0 {
                    0.0
                } else if v >= 1.0 {
                    1.0
                } else {
                    let lo = normal_cdf(-mean / sd);
                    let z = (normal_cdf((1.0 - mean) / sd) - lo).max(f64::MIN_POSITIVE);
                    (normal_cdf((v - mean) / sd) - lo) / z
                }
            }
            Dist::BoundedLomax { shape, scale } => {
                if v <= 0.0 {
                    0.0
                } else if v >= 1.0 {
                    1.0
                } else {
                    let z = 1.0 - (1.0 + 1.0 / scale).powf(-shape);
                    (1.0 - (1.0 + v / scale).powf(-shape)) / z
                }
            }
            Dist::TriangularDecreasing => {
                if v <= 0.0 {
                    0.0
                } else if v >= 1.0 {
                    1.0
                } else {
                    2.0 * v - v * v
                }
            }
            Dist::SymmetricTriangular { lower, upper } => {
                let w = upper - lower;
                let mid = 0.5 * (lower + upper);
                if v <= *lower {
                    0.0
                } else if v >= *upper {
                    1.0
                } else if v <= mid {
                    2.0 * (v - lower) * (v - lower) / (w * w)
                } else {
                    1.0 - 2.0 * (upper - v) * (upper - v) / (w * w)
                }
            }
            Dist::PointMass { value } => {
                if v >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            Dist::Empirical(values) => {
                // values sorted: exact count of observations <= v.
                let n = values.partition_point(|&x| x <= v);
                n as f64 / values.len() as f64
            }
            Dist::Product(_) => {
                return Err(Error::DimensionMismatch { expected: self.dim(), got: 1 })
            }
        };
        Ok(val)
    }

    /// Per-coordinate expectation, in closed form for every family.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            Dist::Uniform => vec![0.5],
            Dist::TruncatedNormal { mean, sd } => {
                let a = -mean / sd;
                let b = (1.0 - mean) / sd;
                let z = (normal_cdf(b) - normal_cdf(a)).max(f64::MIN_POSITIVE);
                vec![mean + sd * (normal_pdf(a) - normal_pdf(b)) / z]
            }
            Dist::BoundedLomax { shape, scale } => {
                let (a, s) = (*shape, *scale);
                let u = 1.0 + 1.0 / s;
                let z = 1.0 - u.powf(-a);
                // integral of v*f over [0,1] via the substitution u = 1 + v/s
                let raw = if (a - 1.0).abs() < 1e-12 {
                    s * ((u.ln()) + 1.0 / u - 1.0)
                } else {
                    a * s * (u.powf(1.0 - a) - 1.0) / (1.0 - a) + s * (u.powf(-a) - 1.0)
                };
                vec![raw / z]
            }
            Dist::TriangularDecreasing => vec![1.0 / 3.0],
            Dist::SymmetricTriangular { lower, upper } => vec![0.5 * (lower + upper)],
            Dist::PointMass { value } => vec![*value],
            Dist::Product(ds) => ds.iter().map(|d| d.mean()[0]).collect(),
            Dist::Empirical(values) => {
                vec![values.iter().sum::<f64>() / values.len() as f64]
            }
        }
    }

    /// Draws one requirement vector. Inverse-CDF for the analytic families,
    /// rejection for the truncated normal, a uniform pick for Empirical.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Req {
        match self {
            Dist::Product(ds) => ds.iter().map(|d| d.sample1(rng)).collect(),
            _ => {
                let mut r = Req::new();
                r.push(self.sample1(rng));
                r
            }
        }
    }

    fn sample1<R: Rng>(&self, rng: &mut R) -> f64 {
        let v = match self {
            Dist::Uniform => 1.0 - rng.gen::<f64>(),
            Dist::TruncatedNormal { mean, sd } => {
                let normal = Normal::new(*mean, *sd).expect("validated");
                loop {
                    let x = normal.sample(rng);
                    if x > 0.0 && x <= 1.0 {
                        break x;
                    }
                }
            }
            Dist::BoundedLomax { shape, scale } => {
                let z = 1.0 - (1.0 + 1.0 / scale).powf(-shape);
                let u = 1.0 - rng.gen::<f64>(); // (0, 1]
                scale * ((1.0 - z * u).powf(-1.0 / shape) - 1.0)
            }
            Dist::TriangularDecreasing => 1.0 - rng.gen::<f64>().sqrt(),
            Dist::SymmetricTriangular { lower, upper } => {
                let q = rng.gen::<f64>();
                let w = upper - lower;
                if q < 0.5 {
                    lower + w * (q / 2.0).sqrt()
                } else {
                    upper - w * ((1.0 - q) / 2.0).sqrt()
                }
            }
            Dist::PointMass { value } => *value,
            Dist::Empirical(values) => values[rng.gen_range(0..values.len())],
            Dist::Product(_) => unreachable!(),
        };
        // 1 - sqrt(u) style inversions can round to exactly 0 once in 2^53 draws;
        // the model's support is open at 0.
        v.clamp(f64::MIN_POSITIVE, 1.0)
    }

    /// P(V lands in the bucket of `ty`): the product over coordinates of CDF
    /// increments over ((i_l - 1)/K_l, i_l/K_l]. Exact counting for Empirical
    /// and PointMass falls out of their step CDFs.
    pub fn bucket_probability(&self, grid: &Grid, ty: TypeId) -> Result<f64> {
        if grid.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: grid.dim() });
        }
        let coords = grid.coords(ty);
        let mut p = 1.0;
        for (l, &i) in coords.iter().enumerate() {
            let k = grid.k()[l] as f64;
            let m = self.marginal(l);
            let hi = m.cdf1(i as f64 / k)?;
            let lo = m.cdf1((i as f64 - 1.0) / k)?;
            p *= (hi - lo).max(0.0);
        }
        Ok(p)
    }

    /// Canonical compact label, comma-free so it can sit unquoted in CSV.
    pub fn label(&self) -> String {
        match self {
            Dist::Uniform => "uniform".into(),
            Dist::TruncatedNormal { mean, sd } => format!("truncated-normal({mean};{sd})"),
            Dist::BoundedLomax { shape, scale } => format!("bounded-lomax({shape};{scale})"),
            Dist::TriangularDecreasing => "triangular".into(),
            Dist::SymmetricTriangular { lower, upper } => {
                format!("symmetric-triangular({lower};{upper})")
            }
            Dist::PointMass { value } => format!("point({value})"),
            Dist::Product(ds) => {
                let parts: Vec<String> = ds.iter().map(|d| d.label()).collect();
                format!("product({})", parts.join(";"))
            }
            Dist::Empirical(values) => format!("empirical(n={})", values.len()),
        }
    }
}

/// A Poisson stream of jobs with i.i.d. requirements.
#[derive(Debug, Clone)]
pub struct ArrivalSpec {
    pub lambda: f64,
    pub dist: Dist,
}

impl ArrivalSpec {
    pub fn new(lambda: f64, dist: Dist) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config("lambda", format!("arrival rate must be positive, got {lambda}")));
        }
        dist.validate()?;
        Ok(ArrivalSpec { lambda, dist })
    }
}
