//! Experiment configuration: a flat key=value file plus string forms for
//! distributions, grids, and policy names. The CLI layers flag overrides
//! on top before anything is built.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dist::Dist;
use crate::dominance::{intrinsic_lambda_star, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::grid::{Grid, Provenance};
use crate::policy::PrecomputeMethod;
use crate::sim::{PolicyKind, PolicySpec, DEFAULT_N_JOBS, DEFAULT_THETA};

/// Parsed key=value pairs. Keys are case-insensitive; later duplicates win;
/// `#` starts a comment.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(
                    "config",
                    format!("line {} is not key=value: {raw:?}", i + 1),
                ));
            };
            map.insert(key.trim().to_ascii_lowercase(), value.trim().to_string());
        }
        Ok(KeyValues { map })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::InputIo {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.map.insert(key.to_ascii_lowercase(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|s| s.parse().map_err(|_| Error::config(key, format!("not a number: {s:?}"))))
            .transpose()
    }

    fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|s| s.parse().map_err(|_| Error::config(key, format!("not an integer: {s:?}"))))
            .transpose()
    }

    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => s
                .split(',')
                .map(|part| {
                    let part = part.trim();
                    part.parse()
                        .map_err(|_| Error::config(key, format!("not a number: {part:?}")))
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }
}

/// Split `args` on `;` or `,` at parenthesis depth zero.
fn split_args(args: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, ch) in args.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ';' | ',' if depth == 0 => {
                parts.push(args[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(args[start..].trim());
    parts.retain(|p| !p.is_empty());
    parts
}

/// Parse a distribution name like `uniform`, `bounded-lomax(2;1)`, or
/// `product(uniform;point(0.5))`. Separators `;` and `,` are equivalent,
/// matching the comma-free labels the CSV emits.
pub fn parse_dist(s: &str) -> Result<Dist> {
    let s = s.trim();
    let (name, args): (&str, Vec<&str>) = match s.find('(') {
        Some(p) => {
            let inner = s[p + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::config("dist", format!("unbalanced parentheses: {s:?}")))?;
            (&s[..p], split_args(inner))
        }
        None => (s, Vec::new()),
    };
    let name = name.trim().to_ascii_lowercase();
    let num = |i: usize| -> Result<f64> {
        args.get(i)
            .ok_or_else(|| Error::config("dist", format!("{name} needs {} arguments", i + 1)))?
            .parse()
            .map_err(|_| Error::config("dist", format!("not a number in {name}: {:?}", args[i])))
    };
    let dist = match name.as_str() {
        "uniform" => Dist::Uniform,
        "triangular" | "triangular-decreasing" => Dist::TriangularDecreasing,
        "truncated-normal" | "tnormal" => Dist::TruncatedNormal { mean: num(0)?, sd: num(1)? },
        "bounded-lomax" | "lomax" => Dist::BoundedLomax { shape: num(0)?, scale: num(1)? },
        "symmetric-triangular" | "sym-triangular" => {
            Dist::SymmetricTriangular { lower: num(0)?, upper: num(1)? }
        }
        "point" | "pointmass" | "point-mass" => Dist::PointMass { value: num(0)? },
        "product" => {
            let parts: Result<Vec<Dist>> = args.iter().map(|a| parse_dist(a)).collect();
            Dist::Product(parts?)
        }
        other => {
            return Err(Error::config("dist", format!("unknown distribution {other:?}")));
        }
    };
    dist.validate()?;
    Ok(dist)
}

/// Parse a grid like `64` or `3x3`.
pub fn parse_grid(s: &str) -> Result<Grid> {
    let ks: Result<Vec<u32>> = s
        .trim()
        .split(['x', 'X'])
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|_| Error::config("k", format!("not a grid size: {part:?}")))
        })
        .collect();
    Grid::new(ks?)
}

pub fn grid_label(grid: &Grid) -> String {
    grid.k().iter().map(u32::to_string).collect::<Vec<_>>().join("x")
}

/// Parse one policy token like `2j-emw-b k=64` or `k-nmsr method=2j`.
/// `default_grid` fills in when the token has no `k=`; `theta` and the
/// nMSR method come from global keys unless overridden inline.
pub fn parse_policy(
    token: &str,
    default_grid: Option<&Grid>,
    theta: f64,
    default_method: PrecomputeMethod,
) -> Result<(PolicySpec, Grid)> {
    let mut words = token.split_whitespace();
    let name = words
        .next()
        .ok_or_else(|| Error::config("policies", "empty policy entry"))?
        .to_ascii_lowercase();
    let mut grid: Option<Grid> = None;
    let mut method = default_method;
    for word in words {
        match word.split_once('=') {
            Some(("k", v)) => grid = Some(parse_grid(v)?),
            Some(("method", v)) => method = parse_method(v)?,
            _ => {
                return Err(Error::config(
                    "policies",
                    format!("unexpected token {word:?} in policy {name:?}"),
                ));
            }
        }
    }
    let (base, backfill) = match name.strip_suffix("-b") {
        Some(b) => (b, true),
        None => (name.as_str(), false),
    };
    let kind = match base {
        "k-mw" => PolicyKind::MaxWeight(Provenance::Full),
        "2j-emw" => PolicyKind::MaxWeight(Provenance::TwoJob),
        "2b-emw" => PolicyKind::MaxWeight(Provenance::TwoBucket),
        "xp-emw" => PolicyKind::MaxWeight(Provenance::PairwiseExtreme),
        "k-nmsr" => PolicyKind::Nmsr { method, theta },
        "fcfs" => PolicyKind::Fcfs,
        "first-fit" => PolicyKind::FirstFit,
        "best-fit" => PolicyKind::BestFit,
        "lsf" => PolicyKind::Lsf,
        "pseudo-mw" => PolicyKind::PseudoMw,
        other => {
            return Err(Error::config("policies", format!("unknown policy {other:?}")));
        }
    };
    let grid = match grid.or_else(|| default_grid.cloned()) {
        Some(g) => g,
        None => {
            return Err(Error::config("k", format!("policy {name:?} has no grid: set k")));
        }
    };
    if matches!(kind, PolicyKind::MaxWeight(Provenance::TwoBucket))
        && !(grid.dim() == 1 && grid.k1().is_power_of_two())
    {
        return Err(Error::config(
            "policies",
            format!("K must be a power of two in one dimension for 2b-emw, got {}", grid_label(&grid)),
        ));
    }
    Ok((PolicySpec { kind, backfill }, grid))
}

pub fn parse_method(s: &str) -> Result<PrecomputeMethod> {
    match s.trim().to_ascii_lowercase().as_str() {
        "lp" => Ok(PrecomputeMethod::Lp),
        "2b" => Ok(PrecomputeMethod::Construction2B),
        "2j" => Ok(PrecomputeMethod::Construction2J),
        other => Err(Error::config("method", format!("unknown method {other:?}, want lp, 2b, or 2j"))),
    }
}

/// One sweep point: the raw arrival rate, and the normalized load when the
/// stability boundary is known.
#[derive(Debug, Clone, Copy)]
pub struct LoadPoint {
    pub lambda: f64,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dist: Dist,
    pub loads: Vec<LoadPoint>,
    pub entries: Vec<(PolicySpec, Grid)>,
    pub n_jobs: u64,
    pub seed: u64,
    pub warmup: u64,
    pub epsilon: f64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let dist = parse_dist(
            kv.get("dist").ok_or_else(|| Error::config("dist", "missing distribution"))?,
        )?;
        let lambda_star = match kv.f64("lambda-star")? {
            Some(v) if v > 0.0 => Some(v),
            Some(v) => {
                return Err(Error::config("lambda-star", format!("must be positive, got {v}")));
            }
            None => intrinsic_lambda_star(&dist),
        };

        let lambdas = kv.f64_list("lambda")?;
        let rhos = kv.f64_list("rho")?;
        let loads = match (lambdas, rhos) {
            (Some(_), Some(_)) => {
                return Err(Error::config("lambda", "give either lambda or rho, not both"));
            }
            (None, None) => {
                return Err(Error::config("lambda", "no load grid: set lambda or rho"));
            }
            (Some(ls), None) => ls
                .into_iter()
                .map(|lambda| LoadPoint { lambda, rho: lambda_star.map(|s| lambda / s) })
                .collect(),
            (None, Some(rs)) => {
                let star = lambda_star.ok_or(Error::UnknownStabilityBoundary)?;
                rs.into_iter()
                    .map(|rho| LoadPoint { lambda: rho * star, rho: Some(rho) })
                    .collect::<Vec<_>>()
            }
        };
        for p in &loads {
            if !(p.lambda > 0.0 && p.lambda.is_finite()) {
                return Err(Error::config("lambda", format!("rates must be positive, got {}", p.lambda)));
            }
        }

        let theta = kv.f64("theta")?.unwrap_or(DEFAULT_THETA);
        let method = match kv.get("nmsr-method") {
            Some(s) => parse_method(s)?,
            None => PrecomputeMethod::Lp,
        };
        let default_grid = kv.get("k").map(parse_grid).transpose()?;
        let policies_raw =
            kv.get("policies").ok_or_else(|| Error::config("policies", "missing policy list"))?;
        let entries: Result<Vec<_>> = policies_raw
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|tok| parse_policy(tok, default_grid.as_ref(), theta, method))
            .collect();
        let entries = entries?;
        if entries.is_empty() {
            return Err(Error::config("policies", "empty policy list"));
        }

        let epsilon = kv.f64("epsilon")?.unwrap_or(DEFAULT_EPSILON);
        if !(epsilon > 0.0) {
            return Err(Error::config("epsilon", format!("must be positive, got {epsilon}")));
        }
        Ok(ExperimentConfig {
            dist,
            loads,
            entries,
            n_jobs: kv.u64("jobs")?.unwrap_or(DEFAULT_N_JOBS),
            seed: kv.u64("seed")?.unwrap_or(0),
            warmup: kv.u64("warmup")?.unwrap_or(0),
            epsilon,
            workers: kv.u64("workers")?.map(|w| w as usize),
            out: kv.get("out").map(PathBuf::from),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_parse_shapes() {
        let kv = KeyValues::parse("a = 1\n# comment\nB=two words  # trailing\n\n").unwrap();
        assert_eq!(kv.get("a"), Some("1"));
        assert_eq!(kv.get("b"), Some("two words"));
        assert!(kv.get("c").is_none());
        assert!(KeyValues::parse("not a pair").is_err());

        let mut kv = KeyValues::parse("seed = 1").unwrap();
        kv.set("seed", "9");
        assert_eq!(kv.get("seed"), Some("9"));
    }

    #[test]
    fn dist_strings_round_trip() {
        for s in [
            "uniform",
            "triangular",
            "truncated-normal(0.5;0.25)",
            "bounded-lomax(2;1)",
            "symmetric-triangular(0.25;0.5)",
            "point(0.25)",
            "product(uniform;point(0.5))",
        ] {
            let d = parse_dist(s).unwrap();
            let relabeled = parse_dist(&d.label()).unwrap();
            assert_eq!(format!("{d:?}"), format!("{relabeled:?}"), "label round trip for {s}");
        }
        // comma separators work too, including nested
        assert!(parse_dist("bounded-lomax(2,1)").is_ok());
        assert!(parse_dist("product(uniform,point(0.5))").is_ok());
        assert!(parse_dist("gaussian").is_err());
        assert!(parse_dist("point(1.5)").is_err(), "validation still applies");
        assert!(parse_dist("tnormal(0.5)").is_err(), "missing argument");
    }

    #[test]
    fn grid_strings() {
        assert_eq!(parse_grid("64").unwrap(), Grid::one_dim(64));
        assert_eq!(parse_grid("3x3").unwrap(), Grid::new(vec![3, 3]).unwrap());
        assert_eq!(grid_label(&parse_grid("3X2").unwrap()), "3x2");
        assert!(parse_grid("0").is_err());
        assert!(parse_grid("abc").is_err());
    }

    #[test]
    fn policy_tokens() {
        let (p, g) =
            parse_policy("2j-emw-b k=64", None, 0.1, PrecomputeMethod::Lp).unwrap();
        assert_eq!(p.name(), "2j-emw-b");
        assert_eq!(g, Grid::one_dim(64));

        let base = Grid::one_dim(4);
        let (p, g) = parse_policy("first-fit", Some(&base), 0.1, PrecomputeMethod::Lp).unwrap();
        assert_eq!(p.name(), "first-fit");
        assert_eq!(g, base);

        let (p, _) =
            parse_policy("k-nmsr method=2j k=5", None, 0.2, PrecomputeMethod::Lp).unwrap();
        assert!(matches!(
            p.kind,
            PolicyKind::Nmsr { method: PrecomputeMethod::Construction2J, theta } if theta == 0.2
        ));

        assert!(parse_policy("quantum-fit k=4", None, 0.1, PrecomputeMethod::Lp).is_err());
        assert!(parse_policy("lsf", None, 0.1, PrecomputeMethod::Lp).is_err(), "no grid anywhere");

        let err = parse_policy("2b-emw k=6", None, 0.1, PrecomputeMethod::Lp).unwrap_err();
        assert!(err.to_string().contains("K must be a power of two"), "got: {err}");
    }

    #[test]
    fn experiment_from_kv() {
        let kv = KeyValues::parse(
            "dist = uniform\nrho = 0.5, 0.9\npolicies = lsf, 2j-emw-b k=64\nk = 64\njobs = 1000\nseed = 7",
        )
        .unwrap();
        let exp = ExperimentConfig::from_kv(&kv).unwrap();
        assert_eq!(exp.loads.len(), 2);
        assert_eq!(exp.loads[0].lambda, 1.0, "rho 0.5 at lambda* 2");
        assert_eq!(exp.loads[1].rho, Some(0.9));
        assert_eq!(exp.entries.len(), 2);
        assert_eq!(exp.n_jobs, 1000);
        assert_eq!(exp.seed, 7);

        // lambda grid fills rho from the intrinsic boundary
        let kv = KeyValues::parse("dist = uniform\nlambda = 1.0\npolicies = fcfs\nk = 4").unwrap();
        let exp = ExperimentConfig::from_kv(&kv).unwrap();
        assert_eq!(exp.loads[0].rho, Some(0.5));

        // rho without a known boundary fails; supplying lambda-star fixes it
        let kv = KeyValues::parse(
            "dist = symmetric-triangular(0.25;0.5)\nrho = 0.5\npolicies = fcfs\nk = 4",
        )
        .unwrap();
        assert!(matches!(
            ExperimentConfig::from_kv(&kv),
            Err(Error::UnknownStabilityBoundary)
        ));
        let kv = KeyValues::parse(
            "dist = symmetric-triangular(0.25;0.5)\nrho = 0.5\nlambda-star = 1.6\npolicies = fcfs\nk = 4",
        )
        .unwrap();
        let exp = ExperimentConfig::from_kv(&kv).unwrap();
        assert_eq!(exp.loads[0].lambda, 0.8);

        // both grids at once is ambiguous
        let kv = KeyValues::parse(
            "dist = uniform\nlambda = 1\nrho = 0.5\npolicies = fcfs\nk = 4",
        )
        .unwrap();
        assert!(ExperimentConfig::from_kv(&kv).is_err());
    }
}
