use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use slowmix::experiments::powers_of_two;
use slowmix::MapSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Moments,
    IteratedMoments,
    Correlation,
    TowerPsi,
    Weakdep,
    Fcb,
    Fastslow,
    Selftest,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Moments => "moments",
            Experiment::IteratedMoments => "iterated-moments",
            Experiment::Correlation => "correlation",
            Experiment::TowerPsi => "tower-psi",
            Experiment::Weakdep => "weakdep",
            Experiment::Fcb => "fcb",
            Experiment::Fastslow => "fastslow",
            Experiment::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MapChoice {
    Doubling,
    #[default]
    Lsv,
    Baker,
}

/// Named observables on the first coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ObservableId {
    /// `cos 2πx`
    Cos,
    /// `x`
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    #[default]
    Conditional,
    Direct,
}

/// Every experiment parameter. Optional fields left unset are filled by
/// [`ExperimentConfig::fill_defaults`], which depends on the experiment and
/// the map, so the echoed configuration is always complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default)]
    pub map: MapChoice,
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Tail exponent of the tower return time.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Moment order; defaults to `2γ` for Birkhoff sums and `γ` for iterated sums.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub n_list: Option<Vec<u64>>,
    #[serde(default)]
    pub k: Option<u64>,
    /// Arity of the fcb functional.
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default)]
    pub orbit_len: Option<u64>,
    #[serde(default)]
    pub burn_in: Option<u64>,
    #[serde(default)]
    pub v: Option<ObservableId>,
    #[serde(default)]
    pub w: Option<ObservableId>,
    #[serde(default)]
    pub estimator: Option<EstimatorChoice>,
    /// Green–Kubo truncation lag.
    #[serde(default)]
    pub l_max: Option<u64>,
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub t_end: Option<f64>,
    /// Euler–Maruyama step for the reference ensemble.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub ref_paths: Option<u64>,
    /// Orbits and orbit length of the Green–Kubo estimate.
    #[serde(default)]
    pub gk_orbits: Option<u64>,
    #[serde(default)]
    pub gk_orbit_len: Option<u64>,
    /// Samples used to estimate `∫ v dμ` when no closed form is available.
    #[serde(default)]
    pub center_samples: Option<u64>,
    /// Smaller instance counts for `selftest`.
    #[serde(default)]
    pub quick: Option<bool>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn require(cond: bool, key: &str, msg: impl std::fmt::Display) -> Result<()> {
    if !cond {
        bail!("invalid `{key}`: {msg}");
    }
    Ok(())
}

impl ExperimentConfig {
    /// Merges `overrides` on top of the JSON object in `file` (if any) and
    /// deserializes the result. Unknown keys are rejected.
    pub fn from_sources(file: Option<&Path>, overrides: Map<String, Value>) -> Result<Self> {
        let mut merged = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                match serde_json::from_str::<Value>(&text)
                    .with_context(|| format!("config file {} is not valid JSON", path.display()))?
                {
                    Value::Object(m) => m,
                    _ => bail!("config file {} must hold a JSON object", path.display()),
                }
            }
            None => Map::new(),
        };
        merged.extend(overrides);
        let mut cfg: ExperimentConfig =
            serde_json::from_value(Value::Object(merged)).context("invalid configuration")?;
        cfg.fill_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn map_system(&self) -> Result<MapSystem> {
        let alpha = self.alpha.unwrap_or(0.4);
        Ok(match self.map {
            MapChoice::Doubling => MapSystem::doubling(),
            MapChoice::Lsv => MapSystem::lsv(alpha)?,
            MapChoice::Baker => MapSystem::baker(alpha)?,
        })
    }

    /// `β = 1/α` for the intermittent maps; the doubling map mixes
    /// exponentially and is given `γ = 2` by default.
    fn default_gamma(&self) -> f64 {
        match self.map {
            MapChoice::Doubling => 2.0,
            _ => 1.0 / self.alpha.unwrap_or(0.4) - 1.0,
        }
    }

    pub fn fill_defaults(&mut self) {
        use Experiment::*;
        let doubling = self.map == MapChoice::Doubling;
        if self.map != MapChoice::Doubling {
            self.alpha.get_or_insert(0.4);
        }
        let exp = self.experiment;
        if exp == TowerPsi {
            self.beta.get_or_insert(2.5);
            self.theta.get_or_insert(0.5);
            self.estimator.get_or_insert(EstimatorChoice::Conditional);
        }
        if matches!(exp, Moments | IteratedMoments) {
            let gamma = *self.gamma.get_or_insert(self.default_gamma());
            self.p.get_or_insert(if exp == Moments { 2.0 * gamma } else { gamma });
            self.w.get_or_insert(ObservableId::X);
        }
        if exp != TowerPsi && exp != Selftest {
            // cos 2πx is uncorrelated under doubling, so x is the default there
            self.v.get_or_insert(if doubling { ObservableId::X } else { ObservableId::Cos });
            self.center_samples
                .get_or_insert(if exp == Fastslow { 100_000_000 } else { 10_000_000 });
        }
        if exp == Weakdep {
            self.k.get_or_insert(2);
        }
        if exp == Fcb {
            self.q.get_or_insert(3);
        }
        if exp == Fastslow {
            self.xi.get_or_insert(0.0);
            let t_end = *self.t_end.get_or_insert(1.0);
            self.dt.get_or_insert(1e-3 * t_end);
            self.l_max.get_or_insert(if doubling { 32 } else { 1 << 14 });
            self.gk_orbits.get_or_insert(if doubling { 100 } else { 400 });
            self.gk_orbit_len.get_or_insert(if doubling { 100_000 } else { 1_000_000 });
        }
        if exp == Selftest {
            self.quick.get_or_insert(false);
        }
        let n_list = match exp {
            Moments | IteratedMoments if doubling => Some(powers_of_two(6, 14)),
            Moments | IteratedMoments => Some(powers_of_two(8, 15)),
            Correlation if doubling => Some((1..=10).collect()),
            Correlation => Some(powers_of_two(4, 10)),
            TowerPsi => Some(powers_of_two(6, 14)),
            Weakdep if doubling => Some(powers_of_two(3, 9)),
            Weakdep => Some(powers_of_two(4, 12)),
            Fcb => Some(powers_of_two(4, 10)),
            Fastslow => Some(vec![1 << 10, 1 << 12, 1 << 14]),
            Selftest => None,
        };
        if self.n_list.is_none() {
            self.n_list = n_list;
        }
        let (trials, orbit_len) = match exp {
            Moments | IteratedMoments => (10_000, 1),
            Correlation if doubling => (100, 100_000),
            Correlation => (100, 1_000_000),
            TowerPsi => (100_000, 1),
            Weakdep => (20_000, 1),
            Fcb => (10, 1_000_000),
            Fastslow => (10_000, 1),
            Selftest => (0, 0),
        };
        if exp != Selftest {
            self.trials.get_or_insert(trials);
            self.orbit_len.get_or_insert(orbit_len);
        }
        if exp == Fastslow && !doubling {
            let t = self.trials.unwrap_or(trials);
            self.ref_paths.get_or_insert(t);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha {
            require(a > 0.0 && a < 1.0, "alpha", format!("alpha must be in (0, 1), got {a}"))?;
        }
        if let Some(b) = self.beta {
            require(b > 1.0 && b.is_finite(), "beta", format!("must exceed 1, got {b}"))?;
        }
        if let Some(t) = self.theta {
            require(t > 0.0 && t < 1.0, "theta", format!("must be in (0, 1), got {t}"))?;
        }
        if let Some(g) = self.gamma {
            require(g > 0.0 && g.is_finite(), "gamma", format!("must be positive, got {g}"))?;
        }
        if let Some(p) = self.p {
            require(p >= 1.0 && p.is_finite(), "p", format!("must be at least 1, got {p}"))?;
        }
        if let Some(ns) = &self.n_list {
            require(!ns.is_empty(), "n_list", "must not be empty")?;
            require(!ns.contains(&0), "n_list", "entries must be positive")?;
            require(ns.windows(2).all(|w| w[0] < w[1]), "n_list", "must be strictly increasing")?;
        }
        if let Some(k) = self.k {
            require(k >= 1, "k", "must be at least 1")?;
            if let Some(ns) = &self.n_list {
                require(ns.iter().all(|&n| n >= 2 * k), "n_list", format!("every n must be at least 2k = {}", 2 * k))?;
            }
        }
        if let Some(q) = self.q {
            require((2..=16).contains(&q), "q", format!("must be in [2, 16], got {q}"))?;
        }
        if let Some(t) = self.trials {
            let min = if self.experiment == Experiment::Moments || self.experiment == Experiment::IteratedMoments {
                100
            } else {
                2
            };
            require(t >= min, "trials", format!("must be at least {min}, got {t}"))?;
        }
        if let Some(l) = self.orbit_len {
            require(l >= 1, "orbit_len", "must be at least 1")?;
        }
        if let Some(t) = self.t_end {
            require(t > 0.0 && t.is_finite(), "t_end", format!("must be positive, got {t}"))?;
        }
        if let Some(dt) = self.dt {
            let t_end = self.t_end.unwrap_or(1.0);
            require(dt > 0.0 && dt <= 1e-3 * t_end, "dt", format!("must be in (0, 1e-3 t_end], got {dt}"))?;
        }
        if let Some(x) = self.xi {
            require(x.is_finite(), "xi", "must be finite")?;
        }
        if let Some(l) = self.l_max {
            require(l >= 1, "l_max", "must be at least 1")?;
        }
        if let Some(g) = self.gk_orbits {
            require(g >= 2, "gk_orbits", "must be at least 2")?;
        }
        if let Some(g) = self.gk_orbit_len {
            require(g >= 1, "gk_orbit_len", "must be at least 1")?;
        }
        if let Some(c) = self.center_samples {
            require(c >= 1_000, "center_samples", "must be at least 1000")?;
        }
        Ok(())
    }

    pub fn n_list(&self) -> &[u64] {
        self.n_list.as_deref().unwrap_or(&[])
    }

    pub fn trials(&self) -> u64 {
        self.trials.unwrap_or(1)
    }

    pub fn orbit_len(&self) -> u64 {
        self.orbit_len.unwrap_or(1)
    }
}

/// `"a,b,c"` into a list of integers.
pub fn parse_n_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .with_context(|| format!("invalid `n_list` entry {t:?}"))
        })
        .collect()
}

/// `"lo:hi"` into `2^lo, ..., 2^hi`.
pub fn parse_n_pow(s: &str) -> Result<Vec<u64>> {
    let (lo, hi) = s
        .split_once(':')
        .with_context(|| format!("invalid `n_pow` {s:?}: expected lo:hi"))?;
    let lo: u32 = lo.trim().parse().with_context(|| format!("invalid `n_pow` lower end {lo:?}"))?;
    let hi: u32 = hi.trim().parse().with_context(|| format!("invalid `n_pow` upper end {hi:?}"))?;
    if lo > hi || hi > 40 {
        bail!("invalid `n_pow` {s:?}: need lo <= hi <= 40");
    }
    Ok(powers_of_two(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn flags(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn minimal_flags_fill_defaults() {
        let cfg = ExperimentConfig::from_sources(
            None,
            flags(json!({"experiment": "moments", "map": "lsv", "alpha": 0.4, "seed": 1})),
        )
        .unwrap();
        assert_eq!(cfg.gamma, Some(1.5));
        assert_eq!(cfg.p, Some(3.0));
        assert_eq!(cfg.n_list(), powers_of_two(8, 15).as_slice());
        assert_eq!(cfg.trials, Some(10_000));
    }

    #[test]
    fn missing_seed_is_named() {
        let err = ExperimentConfig::from_sources(None, flags(json!({"experiment": "moments"}))).unwrap_err();
        assert!(format!("{err:#}").contains("seed"), "{err:#}");
    }

    #[test]
    fn alpha_out_of_range() {
        let err = ExperimentConfig::from_sources(
            None,
            flags(json!({"experiment": "moments", "alpha": 1.5, "seed": 1})),
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("alpha must be in (0, 1)"), "{err:#}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_sources(
            None,
            flags(json!({"experiment": "moments", "seed": 1, "alpah": 0.3})),
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("alpah"), "{err:#}");
    }

    #[test]
    fn n_list_parsers() {
        assert_eq!(parse_n_list("1, 2,3").unwrap(), vec![1, 2, 3]);
        assert!(parse_n_list("1,x").is_err());
        assert_eq!(parse_n_pow("2:4").unwrap(), vec![4, 8, 16]);
        assert!(parse_n_pow("4:2").is_err());
        assert!(parse_n_pow("4").is_err());
    }
}
