//! Run settings: a flat `key = value` file overlaid with command-line flags.
//!
//! Grammar of the config file:
//!
//! ```text
//! file    = { line } ;
//! line    = blank | comment | setting ;
//! comment = "#" { any character } ;
//! setting = key "=" value ;
//! key     = one of the names in `key_table()` ;
//! value   = rest of the line, surrounding whitespace trimmed ;
//! ```
//!
//! A key may appear at most once per file. Lists are comma separated and
//! K ranges are written `lo..hi` (inclusive) or as a list. Flags override
//! the file; the file overrides built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use foodgmm::ingest::{Feature, Scaling};
use foodgmm::mixture::{FitConfig, Parameterization};
use foodgmm::profile::ProfileConfig;
use foodgmm::selection::DEFAULT_SILHOUETTE_SAMPLE;
use foodgmm::synth::{BoundingBox, Composition, DesertPlan, DistanceComponent, IncomeModel, SynthConfig};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Keys that do not influence file contents and so stay out of the hash.
const UNHASHED: [&str; 2] = ["output_dir", "threads"];

/// Hex digits of the config digest kept in stamps.
const HASH_PREFIX: usize = 12;

pub struct KeySpec {
    pub name: &'static str,
    pub default: String,
    pub help: &'static str,
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Every recognised key with its default.
pub fn key_table() -> Vec<KeySpec> {
    let synth = SynthConfig::default();
    let fit = FitConfig::default();
    let profile = ProfileConfig::default();
    let mix = &synth.distance_mixture;
    let comp = &synth.composition;
    let spec = |name, default: String, help| KeySpec { name, default, help };
    vec![
        spec("seed", "0".into(), "master seed for every random stream"),
        spec("output_dir", "out".into(), "directory receiving all outputs"),
        spec("threads", "0".into(), "worker thread cap; 0 uses every core"),
        spec("data_dir", String::new(), "directory holding services.csv, agencies.csv and tract_income.csv"),
        spec("services", String::new(), "family service CSV; overrides data_dir"),
        spec("agencies", String::new(), "agency CSV; overrides data_dir"),
        spec("tract_income", String::new(), "tract income CSV; overrides data_dir"),
        spec("features", Feature::DistanceMiles.name().into(), "comma separated feature columns"),
        spec("scaling", Scaling::None.name().into(), "none or zscore"),
        spec("models", join(Parameterization::MULTIVARIATE), "parameterizations searched by select"),
        spec("k_range", "1..9".into(), "component counts searched by select"),
        spec("silhouette_sample", DEFAULT_SILHOUETTE_SAMPLE.to_string(), "silhouette subsample size; 0 skips"),
        spec("tol", fit.tol.to_string(), "relative log-likelihood change that stops EM"),
        spec("max_iter", fit.max_iter.to_string(), "EM iteration cap"),
        spec("n_restarts", fit.n_restarts.to_string(), "k-means++ restarts per fit"),
        spec("cov_floor", "auto".into(), "covariance ridge, or auto"),
        spec("model", Parameterization::EEV.name().into(), "parameterization used by fit"),
        spec("k", "4".into(), "component count used by fit"),
        spec("model_path", String::new(), "model read by profile; defaults to output_dir/model.json"),
        spec("threshold_miles", profile.threshold_miles.to_string(), "coverage and desert radius"),
        spec("state_median_income", profile.state_median_income.to_string(), "poor/rich income cut"),
        spec("person_weighted", profile.person_weighted.to_string(), "weight income shares by household size"),
        spec("n_families", synth.n_families.to_string(), "synthetic family count"),
        spec("n_agencies", synth.n_agencies.to_string(), "synthetic agency count"),
        spec("n_tracts", synth.n_tracts.to_string(), "synthetic tract count"),
        spec("mixture_weights", join(mix.iter().map(|c| c.weight)), "component shares"),
        spec("mixture_means", join(mix.iter().map(|c| c.mean_miles)), "component mean distances, miles"),
        spec("mixture_sds", join(mix.iter().map(|c| c.sd_miles)), "component distance spreads, miles"),
        spec("composition_adults", join(comp.iter().map(|c| c.adults)), "mean adults per family"),
        spec("composition_children", join(comp.iter().map(|c| c.children)), "mean children per family"),
        spec("composition_seniors", join(comp.iter().map(|c| c.seniors)), "mean seniors per family"),
        spec("income_log_offset", synth.income.log_mean_offset.to_string(), "mean log income relative to the median"),
        spec("income_log_sd", synth.income.log_sd.to_string(), "spread of log tract income"),
        spec("lat_min", synth.region.lat_min.to_string(), "region south edge"),
        spec("lat_max", synth.region.lat_max.to_string(), "region north edge"),
        spec("lon_min", synth.region.lon_min.to_string(), "region west edge"),
        spec("lon_max", synth.region.lon_max.to_string(), "region east edge"),
        spec("desert_tracts", "0".into(), "planted tracts with no nearby agency"),
        spec("desert_families_per_tract", "50".into(), "families in each planted tract"),
        spec("desert_offset_miles", "25".into(), "distance of planted tracts north of the region"),
    ]
}

/// Flag spelling of a key.
pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// Parses config file text into ordered settings.
pub fn parse_config(text: &str, origin: &str) -> CliResult<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected `key = value`", i + 1)))?;
        let key = key.trim();
        if out.iter().any(|(k, _)| k == key) {
            return Err(CliError::Usage(format!("{origin}:{}: `{key}` set twice", i + 1)));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Resolved key values.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            values: key_table().into_iter().map(|k| (k.name.to_string(), k.default)).collect(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> CliResult<T>
where
    T::Err: Display,
{
    raw.trim()
        .parse()
        .map_err(|e| CliError::Usage(format!("bad value `{raw}` for `{key}`: {e}")))
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.to_string();
                Ok(())
            }
            None => Err(CliError::Usage(format!("unknown config key `{key}`"))),
        }
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key `{key}` missing from key table"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        parse_value(key, self.raw(key))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Vec<T>>
    where
        T::Err: Display,
    {
        let raw = self.raw(key).trim();
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',').map(|v| parse_value(key, v)).collect()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key).trim();
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    /// Lowercase hex prefix of the SHA-256 of every hashed `key=value` pair.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            if UNHASHED.contains(&k.as_str()) {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().take(HASH_PREFIX / 2).map(|b| format!("{b:02x}")).collect()
    }

    /// Header comment written as the first line of every output.
    pub fn stamp(&self) -> CliResult<String> {
        Ok(format!(
            "# foodgmm {} config={} seed={}",
            env!("CARGO_PKG_VERSION"),
            self.config_hash(),
            self.get::<u64>("seed")?
        ))
    }

    pub fn threads(&self) -> CliResult<usize> {
        self.get("threads")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.path("output_dir").unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn synth_config(&self) -> CliResult<SynthConfig> {
        let weights: Vec<f64> = self.list("mixture_weights")?;
        let means: Vec<f64> = self.list("mixture_means")?;
        let sds: Vec<f64> = self.list("mixture_sds")?;
        let adults: Vec<f64> = self.list("composition_adults")?;
        let children: Vec<f64> = self.list("composition_children")?;
        let seniors: Vec<f64> = self.list("composition_seniors")?;
        let k = weights.len();
        if [means.len(), sds.len(), adults.len(), children.len(), seniors.len()].iter().any(|&l| l != k) {
            return Err(CliError::Usage(
                "mixture_* and composition_* lists must all have the same length".into(),
            ));
        }
        let desert_tracts: usize = self.get("desert_tracts")?;
        let cfg = SynthConfig {
            n_families: self.get("n_families")?,
            n_agencies: self.get("n_agencies")?,
            n_tracts: self.get("n_tracts")?,
            distance_mixture: (0..k)
                .map(|i| DistanceComponent {
                    weight: weights[i],
                    mean_miles: means[i],
                    sd_miles: sds[i],
                })
                .collect(),
            composition: (0..k)
                .map(|i| Composition {
                    adults: adults[i],
                    children: children[i],
                    seniors: seniors[i],
                })
                .collect(),
            income: IncomeModel {
                log_mean_offset: self.get("income_log_offset")?,
                log_sd: self.get("income_log_sd")?,
            },
            state_median_income: self.get("state_median_income")?,
            region: BoundingBox {
                lat_min: self.get("lat_min")?,
                lat_max: self.get("lat_max")?,
                lon_min: self.get("lon_min")?,
                lon_max: self.get("lon_max")?,
            },
            desert: (desert_tracts > 0)
                .then(|| -> CliResult<DesertPlan> {
                    Ok(DesertPlan {
                        n_tracts: desert_tracts,
                        families_per_tract: self.get("desert_families_per_tract")?,
                        offset_miles: self.get("desert_offset_miles")?,
                    })
                })
                .transpose()?,
            seed: self.get("seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn run_config(&self) -> CliResult<RunConfig> {
        let data_dir = self.path("data_dir");
        let input = |key: &str, file: &str| -> CliResult<PathBuf> {
            self.path(key)
                .or_else(|| data_dir.as_ref().map(|d| d.join(file)))
                .ok_or_else(|| CliError::Usage(format!("no input for `{key}`: set it or data_dir")))
        };
        let seed: u64 = self.get("seed")?;
        let cov_floor = match self.raw("cov_floor").trim() {
            "auto" | "" => None,
            v => Some(parse_value("cov_floor", v)?),
        };
        let fit = FitConfig {
            tol: self.get("tol")?,
            max_iter: self.get("max_iter")?,
            n_restarts: self.get("n_restarts")?,
            seed,
            cov_floor,
        };
        fit.validate()?;
        let features: Vec<Feature> = self.list("features")?;
        if features.is_empty() {
            return Err(CliError::Usage("`features` is empty".into()));
        }
        let models: Vec<Parameterization> = self.list("models")?;
        if models.is_empty() {
            return Err(CliError::Usage("`models` is empty".into()));
        }
        let sample: usize = self.get("silhouette_sample")?;
        let output_dir = self.output_dir();
        let threshold_miles: f64 = self.get("threshold_miles")?;
        if !(threshold_miles.is_finite() && threshold_miles > 0.0) {
            return Err(CliError::Usage(format!("threshold_miles must be positive, got {threshold_miles}")));
        }
        Ok(RunConfig {
            services: input("services", "services.csv")?,
            agencies: input("agencies", "agencies.csv")?,
            tract_income: input("tract_income", "tract_income.csv")?,
            features,
            scaling: self.get("scaling")?,
            models,
            k_range: parse_k_range(self.raw("k_range"))?,
            fit,
            model: self.get("model")?,
            k: self.get("k")?,
            model_path: self.path("model_path").unwrap_or_else(|| output_dir.join("model.json")),
            profile: ProfileConfig {
                threshold_miles,
                state_median_income: self.get("state_median_income")?,
                person_weighted: self.get("person_weighted")?,
            },
            silhouette_sample: (sample > 0).then_some(sample),
            output_dir,
            seed,
        })
    }
}

/// `lo..hi` (inclusive) or a comma separated list.
pub fn parse_k_range(raw: &str) -> CliResult<Vec<usize>> {
    let raw = raw.trim();
    let ks: Vec<usize> = match raw.split_once("..") {
        Some((lo, hi)) => {
            let lo: usize = parse_value("k_range", lo)?;
            let hi: usize = parse_value("k_range", hi)?;
            (lo..=hi).collect()
        }
        None => raw.split(',').map(|v| parse_value("k_range", v)).collect::<CliResult<_>>()?,
    };
    if ks.is_empty() {
        return Err(CliError::Usage(format!("empty K range `{raw}`")));
    }
    Ok(ks)
}

/// Everything the fit, select and profile commands need.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub services: PathBuf,
    pub agencies: PathBuf,
    pub tract_income: PathBuf,
    pub features: Vec<Feature>,
    pub scaling: Scaling,
    pub models: Vec<Parameterization>,
    pub k_range: Vec<usize>,
    pub fit: FitConfig,
    /// Single-cell choice for `fit`.
    pub model: Parameterization,
    pub k: usize,
    pub model_path: PathBuf,
    pub profile: ProfileConfig,
    pub silhouette_sample: Option<usize>,
    pub output_dir: PathBuf,
    pub seed: u64,
}
