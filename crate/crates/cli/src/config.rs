//! JSON experiment configs.
//!
//! Every document carries `schema_version`, an optional master `seed` and an
//! optional `out` directory; the remaining keys belong to the subcommand and
//! are parsed strictly.

use std::path::{Path, PathBuf};

use distmarch::data::{
    eight_gaussians, gmm_sample, two_moons, CloudLabel, GmmSpec, PointCloud, TOY_MOONS_NOISE, TOY_SOURCE_RADIUS,
    TOY_SOURCE_STD,
};
use distmarch::metrics::hub_cloud;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult, Context};

pub const SCHEMA_VERSION: u64 = 1;

/// The shared envelope plus the command's own section, already validated.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub seed: u64,
    pub out: PathBuf,
    pub body: T,
    /// The resolved document, as written to the manifest.
    pub resolved: Value,
}

/// Overrides coming from command-line flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn load<T>(path: Option<&Path>, overrides: &Overrides, default_out: &str) -> CliResult<Loaded<T>>
where
    T: DeserializeOwned + Serialize + Default,
{
    let doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str::<Value>(&text).map_err(|e| CliError::config("<document>", e))?
        }
        None => Value::Object(Map::new()),
    };
    parse(doc, overrides, default_out)
}

pub fn parse<T>(doc: Value, overrides: &Overrides, default_out: &str) -> CliResult<Loaded<T>>
where
    T: DeserializeOwned + Serialize + Default,
{
    let Value::Object(mut map) = doc else {
        return Err(CliError::config("<document>", "expected a JSON object"));
    };
    let version = match map.remove("schema_version") {
        None => SCHEMA_VERSION,
        Some(v) => v.as_u64().ok_or_else(|| CliError::config("schema_version", "expected an integer"))?,
    };
    if version != SCHEMA_VERSION {
        return Err(CliError::config("schema_version", format!("unsupported version {version}, expected {SCHEMA_VERSION}")));
    }
    let seed = match map.remove("seed") {
        None => 0,
        Some(v) => v.as_u64().ok_or_else(|| CliError::config("seed", "expected a nonnegative integer"))?,
    };
    let out = match map.remove("out") {
        None => PathBuf::from(default_out),
        Some(Value::String(s)) => PathBuf::from(s),
        Some(_) => return Err(CliError::config("out", "expected a path string")),
    };
    let body: T = if map.is_empty() {
        T::default()
    } else {
        serde_path_to_error::deserialize(Value::Object(map)).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(path, e.into_inner())
        })?
    };
    let seed = overrides.seed.unwrap_or(seed);
    let out = overrides.out.clone().unwrap_or(out);
    let mut resolved = serde_json::to_value(&body).expect("config serializes");
    if let Value::Object(m) = &mut resolved {
        m.insert("schema_version".into(), SCHEMA_VERSION.into());
        m.insert("seed".into(), seed.into());
        m.insert("out".into(), out.display().to_string().into());
    }
    Ok(Loaded { seed, out, body, resolved })
}

/// A point cloud to load or synthesize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CloudSpec {
    TwoMoons {
        n: usize,
        #[serde(default = "moons_noise")]
        noise: f64,
        seed: u64,
    },
    EightGaussians {
        n: usize,
        #[serde(default = "toy_radius")]
        radius: f64,
        #[serde(default = "toy_std")]
        std: f64,
        seed: u64,
    },
    Gmm {
        spec: GmmSpec,
        n: usize,
        seed: u64,
    },
    /// Samples of the built-in 8D source or target mixture.
    Mixture8d {
        role: MixtureRole,
        n: usize,
        seed: u64,
    },
    StandardNormal {
        dim: usize,
        n: usize,
        seed: u64,
    },
    Hub {
        n: usize,
        dim: usize,
        offset: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureRole {
    Source,
    Target,
}

fn moons_noise() -> f64 {
    TOY_MOONS_NOISE
}

fn toy_radius() -> f64 {
    TOY_SOURCE_RADIUS
}

fn toy_std() -> f64 {
    TOY_SOURCE_STD
}

impl CloudSpec {
    pub fn build(&self, key: &str) -> CliResult<PointCloud> {
        match self {
            CloudSpec::TwoMoons { n, noise, seed } => two_moons(*n, *noise, *seed).context(key),
            CloudSpec::EightGaussians { n, radius, std, seed } => eight_gaussians(*n, *radius, *std, *seed).context(key),
            CloudSpec::Gmm { spec, n, seed } => gmm_sample(spec, *n, *seed).context(key),
            CloudSpec::Mixture8d { role, n, seed } => gmm_sample(&role.spec(), *n, *seed).context(key),
            CloudSpec::StandardNormal { dim, n, seed } => gmm_sample(&GmmSpec::standard_normal(*dim), *n, *seed).context(key),
            CloudSpec::Hub { n, dim, offset, seed } => hub_cloud(*n, *dim, *offset, *seed).context(key),
            CloudSpec::Csv { path } => {
                let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
                PointCloud::read_csv(std::io::BufReader::new(file), CloudLabel::Target, 0).context(key)
            }
        }
    }
}

impl MixtureRole {
    pub fn spec(self) -> GmmSpec {
        match self {
            MixtureRole::Source => GmmSpec::default_8d_source(),
            MixtureRole::Target => GmmSpec::default_8d_target(),
        }
    }
}

/// A source distribution given in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    StandardNormal {
        dim: usize,
    },
    EightGaussians {
        #[serde(default = "toy_radius")]
        radius: f64,
        #[serde(default = "toy_std")]
        std: f64,
    },
    Mixture8d {
        role: MixtureRole,
    },
    Gmm {
        spec: GmmSpec,
    },
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::EightGaussians { radius: TOY_SOURCE_RADIUS, std: TOY_SOURCE_STD }
    }
}

impl SourceSpec {
    pub fn build(&self, key: &str) -> CliResult<GmmSpec> {
        let spec = match self {
            SourceSpec::StandardNormal { dim } => GmmSpec::standard_normal(*dim),
            SourceSpec::EightGaussians { radius, std } => GmmSpec::eight_gaussians(*radius, *std),
            SourceSpec::Mixture8d { role } => role.spec(),
            SourceSpec::Gmm { spec } => spec.clone(),
        };
        spec.validate().context(key)?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Body {
        cloud: Option<CloudSpec>,
        count: usize,
    }

    fn parse_str(s: &str) -> CliResult<Loaded<Body>> {
        parse(serde_json::from_str(s).unwrap(), &Overrides::default(), "out")
    }

    #[test]
    fn empty_document_takes_defaults() {
        let l = parse_str("{}").unwrap();
        assert_eq!(l.body, Body::default());
        assert_eq!(l.seed, 0);
        assert_eq!(l.out, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let err = parse_str(r#"{"cloud": {"kind": "two_moons", "n": 4, "seed": 1, "nosie": 0.1}}"#).unwrap_err();
        match err {
            CliError::Config { path, .. } => assert_eq!(path, "cloud"),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_str(r#"{"count": "three"}"#).unwrap_err();
        assert!(matches!(err, CliError::Config { ref path, .. } if path == "count"));
    }

    #[test]
    fn schema_version_is_checked() {
        assert!(matches!(parse_str(r#"{"schema_version": 2}"#), Err(CliError::Config { .. })));
        assert!(parse_str(r#"{"schema_version": 1, "seed": 9}"#).unwrap().seed == 9);
    }

    #[test]
    fn overrides_win() {
        let o = Overrides { seed: Some(3), out: Some("elsewhere".into()) };
        let l: Loaded<Body> = parse(serde_json::json!({"seed": 1}), &o, "out").unwrap();
        assert_eq!((l.seed, l.out), (3, PathBuf::from("elsewhere")));
        assert_eq!(l.resolved["seed"], 3);
    }
}
