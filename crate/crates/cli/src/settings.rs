//! Config file plus flag overrides.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use subtraj::{Config, Ground, MetricKind, SimTransform};

use crate::CliError;

/// Variant names double as the flag values `no-gari` etc.
#[allow(clippy::enum_variant_names)]
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblateFlag {
    NoGari,
    NoRandom,
    NoRecord,
}

impl AblateFlag {
    fn parse(s: &str) -> Result<Self, CliError> {
        <AblateFlag as ValueEnum>::from_str(s, true).map_err(|_| CliError::Usage(format!("unknown ablation {s:?}")))
    }
}

/// Flags shared by every command that needs a [`Config`].
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML file with any config keys and paths; flags win over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Point-correspondence threshold in coordinate units.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub grid_m: Option<usize>,
    #[arg(long, global = true)]
    pub xi: Option<usize>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Upper-layer quotas as `similar,random,dissimilar`.
    #[arg(long, global = true, value_delimiter = ',', num_args = 3)]
    pub gari_counts: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub kappa_n: Option<usize>,
    #[arg(long, global = true)]
    pub kappa_r: Option<usize>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// dtw, edr or erp.
    #[arg(long, global = true)]
    pub metric: Option<String>,
    #[arg(long, global = true)]
    pub edr_eps: Option<f64>,
    /// ERP gap point as `lon,lat`.
    #[arg(long, global = true, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
    pub erp_gap: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub scorer: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// reciprocal or exponential.
    #[arg(long, global = true)]
    pub sim_transform: Option<String>,
    /// planar or haversine.
    #[arg(long, global = true)]
    pub ground: Option<String>,
    #[arg(long, global = true)]
    pub min_candidates: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub ablate: Vec<AblateFlag>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Everything a config file may contain.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub grid_m: Option<usize>,
    pub xi: Option<usize>,
    pub delta: Option<f64>,
    pub gari_counts: Option<[usize; 3]>,
    pub kappa_n: Option<usize>,
    pub kappa_r: Option<usize>,
    pub k: Option<usize>,
    pub metric: Option<String>,
    pub edr_eps: Option<f64>,
    pub erp_gap: Option<[f64; 2]>,
    pub scorer: Option<String>,
    pub seed: Option<u64>,
    pub sim_transform: Option<String>,
    pub ground: Option<String>,
    pub min_candidates: Option<usize>,
    #[serde(default)]
    pub ablate: Vec<String>,
    pub threads: Option<usize>,

    pub data: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// The merged view: file values with flags laid over them.
pub struct Settings {
    pub file: FileConfig,
    pub flags: ConfigArgs,
}

impl Settings {
    pub fn load(flags: &ConfigArgs) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Ok(Settings { file, flags: flags.clone() })
    }

    /// A path from its flag or, failing that, the config file.
    pub fn path(
        &self,
        flag: &Option<PathBuf>,
        pick: fn(&FileConfig) -> &Option<PathBuf>,
        name: &str,
    ) -> Result<PathBuf, CliError> {
        flag.clone()
            .or_else(|| pick(&self.file).clone())
            .ok_or_else(|| CliError::Usage(format!("missing --{name} (or `{}` in the config file)", name.replace('-', "_"))))
    }

    pub fn threads(&self) -> Option<usize> {
        self.flags.threads.or(self.file.threads)
    }

    pub fn ablations(&self) -> Result<Vec<AblateFlag>, CliError> {
        if !self.flags.ablate.is_empty() {
            return Ok(self.flags.ablate.clone());
        }
        self.file.ablate.iter().map(|s| AblateFlag::parse(s)).collect()
    }

    /// Build-time keys set explicitly, for warning when they cannot apply.
    pub fn build_keys_given(&self) -> Vec<&'static str> {
        let (f, c) = (&self.flags, &self.file);
        let mut v = Vec::new();
        let mut note = |set: bool, name| {
            if set {
                v.push(name)
            }
        };
        note(f.alpha.or(c.alpha).is_some(), "alpha");
        note(f.grid_m.or(c.grid_m).is_some(), "grid_m");
        note(f.xi.or(c.xi).is_some(), "xi");
        note(f.delta.or(c.delta).is_some(), "delta");
        note(f.gari_counts.is_some() || c.gari_counts.is_some(), "gari_counts");
        note(f.kappa_n.or(c.kappa_n).is_some(), "kappa_n");
        note(f.kappa_r.or(c.kappa_r).is_some(), "kappa_r");
        note(f.ground.is_some() || c.ground.is_some(), "ground");
        v
    }

    /// A full config; `alpha` must come from somewhere.
    pub fn config(&self) -> Result<Config, CliError> {
        let alpha = self
            .flags
            .alpha
            .or(self.file.alpha)
            .ok_or_else(|| CliError::Usage("--alpha is required (no unit-free default exists)".into()))?;
        let mut cfg = Config::new(alpha);
        self.apply_build(&mut cfg)?;
        self.apply_query(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Lays query-time keys over a config taken from an index.
    pub fn query_config(&self, base: &Config) -> Result<Config, CliError> {
        let mut cfg = base.clone();
        cfg.ablation.no_gari = false;
        cfg.ablation.no_record = false;
        self.apply_query(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_build(&self, cfg: &mut Config) -> Result<(), CliError> {
        let (f, c) = (&self.flags, &self.file);
        if let Some(v) = f.grid_m.or(c.grid_m) {
            cfg.grid_m = v;
        }
        if let Some(v) = f.xi.or(c.xi) {
            cfg.xi = v;
        }
        if let Some(v) = f.delta.or(c.delta) {
            cfg.delta = v;
        }
        if let Some(v) = f.gari_counts.as_deref().or(c.gari_counts.as_ref().map(|a| &a[..])) {
            cfg.gari_counts = subtraj::GariCounts { similar: v[0], random: v[1], dissimilar: v[2] };
        }
        if let Some(v) = f.kappa_n.or(c.kappa_n) {
            cfg.kappa_n = v;
        }
        if let Some(v) = f.kappa_r.or(c.kappa_r) {
            cfg.kappa_r = v;
        }
        if let Some(v) = f.ground.as_ref().or(c.ground.as_ref()) {
            cfg.ground = match v.to_ascii_lowercase().as_str() {
                "planar" => Ground::Planar,
                "haversine" => Ground::Haversine,
                other => return Err(CliError::Usage(format!("unknown ground distance {other:?}"))),
            };
        }
        cfg.ablation.no_random = self.ablations()?.contains(&AblateFlag::NoRandom);
        Ok(())
    }

    fn apply_query(&self, cfg: &mut Config) -> Result<(), CliError> {
        let (f, c) = (&self.flags, &self.file);
        if let Some(v) = f.k.or(c.k) {
            cfg.k = v;
        }
        if let Some(v) = f.metric.as_ref().or(c.metric.as_ref()) {
            cfg.metric = MetricKind::parse(v)?;
        }
        if let Some(v) = f.edr_eps.or(c.edr_eps) {
            cfg.edr_eps = Some(v);
        }
        if let Some(v) = f.erp_gap.as_deref().or(c.erp_gap.as_ref().map(|a| &a[..])) {
            cfg.erp_gap = (v[0], v[1]);
        }
        if let Some(v) = f.scorer.as_ref().or(c.scorer.as_ref()) {
            cfg.scorer = v.clone();
        }
        if let Some(v) = f.seed.or(c.seed) {
            cfg.seed = v;
        }
        if let Some(v) = f.sim_transform.as_ref().or(c.sim_transform.as_ref()) {
            cfg.sim_transform = SimTransform::parse(v)?;
        }
        if let Some(v) = f.min_candidates.or(c.min_candidates) {
            cfg.min_candidates = Some(v);
        }
        let ab = self.ablations()?;
        cfg.ablation.no_gari |= ab.contains(&AblateFlag::NoGari);
        cfg.ablation.no_record |= ab.contains(&AblateFlag::NoRecord);
        Ok(())
    }
}
