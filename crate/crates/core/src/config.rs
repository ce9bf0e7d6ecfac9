//! Pipeline configuration: TOML file, `key=value` overrides, hashing and
//! per-stage seed derivation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Platform;
use crate::dragonnet::{LossWeights, TrainConfig, TreatmentKind};
use crate::error::{Error, Result};
use crate::synthgen::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub posts: PathBuf,
    pub legislators: PathBuf,
    pub edges: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub domains: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            posts: "data/posts.jsonl".into(),
            legislators: "data/legislators.jsonl".into(),
            edges: Some("data/edges.csv".into()),
            embeddings: Some("data/embeddings.bin".into()),
            domains: "data/domains.txt".into(),
            out_dir: "out".into(),
        }
    }
}

impl Paths {
    /// Directory holding the posts file; `simulate` writes there.
    pub fn data_dir(&self) -> PathBuf {
        self.posts.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.posts);
        fix(&mut self.legislators);
        fix(&mut self.domains);
        fix(&mut self.out_dir);
        if let Some(p) = self.edges.as_mut() {
            fix(p);
        }
        if let Some(p) = self.embeddings.as_mut() {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub platform: Platform,
    pub treatment: TreatmentKind,
    pub study_start: String,
    pub study_end: String,
    /// Rolling baseline window in days.
    pub window_days: u32,
    pub thres_a: f64,
    pub thres_b: f64,
    pub toxicity_cutoff: f64,
    pub caliper: f64,
    pub normalize_embeddings: bool,
    pub min_words: usize,
    pub folds: usize,
    /// Controls per treated post.
    pub control_ratio: usize,
    pub min_pairs: usize,
    pub bootstrap_resamples: usize,
    pub exact_threshold: usize,
    /// Also fit the party x harmful-content interaction model.
    pub regress_interaction: bool,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            platform: Platform::A,
            treatment: TreatmentKind::Uncivil,
            study_start: "2020-01-01T00:00:00Z".into(),
            study_end: "2022-01-01T00:00:00Z".into(),
            window_days: 14,
            thres_a: 10.0,
            thres_b: 100.0,
            toxicity_cutoff: 0.82,
            caliper: 0.1,
            normalize_embeddings: false,
            min_words: 10,
            folds: 5,
            control_ratio: 1,
            min_pairs: 30,
            bootstrap_resamples: 2000,
            exact_threshold: 16,
            regress_interaction: true,
            seed: 42,
        }
    }
}

/// Network settings; folds and seed come from [`Params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSettings {
    pub trunk_width: usize,
    pub trunk_layers: usize,
    pub head_width: usize,
    pub head_layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
    pub plateau_patience: usize,
    pub plateau_tol: f64,
    pub first_layer_scale: f64,
    pub alpha: f64,
    pub beta: f64,
    pub pi_clamp: f64,
}

impl Default for NetSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        NetSettings {
            trunk_width: t.trunk_width,
            trunk_layers: t.trunk_layers,
            head_width: t.head_width,
            head_layers: t.head_layers,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            lr_decay: t.lr_decay,
            plateau_patience: t.plateau_patience,
            plateau_tol: t.plateau_tol,
            first_layer_scale: t.first_layer_scale,
            alpha: t.loss.alpha,
            beta: t.loss.beta,
            pi_clamp: t.loss.pi_clamp,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub params: Params,
    pub dragonnet: NetSettings,
    /// Generator settings for `simulate`; its seed is `params.seed`.
    pub synth: SynthConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            cfg.paths.rebase(dir);
        }
        Ok(cfg)
    }

    /// Applies dotted `section.key=value` overrides. Values are parsed as
    /// TOML and fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            let mut node = &mut root;
            let parts: Vec<&str> = key.trim().split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let table = node
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override key `{key}` does not name a table")))?;
                if i + 1 == parts.len() {
                    table.insert(part.to_string(), value.clone());
                    break;
                }
                node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
            }
        }
        let cfg: PipelineConfig = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let bad = |m: String| Err(Error::Config(m));
        if !(p.caliper > 0.0) {
            return bad(format!("caliper must be positive, got {}", p.caliper));
        }
        if p.folds < 2 {
            return bad("folds must be at least 2".into());
        }
        if p.control_ratio == 0 {
            return bad("control_ratio must be at least 1".into());
        }
        if p.window_days == 0 {
            return bad("window_days must be positive".into());
        }
        if p.bootstrap_resamples < 100 {
            return bad("bootstrap_resamples must be at least 100".into());
        }
        if !(0.0..=1.0).contains(&p.toxicity_cutoff) {
            return bad("toxicity_cutoff must lie in [0, 1]".into());
        }
        self.window()?;
        Ok(())
    }

    pub fn window(&self) -> Result<crate::corpus::StudyWindow> {
        let parse = |s: &str| {
            crate::corpus::parse_timestamp(s).ok_or_else(|| Error::Config(format!("bad timestamp `{s}`")))
        };
        let w = crate::corpus::StudyWindow {
            start: parse(&self.params.study_start)?,
            end: parse(&self.params.study_end)?,
        };
        if w.end <= w.start {
            return Err(Error::Config("study_end must be after study_start".into()));
        }
        Ok(w)
    }

    pub fn thresholds(&self) -> crate::visibility::Thresholds {
        crate::visibility::Thresholds {
            platform_a: self.params.thres_a,
            platform_b: self.params.thres_b,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = &self.dragonnet;
        TrainConfig {
            trunk_width: d.trunk_width,
            trunk_layers: d.trunk_layers,
            head_width: d.head_width,
            head_layers: d.head_layers,
            folds: self.params.folds,
            epochs: d.epochs,
            batch_size: d.batch_size,
            lr: d.lr,
            momentum: d.momentum,
            weight_decay: d.weight_decay,
            lr_decay: d.lr_decay,
            plateau_patience: d.plateau_patience,
            plateau_tol: d.plateau_tol,
            first_layer_scale: d.first_layer_scale,
            loss: LossWeights {
                alpha: d.alpha,
                beta: d.beta,
                pi_clamp: d.pi_clamp,
            },
            seed: self.seed_for("train-dragonnet"),
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.params.seed,
            ..self.synth.clone()
        }
    }

    /// SHA-256 over the analysis parameters. Paths and generator settings
    /// are left out; input files are tracked by content digest instead.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            params: &'a Params,
            dragonnet: &'a NetSettings,
        }
        let json = serde_json::to_string(&Hashed {
            params: &self.params,
            dragonnet: &self.dragonnet,
        })
        .expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn seed_for(&self, stage: &str) -> u64 {
        derive_seed(self.params.seed, stage)
    }
}

/// Stage-labeled seed: the first eight bytes of SHA-256("seed:label").
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let d = Sha256::digest(format!("{seed}:{label}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().unwrap())
}
