//! Stage runner. Each stage reads its inputs from disk, writes artifacts
//! under the output directory and records a manifest with content digests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::corpus::{
    in_degree_centrality, load_edges, load_embeddings, load_legislators, load_posts, write_edges, write_legislators,
    write_posts, Dataset, EmbeddingMatrix, Platform,
};
use crate::dragonnet::{
    assemble_features, deconfounded_embeddings, targeted_cate, train, DragonnetParams, FeatureOptions, FeatureSet,
    TreatmentKind,
};
use crate::error::{Error, Result};
use crate::labeling::{label_posts, DomainList, TreatmentLabel};
use crate::matching::{
    cate_table, match_within_groups, standardized_differences, subgroup_masks, MatchSet, MatchedPair,
    BALANCE_THRESHOLD,
};
use crate::regress::{build_design, harmful_counts, DesignInputs, DesignOptions};
use crate::stats::{
    ecdf, group_compare, group_samples, ks_two_sample, significance_stars, BootstrapConfig, Grouping,
    MannWhitneyOptions, VisibilityDv,
};
use crate::synthgen::{generate, naive_estimate, TruthSummary};
use crate::visibility::{author_visibility, overperforming, OverperformingOutcome, Percentiles, VisibilitySummary};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Label,
    Visibility,
    Describe,
    Regress,
    TrainDragonnet,
    Embed,
    Match,
    Cate,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Label,
        Stage::Visibility,
        Stage::Describe,
        Stage::Regress,
        Stage::TrainDragonnet,
        Stage::Embed,
        Stage::Match,
        Stage::Cate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Label => "label",
            Stage::Visibility => "visibility",
            Stage::Describe => "describe",
            Stage::Regress => "regress",
            Stage::TrainDragonnet => "train-dragonnet",
            Stage::Embed => "embed",
            Stage::Match => "match",
            Stage::Cate => "cate",
        }
    }

    /// Upstream stages, nearest first, so a missing-stage error names the
    /// stage that should run next.
    pub fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Label | Stage::Visibility => &[Stage::Ingest],
            Stage::Describe => &[Stage::Visibility, Stage::Ingest],
            Stage::Regress | Stage::TrainDragonnet => &[Stage::Visibility, Stage::Label, Stage::Ingest],
            Stage::Embed => &[Stage::TrainDragonnet, Stage::Visibility, Stage::Label, Stage::Ingest],
            Stage::Match => &[Stage::Embed, Stage::TrainDragonnet],
            Stage::Cate => &[Stage::Match, Stage::TrainDragonnet, Stage::Ingest],
        }
    }

    pub fn manifest_name(self) -> String {
        format!("manifest_{}.json", self.name())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    /// Input path to SHA-256 of its content.
    pub inputs: BTreeMap<String, String>,
    /// Output path, relative to the output directory, to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageManifest>,
}

/// Output files, their producing stage and their columns.
pub const SCHEMA: &[(&str, &str, &[(&str, &str)])] = &[
    ("labels.csv", "label", &[
        ("post_id", "post identifier"),
        ("toxicity", "toxicity score, empty when unscored"),
        ("uncivil", "1 when toxicity exceeds the cutoff, 0 below, empty when unscored"),
        ("low_credible", "1 when a URL resolves to a listed low-credibility domain"),
        ("matched_domain", "the listed domain that matched"),
    ]),
    ("outcomes.csv", "visibility", &[
        ("post_id", "post identifier"),
        ("author_id", "author identifier"),
        ("interactions", "total interactions"),
        ("baseline", "median interactions of the author's posts in the preceding window"),
        ("score", "interactions / (baseline + platform threshold)"),
        ("overperforms", "1 when score > 1"),
    ]),
    ("visibility.csv", "visibility", &[
        ("author_id", "author identifier"),
        ("post_count", "posts in the study window"),
        ("total_interactions", "sum of interactions"),
        ("V_IP", "interactions per post"),
        ("V_IF", "interactions per follower, empty without a follower count"),
        ("V_IPF", "interactions per post per follower, empty without a follower count"),
        ("P25", "25th percentile of per-post interactions"),
        ("P50", "median per-post interactions"),
        ("P75", "75th percentile of per-post interactions"),
    ]),
    ("mannwhitney.csv", "describe", &[
        ("grouping", "party, gender, ethnicity or posting_freq"),
        ("dv", "visibility measure"),
        ("group_x", "first group; positive effects favour it"),
        ("group_y", "second group"),
        ("n_x", "authors in group_x"),
        ("n_y", "authors in group_y"),
        ("u", "Mann-Whitney U of group_x"),
        ("p_value", "exact p when available, otherwise asymptotic"),
        ("p_exact", "exact p, empty for large samples"),
        ("p_asymptotic", "normal approximation p"),
        ("effect_size", "rank-biserial correlation"),
        ("ci_low", "bootstrap 2.5% bound of the effect size"),
        ("ci_high", "bootstrap 97.5% bound of the effect size"),
        ("stars", "significance stars"),
    ]),
    ("ks.csv", "describe", &[
        ("grouping", "grouping"),
        ("dv", "visibility measure"),
        ("n_x", "authors in the first group"),
        ("n_y", "authors in the second group"),
        ("d", "two-sample Kolmogorov-Smirnov statistic"),
        ("p_value", "asymptotic p"),
        ("ci_low", "bootstrap 2.5% bound of D"),
        ("ci_high", "bootstrap 97.5% bound of D"),
    ]),
    ("ecdf.csv", "describe", &[
        ("grouping", "grouping"),
        ("dv", "visibility measure"),
        ("group", "group label"),
        ("value", "distinct sample value"),
        ("cumulative", "empirical CDF at value"),
    ]),
    ("regress.csv", "regress", &[
        ("dv", "response"),
        ("model", "base or interaction"),
        ("term", "design column"),
        ("estimate", "fixed-effect estimate"),
        ("std_error", "standard error"),
        ("ci_low", "estimate - 1.96 std_error"),
        ("ci_high", "estimate + 1.96 std_error"),
        ("z", "estimate / std_error"),
        ("p_value", "two-sided normal p"),
        ("stars", "significance stars"),
    ]),
    ("regress_fit.csv", "regress", &[
        ("dv", "response"),
        ("model", "base or interaction"),
        ("n_obs", "authors in the design"),
        ("n_groups", "states"),
        ("dropped", "authors left out"),
        ("sigma_group", "random-intercept sd"),
        ("sigma_resid", "residual sd"),
        ("variance_ratio", "sigma_group^2 / sigma_resid^2"),
        ("r_squared", "fixed-effect R^2"),
        ("reml_loglik", "restricted log-likelihood"),
    ]),
    ("regress_transforms.csv", "regress", &[
        ("dv", "response"),
        ("model", "base or interaction"),
        ("column", "transformed variable"),
        ("transform", "yeo_johnson, box_cox, sqrt, center_scale or none"),
        ("lambda", "power parameter, empty when not applicable"),
    ]),
    ("samples.csv", "train-dragonnet", &[
        ("post_id", "post identifier"),
        ("author_id", "author identifier"),
        ("t", "1 for treated posts"),
        ("y", "1 for overperforming posts"),
        ("fold", "cross-fitting fold holding the post out"),
        ("...", "one column per balance covariate follows"),
    ]),
    ("dragonnet_metrics.csv", "train-dragonnet", &[
        ("fold", "fold index"),
        ("n_train", "training posts"),
        ("n_test", "held-out posts"),
        ("auc", "held-out AUC of the factual outcome prediction"),
        ("macro_f1", "held-out macro F1 at the Youden cutoff"),
        ("cutoff", "Youden cutoff"),
        ("final_loss", "last epoch training loss"),
        ("final_lr", "learning rate after decay"),
    ]),
    ("training_loss.csv", "train-dragonnet", &[
        ("fold", "fold index"),
        ("epoch", "epoch, from 1"),
        ("loss", "mean training loss"),
    ]),
    ("naive.csv", "train-dragonnet", &[
        ("scope", "eligible (every usable post) or samples (treated plus sampled controls)"),
        ("n_treated", "treated posts"),
        ("n_control", "untreated posts"),
        ("estimate", "difference in overperforming rate, treated minus untreated"),
    ]),
    ("dragonnet_cate.csv", "embed", &[
        ("fold", "fold index, or all for the mean of the fold estimates"),
        ("n", "held-out posts"),
        ("targeted_cate", "network plug-in effect with the targeted correction"),
    ]),
    ("pairs.csv", "match", &[
        ("treated_id", "treated post"),
        ("control_id", "matched untreated post"),
        ("distance", "Euclidean distance in the deconfounded embedding"),
        ("fold", "fold the pair was matched in"),
    ]),
    ("balance.csv", "match", &[
        ("covariate", "covariate or one-hot level"),
        ("std_diff_before", "standardized difference over all samples"),
        ("std_diff_after", "standardized difference over matched pairs"),
        ("balanced", "1 when |std_diff_after| < 0.1"),
    ]),
    ("match_summary.csv", "match", &[
        ("n_treated", "treated samples"),
        ("n_control", "control samples"),
        ("n_pairs", "matched pairs"),
        ("n_unmatched", "treated samples without a control inside the caliper"),
        ("caliper", "distance cutoff"),
        ("max_abs_before", "largest |standardized difference| before matching"),
        ("max_abs_after", "largest |standardized difference| after matching"),
        ("balanced", "1 when every covariate is balanced"),
    ]),
    ("cate.csv", "cate", &[
        ("subgroup", "All, Dem, Rep, ExtremeDem, ExtremeRep, OverlapDem or OverlapRep"),
        ("n_pairs", "pairs whose treated post belongs to the subgroup"),
        ("cate", "mean outcome difference over those pairs"),
        ("ci_low", "bootstrap 2.5% bound"),
        ("ci_high", "bootstrap 97.5% bound"),
        ("note", "reason when the estimate is withheld"),
    ]),
];

fn columns(file: &str) -> Vec<&'static str> {
    SCHEMA
        .iter()
        .find(|(f, _, _)| *f == file)
        .map(|(_, _, cols)| cols.iter().map(|c| c.0).filter(|c| *c != "...").collect())
        .unwrap_or_else(|| panic!("no schema for {file}"))
}

pub fn schema_markdown() -> String {
    let mut s = String::from("# Output schema\n\n");
    s.push_str("Every CSV starts with a `# config_hash=<sha256>` line followed by a header row.\n\n");
    for (file, stage, cols) in SCHEMA {
        s.push_str(&format!("## {file}\n\nWritten by `{stage}`.\n\n| column | meaning |\n|---|---|\n"));
        for (c, m) in *cols {
            s.push_str(&format!("| {c} | {m} |\n"));
        }
        s.push('\n');
    }
    s.push_str("## Other artifacts\n\n");
    s.push_str("- `corpus/`: posts, legislators, edges and embeddings kept by `ingest`.\n");
    s.push_str("- `ingest_report.json`: record counts from `ingest`.\n");
    s.push_str("- `dragonnet/fold_<k>.dgn`: network checkpoints.\n");
    s.push_str("- `phi.bin`: held-out deconfounded embeddings in the binary embedding format.\n");
    s.push_str("- `manifest_<stage>.json`, `run_manifest.json`: config hash, seed and SHA-256 of inputs and outputs.\n");
    s
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

fn fmt_b(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

/// CSV rows read back from an artifact.
struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(&self.path, 2, format!("missing column `{name}`")))
    }

    fn parse<T: FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let cell = &self.rows[row][col];
        cell.parse()
            .map_err(|_| Error::parse(&self.path, row + 3, format!("bad value `{cell}` in `{}`", self.header[col])))
    }

    fn opt_f(&self, row: usize, col: usize) -> Result<Option<f64>> {
        if self.rows[row][col].is_empty() {
            Ok(None)
        } else {
            self.parse(row, col).map(Some)
        }
    }

    fn flag(&self, row: usize, col: usize) -> Result<bool> {
        match self.rows[row][col].as_str() {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(Error::parse(&self.path, row + 3, format!("expected 0 or 1, got `{other}`"))),
        }
    }
}

/// Working state of one stage run.
struct StageRun<'a> {
    cfg: &'a PipelineConfig,
    stage: Stage,
    hash: String,
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> StageRun<'a> {
    fn start(cfg: &'a PipelineConfig, stage: Stage) -> Result<Self> {
        let out = cfg.paths.out_dir.clone();
        let hash = cfg.hash();
        for &req in stage.requires() {
            let m = out.join(req.manifest_name());
            if !m.exists() {
                return Err(Error::MissingStage {
                    stage: req.name().into(),
                    artifact: m,
                });
            }
            let text = std::fs::read_to_string(&m).map_err(|e| Error::io(&m, e))?;
            let manifest: StageManifest = serde_json::from_str(&text).map_err(|e| Error::parse(&m, 0, e.to_string()))?;
            if manifest.config_hash != hash {
                return Err(Error::ConfigHashMismatch {
                    artifact: m,
                    expected: hash,
                    found: manifest.config_hash,
                });
            }
        }
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        log::info!("stage {}", stage.name());
        Ok(StageRun {
            cfg,
            stage,
            hash,
            out,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    fn external_input(&mut self, path: &Path) -> Result<PathBuf> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(path.to_path_buf())
    }

    fn input(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.out.join(rel);
        if !p.exists() {
            let producer = SCHEMA
                .iter()
                .find(|(f, _, _)| *f == rel)
                .map(|(_, s, _)| *s)
                .or_else(|| rel.starts_with("corpus/").then_some("ingest"))
                .unwrap_or("an earlier");
            return Err(Error::MissingStage {
                stage: producer.into(),
                artifact: p,
            });
        }
        let digest = sha256_file(&p)?;
        self.inputs.insert(rel.to_string(), digest);
        Ok(p)
    }

    fn output_path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.out.join(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(p)
    }

    fn record_output(&mut self, rel: &str) -> Result<()> {
        let digest = sha256_file(&self.out.join(rel))?;
        self.outputs.insert(rel.to_string(), digest);
        Ok(())
    }

    fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.output_path(rel)?;
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.record_output(rel)
    }

    fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut buf = format!("# config_hash={}\n", self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush().map_err(|e| Error::io(rel, e))?;
        }
        self.write_bytes(rel, &buf)
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    fn read_csv(&mut self, rel: &str) -> Result<Table> {
        let path = self.input(rel)?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
        let found = first
            .strip_prefix("# config_hash=")
            .ok_or_else(|| Error::parse(&path, 1, "missing config hash line"))?
            .trim();
        if found != self.hash {
            return Err(Error::ConfigHashMismatch {
                artifact: path,
                expected: self.hash.clone(),
                found: found.to_string(),
            });
        }
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
        let header = rdr.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(String::from).collect());
        }
        Ok(Table { path, header, rows })
    }

    fn finish(self) -> Result<StageManifest> {
        let manifest = StageManifest {
            tool: TOOL.into(),
            version: VERSION.into(),
            stage: self.stage.name().into(),
            config_hash: self.hash.clone(),
            seed: self.cfg.params.seed,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let p = self.out.join(self.stage.manifest_name());
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        write_run_manifest(self.cfg)?;
        Ok(manifest)
    }
}

/// Collects the stage manifests present under the output directory and
/// writes `run_manifest.json` and `SCHEMA.md`.
pub fn write_run_manifest(cfg: &PipelineConfig) -> Result<RunManifest> {
    let out = &cfg.paths.out_dir;
    let mut stages = Vec::new();
    for st in Stage::ALL {
        let p = out.join(st.manifest_name());
        if p.exists() {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            stages.push(serde_json::from_str(&text).map_err(|e| Error::parse(&p, 0, e.to_string()))?);
        }
    }
    let run = RunManifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        config_hash: cfg.hash(),
        seed: cfg.params.seed,
        stages,
    };
    let mut text = serde_json::to_string_pretty(&run)?;
    text.push('\n');
    let p = out.join("run_manifest.json");
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    let s = out.join("SCHEMA.md");
    std::fs::write(&s, schema_markdown()).map_err(|e| Error::io(&s, e))?;
    Ok(run)
}

pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<StageManifest> {
    let mut run = StageRun::start(cfg, stage)?;
    match stage {
        Stage::Ingest => ingest(&mut run)?,
        Stage::Label => label(&mut run)?,
        Stage::Visibility => visibility(&mut run)?,
        Stage::Describe => describe(&mut run)?,
        Stage::Regress => regress(&mut run)?,
        Stage::TrainDragonnet => train_dragonnet(&mut run)?,
        Stage::Embed => embed(&mut run)?,
        Stage::Match => match_stage(&mut run)?,
        Stage::Cate => cate(&mut run)?,
    }
    run.finish()
}

/// Every stage in order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    for st in Stage::ALL {
        run_stage(cfg, st)?;
    }
    write_run_manifest(cfg)
}

/// Writes a synthetic corpus to `dir`, or to the directory of the configured
/// posts file.
pub fn simulate(cfg: &PipelineConfig, dir: Option<&Path>) -> Result<TruthSummary> {
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.paths.data_dir());
    let data = generate(&cfg.synth_config())?;
    data.write_dir(&dir)?;
    Ok(data.summary)
}

const CORPUS_POSTS: &str = "corpus/posts.jsonl";
const CORPUS_LEGISLATORS: &str = "corpus/legislators.jsonl";
const CORPUS_EDGES: &str = "corpus/edges.csv";
const CORPUS_EMBEDDINGS: &str = "corpus/embeddings.bin";

fn ingest(run: &mut StageRun<'_>) -> Result<()> {
    let cfg = run.cfg;
    let platform = cfg.params.platform;
    let posts = load_posts(run.external_input(&cfg.paths.posts)?, platform)?;
    let legislators = load_legislators(run.external_input(&cfg.paths.legislators)?)?;
    let edges = match &cfg.paths.edges {
        Some(p) => Some(load_edges(run.external_input(p)?)?),
        None => None,
    };
    let embeddings = match &cfg.paths.embeddings {
        Some(p) => Some(load_embeddings(run.external_input(p)?)?),
        None => None,
    };
    let ds = Dataset::assemble(platform, posts, legislators, edges.as_deref(), embeddings, &cfg.window()?)?;

    write_posts(run.output_path(CORPUS_POSTS)?, &ds.posts)?;
    run.record_output(CORPUS_POSTS)?;
    let legs: Vec<_> = ds.legislators.values().cloned().collect();
    write_legislators(run.output_path(CORPUS_LEGISLATORS)?, &legs)?;
    run.record_output(CORPUS_LEGISLATORS)?;
    if let Some(e) = &edges {
        let mut sorted = e.clone();
        sorted.sort();
        sorted.dedup();
        write_edges(run.output_path(CORPUS_EDGES)?, &sorted)?;
        run.record_output(CORPUS_EDGES)?;
    }
    if let Some(emb) = &ds.embeddings {
        let mut kept = EmbeddingMatrix::new(emb.dim())?;
        let mut seen = BTreeSet::new();
        for p in &ds.posts {
            if let Some(r) = p.embedding_ref.as_deref() {
                if let Some(row) = emb.row(r) {
                    if seen.insert(r.to_string()) {
                        kept.push(r, row)?;
                    }
                }
            }
        }
        kept.write_binary(run.output_path(CORPUS_EMBEDDINGS)?)?;
        run.record_output(CORPUS_EMBEDDINGS)?;
    }
    #[derive(Serialize)]
    struct Report<'a> {
        config_hash: &'a str,
        platform: Platform,
        report: &'a crate::corpus::IngestReport,
    }
    let hash = run.hash.clone();
    run.write_json(
        "ingest_report.json",
        &Report {
            config_hash: &hash,
            platform,
            report: &ds.report,
        },
    )
}

fn load_corpus(run: &mut StageRun<'_>, with_embeddings: bool) -> Result<Dataset> {
    let cfg = run.cfg;
    let posts = load_posts(run.input(CORPUS_POSTS)?, cfg.params.platform)?;
    let legislators = load_legislators(run.input(CORPUS_LEGISLATORS)?)?;
    let edges = if run.out.join(CORPUS_EDGES).exists() {
        Some(load_edges(run.input(CORPUS_EDGES)?)?)
    } else {
        None
    };
    let embeddings = if with_embeddings {
        if !run.out.join(CORPUS_EMBEDDINGS).exists() {
            return Err(Error::InvalidInput("no embeddings were ingested; set paths.embeddings".into()));
        }
        Some(load_embeddings(run.input(CORPUS_EMBEDDINGS)?)?)
    } else {
        None
    };
    Dataset::assemble(cfg.params.platform, posts, legislators, edges.as_deref(), embeddings, &cfg.window()?)
}

fn label(run: &mut StageRun<'_>) -> Result<()> {
    let ds = load_corpus(run, false)?;
    let domains = DomainList::load(run.external_input(&run.cfg.paths.domains.clone())?)?;
    let labels = label_posts(&ds.posts, &domains, run.cfg.params.toxicity_cutoff);
    let rows: Vec<Vec<String>> = ds
        .posts
        .iter()
        .zip(&labels)
        .map(|(p, l)| {
            vec![
                l.post_id.clone(),
                fmt_opt(p.toxicity_score),
                l.uncivil.map(fmt_b).unwrap_or_default(),
                fmt_b(l.low_credible),
                l.matched_domain.clone().unwrap_or_default(),
            ]
        })
        .collect();
    run.write_csv("labels.csv", &columns("labels.csv"), &rows)
}

fn read_labels(run: &mut StageRun<'_>) -> Result<Vec<TreatmentLabel>> {
    let t = run.read_csv("labels.csv")?;
    let (id, unc, low, dom) = (t.col("post_id")?, t.col("uncivil")?, t.col("low_credible")?, t.col("matched_domain")?);
    (0..t.rows.len())
        .map(|r| {
            Ok(TreatmentLabel {
                post_id: t.rows[r][id].clone(),
                uncivil: if t.rows[r][unc].is_empty() { None } else { Some(t.flag(r, unc)?) },
                low_credible: t.flag(r, low)?,
                matched_domain: Some(t.rows[r][dom].clone()).filter(|s| !s.is_empty()),
            })
        })
        .collect()
}

fn visibility(run: &mut StageRun<'_>) -> Result<()> {
    let ds = load_corpus(run, false)?;
    let outcomes = overperforming(&ds.posts, run.cfg.params.window_days, &run.cfg.thresholds());
    let rows: Vec<Vec<String>> = ds
        .posts
        .iter()
        .zip(&outcomes)
        .map(|(p, o)| {
            vec![
                o.post_id.clone(),
                p.author_id.clone(),
                p.total_interactions().to_string(),
                fmt_f(o.baseline),
                fmt_f(o.score),
                fmt_b(o.overperforms),
            ]
        })
        .collect();
    run.write_csv("outcomes.csv", &columns("outcomes.csv"), &rows)?;
    let summaries = author_visibility(&ds.posts, &ds.legislators);
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            vec![
                s.author_id.clone(),
                s.post_count.to_string(),
                s.total_interactions.to_string(),
                fmt_f(s.v_ip),
                fmt_opt(s.v_if),
                fmt_opt(s.v_ipf),
                fmt_f(s.percentiles.p25),
                fmt_f(s.percentiles.p50),
                fmt_f(s.percentiles.p75),
            ]
        })
        .collect();
    run.write_csv("visibility.csv", &columns("visibility.csv"), &rows)
}

fn read_outcomes(run: &mut StageRun<'_>) -> Result<Vec<OverperformingOutcome>> {
    let t = run.read_csv("outcomes.csv")?;
    let (id, b, s, o) = (t.col("post_id")?, t.col("baseline")?, t.col("score")?, t.col("overperforms")?);
    (0..t.rows.len())
        .map(|r| {
            Ok(OverperformingOutcome {
                post_id: t.rows[r][id].clone(),
                baseline: t.parse(r, b)?,
                score: t.parse(r, s)?,
                overperforms: t.flag(r, o)?,
            })
        })
        .collect()
}

fn read_visibility(run: &mut StageRun<'_>) -> Result<Vec<VisibilitySummary>> {
    let t = run.read_csv("visibility.csv")?;
    let c = |n: &str| t.col(n);
    let (id, pc, ti, vip, vif, vipf) = (c("author_id")?, c("post_count")?, c("total_interactions")?, c("V_IP")?, c("V_IF")?, c("V_IPF")?);
    let (p25, p50, p75) = (c("P25")?, c("P50")?, c("P75")?);
    (0..t.rows.len())
        .map(|r| {
            Ok(VisibilitySummary {
                author_id: t.rows[r][id].clone(),
                post_count: t.parse(r, pc)?,
                total_interactions: t.parse(r, ti)?,
                v_ip: t.parse(r, vip)?,
                v_if: t.opt_f(r, vif)?,
                v_ipf: t.opt_f(r, vipf)?,
                percentiles: Percentiles {
                    p25: t.parse(r, p25)?,
                    p50: t.parse(r, p50)?,
                    p75: t.parse(r, p75)?,
                },
            })
        })
        .collect()
}

fn dvs_for(platform: Platform) -> Vec<VisibilityDv> {
    VisibilityDv::ALL
        .into_iter()
        .filter(|d| platform == Platform::A || !d.is_follower_normalized())
        .collect()
}

fn describe(run: &mut StageRun<'_>) -> Result<()> {
    let legs = load_legislators(run.input(CORPUS_LEGISLATORS)?)?;
    let legs: BTreeMap<String, _> = legs.into_iter().map(|l| (l.author_id.clone(), l)).collect();
    let summaries = read_visibility(run)?;
    let boot = BootstrapConfig {
        resamples: run.cfg.params.bootstrap_resamples,
        seed: run.cfg.seed_for("describe"),
    };
    let opts = MannWhitneyOptions {
        exact_threshold: run.cfg.params.exact_threshold,
        bootstrap: boot,
    };
    let (mut mw, mut ks, mut ec) = (Vec::new(), Vec::new(), Vec::new());
    for g in Grouping::ALL {
        for dv in dvs_for(run.cfg.params.platform) {
            let (x, y) = group_samples(&summaries, &legs, g, dv);
            if x.is_empty() || y.is_empty() {
                log::warn!("skipping {} / {}: an empty group", g.as_str(), dv.as_str());
                continue;
            }
            let (lx, ly) = g.labels();
            let r = group_compare(&summaries, &legs, g, dv, &opts)?.result;
            mw.push(vec![
                g.as_str().into(),
                dv.as_str().into(),
                lx.into(),
                ly.into(),
                r.n1.to_string(),
                r.n2.to_string(),
                fmt_f(r.statistic),
                fmt_f(r.p_value),
                fmt_opt(r.p_exact),
                fmt_f(r.p_asymptotic),
                fmt_f(r.effect_size),
                fmt_f(r.ci_low),
                fmt_f(r.ci_high),
                significance_stars(r.p_value).into(),
            ]);
            let k = ks_two_sample(&x, &y, &boot)?;
            ks.push(vec![
                g.as_str().into(),
                dv.as_str().into(),
                k.n1.to_string(),
                k.n2.to_string(),
                fmt_f(k.statistic),
                fmt_f(k.p_value),
                fmt_f(k.ci_low),
                fmt_f(k.ci_high),
            ]);
            for (label, sample) in [(lx, &x), (ly, &y)] {
                let e = ecdf(sample)?;
                for (v, f) in e.points.iter().zip(&e.cumulative) {
                    ec.push(vec![g.as_str().into(), dv.as_str().into(), label.into(), fmt_f(*v), fmt_f(*f)]);
                }
            }
        }
    }
    run.write_csv("mannwhitney.csv", &columns("mannwhitney.csv"), &mw)?;
    run.write_csv("ks.csv", &columns("ks.csv"), &ks)?;
    run.write_csv("ecdf.csv", &columns("ecdf.csv"), &ec)
}

fn regress(run: &mut StageRun<'_>) -> Result<()> {
    let ds = load_corpus(run, false)?;
    let labels = read_labels(run)?;
    let summaries = read_visibility(run)?;
    let harmful = harmful_counts(&ds.posts, &labels);
    let platform = run.cfg.params.platform;
    let dvs: Vec<VisibilityDv> = dvs_for(platform)
        .into_iter()
        .filter(|d| matches!(d, VisibilityDv::Vip | VisibilityDv::Vif | VisibilityDv::Vipf))
        .collect();
    let (mut coef, mut fits, mut trans) = (Vec::new(), Vec::new(), Vec::new());
    for dv in dvs {
        let models: &[bool] = if run.cfg.params.regress_interaction { &[false, true] } else { &[false] };
        for &interaction in models {
            let model = if interaction { "interaction" } else { "base" };
            let design = build_design(
                &DesignInputs {
                    summaries: &summaries,
                    legislators: &ds.legislators,
                    harmful: &harmful,
                    graph: ds.graph.as_ref(),
                },
                &DesignOptions {
                    platform,
                    dv,
                    include_interaction: interaction,
                },
            )?;
            let fit = design.fit()?;
            for c in &fit.coefficients {
                coef.push(vec![
                    dv.as_str().into(),
                    model.into(),
                    c.term.clone(),
                    fmt_f(c.estimate),
                    fmt_f(c.std_error),
                    fmt_f(c.estimate - Z_95 * c.std_error),
                    fmt_f(c.estimate + Z_95 * c.std_error),
                    fmt_f(c.z),
                    fmt_f(c.p),
                    significance_stars(c.p).into(),
                ]);
            }
            fits.push(vec![
                dv.as_str().into(),
                model.into(),
                fit.n_obs.to_string(),
                fit.n_groups.to_string(),
                design.dropped.to_string(),
                fmt_f(fit.sigma_group),
                fmt_f(fit.sigma_resid),
                fmt_f(fit.variance_ratio),
                fmt_f(fit.r_squared),
                fmt_f(fit.reml_loglik),
            ]);
            for (col, t) in &design.transforms {
                let v = serde_json::to_value(t)?;
                let kind = v.get("kind").and_then(|k| k.as_str()).unwrap_or("").to_string();
                let lambda = v.get("lambda").and_then(|l| l.as_f64()).map(fmt_f).unwrap_or_default();
                trans.push(vec![dv.as_str().into(), model.into(), col.clone(), kind, lambda]);
            }
        }
    }
    run.write_csv("regress.csv", &columns("regress.csv"), &coef)?;
    run.write_csv("regress_fit.csv", &columns("regress_fit.csv"), &fits)?;
    run.write_csv("regress_transforms.csv", &columns("regress_transforms.csv"), &trans)
}

fn feature_set(run: &mut StageRun<'_>) -> Result<(Dataset, Vec<TreatmentLabel>, Vec<OverperformingOutcome>, FeatureSet)> {
    let ds = load_corpus(run, true)?;
    let labels = read_labels(run)?;
    let outcomes = read_outcomes(run)?;
    let centrality = ds.graph.as_ref().map(in_degree_centrality);
    let opts = FeatureOptions {
        treatment: run.cfg.params.treatment,
        min_words: run.cfg.params.min_words,
        control_ratio: run.cfg.params.control_ratio,
        seed: run.cfg.seed_for("features"),
        include_followers: run.cfg.params.platform == Platform::A,
    };
    let emb = ds.embeddings.as_ref().expect("loaded with embeddings");
    let fs = assemble_features(&ds.posts, &ds.legislators, emb, &labels, &outcomes, centrality.as_ref(), &opts)?;
    Ok((ds, labels, outcomes, fs))
}

/// Treatment status of every usable post: enough words, an embedding, an
/// outcome and a known status (low-credibility controls need a URL).
fn eligible_naive(
    ds: &Dataset,
    labels: &[TreatmentLabel],
    outcomes: &[OverperformingOutcome],
    kind: TreatmentKind,
    min_words: usize,
) -> (Vec<bool>, Vec<bool>) {
    let emb = ds.embeddings.as_ref();
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for ((p, l), o) in ds.posts.iter().zip(labels).zip(outcomes) {
        let has_emb = p.embedding_ref.as_deref().and_then(|r| emb.and_then(|e| e.row(r))).is_some();
        if p.word_count() < min_words || !has_emb || !ds.legislators.contains_key(&p.author_id) {
            continue;
        }
        let status = match kind {
            TreatmentKind::Uncivil => l.uncivil,
            TreatmentKind::LowCredible => {
                if l.low_credible {
                    Some(true)
                } else {
                    (!p.urls.is_empty()).then_some(false)
                }
            }
        };
        if let Some(s) = status {
            t.push(s);
            y.push(o.overperforms);
        }
    }
    (t, y)
}

fn train_dragonnet(run: &mut StageRun<'_>) -> Result<()> {
    let (ds, labels, outcomes, fs) = feature_set(run)?;
    let tc = run.cfg.train_config();
    let folds = train(&fs, &tc)?;

    let mut fold_of = vec![0usize; fs.len()];
    let (mut metrics, mut losses) = (Vec::new(), Vec::new());
    for f in &folds {
        for &i in &f.test_idx {
            fold_of[i] = f.fold;
        }
        let m = &f.metrics;
        metrics.push(vec![
            m.fold.to_string(),
            m.n_train.to_string(),
            m.n_test.to_string(),
            fmt_opt(m.auc),
            fmt_opt(m.macro_f1),
            fmt_opt(m.cutoff),
            fmt_f(m.final_loss),
            fmt_f(m.final_lr),
        ]);
        for (e, l) in f.epoch_losses.iter().enumerate() {
            losses.push(vec![f.fold.to_string(), (e + 1).to_string(), fmt_f(*l)]);
        }
        run.write_bytes(&format!("dragonnet/fold_{}.dgn", f.fold), &f.params.to_bytes())?;
    }
    run.write_csv("dragonnet_metrics.csv", &columns("dragonnet_metrics.csv"), &metrics)?;
    run.write_csv("training_loss.csv", &columns("training_loss.csv"), &losses)?;

    let mut header: Vec<String> = columns("samples.csv").into_iter().map(String::from).collect();
    header.extend(fs.covariate_names.iter().cloned());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..fs.len())
        .map(|i| {
            let mut r = vec![
                fs.ids[i].clone(),
                fs.author_ids[i].clone(),
                fmt_b(fs.t[i]),
                fmt_b(fs.y[i]),
                fold_of[i].to_string(),
            ];
            r.extend(fs.covariates.row(i).iter().map(|v| fmt_f(*v)));
            r
        })
        .collect();
    run.write_csv("samples.csv", &header_refs, &rows)?;

    let (et, ey) = eligible_naive(&ds, &labels, &outcomes, run.cfg.params.treatment, run.cfg.params.min_words);
    let mut naive = Vec::new();
    for (scope, t, y) in [("eligible", &et, &ey), ("samples", &fs.t, &fs.y)] {
        let n1 = t.iter().filter(|&&v| v).count();
        naive.push(vec![
            scope.to_string(),
            n1.to_string(),
            (t.len() - n1).to_string(),
            naive_estimate(t, y).map(fmt_f).unwrap_or_default(),
        ]);
    }
    run.write_csv("naive.csv", &columns("naive.csv"), &naive)
}

/// Rows of `samples.csv`.
struct Samples {
    ids: Vec<String>,
    authors: Vec<String>,
    t: Vec<bool>,
    y: Vec<bool>,
    fold: Vec<usize>,
    covariates: Array2<f64>,
    covariate_names: Vec<String>,
}

fn read_samples(run: &mut StageRun<'_>) -> Result<Samples> {
    let tab = run.read_csv("samples.csv")?;
    let (id, au, t, y, f) = (tab.col("post_id")?, tab.col("author_id")?, tab.col("t")?, tab.col("y")?, tab.col("fold")?);
    let first_cov = f + 1;
    let covariate_names = tab.header[first_cov..].to_vec();
    let n = tab.rows.len();
    let mut covariates = Array2::zeros((n, covariate_names.len()));
    let mut s = Samples {
        ids: Vec::with_capacity(n),
        authors: Vec::with_capacity(n),
        t: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        fold: Vec::with_capacity(n),
        covariates: Array2::zeros((0, 0)),
        covariate_names,
    };
    for r in 0..n {
        s.ids.push(tab.rows[r][id].clone());
        s.authors.push(tab.rows[r][au].clone());
        s.t.push(tab.flag(r, t)?);
        s.y.push(tab.flag(r, y)?);
        s.fold.push(tab.parse(r, f)?);
        for k in 0..s.covariate_names.len() {
            covariates[(r, k)] = tab.parse(r, first_cov + k)?;
        }
    }
    s.covariates = covariates;
    Ok(s)
}

fn embed(run: &mut StageRun<'_>) -> Result<()> {
    let (_, _, _, fs) = feature_set(run)?;
    let samples = read_samples(run)?;
    if samples.ids != fs.ids {
        return Err(Error::InvalidInput(
            "samples.csv does not match the assembled features; rerun train-dragonnet".into(),
        ));
    }
    let n_folds = samples.fold.iter().max().map_or(0, |m| m + 1);
    let mut phi: Option<EmbeddingMatrix> = None;
    let mut rows_by_fold = Vec::new();
    let mut cate_rows = Vec::new();
    let (mut total, mut fold_sum) = (0usize, 0.0);
    for k in 0..n_folds {
        let idx: Vec<usize> = (0..fs.len()).filter(|&i| samples.fold[i] == k).collect();
        let params = DragonnetParams::load(run.input(&format!("dragonnet/fold_{k}.dgn"))?)?;
        let sub = fs.subset(&idx);
        let e = deconfounded_embeddings(&params, &sub.ids, &sub.x)?;
        let tc = targeted_cate(&params, &sub.x, run.cfg.dragonnet.pi_clamp)?;
        cate_rows.push(vec![k.to_string(), idx.len().to_string(), fmt_f(tc)]);
        total += idx.len();
        fold_sum += tc;
        rows_by_fold.push((idx, e));
    }
    cate_rows.push(vec!["all".into(), total.to_string(), fmt_f(fold_sum / n_folds.max(1) as f64)]);
    // rows in samples order
    let mut slot = vec![(0usize, 0usize); fs.len()];
    for (k, (idx, _)) in rows_by_fold.iter().enumerate() {
        for (r, &i) in idx.iter().enumerate() {
            slot[i] = (k, r);
        }
    }
    for (i, &(k, r)) in slot.iter().enumerate() {
        let e = &rows_by_fold[k].1;
        let m = phi.get_or_insert_with(|| EmbeddingMatrix::new(e.dim()).expect("positive dim"));
        m.push(fs.ids[i].clone(), e.row_at(r))?;
    }
    let phi = phi.ok_or_else(|| Error::InvalidInput("no samples to embed".into()))?;
    run.write_bytes("phi.bin", &phi.to_binary_bytes()?)?;
    run.write_csv("dragonnet_cate.csv", &columns("dragonnet_cate.csv"), &cate_rows)
}

fn match_stage(run: &mut StageRun<'_>) -> Result<()> {
    let samples = read_samples(run)?;
    let phi = load_embeddings(run.input("phi.bin")?)?;
    let (mut treated, mut control) = (BTreeMap::new(), BTreeMap::new());
    for i in 0..samples.ids.len() {
        let side = if samples.t[i] { &mut treated } else { &mut control };
        side.insert(samples.ids[i].clone(), samples.fold[i]);
    }
    let p = &run.cfg.params;
    let ms = match_within_groups(&phi, &treated, &control, p.caliper, p.normalize_embeddings)?;
    let bal = standardized_differences(&samples.ids, &samples.t, &samples.covariates, &samples.covariate_names, &ms)?;
    let rows: Vec<Vec<String>> = ms
        .pairs
        .iter()
        .map(|m| vec![m.treated_id.clone(), m.control_id.clone(), fmt_f(m.distance), treated[&m.treated_id].to_string()])
        .collect();
    run.write_csv("pairs.csv", &columns("pairs.csv"), &rows)?;
    let rows: Vec<Vec<String>> = bal
        .rows
        .iter()
        .map(|r| {
            vec![
                r.covariate.clone(),
                fmt_f(r.std_diff_before),
                fmt_f(r.std_diff_after),
                fmt_b(r.std_diff_after.abs() < BALANCE_THRESHOLD),
            ]
        })
        .collect();
    run.write_csv("balance.csv", &columns("balance.csv"), &rows)?;
    let summary = vec![vec![
        treated.len().to_string(),
        control.len().to_string(),
        ms.len().to_string(),
        ms.unmatched_treated.len().to_string(),
        fmt_f(ms.caliper),
        fmt_f(bal.max_abs_before()),
        fmt_f(bal.max_abs_after()),
        fmt_b(bal.balanced),
    ]];
    run.write_csv("match_summary.csv", &columns("match_summary.csv"), &summary)
}

fn read_pairs(run: &mut StageRun<'_>) -> Result<MatchSet> {
    let t = run.read_csv("pairs.csv")?;
    let (a, b, d) = (t.col("treated_id")?, t.col("control_id")?, t.col("distance")?);
    let pairs = (0..t.rows.len())
        .map(|r| {
            Ok(MatchedPair {
                treated_id: t.rows[r][a].clone(),
                control_id: t.rows[r][b].clone(),
                distance: t.parse(r, d)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchSet {
        pairs,
        unmatched_treated: Vec::new(),
        caliper: run.cfg.params.caliper,
    })
}

fn cate(run: &mut StageRun<'_>) -> Result<()> {
    let legs = load_legislators(run.input(CORPUS_LEGISLATORS)?)?;
    let legs: BTreeMap<String, _> = legs.into_iter().map(|l| (l.author_id.clone(), l)).collect();
    let samples = read_samples(run)?;
    let ms = read_pairs(run)?;
    let outcomes: BTreeMap<String, bool> = samples.ids.iter().cloned().zip(samples.y.iter().copied()).collect();
    let author_of: BTreeMap<String, String> = samples.ids.iter().cloned().zip(samples.authors.iter().cloned()).collect();
    let boot = BootstrapConfig {
        resamples: run.cfg.params.bootstrap_resamples,
        seed: run.cfg.seed_for("cate"),
    };
    let table = cate_table(&ms, &outcomes, &author_of, &subgroup_masks(&legs), run.cfg.params.min_pairs, &boot)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|e| {
            vec![
                e.subgroup.as_str().into(),
                e.n_pairs.to_string(),
                fmt_opt(e.cate),
                fmt_opt(e.ci_low),
                fmt_opt(e.ci_high),
                e.note.clone().unwrap_or_default(),
            ]
        })
        .collect();
    run.write_csv("cate.csv", &columns("cate.csv"), &rows)
}

/// One row of `cate.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CateRow {
    pub subgroup: String,
    pub n_pairs: usize,
    pub cate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

/// Reads `cate.csv` from a finished run.
pub fn read_cate(cfg: &PipelineConfig) -> Result<Vec<CateRow>> {
    let mut run = StageRun {
        cfg,
        stage: Stage::Cate,
        hash: cfg.hash(),
        out: cfg.paths.out_dir.clone(),
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
    };
    let t = run.read_csv("cate.csv")?;
    let (g, n, c, lo, hi) = (t.col("subgroup")?, t.col("n_pairs")?, t.col("cate")?, t.col("ci_low")?, t.col("ci_high")?);
    (0..t.rows.len())
        .map(|r| {
            Ok(CateRow {
                subgroup: t.rows[r][g].clone(),
                n_pairs: t.parse(r, n)?,
                cate: t.opt_f(r, c)?,
                ci_low: t.opt_f(r, lo)?,
                ci_high: t.opt_f(r, hi)?,
            })
        })
        .collect()
}

/// Reads one row of `match_summary.csv` as (max |d| before, max |d| after,
/// pairs).
pub fn read_match_summary(cfg: &PipelineConfig) -> Result<(f64, f64, usize)> {
    let mut run = StageRun {
        cfg,
        stage: Stage::Match,
        hash: cfg.hash(),
        out: cfg.paths.out_dir.clone(),
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
    };
    let t = run.read_csv("match_summary.csv")?;
    if t.rows.is_empty() {
        return Err(Error::parse(&t.path, 3, "empty summary"));
    }
    Ok((t.parse(0, t.col("max_abs_before")?)?, t.parse(0, t.col("max_abs_after")?)?, t.parse(0, t.col("n_pairs")?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::SynthConfig;

    fn small_config(dir: &Path) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.paths.posts = dir.join("data/posts.jsonl");
        cfg.paths.legislators = dir.join("data/legislators.jsonl");
        cfg.paths.edges = Some(dir.join("data/edges.csv"));
        cfg.paths.embeddings = Some(dir.join("data/embeddings.bin"));
        cfg.paths.domains = dir.join("data/domains.txt");
        cfg.paths.out_dir = dir.join("out");
        cfg.synth = SynthConfig {
            n_authors: 120,
            posts_per_author_mean: 25.0,
            ..SynthConfig::default()
        };
        cfg.params.bootstrap_resamples = 200;
        cfg.dragonnet.trunk_width = 32;
        cfg.dragonnet.head_width = 16;
        cfg.dragonnet.epochs = 2;
        cfg.params.folds = 2;
        cfg
    }

    #[test]
    fn stage_order_and_names() {
        for (i, st) in Stage::ALL.iter().enumerate() {
            assert_eq!(st.name().parse::<Stage>().unwrap(), *st);
            for req in st.requires() {
                assert!(Stage::ALL.iter().position(|s| s == req).unwrap() < i);
            }
        }
        assert!("nope".parse::<Stage>().is_err());
    }

    #[test]
    fn schema_lists_every_csv() {
        let md = schema_markdown();
        for (f, _, _) in SCHEMA {
            assert!(md.contains(&format!("## {f}")));
        }
        assert_eq!(columns("cate.csv")[0], "subgroup");
    }

    #[test]
    fn missing_stage_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        match run_stage(&cfg, Stage::Cate) {
            Err(Error::MissingStage { stage, .. }) => assert_eq!(stage, "match"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn small_pipeline_runs_and_guards_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        simulate(&cfg, None).unwrap();
        for st in &Stage::ALL[..7] {
            run_stage(&cfg, *st).unwrap();
        }
        match run_stage(&cfg, Stage::Cate) {
            Err(Error::MissingStage { stage, .. }) => assert_eq!(stage, "match"),
            other => panic!("{other:?}"),
        }
        run_stage(&cfg, Stage::Match).unwrap();
        run_stage(&cfg, Stage::Cate).unwrap();
        let rows = read_cate(&cfg).unwrap();
        assert_eq!(rows[0].subgroup, "All");
        assert_eq!(rows.len(), 7);
        let run = write_run_manifest(&cfg).unwrap();
        assert_eq!(run.stages.len(), 9);
        assert!(dir.path().join("out/SCHEMA.md").exists());

        let mut other = cfg.clone();
        other.params.caliper = 0.2;
        assert!(matches!(run_stage(&other, Stage::Match), Err(Error::ConfigHashMismatch { .. })));

        // a tampered hash line in an artifact is rejected
        let p = dir.path().join("out/pairs.csv");
        let text = std::fs::read_to_string(&p).unwrap();
        let (_, rest) = text.split_once('\n').unwrap();
        std::fs::write(&p, format!("# config_hash=deadbeef\n{rest}")).unwrap();
        assert!(matches!(run_stage(&cfg, Stage::Cate), Err(Error::ConfigHashMismatch { .. })));
    }
}
