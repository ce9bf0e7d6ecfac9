//! Potential-outcome network: a shared ELU trunk, one outcome head per
//! treatment arm, a linear propensity head and a scalar nudge `eps`, trained
//! with targeted regularization by explicit backpropagation.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{TimeZone, Utc};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingMatrix, Ethnicity, Gender, LegislatorRecord, Party, PostRecord};
use crate::error::{Error, Result};
use crate::labeling::{calibrate_toxicity_cutoff, roc_auc, TreatmentLabel};
use crate::visibility::OverperformingOutcome;

pub const OUTPUT_CLAMP: f64 = 1e-6;
const MAGIC: &[u8; 4] = b"DGN1";
const ACTIVATION_ELU: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentKind {
    Uncivil,
    LowCredible,
}

impl TreatmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TreatmentKind::Uncivil => "uncivil",
            TreatmentKind::LowCredible => "low_credible",
        }
    }
}

/// Model inputs with treatment and binary outcome per post, plus the raw
/// covariates used for balance checks.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub ids: Vec<String>,
    pub author_ids: Vec<String>,
    pub x: Array2<f64>,
    pub feature_names: Vec<String>,
    pub t: Vec<bool>,
    pub y: Vec<bool>,
    pub covariates: Array2<f64>,
    pub covariate_names: Vec<String>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn subset(&self, idx: &[usize]) -> FeatureSet {
        FeatureSet {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            author_ids: idx.iter().map(|&i| self.author_ids[i].clone()).collect(),
            x: self.x.select(Axis(0), idx),
            feature_names: self.feature_names.clone(),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            covariates: self.covariates.select(Axis(0), idx),
            covariate_names: self.covariate_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub treatment: TreatmentKind,
    pub min_words: usize,
    /// Controls sampled per treated post.
    pub control_ratio: usize,
    pub seed: u64,
    pub include_followers: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            treatment: TreatmentKind::Uncivil,
            min_words: 10,
            control_ratio: 1,
            seed: 0,
            include_followers: true,
        }
    }
}

fn standardized(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    crate::regress::standardize(&mut out);
    out
}

/// Treated posts plus a seeded random sample of eligible controls. Posts need
/// at least `min_words` words, an embedding, an outcome and a known
/// treatment status; low-credibility controls must carry a URL.
pub fn assemble_features(
    posts: &[PostRecord],
    legislators: &BTreeMap<String, LegislatorRecord>,
    embeddings: &EmbeddingMatrix,
    labels: &[TreatmentLabel],
    outcomes: &[OverperformingOutcome],
    centrality: Option<&BTreeMap<String, f64>>,
    opts: &FeatureOptions,
) -> Result<FeatureSet> {
    let label_of: BTreeMap<&str, &TreatmentLabel> = labels.iter().map(|l| (l.post_id.as_str(), l)).collect();
    let outcome_of: BTreeMap<&str, bool> = outcomes.iter().map(|o| (o.post_id.as_str(), o.overperforms)).collect();
    let mut post_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in posts {
        *post_counts.entry(p.author_id.as_str()).or_default() += 1;
    }

    let mut treated = Vec::new();
    let mut pool = Vec::new();
    for (i, p) in posts.iter().enumerate() {
        if p.word_count() < opts.min_words || !legislators.contains_key(&p.author_id) {
            continue;
        }
        let has_emb = p.embedding_ref.as_deref().and_then(|r| embeddings.row(r)).is_some();
        if !has_emb || !outcome_of.contains_key(p.post_id.as_str()) {
            continue;
        }
        let Some(label) = label_of.get(p.post_id.as_str()) else { continue };
        let status = match opts.treatment {
            TreatmentKind::Uncivil => label.uncivil,
            TreatmentKind::LowCredible => {
                if label.low_credible {
                    Some(true)
                } else if p.urls.is_empty() {
                    None
                } else {
                    Some(false)
                }
            }
        };
        match status {
            Some(true) => treated.push(i),
            Some(false) => pool.push(i),
            None => {}
        }
    }
    let wanted = treated.len() * opts.control_ratio;
    if treated.is_empty() {
        return Err(Error::InvalidInput("no treated posts".into()));
    }
    if pool.len() < wanted {
        return Err(Error::InvalidInput(format!(
            "control pool of {} posts is smaller than the {} required",
            pool.len(),
            wanted
        )));
    }
    pool.sort_by(|&a, &b| posts[a].post_id.cmp(&posts[b].post_id));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    pool.shuffle(&mut rng);
    pool.truncate(wanted);

    let mut rows: Vec<(usize, bool)> = treated.iter().map(|&i| (i, true)).chain(pool.iter().map(|&i| (i, false))).collect();
    rows.sort_by(|a, b| posts[a.0].post_id.cmp(&posts[b.0].post_id));

    let states: Vec<String> = {
        let mut s: Vec<String> = rows.iter().map(|r| legislators[&posts[r.0].author_id].state.clone()).collect();
        s.sort();
        s.dedup();
        s
    };
    let n = rows.len();
    let day0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    let days: Vec<f64> = rows
        .iter()
        .map(|r| (posts[r.0].timestamp - day0).num_seconds() as f64 / 86_400.0)
        .collect();
    let pc: Vec<f64> = rows.iter().map(|r| post_counts[posts[r.0].author_id.as_str()] as f64).collect();
    let fc: Vec<f64> = rows
        .iter()
        .map(|r| legislators[&posts[r.0].author_id].follower_count.unwrap_or(0) as f64)
        .collect();
    let cc: Vec<f64> = rows
        .iter()
        .map(|r| centrality.and_then(|c| c.get(&posts[r.0].author_id).copied()).unwrap_or(0.0))
        .collect();

    let mut cat_names = Vec::new();
    for p in Party::LEVELS {
        cat_names.push(format!("party={}", p.as_str()));
    }
    for g in Gender::LEVELS {
        cat_names.push(format!("gender={}", g.as_str()));
    }
    for e in Ethnicity::LEVELS {
        cat_names.push(format!("ethnicity={}", e.as_str()));
    }
    for s in &states {
        cat_names.push(format!("state={s}"));
    }
    let n_cat = cat_names.len();
    let mut cats = Array2::<f64>::zeros((n, n_cat));
    for (k, r) in rows.iter().enumerate() {
        let l = &legislators[&posts[r.0].author_id];
        let pi = Party::LEVELS.iter().position(|&p| p == l.party).unwrap();
        let gi = Gender::LEVELS.iter().position(|&g| g == l.gender).unwrap();
        let ei = Ethnicity::LEVELS.iter().position(|&e| e == l.ethnicity).unwrap();
        let si = states.binary_search(&l.state).unwrap();
        cats[(k, pi)] = 1.0;
        cats[(k, 3 + gi)] = 1.0;
        cats[(k, 6 + ei)] = 1.0;
        cats[(k, 9 + si)] = 1.0;
    }

    let dim = embeddings.dim();
    let mut feature_names: Vec<String> = (0..dim).map(|j| format!("emb{j}")).collect();
    feature_names.extend(cat_names.iter().cloned());
    feature_names.extend(["post_count", "follower_count", "centrality", "days"].map(String::from));
    let (pcs, fcs, ccs) = (standardized(&pc), standardized(&fc), standardized(&cc));
    let mut x = Array2::<f64>::zeros((n, dim + n_cat + 4));
    for (k, r) in rows.iter().enumerate() {
        let e = embeddings.row(posts[r.0].embedding_ref.as_deref().unwrap()).unwrap();
        for j in 0..dim {
            x[(k, j)] = e[j] as f64;
        }
        x.slice_mut(s![k, dim..dim + n_cat]).assign(&cats.row(k));
        x[(k, dim + n_cat)] = pcs[k];
        x[(k, dim + n_cat + 1)] = fcs[k];
        x[(k, dim + n_cat + 2)] = ccs[k];
        x[(k, dim + n_cat + 3)] = days[k];
    }

    let mut covariate_names = cat_names;
    covariate_names.push("days".into());
    covariate_names.push("post_count".into());
    if opts.include_followers {
        covariate_names.push("follower_count".into());
    }
    let mut covariates = Array2::<f64>::zeros((n, covariate_names.len()));
    for k in 0..n {
        covariates.slice_mut(s![k, ..n_cat]).assign(&cats.row(k));
        covariates[(k, n_cat)] = days[k];
        covariates[(k, n_cat + 1)] = pc[k];
        if opts.include_followers {
            covariates[(k, n_cat + 2)] = fc[k];
        }
    }

    Ok(FeatureSet {
        ids: rows.iter().map(|r| posts[r.0].post_id.clone()).collect(),
        author_ids: rows.iter().map(|r| posts[r.0].author_id.clone()).collect(),
        x,
        feature_names,
        t: rows.iter().map(|r| r.1).collect(),
        y: rows.iter().map(|r| outcome_of[posts[r.0].post_id.as_str()]).collect(),
        covariates,
        covariate_names,
    })
}

/// Fully connected layer; `w` is out x in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(out: usize, inp: usize) -> Dense {
        Dense {
            w: Array2::zeros((out, inp)),
            b: Array1::zeros(out),
        }
    }

    fn uniform(out: usize, inp: usize, scale: f64, rng: &mut ChaCha8Rng) -> Dense {
        let bound = 1.0 / (inp as f64).sqrt();
        Dense {
            w: Array2::from_shape_fn((out, inp), |_| scale * rng.gen_range(-bound..bound)),
            b: Array1::from_shape_fn(out, |_| rng.gen_range(-bound..bound)),
        }
    }

    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub trunk_width: usize,
    pub trunk_layers: usize,
    pub head_width: usize,
    pub head_layers: usize,
}

impl Architecture {
    pub fn new(input_dim: usize) -> Self {
        Architecture {
            input_dim,
            trunk_width: 200,
            trunk_layers: 2,
            head_width: 100,
            head_layers: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DragonnetParams {
    /// Input standardization: x' = (x - shift) / scale.
    pub shift: Array1<f64>,
    pub scale: Array1<f64>,
    pub trunk: Vec<Dense>,
    /// Hidden layers followed by a width-1 output layer, control arm first.
    pub heads: [Vec<Dense>; 2],
    pub propensity: Dense,
    pub eps: f64,
}

impl DragonnetParams {
    /// Uniform(+-1/sqrt(fan_in)) initialization; the first trunk layer's
    /// weights are multiplied by `first_layer_scale`.
    pub fn init(arch: &Architecture, first_layer_scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trunk = Vec::new();
        let mut inp = arch.input_dim;
        for k in 0..arch.trunk_layers {
            let scale = if k == 0 { first_layer_scale } else { 1.0 };
            trunk.push(Dense::uniform(arch.trunk_width, inp, scale, &mut rng));
            inp = arch.trunk_width;
        }
        let head = |rng: &mut ChaCha8Rng| {
            let mut layers = Vec::new();
            let mut inp = arch.trunk_width;
            for _ in 0..arch.head_layers {
                layers.push(Dense::uniform(arch.head_width, inp, 1.0, rng));
                inp = arch.head_width;
            }
            layers.push(Dense::uniform(1, inp, 1.0, rng));
            layers
        };
        let h0 = head(&mut rng);
        let h1 = head(&mut rng);
        DragonnetParams {
            shift: Array1::zeros(arch.input_dim),
            scale: Array1::ones(arch.input_dim),
            trunk,
            heads: [h0, h1],
            propensity: Dense::uniform(1, arch.trunk_width, 1.0, &mut rng),
            eps: 0.0,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.shift.len(),
            trunk_width: self.trunk.last().map_or(0, |l| l.w.nrows()),
            trunk_layers: self.trunk.len(),
            head_width: self.heads[0].first().map_or(0, |l| l.w.nrows()),
            head_layers: self.heads[0].len() - 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.shift.len()
    }

    pub fn phi_dim(&self) -> usize {
        self.architecture().trunk_width
    }

    fn zeros_like(&self) -> Self {
        let z = |l: &Dense| Dense::zeros(l.w.nrows(), l.w.ncols());
        DragonnetParams {
            shift: self.shift.clone(),
            scale: self.scale.clone(),
            trunk: self.trunk.iter().map(z).collect(),
            heads: [self.heads[0].iter().map(z).collect(), self.heads[1].iter().map(z).collect()],
            propensity: z(&self.propensity),
            eps: 0.0,
        }
    }

    /// Trainable tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in self.trunk.iter().chain(&self.heads[0]).chain(&self.heads[1]).chain([&self.propensity]) {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out.push(std::slice::from_ref(&self.eps));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        let [h0, h1] = &mut self.heads;
        for l in self.trunk.iter_mut().chain(h0.iter_mut()).chain(h1.iter_mut()).chain([&mut self.propensity]) {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out.push(std::slice::from_mut(&mut self.eps));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Rounds every value through f32, the checkpoint precision.
    pub fn quantize(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        self.shift.mapv_inplace(|v| v as f32 as f64);
        self.scale.mapv_inplace(|v| v as f32 as f64);
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Sets the input standardization from training data.
    pub fn fit_standardization(&mut self, x: &Array2<f64>) {
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let sd = x.map_axis(Axis(0), |c| {
            let m = c.mean().unwrap_or(0.0);
            (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
        });
        self.shift = mean;
        self.scale = sd.mapv(|s| if s > 1e-12 { s } else { 1.0 });
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))
    }

    /// Layout: magic "DGN1"; u32 count then trunk dims (input, widths...);
    /// u32 count then head hidden widths; u32 activation code; then f32
    /// values: shift, scale, trunk (W row-major out x in, then b per layer),
    /// head 0, head 1, propensity W and b, eps. All little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = self.architecture();
        let mut out = Vec::with_capacity(16 + 4 * self.n_params());
        out.extend_from_slice(MAGIC);
        let u32s = |v: &[usize], out: &mut Vec<u8>| {
            out.extend_from_slice(&(v.len() as u32).to_le_bytes());
            for &d in v {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        };
        let mut trunk_dims = vec![arch.input_dim];
        trunk_dims.extend(self.trunk.iter().map(|l| l.w.nrows()));
        let head_dims: Vec<usize> = self.heads[0][..arch.head_layers].iter().map(|l| l.w.nrows()).collect();
        u32s(&trunk_dims, &mut out);
        u32s(&head_dims, &mut out);
        out.extend_from_slice(&ACTIVATION_ELU.to_le_bytes());
        for v in self.shift.iter().chain(self.scale.iter()) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        for t in self.tensors() {
            for v in t {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::parse(path, 0, m))
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4)? != MAGIC {
            return Err("bad magic, expected DGN1".into());
        }
        let nt = c.u32()?;
        if !(2..=64).contains(&nt) {
            return Err(format!("bad trunk layer count {nt}"));
        }
        let trunk_dims = (0..nt).map(|_| c.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
        let nh = c.u32()?;
        if nh > 64 {
            return Err(format!("bad head layer count {nh}"));
        }
        let head_dims = (0..nh).map(|_| c.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
        let act = c.u32()?;
        if act != ACTIVATION_ELU as usize {
            return Err(format!("unsupported activation code {act}"));
        }
        if trunk_dims.iter().chain(&head_dims).any(|&d| d == 0 || d > 1 << 20) {
            return Err("bad layer width".into());
        }
        let d = trunk_dims[0];
        let shift = Array1::from_vec(c.floats(d)?);
        let scale = Array1::from_vec(c.floats(d)?);
        let trunk = trunk_dims
            .windows(2)
            .map(|w| c.dense(w[1], w[0]))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let width = *trunk_dims.last().unwrap();
        let mut head_layout = vec![width];
        head_layout.extend(&head_dims);
        head_layout.push(1);
        let mut head = || {
            head_layout
                .windows(2)
                .map(|w| c.dense(w[1], w[0]))
                .collect::<std::result::Result<Vec<_>, _>>()
        };
        let h0 = head()?;
        let h1 = head()?;
        let propensity = c.dense(1, width)?;
        let eps = c.floats(1)?[0];
        if c.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - c.pos));
        }
        Ok(DragonnetParams {
            shift,
            scale,
            trunk,
            heads: [h0, h1],
            propensity,
            eps,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or("truncated checkpoint")?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn floats(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let b = self.take(4 * n)?;
        Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect())
    }

    fn dense(&mut self, out: usize, inp: usize) -> std::result::Result<Dense, String> {
        let w = self.floats(out * inp)?;
        let b = self.floats(out)?;
        Ok(Dense {
            w: Array2::from_shape_vec((out, inp), w).unwrap(),
            b: Array1::from_vec(b),
        })
    }
}

fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

fn elu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(OUTPUT_CLAMP, 1.0 - OUTPUT_CLAMP)
}

/// Inputs and pre-activations of each layer, kept for backpropagation.
struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

/// ELU after every layer, except the last when `linear_last`.
fn mlp_forward(layers: &[Dense], x: Array2<f64>, linear_last: bool) -> (Array2<f64>, MlpCache) {
    let mut cache = MlpCache {
        inputs: Vec::with_capacity(layers.len()),
        pre: Vec::with_capacity(layers.len()),
    };
    let mut a = x;
    for (k, l) in layers.iter().enumerate() {
        let z = l.forward(a.view());
        let next = if linear_last && k + 1 == layers.len() { z.clone() } else { z.mapv(elu) };
        cache.inputs.push(a);
        cache.pre.push(z);
        a = next;
    }
    (a, cache)
}

fn mlp_backward(layers: &[Dense], cache: &MlpCache, grad_out: Array2<f64>, linear_last: bool, grads: &mut [Dense]) -> Array2<f64> {
    let mut g = grad_out;
    for k in (0..layers.len()).rev() {
        let dz = if linear_last && k + 1 == layers.len() {
            g
        } else {
            let mut d = g;
            d.zip_mut_with(&cache.pre[k], |d, &z| *d *= elu_grad(z));
            d
        };
        grads[k].w += &dz.t().dot(&cache.inputs[k]);
        grads[k].b += &dz.sum_axis(Axis(0));
        g = dz.dot(&layers[k].w);
    }
    g
}

/// Batch predictions; probabilities are clamped to [1e-6, 1 - 1e-6].
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub pi: Vec<f64>,
    pub phi: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DragonnetOutput {
    pub y_hat_0: f64,
    pub y_hat_1: f64,
    pub pi_hat: f64,
    pub phi: Vec<f64>,
}

fn check_dim(params: &DragonnetParams, x: &Array2<f64>) -> Result<()> {
    if x.ncols() != params.input_dim() {
        return Err(Error::Dimension {
            expected: params.input_dim(),
            actual: x.ncols(),
        });
    }
    Ok(())
}

fn standardize_input(params: &DragonnetParams, x: &Array2<f64>) -> Array2<f64> {
    (x - &params.shift) / &params.scale
}

pub fn predict(params: &DragonnetParams, x: &Array2<f64>) -> Result<Predictions> {
    check_dim(params, x)?;
    let (phi, _) = mlp_forward(&params.trunk, standardize_input(params, x), false);
    let head = |k: usize| {
        let (o, _) = mlp_forward(&params.heads[k], phi.clone(), true);
        o.column(0).iter().map(|&z| clamp_prob(sigmoid(z))).collect::<Vec<f64>>()
    };
    let pi = params.propensity.forward(phi.view()).column(0).iter().map(|&z| clamp_prob(sigmoid(z))).collect();
    Ok(Predictions {
        y0: head(0),
        y1: head(1),
        pi,
        phi,
    })
}

pub fn forward(params: &DragonnetParams, x: &[f64]) -> Result<DragonnetOutput> {
    let m = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
    let p = predict(params, &m)?;
    Ok(DragonnetOutput {
        y_hat_0: p.y0[0],
        y_hat_1: p.y1[0],
        pi_hat: p.pi[0],
        phi: p.phi.row(0).to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    /// pi is clamped to [pi_clamp, 1 - pi_clamp] in the targeted term.
    pub pi_clamp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            pi_clamp: 0.01,
        }
    }
}

fn cross_entropy(y: f64, p: f64) -> f64 {
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean of CE(y, y_t) + alpha CE(t, pi) + beta (y - y*)^2 with
/// y* = y_t + eps (t / pi - (1 - t) / (1 - pi)).
pub fn loss(params: &DragonnetParams, x: &Array2<f64>, t: &[bool], y: &[bool], w: &LossWeights) -> Result<f64> {
    Ok(loss_and_grad(params, x, t, y, w, false)?.0)
}

/// Loss and, when `with_grad`, its gradient in parameter shape.
pub fn loss_and_grad(
    params: &DragonnetParams,
    x: &Array2<f64>,
    t: &[bool],
    y: &[bool],
    w: &LossWeights,
    with_grad: bool,
) -> Result<(f64, Option<DragonnetParams>)> {
    check_dim(params, x)?;
    let n = x.nrows();
    if n == 0 || t.len() != n || y.len() != n {
        return Err(Error::InvalidInput("loss needs a non-empty batch with matching labels".into()));
    }
    let inv_n = 1.0 / n as f64;
    let (phi, trunk_cache) = mlp_forward(&params.trunk, standardize_input(params, x), false);
    let prop_logit = params.propensity.forward(phi.view());

    let arm_rows: [Vec<usize>; 2] = [
        (0..n).filter(|&i| !t[i]).collect(),
        (0..n).filter(|&i| t[i]).collect(),
    ];
    let mut head_out = Vec::with_capacity(2);
    for k in 0..2 {
        if arm_rows[k].is_empty() {
            head_out.push(None);
            continue;
        }
        let input = phi.select(Axis(0), &arm_rows[k]);
        head_out.push(Some(mlp_forward(&params.heads[k], input, true)));
    }

    let mut total = 0.0;
    let mut d_prop = Array2::<f64>::zeros((n, 1));
    let mut d_head: [Array2<f64>; 2] = [
        Array2::zeros((arm_rows[0].len(), 1)),
        Array2::zeros((arm_rows[1].len(), 1)),
    ];
    let mut d_eps = 0.0;
    for k in 0..2 {
        let Some((logits, _)) = &head_out[k] else { continue };
        for (r, &i) in arm_rows[k].iter().enumerate() {
            let ti = if t[i] { 1.0 } else { 0.0 };
            let yi = if y[i] { 1.0 } else { 0.0 };
            let raw_y = sigmoid(logits[(r, 0)]);
            let yt = clamp_prob(raw_y);
            let y_live = raw_y == yt;
            let raw_p = sigmoid(prop_logit[(i, 0)]);
            let pc = clamp_prob(raw_p);
            let p_live = raw_p == pc;
            let pt = raw_p.clamp(w.pi_clamp, 1.0 - w.pi_clamp);
            let pt_live = raw_p == pt;
            let h = ti / pt - (1.0 - ti) / (1.0 - pt);
            let ystar = yt + params.eps * h;
            let resid = yi - ystar;
            total += cross_entropy(yi, yt) + w.alpha * cross_entropy(ti, pc) + w.beta * resid * resid;
            if !with_grad {
                continue;
            }
            // d/dlogit of CE through the sigmoid is (p - y)
            let mut g_y = 0.0;
            if y_live {
                g_y = (raw_y - yi) + w.beta * (-2.0 * resid) * raw_y * (1.0 - raw_y);
            }
            d_head[k][(r, 0)] = g_y * inv_n;
            let mut g_p = 0.0;
            if p_live {
                g_p += w.alpha * (raw_p - ti);
            }
            if pt_live {
                let dh = -ti / (pt * pt) - (1.0 - ti) / ((1.0 - pt) * (1.0 - pt));
                g_p += w.beta * (-2.0 * resid) * params.eps * dh * raw_p * (1.0 - raw_p);
            }
            d_prop[(i, 0)] = g_p * inv_n;
            d_eps += w.beta * (-2.0 * resid) * h * inv_n;
        }
    }
    let value = total * inv_n;
    if !with_grad {
        return Ok((value, None));
    }

    let mut grads = params.zeros_like();
    let mut d_phi = d_prop.dot(&params.propensity.w);
    grads.propensity.w += &d_prop.t().dot(&phi);
    grads.propensity.b += &d_prop.sum_axis(Axis(0));
    for k in 0..2 {
        let Some((_, cache)) = &head_out[k] else { continue };
        let g_in = mlp_backward(&params.heads[k], cache, d_head[k].clone(), true, &mut grads.heads[k]);
        for (r, &i) in arm_rows[k].iter().enumerate() {
            let mut row = d_phi.row_mut(i);
            row += &g_in.row(r);
        }
    }
    mlp_backward(&params.trunk, &trunk_cache, std::mem::take(&mut d_phi), false, &mut grads.trunk);
    grads.eps = d_eps;
    Ok((value, Some(grads)))
}

/// Mean of y1 - y0 + eps (1/pi + 1/(1 - pi)), with pi clamped to
/// [pi_clamp, 1 - pi_clamp].
pub fn targeted_cate(params: &DragonnetParams, x: &Array2<f64>, pi_clamp: f64) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("targeted CATE of an empty set".into()));
    }
    let p = predict(params, x)?;
    let sum: f64 = (0..x.nrows())
        .map(|i| {
            let pi = p.pi[i].clamp(pi_clamp, 1.0 - pi_clamp);
            p.y1[i] - p.y0[i] + params.eps * (1.0 / pi + 1.0 / (1.0 - pi))
        })
        .sum();
    Ok(sum / x.nrows() as f64)
}

pub fn deconfounded_embeddings(params: &DragonnetParams, ids: &[String], x: &Array2<f64>) -> Result<EmbeddingMatrix> {
    if ids.len() != x.nrows() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            actual: ids.len(),
        });
    }
    let p = predict(params, x)?;
    let mut m = EmbeddingMatrix::new(params.phi_dim())?;
    let mut row = vec![0f32; params.phi_dim()];
    for (i, id) in ids.iter().enumerate() {
        for (r, v) in row.iter_mut().zip(p.phi.row(i)) {
            *r = *v as f32;
        }
        m.push(id.clone(), &row)?;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub trunk_width: usize,
    pub trunk_layers: usize,
    pub head_width: usize,
    pub head_layers: usize,
    pub folds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Learning rate multiplier applied when the epoch loss plateaus.
    pub lr_decay: f64,
    pub plateau_patience: usize,
    /// Relative improvement below which an epoch counts as a plateau.
    pub plateau_tol: f64,
    pub first_layer_scale: f64,
    pub loss: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            trunk_width: 200,
            trunk_layers: 2,
            head_width: 100,
            head_layers: 2,
            folds: 5,
            epochs: 10,
            batch_size: 64,
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 0.0,
            lr_decay: 0.5,
            plateau_patience: 2,
            plateau_tol: 1e-4,
            first_layer_scale: 0.01,
            loss: LossWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn architecture(&self, input_dim: usize) -> Architecture {
        Architecture {
            input_dim,
            trunk_width: self.trunk_width,
            trunk_layers: self.trunk_layers,
            head_width: self.head_width,
            head_layers: self.head_layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub auc: Option<f64>,
    pub macro_f1: Option<f64>,
    pub cutoff: Option<f64>,
    pub final_loss: f64,
    pub final_lr: f64,
}

#[derive(Debug, Clone)]
pub struct FoldModel {
    pub fold: usize,
    pub params: DragonnetParams,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub epoch_losses: Vec<f64>,
    pub metrics: FoldMetrics,
}

/// Stratified fold of every sample: within each arm, samples are ordered by
/// id, shuffled with the seed and dealt round-robin.
pub fn stratified_folds(ids: &[String], t: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Stratification("need at least two folds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0; ids.len()];
    for arm in [false, true] {
        let mut idx: Vec<usize> = (0..ids.len()).filter(|&i| t[i] == arm).collect();
        if idx.len() < folds {
            return Err(Error::Stratification(format!(
                "{} samples in the {} arm cannot fill {folds} folds",
                idx.len(),
                if arm { "treated" } else { "control" }
            )));
        }
        idx.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
        idx.shuffle(&mut rng);
        for (k, &i) in idx.iter().enumerate() {
            out[i] = k % folds;
        }
    }
    Ok(out)
}

/// Trains one model on the given samples. Sample order is canonicalized by
/// id first, so the result does not depend on input order.
pub fn train_model(data: &FeatureSet, cfg: &TrainConfig, seed: u64) -> Result<(DragonnetParams, Vec<f64>, f64)> {
    if data.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("batch_size, epochs and lr must be positive".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.ids[a].cmp(&data.ids[b]));
    let x = data.x.select(Axis(0), &order);
    let t: Vec<bool> = order.iter().map(|&i| data.t[i]).collect();
    let y: Vec<bool> = order.iter().map(|&i| data.y[i]).collect();

    let mut params = DragonnetParams::init(&cfg.architecture(data.dim()), cfg.first_layer_scale, seed);
    params.fit_standardization(&x);
    let mut velocity = params.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut lr = cfg.lr;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut perm: Vec<usize> = (0..x.nrows()).collect();
    for _ in 0..cfg.epochs {
        perm.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in perm.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let tb: Vec<bool> = batch.iter().map(|&i| t[i]).collect();
            let yb: Vec<bool> = batch.iter().map(|&i| y[i]).collect();
            let (l, g) = loss_and_grad(&params, &xb, &tb, &yb, &cfg.loss, true)?;
            sum += l * batch.len() as f64;
            let g = g.expect("gradient requested");
            for ((p, v), g) in params.tensors_mut().into_iter().zip(velocity.tensors_mut()).zip(g.tensors()) {
                for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = cfg.momentum * *v + g + cfg.weight_decay * *p;
                    *p -= lr * *v;
                }
            }
        }
        let epoch_loss = sum / x.nrows() as f64;
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(Error::NonConvergence {
                iterations: history.len() + 1,
                trace: history.iter().enumerate().map(|(i, &l)| (i as f64, l)).collect(),
            });
        }
        history.push(epoch_loss);
        if epoch_loss < best * (1.0 - cfg.plateau_tol) {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.plateau_patience {
                lr *= cfg.lr_decay;
                stale = 0;
            }
        }
    }
    params.quantize();
    Ok((params, history, lr))
}

/// Macro-averaged F1 of the rule `score > cutoff`.
pub fn macro_f1(scores: &[f64], labels: &[bool], cutoff: f64) -> f64 {
    let f1 = |positive: bool| {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (&s, &l) in scores.iter().zip(labels) {
            let pred = (s > cutoff) == positive;
            let truth = l == positive;
            match (pred, truth) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                _ => {}
            }
        }
        if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        }
    };
    (f1(true) + f1(false)) / 2.0
}

/// k-fold cross-fitting; each fold model is evaluated on its held-out part.
pub fn train(data: &FeatureSet, cfg: &TrainConfig) -> Result<Vec<FoldModel>> {
    let fold_of = stratified_folds(&data.ids, &data.t, cfg.folds, cfg.seed)?;
    let mut out = Vec::with_capacity(cfg.folds);
    for k in 0..cfg.folds {
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != k).collect();
        let test_idx: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == k).collect();
        let train_set = data.subset(&train_idx);
        let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(k as u64 + 1);
        let (params, epoch_losses, final_lr) = train_model(&train_set, cfg, seed)?;
        let test = data.subset(&test_idx);
        let p = predict(&params, &test.x)?;
        let factual: Vec<f64> = (0..test.len()).map(|i| if test.t[i] { p.y1[i] } else { p.y0[i] }).collect();
        let (auc, macro_f1_v, cutoff) = match calibrate_toxicity_cutoff(&factual, &test.y) {
            Ok(c) => (Some(roc_auc(&factual, &test.y)?), Some(macro_f1(&factual, &test.y, c.cutoff)), Some(c.cutoff)),
            Err(_) => (None, None, None),
        };
        log::info!("fold {k}: loss {:.4}, held-out auc {:?}", epoch_losses.last().unwrap(), auc);
        out.push(FoldModel {
            fold: k,
            params,
            metrics: FoldMetrics {
                fold: k,
                n_train: train_idx.len(),
                n_test: test_idx.len(),
                auc,
                macro_f1: macro_f1_v,
                cutoff,
                final_loss: *epoch_losses.last().unwrap(),
                final_lr,
            },
            train_idx,
            test_idx,
            epoch_losses,
        });
    }
    Ok(out)
}
