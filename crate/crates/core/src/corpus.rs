//! Ingestion and indexing of posts, legislator records, follower graphs and
//! text embeddings.
//!
//! Everything here produces immutable values; downstream modules only borrow
//! from a [`Dataset`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Platform {
    /// Twitter-like: follower counts and a follower graph are available.
    A,
    /// Facebook-like.
    B,
}

impl FromStr for Platform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "twitter" | "tw" => Ok(Platform::A),
            "b" | "facebook" | "fb" => Ok(Platform::B),
            other => Err(Error::InvalidInput(format!("unknown platform `{other}`"))),
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Platform::A => "A",
            Platform::B => "B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    Dem,
    Rep,
    Other,
}

impl Party {
    pub const LEVELS: [Party; 3] = [Party::Dem, Party::Rep, Party::Other];

    pub fn parse(s: &str) -> Party {
        match s.trim().to_ascii_lowercase().as_str() {
            "d" | "dem" | "democrat" | "democratic" => Party::Dem,
            "r" | "rep" | "republican" | "gop" => Party::Rep,
            _ => Party::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Party::Dem => "Dem",
            Party::Rep => "Rep",
            Party::Other => "Other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Men,
    Women,
    Unknown,
}

impl Gender {
    pub const LEVELS: [Gender; 3] = [Gender::Men, Gender::Women, Gender::Unknown];

    pub fn parse(s: Option<&str>) -> Gender {
        match s.map(|s| s.trim().to_ascii_lowercase()).as_deref() {
            Some("m" | "man" | "men" | "male") => Gender::Men,
            Some("w" | "f" | "woman" | "women" | "female") => Gender::Women,
            _ => Gender::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Men => "Men",
            Gender::Women => "Women",
            Gender::Unknown => "Unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ethnicity {
    White,
    NonWhite,
    Unknown,
}

impl Ethnicity {
    pub const LEVELS: [Ethnicity; 3] = [Ethnicity::White, Ethnicity::NonWhite, Ethnicity::Unknown];

    pub fn parse(s: Option<&str>) -> Ethnicity {
        let Some(s) = s else {
            return Ethnicity::Unknown;
        };
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "white" => Ethnicity::White,
            "nonwhite" => Ethnicity::NonWhite,
            _ => Ethnicity::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ethnicity::White => "White",
            Ethnicity::NonWhite => "NonWhite",
            Ethnicity::Unknown => "Unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InteractionBreakdown {
    #[serde(default)]
    pub likes: u64,
    #[serde(default)]
    pub shares: u64,
    #[serde(default)]
    pub comments: u64,
    #[serde(default)]
    pub quotes: u64,
    #[serde(default)]
    pub extra_reactions: u64,
}

impl InteractionBreakdown {
    pub fn total(&self) -> u64 {
        self.likes + self.shares + self.comments + self.quotes + self.extra_reactions
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostRecord {
    pub post_id: String,
    pub author_id: String,
    pub platform: Platform,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    pub interactions: InteractionBreakdown,
    pub urls: Vec<String>,
    pub toxicity_score: Option<f64>,
    /// Key into an [`EmbeddingMatrix`].
    pub embedding_ref: Option<String>,
}

impl PostRecord {
    pub fn total_interactions(&self) -> u64 {
        self.interactions.total()
    }

    pub fn word_count(&self) -> usize {
        self.text
            .split_whitespace()
            .filter(|w| w.chars().any(|c| c.is_alphanumeric()))
            .count()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PostLine {
    post_id: String,
    author_id: String,
    platform: String,
    timestamp: String,
    text: String,
    interactions: InteractionBreakdown,
    #[serde(default)]
    urls: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    toxicity_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegislatorRecord {
    pub author_id: String,
    pub party: Party,
    pub gender: Gender,
    pub ethnicity: Ethnicity,
    pub state: String,
    pub ideology: Option<f64>,
    pub follower_count: Option<u64>,
    pub accounts: BTreeSet<Platform>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LegislatorLine {
    author_id: String,
    party: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ethnicity: Option<String>,
    state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ideology: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    follower_count: Option<i64>,
    #[serde(default)]
    platforms: Vec<String>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Parses an ISO-8601 instant. Offsets are converted to UTC; naive values are
/// taken to be UTC already.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(t) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&t));
        }
    }
    None
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Reads a line-delimited JSON posts file. Every record must belong to
/// `platform`.
pub fn load_posts(path: impl AsRef<Path>, platform: Platform) -> Result<Vec<PostRecord>> {
    let path = path.as_ref();
    let reader = open(path)?;
    let mut seen = HashSet::new();
    let mut posts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: PostLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let post_platform: Platform = raw
            .platform
            .parse()
            .map_err(|e: Error| Error::parse(path, lineno, e.to_string()))?;
        if post_platform != platform {
            return Err(Error::parse(
                path,
                lineno,
                format!("post is on platform {post_platform}, expected {platform}"),
            ));
        }
        if raw.post_id.is_empty() {
            return Err(Error::parse(path, lineno, "empty post_id"));
        }
        let timestamp = parse_timestamp(&raw.timestamp).ok_or_else(|| {
            Error::parse(path, lineno, format!("bad timestamp `{}`", raw.timestamp))
        })?;
        if let Some(s) = raw.toxicity_score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::parse(path, lineno, format!("toxicity_score {s} outside [0,1]")));
            }
        }
        if !seen.insert(raw.post_id.clone()) {
            return Err(Error::DuplicateId(raw.post_id));
        }
        posts.push(PostRecord {
            post_id: raw.post_id,
            author_id: raw.author_id,
            platform: post_platform,
            timestamp,
            text: raw.text,
            interactions: raw.interactions,
            urls: raw.urls,
            toxicity_score: raw.toxicity_score,
            embedding_ref: raw.embedding_id,
        });
    }
    Ok(posts)
}

pub fn write_posts(path: impl AsRef<Path>, posts: &[PostRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for p in posts {
        let line = PostLine {
            post_id: p.post_id.clone(),
            author_id: p.author_id.clone(),
            platform: p.platform.to_string(),
            timestamp: format_timestamp(&p.timestamp),
            text: p.text.clone(),
            interactions: p.interactions,
            urls: p.urls.clone(),
            toxicity_score: p.toxicity_score,
            embedding_id: p.embedding_ref.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_legislators(path: impl AsRef<Path>) -> Result<Vec<LegislatorRecord>> {
    let path = path.as_ref();
    let reader = open(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: LegislatorLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        if raw.author_id.is_empty() {
            return Err(Error::parse(path, lineno, "empty author_id"));
        }
        let follower_count = match raw.follower_count {
            Some(n) if n < 0 => {
                return Err(Error::parse(path, lineno, format!("negative follower_count {n}")))
            }
            Some(n) => Some(n as u64),
            None => None,
        };
        let mut accounts = BTreeSet::new();
        for p in &raw.platforms {
            accounts.insert(
                p.parse::<Platform>()
                    .map_err(|e| Error::parse(path, lineno, e.to_string()))?,
            );
        }
        if !seen.insert(raw.author_id.clone()) {
            return Err(Error::DuplicateId(raw.author_id));
        }
        out.push(LegislatorRecord {
            author_id: raw.author_id,
            party: Party::parse(&raw.party),
            gender: Gender::parse(raw.gender.as_deref()),
            ethnicity: Ethnicity::parse(raw.ethnicity.as_deref()),
            state: raw.state,
            ideology: raw.ideology.filter(|v| v.is_finite()),
            follower_count,
            accounts,
        });
    }
    Ok(out)
}

pub fn write_legislators(path: impl AsRef<Path>, legislators: &[LegislatorRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for l in legislators {
        let line = LegislatorLine {
            author_id: l.author_id.clone(),
            party: l.party.as_str().to_string(),
            gender: (l.gender != Gender::Unknown).then(|| l.gender.as_str().to_string()),
            ethnicity: (l.ethnicity != Ethnicity::Unknown).then(|| l.ethnicity.as_str().to_string()),
            state: l.state.clone(),
            ideology: l.ideology,
            follower_count: l.follower_count.map(|n| n as i64),
            platforms: l.accounts.iter().map(|p| p.to_string()).collect(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `src,dst` CSV of follow edges (`src` follows `dst`).
pub fn load_edges(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut edges = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::parse(path, i + 2, "expected two columns src,dst"));
        }
        edges.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(edges)
}

pub fn write_edges(path: impl AsRef<Path>, edges: &[(String, String)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["src", "dst"])?;
    for (s, d) in edges {
        w.write_record([s, d])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Directed follow graph over legislators; an edge `a -> b` means `a`
/// follows `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    in_adj: Vec<Vec<usize>>,
    edge_count: usize,
}

impl FollowerGraph {
    pub fn new<I, S>(nodes: I, edges: &[(String, String)]) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let nodes: Vec<String> = nodes
            .into_iter()
            .map(Into::into)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<String, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut set = BTreeSet::new();
        for (s, d) in edges {
            if s == d {
                return Err(Error::InvalidInput(format!("self-loop on `{s}`")));
            }
            let si = *index
                .get(s)
                .ok_or_else(|| Error::InvalidInput(format!("unknown edge endpoint `{s}`")))?;
            let di = *index
                .get(d)
                .ok_or_else(|| Error::InvalidInput(format!("unknown edge endpoint `{d}`")))?;
            set.insert((si, di));
        }
        let mut in_adj = vec![Vec::new(); nodes.len()];
        for &(s, d) in &set {
            in_adj[d].push(s);
        }
        Ok(FollowerGraph {
            nodes,
            index,
            in_adj,
            edge_count: set.len(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    /// Authors that follow `id`.
    pub fn in_neighbors(&self, id: &str) -> impl Iterator<Item = &str> + '_ {
        self.index
            .get(id)
            .map(|&i| self.in_adj[i].as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|&j| self.nodes[j].as_str())
    }
}

/// In-degree divided by `n - 1`; zero for a single-node graph.
pub fn in_degree_centrality(graph: &FollowerGraph) -> BTreeMap<String, f64> {
    let n = graph.node_count();
    let denom = if n >= 2 { (n - 1) as f64 } else { 0.0 };
    graph
        .nodes
        .iter()
        .zip(&graph.in_adj)
        .map(|(id, ins)| {
            let c = if denom > 0.0 { ins.len() as f64 / denom } else { 0.0 };
            (id.clone(), c)
        })
        .collect()
}

/// Row-major matrix of f32 vectors keyed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f32>,
}

const EMB_MAGIC: &[u8; 4] = b"EMB1";

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dim must be positive".into()));
        }
        Ok(EmbeddingMatrix {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
        })
    }

    pub fn push(&mut self, id: impl Into<String>, row: &[f32]) -> Result<()> {
        let id = id.into();
        if row.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: row.len(),
            });
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value {v} in row `{id}`")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.values.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row_at(i))
    }

    pub fn row_at(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(w, "{} {}", self.len(), self.dim).map_err(io)?;
        for (i, id) in self.ids.iter().enumerate() {
            write!(w, "{id}").map_err(io)?;
            for v in self.row_at(i) {
                write!(w, "\t{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = create(path)?;
        w.write_all(&self.to_binary_bytes()?)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn to_binary_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::with_capacity(12 + self.values.len() * 4 + self.ids.len() * 16);
        buf.extend_from_slice(EMB_MAGIC);
        buf.extend_from_slice(&(self.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (i, id) in self.ids.iter().enumerate() {
            let bytes = id.as_bytes();
            let len: u16 = bytes
                .len()
                .try_into()
                .map_err(|_| Error::InvalidInput(format!("id `{id}` longer than 65535 bytes")))?;
            buf.extend_from_slice(&len.to_le_bytes());
            buf.extend_from_slice(bytes);
            for v in self.row_at(i) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }
}

/// Loads either embedding format; the binary one is recognised by its magic
/// bytes.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(EMB_MAGIC) {
        parse_binary_embeddings(path, &bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::parse(path, 0, "embedding file is neither EMB1 nor UTF-8 text"))?;
        parse_text_embeddings(path, &text)
    }
}

fn parse_text_embeddings(path: &Path, text: &str) -> Result<EmbeddingMatrix> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing `count dim` header"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let parse_usize = |s: &str| s.parse::<usize>().ok();
    let (count, dim) = match head.as_slice() {
        [c, d] => match (parse_usize(c), parse_usize(d)) {
            (Some(c), Some(d)) if d > 0 => (c, d),
            _ => return Err(Error::parse(path, 1, "bad `count dim` header")),
        },
        _ => return Err(Error::parse(path, 1, "bad `count dim` header")),
    };
    let mut m = EmbeddingMatrix::new(dim)?;
    for (i, line) in lines {
        let lineno = i + 1;
        let mut parts = line.split_whitespace();
        let id = parts.next().unwrap_or_default();
        let row: Vec<f32> = parts
            .map(|v| {
                v.parse::<f32>()
                    .map_err(|_| Error::parse(path, lineno, format!("bad value `{v}`")))
            })
            .collect::<Result<_>>()?;
        if row.len() != dim {
            return Err(Error::parse(
                path,
                lineno,
                format!("dimension mismatch: expected {dim}, got {}", row.len()),
            ));
        }
        m.push(id, &row)
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
    }
    if m.len() != count {
        return Err(Error::parse(
            path,
            1,
            format!("header declares {count} rows, found {}", m.len()),
        ));
    }
    Ok(m)
}

fn parse_binary_embeddings(path: &Path, bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut pos = 4usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::parse(path, 0, format!("truncated EMB1 file at byte {pos}")))?;
        pos += n;
        Ok(s)
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
    let count = u32_at(take(4)?);
    let dim = u32_at(take(4)?);
    if dim == 0 {
        return Err(Error::parse(path, 0, "EMB1 dim is zero"));
    }
    let mut m = EmbeddingMatrix::new(dim)?;
    let mut row = vec![0f32; dim];
    for r in 0..count {
        let len_bytes = take(2)?;
        let len = u16::from_le_bytes([len_bytes[0], len_bytes[1]]) as usize;
        let id = std::str::from_utf8(take(len)?)
            .map_err(|_| Error::parse(path, r + 1, "id is not UTF-8"))?
            .to_string();
        let raw = take(dim * 4)?;
        for (k, chunk) in raw.chunks_exact(4).enumerate() {
            row[k] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        m.push(id, &row)
            .map_err(|e| Error::parse(path, r + 1, e.to_string()))?;
    }
    if pos != bytes.len() {
        return Err(Error::parse(path, 0, "trailing bytes after EMB1 rows"));
    }
    Ok(m)
}

/// Half-open `[start, end)` range of admissible post timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Default for StudyWindow {
    fn default() -> Self {
        StudyWindow {
            start: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            end: Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap(),
        }
    }
}

impl StudyWindow {
    pub fn contains(&self, t: &DateTime<Utc>) -> bool {
        *t >= self.start && *t < self.end
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub posts_read: usize,
    pub posts_kept: usize,
    pub unresolved_author: usize,
    pub outside_window: usize,
    pub other_party_posts: usize,
    pub missing_embedding: usize,
    pub legislators: usize,
    pub edges: usize,
}

/// Validated, indexed corpus for one platform.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub platform: Platform,
    pub posts: Vec<PostRecord>,
    pub legislators: BTreeMap<String, LegislatorRecord>,
    pub graph: Option<FollowerGraph>,
    pub embeddings: Option<EmbeddingMatrix>,
    pub report: IngestReport,
}

impl Dataset {
    /// Drops posts outside the study window and posts whose author is unknown,
    /// counting both in the report. Posts are sorted by (author, time, id).
    pub fn assemble(
        platform: Platform,
        posts: Vec<PostRecord>,
        legislators: Vec<LegislatorRecord>,
        edges: Option<&[(String, String)]>,
        embeddings: Option<EmbeddingMatrix>,
        window: &StudyWindow,
    ) -> Result<Self> {
        let mut report = IngestReport {
            posts_read: posts.len(),
            legislators: legislators.len(),
            ..Default::default()
        };
        let mut by_id = BTreeMap::new();
        for l in legislators {
            if by_id.contains_key(&l.author_id) {
                return Err(Error::DuplicateId(l.author_id));
            }
            by_id.insert(l.author_id.clone(), l);
        }
        let graph = match edges {
            Some(e) => {
                report.edges = e.len();
                Some(FollowerGraph::new(by_id.keys().cloned(), e)?)
            }
            None => None,
        };
        let mut kept = Vec::with_capacity(posts.len());
        for p in posts {
            if !window.contains(&p.timestamp) {
                report.outside_window += 1;
                continue;
            }
            let Some(author) = by_id.get(&p.author_id) else {
                report.unresolved_author += 1;
                continue;
            };
            if author.party == Party::Other {
                report.other_party_posts += 1;
            }
            if let (Some(emb), Some(r)) = (&embeddings, &p.embedding_ref) {
                if emb.row(r).is_none() {
                    report.missing_embedding += 1;
                }
            }
            kept.push(p);
        }
        if report.outside_window > 0 {
            log::warn!("dropped {} posts outside the study window", report.outside_window);
        }
        if report.unresolved_author > 0 {
            log::warn!("dropped {} posts with unknown authors", report.unresolved_author);
        }
        kept.sort_by(|a, b| {
            (&a.author_id, a.timestamp, &a.post_id).cmp(&(&b.author_id, b.timestamp, &b.post_id))
        });
        report.posts_kept = kept.len();
        Ok(Dataset {
            platform,
            posts: kept,
            legislators: by_id,
            graph,
            embeddings,
            report,
        })
    }

    pub fn legislator(&self, id: &str) -> Option<&LegislatorRecord> {
        self.legislators.get(id)
    }

    pub fn post_counts(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for p in &self.posts {
            *m.entry(p.author_id.as_str()).or_insert(0) += 1;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const POST: &str = r#"{"post_id":"p1","author_id":"a1","platform":"A","timestamp":"2020-03-01T12:00:00Z","text":"hello world","interactions":{"likes":1,"shares":2,"comments":3,"quotes":4,"extra_reactions":5},"urls":["https://x.org/a"],"toxicity_score":0.5,"embedding_id":"p1"}"#;

    #[test]
    fn empty_posts_file() {
        let f = write_tmp("");
        assert!(load_posts(f.path(), Platform::A).unwrap().is_empty());
    }

    #[test]
    fn one_post_total_is_sum() {
        let f = write_tmp(POST);
        let posts = load_posts(f.path(), Platform::A).unwrap();
        assert_eq!(posts.len(), 1);
        assert_eq!(posts[0].total_interactions(), 15);
        assert_eq!(posts[0].embedding_ref.as_deref(), Some("p1"));
    }

    #[test]
    fn duplicate_post_id_names_the_id() {
        let f = write_tmp(&format!("{POST}\n{POST}\n"));
        let err = load_posts(f.path(), Platform::A).unwrap_err();
        assert!(matches!(&err, Error::DuplicateId(id) if id == "p1"), "{err}");
    }

    #[test]
    fn malformed_post_line_reports_line_number() {
        let f = write_tmp(&format!("{POST}\n{{not json\n"));
        match load_posts(f.path(), Platform::A).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_required_field_rejected() {
        let f = write_tmp(r#"{"post_id":"p1","platform":"A","timestamp":"2020-03-01T12:00:00Z","text":"x","interactions":{}}"#);
        assert!(matches!(
            load_posts(f.path(), Platform::A),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn legislator_enum_mapping() {
        let f = write_tmp(concat!(
            r#"{"author_id":"a1","party":"I","gender":"F","ethnicity":"White","state":"NY","platforms":["A"]}"#,
            "\n",
            r#"{"author_id":"a2","party":"R","state":"TX","follower_count":10,"platforms":["A","B"]}"#,
        ));
        let ls = load_legislators(f.path()).unwrap();
        assert_eq!(ls[0].party, Party::Other);
        assert_eq!(ls[0].gender, Gender::Women);
        assert_eq!(ls[1].gender, Gender::Unknown);
        assert_eq!(ls[1].ethnicity, Ethnicity::Unknown);
        assert_eq!(ls[1].accounts.len(), 2);
    }

    #[test]
    fn malformed_legislator_line() {
        let f = write_tmp(concat!(
            r#"{"author_id":"a1","party":"D","state":"NY"}"#,
            "\n",
            r#"{"author_id":"a2","party":"R"}"#,
            "\n",
            r#"{"author_id":"a3","party":"R","state":"TX"}"#,
        ));
        match load_legislators(f.path()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn negative_followers_rejected() {
        let f = write_tmp(r#"{"author_id":"a1","party":"D","state":"NY","follower_count":-3}"#);
        assert!(load_legislators(f.path()).is_err());
    }

    #[test]
    fn text_embeddings_parse() {
        let f = write_tmp("1 3\nid1 0.1 0.2 0.3\n");
        let m = load_embeddings(f.path()).unwrap();
        assert_eq!(m.row("id1").unwrap(), &[0.1f32, 0.2, 0.3]);
    }

    #[test]
    fn text_embeddings_short_row() {
        let f = write_tmp("1 3\nid1\t0.1\t0.2\n");
        let err = load_embeddings(f.path()).unwrap_err();
        assert!(err.to_string().contains("dimension"), "{err}");
    }

    #[test]
    fn text_embeddings_non_finite() {
        let f = write_tmp("1 2\nid1 NaN 0.2\n");
        assert!(load_embeddings(f.path()).is_err());
    }

    #[test]
    fn binary_round_trip_matches_text() {
        let f = write_tmp("3 2\na 0.1 -2.5\nb 1e-3 7\nc 0 0.333\n");
        let from_text = load_embeddings(f.path()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("e.bin");
        from_text.write_binary(&bin).unwrap();
        assert_eq!(load_embeddings(&bin).unwrap(), from_text);
        let txt = dir.path().join("e.txt");
        from_text.write_text(&txt).unwrap();
        assert_eq!(load_embeddings(&txt).unwrap(), from_text);
    }

    #[test]
    fn binary_layout() {
        let mut m = EmbeddingMatrix::new(1).unwrap();
        m.push("ab", &[1.0]).unwrap();
        let b = m.to_binary_bytes().unwrap();
        assert_eq!(&b[..4], b"EMB1");
        assert_eq!(&b[4..12], &[1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&b[12..14], &[2, 0]);
        assert_eq!(&b[14..16], b"ab");
        assert_eq!(&b[16..], &1f32.to_le_bytes());
    }

    fn e(s: &str, d: &str) -> (String, String) {
        (s.to_string(), d.to_string())
    }

    #[test]
    fn star_centrality() {
        let nodes = ["hub", "l1", "l2", "l3", "l4"];
        let edges: Vec<_> = nodes[1..].iter().map(|l| e(l, "hub")).collect();
        let g = FollowerGraph::new(nodes, &edges).unwrap();
        let c = in_degree_centrality(&g);
        assert_eq!(c["hub"], 1.0);
        for l in &nodes[1..] {
            assert_eq!(c[*l], 0.0);
        }
    }

    #[test]
    fn no_edges_zero_centrality() {
        let g = FollowerGraph::new(["a", "b", "c"], &[]).unwrap();
        assert!(in_degree_centrality(&g).values().all(|&v| v == 0.0));
        let single = FollowerGraph::new(["a"], &[]).unwrap();
        assert_eq!(in_degree_centrality(&single)["a"], 0.0);
    }

    #[test]
    fn graph_rejects_self_loop_and_unknown() {
        assert!(FollowerGraph::new(["a", "b"], &[e("a", "a")]).is_err());
        assert!(FollowerGraph::new(["a", "b"], &[e("a", "z")]).is_err());
    }

    #[test]
    fn edges_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("edges.csv");
        let edges = vec![e("a", "b"), e("b", "c")];
        write_edges(&p, &edges).unwrap();
        assert_eq!(load_edges(&p).unwrap(), edges);
    }

    fn leg(id: &str, party: Party) -> LegislatorRecord {
        LegislatorRecord {
            author_id: id.into(),
            party,
            gender: Gender::Men,
            ethnicity: Ethnicity::White,
            state: "NY".into(),
            ideology: None,
            follower_count: Some(5),
            accounts: [Platform::A].into(),
        }
    }

    fn post(id: &str, author: &str, ts: &str) -> PostRecord {
        PostRecord {
            post_id: id.into(),
            author_id: author.into(),
            platform: Platform::A,
            timestamp: parse_timestamp(ts).unwrap(),
            text: String::new(),
            interactions: InteractionBreakdown::default(),
            urls: vec![],
            toxicity_score: None,
            embedding_ref: None,
        }
    }

    #[test]
    fn assemble_reports_exclusions() {
        let posts = vec![
            post("p1", "a1", "2020-02-01T00:00:00Z"),
            post("p2", "ghost", "2020-02-01T00:00:00Z"),
            post("p3", "a1", "2019-12-31T23:59:59Z"),
            post("p4", "a2", "2021-12-31T00:00:00Z"),
        ];
        let ds = Dataset::assemble(
            Platform::A,
            posts,
            vec![leg("a1", Party::Dem), leg("a2", Party::Other)],
            None,
            None,
            &StudyWindow::default(),
        )
        .unwrap();
        assert_eq!(ds.report.unresolved_author, 1);
        assert_eq!(ds.report.outside_window, 1);
        assert_eq!(ds.report.other_party_posts, 1);
        assert_eq!(ds.posts.len(), 2);
    }

    #[test]
    fn timestamps_with_offsets_become_utc() {
        let t = parse_timestamp("2020-01-01T05:00:00+05:00").unwrap();
        assert_eq!(format_timestamp(&t), "2020-01-01T00:00:00Z");
        assert!(parse_timestamp("yesterday").is_none());
    }
}
