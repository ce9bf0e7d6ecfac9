//! 1:1 caliper matching in the deconfounded embedding space, covariate
//! balance and matched treatment effects by subgroup.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingMatrix, LegislatorRecord, Party, Platform};
use crate::error::{Error, Result};
use crate::stats::{bootstrap_ci, mean, BootstrapConfig};

pub const DEFAULT_CALIPER: f64 = 0.1;
pub const BALANCE_THRESHOLD: f64 = 0.1;
pub const DEFAULT_MIN_PAIRS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub treated_id: String,
    pub control_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_treated: Vec<String>,
    pub caliper: f64,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pools match sets built on disjoint samples.
    pub fn merge(sets: Vec<MatchSet>) -> Result<MatchSet> {
        let caliper = sets.first().map_or(DEFAULT_CALIPER, |s| s.caliper);
        let mut out = MatchSet {
            pairs: Vec::new(),
            unmatched_treated: Vec::new(),
            caliper,
        };
        for s in sets {
            if s.caliper != caliper {
                return Err(Error::InvalidInput("cannot merge match sets with different calipers".into()));
            }
            out.pairs.extend(s.pairs);
            out.unmatched_treated.extend(s.unmatched_treated);
        }
        out.pairs.sort_by(|a, b| a.treated_id.cmp(&b.treated_id));
        out.unmatched_treated.sort();
        Ok(out)
    }
}

fn sq_dist_bounded(a: &[f32], b: &[f32], bound: f64) -> Option<f64> {
    let mut acc = 0.0;
    for (chunk_a, chunk_b) in a.chunks(16).zip(b.chunks(16)) {
        for (x, y) in chunk_a.iter().zip(chunk_b) {
            let d = *x as f64 - *y as f64;
            acc += d * d;
        }
        if acc > bound {
            return None;
        }
    }
    Some(acc)
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt()
}

/// Greedy 1:1 matching without replacement. All pairs within the caliper
/// are taken in ascending Euclidean distance, ties broken by
/// (treated id, control id), skipping units already used.
pub fn caliper_match(treated: &EmbeddingMatrix, control: &EmbeddingMatrix, caliper: f64) -> Result<MatchSet> {
    if !(caliper > 0.0) {
        return Err(Error::InvalidInput(format!("caliper must be positive, got {caliper}")));
    }
    if treated.dim() != control.dim() {
        return Err(Error::Dimension {
            expected: treated.dim(),
            actual: control.dim(),
        });
    }
    // controls sorted by norm; |‖a‖ - ‖b‖| > caliper rules a pair out
    let mut by_norm: Vec<(f64, usize)> = (0..control.len()).map(|j| (norm(control.row_at(j)), j)).collect();
    by_norm.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let norms: Vec<f64> = by_norm.iter().map(|p| p.0).collect();
    let bound = caliper * caliper;

    let candidates_for = |i: usize| {
        let row = treated.row_at(i);
        let n = norm(row);
        let lo = norms.partition_point(|&v| v < n - caliper);
        let hi = norms.partition_point(|&v| v <= n + caliper);
        let mut out = Vec::new();
        for &(_, j) in &by_norm[lo..hi] {
            if let Some(d2) = sq_dist_bounded(row, control.row_at(j), bound) {
                out.push((d2.sqrt(), i, j));
            }
        }
        out
    };
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(16);
    let chunk = treated.len().div_ceil(threads.max(1)).max(1);
    let mut candidates: Vec<(f64, usize, usize)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..treated.len())
            .step_by(chunk)
            .map(|start| {
                let end = (start + chunk).min(treated.len());
                let f = &candidates_for;
                s.spawn(move || (start..end).flat_map(f).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("matching worker")).collect()
    });
    let tid = treated.ids();
    let cid = control.ids();
    candidates.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| tid[a.1].cmp(&tid[b.1]))
            .then_with(|| cid[a.2].cmp(&cid[b.2]))
    });

    let mut used_t = vec![false; treated.len()];
    let mut used_c = vec![false; control.len()];
    let mut pairs = Vec::new();
    for (d, i, j) in candidates {
        if used_t[i] || used_c[j] {
            continue;
        }
        used_t[i] = true;
        used_c[j] = true;
        pairs.push(MatchedPair {
            treated_id: tid[i].clone(),
            control_id: cid[j].clone(),
            distance: d,
        });
    }
    pairs.sort_by(|a, b| a.treated_id.cmp(&b.treated_id));
    let mut unmatched_treated: Vec<String> = (0..treated.len()).filter(|&i| !used_t[i]).map(|i| tid[i].clone()).collect();
    unmatched_treated.sort();
    Ok(MatchSet {
        pairs,
        unmatched_treated,
        caliper,
    })
}

/// Standardizes each dimension over the pooled rows, then divides by
/// sqrt(dim) so that distances are on a dimension-free scale.
pub fn normalize_pooled(treated: &EmbeddingMatrix, control: &EmbeddingMatrix) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    let dim = treated.dim();
    let n = (treated.len() + control.len()) as f64;
    let rows = || (0..treated.len()).map(|i| treated.row_at(i)).chain((0..control.len()).map(|j| control.row_at(j)));
    let mut mean = vec![0.0; dim];
    for r in rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += *v as f64 / n;
        }
    }
    let mut sd = vec![0.0; dim];
    for r in rows() {
        for k in 0..dim {
            sd[k] += (r[k] as f64 - mean[k]).powi(2) / n;
        }
    }
    let scale: Vec<f64> = sd.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() * (dim as f64).sqrt() } else { 1.0 }).collect();
    let apply = |m: &EmbeddingMatrix| -> Result<EmbeddingMatrix> {
        let mut out = EmbeddingMatrix::new(dim)?;
        let mut buf = vec![0f32; dim];
        for (i, id) in m.ids().iter().enumerate() {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = ((m.row_at(i)[k] as f64 - mean[k]) / scale[k]) as f32;
            }
            out.push(id.clone(), &buf)?;
        }
        Ok(out)
    };
    Ok((apply(treated)?, apply(control)?))
}

/// Matches separately inside each group (cross-fitting fold) and pools the
/// pairs.
pub fn match_within_groups(
    embeddings: &EmbeddingMatrix,
    treated: &BTreeMap<String, usize>,
    control: &BTreeMap<String, usize>,
    caliper: f64,
    normalize: bool,
) -> Result<MatchSet> {
    let groups: BTreeSet<usize> = treated.values().chain(control.values()).copied().collect();
    let mut sets = Vec::new();
    for g in groups {
        let pick = |ids: &BTreeMap<String, usize>| -> Result<EmbeddingMatrix> {
            let mut m = EmbeddingMatrix::new(embeddings.dim())?;
            for (id, _) in ids.iter().filter(|(_, &k)| k == g) {
                let row = embeddings
                    .row(id)
                    .ok_or_else(|| Error::InvalidInput(format!("no embedding for post {id}")))?;
                m.push(id.clone(), row)?;
            }
            Ok(m)
        };
        let (mut t, mut c) = (pick(treated)?, pick(control)?);
        if normalize && !t.is_empty() && !c.is_empty() {
            (t, c) = normalize_pooled(&t, &c)?;
        }
        sets.push(caliper_match(&t, &c, caliper)?);
    }
    if sets.is_empty() {
        return Ok(MatchSet {
            pairs: Vec::new(),
            unmatched_treated: Vec::new(),
            caliper,
        });
    }
    MatchSet::merge(sets)
}

/// (mean_T - mean_C) / sqrt((s2_T + s2_C) / 2). Zero pooled variance gives
/// 0 when the means agree and a signed infinity otherwise.
pub fn std_diff(treated: &[f64], control: &[f64]) -> f64 {
    let (mt, mc) = (mean(treated), mean(control));
    let var = |v: &[f64], m: f64| {
        if v.len() < 2 {
            0.0
        } else {
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
        }
    };
    let pooled = ((var(treated, mt) + var(control, mc)) / 2.0).sqrt();
    let gap = mt - mc;
    if pooled > 0.0 {
        gap / pooled
    } else if gap == 0.0 {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub std_diff_before: f64,
    pub std_diff_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
    pub balanced: bool,
}

impl BalanceReport {
    pub fn max_abs_before(&self) -> f64 {
        self.rows.iter().map(|r| r.std_diff_before.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_after(&self) -> f64 {
        self.rows.iter().map(|r| r.std_diff_after.abs()).fold(0.0, f64::max)
    }

    /// Largest |d| per covariate family, where one-hot levels named
    /// `family=level` share a family.
    pub fn by_family(&self) -> Vec<(String, f64, f64)> {
        let mut out: Vec<(String, f64, f64)> = Vec::new();
        for r in &self.rows {
            let fam = r.covariate.split('=').next().unwrap_or(&r.covariate);
            match out.iter_mut().find(|f| f.0 == fam) {
                Some(f) => {
                    f.1 = f.1.max(r.std_diff_before.abs());
                    f.2 = f.2.max(r.std_diff_after.abs());
                }
                None => out.push((fam.to_string(), r.std_diff_before.abs(), r.std_diff_after.abs())),
            }
        }
        out
    }
}

/// Balance of each covariate column before matching (all rows by `treated`)
/// and after (matched rows only). Row order in `covariates` follows `ids`.
pub fn standardized_differences(
    ids: &[String],
    treated: &[bool],
    covariates: &Array2<f64>,
    names: &[String],
    matches: &MatchSet,
) -> Result<BalanceReport> {
    if covariates.nrows() != ids.len() || treated.len() != ids.len() || covariates.ncols() != names.len() {
        return Err(Error::Dimension {
            expected: ids.len(),
            actual: covariates.nrows(),
        });
    }
    let row_of: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let lookup = |id: &str| {
        row_of
            .get(id)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("matched post {id} has no covariates")))
    };
    let mut mt = Vec::with_capacity(matches.len());
    let mut mc = Vec::with_capacity(matches.len());
    for p in &matches.pairs {
        mt.push(lookup(&p.treated_id)?);
        mc.push(lookup(&p.control_id)?);
    }
    let mut rows = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let col = covariates.column(k);
        let bt: Vec<f64> = (0..ids.len()).filter(|&i| treated[i]).map(|i| col[i]).collect();
        let bc: Vec<f64> = (0..ids.len()).filter(|&i| !treated[i]).map(|i| col[i]).collect();
        let at: Vec<f64> = mt.iter().map(|&i| col[i]).collect();
        let ac: Vec<f64> = mc.iter().map(|&i| col[i]).collect();
        rows.push(BalanceRow {
            covariate: name.clone(),
            std_diff_before: std_diff(&bt, &bc),
            std_diff_after: if at.is_empty() { f64::NAN } else { std_diff(&at, &ac) },
        });
    }
    let balanced = !rows.is_empty() && rows.iter().all(|r| r.std_diff_after.abs() < BALANCE_THRESHOLD);
    Ok(BalanceReport { rows, balanced })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subgroup {
    All,
    Dem,
    Rep,
    ExtremeDem,
    ExtremeRep,
    OverlapDem,
    OverlapRep,
}

impl Subgroup {
    pub const ALL: [Subgroup; 7] = [
        Subgroup::All,
        Subgroup::Dem,
        Subgroup::Rep,
        Subgroup::ExtremeDem,
        Subgroup::ExtremeRep,
        Subgroup::OverlapDem,
        Subgroup::OverlapRep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subgroup::All => "All",
            Subgroup::Dem => "Dem",
            Subgroup::Rep => "Rep",
            Subgroup::ExtremeDem => "ExtremeDem",
            Subgroup::ExtremeRep => "ExtremeRep",
            Subgroup::OverlapDem => "OverlapDem",
            Subgroup::OverlapRep => "OverlapRep",
        }
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subgroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subgroup::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown subgroup {s:?}")))
    }
}

pub type SubgroupMasks = BTreeMap<Subgroup, BTreeSet<String>>;

/// Author sets per subgroup. Extreme groups are the top and bottom quartile
/// of ideology among scored legislators, keeping every value tied with the
/// boundary; overlap means an account on both platforms.
pub fn subgroup_masks(legislators: &BTreeMap<String, LegislatorRecord>) -> SubgroupMasks {
    let mut masks: SubgroupMasks = Subgroup::ALL.iter().map(|&g| (g, BTreeSet::new())).collect();
    let both = |l: &LegislatorRecord| l.accounts.contains(&Platform::A) && l.accounts.contains(&Platform::B);
    for (id, l) in legislators {
        let mut add = |g| {
            masks.get_mut(&g).unwrap().insert(id.clone());
        };
        add(Subgroup::All);
        match l.party {
            Party::Dem => {
                add(Subgroup::Dem);
                if both(l) {
                    add(Subgroup::OverlapDem);
                }
            }
            Party::Rep => {
                add(Subgroup::Rep);
                if both(l) {
                    add(Subgroup::OverlapRep);
                }
            }
            Party::Other => {}
        }
    }
    let mut scored: Vec<(f64, &str)> = legislators
        .values()
        .filter_map(|l| l.ideology.filter(|v| v.is_finite()).map(|v| (v, l.author_id.as_str())))
        .collect();
    if scored.is_empty() {
        log::warn!("no ideology scores; extreme subgroups are empty");
        return masks;
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let k = scored.len().div_ceil(4);
    let low = scored[k - 1].0;
    let high = scored[scored.len() - k].0;
    for (v, id) in scored {
        if v <= low {
            masks.get_mut(&Subgroup::ExtremeDem).unwrap().insert(id.to_string());
        }
        if v >= high {
            masks.get_mut(&Subgroup::ExtremeRep).unwrap().insert(id.to_string());
        }
    }
    masks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateEstimate {
    pub subgroup: Subgroup,
    pub n_pairs: usize,
    /// None when fewer than the minimum number of pairs is available.
    pub cate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub note: Option<String>,
}

/// Mean outcome difference over matched pairs whose treated unit passes
/// `keep`, with a percentile bootstrap interval over pairs.
pub fn matched_cate<F>(
    matches: &MatchSet,
    outcomes: &BTreeMap<String, bool>,
    subgroup: Subgroup,
    keep: F,
    min_pairs: usize,
    bootstrap: &BootstrapConfig,
) -> Result<CateEstimate>
where
    F: Fn(&MatchedPair) -> bool,
{
    let y = |id: &str| {
        outcomes
            .get(id)
            .map(|&b| if b { 1.0 } else { 0.0 })
            .ok_or_else(|| Error::InvalidInput(format!("no outcome for post {id}")))
    };
    let mut diffs = Vec::new();
    for p in matches.pairs.iter().filter(|p| keep(p)) {
        diffs.push(y(&p.treated_id)? - y(&p.control_id)?);
    }
    let n = diffs.len();
    if n < min_pairs.max(1) {
        return Ok(CateEstimate {
            subgroup,
            n_pairs: n,
            cate: None,
            ci_low: None,
            ci_high: None,
            note: Some(format!("withheld: {n} pairs, minimum {min_pairs}")),
        });
    }
    let cate = mean(&diffs);
    let (lo, hi) = bootstrap_ci(&diffs, mean, bootstrap)?;
    Ok(CateEstimate {
        subgroup,
        n_pairs: n,
        cate: Some(cate),
        ci_low: Some(lo),
        ci_high: Some(hi),
        note: None,
    })
}

/// One estimate per subgroup, in `Subgroup::ALL` order.
pub fn cate_table(
    matches: &MatchSet,
    outcomes: &BTreeMap<String, bool>,
    author_of: &BTreeMap<String, String>,
    masks: &SubgroupMasks,
    min_pairs: usize,
    bootstrap: &BootstrapConfig,
) -> Result<Vec<CateEstimate>> {
    for p in &matches.pairs {
        if !author_of.contains_key(&p.treated_id) {
            return Err(Error::InvalidInput(format!("no author for post {}", p.treated_id)));
        }
    }
    Subgroup::ALL
        .iter()
        .map(|&g| {
            let members = &masks[&g];
            matched_cate(matches, outcomes, g, |p| members.contains(&author_of[&p.treated_id]), min_pairs, bootstrap)
        })
        .collect()
}
