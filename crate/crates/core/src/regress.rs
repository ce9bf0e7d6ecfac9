//! Power transforms and a random-intercept linear mixed model fit by REML.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::{Ethnicity, FollowerGraph, Gender, LegislatorRecord, Party, Platform, PostRecord};
use crate::error::{Error, Result};
use crate::labeling::TreatmentLabel;
use crate::stats::{self, median, normal_two_sided_p, VisibilityDv};
use crate::visibility::VisibilitySummary;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Maximizes `f` on `[a, b]` by golden-section search. Returns the argmax,
/// its value and the trace of evaluated points.
pub fn golden_section_max<F>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64, Vec<(f64, f64)>)>
where
    F: FnMut(f64) -> f64,
{
    let mut trace = Vec::new();
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    trace.push((c, fc));
    trace.push((d, fd));
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            let (x, fx) = if fc >= fd { (c, fc) } else { (d, fd) };
            return Ok((x, fx, trace));
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
            trace.push((c, fc));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
            trace.push((d, fd));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        trace,
    })
}

pub fn yeo_johnson(y: f64, lambda: f64) -> f64 {
    if y >= 0.0 {
        if lambda == 0.0 {
            y.ln_1p()
        } else {
            (lambda * y.ln_1p()).exp_m1() / lambda
        }
    } else if lambda == 2.0 {
        -(-y).ln_1p()
    } else {
        -((2.0 - lambda) * (-y).ln_1p()).exp_m1() / (2.0 - lambda)
    }
}

pub fn box_cox(y: f64, lambda: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("Box-Cox needs y > 0, got {y}")));
    }
    Ok(if lambda == 0.0 {
        y.ln()
    } else {
        (lambda * y.ln()).exp_m1() / lambda
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerFamily {
    YeoJohnson,
    BoxCox,
}

/// Profile log-likelihood of a normal model for the transformed sample,
/// including the Jacobian of the transform.
pub fn power_loglik(sample: &[f64], family: PowerFamily, lambda: f64) -> f64 {
    let n = sample.len() as f64;
    let (z, jac): (Vec<f64>, f64) = match family {
        PowerFamily::YeoJohnson => (
            sample.iter().map(|&y| yeo_johnson(y, lambda)).collect(),
            sample.iter().map(|&y| y.signum() * y.abs().ln_1p()).sum(),
        ),
        PowerFamily::BoxCox => (
            sample
                .iter()
                .map(|&y| if lambda == 0.0 { y.ln() } else { (lambda * y.ln()).exp_m1() / lambda })
                .collect(),
            sample.iter().map(|y| y.ln()).sum(),
        ),
    };
    let m = stats::mean(&z);
    let var = z.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    -0.5 * n * var.ln() + (lambda - 1.0) * jac
}

/// Maximum-likelihood power parameter on [-3, 3].
pub fn fit_lambda_mle(sample: &[f64], family: PowerFamily) -> Result<f64> {
    if sample.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "power transform needs at least 10 values, got {}",
            sample.len()
        )));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value".into()));
    }
    if family == PowerFamily::BoxCox && sample.iter().any(|&v| v <= 0.0) {
        return Err(Error::Domain("Box-Cox needs strictly positive data".into()));
    }
    if stats::variance(sample) == 0.0 {
        return Err(Error::InvalidInput("zero variance".into()));
    }
    let (lambda, _, _) = golden_section_max(|l| power_loglik(sample, family, l), -3.0, 3.0, 1e-6, 200)?;
    Ok(lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "lambda", rename_all = "snake_case")]
pub enum Transform {
    YeoJohnson(f64),
    BoxCox(f64),
    Sqrt,
    CenterScale,
    None,
}

impl Transform {
    pub fn apply(self, y: f64) -> Result<f64> {
        match self {
            Transform::YeoJohnson(l) => Ok(yeo_johnson(y, l)),
            Transform::BoxCox(l) => box_cox(y, l),
            Transform::Sqrt if y >= 0.0 => Ok(y.sqrt()),
            Transform::Sqrt => Err(Error::Domain(format!("sqrt of {y}"))),
            Transform::CenterScale | Transform::None => Ok(y),
        }
    }
}

/// Variable name to the transform applied before standardization.
pub type TransformSpec = BTreeMap<String, Transform>;

/// Standardizes in place to mean 0 and sample sd 1; constant columns become 0.
pub fn standardize(v: &mut [f64]) {
    let m = stats::mean(v);
    let sd = stats::variance(v).sqrt();
    for x in v.iter_mut() {
        *x = if sd > 0.0 { (*x - m) / sd } else { 0.0 };
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmfulCounts {
    pub low_credible: usize,
    pub uncivil: usize,
}

pub fn harmful_counts(posts: &[PostRecord], labels: &[TreatmentLabel]) -> BTreeMap<String, HarmfulCounts> {
    let by_post: BTreeMap<&str, &TreatmentLabel> = labels.iter().map(|l| (l.post_id.as_str(), l)).collect();
    let mut out: BTreeMap<String, HarmfulCounts> = BTreeMap::new();
    for p in posts {
        let c = out.entry(p.author_id.clone()).or_default();
        if let Some(l) = by_post.get(p.post_id.as_str()) {
            c.low_credible += l.low_credible as usize;
            c.uncivil += (l.uncivil == Some(true)) as usize;
        }
    }
    out
}

/// Median of the in-neighbours' values; 0 when no in-neighbour has a value.
pub fn network_visibility(graph: &FollowerGraph, values: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    graph
        .nodes()
        .iter()
        .map(|id| {
            let nb: Vec<f64> = graph.in_neighbors(id).filter_map(|n| values.get(n).copied()).collect();
            (id.clone(), if nb.is_empty() { 0.0 } else { median(&nb) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignOptions {
    pub platform: Platform,
    pub dv: VisibilityDv,
    pub include_interaction: bool,
}

pub struct DesignInputs<'a> {
    pub summaries: &'a [VisibilitySummary],
    pub legislators: &'a BTreeMap<String, LegislatorRecord>,
    pub harmful: &'a BTreeMap<String, HarmfulCounts>,
    pub graph: Option<&'a FollowerGraph>,
}

#[derive(Debug, Clone)]
pub struct Design {
    /// Column names; the first is the intercept.
    pub columns: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub groups: Vec<usize>,
    pub group_names: Vec<String>,
    pub author_ids: Vec<String>,
    pub transforms: TransformSpec,
    /// Authors left out for an Other party, unknown attributes or a missing DV.
    pub dropped: usize,
}

impl Design {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.x.column(j).iter().copied().collect())
    }

    pub fn fit(&self) -> Result<MixedModelFit> {
        fit_mixed(&self.x, &self.y, &self.groups, &self.columns)
    }
}

pub const INTERCEPT: &str = "(Intercept)";

fn power_transform(values: &mut [f64], family: PowerFamily) -> Result<Transform> {
    let lambda = fit_lambda_mle(values, family)?;
    let t = match family {
        PowerFamily::YeoJohnson => Transform::YeoJohnson(lambda),
        PowerFamily::BoxCox => Transform::BoxCox(lambda),
    };
    for v in values.iter_mut() {
        *v = t.apply(*v)?;
    }
    Ok(t)
}

/// Author-level design for the visibility regression. Continuous columns
/// are transformed towards normality and standardized; the response is
/// Yeo-Johnson transformed and standardized.
pub fn build_design(inputs: &DesignInputs<'_>, opts: &DesignOptions) -> Result<Design> {
    let platform_a = opts.platform == Platform::A;
    let with_followers = platform_a && !opts.dv.is_follower_normalized();
    let with_network = platform_a && inputs.graph.is_some();

    let dv_values: BTreeMap<String, f64> = inputs
        .summaries
        .iter()
        .filter_map(|s| opts.dv.value(s).map(|v| (s.author_id.clone(), v)))
        .collect();
    let (centrality, netvis) = match inputs.graph.filter(|_| with_network) {
        Some(g) => (crate::corpus::in_degree_centrality(g), network_visibility(g, &dv_values)),
        None => (BTreeMap::new(), BTreeMap::new()),
    };

    struct Row {
        id: String,
        state: String,
        rep: f64,
        men: f64,
        white: f64,
        posts: f64,
        followers: f64,
        centrality: f64,
        netvis: f64,
        low: f64,
        uncivil: f64,
        y: f64,
    }
    let mut rows = Vec::new();
    let mut dropped = 0;
    for s in inputs.summaries {
        let leg = inputs.legislators.get(&s.author_id);
        let row = (|| {
            let leg = leg?;
            let y = dv_values.get(&s.author_id).copied()?;
            let rep = match leg.party {
                Party::Rep => 1.0,
                Party::Dem => 0.0,
                Party::Other => return None,
            };
            let men = match leg.gender {
                Gender::Men => 1.0,
                Gender::Women => 0.0,
                Gender::Unknown => return None,
            };
            let white = match leg.ethnicity {
                Ethnicity::White => 1.0,
                Ethnicity::NonWhite => 0.0,
                Ethnicity::Unknown => return None,
            };
            let followers = if with_followers { leg.follower_count? as f64 } else { 0.0 };
            let h = inputs.harmful.get(&s.author_id).copied().unwrap_or_default();
            Some(Row {
                id: s.author_id.clone(),
                state: leg.state.clone(),
                rep,
                men,
                white,
                posts: s.post_count as f64,
                followers,
                centrality: centrality.get(&s.author_id).copied().unwrap_or(0.0),
                netvis: netvis.get(&s.author_id).copied().unwrap_or(0.0),
                low: h.low_credible as f64,
                uncivil: h.uncivil as f64,
                y,
            })
        })();
        match row {
            Some(r) => rows.push(r),
            None => dropped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("no authors left for the design".into()));
    }

    let mut transforms = TransformSpec::new();
    let mut cols: Vec<(String, Vec<f64>)> = Vec::new();
    let collect = |f: &dyn Fn(&Row) -> f64| rows.iter().map(f).collect::<Vec<f64>>();

    cols.push((INTERCEPT.into(), vec![1.0; rows.len()]));
    cols.push(("Party[Rep]".into(), collect(&|r| r.rep)));
    cols.push(("Gender[Men]".into(), collect(&|r| r.men)));
    cols.push(("Ethnicity[White]".into(), collect(&|r| r.white)));

    let mut continuous: Vec<(String, Vec<f64>, Transform)> = Vec::new();
    let mut posts = collect(&|r| r.posts);
    let t = power_transform(&mut posts, PowerFamily::BoxCox)?;
    continuous.push(("posts".into(), posts, t));
    if with_followers {
        let mut f = collect(&|r| r.followers);
        let family = if f.iter().all(|&v| v > 0.0) {
            PowerFamily::BoxCox
        } else {
            PowerFamily::YeoJohnson
        };
        let t = power_transform(&mut f, family)?;
        continuous.push(("followers".into(), f, t));
    }
    if with_network {
        continuous.push(("centrality".into(), collect(&|r| r.centrality), Transform::None));
        continuous.push(("network_visibility".into(), collect(&|r| r.netvis), Transform::CenterScale));
    }
    continuous.push(("sqrt_low_credible".into(), collect(&|r| r.low.sqrt()), Transform::Sqrt));
    continuous.push(("sqrt_uncivil".into(), collect(&|r| r.uncivil.sqrt()), Transform::Sqrt));
    for (name, mut v, t) in continuous {
        standardize(&mut v);
        transforms.insert(name.clone(), t);
        cols.push((name, v));
    }
    if opts.include_interaction {
        let party = &cols[1].1;
        let low = &cols.iter().find(|c| c.0 == "sqrt_low_credible").expect("low-credible column").1;
        let inter = party.iter().zip(low).map(|(a, b)| a * b).collect();
        cols.push(("Party[Rep]:sqrt_low_credible".into(), inter));
    }

    let mut y = collect(&|r| r.y);
    let t = power_transform(&mut y, PowerFamily::YeoJohnson)?;
    transforms.insert(opts.dv.as_str().into(), t);
    standardize(&mut y);

    let mut group_names: Vec<String> = rows.iter().map(|r| r.state.clone()).collect();
    group_names.sort();
    group_names.dedup();
    let groups = rows
        .iter()
        .map(|r| group_names.binary_search(&r.state).expect("state indexed"))
        .collect();

    let n = rows.len();
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j].1[i]);
    let columns: Vec<String> = cols.into_iter().map(|c| c.0).collect();
    check_rank(&x, &columns)?;
    Ok(Design {
        columns,
        x,
        y: DVector::from_vec(y),
        groups,
        group_names,
        author_ids: rows.into_iter().map(|r| r.id).collect(),
        transforms,
        dropped,
    })
}

/// Sequential Gram-Schmidt; columns that lie in the span of earlier columns
/// are reported by name.
pub fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let orig = x.column(j).into_owned();
        let norm0 = orig.norm();
        let mut v = orig;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= 1e-9 * norm0 || norm0 == 0.0 {
            bad.push(names.get(j).cloned().unwrap_or_else(|| format!("column {j}")));
        } else {
            basis.push(v / norm);
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient(bad))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedModelFit {
    pub coefficients: Vec<Coefficient>,
    pub sigma_group: f64,
    pub sigma_resid: f64,
    /// sigma_group^2 / sigma_resid^2.
    pub variance_ratio: f64,
    pub r_squared: f64,
    pub reml_loglik: f64,
    pub n_obs: usize,
    pub n_groups: usize,
}

impl MixedModelFit {
    pub fn get(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }
}

/// Sufficient pieces of the random-intercept model for fast evaluation at
/// any variance ratio. With H = I + lambda Z Z', each group block of H has
/// inverse I - w J with w = lambda / (1 + lambda n_g).
struct RandomIntercept<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    groups: &'a [usize],
    sizes: Vec<f64>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    /// Column sums of X per group (p x G).
    xsum: DMatrix<f64>,
    ysum: DVector<f64>,
}

struct GlsSolution {
    beta: DVector<f64>,
    a_inv: DMatrix<f64>,
    /// r' H^-1 r
    q: f64,
    logdet_a: f64,
    logdet_h: f64,
}

impl<'a> RandomIntercept<'a> {
    fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>, groups: &'a [usize], n_groups: usize) -> Self {
        let p = x.ncols();
        let mut sizes = vec![0.0; n_groups];
        let mut xsum = DMatrix::zeros(p, n_groups);
        let mut ysum = DVector::zeros(n_groups);
        for (i, &g) in groups.iter().enumerate() {
            sizes[g] += 1.0;
            ysum[g] += y[i];
            for j in 0..p {
                xsum[(j, g)] += x[(i, j)];
            }
        }
        RandomIntercept {
            x,
            y,
            groups,
            sizes,
            xtx: x.transpose() * x,
            xty: x.transpose() * y,
            xsum,
            ysum,
        }
    }

    fn weights(&self, lambda: f64) -> Vec<f64> {
        self.sizes.iter().map(|&n| lambda / (1.0 + lambda * n)).collect()
    }

    fn solve(&self, lambda: f64) -> Option<GlsSolution> {
        let w = self.weights(lambda);
        let mut a = self.xtx.clone();
        let mut b = self.xty.clone();
        for (g, &wg) in w.iter().enumerate() {
            if wg == 0.0 {
                continue;
            }
            let s = self.xsum.column(g);
            a.ger(-wg, &s, &s, 1.0);
            b.axpy(-wg * self.ysum[g], &s, 1.0);
        }
        let chol = a.cholesky()?;
        let beta = chol.solve(&b);
        let logdet_a = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let r = self.y - self.x * &beta;
        let mut rsum = vec![0.0; w.len()];
        for (i, &g) in self.groups.iter().enumerate() {
            rsum[g] += r[i];
        }
        let q = r.norm_squared() - w.iter().zip(&rsum).map(|(wg, s)| wg * s * s).sum::<f64>();
        let logdet_h = self.sizes.iter().map(|&n| (lambda * n).ln_1p()).sum();
        Some(GlsSolution {
            beta,
            a_inv: chol.inverse(),
            q: q.max(0.0),
            logdet_a,
            logdet_h,
        })
    }

    /// Restricted log-likelihood profiled over sigma^2, up to a constant.
    fn reml(&self, lambda: f64) -> f64 {
        let dof = (self.x.nrows() - self.x.ncols()) as f64;
        match self.solve(lambda) {
            Some(s) => -0.5 * (dof * (s.q / dof).ln() + s.logdet_h + s.logdet_a),
            None => f64::NEG_INFINITY,
        }
    }
}

pub const LOG10_LAMBDA_MIN: f64 = -6.0;
pub const LOG10_LAMBDA_MAX: f64 = 3.0;

fn validate_mixed(x: &DMatrix<f64>, y: &DVector<f64>, groups: &[usize]) -> Result<usize> {
    if x.nrows() != y.len() || groups.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            actual: y.len().min(groups.len()),
        });
    }
    if x.nrows() <= x.ncols() {
        return Err(Error::InvalidInput("more columns than observations".into()));
    }
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    let used = {
        let mut seen = vec![false; n_groups];
        groups.iter().for_each(|&g| seen[g] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if used < 2 {
        return Err(Error::InvalidInput("mixed model needs at least two groups".into()));
    }
    Ok(n_groups)
}

/// REML objective at each log10 variance ratio in `grid`.
pub fn reml_profile(x: &DMatrix<f64>, y: &DVector<f64>, groups: &[usize], grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let g = validate_mixed(x, y, groups)?;
    let model = RandomIntercept::new(x, y, groups, g);
    Ok(grid.iter().map(|&l| (l, model.reml(10f64.powf(l)))).collect())
}

/// Random-intercept model y = X beta + u_group + e. The variance ratio is
/// profiled on log10 scale over [-6, 3] by a coarse grid and golden-section
/// refinement; an optimum at the lower bound is taken as no group variance.
pub fn fit_mixed(x: &DMatrix<f64>, y: &DVector<f64>, groups: &[usize], names: &[String]) -> Result<MixedModelFit> {
    let n_groups_total = validate_mixed(x, y, groups)?;
    check_rank(x, names)?;
    let model = RandomIntercept::new(x, y, groups, n_groups_total);
    let n = x.nrows();
    let p = x.ncols();
    let n_groups = model.sizes.iter().filter(|&&s| s > 0.0).count();

    let ols = model
        .solve(0.0)
        .ok_or_else(|| Error::RankDeficient(names.to_vec()))?;
    let y_mean = y.mean();
    let tss = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>();
    let exact = ols.q <= 1e-20 * tss.max(y.norm_squared()).max(f64::MIN_POSITIVE);

    let (lambda, sol) = if exact {
        (0.0, ols)
    } else {
        let steps = ((LOG10_LAMBDA_MAX - LOG10_LAMBDA_MIN) / 0.25).round() as usize;
        let grid: Vec<(f64, f64)> = (0..=steps)
            .map(|k| {
                let l = LOG10_LAMBDA_MIN + 0.25 * k as f64;
                (l, model.reml(10f64.powf(l)))
            })
            .collect();
        let k = (0..grid.len())
            .max_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1))
            .expect("non-empty grid");
        let lambda = if k == 0 {
            0.0
        } else {
            let lo = grid[k - 1].0;
            let hi = grid[(k + 1).min(grid.len() - 1)].0;
            let (best, val, mut trace) =
                golden_section_max(|l| model.reml(10f64.powf(l)), lo, hi, 1e-7, 200)?;
            if !val.is_finite() {
                trace.extend(grid.iter().copied());
                return Err(Error::NonConvergence { iterations: trace.len(), trace });
            }
            if val >= grid[k].1 {
                10f64.powf(best)
            } else {
                10f64.powf(grid[k].0)
            }
        };
        let sol = model.solve(lambda).ok_or_else(|| Error::RankDeficient(names.to_vec()))?;
        (lambda, sol)
    };

    let sigma2 = if exact { 0.0 } else { sol.q / (n - p) as f64 };
    let coefficients = (0..p)
        .map(|j| {
            let est = sol.beta[j];
            let se = (sigma2 * sol.a_inv[(j, j)]).max(0.0).sqrt();
            let (z, pval) = if se > 0.0 {
                let z = est / se;
                (z, normal_two_sided_p(z))
            } else if est != 0.0 {
                (est.signum() * f64::INFINITY, 0.0)
            } else {
                (0.0, 1.0)
            };
            Coefficient {
                term: names.get(j).cloned().unwrap_or_else(|| format!("x{j}")),
                estimate: est,
                std_error: se,
                z,
                p: pval,
            }
        })
        .collect();

    let fitted = x * &sol.beta;
    let fm = fitted.mean();
    let var_fit = fitted.iter().map(|v| (v - fm) * (v - fm)).sum::<f64>();
    let r_squared = if tss > 0.0 { (var_fit / tss).clamp(0.0, 1.0) } else { 0.0 };
    let dof = (n - p) as f64;
    let reml_loglik = if exact {
        f64::INFINITY
    } else {
        -0.5 * (dof * (sol.q / dof).ln() + sol.logdet_h + sol.logdet_a)
    };

    Ok(MixedModelFit {
        coefficients,
        sigma_group: (lambda * sigma2).sqrt(),
        sigma_resid: sigma2.sqrt(),
        variance_ratio: lambda,
        r_squared,
        reml_loglik,
        n_obs: n,
        n_groups,
    })
}
