//! Synthetic data with known true partitions, formula evaluators for the
//! theoretical separation bounds, partition-recovery metrics, and the
//! train/test benchmark loop over real CSV datasets.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, Group, GroupKind};
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::grouplasso::GroupedCoefficients;
use crate::merge::{GroupModel, Partition, PartitionModel};
use crate::select::{self, PipelineConfig, SelectionCriterion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Balance {
    /// Each level appears as close to n / (p_k + 1) times as possible.
    Balanced,
    /// Levels drawn independently and uniformly per row.
    MultinomialUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian,
    /// Uniform on [-sigma*sqrt(3), sigma*sqrt(3)]; bounded, hence subgaussian.
    UniformBounded,
}

impl Default for NoiseKind {
    fn default() -> Self {
        NoiseKind::Gaussian
    }
}

/// One synthetic factor: a cluster id per level (level 0 = reference) and
/// one effect per cluster; the reference cluster's effect must be 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorSpec {
    pub levels: usize,
    pub assignment: Vec<usize>,
    pub effects: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub factors: Vec<FactorSpec>,
    /// True coefficients of continuous predictors (values drawn N(0,1)).
    #[serde(default)]
    pub continuous: Vec<f64>,
    pub family: Family,
    pub sigma: f64,
    pub balance: Balance,
    #[serde(default)]
    pub noise: NoiseKind,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        for (k, f) in self.factors.iter().enumerate() {
            if f.levels < 2 {
                return Err(Error::InvalidParameter(format!(
                    "factor {k}: needs >= 2 levels"
                )));
            }
            if f.assignment.len() != f.levels {
                return Err(Error::InvalidParameter(format!(
                    "factor {k}: assignment length {} != levels {}",
                    f.assignment.len(),
                    f.levels
                )));
            }
            let n_clusters = f.assignment.iter().max().map_or(0, |m| m + 1);
            if f.effects.len() != n_clusters {
                return Err(Error::InvalidParameter(format!(
                    "factor {k}: {} effects for {} clusters",
                    f.effects.len(),
                    n_clusters
                )));
            }
            if f.effects[f.assignment[0]] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "factor {k}: the reference cluster's effect must be 0"
                )));
            }
            for i in 0..f.effects.len() {
                for j in (i + 1)..f.effects.len() {
                    if f.effects[i] == f.effects[j] {
                        return Err(Error::InvalidParameter(format!(
                            "factor {k}: cluster effects must be distinct"
                        )));
                    }
                }
            }
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidParameter("sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// True per-level coefficients (reference excluded), grouped like the
    /// generated design.
    pub fn true_coefficients(&self) -> GroupedCoefficients {
        let mut blocks = Vec::new();
        for f in &self.factors {
            blocks.push(
                (1..f.levels)
                    .map(|l| f.effects[f.assignment[l]])
                    .collect(),
            );
        }
        for &c in &self.continuous {
            blocks.push(vec![c]);
        }
        GroupedCoefficients {
            intercept: 0.0,
            blocks,
        }
    }

    /// True partition model implied by the effects.
    pub fn true_model(&self) -> PartitionModel {
        let mut groups = Vec::new();
        for f in &self.factors {
            let n_clusters = f.effects.len();
            let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
            for (level, &c) in f.assignment.iter().enumerate() {
                clusters[c].push(level);
            }
            clusters.retain(|c| !c.is_empty());
            groups.push(GroupModel::Factor {
                partition: Partition::canonicalize(clusters),
            });
        }
        for &c in &self.continuous {
            groups.push(GroupModel::Continuous { present: c != 0.0 });
        }
        PartitionModel { groups }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthSummary {
    /// Minimal gap between distinct true coefficient values within a factor
    /// (None when no factor has two distinct values).
    pub delta: Option<f64>,
    pub true_model: PartitionModel,
    pub x_min: f64,
    pub x_max: f64,
}

/// Minimal within-factor gap among distinct values of {0} union the true
/// block coefficients. Continuous blocks do not participate.
pub fn compute_delta(beta0: &GroupedCoefficients, factor_blocks: usize) -> Option<f64> {
    let mut delta: Option<f64> = None;
    for block in beta0.blocks.iter().take(factor_blocks) {
        let mut vals = vec![0.0_f64];
        vals.extend_from_slice(block);
        for i in 0..vals.len() {
            for j in (i + 1)..vals.len() {
                if vals[i] != vals[j] {
                    let gap = (vals[i] - vals[j]).abs();
                    delta = Some(delta.map_or(gap, |d: f64| d.min(gap)));
                }
            }
        }
    }
    delta
}

/// Draws a synthetic design and response. Bit-reproducible from the seed.
pub fn generate(spec: &SyntheticSpec) -> Result<(DesignMatrix, Array1<f64>, TruthSummary)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let r_factors = spec.factors.len();
    let p: usize = 1 + spec
        .factors
        .iter()
        .map(|f| f.levels - 1)
        .sum::<usize>()
        + spec.continuous.len();

    let mut x = Array2::zeros((n, p));
    x.column_mut(0).fill(1.0);
    let mut groups: Vec<Group> = Vec::new();
    let mut col = 1usize;
    let mut eta = Array1::zeros(n);

    for (k, f) in spec.factors.iter().enumerate() {
        let level_of_row: Vec<usize> = match spec.balance {
            Balance::Balanced => {
                if n < f.levels {
                    return Err(Error::InvalidParameter(format!(
                        "factor {k}: n = {n} cannot realize {} levels under the balanced policy",
                        f.levels
                    )));
                }
                let mut rows: Vec<usize> = (0..n).map(|i| i % f.levels).collect();
                rows.shuffle(&mut rng);
                rows
            }
            Balance::MultinomialUniform => {
                (0..n).map(|_| rng.gen_range(0..f.levels)).collect()
            }
        };
        for (i, &level) in level_of_row.iter().enumerate() {
            if level > 0 {
                x[[i, col + level - 1]] = 1.0;
            }
            eta[i] += f.effects[f.assignment[level]];
        }
        let levels: Vec<String> = (0..f.levels).map(|l| format!("L{l}")).collect();
        groups.push(Group {
            name: format!("F{k}"),
            cols: col..col + f.levels - 1,
            kind: GroupKind::Factor { levels },
        });
        col += f.levels - 1;
    }
    for (k, &coef) in spec.continuous.iter().enumerate() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        for i in 0..n {
            let v = normal.sample(&mut rng);
            x[[i, col]] = v;
            eta[i] += coef * v;
        }
        groups.push(Group {
            name: format!("C{k}"),
            cols: col..col + 1,
            kind: GroupKind::Continuous,
        });
        col += 1;
    }

    let y = match spec.family {
        Family::Gaussian => {
            let mut y = eta.clone();
            if spec.sigma > 0.0 {
                match spec.noise {
                    NoiseKind::Gaussian => {
                        let normal = Normal::new(0.0, spec.sigma).unwrap();
                        for v in y.iter_mut() {
                            *v += normal.sample(&mut rng);
                        }
                    }
                    NoiseKind::UniformBounded => {
                        let half = spec.sigma * 3.0_f64.sqrt();
                        for v in y.iter_mut() {
                            *v += rng.gen_range(-half..half);
                        }
                    }
                }
            }
            y
        }
        Family::Logistic => {
            Array1::from_shape_fn(n, |i| {
                let prob = Family::Logistic.gamma_dot(eta[i]);
                if rng.gen_bool(prob.clamp(0.0, 1.0)) {
                    1.0
                } else {
                    0.0
                }
            })
        }
    };

    let design = DesignMatrix { x, groups, n, p };
    let mut x_min = f64::INFINITY;
    let mut x_max = 0.0_f64;
    for j in 1..design.p {
        let norm = design.column_norm(j);
        x_min = x_min.min(norm);
        x_max = x_max.max(norm);
    }
    let truth = TruthSummary {
        delta: compute_delta(&spec.true_coefficients(), r_factors),
        true_model: spec.true_model(),
        x_min,
        x_max,
    };
    Ok((design, y, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub exact: bool,
    /// Rand index averaged over factors; 1.0 iff all partitions identical.
    pub rand_index: f64,
}

fn rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    let n = a.n_levels();
    if n != b.n_levels() {
        return Err(Error::Dimension(format!(
            "partitions cover {} vs {} levels",
            n,
            b.n_levels()
        )));
    }
    if n < 2 {
        return Ok(1.0);
    }
    let ca = a.assignment();
    let cb = b.assignment();
    let mut agree = 0usize;
    let mut total = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let together_a = ca[i] == ca[j];
            let together_b = cb[i] == cb[j];
            if together_a == together_b {
                agree += 1;
            }
            total += 1;
        }
    }
    Ok(agree as f64 / total as f64)
}

/// Compares an estimated partition model against the truth: exact equality
/// plus a graded pair-counting score.
pub fn recovery(estimated: &PartitionModel, truth: &PartitionModel) -> Result<Recovery> {
    if estimated.groups.len() != truth.groups.len() {
        return Err(Error::Dimension(format!(
            "models have {} vs {} groups",
            estimated.groups.len(),
            truth.groups.len()
        )));
    }
    let mut exact = true;
    let mut ri_sum = 0.0;
    let mut ri_n = 0usize;
    for (ge, gt) in estimated.groups.iter().zip(&truth.groups) {
        match (ge, gt) {
            (GroupModel::Factor { partition: pe }, GroupModel::Factor { partition: pt }) => {
                if pe != pt {
                    exact = false;
                }
                ri_sum += rand_index(pe, pt)?;
                ri_n += 1;
            }
            (
                GroupModel::Continuous { present: pe },
                GroupModel::Continuous { present: pt },
            ) => {
                if pe != pt {
                    exact = false;
                }
            }
            _ => {
                return Err(Error::Dimension(
                    "mismatched group kinds between models".into(),
                ));
            }
        }
    }
    Ok(Recovery {
        exact,
        rand_index: if ri_n == 0 { 1.0 } else { ri_sum / ri_n as f64 },
    })
}

/// Upper bound on `x_W^2 zeta^{-2}` for an orthogonal design with weights
/// `||x||^q`: `f(q) = x_m^{-2} (x_M/x_m)^{max(0, |2q-3|-1)}`.
pub fn weight_bound_f(q: f64, x_min: f64, x_max: f64) -> Result<f64> {
    if !(x_min > 0.0 && x_min <= x_max) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < x_m <= x_M, got x_m = {x_min}, x_M = {x_max}"
        )));
    }
    let exponent = ((2.0 * q - 3.0).abs() - 1.0).max(0.0);
    Ok(x_min.powi(-2) * (x_max / x_min).powf(exponent))
}

/// Sufficient separation (orthogonal design, optimal weights, o(1) terms
/// dropped): `Delta = sigma * sqrt(128 log p) / x_m`.
pub fn sufficient_delta(sigma: f64, x_min: f64, p: usize) -> Result<f64> {
    if sigma <= 0.0 || x_min <= 0.0 || p < 2 {
        return Err(Error::InvalidParameter(
            "need sigma > 0, x_m > 0, p >= 2".into(),
        ));
    }
    Ok(sigma * (128.0 * (p as f64).ln()).sqrt() / x_min)
}

/// Necessary separation for any selector (o(1) terms dropped):
/// `Delta = sigma * sqrt(log(p) / 2) / x_M`.
pub fn necessary_delta(sigma: f64, x_max: f64, p: usize) -> Result<f64> {
    if sigma <= 0.0 || x_max <= 0.0 || p < 2 {
        return Err(Error::InvalidParameter(
            "need sigma > 0, x_M > 0, p >= 2".into(),
        ));
    }
    Ok(sigma * ((p as f64).ln() / 2.0).sqrt() / x_max)
}

/// Derives an independent RNG seed for replication `index` of a run.
pub fn replication_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 over (seed, index)
    let mut z = seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyPoint {
    pub grid_value: f64,
    pub replications: usize,
    pub exact_recoveries: usize,
    pub recovery_rate: f64,
    pub mean_rand_index: f64,
}

/// Runs `replications` GLAMER fits per grid point and reports the exact
/// recovery fraction. `make_spec` builds the synthetic spec for a grid value
/// and a replication seed.
pub fn consistency_experiment<F>(
    grid: &[f64],
    replications: usize,
    cfg: &PipelineConfig,
    criterion: &SelectionCriterion,
    seed: u64,
    make_spec: F,
) -> Result<Vec<ConsistencyPoint>>
where
    F: Fn(f64, u64) -> SyntheticSpec + Sync,
{
    grid.iter()
        .map(|&g| {
            let results: Result<Vec<Recovery>> = (0..replications as u64)
                .into_par_iter()
                .map(|rep| {
                    let rep_seed = replication_seed(seed, g.to_bits() ^ rep);
                    let spec = make_spec(g, rep_seed);
                    let (design, y, truth) = generate(&spec)?;
                    let (path, _) = select::run_path(&design, y.view(), cfg)?;
                    let sel =
                        select::select_final(&design, y.view(), cfg, &path, criterion, rep_seed)?;
                    recovery(&sel.fit.model, &truth.true_model)
                })
                .collect();
            let results = results?;
            let exact = results.iter().filter(|r| r.exact).count();
            let mean_ri =
                results.iter().map(|r| r.rand_index).sum::<f64>() / results.len() as f64;
            Ok(ConsistencyPoint {
                grid_value: g,
                replications,
                exact_recoveries: exact,
                recovery_rate: exact as f64 / replications as f64,
                mean_rand_index: mean_ri,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub iteration: usize,
    pub seed: u64,
    pub train_n: usize,
    pub test_n: usize,
    /// Mean squared error (gaussian) or misclassification rate (logistic).
    pub pe: f64,
    pub md: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSummary {
    pub iterations: usize,
    pub mean_pe: f64,
    pub se_pe: f64,
    pub mean_md: f64,
    pub se_md: f64,
}

pub fn summarize(rows: &[BenchRow]) -> BenchSummary {
    let n = rows.len() as f64;
    let mean_pe = rows.iter().map(|r| r.pe).sum::<f64>() / n;
    let mean_md = rows.iter().map(|r| r.md as f64).sum::<f64>() / n;
    let var = |vals: Vec<f64>, mean: f64| {
        if rows.len() < 2 {
            0.0
        } else {
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        }
    };
    let var_pe = var(rows.iter().map(|r| r.pe).collect(), mean_pe);
    let var_md = var(rows.iter().map(|r| r.md as f64).collect(), mean_md);
    BenchSummary {
        iterations: rows.len(),
        mean_pe,
        se_pe: (var_pe / n).sqrt(),
        mean_md,
        se_md: (var_md / n).sqrt(),
    }
}

const MAX_RESTARTS: usize = 25;

/// The train/test evaluation protocol: per iteration a random m% training
/// split, degenerate factors and unseen-in-train levels dropped, rank repair,
/// pipeline fit with the given criterion, PE and MD on the surviving test
/// rows. Failed iterations are restarted with a fresh split.
pub fn run_benchmark(
    design: &DesignMatrix,
    y: &Array1<f64>,
    cfg: &PipelineConfig,
    criterion: &SelectionCriterion,
    m_percent: f64,
    iterations: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if !(m_percent > 0.0 && m_percent < 100.0) {
        return Err(Error::InvalidParameter(format!(
            "m_percent must be in (0, 100), got {m_percent}"
        )));
    }
    let n = design.n;
    let train_size = ((m_percent / 100.0) * n as f64).round().max(1.0) as usize;
    if train_size >= n {
        return Err(Error::InvalidParameter(
            "training split leaves no test rows".into(),
        ));
    }

    let rows: Result<Vec<BenchRow>> = (0..iterations as u64)
        .into_par_iter()
        .map(|it| {
            let mut restarts = 0usize;
            loop {
                let attempt_seed = replication_seed(seed, it + (restarts as u64) * 1_000_003);
                match bench_iteration(design, y, cfg, criterion, train_size, attempt_seed) {
                    Ok((train_n, test_n, pe, md)) => {
                        return Ok(BenchRow {
                            iteration: it as usize,
                            seed: attempt_seed,
                            train_n,
                            test_n,
                            pe,
                            md,
                            restarts,
                        });
                    }
                    Err(e) => {
                        restarts += 1;
                        if restarts > MAX_RESTARTS {
                            return Err(Error::Numerical(format!(
                                "iteration {it} failed {MAX_RESTARTS} times, last error: {e}"
                            )));
                        }
                    }
                }
            }
        })
        .collect();
    rows
}

fn bench_iteration(
    design: &DesignMatrix,
    y: &Array1<f64>,
    cfg: &PipelineConfig,
    criterion: &SelectionCriterion,
    train_size: usize,
    seed: u64,
) -> Result<(usize, usize, f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..design.n).collect();
    order.shuffle(&mut rng);
    let train_rows = &order[..train_size];
    let (pruned, _report, row_ok) = design.prune_for_training(train_rows);
    let test_rows: Vec<usize> = order[train_size..]
        .iter()
        .copied()
        .filter(|&i| row_ok[i])
        .collect();
    if test_rows.is_empty() {
        return Err(Error::Data("no usable test rows".into()));
    }

    // greedy removal of rank-deficiency-inducing columns in the train matrix
    let train_full = pruned.subset_rows(train_rows);
    let (keep, drop) = crate::linalg::independent_columns(&train_full.x, 1e-10);
    let pruned = if drop.is_empty() {
        pruned
    } else {
        drop_columns(&pruned, &keep)?
    };

    let train_design = pruned.subset_rows(train_rows);
    let y_train = Array1::from_iter(train_rows.iter().map(|&i| y[i]));
    let (path, _) = select::run_path(&train_design, y_train.view(), cfg)?;
    let sel = select::select_final(&train_design, y_train.view(), cfg, &path, criterion, seed)?;

    let test_design = pruned.subset_rows(&test_rows);
    let beta = sel.fit.coefficients.to_full(&train_design);
    let eta = test_design.x.dot(&beta);
    let pe = match cfg.family {
        Family::Gaussian => {
            let mut sum = 0.0;
            for (i, &row) in test_rows.iter().enumerate() {
                let d = y[row] - eta[i];
                sum += d * d;
            }
            sum / test_rows.len() as f64
        }
        Family::Logistic => {
            let mut wrong = 0usize;
            for (i, &row) in test_rows.iter().enumerate() {
                let label = if eta[i] >= 0.0 { 1.0 } else { 0.0 };
                if label != y[row] {
                    wrong += 1;
                }
            }
            wrong as f64 / test_rows.len() as f64
        }
    };
    Ok((train_rows.len(), test_rows.len(), pe, sel.fit.md))
}

/// Rebuilds a design keeping only the listed columns (column 0 must be
/// kept). Factor groups lose the levels whose dummies were removed.
fn drop_columns(design: &DesignMatrix, keep: &[usize]) -> Result<DesignMatrix> {
    if keep.first() != Some(&0) {
        return Err(Error::Numerical(
            "rank repair tried to drop the intercept".into(),
        ));
    }
    let keep_set: std::collections::HashSet<usize> = keep.iter().copied().collect();
    let mut groups = Vec::new();
    let mut keep_cols = vec![0usize];
    let mut next = 1usize;
    for g in &design.groups {
        match &g.kind {
            GroupKind::Continuous => {
                if keep_set.contains(&g.cols.start) {
                    keep_cols.push(g.cols.start);
                    groups.push(Group {
                        name: g.name.clone(),
                        cols: next..next + 1,
                        kind: GroupKind::Continuous,
                    });
                    next += 1;
                }
            }
            GroupKind::Factor { levels } => {
                let kept: Vec<usize> = g
                    .cols
                    .clone()
                    .filter(|c| keep_set.contains(c))
                    .collect();
                if kept.is_empty() {
                    continue;
                }
                let mut new_levels = vec![levels[0].clone()];
                for &c in &kept {
                    new_levels.push(levels[c - g.cols.start + 1].clone());
                }
                keep_cols.extend(&kept);
                groups.push(Group {
                    name: g.name.clone(),
                    cols: next..next + kept.len(),
                    kind: GroupKind::Factor { levels: new_levels },
                });
                next += kept.len();
            }
        }
    }
    let mut x = Array2::zeros((design.n, keep_cols.len()));
    for (out_j, &j) in keep_cols.iter().enumerate() {
        x.column_mut(out_j).assign(&design.x.column(j));
    }
    Ok(DesignMatrix {
        x,
        groups,
        n: design.n,
        p: keep_cols.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_factor_spec(delta: f64, sigma: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n: 40,
            factors: vec![FactorSpec {
                levels: 4,
                assignment: vec![0, 0, 1, 1],
                effects: vec![0.0, delta],
            }],
            continuous: vec![],
            family: Family::Gaussian,
            sigma,
            balance: Balance::Balanced,
            noise: NoiseKind::Gaussian,
            seed,
        }
    }

    #[test]
    fn sigma_zero_is_exact_linear() {
        let spec = one_factor_spec(2.0, 0.0, 3);
        let (design, y, _) = generate(&spec).unwrap();
        let beta = spec.true_coefficients().to_full(&design);
        let eta = design.x.dot(&beta);
        for i in 0..design.n {
            assert!((y[i] - eta[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_from_effects() {
        let spec = one_factor_spec(2.0, 1.0, 3);
        let (_, _, truth) = generate(&spec).unwrap();
        assert_eq!(truth.delta, Some(2.0));
    }

    #[test]
    fn balanced_counts_and_norms() {
        let spec = one_factor_spec(1.0, 0.5, 9);
        let (design, _, _) = generate(&spec).unwrap();
        // n = 40, 4 levels -> each level 10 times, dummy norms sqrt(10)
        for j in 1..design.p {
            assert!((design.column_norm(j) - 10.0_f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn generate_is_reproducible() {
        let spec = one_factor_spec(1.5, 1.0, 77);
        let (d1, y1, _) = generate(&spec).unwrap();
        let (d2, y2, _) = generate(&spec).unwrap();
        assert_eq!(d1.x, d2.x);
        for i in 0..y1.len() {
            assert_eq!(y1[i].to_bits(), y2[i].to_bits());
        }
    }

    #[test]
    fn compute_delta_examples() {
        let b = GroupedCoefficients {
            intercept: 0.0,
            blocks: vec![vec![1.0, 3.0]],
        };
        assert_eq!(compute_delta(&b, 1), Some(1.0));
        let b = GroupedCoefficients {
            intercept: 0.0,
            blocks: vec![vec![1.0, 1.0]],
        };
        assert_eq!(compute_delta(&b, 1), Some(1.0));
        let b = GroupedCoefficients {
            intercept: 0.0,
            blocks: vec![vec![1.0, 2.0], vec![0.4]],
        };
        assert_eq!(compute_delta(&b, 2), Some(0.4));
        let b = GroupedCoefficients {
            intercept: 0.0,
            blocks: vec![vec![0.0, 0.0]],
        };
        assert_eq!(compute_delta(&b, 1), None);
    }

    #[test]
    fn recovery_identical_models() {
        let m = PartitionModel {
            groups: vec![GroupModel::Factor {
                partition: Partition::canonicalize(vec![vec![0, 1], vec![2, 3]]),
            }],
        };
        let r = recovery(&m, &m).unwrap();
        assert!(r.exact);
        assert_eq!(r.rand_index, 1.0);
    }

    #[test]
    fn recovery_pair_counting() {
        // truth: {0,1},{2,3}; estimate: singletons
        let truth = PartitionModel {
            groups: vec![GroupModel::Factor {
                partition: Partition::canonicalize(vec![vec![0, 1], vec![2, 3]]),
            }],
        };
        let est = PartitionModel {
            groups: vec![GroupModel::Factor {
                partition: Partition::singletons(4),
            }],
        };
        let r = recovery(&est, &truth).unwrap();
        assert!(!r.exact);
        // pairs: (01)(23) together in truth, apart in estimate -> disagree;
        // the other 4 pairs apart in both -> agree; RI = 4/6
        assert!((r.rand_index - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn recovery_zero_rand_index() {
        let truth = PartitionModel {
            groups: vec![GroupModel::Factor {
                partition: Partition::singletons(3),
            }],
        };
        let est = PartitionModel {
            groups: vec![GroupModel::Factor {
                partition: Partition::merged(3),
            }],
        };
        let r = recovery(&est, &truth).unwrap();
        assert!(!r.exact);
        assert_eq!(r.rand_index, 0.0);
    }

    #[test]
    fn weight_bound_examples() {
        assert!((weight_bound_f(1.5, 1.0, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((weight_bound_f(0.0, 1.0, 2.0).unwrap() - 4.0).abs() < 1e-12);
        // symmetric about q = 1.5
        for s in [0.1, 0.7, 1.3] {
            let a = weight_bound_f(1.5 + s, 1.0, 3.0).unwrap();
            let b = weight_bound_f(1.5 - s, 1.0, 3.0).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_bound_examples() {
        // ratio sufficient/necessary at x_m = x_M is exactly 16
        let s = sufficient_delta(1.0, 1.0, 7).unwrap();
        let nec = necessary_delta(1.0, 1.0, 7).unwrap();
        assert!((s / nec - 16.0).abs() < 1e-12);
        let nec2 = necessary_delta(1.0, 1.0, 2).unwrap();
        assert!((nec2 - (2.0_f64.ln() / 2.0).sqrt()).abs() < 1e-12);
        assert!((nec2 - 0.5887).abs() < 1e-4);
        // doubling x_m halves the sufficient bound
        let s2 = sufficient_delta(1.0, 2.0, 7).unwrap();
        assert!((s2 - s / 2.0).abs() < 1e-12);
    }

    #[test]
    fn benchmark_deterministic_and_sane() {
        let spec = one_factor_spec(3.0, 0.5, 123);
        let (design, y, _) = generate(&spec).unwrap();
        let mut cfg = PipelineConfig::new(Family::Gaussian);
        cfg.n_lambda = 8;
        let crit = SelectionCriterion::Ric { constant: 2.0 };
        let rows1 = run_benchmark(&design, &y, &cfg, &crit, 70.0, 2, 5).unwrap();
        let rows2 = run_benchmark(&design, &y, &cfg, &crit, 70.0, 2, 5).unwrap();
        assert_eq!(rows1.len(), 2);
        for (a, b) in rows1.iter().zip(&rows2) {
            assert_eq!(a.pe.to_bits(), b.pe.to_bits());
            assert_eq!(a.md, b.md);
        }
        for row in &rows1 {
            assert!(row.md >= 1);
            assert!(row.pe >= 0.0);
        }
        assert!(run_benchmark(&design, &y, &cfg, &crit, 150.0, 1, 5).is_err());
    }

    #[test]
    fn noiseless_continuous_benchmark_is_exact() {
        let spec = SyntheticSpec {
            n: 60,
            factors: vec![],
            continuous: vec![2.0],
            family: Family::Gaussian,
            sigma: 0.0,
            balance: Balance::MultinomialUniform,
            noise: NoiseKind::Gaussian,
            seed: 4,
        };
        let (design, y, _) = generate(&spec).unwrap();
        let mut cfg = PipelineConfig::new(Family::Gaussian);
        cfg.n_lambda = 10;
        let crit = SelectionCriterion::Ric { constant: 2.0 };
        let rows = run_benchmark(&design, &y, &cfg, &crit, 70.0, 2, 9).unwrap();
        for row in rows {
            assert!(row.pe <= 1e-10, "pe = {}", row.pe);
        }
    }
}
