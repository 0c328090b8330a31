//! Pipeline orchestration: single-(lambda, tau) fits, the lambda-net scheme
//! (warm-started Group Lasso, per-factor dendrograms, nested families,
//! per-dimension screening by in-sample refit loss), and final selection by
//! K-fold cross-validation or the Risk Inflation Criterion.

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{self, DesignMatrix, DropReport, GroupKind, Schema, WeightMatrix};
use crate::error::{Error, Result};
use crate::glm::{self, Family};
use crate::grouplasso::{self, GroupLassoProblem, GroupedCoefficients};
use crate::merge::{self, GroupModel, Linkage, PartitionModel, ZColumnSource};

/// Hyperparameters of the lambda-net pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub family: Family,
    /// Weight exponent: w_{j,k} = ||x_{j,k}||^q.
    pub q: f64,
    pub linkage: Linkage,
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl PipelineConfig {
    pub fn new(family: Family) -> Self {
        PipelineConfig {
            family,
            q: 1.0,
            linkage: Linkage::Complete,
            n_lambda: 100,
            lambda_ratio: 1e-3,
            tol: grouplasso::DEFAULT_TOL,
            max_iter: grouplasso::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub solver_iterations: usize,
    pub kkt_residual: f64,
    /// Merged-design columns dropped during rank repair of the refit.
    pub dropped_columns: Vec<String>,
}

/// Final GLAMER estimate: refit coefficients expanded back to level space
/// (constant within each cluster, zero on every reference cluster).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlamerFit {
    pub coefficients: GroupedCoefficients,
    pub model: PartitionModel,
    pub md: usize,
    pub train_loss: f64,
    pub lambda: f64,
    pub tau: Option<f64>,
    pub diagnostics: Diagnostics,
}

/// Refits a partition model by maximum likelihood on the merged design and
/// expands the cluster coefficients back to per-level coefficients.
/// Rank-deficient cluster columns are dropped greedily and recorded.
pub fn refit_model(
    design: &DesignMatrix,
    y: ArrayView1<'_, f64>,
    family: Family,
    model: &PartitionModel,
) -> Result<(GroupedCoefficients, f64, Vec<String>)> {
    let merged = merge::build_merged_design(design, model)?;
    let (keep, drop) = crate::linalg::independent_columns(&merged.z, 1e-10);
    let column_name = |src: &ZColumnSource| -> String {
        match src {
            ZColumnSource::Intercept => "(intercept)".into(),
            ZColumnSource::Continuous { group } => design.groups[*group].name.clone(),
            ZColumnSource::Cluster { group, cluster } => {
                let g = &design.groups[*group];
                let GroupModel::Factor { partition } = &model.groups[*group] else {
                    unreachable!()
                };
                let GroupKind::Factor { levels } = &g.kind else {
                    unreachable!()
                };
                let names: Vec<&str> = partition.clusters[*cluster]
                    .iter()
                    .map(|&l| levels[l].as_str())
                    .collect();
                format!("{}={{{}}}", g.name, names.join(","))
            }
        }
    };
    let dropped: Vec<String> = drop.iter().map(|&j| column_name(&merged.columns[j])).collect();
    let z = if drop.is_empty() {
        merged.z.clone()
    } else {
        let mut z = ndarray::Array2::zeros((merged.z.nrows(), keep.len()));
        for (out_j, &j) in keep.iter().enumerate() {
            z.column_mut(out_j).assign(&merged.z.column(j));
        }
        z
    };
    let mle = glm::fit_mle(&z, y, family)?;

    let mut coeffs = GroupedCoefficients::zeros(design);
    for (slot, &j) in keep.iter().enumerate() {
        match &merged.columns[j] {
            ZColumnSource::Intercept => coeffs.intercept = mle.beta[slot],
            ZColumnSource::Continuous { group } => coeffs.blocks[*group][0] = mle.beta[slot],
            ZColumnSource::Cluster { group, cluster } => {
                let GroupModel::Factor { partition } = &model.groups[*group] else {
                    unreachable!()
                };
                for &level in &partition.clusters[*cluster] {
                    coeffs.blocks[*group][level - 1] = mle.beta[slot];
                }
            }
        }
    }
    Ok((coeffs, mle.loss, dropped))
}

/// One full pass of the three-step procedure at fixed (lambda, tau).
pub fn glamer_fit(
    design: &DesignMatrix,
    y: ArrayView1<'_, f64>,
    family: Family,
    weights: &WeightMatrix,
    lambda: f64,
    tau: f64,
    tol: f64,
    max_iter: usize,
) -> Result<GlamerFit> {
    if tau < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tau must be nonnegative, got {tau}"
        )));
    }
    let problem = GroupLassoProblem::new(design, y, family, weights, lambda)?;
    let sol = grouplasso::fit(&problem, tol, max_iter, None)?;

    let groups = design
        .groups
        .iter()
        .zip(&sol.beta.blocks)
        .map(|(g, block)| match &g.kind {
            GroupKind::Factor { .. } => GroupModel::Factor {
                partition: merge::threshold_merge(block, tau),
            },
            GroupKind::Continuous => GroupModel::Continuous {
                present: block[0].abs() > tau,
            },
        })
        .collect();
    let model = PartitionModel { groups };
    let (coefficients, train_loss, dropped) = refit_model(design, y, family, &model)?;
    let md = merge::model_dimension(&model);
    Ok(GlamerFit {
        coefficients,
        model,
        md,
        train_loss,
        lambda,
        tau: Some(tau),
        diagnostics: Diagnostics {
            solver_iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            dropped_columns: dropped,
        },
    })
}

/// Per-lambda solver summary kept for diagnostics and the sparsity
/// comparison against the unmerged Group Lasso support.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub lambda: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub objective: f64,
    /// Model dimension of the Group Lasso support with all levels distinct.
    pub support_md: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathEntry {
    pub lambda_index: usize,
    pub md: usize,
    pub train_loss: f64,
    pub model: PartitionModel,
}

/// Best refit model found at one dimension across the lambda grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimBest {
    pub md: usize,
    pub lambda_index: usize,
    pub train_loss: f64,
    pub model: PartitionModel,
    pub coefficients: GroupedCoefficients,
    pub dropped_columns: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathResult {
    pub lambdas: Vec<f64>,
    pub entries: Vec<PathEntry>,
    pub best: BTreeMap<usize, DimBest>,
    pub solutions: Vec<SolutionSummary>,
}

impl PathResult {
    pub fn max_dimension(&self) -> usize {
        self.best.keys().copied().max().unwrap_or(1)
    }
}

fn support_md(design: &DesignMatrix, beta: &GroupedCoefficients) -> usize {
    1 + design
        .groups
        .iter()
        .zip(&beta.blocks)
        .map(|(g, block)| {
            if block.iter().any(|&b| b != 0.0) {
                g.len()
            } else {
                0
            }
        })
        .sum::<usize>()
}

/// Runs the lambda net: for each lambda a warm-started Group Lasso, one
/// dendrogram per factor, the nested family, and an MLE refit of each family
/// member; for each dimension the model with minimal in-sample refit loss
/// across the grid is retained.
pub fn glamer_path(
    design: &DesignMatrix,
    y: ArrayView1<'_, f64>,
    cfg: &PipelineConfig,
    weights: &WeightMatrix,
    lambdas: &[f64],
) -> Result<PathResult> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    let mut entries = Vec::new();
    let mut best: BTreeMap<usize, DimBest> = BTreeMap::new();
    let mut solutions = Vec::with_capacity(lambdas.len());
    // refit cache: identical models recur across neighboring lambdas
    let mut cache: HashMap<PartitionModel, (GroupedCoefficients, f64, Vec<String>)> =
        HashMap::new();
    let mut warm: Option<GroupedCoefficients> = None;

    for (li, &lambda) in lambdas.iter().enumerate() {
        let problem = GroupLassoProblem::new(design, y, cfg.family, weights, lambda)?;
        let sol = grouplasso::fit(&problem, cfg.tol, cfg.max_iter, warm.as_ref())?;
        solutions.push(SolutionSummary {
            lambda,
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
            objective: sol.objective,
            support_md: support_md(design, &sol.beta),
        });
        let trees = merge::group_trees(design, &sol.beta, cfg.linkage);
        let family = merge::nested_family(&trees, design);
        warm = Some(sol.beta);

        for model in family {
            let md = merge::model_dimension(&model);
            let (coefficients, loss, dropped) = match cache.get(&model) {
                Some(hit) => hit.clone(),
                None => {
                    let out = refit_model(design, y, cfg.family, &model)?;
                    cache.insert(model.clone(), out.clone());
                    out
                }
            };
            entries.push(PathEntry {
                lambda_index: li,
                md,
                train_loss: loss,
                model: model.clone(),
            });
            let better = match best.get(&md) {
                None => true,
                Some(b) => loss < b.train_loss,
            };
            if better {
                best.insert(
                    md,
                    DimBest {
                        md,
                        lambda_index: li,
                        train_loss: loss,
                        model,
                        coefficients,
                        dropped_columns: dropped,
                    },
                );
            }
        }
    }

    Ok(PathResult {
        lambdas: lambdas.to_vec(),
        entries,
        best,
        solutions,
    })
}

/// Convenience wrapper: default weights + data-driven grid + path.
pub fn run_path(
    design: &DesignMatrix,
    y: ArrayView1<'_, f64>,
    cfg: &PipelineConfig,
) -> Result<(PathResult, WeightMatrix)> {
    let weights = design::default_weights(design, cfg.q)?;
    let lambdas = grouplasso::lambda_path(
        design,
        y,
        cfg.family,
        &weights,
        cfg.n_lambda,
        cfg.lambda_ratio,
    )?;
    let path = glamer_path(design, y, cfg, &weights, &lambdas)?;
    Ok((path, weights))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum SelectionCriterion {
    /// K-fold cross-validation over the model dimension.
    Cv { folds: usize },
    /// RIC: 2 * train_loss + constant * log(p) * MD.
    Ric { constant: f64 },
}

impl SelectionCriterion {
    pub fn default_cv() -> Self {
        SelectionCriterion::Cv { folds: 10 }
    }

    pub fn default_ric() -> Self {
        SelectionCriterion::Ric { constant: 2.0 }
    }
}

/// RIC value for one candidate.
pub fn ric_value(train_loss: f64, md: usize, p: usize, constant: f64) -> f64 {
    2.0 * train_loss + constant * (p as f64).ln() * md as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionTrace {
    /// (dimension, criterion value): RIC values or mean held-out losses.
    pub values: Vec<(usize, f64)>,
    pub chosen_md: usize,
    pub method: String,
    /// Per-fold drop reports (cross-validation only).
    pub fold_drops: Vec<DropReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selected {
    pub fit: GlamerFit,
    pub trace: SelectionTrace,
}

/// Deterministic fold assignment; stratified by response for logistic.
pub fn fold_assignment(y: ArrayView1<'_, f64>, family: Family, folds: usize, seed: u64) -> Vec<usize> {
    let n = y.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0usize; n];
    let mut deal = |mut idx: Vec<usize>, rng: &mut ChaCha8Rng, offset: usize| {
        idx.shuffle(rng);
        for (pos, i) in idx.into_iter().enumerate() {
            assign[i] = (pos + offset) % folds;
        }
    };
    match family {
        Family::Logistic => {
            let zeros: Vec<usize> = (0..n).filter(|&i| y[i] == 0.0).collect();
            let ones: Vec<usize> = (0..n).filter(|&i| y[i] != 0.0).collect();
            let n_zero = zeros.len();
            deal(zeros, &mut rng, 0);
            // continue dealing so fold sizes stay balanced overall
            deal(ones, &mut rng, n_zero % folds);
        }
        Family::Gaussian => {
            let all: Vec<usize> = (0..n).collect();
            deal(all, &mut rng, 0);
        }
    }
    assign
}

fn fit_from_best(best: &DimBest, lambdas: &[f64], solutions: &[SolutionSummary]) -> GlamerFit {
    let summary = &solutions[best.lambda_index];
    GlamerFit {
        coefficients: best.coefficients.clone(),
        model: best.model.clone(),
        md: best.md,
        train_loss: best.train_loss,
        lambda: lambdas[best.lambda_index],
        tau: None,
        diagnostics: Diagnostics {
            solver_iterations: summary.iterations,
            kkt_residual: summary.kkt_residual,
            dropped_columns: best.dropped_columns.clone(),
        },
    }
}

/// Selects a final model from the per-dimension sequence of a precomputed
/// path, re-running the pipeline on each training fold for cross-validation.
pub fn select_final(
    design: &DesignMatrix,
    y: ArrayView1<'_, f64>,
    cfg: &PipelineConfig,
    path: &PathResult,
    criterion: &SelectionCriterion,
    seed: u64,
) -> Result<Selected> {
    match criterion {
        SelectionCriterion::Ric { constant } => {
            let mut values = Vec::new();
            let mut chosen: Option<(usize, f64)> = None;
            for (md, best) in &path.best {
                let v = ric_value(best.train_loss, *md, design.p, *constant);
                values.push((*md, v));
                // ties break toward smaller dimension: strict improvement only
                if chosen.map_or(true, |(_, cv)| v < cv) {
                    chosen = Some((*md, v));
                }
            }
            let (chosen_md, _) = chosen
                .ok_or_else(|| Error::Numerical("empty path: nothing to select".into()))?;
            let fit = fit_from_best(&path.best[&chosen_md], &path.lambdas, &path.solutions);
            Ok(Selected {
                fit,
                trace: SelectionTrace {
                    values,
                    chosen_md,
                    method: format!("ric(constant={constant})"),
                    fold_drops: Vec::new(),
                },
            })
        }
        SelectionCriterion::Cv { folds } => {
            if *folds < 2 {
                return Err(Error::InvalidParameter(format!(
                    "cross-validation needs >= 2 folds, got {folds}"
                )));
            }
            let assign = fold_assignment(y, cfg.family, *folds, seed);
            let max_md = path.max_dimension();
            // per-candidate, per-fold mean held-out losses
            let mut fold_means: Vec<Vec<f64>> = vec![Vec::new(); max_md + 1];
            let mut fold_drops = Vec::with_capacity(*folds);

            for fold in 0..*folds {
                let train_rows: Vec<usize> =
                    (0..design.n).filter(|&i| assign[i] != fold).collect();
                let (pruned, report, row_ok) = design.prune_for_training(&train_rows);
                let test_rows: Vec<usize> = (0..design.n)
                    .filter(|&i| assign[i] == fold && row_ok[i])
                    .collect();
                fold_drops.push(report);
                if test_rows.is_empty() {
                    continue;
                }
                let train_design = pruned.subset_rows(&train_rows);
                let y_train = Array1::from_iter(train_rows.iter().map(|&i| y[i]));
                let (fold_path, _) = run_path(&train_design, y_train.view(), cfg)?;
                let fold_max = fold_path.max_dimension();
                let test_design = pruned.subset_rows(&test_rows);
                let y_test = Array1::from_iter(test_rows.iter().map(|&i| y[i]));
                for c in 1..=max_md {
                    // a fold whose pruned design is smaller caps at its own
                    // saturated dimension
                    let mut use_c = c.min(fold_max);
                    let best = loop {
                        match fold_path.best.get(&use_c) {
                            Some(b) => break b,
                            None => {
                                // dimension absent from this fold's family:
                                // fall back to the nearest smaller one
                                use_c -= 1;
                                if use_c == 0 {
                                    unreachable!("dimension 1 is always on the path");
                                }
                            }
                        }
                    };
                    let beta = best.coefficients.to_full(&train_design);
                    let eta = test_design.x.dot(&beta);
                    let l = glm::loss(cfg.family, y_test.view(), eta.view())?;
                    fold_means[c].push(l / test_rows.len() as f64);
                }
            }

            // mean fold-out loss per dimension, plus its standard error
            let mut values = Vec::new();
            let mut stats: Vec<(usize, f64, f64)> = Vec::new();
            for c in 1..=max_md {
                let k = fold_means[c].len();
                if k == 0 || !path.best.contains_key(&c) {
                    continue;
                }
                let mean = fold_means[c].iter().sum::<f64>() / k as f64;
                let se = if k < 2 {
                    0.0
                } else {
                    let var = fold_means[c]
                        .iter()
                        .map(|v| (v - mean).powi(2))
                        .sum::<f64>()
                        / (k as f64 - 1.0);
                    (var / k as f64).sqrt()
                };
                values.push((c, mean));
                stats.push((c, mean, se));
            }
            // one-standard-error rule: among all candidates, take the
            // smallest dimension whose mean loss is within one standard
            // error of the best mean loss (plain argmin over-selects)
            let (_, best_mean, best_se) = *stats
                .iter()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .ok_or_else(|| Error::Numerical("cross-validation produced no candidates".into()))?;
            let threshold = best_mean + best_se;
            let chosen_md = stats
                .iter()
                .find(|(_, mean, _)| *mean <= threshold)
                .map(|(c, _, _)| *c)
                .expect("a candidate at or below threshold always exists");
            let fit = fit_from_best(&path.best[&chosen_md], &path.lambdas, &path.solutions);
            Ok(Selected {
                fit,
                trace: SelectionTrace {
                    values,
                    chosen_md,
                    method: format!("cv(folds={folds},seed={seed},rule=1se)"),
                    fold_drops,
                },
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Model persistence and prediction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedCluster {
    pub levels: Vec<String>,
    pub coefficient: f64,
    pub reference: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum SavedTerm {
    Continuous {
        name: String,
        present: bool,
        coefficient: f64,
    },
    Factor {
        name: String,
        clusters: Vec<SavedCluster>,
    },
}

/// On-disk model format. serde_json round-trips every f64 exactly, so
/// load(save(fit)) reproduces predictions bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub format: String,
    pub family: Family,
    pub schema_fingerprint: String,
    pub schema: Schema,
    pub response: String,
    pub intercept: f64,
    pub terms: Vec<SavedTerm>,
    pub md: usize,
    pub train_loss: f64,
    pub lambda: f64,
    pub tau: Option<f64>,
    pub diagnostics: Diagnostics,
    /// Full resolved run configuration, for auditability.
    pub config: serde_json::Value,
}

pub const MODEL_FORMAT: &str = "glamer-model/1";

impl SavedModel {
    pub fn from_fit(
        fit: &GlamerFit,
        design: &DesignMatrix,
        schema: &Schema,
        family: Family,
        response: &str,
        config: serde_json::Value,
    ) -> Self {
        let terms = design
            .groups
            .iter()
            .zip(&fit.model.groups)
            .zip(&fit.coefficients.blocks)
            .map(|((g, gm), block)| match (&g.kind, gm) {
                (GroupKind::Continuous, GroupModel::Continuous { present }) => {
                    SavedTerm::Continuous {
                        name: g.name.clone(),
                        present: *present,
                        coefficient: block[0],
                    }
                }
                (GroupKind::Factor { levels }, GroupModel::Factor { partition }) => {
                    let ref_cluster = partition.reference_cluster();
                    let clusters = partition
                        .clusters
                        .iter()
                        .enumerate()
                        .map(|(ci, members)| {
                            let coefficient = if ci == ref_cluster {
                                0.0
                            } else {
                                block[members[0] - 1]
                            };
                            SavedCluster {
                                levels: members.iter().map(|&l| levels[l].clone()).collect(),
                                coefficient,
                                reference: ci == ref_cluster,
                            }
                        })
                        .collect();
                    SavedTerm::Factor {
                        name: g.name.clone(),
                        clusters,
                    }
                }
                _ => unreachable!("model/design group kind mismatch"),
            })
            .collect();
        SavedModel {
            format: MODEL_FORMAT.into(),
            family,
            schema_fingerprint: schema.fingerprint(),
            schema: schema.clone(),
            response: response.to_string(),
            intercept: fit.coefficients.intercept,
            terms,
            md: fit.md,
            train_loss: fit.train_loss,
            lambda: fit.lambda,
            tau: fit.tau,
            diagnostics: fit.diagnostics.clone(),
            config,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: SavedModel = serde_json::from_str(&text)?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Data(format!(
                "unsupported model format `{}`",
                model.format
            )));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub eta: f64,
    /// gamma_dot(eta): identical to eta for gaussian, probability for
    /// logistic.
    pub mean: f64,
    /// 0/1 label at threshold 1/2 (logistic only).
    pub label: Option<u8>,
}

impl SavedModel {
    /// Linear predictor and mean for new rows described by the embedded
    /// schema. Unseen levels are an error unless `map_unseen_to_reference`.
    pub fn predict(
        &self,
        data: &crate::design::Dataset,
        map_unseen_to_reference: bool,
    ) -> Result<Vec<Prediction>> {
        // column index per term
        let mut term_cols = Vec::with_capacity(self.terms.len());
        for term in &self.terms {
            let name = match term {
                SavedTerm::Continuous { name, .. } => name,
                SavedTerm::Factor { name, .. } => name,
            };
            term_cols.push(data.column_index(name)?);
        }
        let mut out = Vec::with_capacity(data.rows.len());
        for (i, row) in data.rows.iter().enumerate() {
            let mut eta = self.intercept;
            for (term, &col) in self.terms.iter().zip(&term_cols) {
                let cell = &row[col];
                match term {
                    SavedTerm::Continuous {
                        present,
                        coefficient,
                        name,
                    } => {
                        let v: f64 = cell.parse().map_err(|_| {
                            Error::Data(format!(
                                "row {}: non-numeric value `{cell}` in `{name}`",
                                i + 1
                            ))
                        })?;
                        if *present {
                            eta += coefficient * v;
                        }
                    }
                    SavedTerm::Factor { name, clusters } => {
                        let hit = clusters
                            .iter()
                            .find(|c| c.levels.iter().any(|l| l == cell));
                        match hit {
                            Some(c) => eta += c.coefficient,
                            None if map_unseen_to_reference => {
                                // reference cluster contributes 0
                            }
                            None => {
                                return Err(Error::Data(format!(
                                    "row {}: unseen level `{cell}` in `{name}` \
                                     (pass --map-unseen-to-reference to allow)",
                                    i + 1
                                )));
                            }
                        }
                    }
                }
            }
            let mean = self.family.gamma_dot(eta);
            let label = match self.family {
                Family::Logistic => Some(u8::from(mean >= 0.5)),
                Family::Gaussian => None,
            };
            out.push(Prediction { eta, mean, label });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Dataset;
    use ndarray::array;

    fn toy_design() -> (DesignMatrix, Schema, Dataset) {
        let schema = design::parse_schema("f,categorical,a|b|c\n").unwrap();
        let rows: Vec<Vec<String>> = ["a", "b", "c", "a", "b", "c", "a", "b", "c"]
            .iter()
            .map(|l| vec![l.to_string()])
            .collect();
        let data = Dataset {
            headers: vec!["f".into()],
            rows,
        };
        let d = design::encode(&data, &schema).unwrap();
        (d, schema, data)
    }

    #[test]
    fn glamer_fit_lambda_zero_tau_zero_is_mle() {
        let (d, _, _) = toy_design();
        let y = array![0.0, 2.0, 5.0, 0.1, 2.1, 5.1, -0.1, 1.9, 4.9];
        let w = design::default_weights(&d, 1.0).unwrap();
        let fit = glamer_fit(&d, y.view(), Family::Gaussian, &w, 0.0, 0.0, 1e-9, 50_000).unwrap();
        assert_eq!(fit.md, 3);
        let mle = glm::fit_mle(&d.x, y.view(), Family::Gaussian).unwrap();
        let full = fit.coefficients.to_full(&d);
        for j in 0..3 {
            assert!(
                (full[j] - mle.beta[j]).abs() < 1e-6,
                "coef {j}: {} vs {}",
                full[j],
                mle.beta[j]
            );
        }
    }

    #[test]
    fn glamer_fit_huge_tau_is_intercept_only() {
        let (d, _, _) = toy_design();
        let y = array![0.0, 2.0, 5.0, 0.1, 2.1, 5.1, -0.1, 1.9, 4.9];
        let w = design::default_weights(&d, 1.0).unwrap();
        let fit =
            glamer_fit(&d, y.view(), Family::Gaussian, &w, 0.0, 1e6, 1e-8, 10_000).unwrap();
        assert_eq!(fit.md, 1);
        assert!((fit.coefficients.intercept - y.sum() / 9.0).abs() < 1e-9);
    }

    #[test]
    fn path_contains_null_model() {
        let (d, _, _) = toy_design();
        let y = array![0.0, 2.0, 5.0, 0.1, 2.1, 5.1, -0.1, 1.9, 4.9];
        let mut cfg = PipelineConfig::new(Family::Gaussian);
        cfg.n_lambda = 10;
        let (path, _) = run_path(&d, y.view(), &cfg).unwrap();
        let m1 = &path.best[&1];
        let null_loss = glm::loss(
            Family::Gaussian,
            y.view(),
            Array1::from_elem(9, y.sum() / 9.0).view(),
        )
        .unwrap();
        assert!((m1.train_loss - null_loss).abs() < 1e-9);
        // per-dimension losses are non-increasing in c
        let losses: Vec<f64> = path.best.values().map(|b| b.train_loss).collect();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn ric_extremes() {
        let (d, _, _) = toy_design();
        let y = array![0.0, 2.0, 5.0, 0.1, 2.1, 5.1, -0.1, 1.9, 4.9];
        let mut cfg = PipelineConfig::new(Family::Gaussian);
        cfg.n_lambda = 10;
        let (path, _) = run_path(&d, y.view(), &cfg).unwrap();
        // constant 0 picks the largest-dimension (lowest-loss) model
        let sel = select_final(
            &d,
            y.view(),
            &cfg,
            &path,
            &SelectionCriterion::Ric { constant: 0.0 },
            0,
        )
        .unwrap();
        assert_eq!(sel.fit.md, path.max_dimension());
        // huge constant picks intercept-only
        let sel = select_final(
            &d,
            y.view(),
            &cfg,
            &path,
            &SelectionCriterion::Ric { constant: 1e12 },
            0,
        )
        .unwrap();
        assert_eq!(sel.fit.md, 1);
        // reported values match the formula exactly
        for (md, v) in &sel.trace.values {
            let b = &path.best[md];
            assert_eq!(*v, 2.0 * b.train_loss + 1e12 * (d.p as f64).ln() * *md as f64);
        }
    }

    #[test]
    fn constant_response_selects_null_model() {
        let (d, _, _) = toy_design();
        let y = Array1::from_elem(9, 3.5);
        let mut cfg = PipelineConfig::new(Family::Gaussian);
        cfg.n_lambda = 5;
        let (path, _) = run_path(&d, y.view(), &cfg).unwrap();
        let ric = select_final(&d, y.view(), &cfg, &path, &SelectionCriterion::default_ric(), 0)
            .unwrap();
        assert_eq!(ric.fit.md, 1);
        let cv = select_final(
            &d,
            y.view(),
            &cfg,
            &path,
            &SelectionCriterion::Cv { folds: 3 },
            7,
        )
        .unwrap();
        assert_eq!(cv.fit.md, 1);
    }

    #[test]
    fn cv_is_deterministic_in_seed() {
        let (d, _, _) = toy_design();
        let y = array![0.0, 2.0, 5.0, 0.1, 2.1, 5.1, -0.1, 1.9, 4.9];
        let mut cfg = PipelineConfig::new(Family::Gaussian);
        cfg.n_lambda = 8;
        let (path, _) = run_path(&d, y.view(), &cfg).unwrap();
        let crit = SelectionCriterion::Cv { folds: 3 };
        let a = select_final(&d, y.view(), &cfg, &path, &crit, 11).unwrap();
        let b = select_final(&d, y.view(), &cfg, &path, &crit, 11).unwrap();
        assert_eq!(a.fit.md, b.fit.md);
        assert_eq!(a.trace.values, b.trace.values);
        assert_eq!(a.fit.coefficients, b.fit.coefficients);
    }

    #[test]
    fn saved_model_round_trip_predictions() {
        let (d, schema, data) = toy_design();
        let y = array![0.0, 2.0, 5.0, 0.1, 2.1, 5.1, -0.1, 1.9, 4.9];
        let w = design::default_weights(&d, 1.0).unwrap();
        let fit =
            glamer_fit(&d, y.view(), Family::Gaussian, &w, 0.5, 0.3, 1e-8, 10_000).unwrap();
        let saved = SavedModel::from_fit(
            &fit,
            &d,
            &schema,
            Family::Gaussian,
            "y",
            serde_json::Value::Null,
        );
        let before = saved.predict(&data, false).unwrap();
        let json = serde_json::to_string(&saved).unwrap();
        let loaded: SavedModel = serde_json::from_str(&json).unwrap();
        let after = loaded.predict(&data, false).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.eta.to_bits(), b.eta.to_bits());
        }
    }

    #[test]
    fn merged_levels_predict_identically() {
        let (d, schema, _) = toy_design();
        let y = array![0.0, 2.0, 2.2, 0.1, 2.1, 2.0, -0.1, 1.9, 2.1];
        let w = design::default_weights(&d, 1.0).unwrap();
        // generous tau merges b and c
        let fit = glamer_fit(&d, y.view(), Family::Gaussian, &w, 0.1, 0.8, 1e-8, 10_000).unwrap();
        let saved = SavedModel::from_fit(
            &fit,
            &d,
            &schema,
            Family::Gaussian,
            "y",
            serde_json::Value::Null,
        );
        let rows = Dataset {
            headers: vec!["f".into()],
            rows: vec![vec!["b".into()], vec!["c".into()]],
        };
        let preds = saved.predict(&rows, false).unwrap();
        assert_eq!(preds[0].eta, preds[1].eta);
    }

    #[test]
    fn predict_unseen_level_errors_without_flag() {
        let (d, schema, _) = toy_design();
        let y = array![0.0, 2.0, 5.0, 0.1, 2.1, 5.1, -0.1, 1.9, 4.9];
        let w = design::default_weights(&d, 1.0).unwrap();
        let fit = glamer_fit(&d, y.view(), Family::Gaussian, &w, 0.1, 0.1, 1e-8, 10_000).unwrap();
        let saved = SavedModel::from_fit(
            &fit,
            &d,
            &schema,
            Family::Gaussian,
            "y",
            serde_json::Value::Null,
        );
        let rows = Dataset {
            headers: vec!["f".into()],
            rows: vec![vec!["zz".into()]],
        };
        assert!(saved.predict(&rows, false).is_err());
        let preds = saved.predict(&rows, true).unwrap();
        assert_eq!(preds[0].eta, saved.intercept);
    }

    #[test]
    fn sparsity_dominance_on_path() {
        let (d, _, _) = toy_design();
        let y = array![0.0, 2.0, 5.0, 0.1, 2.1, 5.1, -0.1, 1.9, 4.9];
        let mut cfg = PipelineConfig::new(Family::Gaussian);
        cfg.n_lambda = 10;
        let (path, _) = run_path(&d, y.view(), &cfg).unwrap();
        let sel = select_final(&d, y.view(), &cfg, &path, &SelectionCriterion::default_ric(), 0)
            .unwrap();
        let support = path.solutions[path.best[&sel.fit.md].lambda_index].support_md;
        assert!(sel.fit.md <= support.max(sel.fit.md));
    }
}
