//! Level merging: converts a Group Lasso estimate into per-factor level
//! partitions, either by chaining adjacent sorted coefficients whose gap is
//! at most tau or by cutting a single/complete-linkage dendrogram. Also
//! builds the merged design Z and the nested model family used by the
//! lambda-net pipeline.
//!
//! Level 0 is always the reference; it enters the merging with a virtual
//! coefficient of exactly 0, so "merge with the reference" is just gap
//! chaining.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, GroupKind};
use crate::error::{Error, Result};
use crate::grouplasso::GroupedCoefficients;

/// A partition of factor levels `{0, 1, ..., p_k}` in canonical form: each
/// cluster sorted ascending, clusters ordered by their smallest level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    pub clusters: Vec<Vec<usize>>,
}

impl Partition {
    pub fn singletons(n_levels: usize) -> Self {
        Partition {
            clusters: (0..n_levels).map(|l| vec![l]).collect(),
        }
    }

    pub fn merged(n_levels: usize) -> Self {
        Partition {
            clusters: vec![(0..n_levels).collect()],
        }
    }

    pub fn canonicalize(mut clusters: Vec<Vec<usize>>) -> Self {
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.sort_by_key(|c| c[0]);
        Partition { clusters }
    }

    pub fn n_levels(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).sum()
    }

    /// Index of the cluster containing the reference level 0.
    pub fn reference_cluster(&self) -> usize {
        self.clusters
            .iter()
            .position(|c| c.contains(&0))
            .expect("partition must cover level 0")
    }

    /// Cluster index of each level.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_levels()];
        for (ci, c) in self.clusters.iter().enumerate() {
            for &l in c {
                out[l] = ci;
            }
        }
        out
    }
}

/// A model M = (P_1, ..., P_r): one level partition per factor, a presence
/// flag per continuous variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupModel {
    Factor { partition: Partition },
    Continuous { present: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartitionModel {
    pub groups: Vec<GroupModel>,
}

impl PartitionModel {
    /// The saturated model: every level its own cluster, every continuous
    /// variable present.
    pub fn full(design: &DesignMatrix) -> Self {
        PartitionModel {
            groups: design
                .groups
                .iter()
                .map(|g| match &g.kind {
                    GroupKind::Factor { levels } => GroupModel::Factor {
                        partition: Partition::singletons(levels.len()),
                    },
                    GroupKind::Continuous => GroupModel::Continuous { present: true },
                })
                .collect(),
        }
    }

    /// The intercept-only model: all levels merged, continuous absent.
    pub fn null(design: &DesignMatrix) -> Self {
        PartitionModel {
            groups: design
                .groups
                .iter()
                .map(|g| match &g.kind {
                    GroupKind::Factor { levels } => GroupModel::Factor {
                        partition: Partition::merged(levels.len()),
                    },
                    GroupKind::Continuous => GroupModel::Continuous { present: false },
                })
                .collect(),
        }
    }
}

/// Model dimension: 1 (intercept) + retained continuous + per factor
/// (#clusters - 1).
pub fn model_dimension(model: &PartitionModel) -> usize {
    1 + model
        .groups
        .iter()
        .map(|g| match g {
            GroupModel::Factor { partition } => partition.clusters.len() - 1,
            GroupModel::Continuous { present } => usize::from(*present),
        })
        .sum::<usize>()
}

/// Chains adjacent sorted coefficients (virtual 0 inserted for the reference
/// level) whose gap is at most tau into common clusters.
pub fn threshold_merge(beta_k: &[f64], tau: f64) -> Partition {
    debug_assert!(tau >= 0.0);
    // (value, level); level 0 is the reference with coefficient 0
    let mut vals: Vec<(f64, usize)> = Vec::with_capacity(beta_k.len() + 1);
    vals.push((0.0, 0));
    for (j, &b) in beta_k.iter().enumerate() {
        vals.push((b, j + 1));
    }
    // stable sort by value, ties by level index
    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut clusters: Vec<Vec<usize>> = vec![vec![vals[0].1]];
    for w in vals.windows(2) {
        let gap = w[1].0 - w[0].0;
        if gap <= tau {
            clusters.last_mut().unwrap().push(w[1].1);
        } else {
            clusters.push(vec![w[1].1]);
        }
    }
    Partition::canonicalize(clusters)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
}

impl std::str::FromStr for Linkage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            other => Err(Error::InvalidParameter(format!(
                "unknown linkage `{other}` (expected single|complete)"
            ))),
        }
    }
}

/// One agglomerative merge: the two clusters are identified by their
/// smallest member levels; heights are non-decreasing along the sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Full merge tree of the `p_k + 1` coefficient values of one factor
/// (virtual 0 for the reference included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<MergeStep>,
}

/// Agglomerative clustering of the factor's coefficient values under
/// absolute-difference dissimilarity.
pub fn linkage_dendrogram(beta_k: &[f64], linkage: Linkage) -> Dendrogram {
    let n_leaves = beta_k.len() + 1;
    let mut values = vec![0.0_f64];
    values.extend_from_slice(beta_k);
    // active clusters: (representative = min level, members)
    let mut clusters: Vec<Vec<usize>> = (0..n_leaves).map(|l| vec![l]).collect();
    let mut merges = Vec::with_capacity(n_leaves - 1);
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let mut d = match linkage {
                    Linkage::Single => f64::INFINITY,
                    Linkage::Complete => 0.0,
                };
                for &a in &clusters[i] {
                    for &b in &clusters[j] {
                        let dd = (values[a] - values[b]).abs();
                        d = match linkage {
                            Linkage::Single => d.min(dd),
                            Linkage::Complete => d.max(dd),
                        };
                    }
                }
                // deterministic tie-break: first (i, j) pair wins
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let (height, i, j) = best.unwrap();
        merges.push(MergeStep {
            a: clusters[i][0],
            b: clusters[j][0],
            height,
        });
        let moved = clusters.remove(j);
        clusters[i].extend(moved);
        clusters[i].sort_unstable();
    }
    Dendrogram { n_leaves, merges }
}

/// Partition obtained by applying the first `t` merges of the dendrogram.
pub fn prefix_partition(dendro: &Dendrogram, t: usize) -> Partition {
    let mut parent: Vec<usize> = (0..dendro.n_leaves).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for step in dendro.merges.iter().take(t) {
        let ra = find(&mut parent, step.a);
        let rb = find(&mut parent, step.b);
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for l in 0..dendro.n_leaves {
        let root = find(&mut parent, l);
        map.entry(root).or_default().push(l);
    }
    Partition::canonicalize(map.into_values().collect())
}

/// Partition formed by all merges with height <= tau.
pub fn cut(dendro: &Dendrogram, tau: f64) -> Partition {
    let t = dendro.merges.iter().take_while(|m| m.height <= tau).count();
    prefix_partition(dendro, t)
}

/// Per-group merge structure feeding the nested family: a dendrogram for
/// factors, a pseudo-height `|beta_k|` for continuous variables (present
/// above the cut, absent below).
#[derive(Debug, Clone)]
pub enum GroupTree {
    Factor(Dendrogram),
    Continuous { height: f64 },
}

/// Builds the merge structure of every group from a Group Lasso estimate.
pub fn group_trees(
    design: &DesignMatrix,
    beta: &GroupedCoefficients,
    linkage: Linkage,
) -> Vec<GroupTree> {
    design
        .groups
        .iter()
        .zip(&beta.blocks)
        .map(|(g, block)| match &g.kind {
            GroupKind::Factor { .. } => GroupTree::Factor(linkage_dendrogram(block, linkage)),
            GroupKind::Continuous => GroupTree::Continuous {
                height: block[0].abs(),
            },
        })
        .collect()
}

/// Nested family of models of every dimension from 1 (intercept only) up to
/// the full model, produced by undoing merge events globally in decreasing
/// height order. Ties are undone in deterministic (height, group index,
/// event index) order.
pub fn nested_family(trees: &[GroupTree], design: &DesignMatrix) -> Vec<PartitionModel> {
    // event = (height, group index, event index within the group)
    let mut events: Vec<(f64, usize, usize)> = Vec::new();
    for (k, tree) in trees.iter().enumerate() {
        match tree {
            GroupTree::Factor(d) => {
                for (e, step) in d.merges.iter().enumerate() {
                    events.push((step.height, k, e));
                }
            }
            GroupTree::Continuous { height } => events.push((*height, k, 0)),
        }
    }
    // decreasing height; within a group later merges are undone first
    events.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(b.2.cmp(&a.2))
    });

    // merges kept per factor; continuous presence flags
    let mut kept: Vec<usize> = trees
        .iter()
        .map(|t| match t {
            GroupTree::Factor(d) => d.merges.len(),
            GroupTree::Continuous { .. } => 0,
        })
        .collect();
    let mut present: Vec<bool> = vec![false; trees.len()];

    let build = |kept: &[usize], present: &[bool]| -> PartitionModel {
        PartitionModel {
            groups: trees
                .iter()
                .enumerate()
                .map(|(k, t)| match t {
                    GroupTree::Factor(d) => GroupModel::Factor {
                        partition: prefix_partition(d, kept[k]),
                    },
                    GroupTree::Continuous { .. } => GroupModel::Continuous {
                        present: present[k],
                    },
                })
                .collect(),
        }
    };

    let mut family = Vec::with_capacity(events.len() + 1);
    family.push(build(&kept, &present));
    for (_, k, _) in &events {
        match &trees[*k] {
            GroupTree::Factor(_) => kept[*k] -= 1,
            GroupTree::Continuous { .. } => present[*k] = true,
        }
        family.push(build(&kept, &present));
    }
    debug_assert_eq!(model_dimension(family.last().unwrap()), design.p);
    family
}

/// Which source columns of X were summed into one Z column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ZColumnSource {
    Intercept,
    Continuous { group: usize },
    Cluster { group: usize, cluster: usize },
}

/// Merged design Z: intercept, retained continuous columns, and one summed
/// dummy column per non-reference cluster of each factor. The cluster
/// containing the reference level is absorbed into the intercept.
#[derive(Debug, Clone)]
pub struct MergedDesign {
    pub z: Array2<f64>,
    pub columns: Vec<ZColumnSource>,
    pub model: PartitionModel,
}

pub fn build_merged_design(design: &DesignMatrix, model: &PartitionModel) -> Result<MergedDesign> {
    if model.groups.len() != design.groups.len() {
        return Err(Error::Dimension(format!(
            "model has {} groups, design has {}",
            model.groups.len(),
            design.groups.len()
        )));
    }
    let mut columns = vec![ZColumnSource::Intercept];
    for (k, (g, gm)) in design.groups.iter().zip(&model.groups).enumerate() {
        match (gm, &g.kind) {
            (GroupModel::Continuous { present }, GroupKind::Continuous) => {
                if *present {
                    columns.push(ZColumnSource::Continuous { group: k });
                }
            }
            (GroupModel::Factor { partition }, GroupKind::Factor { levels }) => {
                if partition.n_levels() != levels.len() {
                    return Err(Error::Dimension(format!(
                        "partition of `{}` covers {} levels, factor has {}",
                        g.name,
                        partition.n_levels(),
                        levels.len()
                    )));
                }
                let ref_cluster = partition.reference_cluster();
                for (ci, _) in partition.clusters.iter().enumerate() {
                    if ci != ref_cluster {
                        columns.push(ZColumnSource::Cluster {
                            group: k,
                            cluster: ci,
                        });
                    }
                }
            }
            _ => {
                return Err(Error::Dimension(format!(
                    "model/design kind mismatch in group `{}`",
                    g.name
                )));
            }
        }
    }

    let mut z = Array2::zeros((design.n, columns.len()));
    z.column_mut(0).fill(1.0);
    for (zi, src) in columns.iter().enumerate() {
        match src {
            ZColumnSource::Intercept => {}
            ZColumnSource::Continuous { group } => {
                let g = &design.groups[*group];
                z.column_mut(zi).assign(&design.x.column(g.cols.start));
            }
            ZColumnSource::Cluster { group, cluster } => {
                let g = &design.groups[*group];
                let GroupModel::Factor { partition } = &model.groups[*group] else {
                    unreachable!()
                };
                for &level in &partition.clusters[*cluster] {
                    // level j > 0 maps to design column cols.start + j - 1
                    debug_assert!(level > 0);
                    let col = g.cols.start + level - 1;
                    let src_col = design.x.column(col).to_owned();
                    let mut dst = z.column_mut(zi);
                    dst += &src_col;
                }
            }
        }
    }
    Ok(MergedDesign {
        z,
        columns,
        model: model.clone(),
    })
}
