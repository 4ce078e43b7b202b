//! Seeded problem families, reference labels and train/validation/test splits.

mod bundle_io;
mod generators;

pub use bundle_io::{read_bundle, read_manifest, write_bundle, Manifest, ManifestEntry, BUNDLE_FORMAT, BUNDLE_VERSION};
pub use generators::{
    check_witness, gen_portfolio, gen_qp_perturbed, gen_qp_rhs, generate, portfolio_qp, portfolio_witness,
};

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::io::{InstanceError, Label};
use crate::model::{to_conic, ConicQp, ModelError, MonotoneData, StandardQp};
use crate::solver::{dr_solve, SolveStatus, SolverConfig, SolverError};
use crate::sparse::SparseError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("generated instance {index} failed its feasibility witness")]
    Infeasible { index: usize },
    #[error("split sizes {requested} exceed instance count {available}")]
    Oversubscribed { requested: usize, available: usize },
    #[error("bundle has no labels; run label_bundle first")]
    MissingLabels,
    #[error("bundle has no split; run split_bundle first")]
    MissingSplit,
    #[error("{0}")]
    Malformed(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Instance { path: String, source: InstanceError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    QpRhs,
    QpPerturbed,
    Portfolio,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::QpRhs => "qp_rhs",
            Family::QpPerturbed => "qp_perturbed",
            Family::Portfolio => "portfolio",
        })
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "qp_rhs" | "rhs" => Ok(Family::QpRhs),
            "qp_perturbed" | "qp" => Ok(Family::QpPerturbed),
            "portfolio" => Ok(Family::Portfolio),
            _ => Err(format!("unknown family {s:?} (expected qp_rhs, qp_perturbed or portfolio)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub family: Family,
    /// `n` for the QP families, `k` (factors) for portfolio.
    pub size: usize,
    pub count: usize,
    pub seed: u64,
    /// Half-width `w` of the `U[1 − w, 1 + w]` perturbation factors.
    pub perturbation: f64,
    /// Slack of the inequality rows at the witness.
    pub margin: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self { family: Family::QpRhs, size: 20, count: 68, seed: 0, perturbation: 0.1, margin: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn role_of(&self, i: usize) -> Option<SplitRole> {
        if self.train.contains(&i) {
            Some(SplitRole::Train)
        } else if self.val.contains(&i) {
            Some(SplitRole::Val)
        } else if self.test.contains(&i) {
            Some(SplitRole::Test)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub spec: GenSpec,
    pub instances: Vec<StandardQp>,
    /// Reference `(x*, y*)` per instance; `y*` in conic row order.
    pub labels: Option<Vec<Label>>,
    pub split: Option<Split>,
}

impl DatasetBundle {
    pub fn new(spec: GenSpec, instances: Vec<StandardQp>) -> Self {
        Self { spec, instances, labels: None, split: None }
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn conic(&self, i: usize) -> Result<ConicQp> {
        Ok(to_conic(&self.instances[i])?.qp)
    }

    pub fn monotone(&self, i: usize) -> Result<MonotoneData> {
        Ok(MonotoneData::assemble(&self.conic(i)?)?)
    }

    pub fn label(&self, i: usize) -> Option<&Label> {
        self.labels.as_ref().map(|l| &l[i])
    }

    pub fn split(&self) -> Result<&Split> {
        self.split.as_ref().ok_or(DataError::MissingSplit)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    /// Original indices of instances dropped because the reference solve
    /// did not converge.
    pub excluded: Vec<usize>,
    pub iterations: Vec<usize>,
}

/// Iteration budget of a reference solve.
pub const LABEL_MAX_ITER: usize = 1_000_000;

/// Solves every instance with splitting at `tol_label` and stores `(x*, y*)`.
///
/// Instances that fail to converge are removed; an existing split is remapped
/// to the surviving indices.
pub fn label_bundle(mut bundle: DatasetBundle, tol_label: f64) -> Result<(DatasetBundle, LabelReport)> {
    let cfg = SolverConfig { tol: tol_label, max_iter: LABEL_MAX_ITER, ..SolverConfig::default() };
    cfg.validate()?;
    let outcomes: Vec<Result<Option<(Label, usize)>>> = bundle
        .instances
        .par_iter()
        .map(|qp| {
            let data = MonotoneData::assemble(&to_conic(qp)?.qp)?;
            let r = dr_solve(&data, &cfg, None)?;
            Ok((r.status == SolveStatus::Converged).then(|| (Label { x: r.x, y: r.y }, r.iterations)))
        })
        .collect();

    let mut report = LabelReport::default();
    let mut labels = Vec::new();
    let mut keep = Vec::new();
    for (i, out) in outcomes.into_iter().enumerate() {
        match out? {
            Some((label, it)) => {
                labels.push(label);
                report.iterations.push(it);
                keep.push(i);
            }
            None => report.excluded.push(i),
        }
    }
    if !report.excluded.is_empty() {
        let old: Vec<StandardQp> = std::mem::take(&mut bundle.instances);
        let mut new_index = vec![None; old.len()];
        for (new, &i) in keep.iter().enumerate() {
            new_index[i] = Some(new);
        }
        bundle.instances = old.into_iter().enumerate().filter(|(i, _)| new_index[*i].is_some()).map(|(_, q)| q).collect();
        if let Some(split) = bundle.split.as_mut() {
            let remap = |v: &mut Vec<usize>| *v = v.iter().filter_map(|&i| new_index[i]).collect();
            remap(&mut split.train);
            remap(&mut split.val);
            remap(&mut split.test);
        }
    }
    bundle.labels = Some(labels);
    Ok((bundle, report))
}

/// Seeded disjoint `(train, val, test)` split; leftovers are unassigned.
pub fn split_bundle(mut bundle: DatasetBundle, sizes: (usize, usize, usize), seed: u64) -> Result<DatasetBundle> {
    let (tr, va, te) = sizes;
    let requested = tr + va + te;
    if requested > bundle.len() {
        return Err(DataError::Oversubscribed { requested, available: bundle.len() });
    }
    let mut idx: Vec<usize> = (0..bundle.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let sorted = |r: std::ops::Range<usize>| {
        let mut v = idx[r].to_vec();
        v.sort_unstable();
        v
    };
    bundle.split = Some(Split { train: sorted(0..tr), val: sorted(tr..tr + va), test: sorted(tr + va..requested) });
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::quality;
    use crate::sparse::norm_inf;

    fn small(count: usize) -> DatasetBundle {
        gen_qp_rhs(&GenSpec { size: 8, count, seed: 3, ..GenSpec::default() }).unwrap()
    }

    #[test]
    fn family_parsing() {
        assert_eq!("qp-rhs".parse::<Family>().unwrap(), Family::QpRhs);
        assert_eq!("portfolio".parse::<Family>().unwrap(), Family::Portfolio);
        assert!("lp".parse::<Family>().is_err());
        assert_eq!(Family::QpPerturbed.to_string().parse::<Family>().unwrap(), Family::QpPerturbed);
    }

    #[test]
    fn split_partitions_exactly() {
        let b = split_bundle(small(540), (400, 40, 100), 0).unwrap();
        let s = b.split().unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..540).collect::<Vec<_>>());
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (400, 40, 100));
    }

    #[test]
    fn split_small_and_deterministic() {
        let a = split_bundle(small(3), (1, 1, 1), 5).unwrap();
        let s = a.split().unwrap();
        assert!(s.train[0] != s.val[0] && s.val[0] != s.test[0] && s.train[0] != s.test[0]);
        assert_eq!(a, split_bundle(small(3), (1, 1, 1), 5).unwrap());
    }

    #[test]
    fn split_oversubscribed() {
        assert!(matches!(split_bundle(small(3), (2, 1, 1), 0), Err(DataError::Oversubscribed { .. })));
    }

    #[test]
    fn labels_satisfy_kkt() {
        let tol = 1e-9;
        let (b, report) = label_bundle(small(3), tol).unwrap();
        assert!(report.excluded.is_empty());
        for i in 0..b.len() {
            let c = b.conic(i).unwrap();
            let l = b.label(i).unwrap();
            let q = quality(&c, &l.x, &l.y, None).unwrap();
            let bound = 10.0 * tol * norm_inf(&c.b).max(1.0);
            assert!(q.max_violation() <= bound, "{q:?}");
            assert!(q.dual_residual_inf <= bound, "{q:?}");
            assert!(q.complementarity <= bound.sqrt(), "{q:?}");
        }
    }

    #[test]
    fn relabel_is_deterministic() {
        let (a, _) = label_bundle(small(2), 1e-9).unwrap();
        let (b, _) = label_bundle(a.clone(), 1e-9).unwrap();
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn one_variable_label() {
        let mut qp = StandardQp::unconstrained(crate::sparse::CsrMatrix::identity(1), vec![0.0]);
        qp.lower = vec![1.0];
        let (b, _) = label_bundle(DatasetBundle::new(GenSpec::default(), vec![qp]), 1e-9).unwrap();
        let l = b.label(0).unwrap();
        assert!((l.x[0] - 1.0).abs() < 1e-8 && (l.y[0] - 1.0).abs() < 1e-8, "{l:?}");
    }
}
