//! Algorithm comparison, warm-start evaluation and layer ablation, with
//! table output.

mod table;

pub use table::{emit_report, residual_history_table, ReportFormat, Table};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use table::{fixed, opt, sci};

use crate::datagen::{DataError, DatasetBundle};
use crate::model::quality;
use crate::net::{forward, train, NetError, NetParams, TrainConfig};
use crate::solver::{dr_solve, drgd_solve, warm_start_from_solution, SolveReport, SolveStatus, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;

/// Note carried in the header of every warm-start report.
pub const WARM_START_NOTE: &str = "Warm starts are applied to the built-in Douglas-Rachford solver, not to an \
external conic solver; ratios are internally consistent but not comparable to SCS-based figures.";

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| BenchError::Invalid(e.to_string()))
}

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgRun {
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    pub max_eq: f64,
    pub max_ineq: f64,
}

impl AlgRun {
    fn from_report(r: &SolveReport) -> Self {
        Self {
            status: r.status,
            iterations: r.iterations,
            objective: r.metrics.objective,
            max_eq: r.metrics.max_eq_viol,
            max_ineq: r.metrics.max_ineq_viol,
        }
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub instance: usize,
    /// Plain splitting.
    pub dr: Option<AlgRun>,
    /// Gradient-step splitting at the configured steps per iteration.
    pub drgd: Option<AlgRun>,
    pub error: Option<String>,
    #[serde(skip)]
    pub dr_history: Option<Vec<f64>>,
    #[serde(skip)]
    pub drgd_history: Option<Vec<f64>>,
}

impl ComparisonRow {
    /// `drgd iterations / dr iterations` when both converged.
    pub fn ratio(&self) -> Option<f64> {
        match (&self.dr, &self.drgd) {
            (Some(a), Some(b)) if a.converged() && b.converged() => Some(b.iterations as f64 / a.iterations as f64),
            _ => None,
        }
    }
}

/// Means over the instances where both methods converged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub size: usize,
    pub instances: usize,
    pub converged: usize,
    pub dr: AlgRun,
    pub drgd: AlgRun,
    /// Ratio of mean iterations, DR-GD over DR.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStepRow {
    pub steps: usize,
    pub converged: usize,
    pub mean_iterations: f64,
    pub mean_objective: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub summary: ComparisonSummary,
    pub multistep: Vec<MultiStepRow>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = v.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

fn mean_run<'a>(runs: impl Iterator<Item = &'a AlgRun> + Clone) -> AlgRun {
    AlgRun {
        status: SolveStatus::Converged,
        iterations: mean(runs.clone().map(|r| r.iterations as f64)).round() as usize,
        objective: mean(runs.clone().map(|r| r.objective)),
        max_eq: runs.clone().map(|r| r.max_eq).fold(0.0, f64::max),
        max_ineq: runs.map(|r| r.max_ineq).fold(0.0, f64::max),
    }
}

/// Runs both splitting methods on every instance of `bundle`, then DR-GD once
/// per entry of `steps`. Per-instance failures are recorded and skipped.
pub fn compare(bundle: &DatasetBundle, cfg: &SolverConfig, steps: &[usize], jobs: usize) -> Result<ComparisonReport> {
    cfg.validate()?;
    if steps.contains(&0) {
        return Err(BenchError::Invalid("steps per iteration must be at least 1".into()));
    }
    let run_row = |i: usize| -> ComparisonRow {
        let mut row =
            ComparisonRow { instance: i, dr: None, drgd: None, error: None, dr_history: None, drgd_history: None };
        let data = match bundle.monotone(i) {
            Ok(d) => d,
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        };
        match dr_solve(&data, cfg, None) {
            Ok(r) => {
                row.dr = Some(AlgRun::from_report(&r));
                row.dr_history = r.residual_history;
            }
            Err(e) => row.error = Some(format!("dr: {e}")),
        }
        match drgd_solve(&data, cfg, None) {
            Ok(r) => {
                row.drgd = Some(AlgRun::from_report(&r));
                row.drgd_history = r.residual_history;
            }
            Err(e) => row.error = Some(format!("drgd: {e}")),
        }
        row
    };
    let multi = |s: usize| -> Vec<Option<AlgRun>> {
        let c = SolverConfig { steps_per_iter: s, record_history: false, ..cfg.clone() };
        (0..bundle.len())
            .into_par_iter()
            .map(|i| {
                let data = bundle.monotone(i).ok()?;
                drgd_solve(&data, &c, None).ok().map(|r| AlgRun::from_report(&r))
            })
            .collect()
    };
    let (rows, multi_runs) = pool(jobs)?.install(|| {
        let rows: Vec<ComparisonRow> = (0..bundle.len()).into_par_iter().map(run_row).collect();
        let m: Vec<(usize, Vec<Option<AlgRun>>)> = steps.iter().map(|&s| (s, multi(s))).collect();
        (rows, m)
    });

    let both: Vec<&ComparisonRow> = rows.iter().filter(|r| r.ratio().is_some()).collect();
    let dr = mean_run(both.iter().map(|r| r.dr.as_ref().unwrap()));
    let drgd = mean_run(both.iter().map(|r| r.drgd.as_ref().unwrap()));
    let ratio = mean(both.iter().map(|r| r.drgd.as_ref().unwrap().iterations as f64))
        / mean(both.iter().map(|r| r.dr.as_ref().unwrap().iterations as f64));
    let summary =
        ComparisonSummary { size: bundle.spec.size, instances: rows.len(), converged: both.len(), dr, drgd, ratio };

    let multistep = multi_runs
        .into_iter()
        .map(|(s, runs)| {
            let ok: Vec<&AlgRun> = runs.iter().flatten().filter(|r| r.converged()).collect();
            MultiStepRow {
                steps: s,
                converged: ok.len(),
                mean_iterations: mean(ok.iter().map(|r| r.iterations as f64)),
                mean_objective: mean(ok.iter().map(|r| r.objective)),
                max_violation: ok.iter().map(|r| r.max_eq.max(r.max_ineq)).fold(0.0, f64::max),
            }
        })
        .collect();
    Ok(ComparisonReport { rows, summary, multistep })
}

impl ComparisonReport {
    /// One row per problem size: objective, violations and iterations of each
    /// method, and the iteration ratio.
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&[
            "size",
            "instances",
            "converged",
            "dr_obj",
            "dr_max_eq",
            "dr_max_ineq",
            "dr_iters",
            "drgd_obj",
            "drgd_max_eq",
            "drgd_max_ineq",
            "drgd_iters",
            "ratio",
        ]);
        let s = &self.summary;
        t.push(vec![
            s.size.to_string(),
            s.instances.to_string(),
            s.converged.to_string(),
            fixed(s.dr.objective, 6),
            sci(s.dr.max_eq),
            sci(s.dr.max_ineq),
            s.dr.iterations.to_string(),
            fixed(s.drgd.objective, 6),
            sci(s.drgd.max_eq),
            sci(s.drgd.max_ineq),
            s.drgd.iterations.to_string(),
            fixed(s.ratio, 4),
        ]);
        t
    }

    pub fn instance_table(&self) -> Table {
        let mut t = Table::new(&[
            "instance",
            "dr_status",
            "dr_iters",
            "dr_obj",
            "dr_max_viol",
            "drgd_status",
            "drgd_iters",
            "drgd_obj",
            "drgd_max_viol",
            "ratio",
            "error",
        ]);
        let cells = |r: &Option<AlgRun>| match r {
            Some(a) => vec![
                format!("{:?}", a.status),
                a.iterations.to_string(),
                fixed(a.objective, 6),
                sci(a.max_eq.max(a.max_ineq)),
            ],
            None => vec![String::new(); 4],
        };
        for r in &self.rows {
            let mut row = vec![r.instance.to_string()];
            row.extend(cells(&r.dr));
            row.extend(cells(&r.drgd));
            row.push(opt(r.ratio(), |v| fixed(v, 4)));
            row.push(r.error.clone().unwrap_or_default());
            t.push(row);
        }
        t
    }

    /// Iterations against gradient steps per iteration.
    pub fn multistep_table(&self) -> Table {
        let mut t = Table::new(&["steps", "converged", "mean_iters", "mean_obj", "max_viol"]);
        for r in &self.multistep {
            t.push(vec![
                r.steps.to_string(),
                r.converged.to_string(),
                fixed(r.mean_iterations, 1),
                fixed(r.mean_objective, 6),
                sci(r.max_violation),
            ]);
        }
        t
    }

    pub fn dr_history_table(&self) -> Table {
        residual_history_table(self.rows.iter().filter_map(|r| r.dr_history.as_deref().map(|h| (r.instance, h))))
    }

    pub fn drgd_history_table(&self) -> Table {
        residual_history_table(self.rows.iter().filter_map(|r| r.drgd_history.as_deref().map(|h| (r.instance, h))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartRow {
    pub instance: usize,
    pub cold_status: Option<SolveStatus>,
    pub warm_status: Option<SolveStatus>,
    pub cold_iters: usize,
    pub warm_iters: usize,
    /// Seconds.
    pub cold_time: f64,
    pub warm_time: f64,
    pub inference_time: f64,
    /// Objective and worst violation of the warm-started solution.
    pub objective: f64,
    pub max_violation: f64,
    /// The same for the projected network prediction.
    pub pred_objective: f64,
    pub pred_max_violation: f64,
    pub pred_l2: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub cold_history: Option<Vec<f64>>,
    #[serde(skip)]
    pub warm_history: Option<Vec<f64>>,
}

impl WarmStartRow {
    fn ok(&self) -> bool {
        self.error.is_none()
            && self.cold_status == Some(SolveStatus::Converged)
            && self.warm_status == Some(SolveStatus::Converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartReport {
    pub rows: Vec<WarmStartRow>,
    /// Rows where both solves converged; aggregates use only these.
    pub counted: usize,
    pub mean_cold_iters: f64,
    pub mean_warm_iters: f64,
    /// `1 − mean(warm) / mean(cold)`: the headline figure.
    pub iteration_ratio: f64,
    /// Mean of the per-instance `1 − warm / cold`.
    pub per_instance_ratio: f64,
    pub mean_cold_time: f64,
    pub mean_warm_time: f64,
    pub mean_inference_time: f64,
    /// `1 − mean(warm + inference) / mean(cold)`.
    pub time_ratio: f64,
}

/// Cold and network-warm-started solves on `indices`.
///
/// The prediction's dual part is projected onto the dual cone before the
/// warm start. Both solves share `cfg`. Runs sequentially so timings are not
/// disturbed.
pub fn evaluate_warm_start(
    bundle: &DatasetBundle,
    indices: &[usize],
    params: &NetParams,
    unroll_steps: usize,
    cfg: &SolverConfig,
) -> Result<WarmStartReport> {
    cfg.validate()?;
    params.validate()?;
    let mut rows = Vec::with_capacity(indices.len());
    for &i in indices {
        rows.push(warm_row(bundle, i, params, unroll_steps, cfg));
    }
    Ok(WarmStartReport::from_rows(rows))
}

fn warm_row(bundle: &DatasetBundle, i: usize, params: &NetParams, steps: usize, cfg: &SolverConfig) -> WarmStartRow {
    let mut row = WarmStartRow {
        instance: i,
        cold_status: None,
        warm_status: None,
        cold_iters: 0,
        warm_iters: 0,
        cold_time: 0.0,
        warm_time: 0.0,
        inference_time: 0.0,
        objective: f64::NAN,
        max_violation: f64::NAN,
        pred_objective: f64::NAN,
        pred_max_violation: f64::NAN,
        pred_l2: None,
        error: None,
        cold_history: None,
        warm_history: None,
    };
    let result = (|| -> Result<()> {
        let conic = bundle.conic(i)?;
        let data = bundle.monotone(i)?;

        let t = Instant::now();
        let cold = dr_solve(&data, cfg, None)?;
        row.cold_time = t.elapsed().as_secs_f64();
        row.cold_status = Some(cold.status);
        row.cold_iters = cold.iterations;
        row.cold_history = cold.residual_history;

        let t = Instant::now();
        let (x, y, _) = forward(&data, params, steps)?;
        let mut u: Vec<f64> = x;
        u.extend(y);
        data.project_in_place(&mut u);
        row.inference_time = t.elapsed().as_secs_f64();
        let (xh, yh) = u.split_at(data.n);
        let reference = bundle.label(i).map(|l| (l.x.as_slice(), l.y.as_slice()));
        let q = quality(&conic, xh, yh, reference).map_err(DataError::from)?;
        row.pred_objective = q.objective;
        row.pred_max_violation = q.max_violation();
        row.pred_l2 = q.l2_to_reference;

        let t = Instant::now();
        let start = warm_start_from_solution(&data, xh, yh)?;
        let warm = dr_solve(&data, cfg, Some(&start))?;
        row.warm_time = t.elapsed().as_secs_f64();
        row.warm_status = Some(warm.status);
        row.warm_iters = warm.iterations;
        row.objective = warm.metrics.objective;
        row.max_violation = warm.metrics.max_violation();
        row.warm_history = warm.residual_history;
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

impl WarmStartReport {
    pub fn from_rows(rows: Vec<WarmStartRow>) -> Self {
        let ok: Vec<&WarmStartRow> = rows.iter().filter(|r| r.ok()).collect();
        let mean_cold_iters = mean(ok.iter().map(|r| r.cold_iters as f64));
        let mean_warm_iters = mean(ok.iter().map(|r| r.warm_iters as f64));
        let mean_cold_time = mean(ok.iter().map(|r| r.cold_time));
        let mean_warm_time = mean(ok.iter().map(|r| r.warm_time));
        let mean_inference_time = mean(ok.iter().map(|r| r.inference_time));
        Self {
            counted: ok.len(),
            mean_cold_iters,
            mean_warm_iters,
            iteration_ratio: 1.0 - mean_warm_iters / mean_cold_iters,
            per_instance_ratio: mean(ok.iter().map(|r| 1.0 - r.warm_iters as f64 / r.cold_iters as f64)),
            mean_cold_time,
            mean_warm_time,
            mean_inference_time,
            time_ratio: 1.0 - (mean_warm_time + mean_inference_time) / mean_cold_time,
            rows,
        }
    }

    pub fn instance_table(&self) -> Table {
        let mut t = Table::new(&[
            "instance",
            "cold_iters",
            "warm_iters",
            "cold_time_s",
            "warm_time_s",
            "inf_time_s",
            "obj",
            "max_viol",
            "cold_status",
            "warm_status",
            "error",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.instance.to_string(),
                r.cold_iters.to_string(),
                r.warm_iters.to_string(),
                fixed(r.cold_time, 6),
                fixed(r.warm_time, 6),
                fixed(r.inference_time, 6),
                fixed(r.objective, 6),
                sci(r.max_violation),
                r.cold_status.map(|s| format!("{s:?}")).unwrap_or_default(),
                r.warm_status.map(|s| format!("{s:?}")).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ]);
        }
        t.note = Some(WARM_START_NOTE.into());
        t
    }

    /// Mean iterations and times, cold against warm, with both ratios.
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&[
            "instances",
            "counted",
            "cold_iters",
            "warm_iters",
            "ratio",
            "ratio_per_instance",
            "cold_time_s",
            "warm_time_s",
            "inf_time_s",
            "time_ratio",
        ]);
        t.push(vec![
            self.rows.len().to_string(),
            self.counted.to_string(),
            fixed(self.mean_cold_iters, 1),
            fixed(self.mean_warm_iters, 1),
            fixed(self.iteration_ratio, 4),
            fixed(self.per_instance_ratio, 4),
            fixed(self.mean_cold_time, 6),
            fixed(self.mean_warm_time, 6),
            fixed(self.mean_inference_time, 6),
            fixed(self.time_ratio, 4),
        ]);
        t.note = Some(WARM_START_NOTE.into());
        t
    }

    /// Quality of the raw network prediction.
    pub fn quality_table(&self) -> Table {
        let mut t = Table::new(&["instance", "obj", "max_viol", "l2_norm", "inf_time_s"]);
        for r in &self.rows {
            t.push(vec![
                r.instance.to_string(),
                fixed(r.pred_objective, 6),
                sci(r.pred_max_violation),
                opt(r.pred_l2, sci),
                fixed(r.inference_time, 6),
            ]);
        }
        t
    }

    pub fn cold_history_table(&self) -> Table {
        residual_history_table(self.rows.iter().filter_map(|r| r.cold_history.as_deref().map(|h| (r.instance, h))))
    }

    pub fn warm_history_table(&self) -> Table {
        residual_history_table(self.rows.iter().filter_map(|r| r.warm_history.as_deref().map(|h| (r.instance, h))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub layers: usize,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub iteration_ratio: f64,
    pub time_ratio: f64,
}

/// Trains one network per entry of `layers` and evaluates each on the test split.
pub fn ablate_layers(
    bundle: &DatasetBundle,
    layers: &[usize],
    train_cfg: &TrainConfig,
    solver_cfg: &SolverConfig,
) -> Result<Vec<AblationRow>> {
    let test = bundle.split()?.test.clone();
    let mut rows = Vec::with_capacity(layers.len());
    for &l in layers {
        let cfg = TrainConfig { layers: l, ..train_cfg.clone() };
        let out = train(bundle, &cfg, |_, _| {})?;
        let best_val_loss = match out.best_epoch {
            Some(e) => out.log[e - 1].val_loss,
            None => out.init_val_loss,
        };
        let report = evaluate_warm_start(bundle, &test, &out.params, cfg.unroll_steps, solver_cfg)?;
        rows.push(AblationRow {
            layers: l,
            epochs: out.log.len(),
            best_epoch: out.best_epoch,
            best_val_loss,
            iteration_ratio: report.iteration_ratio,
            time_ratio: report.time_ratio,
        });
    }
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow]) -> Table {
    let mut t = Table::new(&["layers", "epochs", "best_epoch", "best_val_loss", "ratio", "time_ratio"]);
    for r in rows {
        t.push(vec![
            r.layers.to_string(),
            r.epochs.to_string(),
            r.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
            sci(r.best_val_loss),
            fixed(r.iteration_ratio, 4),
            fixed(r.time_ratio, 4),
        ]);
    }
    t
}
