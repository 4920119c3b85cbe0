//! Downstream evaluation: aggregate cell embeddings to task units, fit ridge
//! probes, report R² over repeated train/test splits.

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::hexgrid::CellId;
use crate::rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    /// Single-cell unit located by a point.
    Point,
    /// Single-cell unit.
    Grid,
    /// Administrative unit spanning one or more cells, mean-aggregated.
    Admin,
}

impl UnitKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "point" => Some(UnitKind::Point),
            "grid" => Some(UnitKind::Grid),
            "admin" => Some(UnitKind::Admin),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            UnitKind::Point => "point",
            UnitKind::Grid => "grid",
            UnitKind::Admin => "admin",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskUnit {
    pub unit_id: String,
    pub cells: Vec<CellId>,
    pub target: f64,
}

#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub name: String,
    pub unit_kind: UnitKind,
    pub units: Vec<TaskUnit>,
}

impl TaskDataset {
    pub fn new(name: String, unit_kind: UnitKind, units: Vec<TaskUnit>) -> Result<Self> {
        for u in &units {
            match unit_kind {
                UnitKind::Point | UnitKind::Grid => {
                    if u.cells.len() != 1 {
                        return Err(Error::Validation(format!(
                            "{} unit '{}' must reference exactly one cell, has {}",
                            unit_kind.as_str(),
                            u.unit_id,
                            u.cells.len()
                        )));
                    }
                }
                UnitKind::Admin => {
                    if u.cells.is_empty() {
                        return Err(Error::Validation(format!(
                            "admin unit '{}' must reference at least one cell",
                            u.unit_id
                        )));
                    }
                }
            }
            if !u.target.is_finite() {
                return Err(Error::Validation(format!(
                    "unit '{}' has non-finite target",
                    u.unit_id
                )));
            }
        }
        Ok(TaskDataset { name, unit_kind, units })
    }
}

/// Feature matrix and targets for one task, plus how many units were dropped
/// because none of their member cells exist in the table.
#[derive(Debug, Clone)]
pub struct Aggregated {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dim: usize,
    pub dropped_units: usize,
    pub missing_cells: usize,
}

/// Point/grid rows take the single cell's embedding; admin rows take the
/// unweighted mean over member cells. Missing cells are dropped with a count.
pub fn aggregate(emb: &EmbeddingTable, task: &TaskDataset) -> Result<Aggregated> {
    let d = emb.dim();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut dropped_units = 0;
    let mut missing_cells = 0;
    for unit in &task.units {
        let mut acc = vec![0.0; d];
        let mut found = 0usize;
        for &cell in &unit.cells {
            match emb.get(cell) {
                Some(row) => {
                    for (a, v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                    found += 1;
                }
                None => missing_cells += 1,
            }
        }
        if found == 0 {
            dropped_units += 1;
            continue;
        }
        for a in acc.iter_mut() {
            *a /= found as f64;
        }
        x.extend_from_slice(&acc);
        y.push(unit.target);
    }
    if y.is_empty() {
        return Err(Error::Validation(format!(
            "task '{}': all {} units dropped (no member cells in the table)",
            task.name,
            task.units.len()
        )));
    }
    Ok(Aggregated { x, y, dim: d, dropped_units, missing_cells })
}

/// Ridge solution with an unpenalized intercept.
#[derive(Debug, Clone)]
pub struct RidgeModel {
    pub beta: Vec<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.beta.iter().zip(row).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// In-place Cholesky solve of a symmetric positive-definite system.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], k: usize) -> Result<()> {
    // Factor A = L L^T, overwriting the lower triangle.
    for j in 0..k {
        let mut diag = a[j * k + j];
        for p in 0..j {
            diag -= a[j * k + p] * a[j * k + p];
        }
        if !(diag.is_finite() && diag > 1e-300) {
            return Err(Error::Numeric(
                "normal equations not positive definite; increase the ridge lambda above 0".into(),
            ));
        }
        let l_jj = diag.sqrt();
        a[j * k + j] = l_jj;
        for i in j + 1..k {
            let mut v = a[i * k + j];
            for p in 0..j {
                v -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = v / l_jj;
        }
    }
    // Forward then back substitution.
    for i in 0..k {
        let mut v = b[i];
        for p in 0..i {
            v -= a[i * k + p] * b[p];
        }
        b[i] = v / a[i * k + i];
    }
    for i in (0..k).rev() {
        let mut v = b[i];
        for p in i + 1..k {
            v -= a[p * k + i] * b[p];
        }
        b[i] = v / a[i * k + i];
    }
    Ok(())
}

/// Solve (X'X + lambda I) beta = X'y on the given rows, with an intercept
/// column excluded from the penalty.
pub fn ridge_fit(x: &[f64], y: &[f64], dim: usize, lambda: f64) -> Result<RidgeModel> {
    let n = y.len();
    if n == 0 || x.len() != n * dim {
        return Err(Error::Validation("ridge_fit shape mismatch".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Validation(format!("lambda {lambda} must be >= 0")));
    }
    // Augmented design [X 1]; penalty diag(lambda, ..., lambda, 0).
    let k = dim + 1;
    let mut ata = vec![0.0; k * k];
    let mut aty = vec![0.0; k];
    for r in 0..n {
        let row = &x[r * dim..(r + 1) * dim];
        for i in 0..dim {
            for j in 0..=i {
                ata[i * k + j] += row[i] * row[j];
            }
            ata[dim * k + i] += row[i];
            aty[i] += row[i] * y[r];
        }
        ata[dim * k + dim] += 1.0;
        aty[dim] += y[r];
    }
    for i in 0..k {
        for j in i + 1..k {
            ata[i * k + j] = ata[j * k + i];
        }
    }
    for i in 0..dim {
        ata[i * k + i] += lambda;
    }
    let mut sol = aty;
    cholesky_solve(&mut ata, &mut sol, k)?;
    let intercept = sol[dim];
    sol.truncate(dim);
    Ok(RidgeModel { beta: sol, intercept })
}

/// Coefficient of determination on (rows, targets).
pub fn r_squared(model: &RidgeModel, x: &[f64], y: &[f64], dim: usize) -> f64 {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for r in 0..n {
        let pred = model.predict(&x[r * dim..(r + 1) * dim]);
        ss_res += (y[r] - pred) * (y[r] - pred);
        ss_tot += (y[r] - mean) * (y[r] - mean);
    }
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &[f64], dim: usize, rows: &[usize]) -> Self {
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for &r in rows {
            for (m, v) in mean.iter_mut().zip(&x[r * dim..(r + 1) * dim]) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for &r in rows {
            for j in 0..dim {
                let d = x[r * dim + j] - mean[j];
                var[j] += d * d;
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    fn apply(&self, x: &[f64], dim: usize, rows: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * dim);
        for &r in rows {
            for j in 0..dim {
                out.push((x[r * dim + j] - self.mean[j]) / self.std[j]);
            }
        }
        out
    }
}

/// One train/test trial: standardize features on the train split, fit ridge,
/// report test-split R².
pub fn ridge_fit_eval(
    x: &[f64],
    y: &[f64],
    dim: usize,
    lambda: f64,
    split_seed: u64,
    test_fraction: f64,
) -> Result<f64> {
    let n = y.len();
    if n < 5 {
        return Err(Error::Validation(format!("need at least 5 rows, have {n}")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Validation(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::pcg(split_seed);
    rng::shuffle(&mut order, &mut r);
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let (test_rows, train_rows) = order.split_at(n_test);
    let scaler = Standardizer::fit(x, dim, train_rows);
    let x_train = scaler.apply(x, dim, train_rows);
    let x_test = scaler.apply(x, dim, test_rows);
    let y_train: Vec<f64> = train_rows.iter().map(|&r| y[r]).collect();
    let y_test: Vec<f64> = test_rows.iter().map(|&r| y[r]).collect();
    let model = ridge_fit(&x_train, &y_train, dim, lambda)?;
    Ok(r_squared(&model, &x_test, &y_test, dim))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub task: String,
    pub trials: usize,
    pub r2_mean: f64,
    pub r2_std: f64,
    pub probe_kind: &'static str,
}

#[derive(Debug)]
pub struct ProbeOutcome {
    pub task: String,
    pub result: Result<ProbeReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub trials: usize,
    pub lambda: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { trials: 10, lambda: 1.0, test_fraction: 0.2, seed: 0 }
    }
}

/// Evaluate each task over `trials` distinct split seeds; per-task failures
/// are reported without aborting the rest.
pub fn run_benchmark(
    emb: &EmbeddingTable,
    tasks: &[TaskDataset],
    cfg: &ProbeConfig,
) -> Vec<ProbeOutcome> {
    tasks
        .iter()
        .map(|task| {
            let result = (|| {
                if cfg.trials == 0 {
                    return Err(Error::Validation("trials must be >= 1".into()));
                }
                let agg = aggregate(emb, task)?;
                let mut scores = Vec::with_capacity(cfg.trials);
                for t in 0..cfg.trials {
                    let seed = rng::derive_seed(cfg.seed, t as u64);
                    scores.push(ridge_fit_eval(
                        &agg.x,
                        &agg.y,
                        agg.dim,
                        cfg.lambda,
                        seed,
                        cfg.test_fraction,
                    )?);
                }
                let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
                    / scores.len() as f64;
                Ok(ProbeReport {
                    task: task.name.clone(),
                    trials: cfg.trials,
                    r2_mean: mean,
                    r2_std: var.sqrt(),
                    probe_kind: "ridge",
                })
            })();
            ProbeOutcome { task: task.name.clone(), result }
        })
        .collect()
}

/// Tab-separated report: task, mean R², std.
pub fn render_report(outcomes: &[ProbeOutcome]) -> String {
    let mut out = String::from("task\tr2_mean\tr2_std\n");
    for o in outcomes {
        match &o.result {
            Ok(r) => out.push_str(&format!("{}\t{:.6}\t{:.6}\n", r.task, r.r2_mean, r.r2_std)),
            Err(e) => out.push_str(&format!("{}\tERROR\t{}\n", o.task, e)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cell(q: i64) -> CellId {
        CellId::from_axial(6, q, 0).unwrap()
    }

    fn table(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
        let mut rng = crate::rng::pcg(seed);
        let cells: Vec<CellId> = (0..n as i64).map(cell).collect();
        let data: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        EmbeddingTable::new(cells, dim, data).unwrap()
    }

    #[test]
    fn admin_single_cell_row_equals_embedding() {
        let emb = table(3, 4, 1);
        let task = TaskDataset::new(
            "t".into(),
            UnitKind::Admin,
            vec![TaskUnit { unit_id: "a".into(), cells: vec![cell(1)], target: 0.0 }],
        )
        .unwrap();
        let agg = aggregate(&emb, &task).unwrap();
        assert_eq!(&agg.x, emb.get(cell(1)).unwrap());
    }

    #[test]
    fn admin_two_cells_mean() {
        let emb = table(3, 4, 2);
        let task = TaskDataset::new(
            "t".into(),
            UnitKind::Admin,
            vec![TaskUnit { unit_id: "a".into(), cells: vec![cell(0), cell(2)], target: 0.0 }],
        )
        .unwrap();
        let agg = aggregate(&emb, &task).unwrap();
        let u = emb.get(cell(0)).unwrap();
        let v = emb.get(cell(2)).unwrap();
        for j in 0..4 {
            assert!((agg.x[j] - 0.5 * (u[j] + v[j])).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregation_is_member_order_invariant() {
        let emb = table(4, 3, 3);
        let mk = |cells: Vec<CellId>| {
            TaskDataset::new(
                "t".into(),
                UnitKind::Admin,
                vec![TaskUnit { unit_id: "a".into(), cells, target: 1.0 }],
            )
            .unwrap()
        };
        let a = aggregate(&emb, &mk(vec![cell(0), cell(1), cell(3)])).unwrap();
        let b = aggregate(&emb, &mk(vec![cell(3), cell(0), cell(1)])).unwrap();
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn missing_cells_dropped_and_counted() {
        let emb = table(2, 3, 4);
        let task = TaskDataset::new(
            "t".into(),
            UnitKind::Admin,
            vec![
                TaskUnit { unit_id: "ok".into(), cells: vec![cell(0), cell(99)], target: 1.0 },
                TaskUnit { unit_id: "gone".into(), cells: vec![cell(50)], target: 2.0 },
            ],
        )
        .unwrap();
        let agg = aggregate(&emb, &task).unwrap();
        assert_eq!(agg.y, vec![1.0]);
        assert_eq!(agg.dropped_units, 1);
        assert_eq!(agg.missing_cells, 2);
        // The surviving unit aggregates only its present cell.
        assert_eq!(&agg.x, emb.get(cell(0)).unwrap());
    }

    #[test]
    fn all_units_dropped_is_error() {
        let emb = table(2, 3, 5);
        let task = TaskDataset::new(
            "t".into(),
            UnitKind::Grid,
            vec![TaskUnit { unit_id: "x".into(), cells: vec![cell(40)], target: 1.0 }],
        )
        .unwrap();
        assert!(matches!(aggregate(&emb, &task), Err(Error::Validation(_))));
    }

    #[test]
    fn grid_units_require_exactly_one_cell() {
        assert!(TaskDataset::new(
            "t".into(),
            UnitKind::Grid,
            vec![TaskUnit { unit_id: "x".into(), cells: vec![cell(0), cell(1)], target: 0.0 }],
        )
        .is_err());
        assert!(TaskDataset::new(
            "t".into(),
            UnitKind::Admin,
            vec![TaskUnit { unit_id: "x".into(), cells: vec![], target: 0.0 }],
        )
        .is_err());
    }

    fn linear_data(n: usize, dim: usize, seed: u64, noise: f64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = crate::rng::pcg(seed);
        let beta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut x = Vec::with_capacity(n * dim);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()
                + 0.5
                + noise * crate::rng::gaussian(&mut rng);
            x.extend_from_slice(&row);
            y.push(t);
        }
        (x, y)
    }

    #[test]
    fn exact_linear_target_gives_r2_one() {
        let (x, y) = linear_data(60, 4, 7, 0.0);
        let r2 = ridge_fit_eval(&x, &y, 4, 0.0, 3, 0.2).unwrap();
        assert!((r2 - 1.0).abs() < 1e-8, "r2 = {r2}");
    }

    #[test]
    fn pure_noise_target_gives_r2_near_zero() {
        let mut rng = crate::rng::pcg(8);
        let n = 4000;
        let dim = 4;
        let x: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| crate::rng::gaussian(&mut rng)).collect();
        for seed in 0..5 {
            let r2 = ridge_fit_eval(&x, &y, dim, 1.0, seed, 0.2).unwrap();
            assert!(r2.abs() < 0.1, "seed {seed}: r2 = {r2}");
        }
    }

    #[test]
    fn fixed_system_matches_normal_equations_oracle() {
        // 6x3 system, lambda = 1. The oracle solves the augmented normal
        // equations by Gaussian elimination, independently of the Cholesky
        // path under test.
        let x = vec![
            1.0, 2.0, 0.5, //
            -1.0, 0.0, 1.5, //
            2.0, -1.0, 0.0, //
            0.0, 1.0, -2.0, //
            1.5, 1.5, 1.0, //
            -0.5, 2.0, 2.0,
        ];
        let y = vec![2.0, -1.0, 3.0, 0.5, 1.0, -2.0];
        let model = ridge_fit(&x, &y, 3, 1.0).unwrap();

        let k = 4;
        let mut a = vec![0.0f64; k * k];
        let mut b = vec![0.0f64; k];
        for r in 0..6 {
            let row = [x[r * 3], x[r * 3 + 1], x[r * 3 + 2], 1.0];
            for i in 0..k {
                for j in 0..k {
                    a[i * k + j] += row[i] * row[j];
                }
                b[i] += row[i] * y[r];
            }
        }
        for i in 0..3 {
            a[i * k + i] += 1.0;
        }
        // Gaussian elimination with partial pivoting.
        let mut aug = vec![0.0f64; k * (k + 1)];
        for i in 0..k {
            for j in 0..k {
                aug[i * (k + 1) + j] = a[i * k + j];
            }
            aug[i * (k + 1) + k] = b[i];
        }
        for col in 0..k {
            let mut piv = col;
            for r in col + 1..k {
                if aug[r * (k + 1) + col].abs() > aug[piv * (k + 1) + col].abs() {
                    piv = r;
                }
            }
            for j in 0..=k {
                aug.swap(col * (k + 1) + j, piv * (k + 1) + j);
            }
            let d = aug[col * (k + 1) + col];
            for r in 0..k {
                if r != col {
                    let f = aug[r * (k + 1) + col] / d;
                    for j in 0..=k {
                        aug[r * (k + 1) + j] -= f * aug[col * (k + 1) + j];
                    }
                }
            }
        }
        let oracle: Vec<f64> =
            (0..k).map(|i| aug[i * (k + 1) + k] / aug[i * (k + 1) + i]).collect();
        for j in 0..3 {
            assert!(
                (model.beta[j] - oracle[j]).abs() < 1e-10,
                "beta[{j}] = {} vs oracle {}",
                model.beta[j],
                oracle[j]
            );
        }
        assert!((model.intercept - oracle[3]).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_without_ridge_is_numeric_error() {
        // Duplicate column makes X'X singular.
        let x = vec![
            1.0, 1.0, //
            2.0, 2.0, //
            -1.0, -1.0, //
            0.5, 0.5, //
            3.0, 3.0,
        ];
        let y = vec![1.0, 2.0, -1.0, 0.5, 3.0];
        match ridge_fit(&x, &y, 2, 0.0) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("lambda")),
            other => panic!("expected numeric error, got {other:?}"),
        }
        assert!(ridge_fit(&x, &y, 2, 1.0).is_ok());
    }

    #[test]
    fn shrinkage_monotonicity_on_training_fit() {
        let (x, y) = linear_data(40, 6, 9, 0.3);
        let rows: Vec<usize> = (0..40).collect();
        let scaler = Standardizer::fit(&x, 6, &rows);
        let xs = scaler.apply(&x, 6, &rows);
        let base = ridge_fit(&xs, &y, 6, 0.0).unwrap();
        let r2_0 = r_squared(&base, &xs, &y, 6);
        for lambda in [0.1, 1.0, 10.0, 100.0] {
            let m = ridge_fit(&xs, &y, 6, lambda).unwrap();
            let r2 = r_squared(&m, &xs, &y, 6);
            assert!(r2 <= r2_0 + 1e-12, "lambda {lambda}: train r2 {r2} > {r2_0}");
        }
    }

    #[test]
    fn too_few_rows_rejected() {
        let (x, y) = linear_data(4, 2, 10, 0.0);
        assert!(ridge_fit_eval(&x, &y, 2, 1.0, 0, 0.2).is_err());
    }

    #[test]
    fn benchmark_is_deterministic_and_single_trial_has_zero_std() {
        let emb = table(30, 4, 11);
        let mut rng = crate::rng::pcg(12);
        let units: Vec<TaskUnit> = (0..30)
            .map(|i| TaskUnit {
                unit_id: format!("u{i}"),
                cells: vec![cell(i as i64)],
                target: rng.gen_range(-1.0..1.0),
            })
            .collect();
        let task = TaskDataset::new("grid".into(), UnitKind::Grid, units).unwrap();
        let one = ProbeConfig { trials: 1, ..ProbeConfig::default() };
        let r = run_benchmark(&emb, std::slice::from_ref(&task), &one);
        assert_eq!(r[0].result.as_ref().unwrap().r2_std, 0.0);

        let ten = ProbeConfig::default();
        let a = run_benchmark(&emb, std::slice::from_ref(&task), &ten);
        let b = run_benchmark(&emb, std::slice::from_ref(&task), &ten);
        let (ra, rb) = (a[0].result.as_ref().unwrap(), b[0].result.as_ref().unwrap());
        assert_eq!(ra.r2_mean.to_bits(), rb.r2_mean.to_bits());
        assert_eq!(ra.r2_std.to_bits(), rb.r2_std.to_bits());
    }

    #[test]
    fn per_task_failures_do_not_abort_others() {
        let emb = table(30, 4, 13);
        let good_units: Vec<TaskUnit> = (0..30)
            .map(|i| TaskUnit { unit_id: format!("u{i}"), cells: vec![cell(i as i64)], target: i as f64 })
            .collect();
        let good = TaskDataset::new("good".into(), UnitKind::Grid, good_units).unwrap();
        let bad = TaskDataset::new(
            "bad".into(),
            UnitKind::Grid,
            vec![TaskUnit { unit_id: "x".into(), cells: vec![cell(500)], target: 1.0 }],
        )
        .unwrap();
        let out = run_benchmark(&emb, &[bad, good], &ProbeConfig::default());
        assert!(out[0].result.is_err());
        assert!(out[1].result.is_ok());
        let report = render_report(&out);
        assert!(report.contains("bad\tERROR"));
        assert!(report.lines().count() == 3);
    }
}
