//! Grids of training runs summarised as median-of-seeds test error tables.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::train::config::TrainConfig;
use crate::train::data::DatasetSplit;
use crate::train::experiment::run_experiment;
use crate::train::init::InitScheme;

pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

/// One table column: everything but the activation and the seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationColumn {
    pub lr: f64,
    pub use_bn: bool,
    pub init: InitScheme,
}

impl AblationColumn {
    pub fn label(&self) -> String {
        format!(
            "lr={} bn={} init={}",
            self.lr,
            if self.use_bn { "on" } else { "off" },
            self.init
        )
    }
}

/// Rows are activations; columns are `use_bn x lr x init` in that nesting
/// order; every cell is run once per seed. Other settings come from `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationGrid {
    pub base: TrainConfig,
    pub activations: Vec<ActivationKind>,
    pub lrs: Vec<f64>,
    pub use_bn: Vec<bool>,
    pub inits: Vec<InitScheme>,
    pub seeds: Vec<u64>,
}

impl AblationGrid {
    pub fn columns(&self) -> Vec<AblationColumn> {
        let mut out = Vec::new();
        for &use_bn in &self.use_bn {
            for &lr in &self.lrs {
                for &init in &self.inits {
                    out.push(AblationColumn { lr, use_bn, init });
                }
            }
        }
        out
    }

    pub fn config(&self, act: ActivationKind, col: &AblationColumn, seed: u64) -> TrainConfig {
        TrainConfig {
            activation: act,
            lr: col.lr,
            use_bn: col.use_bn,
            init: col.init,
            seed,
            ..self.base.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.activations.is_empty() || self.lrs.is_empty() || self.use_bn.is_empty() || self.inits.is_empty() {
            return Err(Error::Config("ablation grid has an empty axis".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("ablation grid needs at least one seed".into()));
        }
        for col in self.columns() {
            self.config(self.activations[0], &col, self.seeds[0]).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    /// NaN for runs that diverged before the final evaluation.
    pub test_error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub runs: Vec<RunSummary>,
}

impl AblationCell {
    /// Median test error over seeds, with non-convergent runs ranked worst;
    /// `None` when the median run itself did not converge. Even counts take
    /// the lower middle.
    pub fn median(&self) -> Option<f64> {
        let mut keyed: Vec<f64> = self
            .runs
            .iter()
            .map(|r| if r.converged { r.test_error } else { f64::INFINITY })
            .collect();
        if keyed.is_empty() {
            return None;
        }
        keyed.sort_by(f64::total_cmp);
        let m = keyed[(keyed.len() - 1) / 2];
        m.is_finite().then_some(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub columns: Vec<AblationColumn>,
    pub rows: Vec<(ActivationKind, Vec<AblationCell>)>,
}

impl AblationTable {
    pub fn cell(&self, act: ActivationKind, column: usize) -> Option<&AblationCell> {
        self.rows
            .iter()
            .find(|(a, _)| *a == act)
            .and_then(|(_, cells)| cells.get(column))
    }

    /// `model,<column labels>`; cells are median test error in percent to two
    /// decimals, or `-` when the median run did not converge.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model");
        for c in &self.columns {
            write!(s, ",{}", c.label()).unwrap();
        }
        s.push('\n');
        for (act, cells) in &self.rows {
            s.push_str(act.name());
            for cell in cells {
                match cell.median() {
                    Some(e) => write!(s, ",{:.2}", 100.0 * e).unwrap(),
                    None => s.push_str(",-"),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Every run as `model,column,seed,test_err,converged`.
    pub fn runs_csv(&self) -> String {
        let mut s = String::from("model,column,seed,test_err,converged\n");
        for (act, cells) in &self.rows {
            for (col, cell) in self.columns.iter().zip(cells) {
                for r in &cell.runs {
                    writeln!(
                        s,
                        "{},{},{},{},{}",
                        act.name(),
                        col.label(),
                        r.seed,
                        r.test_error,
                        r.converged
                    )
                    .unwrap();
                }
            }
        }
        s
    }
}

/// Runs every `(activation, column, seed)` combination. Runs are independent
/// and execute on the rayon pool.
pub fn run_ablation<T: Scalar>(
    grid: &AblationGrid,
    train: &DatasetSplit<T>,
    test: &DatasetSplit<T>,
) -> Result<AblationTable> {
    grid.validate()?;
    let columns = grid.columns();
    let jobs: Vec<(usize, usize, u64)> = (0..grid.activations.len())
        .flat_map(|a| (0..columns.len()).flat_map(move |c| grid.seeds.iter().map(move |&s| (a, c, s))))
        .collect();
    let results: Vec<RunSummary> = jobs
        .par_iter()
        .map(|&(a, c, seed)| {
            let log = run_experiment(&grid.config(grid.activations[a], &columns[c], seed), train, test)?;
            Ok(RunSummary {
                seed,
                test_error: log.final_test_error,
                converged: log.converged(),
            })
        })
        .collect::<Result<_>>()?;

    let per_cell = grid.seeds.len();
    let rows = grid
        .activations
        .iter()
        .enumerate()
        .map(|(a, &act)| {
            let cells = (0..columns.len())
                .map(|c| {
                    let start = (a * columns.len() + c) * per_cell;
                    AblationCell {
                        runs: results[start..start + per_cell].to_vec(),
                    }
                })
                .collect();
            (act, cells)
        })
        .collect();
    Ok(AblationTable { columns, rows })
}
