//! Experiment matrix over levels × (J, overlap, preconditioner) columns,
//! table rendering and scaling checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::assembly::{ObstacleProblem, DEFAULT_PDAS_C};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::pcg::{PcgOptions, StopReference};
use crate::pdas::{pdas_solve, IterationRecord, PdasOptions};
use crate::pum::Cover2D;
use crate::schwarz::{build_decomposition, full_prolongation, subdomain_grid, Overlap, PcgSolver, PreconditionerKind};
use crate::sparse::CsrMatrix;

/// Declarative run configuration, loadable from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub levels: Vec<u32>,
    #[serde(rename = "J")]
    pub j_values: Vec<usize>,
    pub overlaps: Vec<Overlap>,
    pub preconditioners: Vec<PreconditionerKind>,
    pub pdas_c: f64,
    pub pcg_rel_tol: f64,
    pub pcg_stop: StopReference,
    pub max_pdas: usize,
    /// `None` means `10 · n` per reduced solve.
    pub max_pcg: Option<usize>,
    pub budget_sec: f64,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            levels: (1..=6).collect(),
            j_values: vec![4, 16, 64],
            overlaps: vec![Overlap::Small, Overlap::Generous],
            preconditioners: vec![PreconditionerKind::None, PreconditionerKind::One, PreconditionerKind::Two],
            pdas_c: DEFAULT_PDAS_C,
            pcg_rel_tol: 1e-15,
            pcg_stop: StopReference::PreconditionedRhs,
            max_pdas: 100,
            max_pcg: None,
            budget_sec: 600.0,
            out: PathBuf::from("results"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.levels.iter().any(|&l| l == 0 || l > 24) {
            return Err(Error::param("levels must be nonempty and within 1..=24"));
        }
        if let Some(&j) = self.j_values.iter().find(|&&j| j == 0 || !j.is_power_of_two() || j.trailing_zeros() % 2 != 0) {
            return Err(Error::param(format!("J = {j} is not a power of 4")));
        }
        if !(self.pcg_rel_tol > 0.0) {
            return Err(Error::param("pcg_rel_tol must be positive"));
        }
        if !(self.pdas_c > 0.0 && self.pdas_c.is_finite()) {
            return Err(Error::param("pdas_c must be positive"));
        }
        if self.max_pdas == 0 {
            return Err(Error::param("max_pdas must be at least 1"));
        }
        if !(self.budget_sec > 0.0) {
            return Err(Error::param("budget_sec must be positive"));
        }
        if self.preconditioners.is_empty() {
            return Err(Error::param("no preconditioners selected"));
        }
        let needs_dd = self.preconditioners.iter().any(|&p| p != PreconditionerKind::None);
        if needs_dd && (self.j_values.is_empty() || self.overlaps.is_empty()) {
            return Err(Error::param("Schwarz preconditioners need J values and overlaps"));
        }
        Ok(())
    }

    /// Columns in output order; the unpreconditioned method is one column.
    pub fn columns(&self) -> Vec<Column> {
        let mut cols = Vec::new();
        let mut precs = self.preconditioners.clone();
        precs.sort();
        precs.dedup();
        let mut js = self.j_values.clone();
        js.sort();
        js.dedup();
        let mut ovs = self.overlaps.clone();
        ovs.sort();
        ovs.dedup();
        for prec in precs {
            if prec == PreconditionerKind::None {
                cols.push(Column { preconditioner: prec, j: None, overlap: None });
                continue;
            }
            for &ov in &ovs {
                for &j in &js {
                    cols.push(Column { preconditioner: prec, j: Some(j), overlap: Some(ov) });
                }
            }
        }
        cols
    }

    fn sorted_levels(&self) -> Vec<u32> {
        let mut l = self.levels.clone();
        l.sort();
        l.dedup();
        l
    }
}

/// One `(preconditioner, J, overlap)` combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Column {
    pub preconditioner: PreconditionerKind,
    #[serde(rename = "J")]
    pub j: Option<usize>,
    pub overlap: Option<Overlap>,
}

impl Column {
    pub fn label(&self) -> String {
        match (self.j, self.overlap) {
            (Some(j), Some(ov)) => format!("{} J={j} {}", self.preconditioner.name(), ov.name()),
            _ => self.preconditioner.name().to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellStatus {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "DNC")]
    Dnc,
    #[serde(rename = "SKIPPED")]
    Skipped,
    #[serde(rename = "ERROR")]
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub level: u32,
    #[serde(flatten)]
    pub column: Column,
    pub dofs: usize,
    pub pdas_iterations: usize,
    /// Arithmetic mean of the per-iteration Lanczos estimates.
    pub avg_kappa: f64,
    pub pcg_iterations: usize,
    pub t_solve: f64,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl ExperimentCell {
    fn empty(level: u32, column: Column, dofs: usize, status: CellStatus) -> Self {
        ExperimentCell {
            level,
            column,
            dofs,
            pdas_iterations: 0,
            avg_kappa: 0.0,
            pcg_iterations: 0,
            t_solve: 0.0,
            status,
            message: None,
        }
    }
}

/// Per-PDAS-iteration line of the run log.
#[derive(Serialize)]
struct LogRecord<'a> {
    level: u32,
    #[serde(flatten)]
    column: &'a Column,
    #[serde(flatten)]
    record: &'a IterationRecord,
}

struct LevelData {
    cover: Cover2D,
    problem: ObstacleProblem,
    prolongations: BTreeMap<u32, CsrMatrix>,
}

impl LevelData {
    fn new(level: u32, c: f64, exec: Execution) -> Result<Self> {
        let cover = Cover2D::unit_square(level)?;
        let problem = ObstacleProblem::reference(&cover, c, exec);
        Ok(LevelData { cover, problem, prolongations: BTreeMap::new() })
    }

    fn prolongation(&mut self, coarse_level: u32) -> Result<&CsrMatrix> {
        if !self.prolongations.contains_key(&coarse_level) {
            let coarse = Cover2D::unit_square(coarse_level)?;
            let p = full_prolongation(&coarse, &self.cover)?;
            self.prolongations.insert(coarse_level, p);
        }
        Ok(&self.prolongations[&coarse_level])
    }
}

/// Runs every column over the configured levels in ascending order.
///
/// Each column warm-starts from its own solution at the previous level
/// (evaluated at the new nodes) and from 0 at its first computed level.
/// Per-iteration records go to `log` as JSON lines.
pub fn run_experiment(
    config: &ExperimentConfig,
    exec: Execution,
    mut log: Option<&mut dyn Write>,
) -> Result<Vec<ExperimentCell>> {
    config.validate()?;
    let columns = config.columns();
    let mut previous: Vec<Option<(u32, Vec<f64>)>> = vec![None; columns.len()];
    let mut prev_cover: Option<Cover2D> = None;
    let mut cells = Vec::new();
    for level in config.sorted_levels() {
        let mut data = match LevelData::new(level, config.pdas_c, exec) {
            Ok(d) => d,
            Err(e) => {
                for col in &columns {
                    let mut cell = ExperimentCell::empty(level, *col, 0, CellStatus::Error);
                    cell.message = Some(e.to_string());
                    cells.push(cell);
                }
                previous.iter_mut().for_each(|p| *p = None);
                prev_cover = None;
                continue;
            }
        };
        for (ci, col) in columns.iter().enumerate() {
            let warm = match (&previous[ci], &prev_cover) {
                (Some((pl, u)), Some(pc)) if *pl + 1 == level => Some(warm_start(pc, u, &data.cover)),
                _ => None,
            };
            let (cell, solution, records) = run_cell(config, level, *col, &mut data, warm, exec);
            log::info!(
                "level {level} {}: {:?} pdas={} kappa={:.4e} t={:.2}s",
                col.label(),
                cell.status,
                cell.pdas_iterations,
                cell.avg_kappa,
                cell.t_solve
            );
            if let Some(log) = log.as_deref_mut() {
                for r in &records {
                    let line = serde_json::to_string(&LogRecord { level, column: col, record: r })
                        .expect("record serializes");
                    writeln!(log, "{line}").map_err(|e| Error::io("run log", e))?;
                }
                let line = serde_json::json!({ "type": "cell", "cell": &cell });
                writeln!(log, "{line}").map_err(|e| Error::io("run log", e))?;
            }
            previous[ci] = solution.map(|u| (level, u));
            cells.push(cell);
        }
        prev_cover = Some(data.cover);
    }
    let order: BTreeMap<Column, usize> = columns.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    cells.sort_by_key(|c| (order[&c.column], c.level));
    Ok(cells)
}

/// Previous-level solution evaluated at the nodes of `fine`.
pub fn warm_start(coarse: &Cover2D, u: &[f64], fine: &Cover2D) -> Vec<f64> {
    fine.nodes().iter().map(|n| coarse.evaluate(u, (n.x, n.y), (0, 0))).collect()
}

fn run_cell(
    config: &ExperimentConfig,
    level: u32,
    col: Column,
    data: &mut LevelData,
    warm: Option<Vec<f64>>,
    exec: Execution,
) -> (ExperimentCell, Option<Vec<f64>>, Vec<IterationRecord>) {
    let n = data.problem.n();
    let grid = match col.j {
        Some(j) => subdomain_grid(level, j),
        None => Some(1),
    };
    let Some(grid) = grid else {
        return (ExperimentCell::empty(level, col, n, CellStatus::Skipped), None, Vec::new());
    };
    match solve_cell(config, level, col, grid, data, warm, exec) {
        Ok(r) => r,
        Err(e) => {
            let mut cell = ExperimentCell::empty(level, col, n, CellStatus::Error);
            cell.message = Some(e.to_string());
            (cell, None, Vec::new())
        }
    }
}

fn solve_cell(
    config: &ExperimentConfig,
    level: u32,
    col: Column,
    grid: usize,
    data: &mut LevelData,
    warm: Option<Vec<f64>>,
    exec: Execution,
) -> Result<(ExperimentCell, Option<Vec<f64>>, Vec<IterationRecord>)> {
    let n = data.problem.n();
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(config.budget_sec);
    let decomposition = match (col.j, col.overlap) {
        (Some(j), Some(ov)) => Some(build_decomposition(&data.cover, j, ov)?),
        _ => None,
    };
    if col.preconditioner == PreconditionerKind::Two {
        if grid < 2 {
            return Err(Error::param("two-level preconditioner needs J ≥ 4"));
        }
        data.prolongation(grid.trailing_zeros())?;
    }
    let data = &*data;
    let prolongation = (col.preconditioner == PreconditionerKind::Two)
        .then(|| &data.prolongations[&grid.trailing_zeros()]);
    let mut solver = PcgSolver {
        kind: col.preconditioner,
        cover: &data.cover,
        decomposition: decomposition.as_ref(),
        prolongation,
        options: PcgOptions {
            rel_tol: config.pcg_rel_tol,
            reference: config.pcg_stop,
            max_iter: config.max_pcg,
            ..PcgOptions::default()
        },
        exec,
    };
    let u0 = warm.unwrap_or_else(|| vec![0.0; n]);
    let lambda0 = vec![0.0; n];
    let opts = PdasOptions { max_pdas: config.max_pdas, deadline: Some(deadline) };
    let report = pdas_solve(&data.problem, &u0, &lambda0, &mut solver, &opts)?;
    let elapsed = start.elapsed().as_secs_f64();
    let status = if report.converged { CellStatus::Ok } else { CellStatus::Dnc };
    let message = match (report.timed_out, report.stalled) {
        (true, _) => Some("time budget exhausted".to_string()),
        (_, true) => Some("PCG iteration cap reached".to_string()),
        _ if !report.converged => Some("PDAS iteration cap reached".to_string()),
        _ => None,
    };
    let cell = ExperimentCell {
        level,
        column: col,
        dofs: n,
        pdas_iterations: report.iterations,
        avg_kappa: report.mean_kappa(),
        pcg_iterations: report.records.iter().map(|r| r.pcg_iterations).sum(),
        t_solve: elapsed,
        status,
        message,
    };
    let solution = report.converged.then_some(report.u);
    Ok((cell, solution, report.records))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Kappa,
    PdasIters,
    Time,
}

impl TableKind {
    pub fn name(self) -> &'static str {
        match self {
            TableKind::Kappa => "kappa",
            TableKind::PdasIters => "pdas_iters",
            TableKind::Time => "time",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

fn cell_text(cell: &ExperimentCell, kind: TableKind) -> String {
    match cell.status {
        CellStatus::Dnc => "DNC".into(),
        CellStatus::Skipped => "-".into(),
        CellStatus::Error => "ERROR".into(),
        CellStatus::Ok => match kind {
            TableKind::Kappa => format!("{:.4e}", cell.avg_kappa),
            TableKind::PdasIters => cell.pdas_iterations.to_string(),
            TableKind::Time => format!("{:.3}", cell.t_solve),
        },
    }
}

/// Table with one row per level and one column per `(prec, J, overlap)`.
pub fn render_table(cells: &[ExperimentCell], kind: TableKind, format: TableFormat) -> Result<String> {
    if cells.is_empty() {
        return Err(Error::param("no cells to tabulate"));
    }
    let mut columns: Vec<Column> = cells.iter().map(|c| c.column).collect();
    columns.sort();
    columns.dedup();
    let mut levels: Vec<u32> = cells.iter().map(|c| c.level).collect();
    levels.sort();
    levels.dedup();
    let lookup: BTreeMap<(u32, Column), &ExperimentCell> = cells.iter().map(|c| ((c.level, c.column), c)).collect();
    let mut header = vec!["level".to_string()];
    header.extend(columns.iter().map(Column::label));
    let rows: Vec<Vec<String>> = levels
        .iter()
        .map(|&l| {
            let mut row = vec![l.to_string()];
            row.extend(
                columns
                    .iter()
                    .map(|c| lookup.get(&(l, *c)).map_or(String::new(), |cell| cell_text(cell, kind))),
            );
            row
        })
        .collect();
    let mut s = String::new();
    match format {
        TableFormat::Csv => {
            writeln!(s, "{}", header.join(",")).unwrap();
            for r in rows {
                writeln!(s, "{}", r.join(",")).unwrap();
            }
        }
        TableFormat::Markdown => {
            if kind == TableKind::Kappa {
                writeln!(s, "Average condition number (arithmetic mean over PDAS iterations)\n").unwrap();
            }
            writeln!(s, "| {} |", header.join(" | ")).unwrap();
            writeln!(s, "|{}", "---|".repeat(header.len())).unwrap();
            for r in rows {
                writeln!(s, "| {} |", r.join(" | ")).unwrap();
            }
        }
    }
    Ok(s)
}

/// Writes [`render_table`] output to `path`.
pub fn emit_table(cells: &[ExperimentCell], kind: TableKind, format: TableFormat, path: &Path) -> Result<()> {
    let text = render_table(cells, kind, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes csv and markdown tables of every kind into `dir`.
pub fn emit_all_tables(cells: &[ExperimentCell], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for kind in [TableKind::Kappa, TableKind::PdasIters, TableKind::Time] {
        for (format, ext) in [(TableFormat::Csv, "csv"), (TableFormat::Markdown, "md")] {
            let path = dir.join(format!("{}.{ext}", kind.name()));
            emit_table(cells, kind, format, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn write_cells(cells: &[ExperimentCell], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(cells).expect("cells serialize");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_cells(path: &Path) -> Result<Vec<ExperimentCell>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// One scaling band check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandCheck {
    pub name: String,
    pub value: Option<f64>,
    pub band: (f64, f64),
    /// `None` when the cells needed are missing or not OK.
    pub passed: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CompareReport {
    /// `(column, ℓ, κ_{ℓ+1}/κ_ℓ)`.
    pub growth: Vec<(String, u32, f64)>,
    /// Max of κ(two-level)/κ(one-level) over matching OK cells.
    pub two_over_one: Option<f64>,
    pub checks: Vec<BandCheck>,
}

impl CompareReport {
    pub fn violations(&self) -> impl Iterator<Item = &BandCheck> {
        self.checks.iter().filter(|c| c.passed == Some(false))
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("## Growth ratios\n\n| column | levels | ratio |\n|---|---|---|\n");
        for (c, l, r) in &self.growth {
            writeln!(s, "| {c} | {l}→{} | {r:.3} |", l + 1).unwrap();
        }
        if let Some(r) = self.two_over_one {
            writeln!(s, "\nmax κ(two)/κ(one) = {r:.4}").unwrap();
        }
        s.push_str("\n## Bands\n\n| check | value | band | result |\n|---|---|---|---|\n");
        for c in &self.checks {
            let v = c.value.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            let r = match c.passed {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "n/a",
            };
            writeln!(s, "| {} | {v} | [{}, {}] | {r} |", c.name, c.band.0, c.band.1).unwrap();
        }
        s
    }
}

fn ok_kappa(cells: &[ExperimentCell], col: &Column, level: u32) -> Option<f64> {
    cells
        .iter()
        .find(|c| c.column == *col && c.level == level && c.status == CellStatus::Ok)
        .map(|c| c.avg_kappa)
}

fn band(name: String, value: Option<f64>, lo: f64, hi: f64) -> BandCheck {
    BandCheck { name, value, band: (lo, hi), passed: value.map(|v| v >= lo && v <= hi) }
}

fn spread(cells: &[ExperimentCell], col: &Column, levels: std::ops::RangeInclusive<u32>) -> Option<f64> {
    let ks: Option<Vec<f64>> = levels.map(|l| ok_kappa(cells, col, l)).collect();
    let ks = ks?;
    let max = ks.iter().cloned().fold(f64::MIN, f64::max);
    let min = ks.iter().cloned().fold(f64::MAX, f64::min);
    (min > 0.0).then(|| max / min)
}

/// Growth ratios, two-level/one-level ratio and the scaling bands.
pub fn compare_report(cells: &[ExperimentCell]) -> CompareReport {
    let mut report = CompareReport::default();
    let mut columns: Vec<Column> = cells.iter().map(|c| c.column).collect();
    columns.sort();
    columns.dedup();
    for col in &columns {
        let mut levels: Vec<u32> = cells.iter().filter(|c| c.column == *col).map(|c| c.level).collect();
        levels.sort();
        for &l in &levels {
            if let (Some(a), Some(b)) = (ok_kappa(cells, col, l), ok_kappa(cells, col, l + 1)) {
                if a > 0.0 {
                    report.growth.push((col.label(), l, b / a));
                }
            }
        }
    }
    for c in cells.iter().filter(|c| c.column.preconditioner == PreconditionerKind::Two) {
        let one = Column { preconditioner: PreconditionerKind::One, ..c.column };
        if let (true, Some(k1)) = (c.status == CellStatus::Ok, ok_kappa(cells, &one, c.level)) {
            if k1 > 0.0 {
                let r = c.avg_kappa / k1;
                report.two_over_one = Some(report.two_over_one.map_or(r, |m: f64| m.max(r)));
            }
        }
    }
    let none = Column { preconditioner: PreconditionerKind::None, j: None, overlap: None };
    let growth = |col: &Column, l: u32| match (ok_kappa(cells, col, l), ok_kappa(cells, col, l + 1)) {
        (Some(a), Some(b)) if a > 0.0 => Some(b / a),
        _ => None,
    };
    let col = |p, ov| Column { preconditioner: p, j: Some(16), overlap: Some(ov) };
    let checks = &mut report.checks;
    for l in [4, 5] {
        checks.push(band(format!("none: κ growth {l}→{}", l + 1), growth(&none, l), 10.0, 24.0));
    }
    let og = col(PreconditionerKind::One, Overlap::Generous);
    checks.push(band("one J=16 generous: max/min κ over ℓ=3..6".into(), spread(cells, &og, 3..=6), 1.0, 2.0));
    let os = col(PreconditionerKind::One, Overlap::Small);
    checks.push(band("one J=16 small: κ growth 5→6".into(), growth(&os, 5), 4.0, 16.0));
    let tg = col(PreconditionerKind::Two, Overlap::Generous);
    checks.push(band("two J=16 generous: max/min κ over ℓ=4..6".into(), spread(cells, &tg, 4..=6), 1.0, 2.0));
    checks.push(band("max κ(two)/κ(one)".into(), report.two_over_one, 0.0, 2.0));
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            levels: vec![1, 2, 3],
            j_values: vec![4, 16],
            overlaps: vec![Overlap::Small],
            preconditioners: vec![PreconditionerKind::None, PreconditionerKind::One, PreconditionerKind::Two],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = small_config();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let parsed = ExperimentConfig::from_toml("levels = [2]\nJ = [4]\noverlaps = [\"generous\"]\n").unwrap();
        assert_eq!(parsed.levels, vec![2]);
        assert_eq!(parsed.overlaps, vec![Overlap::Generous]);
        assert!(ExperimentConfig::from_toml("J = [8]").is_err());
        assert!(ExperimentConfig::from_toml("levels = [0]").is_err());
        assert!(ExperimentConfig::from_toml("pcg_rel_tol = 0.0").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn columns_and_skips() {
        let cfg = small_config();
        assert_eq!(cfg.columns().len(), 5);
        let cells = run_experiment(&cfg, Execution::Serial, None).unwrap();
        assert_eq!(cells.len(), 15);
        let skipped = cells.iter().find(|c| c.level == 1 && c.column.j == Some(16)).unwrap();
        assert_eq!(skipped.status, CellStatus::Skipped);
        let first = cells
            .iter()
            .find(|c| c.level == 1 && c.column.j == Some(4) && c.column.preconditioner == PreconditionerKind::One)
            .unwrap();
        assert_eq!(first.status, CellStatus::Ok);
        assert_eq!(first.pdas_iterations, 1);
        assert!(cells.iter().all(|c| c.status != CellStatus::Error), "{cells:#?}");
    }

    #[test]
    fn deterministic_and_column_independent() {
        let cfg = small_config();
        let strip = |mut v: Vec<ExperimentCell>| {
            v.iter_mut().for_each(|c| c.t_solve = 0.0);
            v
        };
        let a = strip(run_experiment(&cfg, Execution::Serial, None).unwrap());
        let b = strip(run_experiment(&cfg, Execution::Serial, None).unwrap());
        assert_eq!(a, b);
        let only = ExperimentConfig {
            j_values: vec![16],
            preconditioners: vec![PreconditionerKind::Two],
            ..cfg
        };
        let c = strip(run_experiment(&only, Execution::Serial, None).unwrap());
        for cell in &c {
            assert!(a.contains(cell), "{cell:?}");
        }
    }

    #[test]
    fn tables_render_markers() {
        let col = Column { preconditioner: PreconditionerKind::None, j: None, overlap: None };
        let mut cell = ExperimentCell::empty(3, col, 400, CellStatus::Ok);
        cell.avg_kappa = 1234.5;
        let csv = render_table(std::slice::from_ref(&cell), TableKind::Kappa, TableFormat::Csv).unwrap();
        assert_eq!(csv, "level,none\n3,1.2345e3\n");
        let md = render_table(std::slice::from_ref(&cell), TableKind::Kappa, TableFormat::Markdown).unwrap();
        assert!(md.contains("| 3 | 1.2345e3 |"));
        cell.status = CellStatus::Dnc;
        let csv = render_table(std::slice::from_ref(&cell), TableKind::Time, TableFormat::Csv).unwrap();
        assert!(csv.ends_with("3,DNC\n"));
        cell.status = CellStatus::Skipped;
        let csv = render_table(&[cell], TableKind::PdasIters, TableFormat::Csv).unwrap();
        assert!(csv.ends_with("3,-\n"));
        assert!(render_table(&[], TableKind::Kappa, TableFormat::Csv).is_err());
    }

    #[test]
    fn compare_flags_bands() {
        let col = Column { preconditioner: PreconditionerKind::None, j: None, overlap: None };
        let mk = |l, k| ExperimentCell { avg_kappa: k, ..ExperimentCell::empty(l, col, 0, CellStatus::Ok) };
        let r = compare_report(&[mk(4, 1.0), mk(5, 16.0), mk(6, 30.0)]);
        assert_eq!(r.checks[0].passed, Some(true));
        assert_eq!(r.checks[1].passed, Some(false));
        assert_eq!(r.violations().count(), 1);
        assert!(r.checks[2].passed.is_none());
        assert_eq!(r.growth.len(), 2);
    }
}
