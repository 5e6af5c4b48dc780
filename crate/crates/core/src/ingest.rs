//! Data ingestion and coarse-graining: read delimited observation files, bin
//! rows into multinomial counts over a state grid, and persist fitted
//! artifacts as versioned structured-text records.
//!
//! Bins are half-open `[lo, hi)` with the last bin closed, so a value on an
//! interior edge lands in the upper cell. Persistence uses JSON with
//! shortest-round-trip float encoding, so reloaded numeric fields are
//! bit-identical.

use crate::cme::CmeSolution;
use crate::error::{Error, Result};
use crate::posterior::{ChainResult, TuningRecord};
use crate::prob::{GridCell, ObservedCounts, SimplexDistribution, StateGrid};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Version tag embedded in every persisted record.
pub const FORMAT_VERSION: u32 = 1;

/// Column selection for [`read_observations`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Name(String),
    Index(usize),
}

/// What to do with rows that fail to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BadRowPolicy {
    /// Drop the row and count it.
    Reject,
    /// Fail the whole read.
    Error,
}

/// Parsed numeric rows plus the number of rejected ones.
#[derive(Debug, Clone)]
pub struct ReadReport {
    pub rows: Vec<Vec<f64>>,
    pub rejected: usize,
}

/// Read the selected columns of a delimited text file with a header row.
pub fn read_observations(
    path: &Path,
    columns: &[ColumnSelector],
    delimiter: u8,
    on_bad_row: BadRowPolicy,
) -> Result<ReadReport> {
    if columns.is_empty() {
        return Err(Error::InvalidConfig("no columns selected".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .clone();
    let indices: Vec<usize> = columns
        .iter()
        .map(|c| match c {
            ColumnSelector::Index(i) => {
                if *i < headers.len() {
                    Ok(*i)
                } else {
                    Err(Error::Parse(format!(
                        "column index {i} out of range ({} columns)",
                        headers.len()
                    )))
                }
            }
            ColumnSelector::Name(name) => headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("column '{name}' not found in header"))),
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut rejected = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))?;
        let mut row = Vec::with_capacity(indices.len());
        let mut ok = true;
        for &i in &indices {
            match record.get(i).map(str::trim).and_then(|s| s.parse::<f64>().ok()) {
                Some(v) if v.is_finite() => row.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            rows.push(row);
        } else {
            match on_bad_row {
                BadRowPolicy::Reject => rejected += 1,
                BadRowPolicy::Error => {
                    return Err(Error::Parse(format!(
                        "row {} has a missing or non-numeric field",
                        line + 2
                    )))
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no numeric rows", path.display())));
    }
    Ok(ReadReport { rows, rejected })
}

/// Prepend the constant 1 to every row, the regression state convention.
pub fn prepend_constant(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    rows.into_iter()
        .map(|r| {
            let mut out = Vec::with_capacity(r.len() + 1);
            out.push(1.0);
            out.extend(r);
            out
        })
        .collect()
}

/// Per-coordinate bin layout.
#[derive(Debug, Clone, PartialEq)]
pub enum BinMode {
    /// `cells` equal-width bins over `range`, or over the observed
    /// min..max when `range` is `None`.
    EqualWidth {
        cells: usize,
        range: Option<(f64, f64)>,
    },
    /// Explicit strictly increasing edges.
    Edges(Vec<f64>),
}

/// How to treat rows falling outside the bin range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutOfRange {
    ClampToEnds,
    RejectRow,
    Error,
}

/// The coarse-graining map: one [`BinMode`] per coordinate plus the
/// out-of-range policy.
#[derive(Debug, Clone, PartialEq)]
pub struct BinningSpec {
    pub axes: Vec<BinMode>,
    pub out_of_range: OutOfRange,
}

fn axis_edges(mode: &BinMode, values: &[f64]) -> Result<Vec<f64>> {
    match mode {
        BinMode::EqualWidth { cells, range } => {
            if *cells < 2 {
                return Err(Error::InvalidConfig(
                    "equal-width binning needs at least 2 cells".into(),
                ));
            }
            let (lo, hi) = match range {
                Some((lo, hi)) => (*lo, *hi),
                None => {
                    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (lo, hi)
                }
            };
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!("invalid bin range [{lo}, {hi}]")));
            }
            let w = (hi - lo) / *cells as f64;
            Ok((0..=*cells).map(|i| lo + i as f64 * w).collect())
        }
        BinMode::Edges(edges) => {
            if edges.len() < 2 {
                return Err(Error::InvalidConfig("need at least two bin edges".into()));
            }
            if edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidConfig("bin edges must be strictly increasing".into()));
            }
            Ok(edges.clone())
        }
    }
}

/// Find the half-open bin for `v`: `[e_i, e_{i+1})`, last bin closed.
/// Returns `None` when `v` is out of range.
fn locate(edges: &[f64], v: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if v < edges[0] || v > edges[n] {
        return None;
    }
    if v == edges[n] {
        return Some(n - 1);
    }
    // partition_point gives the count of edges <= v, so the containing bin
    // index is that count minus one.
    let idx = edges.partition_point(|e| *e <= v);
    Some(idx - 1)
}

/// Bin rows into multinomial counts over the product grid defined by `spec`.
///
/// Counts sum to the number of accepted rows; cell representatives are bin
/// midpoints; cell widths are the bin widths.
pub fn bin(rows: &[Vec<f64>], spec: &BinningSpec) -> Result<(StateGrid, ObservedCounts)> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no rows to bin".into()));
    }
    let dim = rows[0].len();
    if dim == 0 || spec.axes.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: spec.axes.len(),
        });
    }
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidConfig("rows have inconsistent widths".into()));
    }
    let all_edges: Vec<Vec<f64>> = spec
        .axes
        .iter()
        .enumerate()
        .map(|(a, mode)| {
            let values: Vec<f64> = rows.iter().map(|r| r[a]).collect();
            axis_edges(mode, &values)
        })
        .collect::<Result<_>>()?;
    let cells_per_axis: Vec<usize> = all_edges.iter().map(|e| e.len() - 1).collect();
    let total_cells: usize = cells_per_axis.iter().product();
    if total_cells == 0 {
        return Err(Error::InvalidConfig("binning produced no cells".into()));
    }

    let mut counts = vec![0u64; total_cells];
    let mut accepted = 0u64;
    'rows: for row in rows {
        let mut flat = 0usize;
        for (a, &v) in row.iter().enumerate() {
            let edges = &all_edges[a];
            let idx = match locate(edges, v) {
                Some(i) => i,
                None => match spec.out_of_range {
                    OutOfRange::ClampToEnds => {
                        if v < edges[0] {
                            0
                        } else {
                            cells_per_axis[a] - 1
                        }
                    }
                    OutOfRange::RejectRow => continue 'rows,
                    OutOfRange::Error => {
                        return Err(Error::InvalidConfig(format!(
                            "value {v} out of range on axis {a}"
                        )))
                    }
                },
            };
            flat = flat * cells_per_axis[a] + idx;
        }
        counts[flat] += 1;
        accepted += 1;
    }
    if accepted == 0 {
        return Err(Error::InvalidConfig("all rows fell out of range".into()));
    }

    // Product grid in row-major order over the axes (last axis fastest, the
    // same layout the flat count index uses).
    let mut cells = Vec::with_capacity(total_cells);
    for flat in 0..total_cells {
        let mut rem = flat;
        let mut index = vec![0usize; dim];
        for a in (0..dim).rev() {
            index[a] = rem % cells_per_axis[a];
            rem /= cells_per_axis[a];
        }
        let mut coords = Vec::with_capacity(dim);
        let mut widths = Vec::with_capacity(dim);
        for a in 0..dim {
            let e = &all_edges[a];
            let i = index[a];
            coords.push(0.5 * (e[i] + e[i + 1]));
            widths.push(e[i + 1] - e[i]);
        }
        cells.push(GridCell { coords, widths });
    }
    Ok((StateGrid::new(cells)?, ObservedCounts::new(counts)?))
}

// ---------------------------------------------------------------------------
// Persistence records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridRecord {
    pub coords: Vec<Vec<f64>>,
    pub widths: Vec<Vec<f64>>,
}

impl GridRecord {
    pub fn from_grid(grid: &StateGrid) -> Self {
        Self {
            coords: grid.cells().iter().map(|c| c.coords.clone()).collect(),
            widths: grid.cells().iter().map(|c| c.widths.clone()).collect(),
        }
    }

    pub fn to_grid(&self) -> Result<StateGrid> {
        let cells = self
            .coords
            .iter()
            .zip(&self.widths)
            .map(|(c, w)| GridCell {
                coords: c.clone(),
                widths: w.clone(),
            })
            .collect();
        StateGrid::new(cells)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CmeSolutionRecord {
    pub lambda: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub achieved_moments: Vec<f64>,
    pub dual_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl CmeSolutionRecord {
    pub fn from_solution(solution: &CmeSolution) -> Self {
        Self {
            lambda: solution.lambda.clone(),
            q_hat: solution.q_hat.weights().to_vec(),
            achieved_moments: solution.achieved_moments.clone(),
            dual_value: solution.dual_value,
            converged: solution.converged,
            iterations: solution.iterations,
            warnings: solution.warnings.clone(),
        }
    }

    pub fn to_solution(&self) -> Result<CmeSolution> {
        Ok(CmeSolution {
            lambda: self.lambda.clone(),
            q_hat: SimplexDistribution::new(self.q_hat.clone())?,
            achieved_moments: self.achieved_moments.clone(),
            dual_value: self.dual_value,
            converged: self.converged,
            iterations: self.iterations,
            warnings: self.warnings.clone(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainRecord {
    pub samples: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
    pub acceptance_rate: f64,
    pub seed: u64,
    pub initial_step: f64,
    pub final_step: f64,
    pub burn_in_acceptance: f64,
    pub map_point: Vec<f64>,
    pub map_log_density: f64,
}

impl ChainRecord {
    pub fn from_chain(chain: &ChainResult) -> Self {
        Self {
            samples: chain.samples.clone(),
            log_density: chain.log_density.clone(),
            acceptance_rate: chain.acceptance_rate,
            seed: chain.seed,
            initial_step: chain.tuning.initial_step,
            final_step: chain.tuning.final_step,
            burn_in_acceptance: chain.tuning.burn_in_acceptance,
            map_point: chain.map_point.clone(),
            map_log_density: chain.map_log_density,
        }
    }

    pub fn to_chain(&self) -> ChainResult {
        ChainResult {
            samples: self.samples.clone(),
            log_density: self.log_density.clone(),
            acceptance_rate: self.acceptance_rate,
            seed: self.seed,
            tuning: TuningRecord {
                initial_step: self.initial_step,
                final_step: self.final_step,
                burn_in_acceptance: self.burn_in_acceptance,
            },
            map_point: self.map_point.clone(),
            map_log_density: self.map_log_density,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvidenceRecord {
    pub log_evidence: f64,
    pub method: String,
    pub resolution: Option<usize>,
    pub nodes: Option<usize>,
    pub equilibrium: Option<Vec<f64>>,
    pub divergence: Option<f64>,
}

/// Payload of a persisted record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Artifact {
    Grid(GridRecord),
    Counts { counts: Vec<u64> },
    CmeSolution(CmeSolutionRecord),
    Chain(ChainRecord),
    Evidence(EvidenceRecord),
    Fit {
        family: String,
        param_names: Vec<String>,
        map: Vec<f64>,
        chain: ChainRecord,
        extras: serde_json::Value,
    },
}

/// A versioned, self-describing result record: payload plus the seed and
/// fully resolved configuration that produced it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SavedRecord {
    pub version: u32,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub artifact: Artifact,
}

impl SavedRecord {
    pub fn new(artifact: Artifact, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            version: FORMAT_VERSION,
            seed,
            config,
            artifact,
        }
    }
}

/// Persist a record as pretty-printed JSON.
pub fn save_record(path: &Path, record: &SavedRecord) -> Result<()> {
    let json = serde_json::to_string_pretty(record)
        .map_err(|e| Error::Parse(format!("serialize: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

/// Load a record, rejecting unknown format versions.
pub fn load_record(path: &Path) -> Result<SavedRecord> {
    let text = std::fs::read_to_string(path)?;
    let record: SavedRecord = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if record.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: record.version.to_string(),
            expected: FORMAT_VERSION.to_string(),
        });
    }
    Ok(record)
}

/// Write a delimited table with full-precision numeric formatting.
pub fn write_table(path: &Path, headers: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    writer
        .write_record(headers)
        .map_err(|e| Error::Parse(format!("write header: {e}")))?;
    for row in rows {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writer
            .write_record(&fields)
            .map_err(|e| Error::Parse(format!("write row: {e}")))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_uses_half_open_bins_with_closed_last() {
        let edges = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(locate(&edges, 0.0), Some(0));
        assert_eq!(locate(&edges, 1.0), Some(1)); // interior edge -> upper cell
        assert_eq!(locate(&edges, 2.999), Some(2));
        assert_eq!(locate(&edges, 3.0), Some(2)); // last bin closed
        assert_eq!(locate(&edges, -0.1), None);
        assert_eq!(locate(&edges, 3.1), None);
    }

    #[test]
    fn bin_two_rows_into_two_cells() {
        let rows = vec![vec![0.1], vec![0.9]];
        let spec = BinningSpec {
            axes: vec![BinMode::EqualWidth {
                cells: 2,
                range: Some((0.0, 1.0)),
            }],
            out_of_range: OutOfRange::Error,
        };
        let (grid, counts) = bin(&rows, &spec).unwrap();
        assert_eq!(counts.counts(), &[1, 1]);
        assert_eq!(grid.cell(0).coords[0], 0.25);
        assert_eq!(grid.cell(1).coords[0], 0.75);
    }

    #[test]
    fn binning_is_row_order_invariant() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.731).sin()]).collect();
        let mut shuffled = rows.clone();
        shuffled.reverse();
        let spec = BinningSpec {
            axes: vec![BinMode::EqualWidth {
                cells: 8,
                range: Some((-1.0, 1.0)),
            }],
            out_of_range: OutOfRange::Error,
        };
        let (_, a) = bin(&rows, &spec).unwrap();
        let (_, b) = bin(&shuffled, &spec).unwrap();
        assert_eq!(a.counts(), b.counts());
    }

    #[test]
    fn refining_and_reaggregating_reproduces_coarse_counts() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 * 0.173).fract()]).collect();
        let coarse_spec = BinningSpec {
            axes: vec![BinMode::EqualWidth {
                cells: 5,
                range: Some((0.0, 1.0)),
            }],
            out_of_range: OutOfRange::Error,
        };
        let fine_spec = BinningSpec {
            axes: vec![BinMode::EqualWidth {
                cells: 10,
                range: Some((0.0, 1.0)),
            }],
            out_of_range: OutOfRange::Error,
        };
        let (_, coarse) = bin(&rows, &coarse_spec).unwrap();
        let (_, fine) = bin(&rows, &fine_spec).unwrap();
        for i in 0..5 {
            assert_eq!(
                coarse.counts()[i],
                fine.counts()[2 * i] + fine.counts()[2 * i + 1]
            );
        }
    }

    #[test]
    fn out_of_range_policies() {
        let rows = vec![vec![-1.0], vec![0.5], vec![2.0]];
        let axes = vec![BinMode::EqualWidth {
            cells: 2,
            range: Some((0.0, 1.0)),
        }];
        // 0.5 sits on the interior edge, so it lands in the upper cell.
        let clamp = BinningSpec {
            axes: axes.clone(),
            out_of_range: OutOfRange::ClampToEnds,
        };
        let (_, counts) = bin(&rows, &clamp).unwrap();
        assert_eq!(counts.counts(), &[1, 2]);
        let reject = BinningSpec {
            axes: axes.clone(),
            out_of_range: OutOfRange::RejectRow,
        };
        let (_, counts) = bin(&rows, &reject).unwrap();
        assert_eq!(counts.total(), 1);
        let error = BinningSpec {
            axes,
            out_of_range: OutOfRange::Error,
        };
        assert!(bin(&rows, &error).is_err());
    }

    #[test]
    fn explicit_edges_must_increase() {
        let spec = BinningSpec {
            axes: vec![BinMode::Edges(vec![0.0, 1.0, 1.0])],
            out_of_range: OutOfRange::Error,
        };
        assert!(bin(&[vec![0.5]], &spec).is_err());
    }

    #[test]
    fn product_binning_in_two_dimensions() {
        let rows = vec![vec![0.2, 0.8], vec![0.7, 0.2], vec![0.7, 0.9]];
        let spec = BinningSpec {
            axes: vec![
                BinMode::EqualWidth { cells: 2, range: Some((0.0, 1.0)) },
                BinMode::EqualWidth { cells: 2, range: Some((0.0, 1.0)) },
            ],
            out_of_range: OutOfRange::Error,
        };
        let (grid, counts) = bin(&rows, &spec).unwrap();
        assert_eq!(grid.len(), 4);
        assert_eq!(grid.dim(), 2);
        // Row-major: (lo,lo), (lo,hi), (hi,lo), (hi,hi).
        assert_eq!(counts.counts(), &[0, 1, 1, 1]);
    }

    #[test]
    fn record_round_trip_is_bit_identical() {
        let dir = std::env::temp_dir().join(format!("ingest-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("solution.json");
        let record = SavedRecord::new(
            Artifact::CmeSolution(CmeSolutionRecord {
                lambda: vec![3.0f64.ln(), 0.1234567890123456789],
                q_hat: vec![0.75, 0.25],
                achieved_moments: vec![0.25],
                dual_value: -1.234567890123456e-7,
                converged: true,
                iterations: 7,
                warnings: vec![],
            }),
            Some(42),
            serde_json::json!({"targets": [0.25]}),
        );
        save_record(&path, &record).unwrap();
        let loaded = load_record(&path).unwrap();
        assert_eq!(record, loaded);
        if let (Artifact::CmeSolution(a), Artifact::CmeSolution(b)) =
            (&record.artifact, &loaded.artifact)
        {
            for (x, y) in a.lambda.iter().zip(&b.lambda) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = std::env::temp_dir().join(format!("ingest-ver-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(
            &path,
            r#"{"version": 999, "seed": null, "config": {}, "artifact": {"kind": "counts", "counts": [1]}}"#,
        )
        .unwrap();
        match load_record(&path) {
            Err(Error::VersionMismatch { .. }) => {}
            other => panic!("expected version mismatch, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
