//! Parameter sweeps over (flavor, BER, MSDU length, MCS), protocol
//! comparison tables and their CSV/JSON serialization.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{monte_carlo_throughput, optimize_exact, ThroughputResult};
use crate::params::{ModelConfig, ProtocolFlavor, Scenario};

pub const CSV_HEADER: &str =
    "flavor,mcs,phy_rate_mbps,ber,msdu_len,x,y_base,n_extra,throughput_mbps,data_time_us,cycle_time_us";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub flavors: Vec<ProtocolFlavor>,
    pub bers: Vec<f64>,
    pub msdu_lens: Vec<u64>,
    /// Inclusive MCS index range per flavor; flavors not listed use every MCS.
    #[serde(default)]
    pub mcs_ranges: BTreeMap<ProtocolFlavor, (usize, usize)>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            flavors: ProtocolFlavor::ALL.to_vec(),
            bers: vec![0.0, 1e-7, 1e-6, 1e-5],
            msdu_lens: vec![64, 512, 1500],
            mcs_ranges: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    flavors: Option<Vec<String>>,
    bers: Option<Vec<f64>>,
    msdu_lens: Option<Vec<u64>>,
    mcs: Option<BTreeMap<String, (usize, usize)>>,
}

impl SweepGrid {
    /// Reads a TOML grid file; keys left out keep their default values.
    ///
    /// ```toml
    /// flavors = ["ax64", "ax256"]
    /// bers = [0, 1e-5]
    /// msdu_lens = [1500]
    /// mcs = { ax64 = [0, 9], ax256 = [0, 9] }
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: GridFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut grid = Self::default();
        if let Some(flavors) = file.flavors {
            grid.flavors = flavors.iter().map(|f| f.parse()).collect::<Result<_>>()?;
        }
        if let Some(bers) = file.bers {
            grid.bers = bers;
        }
        if let Some(lens) = file.msdu_lens {
            grid.msdu_lens = lens;
        }
        if let Some(mcs) = file.mcs {
            for (flavor, range) in mcs {
                grid.mcs_ranges.insert(flavor.parse()?, range);
            }
        }
        grid.normalize()?;
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Sorts and deduplicates every axis and rejects out-of-domain values.
    pub fn normalize(&mut self) -> Result<()> {
        if let Some(&ber) = self.bers.iter().find(|b| !(0.0..1.0).contains(*b)) {
            return Err(Error::InvalidBer(ber));
        }
        if self.msdu_lens.contains(&0) {
            return Err(Error::EmptyMsdu);
        }
        if let Some((flavor, _)) = self.mcs_ranges.iter().find(|(_, (lo, hi))| lo > hi) {
            return Err(Error::Config(format!("empty MCS range for {flavor}")));
        }
        self.flavors.sort();
        self.flavors.dedup();
        self.bers.sort_by(f64::total_cmp);
        self.bers.dedup();
        self.msdu_lens.sort();
        self.msdu_lens.dedup();
        Ok(())
    }

    fn mcs_indices(&self, flavor: ProtocolFlavor, model: &ModelConfig) -> Vec<usize> {
        let count = model.protocol(flavor).mcs_rates.len();
        match self.mcs_ranges.get(&flavor) {
            Some(&(lo, hi)) => (lo..=hi).collect(),
            None => (0..count).collect(),
        }
    }

    /// Every grid point in (flavor, ber, msdu_len, mcs) order.
    pub fn points(&self, model: &ModelConfig) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &flavor in &self.flavors {
            let indices = self.mcs_indices(flavor, model);
            for &ber in &self.bers {
                for &msdu_len in &self.msdu_lens {
                    for &mcs in &indices {
                        out.push(Scenario {
                            flavor,
                            mcs,
                            ber,
                            msdu_len,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub flavor: ProtocolFlavor,
    pub mcs: usize,
    pub phy_rate_mbps: Option<f64>,
    pub ber: f64,
    pub msdu_len: u64,
    pub x: Option<u32>,
    pub y_base: Option<u32>,
    pub n_extra: Option<u32>,
    pub throughput_mbps: Option<f64>,
    pub data_time_us: Option<f64>,
    pub cycle_time_us: Option<f64>,
    /// Why the point has no result.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepRow {
    fn from_result(point: &Scenario, model: &ModelConfig, result: Result<ThroughputResult>) -> Self {
        let rate = point.rate(model.protocol(point.flavor)).ok();
        let mut row = Self {
            flavor: point.flavor,
            mcs: point.mcs,
            phy_rate_mbps: rate,
            ber: point.ber,
            msdu_len: point.msdu_len,
            x: None,
            y_base: None,
            n_extra: None,
            throughput_mbps: None,
            data_time_us: None,
            cycle_time_us: None,
            error: None,
        };
        match result {
            Ok(r) => {
                row.x = Some(r.plan.x);
                row.y_base = Some(r.plan.y_base);
                row.n_extra = Some(r.plan.n_extra);
                row.throughput_mbps = Some(r.throughput);
                row.data_time_us = Some(r.airtime.data_time);
                row.cycle_time_us = Some(r.airtime.cycle_time);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }

    pub fn is_feasible(&self) -> bool {
        self.throughput_mbps.is_some()
    }

    fn key(&self) -> (usize, u64, u64) {
        (self.mcs, self.ber.to_bits(), self.msdu_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

pub fn evaluate_point(point: &Scenario, model: &ModelConfig) -> SweepRow {
    let config = model.protocol(point.flavor);
    let result = point
        .validate(config, &model.overhead)
        .and_then(|_| optimize_exact(point, config, &model.overhead));
    SweepRow::from_result(point, model, result)
}

/// One optimized row per grid point. Points whose scenario is invalid or
/// admits no transmission come back with empty result fields and `error` set.
pub fn run_sweep(grid: &SweepGrid, model: &ModelConfig) -> Vec<SweepRow> {
    run_sweep_with(grid, model, Execution::Parallel)
}

pub fn run_sweep_with(grid: &SweepGrid, model: &ModelConfig, execution: Execution) -> Vec<SweepRow> {
    let points = grid.points(model);
    match execution {
        Execution::Parallel => points.par_iter().map(|p| evaluate_point(p, model)).collect(),
        Execution::Sequential => points.iter().map(|p| evaluate_point(p, model)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementEntry {
    pub mcs: usize,
    pub ber: f64,
    pub msdu_len: u64,
    /// `100 * (a - b) / b`; `None` when either side has no result.
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerMaximum {
    pub ber: f64,
    pub percent: f64,
    pub mcs: usize,
    pub msdu_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementTable {
    pub flavor_a: ProtocolFlavor,
    pub flavor_b: ProtocolFlavor,
    /// One entry per row of `flavor_a`, in sweep order.
    pub entries: Vec<ImprovementEntry>,
    pub per_ber_max: Vec<BerMaximum>,
}

impl ImprovementTable {
    pub fn missing(&self) -> impl Iterator<Item = &ImprovementEntry> {
        self.entries.iter().filter(|e| e.percent.is_none())
    }

    pub fn max_for_ber(&self, ber: f64) -> Option<&BerMaximum> {
        self.per_ber_max.iter().find(|m| m.ber == ber)
    }
}

/// Relative throughput gain of `flavor_a` over `flavor_b` at every shared
/// (mcs, ber, msdu_len) point.
pub fn improvement(rows: &[SweepRow], flavor_a: ProtocolFlavor, flavor_b: ProtocolFlavor) -> ImprovementTable {
    let baseline: HashMap<_, _> = rows
        .iter()
        .filter(|r| r.flavor == flavor_b)
        .map(|r| (r.key(), r))
        .collect();
    let entries: Vec<ImprovementEntry> = rows
        .iter()
        .filter(|r| r.flavor == flavor_a)
        .map(|r| {
            let percent = baseline.get(&r.key()).and_then(|b| {
                let (ta, tb) = (r.throughput_mbps?, b.throughput_mbps?);
                (tb > 0.0).then(|| 100.0 * (ta - tb) / tb)
            });
            ImprovementEntry {
                mcs: r.mcs,
                ber: r.ber,
                msdu_len: r.msdu_len,
                percent,
            }
        })
        .collect();

    let mut per_ber_max: Vec<BerMaximum> = Vec::new();
    for e in &entries {
        let Some(percent) = e.percent else { continue };
        match per_ber_max.iter_mut().find(|m| m.ber == e.ber) {
            Some(m) if percent > m.percent => {
                *m = BerMaximum {
                    ber: e.ber,
                    percent,
                    mcs: e.mcs,
                    msdu_len: e.msdu_len,
                }
            }
            Some(_) => {}
            None => per_ber_max.push(BerMaximum {
                ber: e.ber,
                percent,
                mcs: e.mcs,
                msdu_len: e.msdu_len,
            }),
        }
    }
    per_ber_max.sort_by(|a, b| a.ber.total_cmp(&b.ber));
    ImprovementTable {
        flavor_a,
        flavor_b,
        entries,
        per_ber_max,
    }
}

/// `%g`-style formatting with `sig` significant digits.
pub fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= sig as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_float(v: Option<f64>) -> String {
    v.map(|v| format_sig(v, 6)).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.flavor,
            r.mcs,
            opt_float(r.phy_rate_mbps),
            format_sig(r.ber, 6),
            r.msdu_len,
            opt_cell(r.x),
            opt_cell(r.y_base),
            opt_cell(r.n_extra),
            opt_float(r.throughput_mbps),
            opt_float(r.data_time_us),
            opt_float(r.cycle_time_us),
        )?;
    }
    Ok(())
}

pub fn to_csv_string(rows: &[SweepRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

pub fn write_json<W: Write>(rows: &[SweepRow], out: W) -> io::Result<()> {
    serde_json::to_writer_pretty(out, rows).map_err(io::Error::other)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub scenario: Scenario,
    pub analytic_mbps: f64,
    pub simulated_mbps: f64,
    pub std_error_mbps: f64,
}

impl ValidationRow {
    pub fn relative_deviation(&self) -> f64 {
        (self.simulated_mbps - self.analytic_mbps).abs() / self.analytic_mbps
    }

    /// Deviation in standard errors; 0 when the simulation is deterministic.
    pub fn z_score(&self) -> f64 {
        let dev = (self.simulated_mbps - self.analytic_mbps).abs();
        if self.std_error_mbps > 0.0 {
            dev / self.std_error_mbps
        } else if dev <= 1e-9 * self.analytic_mbps {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Simulates the optimal plan of every feasible grid point. Point `i`
/// uses seed `seed + i`.
pub fn validate_grid(grid: &SweepGrid, model: &ModelConfig, cycles: u64, seed: u64) -> Result<Vec<ValidationRow>> {
    grid.points(model)
        .par_iter()
        .enumerate()
        .filter_map(|(i, point)| {
            let config = model.protocol(point.flavor);
            let best = optimize_exact(point, config, &model.overhead).ok()?;
            let run = || {
                let mc = monte_carlo_throughput(
                    &best.plan,
                    point,
                    config,
                    &model.overhead,
                    cycles,
                    seed.wrapping_add(i as u64),
                )?;
                Ok(ValidationRow {
                    scenario: *point,
                    analytic_mbps: best.throughput,
                    simulated_mbps: mc.throughput,
                    std_error_mbps: mc.std_error,
                })
            };
            Some(run())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_matches_printf_g() {
        assert_eq!(format_sig(0.0, 6), "0");
        assert_eq!(format_sig(1e-7, 6), "1e-07");
        assert_eq!(format_sig(1e-5, 6), "1e-05");
        assert_eq!(format_sig(4514.726063549, 6), "4514.73");
        assert_eq!(format_sig(234.0, 6), "234");
        assert_eq!(format_sig(221.3, 6), "221.3");
        assert_eq!(format_sig(1234567.0, 6), "1.23457e+06");
        assert_eq!(format_sig(999999.5, 6), "1e+06");
        assert_eq!(format_sig(0.000123456789, 6), "0.000123457");
        assert_eq!(format_sig(-2.5, 6), "-2.5");
    }

    #[test]
    fn default_grid_cardinality() {
        let model = ModelConfig::default();
        assert_eq!(SweepGrid::default().points(&model).len(), 4 * 3 * (10 + 12 + 12));
    }

    #[test]
    fn grid_file_overrides() {
        let g = SweepGrid::from_toml_str(
            "flavors = [\"ax256\", \"ax64\", \"ax64\"]\nbers = [1e-5, 0]\nmsdu_lens = [1500]\nmcs = { ax64 = [2, 4] }\n",
        )
        .unwrap();
        assert_eq!(g.flavors, vec![ProtocolFlavor::Ax64, ProtocolFlavor::Ax256]);
        assert_eq!(g.bers, vec![0.0, 1e-5]);
        let model = ModelConfig::default();
        assert_eq!(g.points(&model).len(), 2 * (3 + 12));
        assert!(SweepGrid::from_toml_str("bers = [1.0]").is_err());
        assert!(SweepGrid::from_toml_str("flavors = [\"ax32\"]").is_err());
        assert!(SweepGrid::from_toml_str("mcs = { ax64 = [4, 2] }").is_err());
        assert!(SweepGrid::from_toml_str("speed = 1").is_err());
    }

    #[test]
    fn invalid_points_are_flagged_not_fatal() {
        let mut grid = SweepGrid {
            flavors: vec![ProtocolFlavor::Ac64],
            bers: vec![0.0],
            msdu_lens: vec![1500],
            mcs_ranges: BTreeMap::new(),
        };
        grid.mcs_ranges.insert(ProtocolFlavor::Ac64, (9, 10));
        let rows = run_sweep(&grid, &ModelConfig::default());
        assert_eq!(rows.len(), 2);
        assert!(rows[0].is_feasible());
        assert!(!rows[1].is_feasible());
        assert!(rows[1].error.as_deref().unwrap().contains("unsupported MCS"));
        let csv = to_csv_string(&rows);
        assert!(csv.lines().nth(2).unwrap().starts_with("ac64,10,,0,1500,,,,,,"));
    }

    #[test]
    fn self_comparison_is_zero() {
        let grid = SweepGrid {
            flavors: vec![ProtocolFlavor::Ax64],
            bers: vec![0.0, 1e-5],
            msdu_lens: vec![512],
            mcs_ranges: BTreeMap::new(),
        };
        let rows = run_sweep(&grid, &ModelConfig::default());
        let t = improvement(&rows, ProtocolFlavor::Ax64, ProtocolFlavor::Ax64);
        assert_eq!(t.entries.len(), 24);
        assert!(t.entries.iter().all(|e| e.percent == Some(0.0)));
    }

    #[test]
    fn missing_counterparts_are_flagged() {
        let grid = SweepGrid {
            flavors: vec![ProtocolFlavor::Ac64, ProtocolFlavor::Ax256],
            bers: vec![0.0],
            msdu_lens: vec![1500],
            mcs_ranges: BTreeMap::new(),
        };
        let rows = run_sweep(&grid, &ModelConfig::default());
        let t = improvement(&rows, ProtocolFlavor::Ax256, ProtocolFlavor::Ac64);
        let missing: Vec<usize> = t.missing().map(|e| e.mcs).collect();
        assert_eq!(missing, vec![10, 11]);
        let reverse = improvement(&rows, ProtocolFlavor::Ac64, ProtocolFlavor::Ax256);
        for (a, b) in t.entries.iter().zip(&reverse.entries) {
            if let (Some(pa), Some(pb)) = (a.percent, b.percent) {
                assert_eq!(pa.signum(), -pb.signum());
            }
        }
    }

    #[test]
    fn json_rows_use_csv_field_names() {
        let grid = SweepGrid {
            flavors: vec![ProtocolFlavor::Ax64],
            bers: vec![0.0],
            msdu_lens: vec![64],
            mcs_ranges: BTreeMap::from([(ProtocolFlavor::Ax64, (0, 0))]),
        };
        let rows = run_sweep(&grid, &ModelConfig::default());
        let mut buf = Vec::new();
        write_json(&rows, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let obj = v[0].as_object().unwrap();
        for field in CSV_HEADER.split(',') {
            assert!(obj.contains_key(field), "{field}");
        }
        let back: Vec<SweepRow> = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, rows);
    }
}
