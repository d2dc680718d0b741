//! Batch Monte-Carlo driver and plot-ready output.
//!
//! An experiment is a grid of `(N, W, K)` cells, a replication count and a set
//! of algorithms. Every replication of every cell gets its own snapshot, and
//! every algorithm runs on that snapshot with a seed derived from its label, so
//! each run can be regenerated in isolation.
//!
//! Output layout under the output directory:
//!
//! ```text
//! summary.json
//! summary.csv
//! figures/iterations.csv
//! figures/throughput.csv
//! figures/convergence/<cell>.csv
//! runs/<cell>/<rep>/snapshot.json
//! runs/<cell>/<rep>/<algo>.trace.csv
//! runs/<cell>/<rep>/<algo>.run.json
//! ```
//!
//! `<cell>` is `n{N}_w{W}_k{K}` and `<rep>` is the zero-padded replication
//! index. Throughput in every output is in bits per channel use.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{closest_ap, exhaustive_sep, k_connectivity, DEFAULT_ENUMERATION_CAP};
use crate::equilibria::{noise_potential, solve_all, system_potential, InnerSolver, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::netmodel::{generate_snapshot, NetworkParams, NetworkSnapshot, GENERATOR_ID};
use crate::radio::{nats_to_bits, sum_rate, AssociationProfile};
use crate::selection::{
    jaspa_run, se_jaspa_run, si_jaspa_run, verify_jep, JaspaConfig, RunOutcome, RunTrace, TraceRow,
};

/// One entry of the algorithm menu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Jaspa {
        cost_bits: f64,
    },
    SeJaspa {
        cost_bits: f64,
    },
    SiJaspa {
        cost_bits: f64,
    },
    ClosestAp,
    /// SEP argmax profile with its power equilibrium; also yields `T*`.
    Exhaustive,
    KConnectivity,
}

impl Algorithm {
    /// Canonical label, also used as file stem. Costs render as
    /// `jaspa_cost3` or `si_jaspa_cost2.5`.
    pub fn label(&self) -> String {
        let with_cost = |base: &str, c: f64| {
            if c == 0.0 {
                base.to_string()
            } else {
                format!("{base}_cost{c}")
            }
        };
        match *self {
            Algorithm::Jaspa { cost_bits } => with_cost("jaspa", cost_bits),
            Algorithm::SeJaspa { cost_bits } => with_cost("se_jaspa", cost_bits),
            Algorithm::SiJaspa { cost_bits } => with_cost("si_jaspa", cost_bits),
            Algorithm::ClosestAp => "closest_ap".into(),
            Algorithm::Exhaustive => "exhaustive".into(),
            Algorithm::KConnectivity => "k_connectivity".into(),
        }
    }

    pub fn cost_bits(&self) -> f64 {
        match *self {
            Algorithm::Jaspa { cost_bits } | Algorithm::SeJaspa { cost_bits } | Algorithm::SiJaspa { cost_bits } => {
                cost_bits
            }
            _ => 0.0,
        }
    }

    /// Whether the algorithm has outer iterations and a convergence event.
    pub fn is_iterative(&self) -> bool {
        matches!(
            self,
            Algorithm::Jaspa { .. } | Algorithm::SeJaspa { .. } | Algorithm::SiJaspa { .. }
        )
    }

    /// Accepts the canonical label as well as `jaspa_cost(3)` and `jaspa_cost:3`.
    pub fn parse(label: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown algorithm {label:?}"));
        match label {
            "closest_ap" => return Ok(Algorithm::ClosestAp),
            "exhaustive" => return Ok(Algorithm::Exhaustive),
            "k_connectivity" => return Ok(Algorithm::KConnectivity),
            _ => {}
        }
        let (base, cost) = match label.split_once("_cost") {
            Some((base, rest)) => {
                let rest = rest.strip_prefix(':').unwrap_or(rest);
                let rest = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(rest);
                let c: f64 = rest.parse().map_err(|_| bad())?;
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::Config(format!("connection cost in {label:?} must be >= 0")));
                }
                (base, c)
            }
            None => (label, 0.0),
        };
        match base {
            "jaspa" => Ok(Algorithm::Jaspa { cost_bits: cost }),
            "se_jaspa" => Ok(Algorithm::SeJaspa { cost_bits: cost }),
            "si_jaspa" => Ok(Algorithm::SiJaspa { cost_bits: cost }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        Algorithm::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Lists of values spanning the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub n_cus: Vec<usize>,
    pub n_aps: Vec<usize>,
    pub n_channels: Vec<usize>,
}

impl Default for CellGrid {
    fn default() -> Self {
        Self {
            n_cus: vec![4, 6, 8],
            n_aps: vec![1, 2, 3, 4],
            n_channels: vec![8, 16, 64],
        }
    }
}

fn default_replications() -> usize {
    100
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_area() -> f64 {
    10.0
}
fn default_budget() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    1e-2
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_margin() -> f64 {
    1e-9
}
fn default_max_outer() -> usize {
    500
}
fn default_cap() -> u64 {
    DEFAULT_ENUMERATION_CAP
}
fn default_power_tol() -> f64 {
    1e-5
}
fn default_rate_margin() -> f64 {
    1e-6
}

/// Experiment description, read from a single JSON document. Every field
/// except `algorithms` has a default, and the resolved values are echoed into
/// `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub cells: CellGrid,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_area")]
    pub area_side: f64,
    #[serde(default = "default_budget")]
    pub budget_per_cu: f64,
    #[serde(default = "default_noise")]
    pub noise_per_channel: f64,
    /// Belief window; `max(N, 10)` when absent.
    #[serde(default)]
    pub memory_len: Option<usize>,
    #[serde(default)]
    pub inner_solver: InnerSolver,
    #[serde(default = "default_tol")]
    pub inner_tol: f64,
    #[serde(default = "default_margin")]
    pub switch_margin: f64,
    /// Outer iteration cap for JASPA and Si-JASPA. Se-JASPA gets `N` times
    /// this many single-CU turns.
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_cap")]
    pub enumeration_cap: u64,
    #[serde(default = "default_power_tol")]
    pub verify_power_tol: f64,
    #[serde(default = "default_rate_margin")]
    pub verify_rate_margin: f64,
    /// Record per-CU beliefs in convergence figure data.
    #[serde(default)]
    pub record_beliefs: bool,
}

impl ExperimentConfig {
    pub fn new(algorithms: Vec<Algorithm>) -> Self {
        Self {
            cells: CellGrid::default(),
            algorithms,
            replications: default_replications(),
            base_seed: 0,
            output_dir: default_output_dir(),
            area_side: default_area(),
            budget_per_cu: default_budget(),
            noise_per_channel: default_noise(),
            memory_len: None,
            inner_solver: InnerSolver::default(),
            inner_tol: default_tol(),
            switch_margin: default_margin(),
            max_outer: default_max_outer(),
            enumeration_cap: default_cap(),
            verify_power_tol: default_power_tol(),
            verify_rate_margin: default_rate_margin(),
            record_beliefs: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithm set is empty".into()));
        }
        let g = &self.cells;
        if g.n_cus.is_empty() || g.n_aps.is_empty() || g.n_channels.is_empty() {
            return Err(Error::Config("every cell dimension needs at least one value".into()));
        }
        if self.inner_tol.is_nan() || self.inner_tol <= 0.0 {
            return Err(Error::Config("inner_tol must be > 0".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::Config("max_outer must be at least 1".into()));
        }
        for cell in self.cell_list() {
            self.params(cell, 0).validate()?;
        }
        Ok(())
    }

    /// Cells in grid order: `N` outermost, then `W`, then `K`.
    pub fn cell_list(&self) -> Vec<Cell> {
        let g = &self.cells;
        let mut out = Vec::new();
        for &n in &g.n_cus {
            for &w in &g.n_aps {
                for &k in &g.n_channels {
                    out.push(Cell { n, w, k });
                }
            }
        }
        out
    }

    pub fn params(&self, cell: Cell, rep: usize) -> NetworkParams {
        NetworkParams {
            n_cus: cell.n,
            n_aps: cell.w,
            n_channels: cell.k,
            area_side: self.area_side,
            budget_per_cu: self.budget_per_cu,
            noise_per_channel: self.noise_per_channel,
            seed: snapshot_seed(self.base_seed, cell, rep),
        }
    }

    fn jaspa_config(&self, cell: Cell, algo: Algorithm, seed: u64) -> JaspaConfig {
        let mut c = JaspaConfig::new(cell.n, seed);
        if let Some(m) = self.memory_len {
            c.memory_len = m;
            c.allow_short_memory = m < cell.n;
        }
        c.connection_cost_bits = algo.cost_bits();
        c.inner_solver = self.inner_solver;
        c.inner_tol = self.inner_tol;
        c.switch_margin = self.switch_margin;
        c.max_outer = match algo {
            Algorithm::SeJaspa { .. } => self.max_outer * cell.n,
            _ => self.max_outer,
        };
        c.record_beliefs = self.record_beliefs;
        c.verify_power_tol = self.verify_power_tol;
        c.verify_rate_margin = self.verify_rate_margin;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub w: usize,
    pub k: usize,
}

impl Cell {
    pub fn dir_name(&self) -> String {
        format!("n{}_w{}_k{}", self.n, self.w, self.k)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N={} W={} K={}", self.n, self.w, self.k)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Snapshot seed: `base_seed XOR h`, where `h` folds `N, W, K, rep` through
/// SplitMix64 as `h = splitmix64(h XOR v)` starting from `h = 0`.
pub fn snapshot_seed(base_seed: u64, cell: Cell, rep: usize) -> u64 {
    let h = [cell.n as u64, cell.w as u64, cell.k as u64, rep as u64]
        .into_iter()
        .fold(0u64, |h, v| splitmix64(h ^ v));
    base_seed ^ h
}

/// Seed of an algorithm's own randomness on a given snapshot: the snapshot
/// seed mixed with the FNV-1a hash of the canonical label.
pub fn algorithm_seed(snapshot_seed: u64, algo: &Algorithm) -> u64 {
    let fnv = algo.label().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    });
    splitmix64(snapshot_seed ^ fnv)
}

/// Outcome of one algorithm on one snapshot, as written to `<algo>.run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: Cell,
    pub rep: usize,
    pub snapshot_seed: u64,
    pub algorithm: Algorithm,
    pub algorithm_seed: u64,
    /// 1-based AP per CU, dash-joined.
    pub association: Option<String>,
    pub throughput_bits: Option<f64>,
    /// Outer iterations, for iterative algorithms only.
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub is_jep: Option<bool>,
    /// `T*` of the snapshot, when the exhaustive algorithm ran and succeeded.
    pub t_star_bits: Option<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn ratio_vs_t_star(&self) -> Option<f64> {
        Some(self.throughput_bits? / self.t_star_bits?)
    }
}

/// Mean and sample standard deviation (zero for fewer than two values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Stat {
            mean,
            std,
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: Cell,
    pub algorithm: Algorithm,
    pub runs: usize,
    pub failures: usize,
    pub throughput_bits: Option<Stat>,
    pub iterations: Option<Stat>,
    /// Fraction of successful runs that converged.
    pub convergence_rate: Option<f64>,
    pub jep_rate: Option<f64>,
    pub ratio_vs_t_star: Option<Stat>,
}

impl SummaryRow {
    fn from_records(cell: Cell, algorithm: Algorithm, records: &[&RunRecord]) -> Self {
        let ok: Vec<&&RunRecord> = records.iter().filter(|r| r.error.is_none()).collect();
        let collect = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
        let fraction = |f: &dyn Fn(&RunRecord) -> Option<bool>| -> Option<f64> {
            let flags: Vec<bool> = ok.iter().filter_map(|r| f(r)).collect();
            (!flags.is_empty()).then(|| flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64)
        };
        SummaryRow {
            cell,
            algorithm,
            runs: records.len(),
            failures: records.len() - ok.len(),
            throughput_bits: Stat::of(&collect(&|r| r.throughput_bits)),
            iterations: Stat::of(&collect(&|r| r.iterations.map(|i| i as f64))),
            convergence_rate: fraction(&|r| r.converged),
            jep_rate: fraction(&|r| r.is_jep),
            ratio_vs_t_star: Stat::of(&collect(&|r| r.ratio_vs_t_star())),
        }
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: Metadata,
    pub rows: Vec<SummaryRow>,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub generator: String,
    pub config: ExperimentConfig,
    pub seed_derivation: String,
    pub convergence_events: Vec<(String, String)>,
    pub units: String,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn row(&self, cell: Cell, algorithm: &Algorithm) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.cell == cell && &r.algorithm == algorithm)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "n,w,k,algorithm,runs,failures,throughput_mean_bits,throughput_std_bits,\
             iterations_mean,iterations_std,convergence_rate,jep_rate,ratio_t_star_mean,ratio_t_star_std\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.cell.n,
                r.cell.w,
                r.cell.k,
                r.algorithm,
                r.runs,
                r.failures,
                opt(r.throughput_bits.map(|s| s.mean)),
                opt(r.throughput_bits.map(|s| s.std)),
                opt(r.iterations.map(|s| s.mean)),
                opt(r.iterations.map(|s| s.std)),
                opt(r.convergence_rate),
                opt(r.jep_rate),
                opt(r.ratio_vs_t_star.map(|s| s.mean)),
                opt(r.ratio_vs_t_star.map(|s| s.std)),
            ));
        }
        out
    }

    /// Mean outer iterations against connection cost.
    pub fn iterations_figure_csv(&self) -> String {
        let mut out = String::from("n,w,k,algorithm,cost_bits,iterations_mean,iterations_std\n");
        for r in self.rows.iter().filter(|r| r.algorithm.is_iterative()) {
            if let Some(it) = r.iterations {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.cell.n,
                    r.cell.w,
                    r.cell.k,
                    r.algorithm,
                    r.algorithm.cost_bits(),
                    it.mean,
                    it.std
                ));
            }
        }
        out
    }

    /// Mean throughput against the number of APs, one line per algorithm.
    pub fn throughput_figure_csv(&self) -> String {
        let mut out = String::from("n,w,k,algorithm,throughput_mean_bits,throughput_std_bits\n");
        for r in &self.rows {
            if let Some(t) = r.throughput_bits {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.cell.n, r.cell.w, r.cell.k, r.algorithm, t.mean, t.std
                ));
            }
        }
        for cell in self.metadata.config.cell_list() {
            let t: Vec<f64> = self
                .runs
                .iter()
                .filter(|r| r.cell == cell && r.algorithm == Algorithm::Exhaustive)
                .filter_map(|r| r.t_star_bits)
                .collect();
            if let Some(t) = Stat::of(&t) {
                out.push_str(&format!(
                    "{},{},{},t_star,{},{}\n",
                    cell.n, cell.w, cell.k, t.mean, t.std
                ));
            }
        }
        out
    }
}

/// Per-iteration sum rate (bits) and potential (nats) for several traces,
/// side by side. Columns are `iter`, then `<label>:sum_rate` and
/// `<label>:potential` for each trace, then `<label>:beta_cu<i>_ap<w>`
/// (1-based) for traces that recorded beliefs. The belief on row `t` is the
/// one the association of row `t` was sampled from, so row 0 has none.
/// Shorter traces leave their cells empty.
pub fn emit_convergence_figure_data(traces: &[(String, &RunTrace)]) -> String {
    let mut header = vec!["iter".to_string()];
    for (label, t) in traces {
        header.push(format!("{label}:sum_rate"));
        header.push(format!("{label}:potential"));
        if let Some(first) = t.beliefs.as_ref().and_then(|b| b.first()) {
            for (i, beta) in first.iter().enumerate() {
                for w in 0..beta.len() {
                    header.push(format!("{label}:beta_cu{}_ap{}", i + 1, w + 1));
                }
            }
        }
    }
    let len = traces.iter().map(|(_, t)| t.rows.len()).max().unwrap_or(0);
    let mut out = header.join(",") + "\n";
    for it in 0..len {
        let mut cols = vec![it.to_string()];
        for (_, t) in traces {
            match t.rows.get(it) {
                Some(r) => {
                    cols.push(nats_to_bits(r.sum_rate).to_string());
                    cols.push(r.system_potential.to_string());
                }
                None => cols.extend([String::new(), String::new()]),
            }
            if let Some(b) = &t.beliefs {
                let width: usize = b.first().map(|f| f.iter().map(Vec::len).sum()).unwrap_or(0);
                match it.checked_sub(1).and_then(|j| b.get(j)) {
                    Some(row) => cols.extend(row.iter().flatten().map(|v| v.to_string())),
                    None => cols.extend(std::iter::repeat_n(String::new(), width)),
                }
            }
        }
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

struct AlgoOutput {
    record: RunRecord,
    trace: RunTrace,
}

fn single_row_trace(a: &AssociationProfile, throughput: f64, potential: f64) -> RunTrace {
    RunTrace {
        rows: vec![TraceRow {
            iter: 0,
            association: a.clone(),
            sum_rate: throughput,
            system_potential: potential,
            switches: 0,
        }],
        beliefs: None,
    }
}

fn run_algorithm(cfg: &ExperimentConfig, cell: Cell, rep: usize, s: &NetworkSnapshot, algo: Algorithm) -> AlgoOutput {
    let snap_seed = s.params().seed;
    let seed = algorithm_seed(snap_seed, &algo);
    let mut record = RunRecord {
        cell,
        rep,
        snapshot_seed: snap_seed,
        algorithm: algo,
        algorithm_seed: seed,
        association: None,
        throughput_bits: None,
        iterations: None,
        converged: None,
        is_jep: None,
        t_star_bits: None,
        error: None,
    };
    let result: Result<RunTrace> = (|| match algo {
        Algorithm::Jaspa { .. } | Algorithm::SeJaspa { .. } | Algorithm::SiJaspa { .. } => {
            let jc = cfg.jaspa_config(cell, algo, seed);
            let out: RunOutcome = match algo {
                Algorithm::Jaspa { .. } => jaspa_run(s, &jc)?,
                Algorithm::SeJaspa { .. } => se_jaspa_run(s, &jc)?,
                _ => si_jaspa_run(s, &jc)?,
            };
            record.association = Some(out.association.label());
            record.throughput_bits = Some(nats_to_bits(out.sum_rate(s)));
            record.iterations = Some(out.iterations);
            record.converged = Some(out.converged);
            record.is_jep = Some(out.jep.is_jep);
            Ok(out.trace)
        }
        Algorithm::ClosestAp => {
            let a = closest_ap(s);
            let (p, _) = solve_all(s, &a, cfg.inner_solver, cfg.inner_tol)?;
            let t = sum_rate(s, &a, &p);
            let jep = verify_jep(s, &a, &p, cfg.verify_power_tol, cfg.verify_rate_margin)?;
            record.association = Some(a.label());
            record.throughput_bits = Some(nats_to_bits(t));
            record.is_jep = Some(jep.is_jep);
            let pot = system_potential(s, &p, &a);
            Ok(single_row_trace(&a, t, pot))
        }
        Algorithm::Exhaustive => {
            let ex = exhaustive_sep(s, cfg.inner_tol, cfg.enumeration_cap, false)?;
            let a = ex.best_assoc;
            let (p, _) = solve_all(s, &a, InnerSolver::SIwf, cfg.inner_tol)?;
            let t = sum_rate(s, &a, &p);
            let noise_floor: f64 = (0..s.n_aps()).map(|ap| noise_potential(s, ap)).sum();
            let jep = verify_jep(s, &a, &p, cfg.verify_power_tol, cfg.verify_rate_margin)?;
            record.association = Some(a.label());
            record.throughput_bits = Some(nats_to_bits(t));
            record.is_jep = Some(jep.is_jep);
            record.t_star_bits = Some(nats_to_bits(ex.best_sep - noise_floor));
            Ok(single_row_trace(&a, t, ex.best_sep))
        }
        Algorithm::KConnectivity => {
            let kc = k_connectivity(s, cfg.inner_tol)?;
            record.throughput_bits = Some(nats_to_bits(kc.throughput));
            let pot = kc.report.potential_trace.last().copied().unwrap_or(f64::NAN);
            Ok(single_row_trace(
                &AssociationProfile::uniform(s.n_cus(), 0),
                kc.throughput,
                pot,
            ))
        }
    })();
    match result {
        Ok(trace) => AlgoOutput { record, trace },
        Err(e) => {
            record.error = Some(e.to_string());
            AlgoOutput {
                record,
                trace: RunTrace::default(),
            }
        }
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

struct RepOutput {
    records: Vec<RunRecord>,
    traces: Vec<(String, RunTrace)>,
}

fn run_replication(cfg: &ExperimentConfig, cell: Cell, rep: usize) -> Result<RepOutput> {
    let params = cfg.params(cell, rep);
    let dir = cfg
        .output_dir
        .join("runs")
        .join(cell.dir_name())
        .join(format!("{rep:04}"));
    let s = generate_snapshot(&params)?;
    write_atomic(&dir.join("snapshot.json"), &(s.to_json() + "\n"))?;

    let mut outputs: Vec<AlgoOutput> = cfg
        .algorithms
        .iter()
        .map(|&algo| run_algorithm(cfg, cell, rep, &s, algo))
        .collect();
    let t_star = outputs
        .iter()
        .find(|o| o.record.algorithm == Algorithm::Exhaustive)
        .and_then(|o| o.record.t_star_bits);
    for o in &mut outputs {
        if o.record.error.is_none() {
            o.record.t_star_bits = t_star;
        }
        let stem = o.record.algorithm.label();
        write_atomic(&dir.join(format!("{stem}.trace.csv")), &o.trace.to_csv())?;
        let json = serde_json::to_string_pretty(&o.record)? + "\n";
        write_atomic(&dir.join(format!("{stem}.run.json")), &json)?;
    }
    Ok(RepOutput {
        records: outputs.iter().map(|o| o.record.clone()).collect(),
        traces: outputs
            .into_iter()
            .map(|o| (o.record.algorithm.label(), o.trace))
            .collect(),
    })
}

fn metadata(cfg: &ExperimentConfig) -> Metadata {
    Metadata {
        generator: GENERATOR_ID.to_string(),
        config: cfg.clone(),
        seed_derivation: "snapshot_seed = base_seed XOR fold(h=0; v in [N,W,K,rep]; h = splitmix64(h XOR v)); \
                          algorithm_seed = splitmix64(snapshot_seed XOR fnv1a64(label))"
            .to_string(),
        convergence_events: vec![
            (
                "jaspa".into(),
                "association unchanged for M iterations and every belief elementary on the current AP".into(),
            ),
            (
                "si_jaspa".into(),
                "association unchanged for M iterations and every belief elementary on the current AP".into(),
            ),
            (
                "se_jaspa".into(),
                "N consecutive single-CU turns without a switch or a power change above inner_tol; \
                 iterations count turns"
                    .into(),
            ),
        ],
        units: "throughput in bits per channel use; potentials in nats; associations 1-based".into(),
    }
}

/// Runs every replication of every cell and writes all outputs. Solver
/// failures of individual runs are recorded in the report; only I/O and
/// configuration problems return an error. Runs are distributed over the
/// current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    use rayon::prelude::*;

    cfg.validate()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;

    let jobs: Vec<(Cell, usize)> = cfg
        .cell_list()
        .into_iter()
        .flat_map(|c| (0..cfg.replications).map(move |r| (c, r)))
        .collect();
    let results: Vec<RepOutput> = jobs
        .par_iter()
        .map(|&(cell, rep)| run_replication(cfg, cell, rep))
        .collect::<Result<_>>()?;

    let runs: Vec<RunRecord> = results.iter().flat_map(|r| r.records.iter().cloned()).collect();
    let mut rows = Vec::new();
    for cell in cfg.cell_list() {
        for &algo in &cfg.algorithms {
            let recs: Vec<&RunRecord> = runs.iter().filter(|r| r.cell == cell && r.algorithm == algo).collect();
            rows.push(SummaryRow::from_records(cell, algo, &recs));
        }
    }
    let report = ExperimentReport {
        metadata: metadata(cfg),
        rows,
        runs,
    };

    for (i, cell) in cfg.cell_list().into_iter().enumerate() {
        let first = &results[i * cfg.replications];
        let traces: Vec<(String, &RunTrace)> = first
            .traces
            .iter()
            .filter(|(_, t)| !t.rows.is_empty())
            .map(|(l, t)| (l.clone(), t))
            .collect();
        write_atomic(
            &out.join("figures")
                .join("convergence")
                .join(format!("{}.csv", cell.dir_name())),
            &emit_convergence_figure_data(&traces),
        )?;
    }
    write_atomic(
        &out.join("figures").join("iterations.csv"),
        &report.iterations_figure_csv(),
    )?;
    write_atomic(
        &out.join("figures").join("throughput.csv"),
        &report.throughput_figure_csv(),
    )?;
    write_atomic(&out.join("summary.csv"), &report.summary_csv())?;
    write_atomic(&out.join("summary.json"), &report.to_json())?;
    Ok(report)
}
