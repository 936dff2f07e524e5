//! Experiment drivers behind the `mimo-training` binary.
//!
//! Every command turns an [`ExperimentConfig`] into a [`Table`] whose
//! columns are fixed per command. Tables render as CSV (header row, ten
//! significant digits, `.` decimal point) or as a JSON object
//! `{command, columns, rows}`. Output depends only on the configuration, so
//! reruns with the same seed are byte-identical at any worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, gram_inverse, pinv, sample_complex_gaussian, taylor_pinv};
use crate::montecarlo::{
    cf_distance, empirical_noise_samples_at, estimate_ber_with, frame_rng, z_grid, BerEstimate, NoiseProbe, TrialPlan,
};
use crate::par::Execution;
use crate::power::{grid_search_delta, optimal_power, power_ratio_limits, Scheme};
use crate::quadrature::j_quadrature;
use crate::rmt::rmt_validators_with;
use crate::signal::{noise_power, PowerConfig, SystemDims};
use crate::stats::{mean, ols_slope, variance};
use crate::theory::{
    ber_ddst_highsnr, ber_ddst_theory, ber_floor, ber_tdmt_highsnr, ber_tdmt_theory, cf_theory_ddst_shifted,
    cf_theory_tdmt, delta_d, delta_t, j_function, mixture_spec,
};

/// Allowed mismatch of explicit powers against the scheme budget.
pub const BUDGET_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PowerMode {
    #[default]
    Optimal,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Effective settings of a run. Missing keys in a config file fall back to
/// [`Default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schemes: Vec<Scheme>,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub n1: usize,
    pub snr_db_start: f64,
    pub snr_db_stop: f64,
    pub snr_db_step: f64,
    pub power: PowerMode,
    /// Data power for `power = "explicit"`.
    pub sigma2_w: Option<f64>,
    /// Pilot power for `power = "explicit"`.
    pub sigma2_p: Option<f64>,
    /// Data bits per Monte Carlo point; 0 skips simulation in `sweep-c1`.
    pub bits: u64,
    pub seed: u64,
    pub target_ber: f64,
    /// `None` uses all cores.
    pub workers: Option<usize>,
    pub sweep_snr_db: f64,
    pub c1_grid: Vec<f64>,
    pub verify: bool,
    pub validate_k: usize,
    pub validate_m: usize,
    pub validate_reps: usize,
    pub validate_draws: u64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            k: 2,
            m: 4,
            n: 32,
            n1: 2,
            snr_db_start: 0.0,
            snr_db_stop: 20.0,
            snr_db_step: 2.0,
            power: PowerMode::Optimal,
            sigma2_w: None,
            sigma2_p: None,
            bits: 1_000_000,
            seed: 1,
            target_ber: 1e-2,
            workers: None,
            sweep_snr_db: 15.0,
            c1_grid: vec![0.01, 0.02, 0.025, 0.03125, 0.05, 0.0625, 0.1, 0.125, 0.25, 0.5],
            verify: false,
            validate_k: 32,
            validate_m: 64,
            validate_reps: 40,
            validate_draws: 100_000,
            out: None,
            format: OutputFormat::Csv,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config file: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn dims(&self) -> Result<SystemDims> {
        SystemDims::new(self.m, self.k, self.n, self.n1)
    }

    pub fn execution(&self) -> Execution {
        match self.workers {
            None => Execution::default(),
            Some(w) => Execution::with_workers(w),
        }
    }

    /// SNR points from start to stop inclusive.
    pub fn snr_grid(&self) -> Result<Vec<f64>> {
        let (a, b, h) = (self.snr_db_start, self.snr_db_stop, self.snr_db_step);
        if !(a.is_finite() && b.is_finite() && h.is_finite()) {
            return Err(Error::InvalidArgument("SNR grid must be finite".into()));
        }
        if b < a {
            return Err(Error::InvalidArgument(format!("empty SNR grid: stop {b} < start {a}")));
        }
        if a == b {
            return Ok(vec![a]);
        }
        if h <= 0.0 {
            return Err(Error::InvalidArgument(format!("SNR step {h} must be positive")));
        }
        let count = ((b - a) / h + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| a + i as f64 * h).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::InvalidArgument("no scheme selected".into()));
        }
        self.dims()?;
        self.snr_grid()?;
        if !(self.target_ber > 0.0 && self.target_ber < 0.5) {
            return Err(Error::InvalidArgument(format!("target BER {} outside (0, 0.5)", self.target_ber)));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        if !self.sweep_snr_db.is_finite() {
            return Err(Error::InvalidArgument("sweep SNR must be finite".into()));
        }
        if self.power == PowerMode::Explicit {
            match (self.sigma2_w, self.sigma2_p) {
                (Some(w), Some(p)) if w > 0.0 && p > 0.0 && w.is_finite() && p.is_finite() => {}
                _ => {
                    return Err(Error::InvalidPower(
                        "explicit power mode needs positive --sigma2-w and --sigma2-p".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// Powers for one point: the closed-form split, or the explicit pair
    /// checked against the scheme budget with `sigma2_T = 1`.
    pub fn power_at(&self, scheme: Scheme, dims: &SystemDims, snr_db: f64) -> Result<PowerConfig> {
        let mut power = PowerConfig::optimal(dims, snr_db)?;
        if self.power == PowerMode::Optimal {
            return Ok(power);
        }
        let (w, p) = match (self.sigma2_w, self.sigma2_p) {
            (Some(w), Some(p)) => (w, p),
            _ => return Err(Error::InvalidPower("explicit powers missing".into())),
        };
        let residual = match scheme {
            Scheme::Tdmt => {
                power.sigma2_wt = w;
                power.sigma2_pt = p;
                power.tdmt_budget_residual(dims)
            }
            Scheme::Ddst => {
                power.sigma2_wd = w;
                power.sigma2_pd = p;
                power.ddst_budget_residual(dims)
            }
        };
        if residual.abs() > BUDGET_TOLERANCE {
            return Err(Error::InvalidPower(format!(
                "{scheme}: sigma2_w = {w}, sigma2_p = {p} miss the power budget by {residual:.3e}"
            )));
        }
        Ok(power)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format_num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            Cell::Num(x) => format_num(*x)
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map_or(Value::Null, Value::Number),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Bool(b) => Value::from(*b),
            Cell::Empty => Value::Null,
        }
    }
}

/// Ten significant digits in scientific notation.
pub fn format_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.9e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub command: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Skipped inputs and similar notes, not part of the rendered output.
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct JsonTable<'a> {
    command: &'a str,
    columns: &'a [&'static str],
    rows: Vec<Vec<serde_json::Value>>,
}

impl Table {
    fn new(command: &'static str, columns: &[&'static str]) -> Self {
        Self { command, columns: columns.to_vec(), rows: Vec::new(), warnings: Vec::new() }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Index of a column by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = JsonTable {
            command: self.command,
            columns: &self.columns,
            rows: self.rows.iter().map(|r| r.iter().map(Cell::json).collect()).collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("table serialises");
        s.push('\n');
        s
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

fn simulate_point(
    cfg: &ExperimentConfig,
    scheme: Scheme,
    dims: &SystemDims,
    power: &PowerConfig,
) -> Result<BerEstimate> {
    let plan = TrialPlan::for_bits(scheme, *dims, *power, cfg.bits, cfg.seed);
    estimate_ber_with(&plan, cfg.execution())
}

fn theory_ber(scheme: Scheme, dims: &SystemDims, power: &PowerConfig) -> Result<f64> {
    match scheme {
        Scheme::Tdmt => ber_tdmt_theory(dims, power),
        Scheme::Ddst => ber_ddst_theory(dims, power),
    }
}

/// Closed-form curves: `snr_db, scheme, delta, ber_theory, ber_highsnr,
/// ber_floor`. TDMT has no floor and reports 0.
pub fn cmd_theory(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    let dims = cfg.dims()?;
    let mut t = Table::new("theory", &["snr_db", "scheme", "delta", "ber_theory", "ber_highsnr", "ber_floor"]);
    for &scheme in &cfg.schemes {
        for snr in cfg.snr_grid()? {
            let power = cfg.power_at(scheme, &dims, snr)?;
            let (delta, highsnr, floor) = match scheme {
                Scheme::Tdmt => (delta_t(&dims, &power)?, ber_tdmt_highsnr(&dims, &power)?, 0.0),
                Scheme::Ddst => (delta_d(&dims, &power)?, ber_ddst_highsnr(&dims, &power)?, ber_floor(&dims)?),
            };
            t.push(vec![
                Cell::Num(snr),
                Cell::text(scheme.as_str()),
                Cell::Num(delta),
                Cell::Num(theory_ber(scheme, &dims, &power)?),
                Cell::Num(highsnr),
                Cell::Num(floor),
            ]);
        }
    }
    Ok(t)
}

/// Monte Carlo BER next to theory. All points share the master seed.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    if cfg.bits == 0 {
        return Err(Error::InvalidArgument("simulate needs --bits > 0".into()));
    }
    let dims = cfg.dims()?;
    let mut t = Table::new(
        "simulate",
        &["snr_db", "scheme", "ber_empirical", "ci_low", "ci_high", "ber_theory", "total_bits", "seed"],
    );
    for &scheme in &cfg.schemes {
        for snr in cfg.snr_grid()? {
            let power = cfg.power_at(scheme, &dims, snr)?;
            let est = simulate_point(cfg, scheme, &dims, &power)?;
            t.push(vec![
                Cell::Num(snr),
                Cell::text(scheme.as_str()),
                Cell::Num(est.ber),
                Cell::Num(est.ci_low),
                Cell::Num(est.ci_high),
                Cell::Num(theory_ber(scheme, &dims, &power)?),
                Cell::Int(est.total_bits),
                Cell::Int(est.seed),
            ]);
        }
    }
    Ok(t)
}

/// Frame length for `c1 = K/N`, if it is a whole multiple of `K` that
/// leaves room for the TDMT pilot block.
fn frame_length(k: usize, n1: usize, c1: f64) -> std::result::Result<usize, String> {
    if !(c1 > 0.0 && c1 <= 1.0) {
        return Err(format!("c1 = {c1} outside (0, 1]"));
    }
    let n = k as f64 / c1;
    let rounded = n.round();
    if (n - rounded).abs() > 1e-9 * n {
        return Err(format!("c1 = {c1}: N = K/c1 = {n} is not an integer"));
    }
    let n = rounded as usize;
    if !n.is_multiple_of(k) {
        return Err(format!("c1 = {c1}: N = {n} is not a multiple of K = {k}"));
    }
    if n <= n1 {
        return Err(format!("c1 = {c1}: N = {n} leaves no data after N1 = {n1} pilots"));
    }
    Ok(n)
}

/// Both schemes across `c1 = K/N` at `sweep_snr_db`; N1 stays fixed.
/// Grid points without an admissible integer `N` are skipped with a warning.
pub fn cmd_sweep_c1(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    let mut t = Table::new(
        "sweep-c1",
        &["c1", "N", "ber_tdmt_theory", "ber_ddst_theory", "ber_tdmt_emp", "ber_ddst_emp"],
    );
    let snr = cfg.sweep_snr_db;
    for &c1 in &cfg.c1_grid {
        let n = match frame_length(cfg.k, cfg.n1, c1) {
            Ok(n) => n,
            Err(msg) => {
                t.warnings.push(format!("skipping {msg}"));
                continue;
            }
        };
        let dims = SystemDims::new(cfg.m, cfg.k, n, cfg.n1)?;
        let mut theory = [0.0; 2];
        let mut emp = [Cell::Empty, Cell::Empty];
        for (slot, scheme) in Scheme::ALL.into_iter().enumerate() {
            let power = cfg.power_at(scheme, &dims, snr)?;
            theory[slot] = theory_ber(scheme, &dims, &power)?;
            if cfg.bits > 0 {
                emp[slot] = Cell::Num(simulate_point(cfg, scheme, &dims, &power)?.ber);
            }
        }
        let [e_t, e_d] = emp;
        t.push(vec![
            Cell::Num(dims.c1()),
            Cell::Int(n as u64),
            Cell::Num(theory[0]),
            Cell::Num(theory[1]),
            e_t,
            e_d,
        ]);
    }
    Ok(t)
}

/// Smallest pilot length `N1` (largest `r = N2/N1`) meeting the target with
/// powers re-optimised for each candidate, or `None`.
pub fn min_pilot_length(dims: &SystemDims, snr_db: f64, target: f64) -> Result<Option<usize>> {
    for n1 in dims.k..dims.n {
        let d = dims.with_n1(n1)?;
        let power = PowerConfig::optimal(&d, snr_db)?;
        if ber_tdmt_theory(&d, &power)? <= target {
            return Ok(Some(n1));
        }
    }
    Ok(None)
}

/// Feasibility of the target BER per SNR. TDMT rows carry the smallest
/// sufficient `N1` and its `r`; DDST has no pilot length and leaves both
/// empty. Powers are always the closed-form split.
pub fn cmd_required_r(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    let dims = cfg.dims()?;
    let mut t = Table::new("required-r", &["snr_db", "scheme", "feasible", "N1_min", "r"]);
    for &scheme in &cfg.schemes {
        for snr in cfg.snr_grid()? {
            let row = match scheme {
                Scheme::Tdmt => match min_pilot_length(&dims, snr, cfg.target_ber)? {
                    Some(n1) => vec![
                        Cell::Bool(true),
                        Cell::Int(n1 as u64),
                        Cell::Num((dims.n - n1) as f64 / n1 as f64),
                    ],
                    None => vec![Cell::Bool(false), Cell::Empty, Cell::Empty],
                },
                Scheme::Ddst => {
                    let power = PowerConfig::optimal(&dims, snr)?;
                    let ok = ber_ddst_theory(&dims, &power)? <= cfg.target_ber;
                    vec![Cell::Bool(ok), Cell::Empty, Cell::Empty]
                }
            };
            let mut full = vec![Cell::Num(snr), Cell::text(scheme.as_str())];
            full.extend(row);
            t.push(full);
        }
    }
    Ok(t)
}

/// Closed-form splits with their limiting ratios. With `verify`, each split
/// is compared to a golden-section search over the budget line and a
/// relative gap above 1e-3 is an error.
pub fn cmd_alloc(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    let dims = cfg.dims()?;
    let mut t = Table::new(
        "alloc",
        &["scheme", "snr_db", "sigma2_w", "sigma2_p", "delta", "ratio", "highsnr_ratio", "large_system_ratio"],
    );
    for &scheme in &cfg.schemes {
        let (high, large) = power_ratio_limits(scheme, &dims);
        for snr in cfg.snr_grid()? {
            let v = noise_power(snr, 1.0);
            let a = optimal_power(scheme, &dims, 1.0, v)?;
            if cfg.verify {
                let oracle = grid_search_delta(scheme, &dims, 1.0, v, 1e-10)?;
                let gap = (oracle.sigma2_w - a.sigma2_w).abs() / a.sigma2_w;
                if gap > 1e-3 {
                    return Err(Error::CheckFailed(format!(
                        "{scheme} at {snr} dB: closed form {} vs search {} (relative gap {gap:.2e})",
                        a.sigma2_w, oracle.sigma2_w
                    )));
                }
            }
            t.push(vec![
                Cell::text(scheme.as_str()),
                Cell::Num(snr),
                Cell::Num(a.sigma2_w),
                Cell::Num(a.sigma2_p),
                Cell::Num(a.delta_value),
                Cell::Num(a.ratio()),
                Cell::Num(high),
                Cell::Num(large),
            ]);
        }
    }
    Ok(t)
}

/// Result of [`cmd_validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub table: Table,
    pub passed: bool,
}

struct Checks {
    table: Table,
}

impl Checks {
    fn add(&mut self, name: impl Into<String>, measured: f64, tolerance: f64) {
        let passed = measured.is_finite() && measured <= tolerance;
        self.table.push(vec![
            Cell::Text(name.into()),
            Cell::Num(measured),
            Cell::Num(tolerance),
            Cell::Bool(passed),
        ]);
    }

    fn add_min(&mut self, name: impl Into<String>, measured: f64, minimum: f64) {
        let passed = measured.is_finite() && measured >= minimum;
        self.table.push(vec![
            Cell::Text(name.into()),
            Cell::Num(measured),
            Cell::Num(minimum),
            Cell::Bool(passed),
        ]);
    }
}

/// Log-log slope of `|taylor_pinv(H, dH) - pinv(H + dH)|` against the size
/// of `dH`; 2 for a correct first-order expansion.
pub fn taylor_error_slope(k: usize, m: usize, seed: u64) -> Result<f64> {
    let mut rng = frame_rng(seed, 0);
    let h = sample_complex_gaussian(m, k, 1.0 / k as f64, &mut rng);
    let d = sample_complex_gaussian(m, k, 1.0 / k as f64, &mut rng);
    let mut pts = Vec::new();
    for e in [1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5] {
        let dh = &d * Complex64::from(e);
        let err = frobenius(&(taylor_pinv(&h, &dh)? - pinv(&(&h + &dh))?));
        pts.push((e.ln(), err.ln()));
    }
    Ok(ols_slope(&pts))
}

/// Distribution of the sign sum of the `L - 1` other symbols in a
/// distortion block, by walking all `2^(L-1)` sign patterns. The per-axis
/// offset is `c1 a` times the key.
pub fn enumerate_mixture(blocks: usize) -> BTreeMap<i64, f64> {
    let others = blocks - 1;
    let weight = 0.5f64.powi(others as i32);
    let mut out = BTreeMap::new();
    for pattern in 0u64..(1 << others) {
        let minus = pattern.count_ones() as i64;
        let sum = others as i64 - 2 * minus;
        *out.entry(sum).or_insert(0.0) += weight;
    }
    out
}

fn mixture_mismatch(blocks: usize, sigma2_wd: f64) -> Result<f64> {
    let spec = mixture_spec(blocks, sigma2_wd)?;
    let enumerated = enumerate_mixture(blocks);
    let scale = (sigma2_wd / 2.0).sqrt() / blocks as f64;
    let mut worst: f64 = 0.0;
    for (&sum, &p) in &enumerated {
        let offset = scale * sum as f64;
        match spec.offsets.iter().position(|&o| (o - offset).abs() <= 1e-12 * (1.0 + offset.abs())) {
            Some(i) => worst = worst.max((spec.probs[i] - p).abs()),
            None => return Ok(f64::INFINITY),
        }
    }
    if spec.offsets.len() != enumerated.len() {
        return Ok(f64::INFINITY);
    }
    Ok(worst)
}

/// Gaussianity of the TDMT post-processing noise at a fixed channel:
/// `(|var/var_theory - 1|, CF distance)` with the grid scaled to the
/// theoretical spread.
pub fn tdmt_noise_check(dims: &SystemDims, snr_db: f64, draws: u64, seed: u64, exec: Execution) -> Result<(f64, f64)> {
    let power = PowerConfig::optimal(dims, snr_db)?;
    let h = sample_complex_gaussian(dims.m, dims.k, 1.0 / dims.k as f64, &mut frame_rng(seed, u64::MAX));
    let g = gram_inverse(&h)?[(0, 0)].re;
    let var = power.sigma2_wt * delta_t(dims, &power)? * g;
    let probe = NoiseProbe { antenna: 0, time: 0 };
    let xs = empirical_noise_samples_at(Scheme::Tdmt, dims, &power, &h, draws, seed, probe, exec)?;
    let mag: Vec<f64> = xs.iter().map(|x| x.norm_sqr()).collect();
    let var_gap = (mean(&mag) / var - 1.0).abs();
    let grid = z_grid(4.0 / var.sqrt(), 8);
    Ok((var_gap, cf_distance(&xs, |z| cf_theory_tdmt(z, var), &grid)))
}

/// CF distances of the DDST post-processing noise at a fixed channel,
/// against the mixture law and against the moment-matched Gaussian:
/// `(mixture, gaussian)`. The probed symbol is `(1 + j) a`, which shifts
/// the noise by `-c1 (1 + j) a`.
pub fn ddst_noise_check(dims: &SystemDims, snr_db: f64, draws: u64, seed: u64, exec: Execution) -> Result<(f64, f64)> {
    let power = PowerConfig::optimal(dims, snr_db)?;
    let h = sample_complex_gaussian(dims.m, dims.k, 1.0 / dims.k as f64, &mut frame_rng(seed, u64::MAX));
    let g = gram_inverse(&h)?[(0, 0)].re;
    let var = power.sigma2_wd * delta_d(dims, &power)? * g;
    let mix = mixture_spec(dims.blocks(), power.sigma2_wd)?;
    let a = (power.sigma2_wd / 2.0).sqrt();
    let shift = Complex64::new(-dims.c1() * a, -dims.c1() * a);
    let probe = NoiseProbe { antenna: 0, time: dims.k + 1 };
    let xs = empirical_noise_samples_at(Scheme::Ddst, dims, &power, &h, draws, seed, probe, exec)?;
    let re: Vec<f64> = xs.iter().map(|x| x.re).collect();
    let im: Vec<f64> = xs.iter().map(|x| x.im).collect();
    let centre = Complex64::new(mean(&re), mean(&im));
    let fitted = variance(&re) + variance(&im);
    let grid = z_grid(4.0 / (dims.c1() * a), 8);
    let to_mixture = cf_distance(&xs, |z| cf_theory_ddst_shifted(z, &mix, shift, var), &grid);
    let to_gaussian = cf_distance(
        &xs,
        |z| cf_theory_tdmt(z, fitted) * Complex64::from_polar(1.0, z.re * centre.re + z.im * centre.im),
        &grid,
    );
    Ok((to_mixture, to_gaussian))
}

/// Numerical checks of the large-system machinery. One row per check with
/// the measured residual and its tolerance; `passed` is false if any row
/// fails.
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<Validation> {
    if cfg.workers == Some(0) {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    if cfg.validate_draws < 100 || cfg.validate_reps == 0 {
        return Err(Error::InvalidArgument("validate needs at least 100 draws and one realisation".into()));
    }
    let exec = cfg.execution();
    let mut c = Checks { table: Table::new("validate", &["check", "measured", "tolerance", "passed"]) };

    let (k, m) = (cfg.validate_k, cfg.validate_m);
    let rmt = rmt_validators_with(k, m, cfg.validate_reps, cfg.seed, exec)?;
    let tol = 3.0 / (k as f64).sqrt();
    for check in &rmt.checks {
        c.add(format!("rmt_{}", check.name), check.residual, tol);
        c.add(format!("rmt_{}_decay", check.name), check.decay(), 0.8);
    }

    let slope = taylor_error_slope(k, m, cfg.seed)?;
    c.add("taylor_pinv_slope_deviation", (slope - 2.0).abs(), 0.1);

    let mut j_gap: f64 = 0.0;
    for mm in 1..=6u32 {
        for a in [0.1, 1.0, 10.0] {
            for b in [0.0, 0.5, 1.0, 4.0] {
                j_gap = j_gap.max((j_function(mm, a, b)? - j_quadrature(mm, a, b)).abs());
            }
        }
    }
    c.add("j_function_vs_quadrature", j_gap, 1e-8);

    let mut mix_gap: f64 = 0.0;
    for blocks in [2, 3, 4, 8, 16] {
        mix_gap = mix_gap.max(mixture_mismatch(blocks, 0.7)?);
    }
    c.add("mixture_enumeration", mix_gap, 1e-12);

    let tdmt_dims = SystemDims::new(16, 8, 256, 64)?;
    let (var_gap, tdmt_cf) = tdmt_noise_check(&tdmt_dims, 15.0, cfg.validate_draws, cfg.seed, exec)?;
    c.add("tdmt_noise_variance", var_gap, 0.1);
    c.add("tdmt_noise_cf_distance", tdmt_cf, 0.02);

    let ddst_dims = SystemDims::new(8, 4, 16, 4)?;
    let (to_mix, to_gauss) = ddst_noise_check(&ddst_dims, 30.0, cfg.validate_draws, cfg.seed, exec)?;
    c.add("ddst_noise_cf_distance", to_mix, 0.02);
    c.add_min("ddst_gaussian_vs_mixture_cf_ratio", to_gauss / to_mix, 3.0);

    let passed = c.table.rows.iter().all(|r| r[3] == Cell::Bool(true));
    Ok(Validation { table: c.table, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ExperimentConfig {
        ExperimentConfig { bits: 20_000, workers: Some(1), ..Default::default() }
    }

    #[test]
    fn default_grid_and_toml_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.snr_grid().unwrap().len(), 11);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let partial = ExperimentConfig::from_toml("k = 4\nm = 8\nschemes = [\"ddst\"]\n").unwrap();
        assert_eq!((partial.k, partial.m, partial.n), (4, 8, 32));
        assert_eq!(partial.schemes, vec![Scheme::Ddst]);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn snr_grid_edges() {
        let mut cfg = ExperimentConfig { snr_db_start: 5.0, snr_db_stop: 5.0, ..Default::default() };
        assert_eq!(cfg.snr_grid().unwrap(), vec![5.0]);
        cfg.snr_db_stop = 4.0;
        assert!(cfg.snr_grid().is_err());
        cfg.snr_db_stop = 6.0;
        cfg.snr_db_step = 0.0;
        assert!(cfg.snr_grid().is_err());
        cfg.snr_db_step = 0.3;
        assert_eq!(cfg.snr_grid().unwrap().len(), 4);
        cfg.snr_db_start = f64::NAN;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn number_format() {
        assert_eq!(format_num(0.0625), "6.250000000e-2");
        assert_eq!(format_num(1.0 / 3.0), "3.333333333e-1");
        assert_eq!(Cell::Text("a,b".into()).csv(), "\"a,b\"");
        assert_eq!(Cell::Num(1.0 / 3.0).json(), serde_json::json!(0.3333333333));
        assert_eq!(Cell::Num(f64::NAN).json(), serde_json::Value::Null);
    }

    #[test]
    fn theory_table_shape() {
        let t = cmd_theory(&quick()).unwrap();
        assert_eq!(t.rows.len(), 22);
        let floor = t.column("ber_floor").unwrap();
        let ddst: Vec<&Vec<Cell>> = t.rows.iter().filter(|r| r[1] == Cell::text("ddst")).collect();
        assert!(ddst.iter().all(|r| r[floor] == Cell::Num(0.5f64.powi(16))));
        let ber = t.column("ber_theory").unwrap();
        for scheme_rows in t.rows.chunks(11) {
            for w in scheme_rows.windows(2) {
                match (&w[0][ber], &w[1][ber]) {
                    (Cell::Num(a), Cell::Num(b)) => assert!(b <= a),
                    _ => panic!("numeric column"),
                }
            }
        }
        assert!(t.to_csv().starts_with("snr_db,scheme,delta,ber_theory,ber_highsnr,ber_floor\n"));
    }

    #[test]
    fn explicit_powers_must_meet_budget() {
        let dims = SystemDims::new(4, 2, 32, 2).unwrap();
        let mut cfg = ExperimentConfig {
            power: PowerMode::Explicit,
            sigma2_w: Some(1.0),
            sigma2_p: Some(1.0),
            schemes: vec![Scheme::Tdmt],
            ..quick()
        };
        assert!(cfg.power_at(Scheme::Tdmt, &dims, 10.0).is_ok());
        assert!(cfg.power_at(Scheme::Ddst, &dims, 10.0).is_err());
        // p + (1 - 1/16) w = 1
        cfg.sigma2_w = Some(0.8);
        cfg.sigma2_p = Some(0.25);
        let p = cfg.power_at(Scheme::Ddst, &dims, 10.0).unwrap();
        assert_eq!((p.sigma2_wd, p.sigma2_pd), (0.8, 0.25));
        cfg.sigma2_p = Some(0.25 + 1e-5);
        assert!(matches!(cfg.power_at(Scheme::Ddst, &dims, 10.0), Err(Error::InvalidPower(_))));
        cfg.sigma2_p = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn simulate_is_deterministic_across_workers() {
        let cfg = ExperimentConfig { snr_db_start: 4.0, snr_db_stop: 8.0, snr_db_step: 4.0, ..quick() };
        let a = cmd_simulate(&cfg).unwrap();
        let b = cmd_simulate(&ExperimentConfig { workers: Some(3), ..cfg.clone() }).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows.len(), 4);
        assert!(cmd_simulate(&ExperimentConfig { bits: 0, ..cfg }).is_err());
    }

    #[test]
    fn sweep_skips_bad_points() {
        let cfg = ExperimentConfig { c1_grid: vec![0.5, 0.3, 0.25, 1.0], bits: 0, ..quick() };
        let t = cmd_sweep_c1(&cfg).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.warnings.len(), 2);
        assert_eq!(t.rows[1][1], Cell::Int(8));
        assert_eq!(t.rows[0][4], Cell::Empty);
        assert_eq!(frame_length(2, 2, 0.01), Ok(200));
        assert!(frame_length(4, 4, 0.3).is_err());
        assert!(frame_length(4, 4, 4.0 / 6.0).is_err());
        assert_eq!(frame_length(4, 4, 1.0 / 3.0), Ok(12));
    }

    #[test]
    fn required_r_rows() {
        let cfg = ExperimentConfig { snr_db_start: 0.0, snr_db_stop: 20.0, snr_db_step: 20.0, ..quick() };
        let t = cmd_required_r(&cfg).unwrap();
        assert_eq!(t.rows[0][2], Cell::Bool(false));
        assert_eq!(t.rows[1][2], Cell::Bool(true));
        assert_eq!(t.rows[1][3], Cell::Int(2));
        assert_eq!(t.rows[1][4], Cell::Num(15.0));
        assert_eq!(t.rows[3][3], Cell::Empty);
    }

    #[test]
    fn alloc_verify_and_budget() {
        let cfg = ExperimentConfig { verify: true, ..quick() };
        let t = cmd_alloc(&cfg).unwrap();
        let dims = cfg.dims().unwrap();
        for row in &t.rows {
            let (Cell::Num(w), Cell::Num(p)) = (&row[2], &row[3]) else { panic!() };
            let used = if row[0] == Cell::text("tdmt") {
                (2.0 * p + 30.0 * w) / 32.0
            } else {
                p + (1.0 - dims.c1()) * w
            };
            assert!((used - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mixture_matches_enumeration() {
        for blocks in [2, 3, 4, 8, 16] {
            assert_eq!(mixture_mismatch(blocks, 1.3).unwrap(), 0.0);
        }
        let e = enumerate_mixture(4);
        assert_eq!(e.keys().copied().collect::<Vec<_>>(), vec![-3, -1, 1, 3]);
        assert_eq!(e[&1], 3.0 / 8.0);
    }

    #[test]
    fn json_layout() {
        let t = cmd_alloc(&ExperimentConfig { snr_db_stop: 0.0, ..quick() }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v["command"], "alloc");
        assert_eq!(v["columns"].as_array().unwrap().len(), 8);
        assert_eq!(v["rows"].as_array().unwrap().len(), 2);
        assert_eq!(v["rows"][0][0], "tdmt");
    }
}
