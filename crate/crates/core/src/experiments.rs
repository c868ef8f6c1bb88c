//! Seeded batch studies: bounds versus range and SNR, matched-filter Monte
//! Carlo against the bounds, and position error bound versus radar count.
//!
//! Every study returns a [`ResultTable`] that is a pure function of its
//! [`ExperimentConfig`]; parallel and sequential execution give identical
//! tables.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::asymptotics::asymptotic_hcrb;
use crate::contour::TargetPose;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, MatchedFilter};
use crate::exec::{map_indexed, Execution};
use crate::fisher::{efim_exact, hcrb_from_efim, point_target_crb};
use crate::multiradar::{fuse, peb, ring_constellation, GlobalTarget};
use crate::scenario::{EnergyMode, Scenario, REFERENCE_END, REFERENCE_SNR_DB, REFERENCE_START};
use crate::synth::{SegmentationConfig, Synthesizer, TargetModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Asymptotic,
    PointTarget,
    MonteCarlo,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Asymptotic => "asymptotic",
            Method::PointTarget => "point_target",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

/// One scalar result. A missing `value` marks a singular configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep: f64,
    pub quantity: String,
    pub method: Method,
    pub value: Option<f64>,
    pub units: String,
    pub n_trials: usize,
    pub seed: Option<u64>,
}

/// Outcome of a built-in consistency check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    /// Some rows are missing because of singular information matrices.
    pub partial: bool,
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
}

impl ResultTable {
    fn push(
        &mut self,
        sweep: f64,
        quantity: &str,
        method: Method,
        value: Option<f64>,
        units: &str,
    ) {
        self.rows.push(ResultRow {
            sweep,
            quantity: quantity.to_string(),
            method,
            value,
            units: units.to_string(),
            n_trials: 0,
            seed: None,
        });
    }

    fn push_mc(
        &mut self,
        sweep: f64,
        quantity: &str,
        value: Option<f64>,
        units: &str,
        n: usize,
        seed: u64,
    ) {
        self.rows.push(ResultRow {
            sweep,
            quantity: quantity.to_string(),
            method: Method::MonteCarlo,
            value,
            units: units.to_string(),
            n_trials: n,
            seed: Some(seed),
        });
    }

    fn missing(&mut self, sweep: f64, what: &str, err: &Error) {
        self.partial = true;
        self.notes
            .push(format!("sweep {sweep}: {what} unavailable: {err}"));
    }

    /// Value of `(quantity, method)` at `sweep`, if present and finite.
    pub fn get(&self, quantity: &str, method: Method, sweep: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.quantity == quantity && r.method == method && r.sweep == sweep)
            .and_then(|r| r.value)
    }

    /// `(sweep, value)` pairs of one series in row order.
    pub fn series(&self, quantity: &str, method: Method) -> Vec<(f64, Option<f64>)> {
        self.rows
            .iter()
            .filter(|r| r.quantity == quantity && r.method == method)
            .map(|r| (r.sweep, r.value))
            .collect()
    }

    /// Distinct sweep values in first-seen order.
    pub fn sweep_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.sweep) {
                out.push(r.sweep);
            }
        }
        out
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// CSV with header `sweep,quantity,method,value,units,n_trials,seed`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r).map_err(csv_error)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd
            .deserialize()
            .collect::<std::result::Result<Vec<ResultRow>, _>>()
            .map_err(csv_error)?;
        let partial = rows.iter().any(|r| r.value.is_none());
        Ok(Self {
            rows,
            partial,
            ..Default::default()
        })
    }

    /// Wide whitespace-separated layout for gnuplot: one line per sweep
    /// value, one column per `quantity:method` series, `NaN` for gaps.
    pub fn write_gnuplot<W: Write>(&self, mut w: W) -> Result<()> {
        let mut columns: Vec<(String, Method)> = Vec::new();
        for r in &self.rows {
            let key = (r.quantity.clone(), r.method);
            if !columns.contains(&key) {
                columns.push(key);
            }
        }
        let mut grid: BTreeMap<u64, (f64, Vec<Option<f64>>)> = BTreeMap::new();
        for r in &self.rows {
            let col = columns
                .iter()
                .position(|c| c.0 == r.quantity && c.1 == r.method)
                .expect("column exists");
            let entry = grid
                .entry(sort_key(r.sweep))
                .or_insert_with(|| (r.sweep, vec![None; columns.len()]));
            entry.1[col] = r.value;
        }
        write!(w, "# sweep")?;
        for (q, m) in &columns {
            write!(w, " {q}:{}", m.as_str())?;
        }
        writeln!(w)?;
        for (_, (sweep, vals)) in grid {
            write!(w, "{sweep:e}")?;
            for v in vals {
                match v {
                    Some(x) => write!(w, " {x:e}")?,
                    None => write!(w, " NaN")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Order-preserving map from finite floats to integers.
fn sort_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

/// Independent variable of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Target positions on the segment `start -> end`, spaced in range.
    Ray {
        start: [f64; 2],
        end: [f64; 2],
        count: usize,
        spacing: Spacing,
    },
    /// Ranges along the direction of the scenario's target.
    Ranges { values: Vec<f64> },
    /// Radar counts on a ring of `radius` around the target.
    RadarCounts {
        counts: Vec<usize>,
        radius: f64,
        /// Bearing of the first radar seen from the target; defaults to
        /// the bearing of the scenario radar.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start_angle: Option<f64>,
    },
    /// `E/N0` values in dB.
    Snr { values_db: Vec<f64> },
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Ray { count, .. } => *count,
            SweepAxis::Ranges { values } => values.len(),
            SweepAxis::RadarCounts { counts, .. } => counts.len(),
            SweepAxis::Snr { values_db } => values_db.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toggles {
    pub known_shape: bool,
    pub unknown_shape: bool,
    pub point_target: bool,
    pub asymptotic: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            known_shape: true,
            unknown_shape: true,
            point_target: true,
            asymptotic: true,
        }
    }
}

/// Received-energy profile across a Monte Carlo range sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum McEnergy {
    /// The scenario's energy at every range.
    Scenario,
    /// `E/N0 = e_over_n0_db + 40 log10(reference_range / d)`, the
    /// `g = sqrt(G) / d^2` path loss anchored at `reference_range`.
    PathLoss {
        e_over_n0_db: f64,
        reference_range: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub sweep: SweepAxis,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub toggles: Toggles,
    #[serde(default)]
    pub segmentation: SegmentationConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default = "default_mc_energy")]
    pub mc_energy: McEnergy,
    #[serde(default)]
    pub execution: Execution,
}

fn default_trials() -> usize {
    500
}

fn default_mc_energy() -> McEnergy {
    McEnergy::Scenario
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, sweep: SweepAxis, seed: u64) -> Self {
        Self {
            scenario,
            sweep,
            trials: default_trials(),
            seed,
            output: None,
            toggles: Toggles::default(),
            segmentation: SegmentationConfig::default(),
            estimator: EstimatorConfig::default(),
            mc_energy: McEnergy::Scenario,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep is empty".into()));
        }
        match &self.sweep {
            SweepAxis::Ray {
                count, start, end, ..
            } => {
                if *count < 1 || start == end {
                    return Err(Error::Config(
                        "ray needs distinct end points and count >= 1".into(),
                    ));
                }
            }
            SweepAxis::Ranges { values } if values.iter().any(|r| !(r.is_finite() && *r > 0.0)) => {
                return Err(Error::Config("ranges must be positive".into()));
            }
            SweepAxis::RadarCounts { counts, radius, .. } => {
                if counts.contains(&0) || !(*radius > 0.0) {
                    return Err(Error::Config(
                        "radar counts and radius must be positive".into(),
                    ));
                }
            }
            SweepAxis::Snr { values_db } if values_db.iter().any(|x| !x.is_finite()) => {
                return Err(Error::Config("SNR values must be finite".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Target poses for range-type axes.
    pub fn poses(&self) -> Result<Vec<TargetPose>> {
        let heading = self.scenario.pose.heading();
        match &self.sweep {
            SweepAxis::Ray {
                start,
                end,
                count,
                spacing,
            } => {
                let a = Vector2::from(*start);
                let b = Vector2::from(*end);
                let (ra, rb) = (a.norm(), b.norm());
                (0..*count)
                    .map(|i| {
                        let f = if *count == 1 {
                            0.0
                        } else {
                            i as f64 / (*count - 1) as f64
                        };
                        // Parameter along the segment hitting the wanted range.
                        let t = match spacing {
                            Spacing::Linear => f,
                            Spacing::Log => {
                                let want = ra * (rb / ra).powf(f);
                                segment_parameter_for_range(a, b, want)
                            }
                        };
                        let p = a + (b - a) * t;
                        TargetPose::from_position(p.x, p.y, heading)
                    })
                    .collect()
            }
            SweepAxis::Ranges { values } => {
                let dir = self.scenario.pose.direction();
                values
                    .iter()
                    .map(|&r| TargetPose::new(r, dir, heading))
                    .collect()
            }
            _ => Err(Error::Config(
                "this study needs a range or ray sweep".into(),
            )),
        }
    }
}

/// `t` in `[0, 1]` with `|a + t (b - a)| = range`, by bisection (the
/// range is monotone along the reference segment).
fn segment_parameter_for_range(a: Vector2<f64>, b: Vector2<f64>, range: f64) -> f64 {
    let f = |t: f64| (a + (b - a) * t).norm() - range;
    let (mut lo, mut hi) = (0.0, 1.0);
    if f(lo) >= 0.0 {
        return 0.0;
    }
    if f(hi) <= 0.0 {
        return 1.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Default Fig.-5-style configuration: 30 log-spaced positions from
/// `[6, 3]` to `[89, 45]`.
pub fn reference_range_sweep(seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(
        crate::scenario::reference_scenario(),
        SweepAxis::Ray {
            start: REFERENCE_START,
            end: REFERENCE_END,
            count: 30,
            spacing: Spacing::Log,
        },
        seed,
    )
}

/// Radar counts 1..=6 on a 7 m ring.
pub fn reference_diversity(seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(
        crate::scenario::reference_scenario(),
        SweepAxis::RadarCounts {
            counts: (1..=6).collect(),
            radius: 7.0,
            start_angle: None,
        },
        seed,
    )
}

/// Monte Carlo at 10, 20, 40 and 80 m with `E/N0 = 40 dB` at 80 m and
/// `d^-4` path loss closer in.
pub fn reference_monte_carlo(seed: u64, trials: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        crate::scenario::reference_scenario(),
        SweepAxis::Ranges {
            values: vec![10.0, 20.0, 40.0, 80.0],
        },
        seed,
    );
    cfg.trials = trials;
    cfg.mc_energy = McEnergy::PathLoss {
        e_over_n0_db: REFERENCE_SNR_DB,
        reference_range: 80.0,
    };
    cfg
}

const PARAMS: [(&str, &str); 3] = [
    ("range", "m^2"),
    ("direction", "rad^2"),
    ("heading", "rad^2"),
];

/// Bounds at one scenario. Singular cases become missing values.
fn bound_rows(table: &mut ResultTable, sweep: f64, toggles: &Toggles, bounds: BoundSet) {
    let BoundSet {
        exact,
        asym_known,
        asym_unknown,
        point,
    } = bounds;
    for (known, enabled, tag) in [
        (true, toggles.known_shape, "known"),
        (false, toggles.unknown_shape, "unknown"),
    ] {
        if !enabled {
            continue;
        }
        let rep = match &exact {
            Ok(e) => hcrb_from_efim(e, known),
            Err(err) => Err(err.replicate()),
        };
        match rep {
            Ok(r) => {
                for (p, (name, units)) in [r.range, r.direction, r.heading].iter().zip(PARAMS) {
                    table.push(
                        sweep,
                        &format!("{name}_{tag}"),
                        Method::Exact,
                        Some(*p),
                        units,
                    );
                }
            }
            Err(e) => {
                table.missing(sweep, &format!("exact {tag}-shape bound"), &e);
                for (name, units) in PARAMS {
                    table.push(sweep, &format!("{name}_{tag}"), Method::Exact, None, units);
                }
            }
        }
        if toggles.asymptotic {
            let asym = if known { &asym_known } else { &asym_unknown };
            match asym {
                Some(Ok(r)) => {
                    for (p, (name, units)) in [r.range, r.direction, r.heading].iter().zip(PARAMS) {
                        table.push(
                            sweep,
                            &format!("{name}_{tag}"),
                            Method::Asymptotic,
                            Some(*p),
                            units,
                        );
                    }
                }
                Some(Err(e)) => {
                    table.missing(sweep, &format!("asymptotic {tag}-shape bound"), e);
                    for (name, units) in PARAMS {
                        table.push(
                            sweep,
                            &format!("{name}_{tag}"),
                            Method::Asymptotic,
                            None,
                            units,
                        );
                    }
                }
                None => {}
            }
        }
    }
    if toggles.point_target {
        match point {
            Some(Ok(c)) => {
                table.push(sweep, "range_point", Method::PointTarget, Some(c[0]), "m^2");
                table.push(
                    sweep,
                    "direction_point",
                    Method::PointTarget,
                    Some(c[1]),
                    "rad^2",
                );
            }
            Some(Err(e)) => {
                table.missing(sweep, "point-target bound", &e);
                table.push(sweep, "range_point", Method::PointTarget, None, "m^2");
                table.push(sweep, "direction_point", Method::PointTarget, None, "rad^2");
            }
            None => {}
        }
    }
}

struct BoundSet {
    exact: Result<crate::fisher::EfimResult>,
    asym_known: Option<Result<crate::asymptotics::AsymptoticReport>>,
    asym_unknown: Option<Result<crate::asymptotics::AsymptoticReport>>,
    point: Option<Result<[f64; 2]>>,
}

fn compute_bounds(sc: &Scenario, toggles: &Toggles) -> BoundSet {
    let want_asym = toggles.asymptotic;
    BoundSet {
        exact: efim_exact(sc),
        asym_known: (want_asym && toggles.known_shape).then(|| asymptotic_hcrb(sc, true)),
        asym_unknown: (want_asym && toggles.unknown_shape).then(|| asymptotic_hcrb(sc, false)),
        point: toggles
            .point_target
            .then(|| point_target_crb(sc).map(|c| [c[(0, 0)], c[(1, 1)]])),
    }
}

fn propagate_if_fatal(set: &BoundSet) -> Result<()> {
    let fatal = |e: &Error| !e.is_singularity();
    if let Err(e) = &set.exact {
        if fatal(e) {
            return Err(e.replicate());
        }
    }
    Ok(())
}

/// Bounds for a single scenario, keyed by its range. Singular cases are
/// reported as missing values with `partial` set.
pub fn bound_table(sc: &Scenario, toggles: &Toggles) -> Result<ResultTable> {
    let set = compute_bounds(sc, toggles);
    propagate_if_fatal(&set)?;
    let mut table = ResultTable::default();
    bound_rows(&mut table, sc.pose.range(), toggles, set);
    Ok(table)
}

/// Exact, asymptotic and point-target bounds at each position of a range
/// sweep with the scenario's (fixed) energy. The sweep value is the range.
pub fn run_range_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let poses = cfg.poses()?;
    let scenarios: Vec<Scenario> = poses.iter().map(|p| cfg.scenario.with_pose(*p)).collect();
    let sets = map_indexed(scenarios.len(), cfg.execution, |i| {
        compute_bounds(&scenarios[i], &cfg.toggles)
    });
    let mut table = ResultTable::default();
    for (sc, set) in scenarios.iter().zip(sets) {
        propagate_if_fatal(&set)?;
        bound_rows(&mut table, sc.pose.range(), &cfg.toggles, set);
    }
    Ok(table)
}

/// Exact bounds versus `E/N0` at the scenario pose, with a check that
/// every bound is non-increasing in `E/N0`.
pub fn run_snr_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let SweepAxis::Snr { values_db } = &cfg.sweep else {
        return Err(Error::Config("SNR study needs an snr sweep".into()));
    };
    let scenarios: Vec<Scenario> = values_db
        .iter()
        .map(|&db| cfg.scenario.with_energy(EnergyMode::fixed_db(db)))
        .collect();
    let sets = map_indexed(scenarios.len(), cfg.execution, |i| {
        compute_bounds(&scenarios[i], &cfg.toggles)
    });
    let mut table = ResultTable::default();
    for (set, &db) in sets.into_iter().zip(values_db) {
        propagate_if_fatal(&set)?;
        bound_rows(&mut table, db, &cfg.toggles, set);
    }
    let mut order: Vec<f64> = values_db.clone();
    order.sort_by(f64::total_cmp);
    let mut keys: Vec<(String, Method)> = Vec::new();
    for r in &table.rows {
        let k = (r.quantity.clone(), r.method);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (q, m) in keys {
        let vals: Vec<Option<f64>> = order.iter().map(|&x| table.get(&q, m, x)).collect();
        let ok = vals
            .windows(2)
            .all(|w| !matches!((w[0], w[1]), (Some(a), Some(b)) if b > a * (1.0 + 1e-9)));
        table.checks.push(Check {
            name: format!("{q}:{} non-increasing in E/N0", m.as_str()),
            passed: ok,
            detail: format!("{vals:?}"),
        });
    }
    warn_failed_checks(&table);
    Ok(table)
}

/// PEB for known and unknown contour versus the number of radars on a
/// ring around the target, with the aggregate `E/N0` of the scenario split
/// evenly. The sweep value is the radar count.
pub fn run_diversity(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let SweepAxis::RadarCounts {
        counts,
        radius,
        start_angle,
    } = &cfg.sweep
    else {
        return Err(Error::Config(
            "diversity study needs a radar_counts sweep".into(),
        ));
    };
    let EnergyMode::FixedSnr { e_over_n0_db } = cfg.scenario.energy else {
        return Err(Error::Config(
            "diversity study needs a fixed aggregate E/N0".into(),
        ));
    };
    let p = cfg.scenario.pose.position();
    let target = GlobalTarget {
        contour: cfg.scenario.contour.clone(),
        position: [p.x, p.y],
        heading: cfg.scenario.pose.heading(),
    };
    let start = start_angle.unwrap_or_else(|| (-p.y).atan2(-p.x));
    let mut table = ResultTable::default();
    for &k in counts {
        let radars = ring_constellation(p, k, *radius, start);
        let fused = fuse(&cfg.scenario, &target, &radars, e_over_n0_db, cfg.execution);
        for (known, enabled, q) in [
            (true, cfg.toggles.known_shape, "peb_known"),
            (false, cfg.toggles.unknown_shape, "peb_unknown"),
        ] {
            if !enabled {
                continue;
            }
            let v = match &fused {
                Ok(f) => peb(f, known),
                Err(e) => Err(e.replicate()),
            };
            match v {
                Ok(x) => table.push(k as f64, q, Method::Exact, Some(x), "m"),
                Err(e) if e.is_singularity() => {
                    table.missing(k as f64, q, &e);
                    table.push(k as f64, q, Method::Exact, None, "m");
                }
                Err(e) => return Err(e),
            }
        }
    }
    let mut sorted = counts.clone();
    sorted.sort_unstable();
    for q in ["peb_known", "peb_unknown"] {
        let vals: Vec<Option<f64>> = sorted
            .iter()
            .map(|&k| table.get(q, Method::Exact, k as f64))
            .collect();
        if vals.iter().all(|v| v.is_none()) {
            continue;
        }
        let ok = vals
            .windows(2)
            .all(|w| !matches!((w[0], w[1]), (Some(a), Some(b)) if b > a * (1.0 + 1e-9)));
        table.checks.push(Check {
            name: format!("{q} non-increasing in radar count"),
            passed: ok,
            detail: format!("{vals:?}"),
        });
    }
    warn_failed_checks(&table);
    Ok(table)
}

fn warn_failed_checks(t: &ResultTable) {
    for c in t.checks.iter().filter(|c| !c.passed) {
        log::warn!("check failed: {} ({})", c.name, c.detail);
    }
}

/// Seed of the random stream used for sweep point `point` and `model`.
pub fn stream_seed(seed: u64, point: usize, model: TargetModel) -> u64 {
    let tag = (point as u64) << 1 | matches!(model, TargetModel::Extended) as u64;
    splitmix64(seed ^ splitmix64(tag.wrapping_add(0x5151_5151)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Summary of Monte Carlo estimates for one model at one range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSummary {
    pub accepted: usize,
    pub flagged: usize,
    pub range_mean: f64,
    pub range_var: f64,
    pub direction_mean: f64,
    pub direction_var: f64,
}

impl McSummary {
    /// Standard error of a sample variance under a Gaussian model,
    /// `var sqrt(2 / (n - 1))`.
    pub fn variance_se(var: f64, n: usize) -> f64 {
        if n < 2 {
            return f64::NAN;
        }
        var * (2.0 / (n as f64 - 1.0)).sqrt()
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.len() < 2 {
        return (x.first().copied().unwrap_or(f64::NAN), f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Runs the matched-filter estimator over `trials` frames of one model.
pub fn monte_carlo_point(
    sc: &Scenario,
    seg: &SegmentationConfig,
    est: &EstimatorConfig,
    model: TargetModel,
    seed: u64,
    trials: usize,
    exec: Execution,
) -> Result<McSummary> {
    let syn = Synthesizer::new(sc, seg, model)?;
    let mf = MatchedFilter::new(
        sc.antennas,
        sc.waveform,
        syn.frame_len(),
        syn.start_time(),
        *est,
    );
    let results = map_indexed(trials, exec, |t| {
        let frame = syn.frame(seed, t as u64);
        let e = mf.estimate(&frame);
        (e.range.range, e.direction.direction, e.low_confidence())
    });
    let kept: Vec<&(f64, f64, bool)> = results.iter().filter(|r| !r.2).collect();
    let ranges: Vec<f64> = kept.iter().map(|r| r.0).collect();
    let dirs: Vec<f64> = kept.iter().map(|r| r.1).collect();
    let (range_mean, range_var) = mean_var(&ranges);
    let (direction_mean, direction_var) = mean_var(&dirs);
    Ok(McSummary {
        accepted: kept.len(),
        flagged: trials - kept.len(),
        range_mean,
        range_var,
        direction_mean,
        direction_var,
    })
}

/// Matched-filter Monte Carlo for point and extended targets at each range,
/// next to the point-target CRB and the known/unknown-shape HCRBs. The
/// sweep value is the range.
pub fn run_mc(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    if cfg.trials < 100 {
        log::warn!(
            "{} Monte Carlo trials give noisy variance estimates",
            cfg.trials
        );
    }
    let poses = cfg.poses()?;
    let mut table = ResultTable::default();
    let toggles = Toggles {
        asymptotic: false,
        ..cfg.toggles
    };
    for (i, pose) in poses.iter().enumerate() {
        let mut sc = cfg.scenario.with_pose(*pose);
        let d = pose.range();
        if let McEnergy::PathLoss {
            e_over_n0_db,
            reference_range,
        } = cfg.mc_energy
        {
            sc.energy = EnergyMode::fixed_db(e_over_n0_db + 40.0 * (reference_range / d).log10());
        }
        if let EnergyMode::FixedSnr { e_over_n0_db } = sc.energy {
            table.push(d, "e_over_n0", Method::Exact, Some(e_over_n0_db), "dB");
        }
        let set = compute_bounds(&sc, &toggles);
        propagate_if_fatal(&set)?;
        bound_rows(&mut table, d, &toggles, set);

        let mut models = Vec::new();
        if cfg.toggles.point_target {
            models.push((TargetModel::Point, "point"));
        }
        models.push((TargetModel::Extended, "extended"));
        for (model, tag) in models {
            let seed = stream_seed(cfg.seed, i, model);
            let s = match monte_carlo_point(
                &sc,
                &cfg.segmentation,
                &cfg.estimator,
                model,
                seed,
                cfg.trials,
                cfg.execution,
            ) {
                Ok(s) => s,
                Err(e) if e.is_singularity() => {
                    table.missing(d, &format!("{tag} Monte Carlo"), &e);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let n = s.accepted;
            let finite = |x: f64| x.is_finite().then_some(x);
            table.push_mc(
                d,
                &format!("range_{tag}"),
                finite(s.range_var),
                "m^2",
                n,
                cfg.seed,
            );
            table.push_mc(
                d,
                &format!("direction_{tag}"),
                finite(s.direction_var),
                "rad^2",
                n,
                cfg.seed,
            );
            table.push_mc(
                d,
                &format!("range_{tag}_se"),
                finite(McSummary::variance_se(s.range_var, n)),
                "m^2",
                n,
                cfg.seed,
            );
            table.push_mc(
                d,
                &format!("direction_{tag}_se"),
                finite(McSummary::variance_se(s.direction_var, n)),
                "rad^2",
                n,
                cfg.seed,
            );
            table.push_mc(
                d,
                &format!("range_{tag}_bias"),
                finite(s.range_mean - d),
                "m",
                n,
                cfg.seed,
            );
            table.push_mc(
                d,
                &format!("direction_{tag}_bias"),
                finite(s.direction_mean - pose.direction()),
                "rad",
                n,
                cfg.seed,
            );
            table.push_mc(
                d,
                &format!("flagged_{tag}"),
                Some(s.flagged as f64),
                "count",
                cfg.trials,
                cfg.seed,
            );
            if s.flagged > 0 {
                table.notes.push(format!(
                    "range {d}: {} of {} {tag} trials flagged",
                    s.flagged, cfg.trials
                ));
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_positions_are_log_spaced_in_range() {
        let cfg = reference_range_sweep(0);
        let poses = cfg.poses().unwrap();
        assert_eq!(poses.len(), 30);
        let r0 = 45f64.sqrt();
        let r1 = (89f64 * 89.0 + 45.0 * 45.0).sqrt();
        assert!((poses[0].range() - r0).abs() < 1e-9);
        assert!((poses[29].range() - r1).abs() < 1e-9);
        let ratio = poses[1].range() / poses[0].range();
        for w in poses.windows(2) {
            assert!((w[1].range() / w[0].range() - ratio).abs() < 1e-6);
        }
    }

    #[test]
    fn csv_round_trip_keeps_missing_values() {
        let mut t = ResultTable::default();
        t.push(1.0, "range_known", Method::Exact, Some(1.25e-7), "m^2");
        t.push(2.0, "range_unknown", Method::Exact, None, "m^2");
        t.push_mc(2.0, "range_point", Some(0.1), "m^2", 500, 42);
        let text = t.to_csv_string().unwrap();
        assert!(text.starts_with("sweep,quantity,method,value,units,n_trials,seed\n"));
        assert!(text.contains("2.0,range_unknown,exact,,m^2,0,\n"));
        let back = ResultTable::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.rows, t.rows);
        assert!(back.partial);
    }

    #[test]
    fn gnuplot_layout_has_one_line_per_sweep_value() {
        let mut t = ResultTable::default();
        t.push(2.0, "a", Method::Exact, Some(1.0), "m");
        t.push(1.0, "a", Method::Exact, Some(2.0), "m");
        t.push(1.0, "b", Method::Asymptotic, None, "m");
        let mut out = Vec::new();
        t.write_gnuplot(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# sweep a:exact b:asymptotic");
        assert_eq!(lines[1], "1e0 2e0 NaN");
        assert_eq!(lines[2], "2e0 1e0 NaN");
    }

    #[test]
    fn stream_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for p in 0..50 {
            for m in [TargetModel::Point, TargetModel::Extended] {
                assert!(seen.insert(stream_seed(9, p, m)));
            }
        }
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let mut cfg = reference_diversity(1);
        cfg.sweep = SweepAxis::RadarCounts {
            counts: vec![],
            radius: 7.0,
            start_angle: None,
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn snr_sweep_is_monotone() {
        let mut cfg = ExperimentConfig::new(
            crate::scenario::reference_at_range(30.0).unwrap(),
            SweepAxis::Snr {
                values_db: vec![20.0, 30.0, 40.0],
            },
            3,
        );
        cfg.toggles.asymptotic = false;
        let t = run_snr_sweep(&cfg).unwrap();
        assert!(!t.checks.is_empty());
        assert!(t.all_checks_pass(), "{:?}", t.checks);
        let a = t.get("range_known", Method::Exact, 20.0).unwrap();
        let b = t.get("range_known", Method::Exact, 30.0).unwrap();
        assert!((a / b - 10.0).abs() < 1e-9);
    }
}
