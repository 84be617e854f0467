//! Run configuration: one JSON file drives planning and simulation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bidflow_core::error::{Error, Result};
use bidflow_core::estimation::{self, EstimationConfig};
use bidflow_core::planner::SolveOptions;
use bidflow_core::runs::CampaignConfig;
use bidflow_core::scenario::SyntheticMarket;
use bidflow_core::simulator::MarketSampler;
use bidflow_core::supply::TimeVaryingSupplyCurve;
use bidflow_core::targeting::{Atom, Contract, Decomposition};
use bidflow_core::{files, scenario};

/// Where supply curves (and the simulated market) come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSource {
    /// Parametric synthetic market keyed by targeting atom.
    Synthetic(SyntheticMarket),
    /// Pre-estimated curve JSON files keyed by targeting atom.
    CurveFiles(BTreeMap<Atom, PathBuf>),
    /// Raw auction log; curves are estimated and the simulator samples the
    /// empirical hour-of-day buckets.
    LogCsv(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowSpec {
    pub count: usize,
    pub stride_hours: f64,
    pub length_hours: f64,
    pub repeats: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { count: 9, stride_hours: 12.0, length_hours: 72.0, repeats: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSpec {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self { max_iter: d.max_iter, tol: d.tol }
    }
}

/// The run configuration file (schema version 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Path to the contracts JSON, relative to the config file.
    pub contracts: PathBuf,
    pub curves: CurveSource,
    /// Bid randomization width (currency); overrides curve sigma downstream.
    pub sigma: f64,
    pub replan_hours: f64,
    #[serde(default)]
    pub windows: WindowSpec,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub estimation: Option<EstimationSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationSpec {
    pub trim_quantile: f64,
    pub min_bucket_prices: usize,
    pub grid_points: usize,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        if cfg.schema_version != 1 {
            return Err(Error::Input(format!("unsupported config schema version {}", cfg.schema_version)));
        }
        if cfg.windows.repeats < 1 {
            return Err(Error::Input("windows.repeats must be >= 1".into()));
        }
        if !(cfg.replan_hours > 0.0) {
            return Err(Error::Input("replan_hours must be positive".into()));
        }
        let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
        Ok((cfg, hash))
    }

    pub fn solver_options(&self) -> SolveOptions {
        SolveOptions { max_iter: self.solver.max_iter, tol: self.solver.tol, ..Default::default() }
    }

    pub fn campaign(&self) -> CampaignConfig {
        CampaignConfig {
            windows: self.windows.count,
            stride_hours: self.windows.stride_hours,
            length_hours: self.windows.length_hours,
            repeats: self.windows.repeats,
            seed: self.seed,
        }
    }

    pub fn estimation_config(&self) -> EstimationConfig {
        let mut cfg = EstimationConfig { sigma: self.sigma, ..Default::default() };
        if let Some(spec) = &self.estimation {
            cfg.trim_quantile = spec.trim_quantile;
            cfg.min_bucket_prices = spec.min_bucket_prices;
            cfg.grid_points = spec.grid_points;
        }
        cfg
    }

    /// Resolve a path relative to the config file location.
    pub fn resolve(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

/// Everything the planner and simulator need for one market.
pub struct MarketData {
    pub contracts: Vec<Contract>,
    pub decomposition: Decomposition,
    /// Per-atom planning curves.
    pub curves_by_atom: BTreeMap<Atom, TimeVaryingSupplyCurve>,
    /// Empirical hour-of-day buckets per atom (log source only):
    /// (interarrivals, prices).
    pub empirical: Option<BTreeMap<Atom, (Vec<Vec<f64>>, Vec<Vec<f64>>)>>,
    /// Synthetic market (synthetic source only).
    pub synthetic: Option<SyntheticMarket>,
}

impl MarketData {
    pub fn type_curves(&self) -> Result<Vec<TimeVaryingSupplyCurve>> {
        scenario::curves_for_decomposition(&self.decomposition, &self.curves_by_atom)
    }

    /// Build the market sampler for a window offset.
    pub fn sampler(&self, offset: f64) -> Result<MarketSampler> {
        if let Some(market) = &self.synthetic {
            return market.sampler_for(&self.decomposition, offset);
        }
        let empirical = self
            .empirical
            .as_ref()
            .ok_or_else(|| Error::Config("no sampler source: provide a log or synthetic market".into()))?;
        // Types are unions of atoms; pool their buckets (arrival streams
        // superpose approximately; pooling interarrivals is the empirical
        // counterpart used when cells merge).
        let rot = |buckets: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            let n = buckets.len();
            let k = (offset.rem_euclid(24.0)) as usize % n;
            (0..n).map(|h| buckets[(h + k) % n].clone()).collect()
        };
        let mut inter = Vec::new();
        let mut prices = Vec::new();
        for ty in &self.decomposition.types {
            let mut i_b: Vec<Vec<f64>> = vec![Vec::new(); 24];
            let mut p_b: Vec<Vec<f64>> = vec![Vec::new(); 24];
            for atom in &ty.atoms {
                let (ib, pb) = empirical
                    .get(atom)
                    .ok_or_else(|| Error::Config(format!("no log data for atom {atom}")))?;
                for h in 0..24 {
                    i_b[h].extend_from_slice(&ib[h]);
                    p_b[h].extend_from_slice(&pb[h]);
                }
            }
            inter.push(rot(&i_b));
            prices.push(rot(&p_b));
        }
        MarketSampler::empirical(inter, prices)
    }
}

/// Load contracts plus curves/market data per the configured source.
pub fn load_market(cfg: &RunConfig, config_path: &Path) -> Result<MarketData> {
    let contracts = files::read_contracts(&cfg.resolve(config_path, &cfg.contracts))?;
    let decomposition = bidflow_core::targeting::decompose(&contracts)?;
    let atoms: Vec<Atom> =
        decomposition.types.iter().flat_map(|t| t.atoms.iter().cloned()).collect();

    match &cfg.curves {
        CurveSource::Synthetic(market) => {
            let mut curves_by_atom = BTreeMap::new();
            for atom in &atoms {
                curves_by_atom.insert(atom.clone(), market.planning_curve(atom)?);
            }
            Ok(MarketData {
                contracts,
                decomposition,
                curves_by_atom,
                empirical: None,
                synthetic: Some(market.clone()),
            })
        }
        CurveSource::CurveFiles(map) => {
            let mut curves_by_atom = BTreeMap::new();
            for atom in &atoms {
                let path = map
                    .get(atom)
                    .ok_or_else(|| Error::Config(format!("no curve file for atom {atom}")))?;
                curves_by_atom.insert(atom.clone(), files::read_curve(&cfg.resolve(config_path, path))?);
            }
            Ok(MarketData { contracts, decomposition, curves_by_atom, empirical: None, synthetic: None })
        }
        CurveSource::LogCsv(path) => {
            let full = cfg.resolve(config_path, path);
            let file = std::fs::File::open(&full)
                .map_err(|e| Error::Input(format!("{}: {e}", full.display())))?;
            let (records, malformed) = estimation::parse_log_csv(file)?;
            check_malformed(records.len(), &malformed)?;
            let span = log_span_hours(&records);
            if cfg.windows.length_hours
                + cfg.windows.stride_hours * (cfg.windows.count.saturating_sub(1)) as f64
                > span + 1e-9
            {
                return Err(Error::Input(format!(
                    "window schedule needs {:.0}h of data but the log spans {span:.0}h",
                    cfg.windows.length_hours + cfg.windows.stride_hours * (cfg.windows.count - 1) as f64
                )));
            }
            let est_cfg = cfg.estimation_config();
            let estimated = estimation::estimate_curves(&records, &est_cfg)?;
            let mut curves_by_atom = BTreeMap::new();
            let mut empirical = BTreeMap::new();
            for atom in &atoms {
                let (curve, _) = estimated
                    .get(atom)
                    .ok_or_else(|| Error::Config(format!("log has no records for atom {atom}")))?;
                curves_by_atom.insert(atom.clone(), curve.clone());
                empirical.insert(atom.clone(), empirical_buckets(&records, atom));
            }
            Ok(MarketData {
                contracts,
                decomposition,
                curves_by_atom,
                empirical: Some(empirical),
                synthetic: None,
            })
        }
    }
}

pub fn check_malformed(good: usize, malformed: &[(usize, String)]) -> Result<()> {
    for (line, reason) in malformed.iter().take(10) {
        log::warn!("log line {line}: {reason}");
    }
    let total = good + malformed.len();
    if total == 0 {
        return Err(Error::Input("log contains no rows".into()));
    }
    if malformed.len() * 100 > total {
        return Err(Error::Input(format!(
            "{} of {} log rows malformed (> 1%); aborting",
            malformed.len(),
            total
        )));
    }
    Ok(())
}

fn log_span_hours(records: &[estimation::LogRecord]) -> f64 {
    let min = records.iter().map(|r| r.timestamp_hours).fold(f64::INFINITY, f64::min);
    let max = records.iter().map(|r| r.timestamp_hours).fold(f64::NEG_INFINITY, f64::max);
    (max - min).max(0.0)
}

fn empirical_buckets(records: &[estimation::LogRecord], atom: &str) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut times: Vec<f64> = records
        .iter()
        .filter(|r| r.tag == atom)
        .map(|r| r.timestamp_hours)
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut inter: Vec<Vec<f64>> = vec![Vec::new(); 24];
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        if dt > 0.0 {
            inter[(w[0].rem_euclid(24.0)) as usize % 24].push(dt);
        }
    }
    let mut prices: Vec<Vec<f64>> = vec![Vec::new(); 24];
    for r in records.iter().filter(|r| r.tag == atom) {
        prices[(r.timestamp_hours.rem_euclid(24.0)) as usize % 24].push(r.market_price);
    }
    // Guarantee non-empty buckets by borrowing circular neighbours.
    for b in [&mut inter, &mut prices] {
        for h in 0..24 {
            if b[h].is_empty() {
                let mut k = 1;
                while b[(h + k) % 24].is_empty() && k < 24 {
                    k += 1;
                }
                let donor = b[(h + k) % 24].clone();
                b[h] = donor;
            }
        }
    }
    (inter, prices)
}
