//! File formats: contract lists, plan documents, result CSVs and campaign
//! summaries.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::horizon::TraceRow;
use crate::planner::{BidPlan, SupplyReport};
use crate::runs::{CampaignConfig, ComparisonReport, RunSummary};
use crate::simulator::{NormalizedPaths, SimulationResult};
use crate::supply::{CurveDocument, TimeVaryingSupplyCurve};
use crate::targeting::Contract;

pub fn read_contracts(path: &Path) -> Result<Vec<Contract>> {
    let text = fs::read_to_string(path)?;
    let contracts: Vec<Contract> = serde_json::from_str(&text)?;
    for c in &contracts {
        c.validate()?;
    }
    if contracts.is_empty() {
        return Err(Error::Input(format!("{}: empty contract list", path.display())));
    }
    let mut seen = std::collections::BTreeSet::new();
    for c in &contracts {
        if !seen.insert(&c.id) {
            return Err(Error::Input(format!("{}: duplicate contract id {}", path.display(), c.id)));
        }
    }
    Ok(contracts)
}

pub fn write_contracts(path: &Path, contracts: &[Contract]) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(contracts)?)?;
    Ok(())
}

pub fn read_curve(path: &Path) -> Result<TimeVaryingSupplyCurve> {
    let text = fs::read_to_string(path)?;
    let doc: CurveDocument = serde_json::from_str(&text)?;
    TimeVaryingSupplyCurve::from_document(doc)
}

pub fn write_curve(path: &Path, curve: &TimeVaryingSupplyCurve) -> Result<()> {
    fs::write(path, serde_json::to_string(&curve.to_document())?)?;
    Ok(())
}

/// Plan output document: piecewise-constant bids, allocation probabilities
/// and solver diagnostics.
#[derive(Debug, Serialize, Deserialize)]
pub struct PlanDocument {
    pub schema_version: u32,
    pub start_hours: f64,
    pub breakpoints_hours: Vec<f64>,
    /// Ids of the contracts covered by the plan, local order.
    pub contract_ids: Vec<String>,
    /// `bids[type][period]`; `null` marks inadmissible cells.
    pub bids: Vec<Vec<Option<f64>>>,
    /// `gamma[contract][type][period]`, zero outside the support.
    pub gamma: Vec<Vec<Vec<f64>>>,
    pub pseudo_bids: Vec<f64>,
    pub dual_gap: f64,
    pub solver_iterations: usize,
    pub converged: bool,
    pub shortfall: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supply_report: Option<SupplyReport>,
}

pub fn plan_document(
    plan: &BidPlan,
    contracts: &[Contract],
    supply_report: Option<SupplyReport>,
) -> PlanDocument {
    let n_local = plan.contract_ids.len();
    let n_periods = plan.breakpoints.len();
    let mut bids = vec![vec![None; n_periods]; plan.n_types];
    let mut gamma = vec![vec![vec![0.0; n_periods]; plan.n_types]; n_local];
    for pair in &plan.pairs {
        bids[pair.type_j][pair.period_k] = Some(pair.bid);
        for (slot, &local) in pair.contracts.iter().enumerate() {
            gamma[local][pair.type_j][pair.period_k] = pair.gamma[slot];
        }
    }
    PlanDocument {
        schema_version: 1,
        start_hours: plan.start,
        breakpoints_hours: plan.breakpoints.clone(),
        contract_ids: plan.contract_ids.iter().map(|&i| contracts[i].id.clone()).collect(),
        bids,
        gamma,
        pseudo_bids: plan.pseudo_bids.clone(),
        dual_gap: plan.rel_gap,
        solver_iterations: plan.iterations,
        converged: plan.converged,
        shortfall: plan.shortfall.clone(),
        supply_report,
    }
}

pub fn write_plan(path: &Path, doc: &PlanDocument) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(doc)?)?;
    Ok(())
}

pub fn read_plan(path: &Path) -> Result<PlanDocument> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Events CSV: `t,type,price,bid,won,allocated_contract`.
pub fn write_events_csv(path: &Path, result: &SimulationResult, contracts: &[Contract]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "type", "price", "bid", "won", "allocated_contract"])?;
    for e in &result.events {
        w.write_record([
            format!("{:.6}", e.t),
            e.type_j.to_string(),
            if e.price.is_finite() { format!("{:.6}", e.price) } else { "inf".to_string() },
            e.bid.map(|b| format!("{b:.6}")).unwrap_or_default(),
            (e.won as u8).to_string(),
            e.allocated.map(|i| contracts[i].id.clone()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Controller trace CSV: time, contract id, acquired, remaining, and the
/// current nominal bid per type (wide columns).
pub fn write_trace_csv(path: &Path, trace: &[TraceRow], n_types: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "contract_id".to_string(), "acquired".to_string(), "remaining".to_string()];
    header.extend((0..n_types).map(|j| format!("bid_type_{j}")));
    w.write_record(&header)?;
    for row in trace {
        let mut rec = vec![
            format!("{:.6}", row.t),
            row.contract_id.clone(),
            row.acquired.to_string(),
            format!("{:.3}", row.remaining),
        ];
        rec.extend(row.bids.iter().map(|b| b.map(|v| format!("{v:.6}")).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Normalized acquisition paths CSV: grid point, mean, one column per
/// contract.
pub fn write_paths_csv(path: &Path, paths: &NormalizedPaths, contracts: &[Contract]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["u".to_string(), "mean".to_string()];
    header.extend(contracts.iter().map(|c| format!("c_{}", c.id)));
    w.write_record(&header)?;
    for (k, &u) in paths.grid.iter().enumerate() {
        let mut rec = vec![format!("{u:.6}"), format!("{:.6}", paths.mean[k])];
        rec.extend(paths.per_contract.iter().map(|p| format!("{:.6}", p[k])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Run summary JSON (per run).
#[derive(Debug, Serialize, Deserialize)]
pub struct RunDocument {
    pub schema_version: u32,
    pub summary: RunSummary,
    pub seed: u64,
    pub config_hash: String,
}

pub fn write_run_summary(path: &Path, doc: &RunDocument) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(doc)?)?;
    Ok(())
}

/// Campaign-level results: all run summaries plus the campaign settings.
#[derive(Debug, Serialize, Deserialize)]
pub struct CampaignDocument {
    pub schema_version: u32,
    pub policy: String,
    pub campaign: CampaignConfig,
    pub config_hash: String,
    pub j_avg: f64,
    pub runs: Vec<RunSummary>,
}

impl CampaignDocument {
    pub fn new(policy: &str, campaign: CampaignConfig, config_hash: String, runs: Vec<RunSummary>) -> Self {
        let j_avg = runs.iter().map(|r| r.total_cost).sum::<f64>() / runs.len().max(1) as f64;
        Self { schema_version: 1, policy: policy.to_string(), campaign, config_hash, j_avg, runs }
    }
}

pub fn write_campaign(path: &Path, doc: &CampaignDocument) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(doc)?)?;
    Ok(())
}

pub fn read_campaign(path: &Path) -> Result<CampaignDocument> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_comparison(path: &Path, report: &ComparisonReport) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Plot-ready mean normalized curves for a whole campaign: one row per grid
/// point, one column per run plus the across-run mean.
pub fn write_campaign_paths_csv(path: &Path, runs: &[RunSummary]) -> Result<()> {
    if runs.is_empty() {
        return Ok(());
    }
    let points = runs[0].normalized_mean.len();
    let mut f = fs::File::create(path)?;
    let mut header = vec!["u".to_string(), "mean".to_string()];
    header.extend(runs.iter().map(|r| format!("w{}r{}", r.window, r.repeat)));
    writeln!(f, "{}", header.join(","))?;
    for k in 0..points {
        let u = k as f64 / (points - 1) as f64;
        let mean = runs.iter().map(|r| r.normalized_mean[k]).sum::<f64>() / runs.len() as f64;
        let mut rec = vec![format!("{u:.6}"), format!("{mean:.6}")];
        rec.extend(runs.iter().map(|r| format!("{:.6}", r.normalized_mean[k])));
        writeln!(f, "{}", rec.join(","))?;
    }
    Ok(())
}
