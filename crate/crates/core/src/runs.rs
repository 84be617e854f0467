//! Sliding-window simulation campaigns and policy comparison.
//!
//! A campaign runs `windows × repeats` simulations; window `w` starts
//! `w × stride` hours into the market's daily cycle, and repeat `r` draws
//! its own RNG streams from `(seed, window, repeat)`. Dynamic and static
//! policies share market streams pairwise, so comparisons are paired.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::horizon::{Controller, ControllerConfig, PolicyMode};
use crate::simulator::{self, MarketSampler};
use crate::supply::TimeVaryingSupplyCurve;
use crate::targeting::{Contract, Decomposition};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub windows: usize,
    pub stride_hours: f64,
    pub length_hours: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self { windows: 9, stride_hours: 12.0, length_hours: 72.0, repeats: 4, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub window: usize,
    pub repeat: usize,
    pub stream: u64,
    pub total_cost: f64,
    pub fulfilled: Vec<bool>,
    pub all_fulfilled: bool,
    pub events: usize,
    pub wins: Vec<u64>,
    pub discarded: u64,
    pub replans: usize,
    pub best_effort_replans: usize,
    /// Mean normalized acquisition path on a 200-point grid.
    pub normalized_mean: Vec<f64>,
    pub aborted: Option<String>,
}

/// Full result of one run (summary plus the raw simulation artifacts).
pub struct RunOutput {
    pub summary: RunSummary,
    pub result: simulator::SimulationResult,
    pub trace: Vec<crate::horizon::TraceRow>,
    pub paths: simulator::NormalizedPaths,
}

/// Provides per-window planning curves and a market sampler.
/// `offset` is the window start within the daily cycle.
pub trait WindowProvider: Sync {
    fn window(&self, window: usize, offset: f64) -> Result<(Vec<TimeVaryingSupplyCurve>, MarketSampler)>;
}

impl<F> WindowProvider for F
where
    F: Fn(usize, f64) -> Result<(Vec<TimeVaryingSupplyCurve>, MarketSampler)> + Sync,
{
    fn window(&self, window: usize, offset: f64) -> Result<(Vec<TimeVaryingSupplyCurve>, MarketSampler)> {
        self(window, offset)
    }
}

/// Execute one run.
pub fn run_once(
    contracts: &[Contract],
    decomposition: &Decomposition,
    provider: &dyn WindowProvider,
    controller_cfg: &ControllerConfig,
    campaign: &CampaignConfig,
    window: usize,
    repeat: usize,
) -> Result<RunOutput> {
    let offset = window as f64 * campaign.stride_hours;
    let (curves, sampler) = provider.window(window, offset)?;
    let mut controller =
        Controller::new(contracts.to_vec(), decomposition.clone(), &curves, controller_cfg.clone())?;
    let stream = (window * campaign.repeats + repeat) as u64;
    let result = simulator::run(
        &sampler,
        &mut controller,
        contracts.len(),
        campaign.length_hours,
        campaign.seed,
        stream,
    );
    let paths = simulator::normalize(&result, contracts, 200);
    let summary = RunSummary {
        window,
        repeat,
        stream,
        total_cost: result.total_cost,
        fulfilled: paths.fulfilled.clone(),
        all_fulfilled: paths.fulfilled.iter().all(|&f| f),
        events: result.events.len(),
        wins: result.wins.clone(),
        discarded: result.discarded,
        replans: controller.replans,
        best_effort_replans: controller.best_effort_replans,
        normalized_mean: paths.mean.clone(),
        aborted: result.aborted.clone(),
    };
    Ok(RunOutput { summary, result, trace: controller.trace().to_vec(), paths })
}

/// Run the whole campaign in parallel; summaries come back ordered by
/// `(window, repeat)` regardless of scheduling.
pub fn run_campaign(
    contracts: &[Contract],
    decomposition: &Decomposition,
    provider: &dyn WindowProvider,
    mode: PolicyMode,
    controller_cfg: &ControllerConfig,
    campaign: &CampaignConfig,
) -> Result<Vec<RunSummary>> {
    let mut cfg = controller_cfg.clone();
    cfg.mode = mode;
    let jobs: Vec<(usize, usize)> = (0..campaign.windows)
        .flat_map(|w| (0..campaign.repeats).map(move |r| (w, r)))
        .collect();
    let mut results: Vec<(usize, RunSummary)> = jobs
        .par_iter()
        .map(|&(w, r)| {
            run_once(contracts, decomposition, provider, &cfg, campaign, w, r)
                .map(|out| (w * campaign.repeats + r, out.summary))
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|(k, _)| *k);
    Ok(results.into_iter().map(|(_, s)| s).collect())
}

/// Paired comparison of two policies over matching campaign runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_runs: usize,
    pub j_avg_a: f64,
    pub j_avg_b: f64,
    pub median_a: f64,
    pub median_b: f64,
    /// `(J_b - J_a) / J_b`: relative saving of policy A over policy B.
    pub mean_improvement: f64,
    /// Fraction of paired runs where A is strictly cheaper.
    pub frac_a_cheaper: f64,
    pub fulfilled_frac_a: f64,
    pub fulfilled_frac_b: f64,
    /// Bootstrap 95% interval on the mean relative improvement.
    pub improvement_ci: (f64, f64),
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Compare policy A (typically dynamic) against policy B (static) on paired
/// summaries. Bootstrap is seeded for reproducibility.
pub fn compare(a: &[RunSummary], b: &[RunSummary], seed: u64) -> ComparisonReport {
    use rand::{Rng, SeedableRng};
    let n = a.len().min(b.len());
    let costs_a: Vec<f64> = a[..n].iter().map(|s| s.total_cost).collect();
    let costs_b: Vec<f64> = b[..n].iter().map(|s| s.total_cost).collect();
    let j_avg_a = costs_a.iter().sum::<f64>() / n.max(1) as f64;
    let j_avg_b = costs_b.iter().sum::<f64>() / n.max(1) as f64;
    let improvements: Vec<f64> = costs_a
        .iter()
        .zip(&costs_b)
        .map(|(&ca, &cb)| (cb - ca) / cb.abs().max(1e-12))
        .collect();
    let mean_improvement = improvements.iter().sum::<f64>() / n.max(1) as f64;
    let frac_a_cheaper =
        costs_a.iter().zip(&costs_b).filter(|(&ca, &cb)| ca < cb).count() as f64 / n.max(1) as f64;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut boots: Vec<f64> = (0..1000)
        .map(|_| {
            let mut acc = 0.0;
            for _ in 0..n {
                acc += improvements[rng.gen_range(0..n)];
            }
            acc / n as f64
        })
        .collect();
    boots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let ci = (boots[(0.025 * 999.0) as usize], boots[(0.975 * 999.0) as usize]);
    ComparisonReport {
        n_runs: n,
        j_avg_a,
        j_avg_b,
        median_a: median(&mut costs_a.clone()),
        median_b: median(&mut costs_b.clone()),
        mean_improvement,
        frac_a_cheaper,
        fulfilled_frac_a: a[..n].iter().filter(|s| s.all_fulfilled).count() as f64 / n.max(1) as f64,
        fulfilled_frac_b: b[..n].iter().filter(|s| s.all_fulfilled).count() as f64 / n.max(1) as f64,
        improvement_ci: ci,
    }
}
