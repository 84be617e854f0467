//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use bidflow_core::error::{Error, Result};
use bidflow_core::estimation::{self, EstimationConfig};
use bidflow_core::horizon::{ControllerConfig, PolicyMode};
use bidflow_core::planner::{self, build_instance, check_adequate_supply, AggregationMode, InstanceSpec};
use bidflow_core::runs::{self, RunSummary};
use bidflow_core::supply::CurveIntegrator;
use bidflow_core::{files, runs::CampaignConfig};

use crate::config::{load_market, RunConfig};

/// Estimate per-tag curves from a log CSV and write one JSON per tag.
pub fn estimate(log: &Path, out: &Path, sigma: f64) -> Result<()> {
    let file = fs::File::open(log).map_err(|e| Error::Input(format!("{}: {e}", log.display())))?;
    let (records, malformed) = estimation::parse_log_csv(file)?;
    crate::config::check_malformed(records.len(), &malformed)?;
    let cfg = EstimationConfig { sigma, ..Default::default() };
    let estimated = estimation::estimate_curves(&records, &cfg)?;
    fs::create_dir_all(out)?;
    let mut report = serde_json::Map::new();
    for (tag, (curve, diag)) in &estimated {
        let path = out.join(format!("curve_{tag}.json"));
        files::write_curve(&path, curve)?;
        report.insert(tag.clone(), serde_json::to_value(diag)?);
        println!("wrote {} ({} events)", path.display(), diag.events);
    }
    fs::write(out.join("estimation_report.json"), serde_json::to_string_pretty(&report)?)?;
    println!("estimated {} tags from {} records ({} malformed rows skipped)", estimated.len(), records.len(), malformed.len());
    Ok(())
}

/// Solve and write the bid plan; prints the dual gap, the adequate-supply
/// report and per-period bids.
pub fn plan(config_path: &Path, static_policy: bool, strict: bool, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let (mut cfg, hash) = RunConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let market = load_market(&cfg, config_path)?;
    let curves = market.type_curves()?;
    let integrators: Vec<CurveIntegrator> =
        curves.iter().map(|c| CurveIntegrator::new(c, CurveIntegrator::DEFAULT_SUBDIV)).collect();
    let horizon = market
        .contracts
        .iter()
        .map(|c| c.deadline_hours)
        .fold(0.0f64, f64::max);
    let mut spec = InstanceSpec::fresh(&market.contracts, &market.decomposition);
    if static_policy {
        spec.mode = AggregationMode::StaticAverage { from: 0.0, to: horizon };
    }
    let inst = build_instance(&spec, &integrators)?;
    let supply = check_adequate_supply(&inst);
    let opts = cfg.solver_options();

    let solution = match planner::solve(&inst, &opts) {
        Ok(s) => s,
        Err(Error::Infeasible(msg)) if !strict => {
            log::warn!("instance infeasible ({msg}); falling back to best-effort penalty plan");
            planner::penalty_solve(&inst, 1e6 * inst.bid_cap.max(1.0), &opts)?
        }
        Err(e) => return Err(e),
    };
    if strict && !solution.report.converged {
        return Err(Error::Solver(format!(
            "solver did not certify the duality gap (gap {:.3e})",
            solution.report.rel_gap
        )));
    }

    println!("policy: {}", if static_policy { "static" } else { "dynamic" });
    println!("duality gap: {:.3e} ({} iterations, converged: {})", solution.report.rel_gap, solution.report.iterations, solution.report.converged);
    println!("adequate supply: {}", if supply.all_pass { "pass" } else { "FAIL" });
    for t in &supply.per_type {
        println!(
            "  type {}: bound {:.0} vs required {:.0} (margin {:.0}, {})",
            t.type_j, t.bound_integral, t.required, t.margin,
            if t.pass { "ok" } else { "short" }
        );
    }
    println!("breakpoints (h): {:?}", solution.plan.breakpoints);
    for pair in &solution.plan.pairs {
        if pair.supply > 0.0 {
            println!(
                "  type {} period {}: bid {:.4}, supply {:.1}",
                pair.type_j, pair.period_k, pair.bid, pair.supply
            );
        }
    }

    let doc = files::plan_document(&solution.plan, &market.contracts, Some(supply));
    let out_path = match out {
        Some(p) => p.to_path_buf(),
        None => {
            fs::create_dir_all(&cfg.out_dir)?;
            cfg.out_dir.join(if static_policy { "plan_static.json" } else { "plan.json" })
        }
    };
    files::write_plan(&out_path, &doc)?;
    println!("plan written to {} (config {})", out_path.display(), &hash[..12]);
    Ok(())
}

pub struct SimulateArgs {
    pub static_policy: bool,
    pub both: bool,
    pub strict: bool,
    pub seed: Option<u64>,
    pub replan_hours: Option<f64>,
    pub sigma: Option<f64>,
    pub out: Option<PathBuf>,
    /// Simulate a fixed plan document open-loop (no replanning).
    pub plan: Option<PathBuf>,
}

/// Open-loop bidder driven by a plan document: piecewise-constant nominal
/// bids plus randomization noise, proportional-random allocation among the
/// plan's still-unfulfilled contracts. No replanning.
struct PlanDocBidder {
    doc: files::PlanDocument,
    /// Contract index (input order) per plan-document slot.
    contract_of_slot: Vec<usize>,
    requirements: Vec<f64>,
    acquired: Vec<u64>,
    deadlines: Vec<f64>,
    sigma: f64,
}

impl PlanDocBidder {
    fn new(doc: files::PlanDocument, contracts: &[bidflow_core::targeting::Contract], sigma: f64) -> Result<Self> {
        let contract_of_slot = doc
            .contract_ids
            .iter()
            .map(|id| {
                contracts
                    .iter()
                    .position(|c| &c.id == id)
                    .ok_or_else(|| Error::Config(format!("plan references unknown contract {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            doc,
            contract_of_slot,
            requirements: contracts.iter().map(|c| c.requirement).collect(),
            acquired: vec![0; contracts.len()],
            deadlines: contracts.iter().map(|c| c.deadline_hours).collect(),
            sigma,
        })
    }

    fn period_of(&self, t: f64) -> Option<usize> {
        self.doc.breakpoints_hours.iter().position(|&b| t < b)
    }

    /// `(contract, gamma)` weights for live, unfulfilled contracts.
    fn weights(&self, type_j: usize, k: usize, t: f64) -> Vec<(usize, f64)> {
        self.doc
            .gamma
            .iter()
            .enumerate()
            .filter_map(|(slot, g)| {
                let orig = self.contract_of_slot[slot];
                let w = g[type_j][k];
                let live = t < self.deadlines[orig]
                    && (self.acquired[orig] as f64) < self.requirements[orig];
                if w > 0.0 && live {
                    Some((orig, w))
                } else {
                    None
                }
            })
            .collect()
    }
}

impl bidflow_core::simulator::Bidder for PlanDocBidder {
    fn bid(&mut self, t: f64, type_j: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Option<f64>> {
        use rand_distr::Distribution;
        let Some(k) = self.period_of(t) else { return Ok(None) };
        let Some(nominal) = self.doc.bids.get(type_j).and_then(|row| row.get(k).copied().flatten()) else {
            return Ok(None);
        };
        if self.weights(type_j, k, t).is_empty() {
            return Ok(None);
        }
        let noise = if self.sigma > 0.0 {
            rand_distr::Normal::new(0.0, self.sigma).expect("positive sigma").sample(rng)
        } else {
            0.0
        };
        Ok(Some(nominal + noise))
    }

    fn award(&mut self, t: f64, type_j: usize, _price: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Option<usize>> {
        use rand::Rng;
        let Some(k) = self.period_of(t) else { return Ok(None) };
        let weights = self.weights(type_j, k, t);
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Ok(None);
        }
        let mut draw: f64 = rng.gen::<f64>() * total;
        let mut chosen = weights[weights.len() - 1].0;
        for &(orig, w) in &weights {
            draw -= w;
            if draw <= 0.0 {
                chosen = orig;
                break;
            }
        }
        self.acquired[chosen] += 1;
        Ok(Some(chosen))
    }
}

/// Run the sliding-window campaign for one or both policies, writing
/// per-run artifacts and a campaign summary per policy.
pub fn simulate(config_path: &Path, args: SimulateArgs) -> Result<()> {
    let (mut cfg, hash) = RunConfig::load(config_path)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replan_hours {
        cfg.replan_hours = r;
    }
    if let Some(s) = args.sigma {
        cfg.sigma = s;
    }
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    fs::create_dir_all(&out_dir)?;
    let market = load_market(&cfg, config_path)?;
    let campaign = cfg.campaign();

    if let Some(plan_path) = &args.plan {
        return simulate_fixed_plan(&cfg, &market, plan_path, &campaign, &out_dir, &hash);
    }

    let policies: Vec<PolicyMode> = if args.both {
        vec![PolicyMode::Dynamic, PolicyMode::Static]
    } else if args.static_policy {
        vec![PolicyMode::Static]
    } else {
        vec![PolicyMode::Dynamic]
    };

    let mut summaries: Vec<(PolicyMode, Vec<RunSummary>)> = Vec::new();
    for mode in policies {
        let name = match mode {
            PolicyMode::Dynamic => "dynamic",
            PolicyMode::Static => "static",
        };
        let runs = run_policy(&cfg, &market, mode, args.strict, &campaign, &out_dir, name, &hash)?;
        let doc = files::CampaignDocument::new(name, campaign.clone(), hash.clone(), runs.clone());
        files::write_campaign(&out_dir.join(format!("campaign_{name}.json")), &doc)?;
        files::write_campaign_paths_csv(&out_dir.join(format!("cpaths_{name}.csv")), &runs)?;
        println!(
            "{name}: J_avg {:.1} over {} runs ({} fulfilled all contracts)",
            doc.j_avg,
            doc.runs.len(),
            doc.runs.iter().filter(|r| r.all_fulfilled).count()
        );
        summaries.push((mode, runs));
    }
    if summaries.len() == 2 {
        let report = runs::compare(&summaries[0].1, &summaries[1].1, cfg.seed);
        files::write_comparison(&out_dir.join("compare.json"), &report)?;
        println!(
            "dynamic vs static: {:+.2}% mean saving (95% CI [{:+.2}%, {:+.2}%]), cheaper in {:.0}% of paired runs",
            100.0 * report.mean_improvement,
            100.0 * report.improvement_ci.0,
            100.0 * report.improvement_ci.1,
            100.0 * report.frac_a_cheaper
        );
    }
    Ok(())
}

/// Open-loop simulation of a fixed plan over the same window schedule.
fn simulate_fixed_plan(
    cfg: &RunConfig,
    market: &crate::config::MarketData,
    plan_path: &Path,
    campaign: &CampaignConfig,
    out_dir: &Path,
    hash: &str,
) -> Result<()> {
    let doc = files::read_plan(plan_path)?;
    let mut summaries = Vec::new();
    for w in 0..campaign.windows {
        for r in 0..campaign.repeats {
            let offset = w as f64 * campaign.stride_hours;
            let sampler = market.sampler(offset)?;
            let doc_copy = files::read_plan(plan_path)?;
            let mut bidder = PlanDocBidder::new(doc_copy, &market.contracts, cfg.sigma)?;
            let stream = (w * campaign.repeats + r) as u64;
            let result = bidflow_core::simulator::run(
                &sampler,
                &mut bidder,
                market.contracts.len(),
                campaign.length_hours,
                campaign.seed,
                stream,
            );
            let paths = bidflow_core::simulator::normalize(&result, &market.contracts, 200);
            let run_dir = out_dir.join(format!("plan_w{w:02}_r{r}"));
            fs::create_dir_all(&run_dir)?;
            files::write_events_csv(&run_dir.join("events.csv"), &result, &market.contracts)?;
            files::write_paths_csv(&run_dir.join("cpaths.csv"), &paths, &market.contracts)?;
            summaries.push(RunSummary {
                window: w,
                repeat: r,
                stream,
                total_cost: result.total_cost,
                fulfilled: paths.fulfilled.clone(),
                all_fulfilled: paths.fulfilled.iter().all(|&f| f),
                events: result.events.len(),
                wins: result.wins.clone(),
                discarded: result.discarded,
                replans: 0,
                best_effort_replans: 0,
                normalized_mean: paths.mean.clone(),
                aborted: result.aborted.clone(),
            });
        }
    }
    let doc_out = files::CampaignDocument::new("plan", campaign.clone(), hash.to_string(), summaries);
    files::write_campaign(&out_dir.join("campaign_plan.json"), &doc_out)?;
    println!(
        "fixed plan ({}): J_avg {:.1} over {} runs ({} fulfilled all contracts)",
        doc.contract_ids.len(),
        doc_out.j_avg,
        doc_out.runs.len(),
        doc_out.runs.iter().filter(|r| r.all_fulfilled).count()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_policy(
    cfg: &RunConfig,
    market: &crate::config::MarketData,
    mode: PolicyMode,
    strict: bool,
    campaign: &CampaignConfig,
    out_dir: &Path,
    name: &str,
    config_hash: &str,
) -> Result<Vec<RunSummary>> {
    let controller_cfg = ControllerConfig {
        mode,
        replan_hours: cfg.replan_hours,
        solver: cfg.solver_options(),
        strict,
        ..Default::default()
    };
    let provider = |_w: usize, offset: f64| {
        let curves = market
            .type_curves()?
            .into_iter()
            .map(|c| c.shifted(offset))
            .collect::<Vec<_>>();
        let sampler = market.sampler(offset)?;
        Ok((curves, sampler))
    };
    let mut summaries = Vec::new();
    for w in 0..campaign.windows {
        for r in 0..campaign.repeats {
            let out = runs::run_once(&market.contracts, &market.decomposition, &provider, &controller_cfg, campaign, w, r)?;
            let run_dir = out_dir.join(format!("{name}_w{w:02}_r{r}"));
            fs::create_dir_all(&run_dir)?;
            files::write_events_csv(&run_dir.join("events.csv"), &out.result, &market.contracts)?;
            files::write_trace_csv(&run_dir.join("trace.csv"), &out.trace, market.decomposition.n_types())?;
            files::write_paths_csv(&run_dir.join("cpaths.csv"), &out.paths, &market.contracts)?;
            files::write_run_summary(
                &run_dir.join("summary.json"),
                &files::RunDocument {
                    schema_version: 1,
                    summary: out.summary.clone(),
                    seed: campaign.seed,
                    config_hash: config_hash.to_string(),
                },
            )?;
            if let Some(reason) = &out.summary.aborted {
                return Err(Error::Solver(format!("run w{w} r{r} aborted: {reason}")));
            }
            summaries.push(out.summary);
        }
    }
    Ok(summaries)
}

/// Compare two result directories by their campaign summaries.
pub fn compare(dir_a: &Path, dir_b: &Path, out: Option<&Path>) -> Result<()> {
    let load = |dir: &Path| -> Result<files::CampaignDocument> {
        for candidate in ["campaign_dynamic.json", "campaign_static.json"] {
            let p = dir.join(candidate);
            if p.exists() {
                return files::read_campaign(&p);
            }
        }
        Err(Error::Input(format!("{}: no campaign_*.json found", dir.display())))
    };
    let a = load(dir_a)?;
    let b = load(dir_b)?;
    let report = runs::compare(&a.runs, &b.runs, 1);
    println!(
        "{} (J_avg {:.1}) vs {} (J_avg {:.1}): {:+.2}% mean saving, 95% CI [{:+.2}%, {:+.2}%], cheaper in {:.0}% of paired runs",
        a.policy,
        report.j_avg_a,
        b.policy,
        report.j_avg_b,
        100.0 * report.mean_improvement,
        100.0 * report.improvement_ci.0,
        100.0 * report.improvement_ci.1,
        100.0 * report.frac_a_cheaper
    );
    println!(
        "fulfillment: {} {:.0}%, {} {:.0}%",
        a.policy,
        100.0 * report.fulfilled_frac_a,
        b.policy,
        100.0 * report.fulfilled_frac_b
    );
    if let Some(path) = out {
        files::write_comparison(path, &report)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}
