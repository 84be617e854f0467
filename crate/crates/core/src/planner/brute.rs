//! Exhaustive grid-search oracle for small instances.
//!
//! Enumerates per-pair supplies on a uniform grid and keeps the cheapest
//! point whose flow problem is feasible. Feasibility is checked by Hall's
//! condition over contract subsets (equivalent to max-flow feasibility on
//! the bipartite transportation graph, since over-allocation is allowed).
//! Independent of the dual solver by construction.

use crate::error::{Error, Result};
use crate::planner::flow::{route_supplies, FlowPlan, FlowResiduals};
use crate::planner::instance::PlanningInstance;

/// Enumeration budget: grid points times subset checks.
const MAX_WORK: f64 = 3.0e8;

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub flow: FlowPlan,
    pub cost: f64,
    /// Conservative bound on the extra cost introduced by one grid cell per
    /// dimension: `Σ_p h_p · bid_cap_p`.
    pub grid_error_bound: f64,
}

/// Exhaustive search over supplies with `resolution` points per admissible
/// pair. Refuses instances whose enumeration exceeds the work budget.
pub fn brute_force_solve(inst: &PlanningInstance, resolution: usize) -> Result<BruteForceResult> {
    let np = inst.pairs.len();
    let n = inst.n_contracts();
    if resolution < 8 {
        return Err(Error::Parameter("brute-force resolution must be >= 8".into()));
    }
    if np == 0 || n == 0 {
        return Ok(BruteForceResult { flow: FlowPlan::empty(inst), cost: 0.0, grid_error_bound: 0.0 });
    }
    if n > 10 {
        return Err(Error::TooLarge(format!("{n} contracts (subset enumeration)")));
    }
    let n_subsets = 1usize << n;
    let work = (resolution as f64).powi(np as i32) * n_subsets as f64;
    if work > MAX_WORK {
        return Err(Error::TooLarge(format!(
            "{resolution}^{np} supply grid with {n_subsets} subsets exceeds the {MAX_WORK:.0e} work budget"
        )));
    }

    // Per-pair supply grids and acquisition-cost tables.
    let mut values = Vec::with_capacity(np);
    let mut costs = Vec::with_capacity(np);
    for pair in &inst.pairs {
        let cap = pair.curve.capacity() * (1.0 - 1e-9);
        let vals: Vec<f64> = (0..resolution).map(|m| cap * m as f64 / (resolution - 1) as f64).collect();
        let cost: Vec<f64> = vals.iter().map(|&s| pair.curve.acquisition_cost(s).unwrap()).collect();
        values.push(vals);
        costs.push(cost);
    }

    // Subset requirement sums and, per pair, the subsets it can serve.
    let mut subset_req = vec![0.0f64; n_subsets];
    for mask in 1..n_subsets {
        let low = mask.trailing_zeros() as usize;
        subset_req[mask] = subset_req[mask & (mask - 1)] + inst.requirements[low];
    }
    let pair_mask: Vec<usize> =
        inst.pairs.iter().map(|p| p.contracts.iter().fold(0usize, |m, &i| m | (1 << i))).collect();
    let touched: Vec<Vec<usize>> = (0..np)
        .map(|p| (1..n_subsets).filter(|mask| mask & pair_mask[p] != 0).collect())
        .collect();

    // Odometer enumeration with incremental subset cover sums.
    let mut digits = vec![0usize; np];
    let mut cover = vec![0.0f64; n_subsets];
    let mut total_cost: f64 = (0..np).map(|p| costs[p][0]).sum();
    let req_scale = inst.requirements.iter().cloned().fold(1.0f64, f64::max);
    let feas_eps = 1e-7 * req_scale;

    let mut best: Option<(f64, Vec<usize>)> = None;
    'enumerate: loop {
        let feasible = (1..n_subsets).all(|mask| cover[mask] + feas_eps >= subset_req[mask]);
        if feasible && best.as_ref().map_or(true, |(c, _)| total_cost < *c) {
            best = Some((total_cost, digits.clone()));
        }
        let mut p = 0;
        loop {
            if p == np {
                break 'enumerate;
            }
            let old = values[p][digits[p]];
            let old_cost = costs[p][digits[p]];
            if digits[p] + 1 < resolution {
                digits[p] += 1;
            } else {
                digits[p] = 0;
            }
            let delta = values[p][digits[p]] - old;
            total_cost += costs[p][digits[p]] - old_cost;
            for &mask in &touched[p] {
                cover[mask] += delta;
            }
            if digits[p] != 0 {
                break;
            }
            p += 1;
        }
    }

    let (cost, digits) = best.ok_or_else(|| Error::Infeasible("no feasible supply point on the grid".into()))?;
    let supplies: Vec<f64> = (0..np).map(|p| values[p][digits[p]]).collect();
    let edges: Vec<Vec<usize>> = inst.pairs.iter().map(|p| p.contracts.clone()).collect();
    let absorbing = vec![true; n];
    let (flows, delivered) = route_supplies(inst, &supplies, &edges, &inst.requirements, &absorbing);
    let routed: Vec<f64> = flows.iter().map(|row| row.iter().sum()).collect();
    let shortfall: Vec<f64> = (0..n).map(|i| (inst.requirements[i] - delivered[i]).max(0.0)).collect();
    let grid_error_bound: f64 = inst
        .pairs
        .iter()
        .map(|p| p.curve.capacity() / (resolution - 1) as f64 * p.curve.bid_cap().max(0.0))
        .sum();
    Ok(BruteForceResult {
        flow: FlowPlan {
            supplies: routed,
            target_supplies: supplies,
            flows,
            delivered,
            shortfall,
            residuals: FlowResiduals::default(),
            relaxed_support: false,
        },
        cost,
        grid_error_bound,
    })
}
