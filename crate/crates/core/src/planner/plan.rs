//! Bid plans: piecewise-constant bids and allocation probabilities.

use crate::error::Result;
use crate::planner::dual::{ConvergenceReport, PseudoBids};
use crate::planner::flow::FlowPlan;
use crate::planner::instance::PlanningInstance;
use crate::supply::TimeVaryingSupplyCurve;

/// One planned (type, period) cell.
#[derive(Debug, Clone)]
pub struct PlanPair {
    pub type_j: usize,
    pub period_k: usize,
    /// Uniform bid for every contract allocated from this cell.
    pub bid: f64,
    /// Planned supply (items over the period).
    pub supply: f64,
    /// Allocation probabilities aligned with the instance pair's contracts;
    /// sums to 1 when `supply > 0`, all zero otherwise.
    pub gamma: Vec<f64>,
    /// Local contract indices (copied from the instance pair).
    pub contracts: Vec<usize>,
}

/// A piecewise-constant bid/allocation plan.
#[derive(Debug, Clone)]
pub struct BidPlan {
    pub start: f64,
    pub breakpoints: Vec<f64>,
    /// Original contract index per local contract.
    pub contract_ids: Vec<usize>,
    pub n_types: usize,
    pub pairs: Vec<PlanPair>,
    /// `[type][period] -> pairs index` for admissible cells.
    pub lookup: Vec<Vec<Option<usize>>>,
    /// Pseudo-bids per local contract.
    pub pseudo_bids: Vec<f64>,
    pub rel_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Requirement shortfall per local contract (best-effort mode).
    pub shortfall: Vec<f64>,
}

impl BidPlan {
    pub fn empty() -> Self {
        Self {
            start: 0.0,
            breakpoints: Vec::new(),
            contract_ids: Vec::new(),
            n_types: 0,
            pairs: Vec::new(),
            lookup: Vec::new(),
            pseudo_bids: Vec::new(),
            rel_gap: 0.0,
            iterations: 0,
            converged: true,
            shortfall: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Period index containing time `t`, or `None` beyond the horizon.
    pub fn period_of(&self, t: f64) -> Option<usize> {
        if t < self.start {
            return None;
        }
        self.breakpoints.iter().position(|&b| t < b)
    }

    /// Planned cell for type `j` at time `t`.
    pub fn pair_at(&self, type_j: usize, t: f64) -> Option<&PlanPair> {
        let k = self.period_of(t)?;
        let idx = *self.lookup.get(type_j)?.get(k)?;
        idx.map(|i| &self.pairs[i])
    }

    /// Nominal bid for type `j` at time `t` (`None` when the plan does not
    /// buy this type then).
    pub fn bid_at(&self, type_j: usize, t: f64) -> Option<f64> {
        let pair = self.pair_at(type_j, t)?;
        if pair.supply > 0.0 {
            Some(pair.bid)
        } else {
            None
        }
    }
}

/// Transform flows into the bid plan: `x = W̄⁻¹(s)`, `γ = r/s` (0/0 = 0).
pub fn plan_from_flow(
    inst: &PlanningInstance,
    flow: &FlowPlan,
    pseudo: &PseudoBids,
    report: &ConvergenceReport,
) -> Result<BidPlan> {
    let n_periods = inst.n_periods();
    let mut lookup = vec![vec![None; n_periods]; inst.n_types];
    let mut pairs = Vec::with_capacity(inst.pairs.len());
    for (p, slot) in inst.pairs.iter().enumerate() {
        let s = flow.supplies[p];
        let (bid, gamma) = if s > 0.0 {
            let inv = slot.curve.invert(s)?;
            let total: f64 = flow.flows[p].iter().sum();
            let gamma = flow.flows[p].iter().map(|&r| if total > 0.0 { r / total } else { 0.0 }).collect();
            (inv.bid, gamma)
        } else {
            (slot.curve.bid_floor(), vec![0.0; slot.contracts.len()])
        };
        lookup[slot.type_j][slot.period_k] = Some(pairs.len());
        pairs.push(PlanPair {
            type_j: slot.type_j,
            period_k: slot.period_k,
            bid,
            supply: s,
            gamma,
            contracts: slot.contracts.clone(),
        });
    }
    Ok(BidPlan {
        start: inst.start,
        breakpoints: inst.breakpoints.clone(),
        contract_ids: inst.contract_ids.clone(),
        n_types: inst.n_types,
        pairs,
        lookup,
        pseudo_bids: pseudo.rho.clone(),
        rel_gap: report.rel_gap,
        iterations: report.iterations,
        converged: report.converged,
        shortfall: flow.shortfall.clone(),
    })
}

/// Plan cost at routed supplies (re-exported convenience).
pub fn plan_cost(inst: &PlanningInstance, flow: &FlowPlan) -> f64 {
    crate::planner::flow::plan_cost(inst, flow)
}

/// Closed-form single-contract bid: the smallest bid whose aggregate supply
/// over `[0, horizon]` meets the requirement, or the bid cap when the
/// requirement is unattainable (best-effort branch).
pub fn single_contract_bid(requirement: f64, horizon: f64, curve: &TimeVaryingSupplyCurve) -> Result<f64> {
    let agg = curve.aggregate(0.0, horizon)?;
    let cap = agg.capacity();
    if requirement >= cap * (1.0 - 1e-9) {
        return Ok(agg.bid_cap());
    }
    Ok(agg.invert(requirement)?.bid)
}
