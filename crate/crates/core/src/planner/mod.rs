//! Finite convex planning: piecewise-constant bid/allocation plans.
//!
//! The continuous control problem reduces to a finite convex program over
//! per-(type, period) supplies `s_j[k]` and flows `r_ij[k]`:
//!
//! ```text
//!   minimize    Σ_jk  Λ̄_jk(s_j[k])
//!   subject to  Σ_{j,k admissible to i} r_ij[k] >= C_i
//!               Σ_{i in B_j ∩ T_k} r_ij[k] = s_j[k],   r_ij[k] >= 0
//! ```
//!
//! where `Λ̄_jk = f̄_jk ∘ W̄_jk⁻¹` is convex. We maximize the concave dual
//!
//! ```text
//!   g(ρ) = Σ_jk [ f̄_jk(μ_jk) − μ_jk W̄_jk(μ_jk) ] + Σ_i ρ_i C_i,
//!   μ_jk = max_{i in B_j ∩ T_k} ρ_i,   ρ >= 0,
//! ```
//!
//! by projected supergradient ascent with iterate averaging and a
//! tie-cluster bisection polish, then recover primal flows on the argmax
//! support graph with a max-flow pass. Optimality is certified by the
//! primal/dual gap, never assumed.

mod brute;
mod dual;
mod flow;
mod instance;
mod plan;

pub use brute::{brute_force_solve, BruteForceResult};
pub use dual::{solve_dual, ConvergenceReport, PseudoBids, SolveOptions};
pub use flow::{recover_primal, FlowPlan, FlowResiduals};
pub use instance::{
    build_instance, check_adequate_supply, AggregationMode, InstanceSpec, PairSlot, PlanningInstance,
    SupplyReport, TypeSupply,
};
pub use plan::{plan_cost, plan_from_flow, single_contract_bid, BidPlan, PlanPair};

use crate::error::Result;

/// Full solve: dual ascent, primal recovery, bid-plan extraction.
#[derive(Debug, Clone)]
pub struct Solution {
    pub pseudo: PseudoBids,
    pub flow: FlowPlan,
    pub plan: BidPlan,
    pub report: ConvergenceReport,
}

/// Solve an instance end to end.
pub fn solve(inst: &PlanningInstance, opts: &SolveOptions) -> Result<Solution> {
    if inst.is_empty() {
        let pseudo = PseudoBids { rho: vec![0.0; inst.n_contracts()], mu: Vec::new() };
        let flow = FlowPlan::empty(inst);
        let report = ConvergenceReport::trivial();
        let plan = plan_from_flow(inst, &flow, &pseudo, &report)?;
        return Ok(Solution { pseudo, flow, plan, report });
    }
    let (pseudo, report) = solve_dual(inst, opts)?;
    let flow = recover_primal(inst, &pseudo, opts)?;
    let plan = plan_from_flow(inst, &flow, &pseudo, &report)?;
    Ok(Solution { pseudo, flow, plan, report })
}

/// Best-effort solve: requirement constraints are relaxed with a linear
/// shortfall penalty of `weight` per missing item (dual box `0 <= ρ <= w`).
pub fn penalty_solve(inst: &PlanningInstance, weight: f64, opts: &SolveOptions) -> Result<Solution> {
    let mut opts = opts.clone();
    opts.penalty_weight = Some(weight);
    solve(inst, &opts)
}
