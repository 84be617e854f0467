//! Primal recovery: route supplies to contracts on the argmax support graph.
//!
//! At a dual point `ρ`, optimal supplies are `s_p = W̄_p(μ_p)` and flows may
//! only use pairs where `ρ_i` attains `μ_p`. Feasibility of the routing is a
//! transportation problem solved with a max-flow pass: binding contracts
//! (`ρ_i > 0`) must receive exactly `C_i`, free contracts at least `C_i`,
//! and leftover free mass is distributed to non-binding contracts. Supply
//! that cannot be routed at all is shaved off `s_p` and reported.

use crate::error::{Error, Result};
use crate::planner::dual::{PseudoBids, SolveOptions};
use crate::planner::instance::PlanningInstance;

/// Routing diagnostics.
#[derive(Debug, Clone, Default)]
pub struct FlowResiduals {
    /// Worst relative requirement shortfall among non-capped contracts.
    pub max_unmet_rel: f64,
    /// Worst relative supply shave `(W̄(μ) - routed) / max(1, W̄(μ))`.
    pub max_shaved_rel: f64,
    /// Worst `μ_p - ρ_i` over support edges carrying flow.
    pub max_support_gap: f64,
    /// Absolute tie tolerance used for support inclusion.
    pub support_eps: f64,
}

/// Per-(type, period) supplies and flows.
#[derive(Debug, Clone)]
pub struct FlowPlan {
    /// Routed supply per pair (row sums of `flows`).
    pub supplies: Vec<f64>,
    /// Dual-implied targets `W̄_p(μ_p)`.
    pub target_supplies: Vec<f64>,
    /// Flows per pair, aligned with `pairs[p].contracts`.
    pub flows: Vec<Vec<f64>>,
    /// Delivered items per local contract.
    pub delivered: Vec<f64>,
    /// `max(0, C_i - delivered_i)` per local contract.
    pub shortfall: Vec<f64>,
    pub residuals: FlowResiduals,
    /// True when the support had to be widened beyond the base tolerance.
    pub relaxed_support: bool,
}

impl FlowPlan {
    pub fn empty(inst: &PlanningInstance) -> Self {
        Self {
            supplies: vec![0.0; inst.pairs.len()],
            target_supplies: vec![0.0; inst.pairs.len()],
            flows: inst.pairs.iter().map(|p| vec![0.0; p.contracts.len()]).collect(),
            delivered: vec![0.0; inst.n_contracts()],
            shortfall: inst.requirements.clone(),
            residuals: FlowResiduals::default(),
            relaxed_support: false,
        }
    }

    /// Check the flow-balance invariants to the stated tolerance.
    pub fn check_balance(&self, inst: &PlanningInstance, tol: f64) -> bool {
        for (p, f) in self.flows.iter().enumerate() {
            let sum: f64 = f.iter().sum();
            if (sum - self.supplies[p]).abs() > tol * sum.abs().max(1.0) {
                return false;
            }
        }
        let _ = inst;
        true
    }
}

/// Plan cost `Σ_p Λ̄_p(s_p)` at routed supplies.
pub fn plan_cost(inst: &PlanningInstance, flow: &FlowPlan) -> f64 {
    inst.pairs
        .iter()
        .zip(&flow.supplies)
        .map(|(pair, &s)| pair.curve.acquisition_cost(s.min(pair.curve.capacity())).unwrap_or(f64::INFINITY))
        .sum()
}

// ---------------------------------------------------------------------------
// Dinic max-flow (f64 capacities)
// ---------------------------------------------------------------------------

struct Dinic {
    to: Vec<usize>,
    cap: Vec<f64>,
    adj: Vec<Vec<usize>>,
    level: Vec<i32>,
    cursor: Vec<usize>,
    eps: f64,
}

impl Dinic {
    fn new(nodes: usize, eps: f64) -> Self {
        Self { to: Vec::new(), cap: Vec::new(), adj: vec![Vec::new(); nodes], level: vec![0; nodes], cursor: vec![0; nodes], eps }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: f64) -> usize {
        let id = self.to.len();
        self.to.push(v);
        self.cap.push(c);
        self.adj[u].push(id);
        self.to.push(u);
        self.cap.push(0.0);
        self.adj[v].push(id + 1);
        id
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = std::collections::VecDeque::new();
        self.level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if self.cap[e] > self.eps && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: f64) -> f64 {
        if u == t {
            return pushed;
        }
        while self.cursor[u] < self.adj[u].len() {
            let e = self.adj[u][self.cursor[u]];
            let v = self.to[e];
            if self.cap[e] > self.eps && self.level[v] == self.level[u] + 1 {
                let got = self.dfs(v, t, pushed.min(self.cap[e]));
                if got > self.eps {
                    self.cap[e] -= got;
                    self.cap[e ^ 1] += got;
                    return got;
                }
            }
            self.cursor[u] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        while self.bfs(s, t) {
            self.cursor.iter_mut().for_each(|c| *c = 0);
            loop {
                let pushed = self.dfs(s, t, f64::INFINITY);
                if pushed <= self.eps {
                    break;
                }
                total += pushed;
            }
        }
        total
    }

    /// Flow actually sent along forward edge `id` (its reverse capacity).
    fn sent(&self, id: usize) -> f64 {
        self.cap[id ^ 1]
    }
}

/// Route fixed per-pair supplies to contracts over the given edge sets:
/// phase 1 fills requirements (`sink_caps`), phase 2 distributes leftovers
/// to contracts marked `absorbing`. Returns per-pair flows.
pub(crate) fn route_supplies(
    inst: &PlanningInstance,
    supplies: &[f64],
    edges: &[Vec<usize>],
    sink_caps: &[f64],
    absorbing: &[bool],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let np = inst.pairs.len();
    let n = inst.n_contracts();
    let scale = supplies.iter().cloned().fold(1.0f64, f64::max);
    let eps = 1e-12 * scale;
    let (source, sink) = (0usize, 1 + np + n);
    let node_pair = |p: usize| 1 + p;
    let node_contract = |i: usize| 1 + np + i;

    let mut net = Dinic::new(np + n + 2, eps);
    let mut supply_edges = Vec::with_capacity(np);
    let mut flow_edges: Vec<Vec<usize>> = vec![Vec::new(); np];
    for p in 0..np {
        supply_edges.push(net.add_edge(source, node_pair(p), supplies[p]));
        for &i in &edges[p] {
            flow_edges[p].push(net.add_edge(node_pair(p), node_contract(i), f64::INFINITY));
        }
    }
    let mut demand_edges = Vec::with_capacity(n);
    for i in 0..n {
        demand_edges.push(net.add_edge(node_contract(i), sink, sink_caps[i].max(0.0)));
    }
    net.max_flow(source, sink);

    // Phase 2: open absorbing contracts wide and push the remaining mass.
    let big = 1e6 * scale + 1.0;
    for i in 0..n {
        if absorbing[i] {
            net.cap[demand_edges[i]] = big;
        }
    }
    net.max_flow(source, sink);

    let mut flows = vec![Vec::new(); np];
    let mut delivered = vec![0.0; n];
    for p in 0..np {
        let mut row = Vec::with_capacity(edges[p].len());
        for (slot, &edge_id) in flow_edges[p].iter().enumerate() {
            let v = net.sent(edge_id).max(0.0);
            delivered[edges[p][slot]] += v;
            row.push(v);
        }
        flows[p] = row;
    }
    (flows, delivered)
}

/// Requirement deficits of the phase-1 routing at the given pseudo-bids:
/// per-contract unmet amounts when supplies `W̄_p(μ_p)` are routed over the
/// support graph. Used by the dual solver to pick ascent blocks — a
/// deficient contract set is exactly a set whose joint pseudo-bid must rise.
pub(crate) fn requirement_deficit(
    inst: &PlanningInstance,
    pseudo: &PseudoBids,
    support_eps_abs: f64,
) -> Vec<f64> {
    let n = inst.n_contracts();
    let target_supplies: Vec<f64> =
        inst.pairs.iter().zip(&pseudo.mu).map(|(p, &mu)| p.curve.eval_w(mu)).collect();
    let edges: Vec<Vec<usize>> = inst
        .pairs
        .iter()
        .zip(&pseudo.mu)
        .map(|(pair, &mu)| {
            pair.contracts.iter().copied().filter(|&i| pseudo.rho[i] >= mu - support_eps_abs).collect()
        })
        .collect();
    let absorbing = vec![false; n];
    let (_, delivered) = route_supplies(inst, &target_supplies, &edges, &inst.requirements, &absorbing);
    (0..n).map(|i| (inst.requirements[i] - delivered[i]).max(0.0)).collect()
}

/// Recover a primal flow plan from converged pseudo-bids.
///
/// Support edges are `(p, i)` with `ρ_i >= μ_p - ε`; when requirements
/// cannot be routed, the support is widened twice (flagged) before giving
/// up. Binding contracts receive exactly `C_i`; non-binding ones absorb the
/// remaining free mass; unroutable remainder is shaved from `s_p`.
pub fn recover_primal(inst: &PlanningInstance, pseudo: &PseudoBids, opts: &SolveOptions) -> Result<FlowPlan> {
    let np = inst.pairs.len();
    let n = inst.n_contracts();
    if np == 0 || n == 0 {
        return Ok(FlowPlan::empty(inst));
    }
    let bid_scale = inst.bid_cap.max(1.0);
    let binding_eps = 1e-7 * bid_scale;
    let capped: Vec<bool> = match opts.penalty_weight {
        Some(w) => pseudo.rho.iter().map(|&r| r >= w * (1.0 - 1e-9)).collect(),
        None => vec![false; n],
    };

    let target_supplies: Vec<f64> =
        inst.pairs.iter().zip(&pseudo.mu).map(|(p, &mu)| p.curve.eval_w(mu)).collect();

    let mut relaxed = false;
    for (attempt, widen) in [1.0, 1e3, 1e6].iter().enumerate() {
        let eps = opts.support_eps * bid_scale * widen;
        let edges: Vec<Vec<usize>> = inst
            .pairs
            .iter()
            .zip(&pseudo.mu)
            .map(|(pair, &mu)| {
                pair.contracts
                    .iter()
                    .enumerate()
                    .filter(|&(_, &i)| pseudo.rho[i] >= mu - eps)
                    .map(|(slot, _)| slot)
                    .collect::<Vec<_>>()
            })
            .collect();
        // Edge lists hold slots; translate to local contract ids.
        let edge_contracts: Vec<Vec<usize>> = edges
            .iter()
            .enumerate()
            .map(|(p, slots)| slots.iter().map(|&s| inst.pairs[p].contracts[s]).collect())
            .collect();

        let absorbing: Vec<bool> =
            (0..n).map(|i| pseudo.rho[i] < binding_eps && !capped[i]).collect();
        let (flows_by_slot, delivered) =
            route_supplies(inst, &target_supplies, &edge_contracts, &inst.requirements, &absorbing);

        let mut ok = true;
        let mut max_unmet_rel = 0.0f64;
        for i in 0..n {
            let unmet = (inst.requirements[i] - delivered[i]).max(0.0);
            let rel = unmet / inst.requirements[i].max(1.0);
            if !capped[i] {
                max_unmet_rel = max_unmet_rel.max(rel);
                if rel > 1e-7 {
                    ok = false;
                }
            }
        }
        if !ok {
            relaxed = true;
            if attempt < 2 {
                continue;
            }
            if opts.penalty_weight.is_none() {
                return Err(Error::Solver(format!(
                    "support graph cannot route requirements (worst relative shortfall {max_unmet_rel:.3e}); dual not converged or instance degenerate"
                )));
            }
            // Best-effort mode: requirements are soft, keep the routing and
            // price the residual as shortfall.
        }

        // Expand slot flows back to full pair rows.
        let mut flows: Vec<Vec<f64>> = inst.pairs.iter().map(|p| vec![0.0; p.contracts.len()]).collect();
        let mut supplies = vec![0.0; np];
        for p in 0..np {
            for (k, &slot) in edges[p].iter().enumerate() {
                flows[p][slot] = flows_by_slot[p][k];
            }
            supplies[p] = flows[p].iter().sum();
        }

        let mut max_shaved_rel = 0.0f64;
        for p in 0..np {
            let shave = (target_supplies[p] - supplies[p]).max(0.0);
            max_shaved_rel = max_shaved_rel.max(shave / target_supplies[p].max(1.0));
        }
        let mut max_support_gap = 0.0f64;
        for p in 0..np {
            for (slot, &i) in inst.pairs[p].contracts.iter().enumerate() {
                if flows[p][slot] > 0.0 {
                    max_support_gap = max_support_gap.max(pseudo.mu[p] - pseudo.rho[i]);
                }
            }
        }
        let shortfall: Vec<f64> =
            (0..n).map(|i| (inst.requirements[i] - delivered[i]).max(0.0)).collect();
        return Ok(FlowPlan {
            supplies,
            target_supplies,
            flows,
            delivered,
            shortfall,
            residuals: FlowResiduals {
                max_unmet_rel,
                max_shaved_rel,
                max_support_gap,
                support_eps: eps,
            },
            relaxed_support: relaxed && attempt > 0,
        });
    }
    unreachable!("loop returns or errors")
}
