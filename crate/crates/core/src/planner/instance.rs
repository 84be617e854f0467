//! Assembly of planning instances: deadline breakpoints and per-(type,
//! period) aggregated curves.

use crate::error::{Error, Result};
use crate::supply::{AggregateCurve, CurveIntegrator};
use crate::targeting::{Contract, Decomposition};

const BREAKPOINT_EPS: f64 = 1e-9;

/// How per-period curves are aggregated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AggregationMode {
    /// True time integration over each period.
    Dynamic,
    /// Whole-horizon average rate times period length; the baseline policy
    /// that ignores time inhomogeneity. The pair gives the averaging window.
    StaticAverage { from: f64, to: f64 },
}

/// One admissible (type, period) pair.
#[derive(Debug, Clone)]
pub struct PairSlot {
    pub type_j: usize,
    pub period_k: usize,
    /// Aggregated `(W̄, f̄)` over the period (units: items).
    pub curve: AggregateCurve,
    /// Local contract indices eligible for this pair (`B_j ∩ T_k`).
    pub contracts: Vec<usize>,
}

/// Inputs for instance assembly.
pub struct InstanceSpec<'a> {
    pub contracts: &'a [Contract],
    pub decomposition: &'a Decomposition,
    /// Remaining requirement per contract (input order). Defaults to the
    /// contracts' own requirements for fresh plans.
    pub requirements: Vec<f64>,
    /// Planning origin τ (absolute hours).
    pub start: f64,
    pub mode: AggregationMode,
}

impl<'a> InstanceSpec<'a> {
    pub fn fresh(contracts: &'a [Contract], decomposition: &'a Decomposition) -> Self {
        Self {
            contracts,
            decomposition,
            requirements: contracts.iter().map(|c| c.requirement).collect(),
            start: 0.0,
            mode: AggregationMode::Dynamic,
        }
    }
}

/// The finite convex program data.
#[derive(Debug, Clone)]
pub struct PlanningInstance {
    pub start: f64,
    /// Period right-endpoints `T_1 < T_2 < ... < T_K` (absolute hours).
    pub breakpoints: Vec<f64>,
    /// Original (input-order) contract index per local contract.
    pub contract_ids: Vec<usize>,
    /// Remaining requirements, local order.
    pub requirements: Vec<f64>,
    /// Absolute deadlines, local order.
    pub deadlines: Vec<f64>,
    pub pairs: Vec<PairSlot>,
    /// Per local contract: indices into `pairs` it may draw from.
    pub contract_pairs: Vec<Vec<usize>>,
    /// Total number of item types in the decomposition.
    pub n_types: usize,
    /// Largest representable bid across pair curves.
    pub bid_cap: f64,
}

impl PlanningInstance {
    pub fn n_contracts(&self) -> usize {
        self.contract_ids.len()
    }

    pub fn n_periods(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty() || self.contract_ids.is_empty()
    }

    pub fn period_bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { self.start } else { self.breakpoints[k - 1] };
        (lo, self.breakpoints[k])
    }
}

/// Build the instance for the window starting at `spec.start`.
///
/// Breakpoints are the distinct deadlines of active contracts; zero-length
/// periods from coincident deadlines are merged. A pair `(j, k)` is
/// admissible iff some active member of type `j` is still live through
/// period `k`.
pub fn build_instance(spec: &InstanceSpec, integrators: &[CurveIntegrator]) -> Result<PlanningInstance> {
    let d = spec.decomposition;
    if integrators.len() != d.n_types() {
        return Err(Error::Config(format!(
            "need one supply curve per item type: got {} for {} types",
            integrators.len(),
            d.n_types()
        )));
    }
    if spec.requirements.len() != spec.contracts.len() {
        return Err(Error::Config("requirements must align with contracts".into()));
    }

    // Active local contracts: live deadline and outstanding requirement.
    let mut contract_ids = Vec::new();
    let mut requirements = Vec::new();
    let mut deadlines = Vec::new();
    for (i, c) in spec.contracts.iter().enumerate() {
        if c.deadline_hours > spec.start + BREAKPOINT_EPS && spec.requirements[i] > 0.0 {
            contract_ids.push(i);
            requirements.push(spec.requirements[i]);
            deadlines.push(c.deadline_hours);
        }
    }

    let mut breakpoints: Vec<f64> = deadlines.clone();
    breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breakpoints.dedup_by(|a, b| (*a - *b).abs() < BREAKPOINT_EPS);

    let n_local = contract_ids.len();
    let mut pairs = Vec::new();
    let mut contract_pairs = vec![Vec::new(); n_local];
    let mut bid_cap: f64 = 0.0;

    for j in 0..d.n_types() {
        // Active members of the type, local indices.
        let members: Vec<usize> = (0..n_local)
            .filter(|&li| d.types[j].members.contains(&contract_ids[li]))
            .collect();
        if members.is_empty() {
            continue;
        }
        for (k, &t_k) in breakpoints.iter().enumerate() {
            let live: Vec<usize> =
                members.iter().copied().filter(|&li| deadlines[li] >= t_k - BREAKPOINT_EPS).collect();
            if live.is_empty() {
                continue;
            }
            let (lo, hi) = if k == 0 { (spec.start, t_k) } else { (breakpoints[k - 1], t_k) };
            if hi - lo < BREAKPOINT_EPS {
                continue;
            }
            let curve = match spec.mode {
                AggregationMode::Dynamic => integrators[j].aggregate(lo, hi)?,
                AggregationMode::StaticAverage { from, to } => {
                    if !(to > from) {
                        return Err(Error::Parameter("static averaging window must be non-empty".into()));
                    }
                    integrators[j].aggregate(from, to)?.scaled((hi - lo) / (to - from))
                }
            };
            bid_cap = bid_cap.max(curve.bid_cap());
            for &li in &live {
                contract_pairs[li].push(pairs.len());
            }
            pairs.push(PairSlot { type_j: j, period_k: k, curve, contracts: live });
        }
    }

    Ok(PlanningInstance {
        start: spec.start,
        breakpoints,
        contract_ids,
        requirements,
        deadlines,
        pairs,
        contract_pairs,
        n_types: d.n_types(),
        bid_cap,
    })
}

/// Adequate-supply check for one item type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeSupply {
    pub type_j: usize,
    /// `∫_start^{τ_j} B_j(t) dt` with `τ_j` the earliest member deadline.
    pub bound_integral: f64,
    /// `Σ_{i in B_j} C_i` over active members.
    pub required: f64,
    pub margin: f64,
    pub pass: bool,
}

use serde::{Deserialize, Serialize};

/// Per-type adequate-supply report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupplyReport {
    pub per_type: Vec<TypeSupply>,
    pub all_pass: bool,
}

/// Check the adequate-supply condition: every type must be able to cover the
/// total requirement of its member contracts before the first of their
/// deadlines (strict inequality).
pub fn check_adequate_supply(inst: &PlanningInstance) -> SupplyReport {
    let mut per_type = Vec::new();
    for j in 0..inst.n_types {
        // Members and earliest deadline from the pair structure.
        let mut members: Vec<usize> = Vec::new();
        for p in inst.pairs.iter().filter(|p| p.type_j == j) {
            for &li in &p.contracts {
                if !members.contains(&li) {
                    members.push(li);
                }
            }
        }
        if members.is_empty() {
            continue;
        }
        let tau = members.iter().map(|&li| inst.deadlines[li]).fold(f64::INFINITY, f64::min);
        let required: f64 = members.iter().map(|&li| inst.requirements[li]).sum();
        let bound_integral: f64 = inst
            .pairs
            .iter()
            .filter(|p| p.type_j == j && inst.breakpoints[p.period_k] <= tau + BREAKPOINT_EPS)
            .map(|p| p.curve.capacity())
            .sum();
        let pass = bound_integral > required;
        per_type.push(TypeSupply { type_j: j, bound_integral, required, margin: bound_integral - required, pass });
    }
    let all_pass = per_type.iter().all(|t| t.pass);
    SupplyReport { per_type, all_pass }
}
