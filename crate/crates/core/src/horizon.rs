//! Receding-horizon controller.
//!
//! Tracks per-contract acquisition, shrinks requirements, re-aggregates the
//! supply curves from the current instant and re-plans on a fixed cadence
//! (plus immediately after any contract fulfillment). Between replans the
//! bids are held at the plan's piecewise-constant values; submitted bids add
//! the Gaussian randomization noise `σ` that the smoothed curves assume.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::planner::{
    self, build_instance, AggregationMode, BidPlan, InstanceSpec, SolveOptions,
};
use crate::simulator::Bidder;
use crate::supply::{CurveIntegrator, TimeVaryingSupplyCurve};
use crate::targeting::{Contract, Decomposition};

/// Which aggregation the policy uses at (re)plan time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    /// Per-period time aggregation (the optimal plan).
    Dynamic,
    /// Whole-horizon averaged curves (the baseline).
    Static,
}

#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub mode: PolicyMode,
    /// Replan cadence in simulated hours.
    pub replan_hours: f64,
    pub solver: SolveOptions,
    /// Submit `nominal + σ·N(0,1)` instead of the nominal bid.
    pub randomize_bids: bool,
    /// Refuse best-effort fallback and propagate infeasibility.
    pub strict: bool,
    /// Shortfall price multiplier for the best-effort fallback
    /// (`weight = multiplier × bid cap`).
    pub penalty_multiplier: f64,
    /// Halve the replan interval approaching an unfulfilled deadline, down
    /// to [`MIN_TAIL_REPLAN_HOURS`]. Expectation-matched plans leave about
    /// one cadence interval of binomial win noise unmanaged; geometric
    /// tail refinement is the discrete analogue of the continuous-time
    /// feedback and makes fulfillment overwhelmingly likely.
    pub tail_replan: bool,
}

/// Floor for the tail-refined replan interval (18 simulated seconds).
pub const MIN_TAIL_REPLAN_HOURS: f64 = 0.005;

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mode: PolicyMode::Dynamic,
            replan_hours: 1.0,
            solver: SolveOptions::default(),
            randomize_bids: true,
            strict: false,
            penalty_multiplier: 1e6,
            tail_replan: true,
        }
    }
}

/// One controller trace row (per contract, per replan).
#[derive(Debug, Clone, serde::Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub contract_id: String,
    pub acquired: u64,
    pub remaining: f64,
    /// Current nominal bid per type (empty slots: type not bought now).
    pub bids: Vec<Option<f64>>,
}

/// Receding-horizon bidding controller.
pub struct Controller {
    contracts: Vec<Contract>,
    decomposition: Decomposition,
    integrators: Vec<CurveIntegrator>,
    sigma: f64,
    cfg: ControllerConfig,
    horizon_end: f64,
    acquired: Vec<u64>,
    plan: BidPlan,
    tau: f64,
    next_replan: f64,
    pending_replan: bool,
    warm_rho: Vec<f64>,
    trace: Vec<TraceRow>,
    /// Per-contract trough arrival rate over all its types, and per-type
    /// bid caps, for the endgame branch.
    sprint_rate: Vec<f64>,
    bid_caps: Vec<f64>,
    pub replans: usize,
    pub best_effort_replans: usize,
    pub rejected_wins: u64,
    pub sprint_bids: u64,
}

impl Controller {
    /// Build the controller and compute the initial plan at `t = 0`.
    pub fn new(
        contracts: Vec<Contract>,
        decomposition: Decomposition,
        type_curves: &[TimeVaryingSupplyCurve],
        cfg: ControllerConfig,
    ) -> Result<Self> {
        if type_curves.len() != decomposition.n_types() {
            return Err(Error::Config(format!(
                "need one curve per item type ({} != {})",
                type_curves.len(),
                decomposition.n_types()
            )));
        }
        if !(cfg.replan_hours > 0.0) {
            return Err(Error::Parameter("replan interval must be positive".into()));
        }
        let horizon_end =
            contracts.iter().map(|c| c.deadline_hours).fold(0.0f64, f64::max);
        let integrators =
            type_curves.iter().map(|c| CurveIntegrator::new(c, CurveIntegrator::DEFAULT_SUBDIV)).collect();
        let sigma = type_curves.iter().map(|c| c.sigma()).fold(0.0f64, f64::max);
        let trough: Vec<f64> = type_curves
            .iter()
            .map(|c| c.lambda_knots().iter().cloned().fold(f64::INFINITY, f64::min).max(0.0))
            .collect();
        let sprint_rate = decomposition
            .contract_types
            .iter()
            .map(|types| types.iter().map(|&j| trough[j]).sum::<f64>().max(1e-9))
            .collect();
        let bid_caps = type_curves.iter().map(|c| c.bid_cap()).collect();
        let n = contracts.len();
        let mut ctl = Self {
            contracts,
            decomposition,
            integrators,
            sigma,
            cfg,
            horizon_end,
            acquired: vec![0; n],
            plan: BidPlan::empty(),
            tau: 0.0,
            next_replan: 0.0,
            pending_replan: false,
            warm_rho: vec![0.0; n],
            trace: Vec::new(),
            sprint_rate,
            bid_caps,
            replans: 0,
            best_effort_replans: 0,
            rejected_wins: 0,
            sprint_bids: 0,
        };
        ctl.replan(0.0)?;
        ctl.next_replan = ctl.cfg.replan_hours;
        Ok(ctl)
    }

    pub fn plan(&self) -> &BidPlan {
        &self.plan
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn acquired(&self) -> &[u64] {
        &self.acquired
    }

    pub fn remaining(&self, i: usize) -> f64 {
        (self.contracts[i].requirement - self.acquired[i] as f64).max(0.0)
    }

    pub fn fulfilled(&self, i: usize) -> bool {
        self.acquired[i] as f64 >= self.contracts[i].requirement
    }

    /// Record a won item for contract `i` at time `t`. Wins for expired
    /// contracts are discarded with a warning count.
    pub fn record_win(&mut self, i: usize, t: f64) -> Result<()> {
        if i >= self.contracts.len() {
            return Err(Error::Parameter(format!("unknown contract index {i}")));
        }
        if t >= self.contracts[i].deadline_hours {
            self.rejected_wins += 1;
            log::warn!("win for contract {} at t={t:.3} after its deadline; discarded", self.contracts[i].id);
            return Ok(());
        }
        self.acquired[i] += 1;
        if self.fulfilled(i) {
            self.pending_replan = true;
        }
        Ok(())
    }

    /// Re-solve from `tau` with remaining requirements and re-aggregated
    /// curves; fulfilled or expired contracts are omitted. Returns the new
    /// plan (empty when nothing is left to buy).
    pub fn replan(&mut self, tau: f64) -> Result<&BidPlan> {
        self.tau = tau;
        self.replans += 1;
        let requirements: Vec<f64> = (0..self.contracts.len()).map(|i| self.remaining(i)).collect();
        let mode = match self.cfg.mode {
            PolicyMode::Dynamic => AggregationMode::Dynamic,
            PolicyMode::Static => AggregationMode::StaticAverage { from: 0.0, to: self.horizon_end },
        };
        let spec = InstanceSpec {
            contracts: &self.contracts,
            decomposition: &self.decomposition,
            requirements,
            start: tau,
            mode,
        };
        let inst = build_instance(&spec, &self.integrators)?;
        if inst.is_empty() {
            self.plan = BidPlan::empty();
            self.push_trace(tau);
            return Ok(&self.plan);
        }
        let mut opts = self.cfg.solver.clone();
        opts.warm_start = Some(inst.contract_ids.iter().map(|&i| self.warm_rho[i]).collect());
        let solution = match planner::solve(&inst, &opts) {
            Ok(s) => s,
            Err(Error::Infeasible(_)) | Err(Error::Solver(_)) if !self.cfg.strict => {
                self.best_effort_replans += 1;
                let weight = self.cfg.penalty_multiplier * inst.bid_cap.max(1.0);
                planner::penalty_solve(&inst, weight, &opts)?
            }
            Err(e) => return Err(e),
        };
        for (local, &orig) in solution.plan.contract_ids.iter().enumerate() {
            self.warm_rho[orig] = solution.pseudo.rho[local];
        }
        self.plan = solution.plan;
        self.push_trace(tau);
        Ok(&self.plan)
    }

    fn push_trace(&mut self, t: f64) {
        let bids: Vec<Option<f64>> = (0..self.decomposition.n_types())
            .map(|j| self.plan.bid_at(j, t.max(self.plan.start)))
            .collect();
        for (i, c) in self.contracts.iter().enumerate() {
            self.trace.push(TraceRow {
                t,
                contract_id: c.id.clone(),
                acquired: self.acquired[i],
                remaining: self.remaining(i),
                bids: bids.clone(),
            });
        }
    }

    /// Interval to the next refined replan: half the gap to the nearest
    /// unfulfilled deadline, floored, capped at the base cadence.
    fn tail_interval(&self, t: f64) -> f64 {
        let mut gap = f64::INFINITY;
        for (i, c) in self.contracts.iter().enumerate() {
            if !self.fulfilled(i) && c.deadline_hours > t {
                gap = gap.min(c.deadline_hours - t);
            }
        }
        (0.5 * gap).clamp(MIN_TAIL_REPLAN_HOURS, self.cfg.replan_hours)
    }

    /// Replan when the cadence mark passed, a fulfillment is pending, or
    /// the tail-refined interval elapsed.
    fn ensure_plan(&mut self, t: f64) -> Result<()> {
        let mut replanned = false;
        if self.pending_replan {
            self.pending_replan = false;
            self.replan(t)?;
            replanned = true;
        } else if self.next_replan <= t {
            let intervals = ((t - self.next_replan) / self.cfg.replan_hours).floor();
            let mark = self.next_replan + intervals * self.cfg.replan_hours;
            self.replan(mark)?;
            replanned = true;
        } else if self.cfg.tail_replan && t - self.tau >= self.tail_interval(t) {
            self.replan(t)?;
            replanned = true;
        }
        if replanned {
            while self.next_replan <= t {
                self.next_replan += self.cfg.replan_hours;
            }
        }
        Ok(())
    }

    /// Allocation weights over unfulfilled contracts for a plan cell.
    fn allocation_weights(&self, pair: &planner::PlanPair) -> Vec<(usize, f64)> {
        pair.contracts
            .iter()
            .zip(&pair.gamma)
            .filter_map(|(&local, &g)| {
                let orig = self.plan.contract_ids[local];
                if g > 0.0 && !self.fulfilled(orig) {
                    Some((orig, g))
                } else {
                    None
                }
            })
            .collect()
    }
}

impl Bidder for Controller {
    fn bid(&mut self, t: f64, type_j: usize, rng: &mut ChaCha8Rng) -> Result<Option<f64>> {
        self.ensure_plan(t)?;
        let Some(pair) = self.plan.pair_at(type_j, t) else {
            return Ok(None);
        };
        if pair.supply <= 0.0 {
            return Ok(None);
        }
        let weights = self.allocation_weights(pair);
        if weights.is_empty() {
            // Plan mass points only at already-fulfilled contracts; stop
            // buying this cell and refresh the plan at the next event.
            self.pending_replan = true;
            return Ok(None);
        }
        // Endgame branch of the control law: once the remaining arrival
        // budget no longer covers the remaining requirement with slack, the
        // optimal-bid ratio crosses 1 and the bid saturates at the cap
        // (second-price settlement keeps the realized cost at market level).
        for &(orig, _) in &weights {
            let gap = self.contracts[orig].deadline_hours - t;
            let remaining = self.remaining(orig);
            if 0.95 * self.sprint_rate[orig] * gap <= remaining + 3.0 * remaining.sqrt() + 3.0 {
                self.sprint_bids += 1;
                return Ok(Some(self.bid_caps[type_j]));
            }
        }
        let nominal = pair.bid;
        let submitted = if self.cfg.randomize_bids && self.sigma > 0.0 {
            let noise = Normal::new(0.0, self.sigma).expect("positive sigma").sample(rng);
            nominal + noise
        } else {
            nominal
        };
        Ok(Some(submitted))
    }

    fn award(&mut self, t: f64, type_j: usize, _price: f64, rng: &mut ChaCha8Rng) -> Result<Option<usize>> {
        let Some(pair) = self.plan.pair_at(type_j, t) else {
            return Ok(None);
        };
        let weights = self.allocation_weights(pair);
        let total: f64 = weights.iter().map(|(_, g)| g).sum();
        if total <= 0.0 {
            return Ok(None);
        }
        let mut draw: f64 = rng.gen::<f64>() * total;
        let mut chosen = weights[weights.len() - 1].0;
        for &(orig, g) in &weights {
            draw -= g;
            if draw <= 0.0 {
                chosen = orig;
                break;
            }
        }
        self.record_win(chosen, t)?;
        Ok(Some(chosen))
    }
}

/// Expected receding-horizon acquisition path for the single-contract,
/// single-type case with CDF supply `W` and rate estimate `lambda0`:
/// integrates `ċ = λ(t)·min((C − c)/(λ₀(T − t)), 1)` by fixed-step RK4.
/// Returns `(t, c(t))` samples including both endpoints.
pub fn expected_path(
    lambda: impl Fn(f64) -> f64,
    requirement: f64,
    horizon: f64,
    lambda0: f64,
    steps: usize,
) -> Vec<(f64, f64)> {
    let h = horizon / steps as f64;
    let rate = |t: f64, c: f64| -> f64 {
        let slack = horizon - t;
        let ratio = if slack <= 0.0 {
            1.0
        } else {
            ((requirement - c) / (lambda0 * slack)).clamp(0.0, 1.0)
        };
        lambda(t) * ratio
    };
    let mut path = Vec::with_capacity(steps + 1);
    let mut c = 0.0;
    path.push((0.0, 0.0));
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = rate(t, c);
        let k2 = rate(t + 0.5 * h, c + 0.5 * h * k1);
        let k3 = rate(t + 0.5 * h, c + 0.5 * h * k2);
        let k4 = rate(t + h, c + h * k3);
        c += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        c = c.min(requirement);
        path.push((t + h, c));
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supply::{GridSpec, RawWinCurve};
    use crate::targeting::decompose;
    use approx::assert_abs_diff_eq;

    fn exp_curve(gamma: f64, lambda: f64, points: usize) -> TimeVaryingSupplyCurve {
        let fine: Vec<f64> = (0..4000).map(|i| 12.0 * i as f64 / 3999.0).collect();
        let raw = RawWinCurve::from_fn(&fine, |x| 1.0 - (-gamma * x).exp()).unwrap();
        TimeVaryingSupplyCurve::time_constant(&raw, lambda, 24.0, GridSpec::new(12.0, points, 0.0).unwrap())
            .unwrap()
    }

    fn single_controller(c: f64, t: f64, gamma: f64, lambda: f64) -> Controller {
        let contracts = vec![Contract::new("c", t, c, vec!["a".into()]).unwrap()];
        let d = decompose(&contracts).unwrap();
        let curve = exp_curve(gamma, lambda, 4096);
        let cfg = ControllerConfig { randomize_bids: false, ..Default::default() };
        Controller::new(contracts, d, &[curve], cfg).unwrap()
    }

    #[test]
    fn record_win_examples() {
        let mut ctl = single_controller(100.0, 10.0, 1.0, 50.0);
        ctl.record_win(0, 1.0).unwrap();
        assert_eq!(ctl.acquired()[0], 1);
        // Win after the deadline is discarded with a warning.
        ctl.record_win(0, 10.5).unwrap();
        assert_eq!(ctl.acquired()[0], 1);
        assert_eq!(ctl.rejected_wins, 1);
        for _ in 0..100 {
            ctl.record_win(0, 2.0).unwrap();
        }
        assert_eq!(ctl.acquired()[0], 101);
    }

    #[test]
    fn replan_matches_closed_form_bid() {
        // W(x) = 1 - e^{-γx}, constant λ0: the replanned bid is
        // -(1/γ) ln[1 - (C - c)/(λ0 (T - τ))].
        let (gamma, lambda0, c_req, t_end) = (0.7, 10.0, 40.0, 10.0);
        let mut ctl = single_controller(c_req, t_end, gamma, lambda0);
        for _ in 0..15 {
            ctl.record_win(0, 1.0).unwrap();
        }
        let tau = 4.0;
        let plan = ctl.replan(tau).unwrap();
        let ratio = (c_req - 15.0) / (lambda0 * (t_end - tau));
        let expect = -(1.0 - ratio).ln() / gamma;
        let bid = plan.bid_at(0, tau + 0.1).unwrap();
        assert_abs_diff_eq!(bid, expect, epsilon = 2e-3);
    }

    #[test]
    fn replan_saturates_at_bid_cap_when_infeasible() {
        // Remaining ratio above λ0: the "otherwise" branch returns the cap.
        let (gamma, lambda0, c_req, t_end) = (1.0, 5.0, 200.0, 10.0);
        let mut ctl = single_controller(c_req, t_end, gamma, lambda0);
        let plan = ctl.replan(8.0).unwrap();
        // 200 remaining over 2 h at rate 5/h is impossible: best effort caps.
        let bid = plan.bid_at(0, 8.1).unwrap();
        assert!(bid > 11.0, "bid {bid} should sit near the grid cap");
        assert!(ctl.best_effort_replans > 0);
    }

    #[test]
    fn replan_at_zero_matches_initial_plan() {
        let mut ctl = single_controller(60.0, 12.0, 1.0, 20.0);
        let first = ctl.plan().bid_at(0, 0.1).unwrap();
        let again = ctl.replan(0.0).unwrap().bid_at(0, 0.1).unwrap();
        assert_abs_diff_eq!(first, again, epsilon = 1e-10);
    }

    #[test]
    fn replanning_on_expected_path_is_idempotent() {
        // With time-constant curves and c(τ) exactly on the straight-line
        // path, re-optimization leaves the bid unchanged.
        let (c_req, t_end) = (60.0, 12.0);
        let mut ctl = single_controller(c_req, t_end, 1.0, 20.0);
        let bid0 = ctl.plan().bid_at(0, 0.0).unwrap();
        let tau = 6.0;
        let on_path = (c_req * tau / t_end).round() as u64;
        for _ in 0..on_path {
            ctl.record_win(0, 0.5).unwrap();
        }
        let bid_tau = ctl.replan(tau).unwrap().bid_at(0, tau + 0.1).unwrap();
        // Rounding c to an integer shifts the ratio slightly.
        assert_abs_diff_eq!(bid_tau, bid0, epsilon = 2e-2);
    }

    #[test]
    fn rh_bid_sequence_tracks_control_law() {
        // Simulated average dynamics: stepping c along the expected path and
        // replanning reproduces x*(C - c, T - τ) at every replan instant.
        let (gamma, lambda0, c_req, t_end) = (1.0, 8.0, 30.0, 10.0);
        let mut ctl = single_controller(c_req, t_end, gamma, lambda0);
        let mut c = 0.0f64;
        for step in 1..8 {
            let tau = step as f64;
            let target = (c_req * tau / t_end).floor();
            while c < target {
                ctl.record_win(0, tau - 0.5).unwrap();
                c += 1.0;
            }
            let plan = ctl.replan(tau).unwrap();
            let ratio = (c_req - c) / (lambda0 * (t_end - tau));
            let expect = -(1.0 - ratio).ln() / gamma;
            let bid = plan.bid_at(0, tau + 0.01).unwrap();
            assert_abs_diff_eq!(bid, expect, epsilon = 3e-3);
        }
    }

    #[test]
    fn fulfilled_contracts_never_reenter_the_instance() {
        let mut ctl = single_controller(10.0, 12.0, 1.0, 20.0);
        for _ in 0..10 {
            ctl.record_win(0, 1.0).unwrap();
        }
        assert!(ctl.fulfilled(0));
        assert_eq!(ctl.remaining(0), 0.0);
        let plan = ctl.replan(2.0).unwrap();
        assert!(plan.is_empty());
        // Extra wins keep remaining at zero.
        ctl.record_win(0, 3.0).unwrap();
        assert_eq!(ctl.remaining(0), 0.0);
    }

    #[test]
    fn expected_path_constant_rate_is_straight_line() {
        // Feasible load: C/(λ0 T) = 0.6 < 1.
        let c_req = 30.0;
        let t_end = 10.0;
        let path = expected_path(|_| 5.0, c_req, t_end, 5.0, 10_000);
        let mut worst: f64 = 0.0;
        for &(t, c) in &path {
            worst = worst.max((c - c_req * t / t_end).abs());
        }
        assert!(worst <= 1e-4 * c_req, "worst deviation {worst}");
    }

    #[test]
    fn expected_path_matches_closed_form_quadrature() {
        // λ(t) = λ0 (1 + 0.5 sin t); closed form
        // c(t) = C [1 - exp(-(1/λ0) ∫_0^t λ(s)/(T-s) ds)] by fine Simpson.
        let (lambda0, c_req, t_end) = (4.0, 60.0, 24.0);
        let lam = |t: f64| lambda0 * (1.0 + 0.5 * t.sin());
        let path = expected_path(lam, c_req, t_end, lambda0, 20_000);
        let closed = |t: f64| -> f64 {
            let n = 40_000;
            let h = t / n as f64;
            let f = |s: f64| lam(s) / (t_end - s);
            let mut acc = f(0.0) + f(t);
            for k in 1..n {
                acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
            }
            let integral = acc * h / 3.0;
            c_req * (1.0 - (-integral / lambda0).exp())
        };
        for &(t, c) in path.iter().skip(1).step_by(997) {
            if t > 0.95 * t_end {
                continue;
            }
            let truth = closed(t);
            let rel = (c - truth).abs() / truth.max(1e-6 * c_req);
            assert!(rel < 1e-4, "t={t} rel={rel}");
        }
    }
}
