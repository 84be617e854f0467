//! Supply curves: market win probabilities, smoothing, cost and aggregation.
//!
//! The central object is [`TimeVaryingSupplyCurve`], the planner's
//! information state: `W_j(x, t) = λ_j(t) · Wss_j(x, t)` gives the expected
//! instantaneous rate of items of type `j` won at time `t` with bid `x`.
//! Curves are periodic in `t` (daily cycles), strictly increasing in `x`, and
//! represented on uniform grids. [`AggregateCurve`] holds the time-integrated
//! pair `(W̄, f̄)` over a window together with the induced convex acquisition
//! cost `Λ̄ = f̄ ∘ W̄⁻¹`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp;

/// Relative distance to the supply bound inside which inversion requests are
/// clamped (with a flag) instead of rejected.
const CAPACITY_CLAMP_REL: f64 = 1e-9;

/// Slope floor (per unit bid) used to keep curves strictly increasing.
const FLOOR_SLOPE: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Market model
// ---------------------------------------------------------------------------

/// One market participant: a bid and the probability of participating in any
/// given auction round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParticipant {
    pub bid: f64,
    pub rate: f64,
}

impl MarketParticipant {
    pub fn new(bid: f64, rate: f64) -> Result<Self> {
        if !(bid >= 0.0) {
            return Err(Error::Parameter(format!("participant bid must be >= 0, got {bid}")));
        }
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::Parameter(format!("participant rate must lie in (0,1), got {rate}")));
        }
        Ok(Self { bid, rate })
    }
}

/// Probability that an exogenous bidder wins an item with bid `x` against a
/// fixed set of participants. Ties are settled in the bidder's favour, so a
/// participant with `bid == x` does not block the win.
pub fn fixed_market_win_prob(participants: &[MarketParticipant], x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let weight: f64 = participants
        .iter()
        .filter(|p| p.bid > x)
        .map(|p| -(1.0 - p.rate).ln())
        .sum();
    (-weight).exp()
}

/// Parametric bid distribution `F_B` of market participants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BidDistribution {
    Exponential { mean: f64 },
    Uniform { lo: f64, hi: f64 },
    Degenerate { at: f64 },
}

impl BidDistribution {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            BidDistribution::Exponential { mean } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-x / mean).exp()
                }
            }
            BidDistribution::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            BidDistribution::Degenerate { at } => {
                if x >= at {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Smallest `x` with `F_B(x) >= p`, for `p` in `[0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0 - 1e-15);
        match *self {
            BidDistribution::Exponential { mean } => -mean * (1.0 - p).ln(),
            BidDistribution::Uniform { lo, hi } => lo + p * (hi - lo),
            BidDistribution::Degenerate { at } => {
                if p <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    at
                }
            }
        }
    }
}

/// Steady-state market: Poisson participant arrivals of rate `ρ`, i.i.d.
/// bids from `F_B` and participation rates with mean `E[r]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateMarket {
    pub participant_rate: f64,
    pub bid_dist: BidDistribution,
    pub mean_rate: f64,
}

impl SteadyStateMarket {
    pub fn new(participant_rate: f64, bid_dist: BidDistribution, mean_rate: f64) -> Result<Self> {
        if !(participant_rate >= 0.0) {
            return Err(Error::Parameter(format!("participant rate must be >= 0, got {participant_rate}")));
        }
        if !(mean_rate > 0.0 && mean_rate < 1.0) {
            return Err(Error::Parameter(format!("mean participation rate must lie in (0,1), got {mean_rate}")));
        }
        Ok(Self { participant_rate, bid_dist, mean_rate })
    }

    /// Expected win rate `exp(-ρ (1 - F_B(x)) E[r])`.
    pub fn win_prob(&self, x: f64) -> f64 {
        (-self.participant_rate * (1.0 - self.bid_dist.cdf(x)) * self.mean_rate).exp()
    }

    /// Smallest non-negative price `x` with `win_prob(x) >= u`. This is the
    /// quantile of the highest-competing-bid distribution; `u` below the
    /// zero-bid win probability gives a price of 0 (no competitor showed up).
    pub fn price_quantile(&self, u: f64) -> f64 {
        let u = u.clamp(1e-300, 1.0 - 1e-15);
        if u >= 1.0 || self.participant_rate == 0.0 {
            return 0.0;
        }
        // F_B(x) = 1 + ln(u) / (ρ E[r])
        let target = 1.0 + u.ln() / (self.participant_rate * self.mean_rate);
        if target <= self.bid_dist.cdf(0.0) {
            return 0.0;
        }
        self.bid_dist.quantile(target).max(0.0)
    }
}

/// Expected win rate of a steady-state market (free-function form).
pub fn steady_state_win_prob(market: &SteadyStateMarket, x: f64) -> f64 {
    market.win_prob(x)
}

// ---------------------------------------------------------------------------
// Raw curves and smoothing
// ---------------------------------------------------------------------------

/// A raw (possibly discontinuous) win curve: non-decreasing, right-continuous
/// values on a non-decreasing abscissa. Jumps are represented by repeated
/// `x` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RawWinCurve {
    xs: Vec<f64>,
    values: Vec<f64>,
}

impl RawWinCurve {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() != values.len() || xs.len() < 2 {
            return Err(Error::Parameter("raw curve needs >= 2 matching points".into()));
        }
        if xs.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parameter("raw curve abscissa must be non-decreasing".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) || values[0] < 0.0 {
            return Err(Error::Parameter("raw curve values must be non-negative and non-decreasing".into()));
        }
        if values.iter().chain(xs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("raw curve values must be finite".into()));
        }
        Ok(Self { xs, values })
    }

    /// A single step of height `hi - lo` at `jump_x`.
    pub fn step(jump_x: f64, lo: f64, hi: f64, span: f64) -> Self {
        Self {
            xs: vec![jump_x - span, jump_x, jump_x, jump_x + span],
            values: vec![lo, lo, hi, hi],
        }
    }

    /// Sample a function onto a grid.
    pub fn from_fn(grid: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid.to_vec(), grid.iter().map(|&x| f(x)).collect())
    }

    pub fn bound(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Right-continuous evaluation with end-value clamping.
    pub fn eval(&self, q: f64) -> f64 {
        if q < self.xs[0] {
            return self.values[0];
        }
        let n = self.xs.len();
        if q >= self.xs[n - 1] {
            return self.values[n - 1];
        }
        let i = self.xs.partition_point(|&x| x <= q);
        // xs[i-1] <= q < xs[i]; repeated abscissae collapse to the rightmost.
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        if x1 <= x0 {
            return v1;
        }
        v0 + (q - x0) / (x1 - x0) * (v1 - v0)
    }
}

/// Number of midpoint nodes for the truncated Gaussian kernel.
const KERNEL_NODES: usize = 240;
/// Kernel truncation in standard deviations.
const KERNEL_SPAN: f64 = 6.0;

/// Gaussian-smooth a raw curve onto `grid`: `Ws(x) = E[W(x + σZ)]` with
/// `Z ~ N(0,1)`, kernel truncated at ±6σ and renormalized. The output is
/// forced strictly increasing with a tiny slope floor.
pub fn smooth_raw_curve(raw: &RawWinCurve, sigma: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("smoothing sigma must be > 0, got {sigma}")));
    }
    // Midpoint nodes avoid sampling exactly at jump locations.
    let dz = 2.0 * KERNEL_SPAN / KERNEL_NODES as f64;
    let mut nodes = Vec::with_capacity(KERNEL_NODES);
    let mut weights = Vec::with_capacity(KERNEL_NODES);
    let mut total = 0.0;
    for m in 0..KERNEL_NODES {
        let z = -KERNEL_SPAN + (m as f64 + 0.5) * dz;
        let w = (-0.5 * z * z).exp();
        nodes.push(z);
        weights.push(w);
        total += w;
    }
    for w in &mut weights {
        *w /= total;
    }

    let mut out: Vec<f64> = grid
        .iter()
        .map(|&x| nodes.iter().zip(&weights).map(|(&z, &w)| w * raw.eval(x + sigma * z)).sum())
        .collect();
    let h = grid[1] - grid[0];
    let step = FLOOR_SLOPE * h * raw.bound().max(1.0);
    interp::enforce_strictly_increasing(&mut out, step);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// Uniform bid-grid specification. The grid always contains `x = 0` exactly
/// and extends `4σ` below it so randomized-bid tails are represented.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_max: f64,
    /// Points on `[0, x_max]`; the negative extension adds more.
    pub points: usize,
    pub sigma: f64,
}

impl GridSpec {
    pub fn new(x_max: f64, points: usize, sigma: f64) -> Result<Self> {
        if !(x_max > 0.0) || points < 2 || !(sigma >= 0.0) {
            return Err(Error::Parameter("grid spec requires x_max > 0, points >= 2, sigma >= 0".into()));
        }
        Ok(Self { x_max, points, sigma })
    }

    pub fn build(&self) -> Vec<f64> {
        let h = self.x_max / (self.points - 1) as f64;
        let n_neg = if self.sigma > 0.0 { (4.0 * self.sigma / h).ceil() as i64 } else { 0 };
        (-n_neg..self.points as i64).map(|i| i as f64 * h).collect()
    }
}

fn index_of_zero(grid: &[f64]) -> Result<usize> {
    let h = (grid[1] - grid[0]).abs();
    grid.iter()
        .position(|&x| x.abs() < 1e-9 * h.max(1.0))
        .ok_or_else(|| Error::Parameter("bid grid must contain x = 0".into()))
}

// ---------------------------------------------------------------------------
// Aggregate curves
// ---------------------------------------------------------------------------

/// Outcome of inverting a supply curve at a requested supply level.
#[derive(Debug, Clone, Copy)]
pub struct Inversion {
    pub bid: f64,
    /// True when the request was within the clamp band of the bound.
    pub clamped: bool,
}

/// A strictly-increasing win curve together with its second-price cost curve
/// on a shared bid grid. Used both for instantaneous slices (units:
/// items/hour) and for time aggregates over a window (units: items).
#[derive(Debug, Clone)]
pub struct AggregateCurve {
    grid: Arc<[f64]>,
    w: Vec<f64>,
    f: Vec<f64>,
    i_zero: usize,
}

impl AggregateCurve {
    /// Build from win values; the cost curve is derived via the discrete
    /// second-price operator.
    pub fn from_win_values(grid: Arc<[f64]>, mut w: Vec<f64>, i_zero: usize) -> Self {
        debug_assert_eq!(grid.len(), w.len());
        let h = grid[1] - grid[0];
        let step = FLOOR_SLOPE * h * w.last().copied().unwrap_or(1.0).max(1.0);
        interp::enforce_strictly_increasing(&mut w, step);
        let f = interp::second_price_cost(&grid, &w, i_zero);
        Self { grid, w, f, i_zero }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn win_values(&self) -> &[f64] {
        &self.w
    }

    pub fn cost_values(&self) -> &[f64] {
        &self.f
    }

    /// Supply attainable at the top of the grid (the bound `B`).
    pub fn capacity(&self) -> f64 {
        *self.w.last().unwrap()
    }

    /// Supply won at bid 0 (free mass induced by randomized bidding).
    pub fn free_supply(&self) -> f64 {
        self.w[self.i_zero]
    }

    /// Largest representable bid.
    pub fn bid_cap(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// Leftmost grid bid (the 0-supply edge).
    pub fn bid_floor(&self) -> f64 {
        self.grid[0]
    }

    /// Win curve evaluation; 0 below the grid, flat at capacity above it.
    pub fn eval_w(&self, bid: f64) -> f64 {
        if bid < self.grid[0] {
            return 0.0;
        }
        interp::eval_linear(&self.grid, &self.w, bid)
    }

    /// Expected-cost evaluation; 0 for `bid <= 0`, flat above the grid.
    ///
    /// Within a cell the cost is the exact integral `∫ u W̄'(u) du` of the
    /// piecewise-linear win curve (quadratic in the bid), which makes the
    /// marginal-cost identity `Λ' = W̄⁻¹` hold exactly rather than to grid
    /// accuracy — the dual solver and the flow recovery rely on it.
    pub fn eval_f(&self, bid: f64) -> f64 {
        if bid <= 0.0 {
            return 0.0;
        }
        let n = self.grid.len();
        if bid >= self.grid[n - 1] {
            return self.f[n - 1];
        }
        let i = interp::cell_index(&self.grid, bid);
        let h = self.grid[i + 1] - self.grid[i];
        let slope = (self.w[i + 1] - self.w[i]) / h;
        self.f[i] + 0.5 * slope * (bid * bid - self.grid[i] * self.grid[i])
    }

    /// Lowest bid obtaining supply `s`. Requests within `1e-9` (relative) of
    /// capacity are clamped and flagged; anything above that is an error.
    pub fn invert(&self, s: f64) -> Result<Inversion> {
        let cap = self.capacity();
        if s <= 0.0 {
            return Ok(Inversion { bid: self.grid[0], clamped: false });
        }
        let clamp_edge = cap * (1.0 - CAPACITY_CLAMP_REL);
        if s > cap * (1.0 + CAPACITY_CLAMP_REL) {
            return Err(Error::SupplyExceeded { requested: s, bound: cap });
        }
        if s >= clamp_edge {
            return Ok(Inversion { bid: interp::invert_linear(&self.grid, &self.w, clamp_edge), clamped: true });
        }
        Ok(Inversion { bid: interp::invert_linear(&self.grid, &self.w, s), clamped: false })
    }

    /// Acquisition cost `Λ(s) = f(W⁻¹(s))` and its derivative
    /// `1[s >= W(0)] · W⁻¹(s)`.
    pub fn acquisition(&self, s: f64) -> Result<(f64, f64)> {
        let inv = self.invert(s)?;
        let value = self.eval_f(inv.bid);
        let deriv = if s >= self.free_supply() { inv.bid.max(0.0) } else { 0.0 };
        Ok((value, deriv))
    }

    /// Acquisition cost alone, tolerating `s` slightly above capacity.
    pub fn acquisition_cost(&self, s: f64) -> Result<f64> {
        Ok(self.acquisition(s)?.0)
    }

    /// Scale both curves by a constant factor (used by the static baseline).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            w: self.w.iter().map(|v| v * factor).collect(),
            f: self.f.iter().map(|v| v * factor).collect(),
            i_zero: self.i_zero,
        }
    }
}

// ---------------------------------------------------------------------------
// Time-varying supply curves
// ---------------------------------------------------------------------------

/// Periodic time-varying supply curve `W(x, t) = λ(t) · Wss(x, t)`.
///
/// `win_prob` rows hold the (smoothed, strictly increasing) win probability
/// at uniformly spaced time knots over one period; `λ` holds the arrival
/// rate at the same knots. Interpolation in `t` is periodic monotone cubic,
/// evaluated pointwise in `x`, with an isotonic safeguard on every generated
/// slice.
#[derive(Debug)]
pub struct TimeVaryingSupplyCurve {
    grid_x: Arc<[f64]>,
    win_prob: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    period: f64,
    sigma: f64,
    i_zero: usize,
    wp_tangents: Vec<Vec<f64>>,
    lambda_interp: interp::PeriodicPchip,
    monotone_fixups: AtomicU64,
}

impl Clone for TimeVaryingSupplyCurve {
    fn clone(&self) -> Self {
        Self {
            grid_x: Arc::clone(&self.grid_x),
            win_prob: self.win_prob.clone(),
            lambda: self.lambda.clone(),
            period: self.period,
            sigma: self.sigma,
            i_zero: self.i_zero,
            wp_tangents: self.wp_tangents.clone(),
            lambda_interp: interp::PeriodicPchip::new(self.lambda.clone(), self.period / self.lambda.len() as f64),
            monotone_fixups: AtomicU64::new(self.monotone_fixups.load(Ordering::Relaxed)),
        }
    }
}

impl TimeVaryingSupplyCurve {
    pub fn new(
        grid_x: Vec<f64>,
        mut win_prob: Vec<Vec<f64>>,
        lambda: Vec<f64>,
        period_hours: f64,
        sigma: f64,
    ) -> Result<Self> {
        if grid_x.len() < 2 || grid_x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("bid grid must be strictly increasing with >= 2 points".into()));
        }
        if win_prob.is_empty() || win_prob.len() != lambda.len() {
            return Err(Error::Parameter("win_prob and lambda must have one matching row per time knot".into()));
        }
        if win_prob.iter().any(|row| row.len() != grid_x.len()) {
            return Err(Error::Parameter("win_prob rows must match the bid grid".into()));
        }
        if !(period_hours > 0.0) {
            return Err(Error::Parameter(format!("period must be positive, got {period_hours}")));
        }
        if lambda.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::Parameter("arrival rates must be finite and >= 0".into()));
        }
        if !(sigma >= 0.0) {
            return Err(Error::Parameter("sigma must be >= 0".into()));
        }
        let i_zero = index_of_zero(&grid_x)?;
        let h = grid_x[1] - grid_x[0];
        for row in &mut win_prob {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Parameter("win probabilities must be finite and >= 0".into()));
            }
            let step = FLOOR_SLOPE * h * row.last().copied().unwrap().max(1.0);
            interp::enforce_strictly_increasing(row, step);
        }
        let knot_step = period_hours / win_prob.len() as f64;
        let n_x = grid_x.len();
        let n_t = win_prob.len();
        let mut wp_tangents = vec![vec![0.0; n_x]; n_t];
        if n_t > 1 {
            for ix in 0..n_x {
                let col: Vec<f64> = (0..n_t).map(|it| win_prob[it][ix]).collect();
                let tang = interp::pchip_tangents_periodic(&col, knot_step);
                for it in 0..n_t {
                    wp_tangents[it][ix] = tang[it];
                }
            }
        }
        let lambda_interp = interp::PeriodicPchip::new(lambda.clone(), knot_step);
        Ok(Self {
            grid_x: grid_x.into(),
            win_prob,
            lambda,
            period: period_hours,
            sigma,
            i_zero,
            wp_tangents,
            lambda_interp,
            monotone_fixups: AtomicU64::new(0),
        })
    }

    /// Smooth per-knot raw CDFs onto a fresh grid and assemble the curve.
    pub fn from_raw_slices(
        raw: &[RawWinCurve],
        lambda: Vec<f64>,
        period_hours: f64,
        spec: GridSpec,
    ) -> Result<Self> {
        if raw.is_empty() || raw.len() != lambda.len() {
            return Err(Error::Parameter("need one raw slice per lambda knot".into()));
        }
        let grid = spec.build();
        let rows = raw
            .iter()
            .map(|r| smooth_raw_curve(r, spec.sigma.max(1e-9), &grid))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, rows, lambda, period_hours, spec.sigma)
    }

    /// A time-constant curve from a single raw slice.
    pub fn time_constant(raw: &RawWinCurve, lambda: f64, period_hours: f64, spec: GridSpec) -> Result<Self> {
        Self::from_raw_slices(std::slice::from_ref(raw), vec![lambda], period_hours, spec)
    }

    pub fn grid_x(&self) -> &[f64] {
        &self.grid_x
    }

    pub fn shared_grid(&self) -> Arc<[f64]> {
        Arc::clone(&self.grid_x)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn knots(&self) -> usize {
        self.lambda.len()
    }

    pub fn knot_step(&self) -> f64 {
        self.period / self.lambda.len() as f64
    }

    pub fn index_of_zero(&self) -> usize {
        self.i_zero
    }

    pub fn bid_cap(&self) -> f64 {
        *self.grid_x.last().unwrap()
    }

    /// Number of slices that needed isotonic re-projection so far.
    pub fn monotone_fixups(&self) -> u64 {
        self.monotone_fixups.load(Ordering::Relaxed)
    }

    pub fn lambda_at(&self, t: f64) -> f64 {
        self.lambda_interp.eval(t).max(0.0)
    }

    /// Global arrival-rate bound (PCHIP never overshoots the knots).
    pub fn lambda_bound(&self) -> f64 {
        self.lambda_interp.max_value()
    }

    pub fn lambda_knots(&self) -> &[f64] {
        &self.lambda
    }

    pub fn win_prob_rows(&self) -> &[Vec<f64>] {
        &self.win_prob
    }

    /// Win-probability slice at time `t` (periodic monotone-cubic in `t`,
    /// isotonic-guarded in `x`).
    pub fn wss_slice(&self, t: f64) -> Vec<f64> {
        let n_t = self.win_prob.len();
        if n_t == 1 {
            return self.win_prob[0].clone();
        }
        let step = self.knot_step();
        let tt = t.rem_euclid(self.period);
        let k = ((tt / step) as usize).min(n_t - 1);
        let u = (tt - k as f64 * step) / step;
        let k1 = (k + 1) % n_t;
        let (row0, row1) = (&self.win_prob[k], &self.win_prob[k1]);
        let (m0, m1) = (&self.wp_tangents[k], &self.wp_tangents[k1]);
        let mut out: Vec<f64> = (0..row0.len())
            .map(|ix| interp::hermite(u, row0[ix], row1[ix], m0[ix], m1[ix], step))
            .collect();
        let h = self.grid_x[1] - self.grid_x[0];
        let top = out.last().copied().unwrap_or(1.0).max(1.0);
        let worst = interp::enforce_strictly_increasing(&mut out, FLOOR_SLOPE * h * top);
        if worst > 1e-9 * top {
            self.monotone_fixups.fetch_add(1, Ordering::Relaxed);
        }
        out
    }

    /// Steady-state win probability at `(x, t)`; 0 below the grid.
    pub fn eval_wss(&self, x: f64, t: f64) -> f64 {
        if x < self.grid_x[0] {
            return 0.0;
        }
        let slice = self.wss_slice(t);
        interp::eval_linear(&self.grid_x, &slice, x)
    }

    /// Supply rate `W(x, t) = λ(t) Wss(x, t)` in items/hour.
    pub fn eval_w(&self, x: f64, t: f64) -> f64 {
        self.lambda_at(t) * self.eval_wss(x, t)
    }

    /// Supply bound `B(t)` (items/hour at the top of the grid).
    pub fn bound_at(&self, t: f64) -> f64 {
        let slice = self.wss_slice(t);
        self.lambda_at(t) * slice.last().copied().unwrap_or(0.0)
    }

    /// Instantaneous section at time `t` as a win/cost curve pair
    /// (units items/hour and currency/hour).
    pub fn section_at(&self, t: f64) -> AggregateCurve {
        let lam = self.lambda_at(t);
        let slice = self.wss_slice(t);
        let w = slice.into_iter().map(|v| lam * v).collect();
        AggregateCurve::from_win_values(Arc::clone(&self.grid_x), w, self.i_zero)
    }

    /// Lowest bid winning at rate `s` items/hour at time `t`.
    pub fn invert_w(&self, s: f64, t: f64) -> Result<Inversion> {
        self.section_at(t).invert(s)
    }

    /// Expected spend rate at `(x, t)`.
    pub fn expected_cost(&self, x: f64, t: f64) -> f64 {
        self.section_at(t).eval_f(x)
    }

    /// Instantaneous acquisition cost and derivative at `(s, t)`.
    pub fn acquisition_cost(&self, s: f64, t: f64) -> Result<(f64, f64)> {
        self.section_at(t).acquisition(s)
    }

    /// Aggregated `(W̄, f̄)` pair over `[t0, t1]`.
    pub fn aggregate(&self, t0: f64, t1: f64) -> Result<AggregateCurve> {
        CurveIntegrator::new(self, CurveIntegrator::DEFAULT_SUBDIV).aggregate(t0, t1)
    }

    /// Shift the time origin: `shifted(d).eval(x, t) == self.eval(x, t + d)`.
    /// Knot-aligned shifts rotate exactly; others resample the knots.
    pub fn shifted(&self, hours: f64) -> Self {
        let n_t = self.lambda.len();
        let step = self.knot_step();
        let offset = hours.rem_euclid(self.period);
        let ratio = offset / step;
        let whole = ratio.round();
        if (ratio - whole).abs() < 1e-9 && n_t > 1 {
            let k = whole as usize % n_t;
            let rot = |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                (0..n_t).map(|i| v[(i + k) % n_t].clone()).collect()
            };
            let lambda: Vec<f64> = (0..n_t).map(|i| self.lambda[(i + k) % n_t]).collect();
            return Self::new(self.grid_x.to_vec(), rot(&self.win_prob), lambda, self.period, self.sigma)
                .expect("rotation preserves validity");
        }
        let rows: Vec<Vec<f64>> = (0..n_t).map(|i| self.wss_slice(i as f64 * step + offset)).collect();
        let lambda: Vec<f64> = (0..n_t).map(|i| self.lambda_at(i as f64 * step + offset)).collect();
        Self::new(self.grid_x.to_vec(), rows, lambda, self.period, self.sigma).expect("resample preserves validity")
    }
}

// ---------------------------------------------------------------------------
// Time integration
// ---------------------------------------------------------------------------

/// Precomputed prefix integrals of `W(x, ·)` over one period, supporting
/// O(grid) window aggregation for arbitrary `[t0, t1]`.
pub struct CurveIntegrator {
    grid: Arc<[f64]>,
    i_zero: usize,
    period: f64,
    dt: f64,
    /// λ(τ_m)·Wss(·, τ_m) at refined samples, m = 0..=S.
    slices: Vec<Vec<f64>>,
    /// prefix[m] = ∫_0^{τ_m} of the piecewise-linear-in-t model.
    prefix: Vec<Vec<f64>>,
    lambda_samples: Vec<f64>,
    lambda_prefix: Vec<f64>,
}

impl CurveIntegrator {
    pub const DEFAULT_SUBDIV: usize = 16;

    pub fn new(curve: &TimeVaryingSupplyCurve, subdiv: usize) -> Self {
        let s = curve.knots() * subdiv.max(1);
        let dt = curve.period() / s as f64;
        let n_x = curve.grid_x().len();
        let mut slices = Vec::with_capacity(s + 1);
        let mut lambda_samples = Vec::with_capacity(s + 1);
        for m in 0..=s {
            let t = m as f64 * dt;
            let lam = curve.lambda_at(t);
            let mut row = curve.wss_slice(t);
            for v in &mut row {
                *v *= lam;
            }
            slices.push(row);
            lambda_samples.push(lam);
        }
        let mut prefix = vec![vec![0.0; n_x]; s + 1];
        let mut lambda_prefix = vec![0.0; s + 1];
        for m in 0..s {
            for ix in 0..n_x {
                prefix[m + 1][ix] = prefix[m][ix] + 0.5 * dt * (slices[m][ix] + slices[m + 1][ix]);
            }
            lambda_prefix[m + 1] = lambda_prefix[m] + 0.5 * dt * (lambda_samples[m] + lambda_samples[m + 1]);
        }
        Self {
            grid: curve.shared_grid(),
            i_zero: curve.index_of_zero(),
            period: curve.period(),
            dt,
            slices,
            prefix,
            lambda_samples,
            lambda_prefix,
        }
    }

    fn cumulative_into(&self, t: f64, out: &mut [f64], scale: f64) {
        let s = self.slices.len() - 1;
        let periods = (t / self.period).floor();
        let frac = t - periods * self.period;
        let pos = (frac / self.dt).min(s as f64 - 1e-12).max(0.0);
        let m = (pos as usize).min(s - 1);
        let u = pos - m as f64;
        let full = &self.prefix[s];
        let pm = &self.prefix[m];
        let (sl0, sl1) = (&self.slices[m], &self.slices[m + 1]);
        for ix in 0..out.len() {
            let partial = self.dt * (u * sl0[ix] + 0.5 * u * u * (sl1[ix] - sl0[ix]));
            out[ix] += scale * (periods * full[ix] + pm[ix] + partial);
        }
    }

    /// `W̄(x) = ∫_{t0}^{t1} W(x, t) dt` with the derived cost curve.
    pub fn aggregate(&self, t0: f64, t1: f64) -> Result<AggregateCurve> {
        if !(t1 > t0) {
            return Err(Error::Parameter(format!("aggregation window must satisfy t0 < t1, got [{t0}, {t1}]")));
        }
        let mut w = vec![0.0; self.grid.len()];
        self.cumulative_into(t1, &mut w, 1.0);
        self.cumulative_into(t0, &mut w, -1.0);
        Ok(AggregateCurve::from_win_values(Arc::clone(&self.grid), w, self.i_zero))
    }

    fn lambda_cumulative(&self, t: f64) -> f64 {
        let s = self.slices.len() - 1;
        let periods = (t / self.period).floor();
        let frac = t - periods * self.period;
        let pos = (frac / self.dt).min(s as f64 - 1e-12).max(0.0);
        let m = (pos as usize).min(s - 1);
        let u = pos - m as f64;
        let partial = self.dt
            * (u * self.lambda_samples[m] + 0.5 * u * u * (self.lambda_samples[m + 1] - self.lambda_samples[m]));
        periods * self.lambda_prefix[s] + self.lambda_prefix[m] + partial
    }

    /// `∫_{t0}^{t1} λ(t) dt` (items).
    pub fn lambda_integral(&self, t0: f64, t1: f64) -> f64 {
        self.lambda_cumulative(t1) - self.lambda_cumulative(t0)
    }

    /// `∫_{t0}^{t1} B(t) dt`: the aggregated supply bound (items), from the
    /// top-of-grid column.
    pub fn capacity_integral(&self, t0: f64, t1: f64) -> f64 {
        let n = self.grid.len();
        let s = self.slices.len() - 1;
        let col = |m: usize| self.slices[m][n - 1];
        let cum = |t: f64| -> f64 {
            let periods = (t / self.period).floor();
            let frac = t - periods * self.period;
            let pos = (frac / self.dt).min(s as f64 - 1e-12).max(0.0);
            let m = (pos as usize).min(s - 1);
            let u = pos - m as f64;
            let partial = self.dt * (u * col(m) + 0.5 * u * u * (col(m + 1) - col(m)));
            periods * self.prefix[s][n - 1] + self.prefix[m][n - 1] + partial
        };
        cum(t1) - cum(t0)
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// JSON document for curve files.
#[derive(Debug, Serialize, Deserialize)]
pub struct CurveDocument {
    pub schema_version: u32,
    /// Human-readable unit conventions for the fields below.
    pub units: String,
    pub grid_x: Vec<f64>,
    pub grid_t: Vec<f64>,
    pub win_prob: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub sigma: f64,
    pub period_hours: f64,
}

pub const CURVE_UNITS: &str =
    "grid_x: currency; grid_t: hours (period-relative knots); win_prob: probability rows per knot; \
     lambda: items/hour; sigma: currency";

impl TimeVaryingSupplyCurve {
    pub fn to_document(&self) -> CurveDocument {
        let step = self.knot_step();
        CurveDocument {
            schema_version: 1,
            units: CURVE_UNITS.to_string(),
            grid_x: self.grid_x.to_vec(),
            grid_t: (0..self.knots()).map(|k| k as f64 * step).collect(),
            win_prob: self.win_prob.clone(),
            lambda: self.lambda.clone(),
            sigma: self.sigma,
            period_hours: self.period,
        }
    }

    pub fn from_document(doc: CurveDocument) -> Result<Self> {
        if doc.schema_version != 1 {
            return Err(Error::Config(format!("unsupported curve schema version {}", doc.schema_version)));
        }
        if doc.grid_t.len() != doc.lambda.len() {
            return Err(Error::Config("grid_t and lambda length mismatch".into()));
        }
        let step = doc.period_hours / doc.lambda.len() as f64;
        for (k, &t) in doc.grid_t.iter().enumerate() {
            if (t - k as f64 * step).abs() > 1e-9 * doc.period_hours {
                return Err(Error::Config("grid_t knots must be uniform over the period".into()));
            }
        }
        Self::new(doc.grid_x, doc.win_prob, doc.lambda, doc.period_hours, doc.sigma)
    }
}
