//! Benchmark scenario: the six-contract campaign over five item types with
//! sinusoidal arrival rates (peak/trough ratio 3) and exponential price
//! curves whose scale drifts over the day. Used by the simulation campaign
//! and the acceptance suite.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::MarketSampler;
use crate::supply::{GridSpec, RawWinCurve, TimeVaryingSupplyCurve};
use crate::targeting::{Atom, Contract, Decomposition};

/// The six benchmark contracts; targeting atoms are the type tags "0".."4".
pub fn table_contracts() -> Vec<Contract> {
    let spec: [(&str, f64, f64, &[&str]); 6] = [
        ("c1", 28.0, 4500.0, &["0", "2"]),
        ("c2", 31.0, 3240.0, &["0", "4"]),
        ("c3", 43.0, 6300.0, &["1", "2", "4"]),
        ("c4", 56.0, 3600.0, &["0", "3"]),
        ("c5", 63.0, 1800.0, &["2"]),
        ("c6", 71.0, 3600.0, &["2", "4"]),
    ];
    spec.iter()
        .map(|(id, t, c, atoms)| {
            Contract::new(*id, *t, *c, atoms.iter().map(|a| a.to_string()).collect()).unwrap()
        })
        .collect()
}

/// Per-tag synthetic market parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagMarket {
    /// Mean arrival rate (items/hour).
    pub lambda_base: f64,
    /// Phase of the daily arrival sinusoid (hours).
    pub lambda_phase: f64,
    /// Mean of the exponential price scale (currency).
    pub scale_base: f64,
    /// Relative amplitude of the price-scale sinusoid.
    pub scale_amplitude: f64,
    /// Phase of the price-scale sinusoid (hours).
    pub scale_phase: f64,
}

/// Synthetic market description keyed by targeting atom.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticMarket {
    pub tags: BTreeMap<Atom, TagMarket>,
    /// Bid randomization / smoothing width (currency).
    pub sigma: f64,
    /// Arrival sinusoid amplitude; 0.5 gives a peak/trough ratio of 3.
    pub lambda_amplitude: f64,
    pub grid_points: usize,
}

impl SyntheticMarket {
    /// The benchmark market behind the six-contract campaign.
    pub fn benchmark() -> Self {
        let params: [(&str, f64, f64, f64); 5] = [
            // tag, lambda_base, scale_base, phase offset
            ("0", 620.0, 55.0, 0.0),
            ("1", 260.0, 40.0, 3.0),
            ("2", 950.0, 60.0, 6.0),
            ("3", 160.0, 35.0, 9.0),
            ("4", 680.0, 50.0, 12.0),
        ];
        let tags = params
            .iter()
            .map(|&(tag, lambda_base, scale_base, phase)| {
                (
                    tag.to_string(),
                    TagMarket {
                        lambda_base,
                        lambda_phase: phase,
                        scale_base,
                        scale_amplitude: 0.4,
                        scale_phase: phase + 7.0,
                    },
                )
            })
            .collect();
        Self { tags, sigma: 4.0, lambda_amplitude: 0.5, grid_points: 512 }
    }

    fn lambda_knots(&self, m: &TagMarket) -> Vec<f64> {
        (0..24)
            .map(|h| {
                let phase = 2.0 * std::f64::consts::PI * (h as f64 - m.lambda_phase) / 24.0;
                m.lambda_base * (1.0 + self.lambda_amplitude * phase.sin())
            })
            .collect()
    }

    fn scale_knots(&self, m: &TagMarket) -> Vec<f64> {
        (0..24)
            .map(|h| {
                let phase = 2.0 * std::f64::consts::PI * (h as f64 - m.scale_phase) / 24.0;
                m.scale_base * (1.0 + m.scale_amplitude * phase.sin())
            })
            .collect()
    }

    fn grid_spec(&self, m: &TagMarket) -> GridSpec {
        let x_max = 7.0 * m.scale_base * (1.0 + m.scale_amplitude);
        GridSpec::new(x_max, self.grid_points, self.sigma).unwrap()
    }

    /// Planning curve for one tag: smoothed hourly exponential CDFs times
    /// the sinusoidal arrival rate.
    pub fn planning_curve(&self, tag: &str) -> Result<TimeVaryingSupplyCurve> {
        let m = self
            .tags
            .get(tag)
            .ok_or_else(|| Error::Config(format!("no market parameters for tag {tag}")))?;
        let spec = self.grid_spec(m);
        let coarse = spec.build();
        let scales = self.scale_knots(m);
        let raw: Vec<RawWinCurve> = scales
            .iter()
            .map(|&theta| {
                RawWinCurve::from_fn(&coarse, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-x / theta).exp() })
            })
            .collect::<Result<Vec<_>>>()?;
        TimeVaryingSupplyCurve::from_raw_slices(&raw, self.lambda_knots(m), 24.0, spec)
    }

    /// Planning curves for every type of a decomposition (types whose cells
    /// merge several tags combine their curves).
    pub fn curves_for(&self, decomposition: &Decomposition) -> Result<Vec<TimeVaryingSupplyCurve>> {
        let mut by_tag = BTreeMap::new();
        for tag in self.tags.keys() {
            by_tag.insert(tag.clone(), self.planning_curve(tag)?);
        }
        curves_for_decomposition(decomposition, &by_tag)
    }

    /// Market sampler over the decomposition's types, with the window
    /// starting `offset` hours into the daily cycle.
    pub fn sampler_for(&self, decomposition: &Decomposition, offset: f64) -> Result<MarketSampler> {
        let mut curves = Vec::new();
        let mut scale_tracks = Vec::new();
        for ty in &decomposition.types {
            // Types are singleton tags in the benchmark; for merged cells the
            // arrival superposition uses the combined curve and the price
            // scale of the dominant tag.
            let combined = combine_tag_curves(self, &ty.atoms)?.shifted(offset);
            let dominant = ty
                .atoms
                .iter()
                .max_by(|a, b| {
                    let la = self.tags.get(*a).map(|m| m.lambda_base).unwrap_or(0.0);
                    let lb = self.tags.get(*b).map(|m| m.lambda_base).unwrap_or(0.0);
                    la.partial_cmp(&lb).unwrap()
                })
                .unwrap();
            let m = self
                .tags
                .get(dominant)
                .ok_or_else(|| Error::Config(format!("no market parameters for tag {dominant}")))?;
            let scales = self.scale_knots(m);
            let shifted: Vec<f64> =
                (0..24).map(|h| scales[((h as f64 + offset).rem_euclid(24.0)) as usize % 24]).collect();
            curves.push(combined);
            scale_tracks.push(shifted);
        }
        MarketSampler::synthetic_exponential(&curves, &scale_tracks)
    }
}

fn combine_tag_curves(market: &SyntheticMarket, atoms: &[Atom]) -> Result<TimeVaryingSupplyCurve> {
    let curves: Vec<TimeVaryingSupplyCurve> =
        atoms.iter().map(|a| market.planning_curve(a)).collect::<Result<Vec<_>>>()?;
    combine_curves(&curves)
}

/// Combine curves of several atoms into one item-type curve: arrival rates
/// add; win probabilities mix with arrival-rate weights.
pub fn combine_curves(curves: &[TimeVaryingSupplyCurve]) -> Result<TimeVaryingSupplyCurve> {
    if curves.is_empty() {
        return Err(Error::Config("cannot combine zero curves".into()));
    }
    if curves.len() == 1 {
        return Ok(curves[0].clone());
    }
    let base = &curves[0];
    for c in &curves[1..] {
        if c.grid_x().len() != base.grid_x().len()
            || c.knots() != base.knots()
            || (c.period() - base.period()).abs() > 1e-9
        {
            return Err(Error::Config("curves to combine must share grids, knots and period".into()));
        }
    }
    let n_t = base.knots();
    let n_x = base.grid_x().len();
    let mut lambda = vec![0.0; n_t];
    let mut rows = vec![vec![0.0; n_x]; n_t];
    for c in curves {
        for it in 0..n_t {
            let l = c.lambda_knots()[it];
            lambda[it] += l;
            for ix in 0..n_x {
                rows[it][ix] += l * c.win_prob_rows()[it][ix];
            }
        }
    }
    for it in 0..n_t {
        let l = lambda[it].max(1e-12);
        for v in &mut rows[it] {
            *v /= l;
        }
    }
    TimeVaryingSupplyCurve::new(
        base.grid_x().to_vec(),
        rows,
        lambda,
        base.period(),
        curves.iter().map(|c| c.sigma()).fold(0.0f64, f64::max),
    )
}

/// Map per-atom curves onto decomposition types (union cells combine).
pub fn curves_for_decomposition(
    decomposition: &Decomposition,
    by_atom: &BTreeMap<Atom, TimeVaryingSupplyCurve>,
) -> Result<Vec<TimeVaryingSupplyCurve>> {
    decomposition
        .types
        .iter()
        .map(|ty| {
            let curves: Vec<TimeVaryingSupplyCurve> = ty
                .atoms
                .iter()
                .map(|a| {
                    by_atom
                        .get(a)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("missing supply curve for atom {a}")))
                })
                .collect::<Result<Vec<_>>>()?;
            combine_curves(&curves)
        })
        .collect()
}
