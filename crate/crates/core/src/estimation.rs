//! Supply-curve estimation from auction logs.
//!
//! Per item type: hourly arrival rates from trimmed mean interarrivals,
//! hourly win-probability curves from a Gaussian KDE of market prices
//! (normal-reference-rule bandwidth, reflected at zero), and a periodic
//! monotone-cubic interpolation in time assembled into a
//! [`TimeVaryingSupplyCurve`].

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::supply::{GridSpec, RawWinCurve, TimeVaryingSupplyCurve};

const HOURS: usize = 24;

/// One parsed auction-log record.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    /// Hours since the epoch of the log's time base.
    pub timestamp_hours: f64,
    pub tag: String,
    pub market_price: f64,
}

/// Estimation knobs.
#[derive(Debug, Clone)]
pub struct EstimationConfig {
    /// Interarrivals above this quantile are dropped as gap artifacts.
    pub trim_quantile: f64,
    /// Normal-reference-rule bandwidth factor.
    pub bandwidth_factor: f64,
    /// Minimum prices per hour bucket before merging with neighbours.
    pub min_bucket_prices: usize,
    /// KDE bandwidth floor for degenerate buckets (all prices equal).
    pub sigma_floor: f64,
    /// Bid-randomization width applied to the assembled curve.
    pub sigma: f64,
    /// Positive-axis grid points for the curve.
    pub grid_points: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            trim_quantile: 0.99,
            bandwidth_factor: 1.06,
            min_bucket_prices: 30,
            sigma_floor: 1.0,
            sigma: 1.0,
            grid_points: 512,
        }
    }
}

/// Per-type estimation diagnostics.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EstimationReport {
    /// Hours whose arrival rate was imputed from neighbours.
    pub imputed_rate_hours: Vec<usize>,
    /// Hours whose price bucket was merged with neighbours.
    pub merged_price_hours: Vec<usize>,
    /// Hours that fell back to the degenerate single-price kernel.
    pub degenerate_price_hours: Vec<usize>,
    pub events: usize,
    pub lambda: Vec<f64>,
    pub kde_bandwidths: Vec<f64>,
}

/// Hourly arrival rates via `1 / trimmed-mean(interarrivals)` with the
/// exponential trimmed-mean correction. Interarrivals are bucketed by the
/// hour-of-day of the earlier arrival; gaps above the trim quantile are
/// treated as data holes rather than evidence of a low rate.
pub fn estimate_arrival_rates(
    sorted_times: &[f64],
    cfg: &EstimationConfig,
) -> Result<([f64; HOURS], Vec<usize>)> {
    if sorted_times.len() < 2 {
        return Err(Error::Input("need at least two arrivals to estimate rates".into()));
    }
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); HOURS];
    for w in sorted_times.windows(2) {
        let dt = w[1] - w[0];
        if dt < 0.0 {
            return Err(Error::Input("arrival timestamps must be sorted".into()));
        }
        if dt > 0.0 {
            let hour = (w[0].rem_euclid(24.0)) as usize % HOURS;
            buckets[hour].push(dt);
        }
    }
    let mut rates = [f64::NAN; HOURS];
    let mut imputed = Vec::new();
    for (h, bucket) in buckets.iter_mut().enumerate() {
        if bucket.len() < 2 {
            imputed.push(h);
            continue;
        }
        bucket.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q_index = ((cfg.trim_quantile * bucket.len() as f64).ceil() as usize).clamp(1, bucket.len()) - 1;
        let threshold = bucket[q_index];
        let kept: Vec<f64> = bucket.iter().copied().filter(|&d| d <= threshold).collect();
        let alpha = (bucket.len() - kept.len()) as f64 / bucket.len() as f64;
        // E[mean of an Exp sample kept below its (1-α) quantile] is
        // (1/λ)(1 - α ln(1/α)/(1-α)); divide the naive estimate accordingly.
        let kappa = if alpha > 0.0 { 1.0 - alpha * (1.0 / alpha).ln() / (1.0 - alpha) } else { 1.0 };
        let mean = kept.iter().sum::<f64>() / kept.len() as f64;
        rates[h] = kappa / mean;
    }
    // Impute missing hours from the circular neighbours.
    for &h in &imputed {
        let mut lo = (h + HOURS - 1) % HOURS;
        while rates[lo].is_nan() {
            lo = (lo + HOURS - 1) % HOURS;
            if lo == h {
                return Err(Error::Input("no hour bucket has enough arrivals".into()));
            }
        }
        let mut hi = (h + 1) % HOURS;
        while rates[hi].is_nan() {
            hi = (hi + 1) % HOURS;
        }
        rates[h] = 0.5 * (rates[lo] + rates[hi]);
    }
    Ok((rates, imputed))
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Gaussian-KDE price CDF reflected at zero, evaluated on `grid`.
/// `P(price <= x) = (1/n) Σ [Φ((x-p)/h) + Φ((x+p)/h) - 1]` for `x >= 0`.
fn kde_cdf(prices: &[f64], bandwidth: f64, grid: &[f64]) -> Vec<f64> {
    let n = prices.len() as f64;
    grid.iter()
        .map(|&x| {
            if x < 0.0 {
                return 0.0;
            }
            let s: f64 = prices
                .iter()
                .map(|&p| normal_cdf((x - p) / bandwidth) + normal_cdf((x + p) / bandwidth) - 1.0)
                .sum();
            (s / n).clamp(0.0, 1.0)
        })
        .collect()
}

/// Normal-reference-rule bandwidth `1.06 min(σ̂, IQR/1.349) n^(-1/5)`.
fn nrr_bandwidth(prices: &[f64], cfg: &EstimationConfig) -> f64 {
    let n = prices.len() as f64;
    let mean = prices.iter().sum::<f64>() / n;
    let var = prices.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let mut sorted = prices.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
    let iqr = q(0.75) - q(0.25);
    let sigma = var.sqrt().min(if iqr > 0.0 { iqr / 1.349 } else { f64::INFINITY });
    cfg.bandwidth_factor * sigma * n.powf(-0.2)
}

/// Smooth per-hour win-probability CDFs over bids. Sparse buckets merge
/// with circular neighbours; degenerate buckets (all prices equal) fall
/// back to a Gaussian step at the price with the `sigma_floor` width.
pub fn estimate_win_prob(
    hour_prices: &[Vec<f64>],
    cfg: &EstimationConfig,
    grid: &[f64],
) -> Result<(Vec<Vec<f64>>, EstimationReport)> {
    if hour_prices.len() != HOURS {
        return Err(Error::Input(format!("expected {HOURS} hourly price buckets")));
    }
    let mut report = EstimationReport::default();
    let mut rows = Vec::with_capacity(HOURS);
    for h in 0..HOURS {
        // Merge circular neighbours until the bucket is large enough.
        let mut pool: Vec<f64> = hour_prices[h].clone();
        let mut spread = 1usize;
        while pool.len() < cfg.min_bucket_prices && spread <= HOURS / 2 {
            pool.extend_from_slice(&hour_prices[(h + spread) % HOURS]);
            pool.extend_from_slice(&hour_prices[(h + HOURS - spread) % HOURS]);
            spread += 1;
        }
        if spread > 1 {
            report.merged_price_hours.push(h);
        }
        if pool.is_empty() {
            return Err(Error::Input(format!("hour {h}: no price data after merging")));
        }
        let bw = nrr_bandwidth(&pool, cfg);
        let bw = if bw > 1e-12 {
            bw
        } else {
            report.degenerate_price_hours.push(h);
            cfg.sigma_floor
        };
        report.kde_bandwidths.push(bw);
        let mut row = kde_cdf(&pool, bw, grid);
        // Floor slope keeps the CDF strictly monotone.
        let h_x = grid[1] - grid[0];
        crate::interp::enforce_strictly_increasing(&mut row, 1e-12 * h_x);
        rows.push(row);
    }
    Ok((rows, report))
}

/// Assemble hourly rates and CDFs into a periodic supply curve. The hourly
/// CDFs are Gaussian-smoothed with the bid-randomization width `σ` so the
/// planning curve matches the randomized-bid win rates.
pub fn build_periodic_curve(
    lambda: &[f64; HOURS],
    hourly_cdfs: &[RawWinCurve],
    cfg: &EstimationConfig,
    x_max: f64,
) -> Result<TimeVaryingSupplyCurve> {
    if hourly_cdfs.len() != HOURS {
        return Err(Error::Input(format!("expected {HOURS} hourly CDFs")));
    }
    let spec = GridSpec::new(x_max, cfg.grid_points, cfg.sigma)?;
    TimeVaryingSupplyCurve::from_raw_slices(hourly_cdfs, lambda.to_vec(), 24.0, spec)
}

/// Full pipeline for one type's records (timestamps sorted).
pub fn estimate_type_curve(
    records: &[(f64, f64)],
    cfg: &EstimationConfig,
) -> Result<(TimeVaryingSupplyCurve, EstimationReport)> {
    let times: Vec<f64> = records.iter().map(|r| r.0).collect();
    let (lambda, imputed) = estimate_arrival_rates(&times, cfg)?;
    let mut hour_prices: Vec<Vec<f64>> = vec![Vec::new(); HOURS];
    let mut p_max = 0.0f64;
    for &(t, p) in records {
        hour_prices[(t.rem_euclid(24.0)) as usize % HOURS].push(p);
        p_max = p_max.max(p);
    }
    // Evaluation grid wide enough that the CDF reaches ~1 at the top.
    let probe = GridSpec::new((p_max * 1.3).max(1.0), cfg.grid_points, 0.0)?.build();
    let (rows, mut report) = estimate_win_prob(&hour_prices, cfg, &probe)?;
    report.imputed_rate_hours = imputed;
    report.events = records.len();
    report.lambda = lambda.to_vec();
    let x_max = (p_max + 4.0 * report.kde_bandwidths.iter().cloned().fold(0.0, f64::max)).max(1.0);
    let cdfs: Vec<RawWinCurve> = rows
        .into_iter()
        .map(|row| RawWinCurve::new(probe.clone(), row))
        .collect::<Result<Vec<_>>>()?;
    let curve = build_periodic_curve(&lambda, &cdfs, cfg, x_max)?;
    Ok((curve, report))
}

/// Group records by tag and estimate one curve per tag.
pub fn estimate_curves(
    records: &[LogRecord],
    cfg: &EstimationConfig,
) -> Result<BTreeMap<String, (TimeVaryingSupplyCurve, EstimationReport)>> {
    let mut by_tag: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        by_tag.entry(r.tag.clone()).or_default().push((r.timestamp_hours, r.market_price));
    }
    let mut out = BTreeMap::new();
    for (tag, mut recs) in by_tag {
        recs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let estimated = estimate_type_curve(&recs, cfg)?;
        out.insert(tag, estimated);
    }
    Ok(out)
}

/// Parse a log CSV with header `timestamp,user_tag,market_price`.
/// Timestamps are epoch seconds or `YYYY-MM-DD HH:MM:SS[.fff]` /
/// RFC3339-style strings; prices are integer or decimal currency units.
/// Returns records plus (line, reason) pairs for malformed rows.
pub fn parse_log_csv<R: std::io::Read>(reader: R) -> Result<(Vec<LogRecord>, Vec<(usize, String)>)> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (ts_col, tag_col, price_col) = match (col("timestamp"), col("user_tag"), col("market_price")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(Error::Input(
                "log CSV must have timestamp, user_tag and market_price columns".into(),
            ))
        }
    };
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for (idx, row) in csv_reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                malformed.push((line, e.to_string()));
                continue;
            }
        };
        let get = |c: usize| row.get(c).map(str::trim).unwrap_or("");
        let ts = match parse_timestamp_hours(get(ts_col)) {
            Some(t) => t,
            None => {
                malformed.push((line, format!("bad timestamp {:?}", get(ts_col))));
                continue;
            }
        };
        let price: f64 = match get(price_col).parse() {
            Ok(p) if p >= 0.0 => p,
            _ => {
                malformed.push((line, format!("bad market_price {:?}", get(price_col))));
                continue;
            }
        };
        let tag = get(tag_col);
        if tag.is_empty() {
            malformed.push((line, "empty user_tag".into()));
            continue;
        }
        records.push(LogRecord { timestamp_hours: ts, tag: tag.to_string(), market_price: price });
    }
    Ok((records, malformed))
}

/// Epoch seconds (or millis) or a calendar timestamp, to hours.
fn parse_timestamp_hours(s: &str) -> Option<f64> {
    if s.is_empty() {
        return None;
    }
    if let Ok(num) = s.parse::<f64>() {
        if !num.is_finite() || num < 0.0 {
            return None;
        }
        // Heuristic: values beyond ~year 5000 in seconds are milliseconds.
        let seconds = if num > 1.0e11 { num / 1000.0 } else { num };
        return Some(seconds / 3600.0);
    }
    parse_calendar(s)
}

/// Minimal `YYYY-MM-DD[ T]HH:MM:SS[.frac]` parser (UTC), returning hours
/// since the Unix epoch.
fn parse_calendar(s: &str) -> Option<f64> {
    let s = s.trim().trim_end_matches('Z');
    let (date, time) = if let Some((d, t)) = s.split_once('T') {
        (d, t)
    } else {
        s.split_once(' ')?
    };
    let mut dp = date.split('-');
    let year: i64 = dp.next()?.parse().ok()?;
    let month: u32 = dp.next()?.parse().ok()?;
    let day: u32 = dp.next()?.parse().ok()?;
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return None;
    }
    let mut tp = time.split(':');
    let hour: u32 = tp.next()?.parse().ok()?;
    let minute: u32 = tp.next()?.parse().ok()?;
    let second: f64 = tp.next().unwrap_or("0").parse().ok()?;
    if hour >= 24 || minute >= 60 || !(0.0..60.0).contains(&second) {
        return None;
    }
    // Days since epoch (civil-from-days, Howard Hinnant's algorithm).
    let y = if month <= 2 { year - 1 } else { year };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (month as i64 + 9) % 12;
    let doy = (153 * mp + 2) / 5 + day as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    let days = era * 146_097 + doe - 719_468;
    Some(days as f64 * 24.0 + hour as f64 + minute as f64 / 60.0 + second / 3600.0)
}
