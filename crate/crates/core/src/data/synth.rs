use std::collections::BTreeMap;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    Asset, DataPanel, FundamentalSnapshot, Month, PriceBar, SectorClass, TextKind, TextPayload,
    TextSignalRecord,
};
use crate::error::{Error, Result};
use crate::macro_agent::{MacroObservation, MacroSeries, Regime};

const YEAR: f64 = 252.0;

/// Which agent's input carries the planted signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantTarget {
    /// Daily news records scored `tanh(alpha)`.
    News,
    /// Weekly report records whose composite is `tanh(alpha)`.
    Report,
    /// No records: the persistent alpha shows up as price trend only.
    Technical,
    /// Quarterly ROE carries `alpha`.
    Fundamental,
}

/// A persistent per-asset AR(1) signal `alpha` (unit variance) that shifts the
/// next day's log return by `snr * idio_vol_daily * alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plant {
    pub target: PlantTarget,
    pub snr: f64,
    #[serde(default = "default_persistence")]
    pub persistence: f64,
}

fn default_persistence() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub start: NaiveDate,
    pub n_assets: usize,
    pub n_days: usize,
    pub n_industries: usize,
    /// Annualized drift shared by all assets.
    pub drift: f64,
    /// Per-industry annualized drift added to `drift`; empty means none.
    pub industry_drift: Vec<f64>,
    pub market_vol: f64,
    /// Annualized industry-factor volatility; a single value or one per industry.
    pub industry_vol: Vec<f64>,
    pub idio_vol: f64,
    /// Extra annualized drift of the sector class a regime favors.
    pub regime_tilt: f64,
    /// Probability that an asset has no bar on a given day.
    pub missing_rate: f64,
    /// Daily probability of a background news record per asset.
    pub news_rate: f64,
    /// Daily probability of a background report record per asset.
    pub report_rate: f64,
    pub plant: Option<Plant>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            start: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
            n_assets: 100,
            n_days: 1826,
            n_industries: 10,
            drift: 0.06,
            industry_drift: Vec::new(),
            market_vol: 0.12,
            industry_vol: vec![0.10],
            idio_vol: 0.25,
            regime_tilt: 0.05,
            missing_rate: 0.0,
            news_rate: 0.05,
            report_rate: 0.01,
            plant: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_assets < 1 || self.n_days < 1 || self.n_industries < 1 {
            return Err(Error::config(format!(
                "synthetic panel needs N, T, J >= 1 (got N={}, T={}, J={})",
                self.n_assets, self.n_days, self.n_industries
            )));
        }
        if !self.industry_drift.is_empty() && self.industry_drift.len() != self.n_industries {
            return Err(Error::config("synth.industry_drift needs one value per industry"));
        }
        if !(self.industry_vol.len() == 1 || self.industry_vol.len() == self.n_industries) {
            return Err(Error::config("synth.industry_vol needs one value or one per industry"));
        }
        let vols = [self.market_vol, self.idio_vol]
            .into_iter()
            .chain(self.industry_vol.iter().copied());
        for v in vols {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config("synth volatilities must be finite and >= 0"));
            }
        }
        for (name, p) in [
            ("missing_rate", self.missing_rate),
            ("news_rate", self.news_rate),
            ("report_rate", self.report_rate),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::config(format!("synth.{name} must lie in [0, 1)")));
            }
        }
        if let Some(p) = &self.plant {
            if !p.snr.is_finite() || p.snr < 0.0 {
                return Err(Error::config("synth.plant.snr must be finite and >= 0"));
            }
            if !(0.0..1.0).contains(&p.persistence) {
                return Err(Error::config("synth.plant.persistence must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    fn industry_vol(&self, j: usize) -> f64 {
        if self.industry_vol.len() == 1 {
            self.industry_vol[0]
        } else {
            self.industry_vol[j]
        }
    }
}

fn weekday_calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Number of months of macro history generated before the first calendar month.
const MACRO_LEAD_MONTHS: i32 = 14;

fn regime_path(rng: &mut ChaCha8Rng, n_months: usize, covered: std::ops::Range<usize>, force: bool) -> Vec<Regime> {
    let mut path = Vec::with_capacity(n_months);
    let mut current = Regime::ALL[rng.random_range(0..4)];
    for _ in 0..n_months {
        if rng.random::<f64>() >= 0.9 {
            let others: Vec<Regime> = Regime::ALL.into_iter().filter(|r| *r != current).collect();
            current = others[rng.random_range(0..3)];
        }
        path.push(current);
    }
    if force && covered.len() >= 8 {
        let missing: Vec<Regime> = Regime::ALL
            .into_iter()
            .filter(|r| !path[covered.clone()].contains(r))
            .collect();
        // Stamp each missing regime as a short block at evenly spaced slots.
        let slots = missing.len() + 1;
        for (k, r) in missing.iter().enumerate() {
            let centre = covered.start + covered.len() * (k + 1) / slots;
            let lo = centre.saturating_sub(1).max(covered.start);
            let hi = (centre + 2).min(covered.end);
            path[lo..hi].iter_mut().for_each(|x| *x = *r);
        }
    }
    path
}

fn quarter_ends(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut m = Month::of(from);
    while m.month() % 3 != 0 {
        m = m.offset(1);
    }
    loop {
        let next = m.offset(1);
        let end = NaiveDate::from_ymd_opt(next.year(), next.month(), 1).expect("valid month") - Days::new(1);
        if end > to {
            break;
        }
        if end >= from {
            out.push(end);
        }
        m = m.offset(3);
    }
    out
}

/// Deterministic synthetic firm panel plus matching macro series.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<(DataPanel, MacroSeries)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.n_assets;
    let t_len = config.n_days;
    let j_len = config.n_industries;
    let calendar = weekday_calendar(config.start, t_len);
    let last = *calendar.last().expect("n_days >= 1");

    // Macro: regime chain first, then CPI / PMI / money supply consistent with it.
    let first_month = Month::of(config.start).offset(-MACRO_LEAD_MONTHS);
    let last_month = Month::of(last);
    let n_months = (last_month.0 - first_month.0 + 1) as usize;
    let covered = MACRO_LEAD_MONTHS as usize..n_months;
    let regimes = regime_path(&mut rng, n_months, covered, t_len >= 504);
    let mut cpi = Vec::with_capacity(n_months);
    let mut yoy = 0.02;
    let mut m2 = 100.0;
    let mut m1 = 40.0;
    let mut observations = Vec::with_capacity(n_months);
    for (k, regime) in regimes.iter().enumerate() {
        let level = if k < 12 {
            100.0 * 1.0017f64.powi(k as i32)
        } else {
            if k > 12 {
                let step = 0.001 + rng.random::<f64>() * 0.002;
                let rising = matches!(regime, Regime::Overheating | Regime::Stagflation);
                yoy += if rising { step } else { -step };
            }
            cpi[k - 12] * (1.0 + yoy)
        };
        cpi.push(level);
        let expanding = matches!(regime, Regime::Recovery | Regime::Overheating);
        let gap = 0.5 + rng.random::<f64>() * 2.0;
        let pmi = if expanding { 50.0 + gap } else { 50.0 - gap };
        let g2 = 0.008 + 0.002 * normal(&mut rng);
        let g1 = g2 + 0.005 * normal(&mut rng);
        m2 *= 1.0 + g2;
        m1 *= 1.0 + g1;
        observations.push(MacroObservation {
            month: first_month.offset(k as i32),
            m1,
            m2,
            cpi: level,
            pmi,
        });
    }

    let codes: Vec<String> = (0..j_len).map(|j| format!("IND{j:02}")).collect();
    let classes: Vec<SectorClass> = (0..j_len).map(|j| SectorClass::ALL[j % 4]).collect();
    let width = n.saturating_sub(1).to_string().len().max(3);
    let assets: Vec<Asset> = (0..n)
        .map(|i| Asset {
            id: format!("A{i:0width$}"),
            industry: codes[i % j_len].clone(),
        })
        .collect();

    // Common factors.
    let sd = |annual: f64| annual / YEAR.sqrt();
    let mut factor_log = vec![vec![0.0; t_len]; j_len];
    let mut industry_returns = vec![vec![0.0; t_len]; j_len];
    for t in 1..t_len {
        let market = sd(config.market_vol) * normal(&mut rng);
        let favored = regimes[(Month::of(calendar[t]).0 - first_month.0) as usize].favored();
        for j in 0..j_len {
            let mut mu = config.drift + config.industry_drift.get(j).copied().unwrap_or(0.0);
            if classes[j] == favored {
                mu += config.regime_tilt;
            }
            let x = mu / YEAR + market + sd(config.industry_vol(j)) * normal(&mut rng);
            factor_log[j][t] = x;
            industry_returns[j][t] = x.exp() - 1.0;
        }
    }

    // Planted alpha, one AR(1) path per asset.
    let mut alpha = vec![vec![0.0; t_len]; n];
    if let Some(p) = &config.plant {
        let innov = (1.0 - p.persistence * p.persistence).sqrt();
        for path in alpha.iter_mut() {
            path[0] = normal(&mut rng);
            for t in 1..t_len {
                path[t] = p.persistence * path[t - 1] + innov * normal(&mut rng);
            }
        }
    }
    let plant_scale = config.plant.map_or(0.0, |p| p.snr * sd(config.idio_vol));

    let idio = sd(config.idio_vol);
    let mut sparse = Vec::with_capacity(n);
    for (i, asset) in assets.iter().enumerate() {
        let j = i % j_len;
        let mut close = 20.0 + rng.random::<f64>() * 80.0;
        let mut row = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let mut open = close;
            if t > 0 {
                let x = factor_log[j][t] + idio * normal(&mut rng) + plant_scale * alpha[i][t - 1];
                let gap = 0.25 * idio * normal(&mut rng);
                open = close * gap.exp();
                close *= x.exp();
            }
            let wick_hi = idio * 0.5 * normal(&mut rng).abs();
            let wick_lo = idio * 0.5 * normal(&mut rng).abs();
            let volume = (13.8 + 0.3 * normal(&mut rng)).exp().round();
            let missing = t > 0 && rng.random::<f64>() < config.missing_rate;
            let bar = PriceBar {
                open,
                high: open.max(close) * (1.0 + wick_hi),
                low: open.min(close) * (1.0 - wick_lo).max(0.5),
                close,
                adj_close: close,
                volume,
            };
            row.push((!missing).then_some(bar));
        }
        debug_assert!(row[0].is_some(), "asset {} must trade on day 0", asset.id);
        sparse.push(row);
    }

    // Quarterly fundamentals starting five quarters before the calendar.
    let fund_start = Month::of(config.start).offset(-15).first_day();
    let ends = quarter_ends(fund_start, last);
    let plant_target = config.plant.map(|p| p.target);
    let mut fundamentals = Vec::with_capacity(n);
    for i in 0..n {
        let base_roe = 0.05 + rng.random::<f64>() * 0.15;
        let margin = 0.05 + rng.random::<f64>() * 0.15;
        let leverage = 0.3 + rng.random::<f64>() * 0.4;
        let mut revenue = 100.0 + rng.random::<f64>() * 900.0;
        let mut snaps = Vec::with_capacity(ends.len());
        for &as_of in &ends {
            revenue *= 1.0 + 0.02 + 0.05 * normal(&mut rng);
            revenue = revenue.max(1.0);
            let net_income = revenue * (margin + 0.03 * normal(&mut rng));
            let total_assets = revenue * (2.0 + 0.1 * normal(&mut rng)).max(0.5);
            let total_liabilities = total_assets * (leverage + 0.05 * normal(&mut rng)).clamp(0.0, 0.95);
            let mut roe = base_roe + 0.02 * normal(&mut rng);
            if plant_target == Some(PlantTarget::Fundamental) {
                let day = calendar.partition_point(|d| *d <= as_of).saturating_sub(1);
                roe = base_roe + 0.05 * alpha[i][day];
            }
            snaps.push(FundamentalSnapshot {
                as_of,
                roe,
                net_income,
                revenue,
                total_assets,
                total_liabilities,
                extended: BTreeMap::new(),
            });
        }
        fundamentals.push(snaps);
    }

    // Text records.
    let mut text = Vec::new();
    for t in 0..t_len {
        for (i, asset) in assets.iter().enumerate() {
            let planted_news = plant_target == Some(PlantTarget::News);
            if planted_news {
                text.push(TextSignalRecord {
                    date: calendar[t],
                    asset_id: asset.id.clone(),
                    kind: TextKind::News,
                    payload: TextPayload::Scores(vec![alpha[i][t].tanh()]),
                });
            } else if rng.random::<f64>() < config.news_rate {
                let s = (rng.random::<f64>() * 2.0 - 1.0) * 0.5;
                text.push(TextSignalRecord {
                    date: calendar[t],
                    asset_id: asset.id.clone(),
                    kind: TextKind::News,
                    payload: TextPayload::Scores(vec![s]),
                });
            }
            if plant_target == Some(PlantTarget::Report) {
                if t % 5 == i % 5 {
                    let s = alpha[i][t].tanh();
                    text.push(TextSignalRecord {
                        date: calendar[t],
                        asset_id: asset.id.clone(),
                        kind: TextKind::Report,
                        payload: TextPayload::Scores(vec![s, -s, s, s, s]),
                    });
                }
            } else if rng.random::<f64>() < config.report_rate {
                let scores = (0..5).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * 0.5).collect();
                text.push(TextSignalRecord {
                    date: calendar[t],
                    asset_id: asset.id.clone(),
                    kind: TextKind::Report,
                    payload: TextPayload::Scores(scores),
                });
            }
        }
    }

    let sector_classes = codes.iter().cloned().zip(classes).collect();
    let panel = DataPanel::new(calendar, assets, sparse, fundamentals, text, sector_classes)?;
    let series = MacroSeries::new(observations, codes, industry_returns)?;
    Ok((panel, series))
}

impl Month {
    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year(), self.month(), 1).expect("valid month")
    }
}
