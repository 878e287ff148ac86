//! Top-down industry screening: investment-clock regime, liquidity tilt,
//! multi-horizon industry momentum, and the blended industry filter that
//! yields the reduced stock pool.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Asset, DataPanel, Day, Month, SectorClass};
use crate::error::{Error, Result};

/// Monthly macro observations plus daily industry index returns.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroSeries {
    months: Vec<Month>,
    m1: Vec<f64>,
    m2: Vec<f64>,
    cpi: Vec<f64>,
    pmi: Vec<f64>,
    industries: Vec<String>,
    industry_returns: Vec<Vec<f64>>,
    industry_levels: Vec<Vec<f64>>,
}

/// One monthly macro row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacroObservation {
    pub month: Month,
    pub m1: f64,
    pub m2: f64,
    pub cpi: f64,
    pub pmi: f64,
}

impl MacroSeries {
    /// `industry_returns[j]` is the daily return series of `industries[j]`,
    /// aligned with the panel calendar.
    pub fn new(
        observations: Vec<MacroObservation>,
        industries: Vec<String>,
        industry_returns: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if observations.windows(2).any(|w| w[0].month >= w[1].month) {
            return Err(Error::Alignment("macro months must be strictly increasing".into()));
        }
        for o in &observations {
            if [o.m1, o.m2, o.cpi].iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::Shape(format!("macro levels must be > 0 (month {})", o.month)));
            }
            if !o.pmi.is_finite() {
                return Err(Error::NonFinite(format!("PMI for month {}", o.month)));
            }
        }
        if industries.len() != industry_returns.len() {
            return Err(Error::Shape(format!(
                "{} industries but {} return series",
                industries.len(),
                industry_returns.len()
            )));
        }
        if let Some(first) = industry_returns.first() {
            if industry_returns.iter().any(|r| r.len() != first.len()) {
                return Err(Error::Shape("industry return series differ in length".into()));
            }
        }
        let industry_levels = industry_returns
            .iter()
            .map(|rets| {
                let mut level = 1.0;
                rets.iter()
                    .map(|r| {
                        level *= 1.0 + r;
                        level
                    })
                    .collect()
            })
            .collect();
        Ok(MacroSeries {
            months: observations.iter().map(|o| o.month).collect(),
            m1: observations.iter().map(|o| o.m1).collect(),
            m2: observations.iter().map(|o| o.m2).collect(),
            cpi: observations.iter().map(|o| o.cpi).collect(),
            pmi: observations.iter().map(|o| o.pmi).collect(),
            industries,
            industry_returns,
            industry_levels,
        })
    }

    pub fn months(&self) -> &[Month] {
        &self.months
    }

    pub fn observations(&self) -> Vec<MacroObservation> {
        (0..self.months.len())
            .map(|k| MacroObservation {
                month: self.months[k],
                m1: self.m1[k],
                m2: self.m2[k],
                cpi: self.cpi[k],
                pmi: self.pmi[k],
            })
            .collect()
    }

    pub fn observation(&self, month: Month) -> Option<MacroObservation> {
        let k = self.months.binary_search(&month).ok()?;
        Some(MacroObservation {
            month,
            m1: self.m1[k],
            m2: self.m2[k],
            cpi: self.cpi[k],
            pmi: self.pmi[k],
        })
    }

    pub fn industries(&self) -> &[String] {
        &self.industries
    }

    pub fn industry_position(&self, code: &str) -> Option<usize> {
        self.industries.iter().position(|c| c == code)
    }

    pub fn industry_returns(&self, j: usize) -> &[f64] {
        &self.industry_returns[j]
    }

    /// Index level `P_{j,t}`: cumulative product of `1 + r` through day `t`.
    pub fn industry_level(&self, j: usize, t: Day) -> f64 {
        self.industry_levels[j][t]
    }

    pub fn n_days(&self) -> usize {
        self.industry_returns.first().map_or(0, Vec::len)
    }

    /// Keeps daily industry data for days `0..len` and months up to the month of the last kept day.
    pub fn truncate_days(&self, len: usize, last_month: Month) -> MacroSeries {
        let keep = self.months.partition_point(|m| *m <= last_month);
        MacroSeries {
            months: self.months[..keep].to_vec(),
            m1: self.m1[..keep].to_vec(),
            m2: self.m2[..keep].to_vec(),
            cpi: self.cpi[..keep].to_vec(),
            pmi: self.pmi[..keep].to_vec(),
            industries: self.industries.clone(),
            industry_returns: self.industry_returns.iter().map(|r| r[..len].to_vec()).collect(),
            industry_levels: self.industry_levels.iter().map(|r| r[..len].to_vec()).collect(),
        }
    }

    pub(crate) fn map_industries(&self, rename: impl Fn(&str) -> String) -> MacroSeries {
        let mut order: Vec<(String, usize)> = self
            .industries
            .iter()
            .enumerate()
            .map(|(j, c)| (rename(c), j))
            .collect();
        order.sort();
        MacroSeries {
            industries: order.iter().map(|(c, _)| c.clone()).collect(),
            industry_returns: order.iter().map(|&(_, j)| self.industry_returns[j].clone()).collect(),
            industry_levels: order.iter().map(|&(_, j)| self.industry_levels[j].clone()).collect(),
            ..self.clone()
        }
    }

    fn index_of(&self, month: Month, what: &'static str) -> Result<usize> {
        self.months.binary_search(&month).map_err(|_| Error::Horizon {
            what,
            needed: month.0 as i64,
            available: self.months.first().map_or(i64::MAX, |m| m.0 as i64),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Recovery,
    Overheating,
    Stagflation,
    Recession,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::Recovery,
        Regime::Overheating,
        Regime::Stagflation,
        Regime::Recession,
    ];

    /// Sector class the regime overweights.
    pub fn favored(self) -> SectorClass {
        match self {
            Regime::Recovery => SectorClass::Cyclical,
            Regime::Overheating => SectorClass::Commodity,
            Regime::Stagflation | Regime::Recession => SectorClass::Defensive,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Year-over-year CPI growth for `month`.
pub fn cpi_yoy(series: &MacroSeries, month: Month) -> Result<f64> {
    let now = series.index_of(month, "cpi_yoy")?;
    let then = series.index_of(month.offset(-12), "cpi_yoy")?;
    Ok((series.cpi[now] - series.cpi[then]) / series.cpi[then])
}

/// M1 growth minus M2 growth over the month ending at `month`.
pub fn liquidity_delta(series: &MacroSeries, month: Month) -> Result<f64> {
    let now = series.index_of(month, "liquidity_delta")?;
    let prev = series.index_of(month.offset(-1), "liquidity_delta")?;
    let g1 = (series.m1[now] - series.m1[prev]) / series.m1[prev];
    let g2 = (series.m2[now] - series.m2[prev]) / series.m2[prev];
    Ok(g1 - g2)
}

/// Investment-clock quadrant. An unchanged YoY rate counts as falling and
/// PMI of exactly 50 counts as contraction.
pub fn classify_regime(yoy_now: f64, yoy_prev: f64, pmi: f64) -> Regime {
    let rising = yoy_now > yoy_prev;
    let expanding = pmi > 50.0;
    match (rising, expanding) {
        (false, true) => Regime::Recovery,
        (true, true) => Regime::Overheating,
        (true, false) => Regime::Stagflation,
        (false, false) => Regime::Recession,
    }
}

/// Regime for `month`, needing 13 months of CPI history.
pub fn regime_at(series: &MacroSeries, month: Month) -> Result<Regime> {
    let now = cpi_yoy(series, month)?;
    let prev = cpi_yoy(series, month.offset(-1))?;
    let pmi = series.pmi[series.index_of(month, "pmi")?];
    Ok(classify_regime(now, prev, pmi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    MacroPrior,
    Momentum,
    Blended,
}

/// Non-negative industry weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndustryWeights {
    pub industries: Vec<String>,
    pub weights: Vec<f64>,
    pub kind: WeightKind,
}

impl IndustryWeights {
    pub fn uniform(industries: &[String], kind: WeightKind) -> Self {
        let j = industries.len().max(1) as f64;
        IndustryWeights {
            industries: industries.to_vec(),
            weights: vec![1.0 / j; industries.len()],
            kind,
        }
    }

    pub fn get(&self, code: &str) -> Option<f64> {
        self.industries.iter().position(|c| c == code).map(|j| self.weights[j])
    }

    /// Industry codes of the `m` largest weights, ties broken by code.
    pub fn top(&self, m: usize) -> Vec<String> {
        ranked(&self.weights, &self.industries)
            .into_iter()
            .take(m)
            .map(|j| self.industries[j].clone())
            .collect()
    }
}

/// Indices sorted by descending score, ties by ascending code.
fn ranked(scores: &[f64], codes: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| codes[a].cmp(&codes[b]))
    });
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacroPriorParams {
    /// Multiplier applied to the base weight of favored industries.
    pub boost: f64,
    /// Positive liquidity delta is scaled by this before entering the boost.
    pub liquidity_scale: f64,
    pub liquidity_cap: f64,
}

impl Default for MacroPriorParams {
    fn default() -> Self {
        MacroPriorParams {
            boost: 3.0,
            liquidity_scale: 10.0,
            liquidity_cap: 1.5,
        }
    }
}

/// Regime prior over industries: favored sectors get `boost × liquidity` times
/// the base weight, then everything is normalized.
pub fn macro_prior(
    regime: Regime,
    delta_m: f64,
    catalog: &[(String, SectorClass)],
    params: &MacroPriorParams,
) -> Result<IndustryWeights> {
    if catalog.is_empty() {
        return Err(Error::config("macro prior needs a non-empty industry catalog"));
    }
    let liquidity = (1.0 + delta_m.max(0.0) * params.liquidity_scale).min(params.liquidity_cap);
    let favored = regime.favored();
    let raw: Vec<f64> = catalog
        .iter()
        .map(|(_, class)| if *class == favored { params.boost * liquidity } else { 1.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(IndustryWeights {
        industries: catalog.iter().map(|(c, _)| c.clone()).collect(),
        weights: raw.iter().map(|w| w / total).collect(),
        kind: WeightKind::MacroPrior,
    })
}

/// Weighted multi-horizon return of industry `j` measured at day `t`.
pub fn industry_momentum(
    series: &MacroSeries,
    j: usize,
    t: Day,
    windows: &[usize],
    horizon_weights: &[f64],
) -> Result<f64> {
    if windows.len() != horizon_weights.len() {
        return Err(Error::Shape("one horizon weight per window".into()));
    }
    let longest = windows.iter().copied().max().unwrap_or(0);
    if longest > t {
        return Err(Error::Horizon {
            what: "industry_momentum",
            needed: t as i64 - longest as i64,
            available: 0,
        });
    }
    let now = series.industry_level(j, t);
    Ok(windows
        .iter()
        .zip(horizon_weights)
        .map(|(&n, &w)| {
            let then = series.industry_level(j, t - n);
            w * (now - then) / then
        })
        .sum())
}

/// Equal weight on the `m` highest-scoring industries (ties by code).
pub fn momentum_weights(scores: &[f64], codes: &[String], m: usize) -> IndustryWeights {
    let m = m.clamp(1, codes.len().max(1));
    let mut weights = vec![0.0; codes.len()];
    for j in ranked(scores, codes).into_iter().take(m) {
        weights[j] = 1.0 / m as f64;
    }
    IndustryWeights {
        industries: codes.to_vec(),
        weights,
        kind: WeightKind::Momentum,
    }
}

/// Blends macro and momentum weights and keeps the pool members whose
/// industry ranks in the top `m` of the blend.
pub fn blend_and_filter(
    w_macro: &IndustryWeights,
    w_mom: &IndustryWeights,
    lambda: f64,
    assets: &[Asset],
    pool: &[usize],
    m: usize,
) -> Result<(IndustryWeights, Vec<usize>)> {
    if w_macro.industries != w_mom.industries {
        return Err(Error::Shape("macro and momentum weights cover different industries".into()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::config(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let weights = if lambda == 0.0 {
        w_mom.weights.clone()
    } else if lambda == 1.0 {
        w_macro.weights.clone()
    } else {
        w_macro
            .weights
            .iter()
            .zip(&w_mom.weights)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect()
    };
    let blended = IndustryWeights {
        industries: w_macro.industries.clone(),
        weights,
        kind: WeightKind::Blended,
    };
    let selected = blended.top(m);
    let reduced = pool
        .iter()
        .copied()
        .filter(|&i| selected.iter().any(|c| *c == assets[i].industry))
        .collect();
    Ok((blended, reduced))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacroParams {
    /// Weight on the macro prior in the blend; momentum gets `1 - lambda`.
    pub lambda: f64,
    /// Number of industries kept in the reduced pool.
    pub top_m: usize,
    /// Momentum look-back windows in trading days.
    pub windows: Vec<usize>,
    /// Horizon weights; empty means uniform.
    pub horizon_weights: Vec<f64>,
    /// Months between a macro observation and its first use.
    pub publication_lag: i32,
    #[serde(flatten)]
    pub prior: MacroPriorParams,
}

impl Default for MacroParams {
    fn default() -> Self {
        MacroParams {
            lambda: 0.25,
            top_m: 5,
            windows: vec![21, 63, 126],
            horizon_weights: Vec::new(),
            publication_lag: 1,
            prior: MacroPriorParams::default(),
        }
    }
}

impl MacroParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!("macro.lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.top_m == 0 {
            return Err(Error::config("macro.top_m must be >= 1"));
        }
        if self.windows.is_empty() || self.windows.contains(&0) {
            return Err(Error::config("macro.windows must be a non-empty list of positive lengths"));
        }
        if !self.horizon_weights.is_empty() {
            if self.horizon_weights.len() != self.windows.len() {
                return Err(Error::config("macro.horizon_weights needs one weight per window"));
            }
            let total: f64 = self.horizon_weights.iter().sum();
            if (total - 1.0).abs() > 1e-9 || self.horizon_weights.iter().any(|w| *w < 0.0) {
                return Err(Error::config("macro.horizon_weights must be non-negative and sum to 1"));
            }
        }
        if self.publication_lag < 0 {
            return Err(Error::config("macro.publication_lag must be >= 0"));
        }
        Ok(())
    }

    pub fn resolved_horizon_weights(&self) -> Vec<f64> {
        if self.horizon_weights.is_empty() {
            vec![1.0 / self.windows.len() as f64; self.windows.len()]
        } else {
            self.horizon_weights.clone()
        }
    }
}

/// Industry decision in force from `day` until the next refresh.
#[derive(Clone, Debug, PartialEq)]
pub struct MonthlyDecision {
    pub day: Day,
    pub regime: Option<Regime>,
    pub w_macro: IndustryWeights,
    pub w_mom: IndustryWeights,
    pub w_blended: IndustryWeights,
    pub selected: Vec<String>,
    /// Assets of the reduced pool, as panel indices.
    pub pool: Vec<usize>,
}

/// Month-start industry decisions for every day of a panel.
#[derive(Clone, Debug)]
pub struct MacroSchedule {
    decisions: Vec<MonthlyDecision>,
}

impl MacroSchedule {
    /// Refreshes on day 1 and on the first trading day of every month, using
    /// macro data `publication_lag` months old and industry levels up to the previous day.
    pub fn build(panel: &DataPanel, series: &MacroSeries, params: &MacroParams) -> Result<Self> {
        params.validate()?;
        let industries = series.industries().to_vec();
        for a in panel.assets() {
            if series.industry_position(&a.industry).is_none() {
                return Err(Error::Alignment(format!(
                    "industry `{}` of asset `{}` has no index returns",
                    a.industry, a.id
                )));
            }
        }
        if series.n_days() != panel.n_days() {
            return Err(Error::Alignment(format!(
                "industry returns cover {} days, panel has {}",
                series.n_days(),
                panel.n_days()
            )));
        }
        let catalog: Vec<(String, SectorClass)> = industries
            .iter()
            .map(|c| (c.clone(), panel.sector_classes().get(c).copied().unwrap_or_default()))
            .collect();
        let horizon_weights = params.resolved_horizon_weights();
        let universe: Vec<usize> = (0..panel.n_assets()).collect();

        let mut decisions = Vec::new();
        for t in 1..panel.n_days() {
            let month = Month::of(panel.date(t));
            if t != 1 && month == Month::of(panel.date(t - 1)) {
                continue;
            }
            let info_month = month.offset(-params.publication_lag);
            let regime = regime_at(series, info_month).ok();
            let w_macro = match regime {
                Some(r) => {
                    let delta = liquidity_delta(series, info_month).unwrap_or(0.0);
                    macro_prior(r, delta, &catalog, &params.prior)?
                }
                None => IndustryWeights::uniform(&industries, WeightKind::MacroPrior),
            };
            let scores: Result<Vec<f64>> = (0..industries.len())
                .map(|j| industry_momentum(series, j, t - 1, &params.windows, &horizon_weights))
                .collect();
            let w_mom = match scores {
                Ok(s) => momentum_weights(&s, &industries, params.top_m),
                Err(_) => IndustryWeights::uniform(&industries, WeightKind::Momentum),
            };
            let (w_blended, pool) = blend_and_filter(
                &w_macro,
                &w_mom,
                params.lambda,
                panel.assets(),
                &universe,
                params.top_m,
            )?;
            let selected = w_blended.top(params.top_m);
            decisions.push(MonthlyDecision {
                day: t,
                regime,
                w_macro,
                w_mom,
                w_blended,
                selected,
                pool,
            });
        }
        Ok(MacroSchedule { decisions })
    }

    /// Decision in force on day `t` (`t >= 1`).
    pub fn decision(&self, t: Day) -> &MonthlyDecision {
        let k = self.decisions.partition_point(|d| d.day <= t);
        &self.decisions[k.saturating_sub(1)]
    }

    pub fn decisions(&self) -> &[MonthlyDecision] {
        &self.decisions
    }

    /// Writes `date,industry_code,w_macro,w_mom,w_blended,selected` rows.
    pub fn write_csv<W: Write>(&self, panel: &DataPanel, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "industry_code", "w_macro", "w_mom", "w_blended", "selected"])?;
        for d in &self.decisions {
            let selected: BTreeMap<&str, ()> = d.selected.iter().map(|s| (s.as_str(), ())).collect();
            for (j, code) in d.w_blended.industries.iter().enumerate() {
                w.write_record([
                    panel.date(d.day).to_string(),
                    code.clone(),
                    d.w_macro.weights[j].to_string(),
                    d.w_mom.weights[j].to_string(),
                    d.w_blended.weights[j].to_string(),
                    u8::from(selected.contains_key(code.as_str())).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn codes(n: usize) -> Vec<String> {
        (0..n).map(|j| format!("I{j}")).collect()
    }

    fn series_with_levels(levels: &[Vec<f64>]) -> MacroSeries {
        let returns = levels
            .iter()
            .map(|l| {
                let mut r = vec![l[0] - 1.0];
                r.extend(l.windows(2).map(|w| w[1] / w[0] - 1.0));
                r
            })
            .collect();
        MacroSeries::new(vec![], codes(levels.len()), returns).unwrap()
    }

    fn monthly(cpi: &[f64], m1: &[f64], m2: &[f64], pmi: &[f64]) -> MacroSeries {
        let obs = (0..cpi.len())
            .map(|k| MacroObservation {
                month: Month::new(2020, 1).offset(k as i32),
                m1: m1[k],
                m2: m2[k],
                cpi: cpi[k],
                pmi: pmi[k],
            })
            .collect();
        MacroSeries::new(obs, vec![], vec![]).unwrap()
    }

    #[test]
    fn cpi_yoy_examples() {
        let mut cpi = vec![100.0; 13];
        cpi[12] = 103.0;
        let s = monthly(&cpi, &[1.0; 13], &[1.0; 13], &[50.0; 13]);
        let m = Month::new(2021, 1);
        assert!((cpi_yoy(&s, m).unwrap() - 0.03).abs() < 1e-15);
        assert_eq!(cpi_yoy(&s, Month::new(2020, 12)).unwrap_err().to_string().contains("cpi_yoy"), true);

        let flat = monthly(&[100.0; 13], &[1.0; 13], &[1.0; 13], &[50.0; 13]);
        assert_eq!(cpi_yoy(&flat, m).unwrap(), 0.0);
    }

    #[test]
    fn liquidity_delta_examples() {
        let s = monthly(&[1.0, 1.0], &[100.0, 102.0], &[200.0, 202.0], &[50.0, 50.0]);
        assert!((liquidity_delta(&s, Month::new(2020, 2)).unwrap() - 0.01).abs() < 1e-15);
        let eq = monthly(&[1.0, 1.0], &[100.0, 103.0], &[200.0, 206.0], &[50.0, 50.0]);
        assert!(liquidity_delta(&eq, Month::new(2020, 2)).unwrap().abs() < 1e-15);
        assert!(liquidity_delta(&s, Month::new(2020, 1)).is_err());
    }

    #[test]
    fn regime_table() {
        assert_eq!(classify_regime(0.015, 0.020, 52.0), Regime::Recovery);
        assert_eq!(classify_regime(0.020, 0.015, 49.0), Regime::Stagflation);
        assert_eq!(classify_regime(0.020, 0.015, 51.0), Regime::Overheating);
        assert_eq!(classify_regime(0.015, 0.020, 48.0), Regime::Recession);
        assert_eq!(classify_regime(0.02, 0.02, 50.0), Regime::Recession);
        assert_eq!(classify_regime(0.02, 0.02, 50.5), Regime::Recovery);
        assert_eq!(classify_regime(0.03, 0.02, 50.0), Regime::Stagflation);
    }

    #[test]
    fn macro_prior_recovery_example() {
        let catalog = vec![
            ("C1".to_string(), SectorClass::Cyclical),
            ("C2".to_string(), SectorClass::Cyclical),
            ("D1".to_string(), SectorClass::Defensive),
            ("D2".to_string(), SectorClass::Defensive),
        ];
        let w = macro_prior(Regime::Recovery, 0.0, &catalog, &MacroPriorParams::default()).unwrap();
        let expected = [0.375, 0.375, 0.125, 0.125];
        for (a, b) in w.weights.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn macro_prior_liquidity_tilt_is_capped() {
        let catalog = vec![
            ("C".to_string(), SectorClass::Cyclical),
            ("D".to_string(), SectorClass::Defensive),
        ];
        let p = MacroPriorParams::default();
        let w = macro_prior(Regime::Recovery, 0.02, &catalog, &p).unwrap();
        // 1 + 0.02 * 10 = 1.2 -> favored raw weight 3.6.
        assert!((w.weights[0] - 3.6 / 4.6).abs() < 1e-15);
        let w = macro_prior(Regime::Recovery, 0.5, &catalog, &p).unwrap();
        assert!((w.weights[0] - 4.5 / 5.5).abs() < 1e-15);
        let w = macro_prior(Regime::Recovery, -0.5, &catalog, &p).unwrap();
        assert!((w.weights[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn macro_prior_same_class_is_uniform() {
        let catalog: Vec<_> = codes(5).into_iter().map(|c| (c, SectorClass::Defensive)).collect();
        let w = macro_prior(Regime::Recession, 0.0, &catalog, &MacroPriorParams::default()).unwrap();
        assert!(w.weights.iter().all(|x| (x - 0.2).abs() < 1e-15));
        assert!(macro_prior(Regime::Recession, 0.0, &[], &MacroPriorParams::default()).is_err());
    }

    #[test]
    fn momentum_examples() {
        let s = series_with_levels(&[vec![100.0, 110.0]]);
        assert!((industry_momentum(&s, 0, 1, &[1], &[1.0]).unwrap() - 0.10).abs() < 1e-12);

        let flat = series_with_levels(&[vec![1.0; 10]]);
        assert_eq!(industry_momentum(&flat, 0, 9, &[2, 4, 8], &[0.2, 0.3, 0.5]).unwrap(), 0.0);
        assert!(industry_momentum(&flat, 0, 3, &[4], &[1.0]).is_err());

        // Hand-built 5-day series, windows {2,4} equally weighted.
        let levels = [1.0, 1.1, 0.9, 1.2, 1.3];
        let s = series_with_levels(&[levels.to_vec()]);
        let oracle = 0.5 * (1.3 - 0.9) / 0.9 + 0.5 * (1.3 - 1.0) / 1.0;
        assert!((industry_momentum(&s, 0, 4, &[2, 4], &[0.5, 0.5]).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn momentum_weight_examples() {
        let c = codes(3);
        assert_eq!(momentum_weights(&[0.3, 0.1, 0.2], &c, 2).weights, vec![0.5, 0.0, 0.5]);
        let all = momentum_weights(&[0.3, 0.1, 0.2], &c, 3).weights;
        assert!(all.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(momentum_weights(&[0.2, 0.2, 0.1], &c, 1).weights, vec![1.0, 0.0, 0.0]);
        let rev = vec!["B".to_string(), "A".to_string(), "C".to_string()];
        assert_eq!(momentum_weights(&[0.2, 0.2, 0.1], &rev, 1).weights, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn blend_boundaries() {
        let c = codes(3);
        let w_macro = IndustryWeights {
            industries: c.clone(),
            weights: vec![0.2, 0.3, 0.5],
            kind: WeightKind::MacroPrior,
        };
        let w_mom = momentum_weights(&[0.3, 0.1, 0.2], &c, 2);
        let assets: Vec<Asset> = (0..6)
            .map(|i| Asset { id: format!("A{i}"), industry: c[i % 3].clone() })
            .collect();
        let pool: Vec<usize> = (0..6).collect();
        let (b0, _) = blend_and_filter(&w_macro, &w_mom, 0.0, &assets, &pool, 2).unwrap();
        assert_eq!(b0.weights, w_mom.weights);
        let (b1, _) = blend_and_filter(&w_macro, &w_mom, 1.0, &assets, &pool, 2).unwrap();
        assert_eq!(b1.weights, w_macro.weights);
        let (b, reduced) = blend_and_filter(&w_macro, &w_mom, 0.25, &assets, &pool, 1).unwrap();
        assert!((b.weights[0] - (0.05 + 0.375)).abs() < 1e-15);
        assert_eq!(reduced, vec![2, 5]);
        assert_eq!(MacroParams::default().lambda, 0.25);
    }

    proptest! {
        #[test]
        fn momentum_matches_brute_force(
            levels in prop::collection::vec(prop::collection::vec(0.5f64..2.0, 20), 1..=4),
            t in 8usize..20,
            w in 0.0f64..1.0,
        ) {
            let s = series_with_levels(&levels);
            let windows = [3usize, 8];
            let hw = [w, 1.0 - w];
            for (j, l) in levels.iter().enumerate() {
                let brute = hw[0] * (l[t] - l[t - 3]) / l[t - 3] + hw[1] * (l[t] - l[t - 8]) / l[t - 8];
                let got = industry_momentum(&s, j, t, &windows, &hw).unwrap();
                prop_assert!((got - brute).abs() <= 1e-12 * (1.0 + brute.abs()));
            }
        }

        #[test]
        fn weights_stay_on_simplex(
            classes in prop::collection::vec(0usize..4, 1..12),
            regime in 0usize..4,
            delta in -0.05f64..0.05,
            lambda in 0.0f64..=1.0,
            scores in prop::collection::vec(-1.0f64..1.0, 12),
            m in 1usize..12,
        ) {
            let catalog: Vec<(String, SectorClass)> = classes
                .iter()
                .enumerate()
                .map(|(j, &c)| (format!("I{j:02}"), SectorClass::ALL[c]))
                .collect();
            let c: Vec<String> = catalog.iter().map(|(c, _)| c.clone()).collect();
            let w_macro = macro_prior(Regime::ALL[regime], delta, &catalog, &MacroPriorParams::default()).unwrap();
            let w_mom = momentum_weights(&scores[..c.len()], &c, m);
            let (b, _) = blend_and_filter(&w_macro, &w_mom, lambda, &[], &[], m).unwrap();
            for w in [&w_macro, &w_mom, &b] {
                prop_assert!(w.weights.iter().all(|x| *x >= 0.0));
                prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn reduced_pool_is_monotone_in_m(
            scores in prop::collection::vec(-1.0f64..1.0, 6),
            members in prop::collection::vec(0usize..6, 1..30),
            lambda in 0.0f64..=1.0,
        ) {
            let c = codes(6);
            let catalog: Vec<_> = c.iter().map(|x| (x.clone(), SectorClass::Other)).collect();
            let w_macro = macro_prior(Regime::Recovery, 0.0, &catalog, &MacroPriorParams::default()).unwrap();
            let assets: Vec<Asset> = members
                .iter()
                .enumerate()
                .map(|(i, &j)| Asset { id: format!("A{i}"), industry: c[j].clone() })
                .collect();
            let pool: Vec<usize> = (0..assets.len()).collect();
            let mut prev: Vec<usize> = Vec::new();
            for m in 1..=6 {
                let w_mom_fixed = momentum_weights(&scores, &c, 3);
                let (_, small) = blend_and_filter(&w_macro, &w_mom_fixed, lambda, &assets, &pool, m).unwrap();
                prop_assert!(prev.iter().all(|i| small.contains(i)));
                prev = small;
            }
        }
    }
}
