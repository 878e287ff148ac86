//! Market data: price grids, fundamentals, text signals and the macro series.
//!
//! A [`DataPanel`] is immutable once built. Trading days are addressed by their
//! ordinal in the calendar (`Day`), assets by their position in
//! [`DataPanel::assets`].

mod csv_io;
mod obfuscate;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{
    load_macro, load_panel, write_fundamentals_csv, write_industry_map_csv,
    write_industry_returns_csv, write_macro_csv, write_prices_csv, write_text_csv, PanelPaths,
};
pub use obfuscate::{obfuscate, obfuscate_macro, pseudonym};
pub use synth::{generate_synthetic, Plant, PlantTarget, SynthConfig};

pub use crate::macro_agent::MacroSeries;

/// Trading-day ordinal: index into [`DataPanel::calendar`].
pub type Day = usize;

/// Calendar month as a single ordinal (`year * 12 + month0`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Month(pub i32);

impl Month {
    pub fn new(year: i32, month: u32) -> Self {
        Month(year * 12 + month as i32 - 1)
    }

    pub fn of(date: NaiveDate) -> Self {
        Month::new(date.year(), date.month())
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    pub fn month(self) -> u32 {
        self.0.rem_euclid(12) as u32 + 1
    }

    pub fn offset(self, months: i32) -> Self {
        Month(self.0 + months)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl FromStr for Month {
    type Err = String;

    /// Accepts `YYYY-MM` or a full ISO date (the day is ignored).
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let mut parts = s.split('-');
        let (Some(y), Some(m)) = (parts.next(), parts.next()) else {
            return Err(format!("`{s}` is not an ISO-8601 month"));
        };
        let year: i32 = y.parse().map_err(|_| format!("bad year in `{s}`"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month in `{s}`"))?;
        if !(1..=12).contains(&month) {
            return Err(format!("month out of range in `{s}`"));
        }
        if let Some(d) = parts.next() {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|_| format!("bad day `{d}` in `{s}`"))?;
        }
        Ok(Month::new(year, month))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: f64,
}

impl PriceBar {
    /// A bar where every price equals `price` (used for forward-filled gaps).
    pub fn flat(price: f64, adj_close: f64) -> Self {
        PriceBar {
            open: price,
            high: price,
            low: price,
            close: price,
            adj_close,
            volume: 0.0,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close, self.adj_close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err("prices must be finite and > 0".into());
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Err("volume must be finite and >= 0".into());
        }
        if self.high < self.low {
            return Err(format!("high {} < low {}", self.high, self.low));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("low {} above min(open, close)", self.low));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!("high {} below max(open, close)", self.high));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FundamentalSnapshot {
    pub as_of: NaiveDate,
    pub roe: f64,
    pub net_income: f64,
    pub revenue: f64,
    pub total_assets: f64,
    pub total_liabilities: f64,
    /// Optional extra statement fields, keyed by snake_case column name.
    #[serde(default)]
    pub extended: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextKind {
    News,
    Report,
}

impl TextKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TextKind::News => "news",
            TextKind::Report => "report",
        }
    }
}

impl FromStr for TextKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "news" => Ok(TextKind::News),
            "report" => Ok(TextKind::Report),
            other => Err(format!("unknown text kind `{other}` (expected news or report)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TextPayload {
    /// Pre-scored sub-scores: one value for news, one or five for reports.
    Scores(Vec<f64>),
    /// Raw text for a text-analysing provider.
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextSignalRecord {
    pub date: NaiveDate,
    pub asset_id: String,
    pub kind: TextKind,
    pub payload: TextPayload,
}

/// Coarse sector grouping used by the macro prior.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectorClass {
    Cyclical,
    Commodity,
    Defensive,
    #[default]
    Other,
}

impl SectorClass {
    pub const ALL: [SectorClass; 4] = [
        SectorClass::Cyclical,
        SectorClass::Commodity,
        SectorClass::Defensive,
        SectorClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SectorClass::Cyclical => "cyclical",
            SectorClass::Commodity => "commodity",
            SectorClass::Defensive => "defensive",
            SectorClass::Other => "other",
        }
    }
}

impl FromStr for SectorClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cyclical" => Ok(SectorClass::Cyclical),
            "commodity" => Ok(SectorClass::Commodity),
            "defensive" => Ok(SectorClass::Defensive),
            "other" | "" => Ok(SectorClass::Other),
            other => Err(format!("unknown sector class `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asset {
    pub id: String,
    pub industry: String,
}

/// Calendar-aligned firm-level data.
///
/// Bars are stored as a dense `assets × days` grid. Days on which an asset
/// did not trade carry a forward-filled flat bar and are marked unobserved;
/// their return is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DataPanel {
    calendar: Vec<NaiveDate>,
    assets: Vec<Asset>,
    bars: Vec<Vec<PriceBar>>,
    observed: Vec<Vec<bool>>,
    returns: Vec<Vec<f64>>,
    fundamentals: Vec<Vec<FundamentalSnapshot>>,
    text: Vec<TextSignalRecord>,
    sector_classes: BTreeMap<String, SectorClass>,
    index: HashMap<String, usize>,
}

impl DataPanel {
    /// Builds a panel from sparse per-asset bars (`None` = no trade that day).
    pub fn new(
        calendar: Vec<NaiveDate>,
        assets: Vec<Asset>,
        sparse_bars: Vec<Vec<Option<PriceBar>>>,
        mut fundamentals: Vec<Vec<FundamentalSnapshot>>,
        mut text: Vec<TextSignalRecord>,
        sector_classes: BTreeMap<String, SectorClass>,
    ) -> Result<Self> {
        if calendar.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Alignment("calendar must be strictly increasing".into()));
        }
        let n = assets.len();
        if sparse_bars.len() != n {
            return Err(Error::Shape(format!("{} bar rows for {n} assets", sparse_bars.len())));
        }
        if fundamentals.is_empty() {
            fundamentals = vec![Vec::new(); n];
        }
        if fundamentals.len() != n {
            return Err(Error::Shape(format!(
                "{} fundamental lists for {n} assets",
                fundamentals.len()
            )));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, a) in assets.iter().enumerate() {
            if a.industry.is_empty() {
                return Err(Error::MissingIndustry(vec![a.id.clone()]));
            }
            if index.insert(a.id.clone(), i).is_some() {
                return Err(Error::Shape(format!("duplicate asset id `{}`", a.id)));
            }
        }

        let t_len = calendar.len();
        let mut bars = Vec::with_capacity(n);
        let mut observed = Vec::with_capacity(n);
        let mut returns = Vec::with_capacity(n);
        for (asset, row) in assets.iter().zip(sparse_bars) {
            if row.len() != t_len {
                return Err(Error::Shape(format!(
                    "asset `{}` has {} bars for a {t_len}-day calendar",
                    asset.id,
                    row.len()
                )));
            }
            let Some(first) = row.iter().flatten().next().copied() else {
                return Err(Error::Shape(format!("asset `{}` has no observed bars", asset.id)));
            };
            let mut filled = Vec::with_capacity(t_len);
            let mut mask = Vec::with_capacity(t_len);
            let mut last = PriceBar::flat(first.close, first.adj_close);
            for bar in row {
                match bar {
                    Some(b) => {
                        b.validate().map_err(|e| {
                            Error::Shape(format!("asset `{}`: invalid bar: {e}", asset.id))
                        })?;
                        last = PriceBar::flat(b.close, b.adj_close);
                        filled.push(b);
                        mask.push(true);
                    }
                    None => {
                        filled.push(last);
                        mask.push(false);
                    }
                }
            }
            let mut rets = vec![0.0; t_len];
            for t in 1..t_len {
                if mask[t] {
                    rets[t] = filled[t].adj_close / filled[t - 1].adj_close - 1.0;
                }
            }
            bars.push(filled);
            observed.push(mask);
            returns.push(rets);
        }

        for (asset, snaps) in assets.iter().zip(fundamentals.iter_mut()) {
            snaps.sort_by_key(|s| s.as_of);
            if snaps.windows(2).any(|w| w[0].as_of == w[1].as_of) {
                return Err(Error::Shape(format!(
                    "asset `{}` has two fundamental snapshots on the same date",
                    asset.id
                )));
            }
            if let Some(s) = snaps.iter().find(|s| s.total_assets < 0.0) {
                return Err(Error::Shape(format!(
                    "asset `{}`: negative total_assets on {}",
                    asset.id, s.as_of
                )));
            }
        }

        text.retain(|r| index.contains_key(&r.asset_id));
        text.sort_by(|a, b| {
            (a.date, &a.asset_id, a.kind).cmp(&(b.date, &b.asset_id, b.kind))
        });

        let industries: BTreeSet<&str> = assets.iter().map(|a| a.industry.as_str()).collect();
        let sector_classes = industries
            .into_iter()
            .map(|j| (j.to_string(), sector_classes.get(j).copied().unwrap_or_default()))
            .collect();

        Ok(DataPanel {
            calendar,
            assets,
            bars,
            observed,
            returns,
            fundamentals,
            text,
            sector_classes,
            index,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_days(&self) -> usize {
        self.calendar.len()
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn date(&self, t: Day) -> NaiveDate {
        self.calendar[t]
    }

    pub fn assets(&self) -> &[Asset] {
        &self.assets
    }

    pub fn asset_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn bar(&self, asset: usize, t: Day) -> &PriceBar {
        &self.bars[asset][t]
    }

    pub fn bars(&self, asset: usize) -> &[PriceBar] {
        &self.bars[asset]
    }

    pub fn is_observed(&self, asset: usize, t: Day) -> bool {
        self.observed[asset][t]
    }

    /// Close-to-close return of day `t` from adjusted closes; zero on unobserved days.
    pub fn asset_return(&self, asset: usize, t: Day) -> f64 {
        self.returns[asset][t]
    }

    pub fn asset_returns(&self, asset: usize) -> &[f64] {
        &self.returns[asset]
    }

    pub fn closes(&self, asset: usize) -> Vec<f64> {
        self.bars[asset].iter().map(|b| b.close).collect()
    }

    pub fn highs(&self, asset: usize) -> Vec<f64> {
        self.bars[asset].iter().map(|b| b.high).collect()
    }

    pub fn lows(&self, asset: usize) -> Vec<f64> {
        self.bars[asset].iter().map(|b| b.low).collect()
    }

    pub fn fundamentals(&self, asset: usize) -> &[FundamentalSnapshot] {
        &self.fundamentals[asset]
    }

    /// Snapshots usable when deciding with information up to and including
    /// `info_day`: a snapshot becomes visible the day after its `as_of` date.
    pub fn visible_fundamentals(&self, asset: usize, info_day: Day) -> &[FundamentalSnapshot] {
        let cutoff = self.calendar[info_day];
        let snaps = &self.fundamentals[asset];
        let end = snaps.partition_point(|s| s.as_of < cutoff);
        &snaps[..end]
    }

    /// All text records, sorted by (date, asset, kind).
    pub fn text(&self) -> &[TextSignalRecord] {
        &self.text
    }

    /// Sorted, de-duplicated industry codes present in the panel.
    pub fn industries(&self) -> Vec<String> {
        self.sector_classes.keys().cloned().collect()
    }

    pub fn sector_classes(&self) -> &BTreeMap<String, SectorClass> {
        &self.sector_classes
    }

    /// Equal-weighted mean return of the observed assets on each day (the benchmark series).
    pub fn benchmark_returns(&self) -> Vec<f64> {
        (0..self.n_days())
            .map(|t| {
                let (sum, count) = (0..self.n_assets())
                    .filter(|&i| self.observed[i][t])
                    .fold((0.0, 0usize), |(s, c), i| (s + self.returns[i][t], c + 1));
                if count == 0 {
                    0.0
                } else {
                    sum / count as f64
                }
            })
            .collect()
    }

    /// First day whose date is on or after `date`.
    pub fn day_on_or_after(&self, date: NaiveDate) -> Day {
        self.calendar.partition_point(|d| *d < date)
    }

    /// A copy of the panel restricted to days `0..=last`.
    pub fn truncate(&self, last: Day) -> DataPanel {
        let len = (last + 1).min(self.n_days());
        let cutoff = self.calendar[len - 1];
        DataPanel {
            calendar: self.calendar[..len].to_vec(),
            assets: self.assets.clone(),
            bars: self.bars.iter().map(|b| b[..len].to_vec()).collect(),
            observed: self.observed.iter().map(|b| b[..len].to_vec()).collect(),
            returns: self.returns.iter().map(|b| b[..len].to_vec()).collect(),
            fundamentals: self
                .fundamentals
                .iter()
                .map(|f| f.iter().filter(|s| s.as_of <= cutoff).cloned().collect())
                .collect(),
            text: self.text.iter().filter(|r| r.date <= cutoff).cloned().collect(),
            sector_classes: self.sector_classes.clone(),
            index: self.index.clone(),
        }
    }

    /// Returns a copy with identifiers rewritten through `rename_asset` and `rename_industry`.
    pub(crate) fn map_identifiers(
        &self,
        rename_asset: impl Fn(&str) -> String,
        rename_industry: impl Fn(&str) -> String,
    ) -> DataPanel {
        let assets: Vec<Asset> = self
            .assets
            .iter()
            .map(|a| Asset {
                id: rename_asset(&a.id),
                industry: rename_industry(&a.industry),
            })
            .collect();
        let index = assets.iter().enumerate().map(|(i, a)| (a.id.clone(), i)).collect();
        let mut text: Vec<TextSignalRecord> = self
            .text
            .iter()
            .map(|r| TextSignalRecord {
                asset_id: rename_asset(&r.asset_id),
                ..r.clone()
            })
            .collect();
        text.sort_by(|a, b| {
            (a.date, &a.asset_id, a.kind).cmp(&(b.date, &b.asset_id, b.kind))
        });
        DataPanel {
            calendar: self.calendar.clone(),
            assets,
            bars: self.bars.clone(),
            observed: self.observed.clone(),
            returns: self.returns.clone(),
            fundamentals: self.fundamentals.clone(),
            text,
            sector_classes: self
                .sector_classes
                .iter()
                .map(|(k, v)| (rename_industry(k), *v))
                .collect(),
            index,
        }
    }

    /// Sparse view of the bar grid (`None` on unobserved days), as accepted by [`DataPanel::new`].
    pub fn sparse_bars(&self) -> Vec<Vec<Option<PriceBar>>> {
        self.bars
            .iter()
            .zip(&self.observed)
            .map(|(b, m)| b.iter().zip(m).map(|(bar, &o)| o.then_some(*bar)).collect())
            .collect()
    }
}
