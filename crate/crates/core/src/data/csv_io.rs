use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{
    Asset, DataPanel, FundamentalSnapshot, Month, PriceBar, SectorClass, TextKind, TextPayload,
    TextSignalRecord,
};
use crate::error::{Error, Result};
use crate::macro_agent::{MacroObservation, MacroSeries};

/// Input files for [`load_panel`]. Several price files are concatenated.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelPaths {
    pub prices: Vec<PathBuf>,
    #[serde(default)]
    pub fundamentals: Option<PathBuf>,
    pub industry_map: PathBuf,
    #[serde(default)]
    pub text: Option<PathBuf>,
    pub macro_csv: PathBuf,
    pub industry_returns: PathBuf,
}

/// Header-indexed view of one CSV file that produces row/column diagnostics.
struct Table {
    file: PathBuf,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn open(path: &Path, required: &[&str]) -> Result<Table> {
        let file = File::open(path)?;
        Table::from_reader(path, file, required)
    }

    fn from_reader<R: Read>(path: &Path, rdr: R, required: &[&str]) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rdr);
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        for col in required {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::Schema {
                    file: path.to_path_buf(),
                    line: 1,
                    column: col.to_string(),
                    message: "required column missing from header".into(),
                });
            }
        }
        let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Table {
            file: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn line(row: &csv::StringRecord) -> u64 {
        row.position().map_or(0, |p| p.line())
    }

    fn error(&self, row: &csv::StringRecord, column: &str, message: impl Into<String>) -> Error {
        Error::Schema {
            file: self.file.clone(),
            line: Table::line(row),
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn str<'a>(&self, row: &'a csv::StringRecord, column: &str) -> Result<&'a str> {
        let idx = self.col(column).expect("required column checked at open");
        match row.get(idx) {
            Some(s) if !s.is_empty() => Ok(s),
            _ => Err(self.error(row, column, "empty value")),
        }
    }

    fn parse<T: FromStr>(&self, row: &csv::StringRecord, column: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.str(row, column)?;
        raw.parse::<T>()
            .map_err(|e| self.error(row, column, format!("cannot parse `{raw}`: {e}")))
    }

    fn number(&self, row: &csv::StringRecord, column: &str) -> Result<f64> {
        let v: f64 = self.parse(row, column)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.error(row, column, "value must be finite"))
        }
    }

    fn date(&self, row: &csv::StringRecord, column: &str) -> Result<NaiveDate> {
        let raw = self.str(row, column)?;
        NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map_err(|e| self.error(row, column, format!("`{raw}` is not an ISO-8601 date: {e}")))
    }
}

/// Loads and aligns firm-level data. The calendar is the sorted union of all price dates.
pub fn load_panel(paths: &PanelPaths) -> Result<DataPanel> {
    let mut by_asset: BTreeMap<String, BTreeMap<NaiveDate, PriceBar>> = BTreeMap::new();
    for path in &paths.prices {
        let table = Table::open(
            path,
            &["asset_id", "date", "open", "high", "low", "close", "adj_close", "volume"],
        )?;
        for row in &table.rows {
            let asset = table.str(row, "asset_id")?.to_string();
            let date = table.date(row, "date")?;
            let bar = PriceBar {
                open: table.number(row, "open")?,
                high: table.number(row, "high")?,
                low: table.number(row, "low")?,
                close: table.number(row, "close")?,
                adj_close: table.number(row, "adj_close")?,
                volume: table.number(row, "volume")?,
            };
            if let Err(msg) = bar.validate() {
                let column = if msg.starts_with("volume") { "volume" } else { "high" };
                return Err(table.error(row, column, msg));
            }
            if by_asset.entry(asset.clone()).or_default().insert(date, bar).is_some() {
                return Err(Error::DuplicateRow {
                    file: path.clone(),
                    line: Table::line(row),
                    asset,
                    date: date.to_string(),
                });
            }
        }
    }

    let map = Table::open(&paths.industry_map, &["asset_id", "industry_code"])?;
    let has_class = map.col("sector_class").is_some();
    let mut industry_of: HashMap<String, String> = HashMap::new();
    let mut sector_classes: BTreeMap<String, SectorClass> = BTreeMap::new();
    for row in &map.rows {
        let asset = map.str(row, "asset_id")?.to_string();
        let industry = map.str(row, "industry_code")?.to_string();
        if has_class {
            let raw = row.get(map.col("sector_class").unwrap()).unwrap_or("");
            let class: SectorClass = raw.parse().map_err(|e: String| map.error(row, "sector_class", e))?;
            if let Some(prev) = sector_classes.insert(industry.clone(), class) {
                if prev != class {
                    return Err(map.error(row, "sector_class", format!(
                        "industry `{industry}` already classed as {}",
                        prev.as_str()
                    )));
                }
            }
        }
        if let Some(prev) = industry_of.insert(asset.clone(), industry.clone()) {
            if prev != industry {
                return Err(map.error(row, "industry_code", format!(
                    "asset `{asset}` already mapped to `{prev}`"
                )));
            }
        }
    }
    let missing: Vec<String> = by_asset
        .keys()
        .filter(|a| !industry_of.contains_key(*a))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIndustry(missing));
    }

    let calendar: Vec<NaiveDate> = by_asset
        .values()
        .flat_map(|m| m.keys().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let assets: Vec<Asset> = by_asset
        .keys()
        .map(|id| Asset {
            id: id.clone(),
            industry: industry_of[id].clone(),
        })
        .collect();
    let sparse: Vec<Vec<Option<PriceBar>>> = by_asset
        .values()
        .map(|m| calendar.iter().map(|d| m.get(d).copied()).collect())
        .collect();
    let position: HashMap<&str, usize> =
        assets.iter().enumerate().map(|(i, a)| (a.id.as_str(), i)).collect();

    let mut fundamentals = vec![Vec::new(); assets.len()];
    if let Some(path) = &paths.fundamentals {
        let core = [
            "asset_id",
            "as_of_date",
            "roe",
            "net_income",
            "revenue",
            "total_assets",
            "total_liabilities",
        ];
        let table = Table::open(path, &core)?;
        let extended: Vec<(usize, String)> = table
            .headers
            .iter()
            .enumerate()
            .filter(|(_, h)| !core.contains(&h.as_str()))
            .map(|(i, h)| (i, h.clone()))
            .collect();
        let mut seen: BTreeSet<(usize, NaiveDate)> = BTreeSet::new();
        for row in &table.rows {
            let id = table.str(row, "asset_id")?;
            let Some(&i) = position.get(id) else {
                log::warn!("{}: fundamentals for unknown asset `{id}` ignored", path.display());
                continue;
            };
            let as_of = table.date(row, "as_of_date")?;
            if !seen.insert((i, as_of)) {
                return Err(Error::DuplicateRow {
                    file: path.clone(),
                    line: Table::line(row),
                    asset: id.to_string(),
                    date: as_of.to_string(),
                });
            }
            let total_assets = table.number(row, "total_assets")?;
            if total_assets < 0.0 {
                return Err(table.error(row, "total_assets", "must be >= 0"));
            }
            let mut ext = BTreeMap::new();
            for (idx, name) in &extended {
                let raw = row.get(*idx).unwrap_or("");
                if raw.is_empty() {
                    continue;
                }
                let v: f64 = raw
                    .parse()
                    .map_err(|e| table.error(row, name, format!("cannot parse `{raw}`: {e}")))?;
                ext.insert(name.clone(), v);
            }
            fundamentals[i].push(FundamentalSnapshot {
                as_of,
                roe: table.number(row, "roe")?,
                net_income: table.number(row, "net_income")?,
                revenue: table.number(row, "revenue")?,
                total_assets,
                total_liabilities: table.number(row, "total_liabilities")?,
                extended: ext,
            });
        }
    }

    let mut text = Vec::new();
    if let Some(path) = &paths.text {
        let table = Table::open(path, &["asset_id", "date", "kind"])?;
        let score_col = table.col("score");
        let text_col = table.col("text");
        if score_col.is_none() && text_col.is_none() {
            return Err(Error::Schema {
                file: path.clone(),
                line: 1,
                column: "score".into(),
                message: "need a `score` or `text` column".into(),
            });
        }
        for row in &table.rows {
            let asset_id = table.str(row, "asset_id")?.to_string();
            if !position.contains_key(asset_id.as_str()) {
                log::warn!("{}: text for unknown asset `{asset_id}` ignored", path.display());
                continue;
            }
            let date = table.date(row, "date")?;
            let kind: TextKind = table
                .str(row, "kind")?
                .parse()
                .map_err(|e: String| table.error(row, "kind", e))?;
            let score = score_col.and_then(|c| row.get(c)).unwrap_or("");
            let payload = if !score.is_empty() {
                let scores = parse_scores(score)
                    .map_err(|e| table.error(row, "score", e))?;
                let arity_ok = match kind {
                    TextKind::News => scores.len() == 1,
                    TextKind::Report => scores.len() == 1 || scores.len() == 5,
                };
                if !arity_ok {
                    return Err(table.error(
                        row,
                        "score",
                        format!("{} sub-scores for a {} record", scores.len(), kind.as_str()),
                    ));
                }
                TextPayload::Scores(scores)
            } else {
                let raw = text_col.and_then(|c| row.get(c)).unwrap_or("");
                if raw.is_empty() {
                    return Err(table.error(row, "score", "neither score nor text given"));
                }
                TextPayload::Text(raw.to_string())
            };
            text.push(TextSignalRecord {
                date,
                asset_id,
                kind,
                payload,
            });
        }
    }

    DataPanel::new(calendar, assets, sparse, fundamentals, text, sector_classes)
}

fn parse_scores(raw: &str) -> std::result::Result<Vec<f64>, String> {
    raw.split(';')
        .map(|s| {
            let v: f64 = s.trim().parse().map_err(|e| format!("cannot parse `{s}`: {e}"))?;
            if !(-1.0..=1.0).contains(&v) {
                return Err(format!("sub-score {v} outside [-1, 1]"));
            }
            Ok(v)
        })
        .collect()
}

/// Loads monthly macro rows and pivots industry returns onto `calendar`.
/// Days without a row for an industry get a zero return.
pub fn load_macro(macro_csv: &Path, industry_returns: &Path, calendar: &[NaiveDate]) -> Result<MacroSeries> {
    let table = Table::open(macro_csv, &["month", "m1", "m2", "cpi", "pmi"])?;
    let mut observations: Vec<MacroObservation> = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let month: Month = table.parse(row, "month")?;
        if observations.last().is_some_and(|o| o.month >= month) {
            return Err(table.error(row, "month", "months must be strictly increasing"));
        }
        let obs = MacroObservation {
            month,
            m1: table.number(row, "m1")?,
            m2: table.number(row, "m2")?,
            cpi: table.number(row, "cpi")?,
            pmi: table.number(row, "pmi")?,
        };
        for (col, v) in [("m1", obs.m1), ("m2", obs.m2), ("cpi", obs.cpi)] {
            if v <= 0.0 {
                return Err(table.error(row, col, "level must be > 0"));
            }
        }
        observations.push(obs);
    }

    let table = Table::open(industry_returns, &["industry_code", "date", "return"])?;
    let day_of: HashMap<NaiveDate, usize> =
        calendar.iter().enumerate().map(|(t, d)| (*d, t)).collect();
    let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut seen: BTreeSet<(String, NaiveDate)> = BTreeSet::new();
    let mut off_calendar = 0usize;
    for row in &table.rows {
        let code = table.str(row, "industry_code")?.to_string();
        let date = table.date(row, "date")?;
        let r = table.number(row, "return")?;
        if r <= -1.0 {
            return Err(table.error(row, "return", "return must exceed -1"));
        }
        if !seen.insert((code.clone(), date)) {
            return Err(Error::DuplicateRow {
                file: industry_returns.to_path_buf(),
                line: Table::line(row),
                asset: code,
                date: date.to_string(),
            });
        }
        let entry = series.entry(code).or_insert_with(|| vec![0.0; calendar.len()]);
        match day_of.get(&date) {
            Some(&t) => entry[t] = r,
            None => off_calendar += 1,
        }
    }
    if off_calendar > 0 {
        log::warn!(
            "{}: {off_calendar} industry-return rows fall outside the trading calendar",
            industry_returns.display()
        );
    }
    let (codes, returns): (Vec<String>, Vec<Vec<f64>>) = series.into_iter().unzip();
    MacroSeries::new(observations, codes, returns)
}

fn fmt_date(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

/// `asset_id,date,open,high,low,close,adj_close,volume`; unobserved days are omitted.
pub fn write_prices_csv<W: Write>(panel: &DataPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["asset_id", "date", "open", "high", "low", "close", "adj_close", "volume"])?;
    for (i, a) in panel.assets().iter().enumerate() {
        for t in 0..panel.n_days() {
            if !panel.is_observed(i, t) {
                continue;
            }
            let b = panel.bar(i, t);
            w.write_record([
                a.id.clone(),
                fmt_date(panel.date(t)),
                b.open.to_string(),
                b.high.to_string(),
                b.low.to_string(),
                b.close.to_string(),
                b.adj_close.to_string(),
                b.volume.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Core columns followed by the union of extended columns (blank where absent).
pub fn write_fundamentals_csv<W: Write>(panel: &DataPanel, out: W) -> Result<()> {
    let extended: BTreeSet<String> = (0..panel.n_assets())
        .flat_map(|i| panel.fundamentals(i).iter().flat_map(|s| s.extended.keys().cloned()))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "asset_id",
        "as_of_date",
        "roe",
        "net_income",
        "revenue",
        "total_assets",
        "total_liabilities",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(extended.iter().cloned());
    w.write_record(&header)?;
    for (i, a) in panel.assets().iter().enumerate() {
        for s in panel.fundamentals(i) {
            let mut rec = vec![
                a.id.clone(),
                fmt_date(s.as_of),
                s.roe.to_string(),
                s.net_income.to_string(),
                s.revenue.to_string(),
                s.total_assets.to_string(),
                s.total_liabilities.to_string(),
            ];
            rec.extend(extended.iter().map(|k| s.extended.get(k).map_or(String::new(), f64::to_string)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `asset_id,industry_code,sector_class`.
pub fn write_industry_map_csv<W: Write>(panel: &DataPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["asset_id", "industry_code", "sector_class"])?;
    for a in panel.assets() {
        let class = panel.sector_classes().get(&a.industry).copied().unwrap_or_default();
        w.write_record([a.id.as_str(), a.industry.as_str(), class.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// `asset_id,date,kind,score,text`; report sub-scores are `;`-separated.
pub fn write_text_csv<W: Write>(panel: &DataPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["asset_id", "date", "kind", "score", "text"])?;
    for r in panel.text() {
        let (score, text) = match &r.payload {
            TextPayload::Scores(s) => (
                s.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
                String::new(),
            ),
            TextPayload::Text(t) => (String::new(), t.clone()),
        };
        w.write_record([
            r.asset_id.clone(),
            fmt_date(r.date),
            r.kind.as_str().to_string(),
            score,
            text,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `month,m1,m2,cpi,pmi`.
pub fn write_macro_csv<W: Write>(series: &MacroSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["month", "m1", "m2", "cpi", "pmi"])?;
    for o in series.observations() {
        w.write_record([
            o.month.to_string(),
            o.m1.to_string(),
            o.m2.to_string(),
            o.cpi.to_string(),
            o.pmi.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `industry_code,date,return`, one row per industry and trading day.
pub fn write_industry_returns_csv<W: Write>(
    series: &MacroSeries,
    calendar: &[NaiveDate],
    out: W,
) -> Result<()> {
    if series.n_days() != calendar.len() {
        return Err(Error::Alignment(format!(
            "industry returns cover {} days, calendar has {}",
            series.n_days(),
            calendar.len()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["industry_code", "date", "return"])?;
    for (j, code) in series.industries().iter().enumerate() {
        for (t, r) in series.industry_returns(j).iter().enumerate() {
            w.write_record([code.clone(), fmt_date(calendar[t]), r.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
