use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{DataPanel, Day, TextKind, TextPayload};
use crate::error::{Error, Result};

/// One scoring request: every record of `kind` for `asset_id` dated in `[from, to]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextRequest {
    pub asset_id: String,
    pub kind: TextKind,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub records: Vec<TextPayload>,
}

/// Sub-scores per scored record, each in [-1, 1]. News records carry one
/// sub-score; report records carry five (analyst interest, integrity risk,
/// management sentiment, dividend quality, institutional confidence) or a
/// single precomputed composite.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TextResponse {
    pub sub_scores: Vec<Vec<f64>>,
}

/// Boundary between the engine and whatever reads news and analyst reports.
pub trait TextScoreProvider: Send + Sync {
    fn score(&self, request: &TextRequest) -> Result<TextResponse>;
}

/// Lexicon scorer: pre-scored payloads pass through, raw text is scored by
/// counting fixed positive and negative keywords.
#[derive(Clone, Copy, Debug, Default)]
pub struct DeterministicStub;

const NEWS_LEXICON: (&[&str], &[&str]) = (
    &["beat", "growth", "record", "upgrade", "profit", "strong", "surge", "expansion", "win", "approval"],
    &["miss", "loss", "downgrade", "weak", "fraud", "lawsuit", "decline", "recall", "default", "probe"],
);

/// Positive and negative keywords for each report sub-score. For integrity
/// risk the positive list raises the risk.
const REPORT_LEXICONS: [(&[&str], &[&str]); 5] = [
    (&["coverage", "initiate", "upgrade", "visit"], &["drop", "suspend", "neglect"]),
    (&["restatement", "fraud", "penalty", "investigation", "pledge"], &["clean", "audited", "compliant"]),
    (&["confident", "optimistic", "accelerate", "expand"], &["cautious", "uncertain", "headwind"]),
    (&["dividend", "buyback", "payout", "cash"], &["cut", "omit", "dilution"]),
    (&["accumulate", "inflow", "stake", "overweight"], &["outflow", "reduce", "underweight"]),
];

fn polarity(text: &str, lexicon: (&[&str], &[&str])) -> f64 {
    let (mut pos, mut neg) = (0usize, 0usize);
    for word in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
    {
        if lexicon.0.contains(&word.as_str()) {
            pos += 1;
        }
        if lexicon.1.contains(&word.as_str()) {
            neg += 1;
        }
    }
    if pos + neg == 0 {
        0.0
    } else {
        (pos as f64 - neg as f64) / (pos + neg) as f64
    }
}

impl TextScoreProvider for DeterministicStub {
    fn score(&self, request: &TextRequest) -> Result<TextResponse> {
        let sub_scores = request
            .records
            .iter()
            .map(|p| match p {
                TextPayload::Scores(s) => s.clone(),
                TextPayload::Text(text) => match request.kind {
                    TextKind::News => vec![polarity(text, NEWS_LEXICON)],
                    TextKind::Report => REPORT_LEXICONS.iter().map(|l| polarity(text, *l)).collect(),
                },
            })
            .collect();
        Ok(TextResponse { sub_scores })
    }
}

/// Serves sub-scores from a `text_signals.csv` table, ignoring request payloads.
#[derive(Clone, Debug, Default)]
pub struct PrecomputedTable {
    rows: HashMap<(String, TextKind), Vec<(NaiveDate, Vec<f64>)>>,
}

impl PrecomputedTable {
    pub fn from_panel(panel: &DataPanel) -> Self {
        let mut rows: HashMap<(String, TextKind), Vec<(NaiveDate, Vec<f64>)>> = HashMap::new();
        for r in panel.text() {
            if let TextPayload::Scores(s) = &r.payload {
                rows.entry((r.asset_id.clone(), r.kind)).or_default().push((r.date, s.clone()));
            }
        }
        PrecomputedTable { rows }
    }

    pub fn insert(&mut self, asset_id: &str, kind: TextKind, date: NaiveDate, scores: Vec<f64>) {
        let list = self.rows.entry((asset_id.to_string(), kind)).or_default();
        let at = list.partition_point(|(d, _)| *d <= date);
        list.insert(at, (date, scores));
    }

    /// Reads `asset_id,date,kind,score` rows (score may be `;`-separated).
    pub fn load(path: &Path) -> Result<Self> {
        let mut table = PrecomputedTable::default();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
                file: path.to_path_buf(),
                line: 1,
                column: name.to_string(),
                message: "required column missing from header".into(),
            })
        };
        let (ca, cd, ck, cs) = (col("asset_id")?, col("date")?, col("kind")?, col("score")?);
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |column: &str, message: String| Error::Schema {
                file: path.to_path_buf(),
                line,
                column: column.to_string(),
                message,
            };
            let date = NaiveDate::parse_from_str(&row[cd], "%Y-%m-%d").map_err(|e| bad("date", e.to_string()))?;
            let kind: TextKind = row[ck].parse().map_err(|e: String| bad("kind", e))?;
            let scores = row[cs]
                .split(';')
                .map(|s| s.trim().parse::<f64>().map_err(|e| bad("score", e.to_string())))
                .collect::<Result<Vec<f64>>>()?;
            table.insert(&row[ca], kind, date, scores);
        }
        Ok(table)
    }
}

impl TextScoreProvider for PrecomputedTable {
    fn score(&self, request: &TextRequest) -> Result<TextResponse> {
        let sub_scores = self
            .rows
            .get(&(request.asset_id.clone(), request.kind))
            .map(|list| {
                list.iter()
                    .filter(|(d, _)| *d >= request.from && *d <= request.to)
                    .map(|(_, s)| s.clone())
                    .collect()
            })
            .unwrap_or_default();
        Ok(TextResponse { sub_scores })
    }
}

/// HTTP scoring service contract: `POST {endpoint}` with a JSON
/// [`TextRequest`] body, answered by a JSON [`TextResponse`]. Asset ids in
/// requests should be pseudonyms. No transport ships with this crate, so every
/// call fails and the affected cells are masked.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteClient {
    pub endpoint: String,
}

impl TextScoreProvider for RemoteClient {
    fn score(&self, _request: &TextRequest) -> Result<TextResponse> {
        Err(Error::Provider(format!("no HTTP transport available for {}", self.endpoint)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewsParams {
    /// Trailing window in trading days.
    pub window: usize,
}

impl Default for NewsParams {
    fn default() -> Self {
        NewsParams { window: 21 }
    }
}

impl NewsParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("news.window must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportParams {
    /// Trailing window in trading days.
    pub window: usize,
}

impl Default for ReportParams {
    fn default() -> Self {
        ReportParams { window: 63 }
    }
}

impl ReportParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("report.window must be >= 1"));
        }
        Ok(())
    }
}

/// Mean of the five report sub-scores with integrity risk counted negatively.
/// A single value is taken as an already-combined composite.
pub fn report_composite(sub: &[f64]) -> Result<f64> {
    match sub {
        [c] => Ok(*c),
        [a, integrity, c, d, e] => Ok((a - integrity + c + d + e) / 5.0),
        other => Err(Error::Provider(format!("report needs 1 or 5 sub-scores, got {}", other.len()))),
    }
}

fn news_value(sub: &[f64]) -> Result<f64> {
    if sub.is_empty() {
        return Err(Error::Provider("news record without sub-scores".into()));
    }
    Ok(sub.iter().sum::<f64>() / sub.len() as f64)
}

/// Per-asset, per-kind record positions into [`DataPanel::text`], in date order.
pub struct TextIndex {
    by_asset: Vec<BTreeMap<TextKind, Vec<usize>>>,
}

impl TextIndex {
    pub fn new(panel: &DataPanel) -> TextIndex {
        let mut by_asset = vec![BTreeMap::<TextKind, Vec<usize>>::new(); panel.n_assets()];
        for (k, r) in panel.text().iter().enumerate() {
            if let Some(i) = panel.asset_index(&r.asset_id) {
                by_asset[i].entry(r.kind).or_default().push(k);
            }
        }
        TextIndex { by_asset }
    }

    fn request(&self, panel: &DataPanel, asset: usize, kind: TextKind, t: Day, window: usize) -> Option<TextRequest> {
        let info = t.checked_sub(1)?;
        let from = panel.date((info + 1).saturating_sub(window));
        let to = panel.date(info);
        let records = self
            .by_asset[asset]
            .get(&kind)
            .map(|list| {
                let text = panel.text();
                let lo = list.partition_point(|&k| text[k].date < from);
                let hi = list.partition_point(|&k| text[k].date <= to);
                list[lo..hi].iter().map(|&k| text[k].payload.clone()).collect()
            })
            .unwrap_or_default();
        Some(TextRequest {
            asset_id: panel.assets()[asset].id.clone(),
            kind,
            from,
            to,
            records,
        })
    }

    fn score(
        &self,
        provider: &dyn TextScoreProvider,
        panel: &DataPanel,
        pool: &[usize],
        t: Day,
        kind: TextKind,
        window: usize,
    ) -> Vec<Option<f64>> {
        pool.iter()
            .map(|&i| {
                let request = self.request(panel, i, kind, t, window)?;
                let result = provider.score(&request).and_then(|resp| {
                    let mut values = Vec::with_capacity(resp.sub_scores.len());
                    for sub in &resp.sub_scores {
                        if sub.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                            return Err(Error::Provider(format!("sub-score outside [-1, 1]: {sub:?}")));
                        }
                        values.push(match kind {
                            TextKind::News => news_value(sub)?,
                            TextKind::Report => report_composite(sub)?,
                        });
                    }
                    Ok(if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 })
                });
                match result {
                    Ok(v) => Some(v),
                    Err(e) => {
                        log::warn!(
                            "{} score for `{}` on {} masked: {e}",
                            kind.as_str(),
                            request.asset_id,
                            panel.date(t)
                        );
                        None
                    }
                }
            })
            .collect()
    }

    pub fn score_news(
        &self,
        provider: &dyn TextScoreProvider,
        panel: &DataPanel,
        pool: &[usize],
        t: Day,
        params: &NewsParams,
    ) -> Vec<Option<f64>> {
        self.score(provider, panel, pool, t, TextKind::News, params.window)
    }

    pub fn score_report(
        &self,
        provider: &dyn TextScoreProvider,
        panel: &DataPanel,
        pool: &[usize],
        t: Day,
        params: &ReportParams,
    ) -> Vec<Option<f64>> {
        self.score(provider, panel, pool, t, TextKind::Report, params.window)
    }
}

/// Mean news sentiment over the trailing window; assets without news score 0.
pub fn score_news(
    provider: &dyn TextScoreProvider,
    panel: &DataPanel,
    pool: &[usize],
    t: Day,
    params: &NewsParams,
) -> Vec<Option<f64>> {
    TextIndex::new(panel).score_news(provider, panel, pool, t, params)
}

/// Mean report composite over the trailing window; assets without reports score 0.
pub fn score_report(
    provider: &dyn TextScoreProvider,
    panel: &DataPanel,
    pool: &[usize],
    t: Day,
    params: &ReportParams,
) -> Vec<Option<f64>> {
    TextIndex::new(panel).score_report(provider, panel, pool, t, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Asset, PriceBar, TextSignalRecord};
    use chrono::Days;
    use std::collections::BTreeMap;

    fn panel(text: Vec<(usize, &str, TextKind, TextPayload)>) -> DataPanel {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let calendar: Vec<NaiveDate> = (0..30).map(|k| start + Days::new(k)).collect();
        let bar = PriceBar { open: 1.0, high: 1.0, low: 1.0, close: 1.0, adj_close: 1.0, volume: 0.0 };
        let records = text
            .into_iter()
            .map(|(day, id, kind, payload)| TextSignalRecord { date: calendar[day], asset_id: id.into(), kind, payload })
            .collect();
        DataPanel::new(
            calendar,
            vec![Asset { id: "A".into(), industry: "X".into() }, Asset { id: "B".into(), industry: "X".into() }],
            vec![vec![Some(bar); 30]; 2],
            vec![],
            records,
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn scores(v: &[f64]) -> TextPayload {
        TextPayload::Scores(v.to_vec())
    }

    #[test]
    fn no_records_is_neutral() {
        let p = panel(vec![]);
        let s = score_news(&DeterministicStub, &p, &[0, 1], 10, &NewsParams::default());
        assert_eq!(s, vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn positive_keywords_score_positive() {
        let p = panel(vec![(3, "A", TextKind::News, TextPayload::Text("Record profit and strong growth".into()))]);
        let s = score_news(&DeterministicStub, &p, &[0], 5, &NewsParams::default());
        assert!(s[0].unwrap() > 0.0);
    }

    #[test]
    fn precomputed_mean_in_window() {
        let p = panel(vec![
            (2, "A", TextKind::News, scores(&[0.2])),
            (4, "A", TextKind::News, scores(&[0.4])),
            (9, "A", TextKind::News, scores(&[0.9])),
        ]);
        let table = PrecomputedTable::from_panel(&p);
        // Decision day 6 sees days 0..=5.
        let s = score_news(&table, &p, &[0], 6, &NewsParams { window: 21 });
        assert!((s[0].unwrap() - 0.3).abs() < 1e-15);
        // A record dated on the decision day itself is not yet visible.
        let s = score_news(&table, &p, &[0], 9, &NewsParams { window: 21 });
        assert!((s[0].unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn report_composite_examples() {
        // Integrity risk enters with a negative sign.
        assert_eq!(report_composite(&[0.5, -0.5, 0.5, 0.5, 0.5]).unwrap(), 0.5);
        assert!((report_composite(&[0.5; 5]).unwrap() - 0.3).abs() < 1e-15);
        assert!((report_composite(&[0.0, 1.0, 0.0, 0.0, 0.0]).unwrap() + 0.2).abs() < 1e-15);
        assert!((report_composite(&[0.1, 0.2, -0.1, 0.3, 0.0]).unwrap() - 0.02).abs() < 1e-15);
        assert!(report_composite(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn provider_failure_masks_the_cell() {
        let p = panel(vec![]);
        let remote = RemoteClient { endpoint: "http://localhost:1/score".into() };
        assert_eq!(score_report(&remote, &p, &[0, 1], 5, &ReportParams::default()), vec![None, None]);
    }

    #[test]
    fn out_of_range_sub_score_masks() {
        struct Bad;
        impl TextScoreProvider for Bad {
            fn score(&self, _: &TextRequest) -> Result<TextResponse> {
                Ok(TextResponse { sub_scores: vec![vec![2.0]] })
            }
        }
        let p = panel(vec![]);
        assert_eq!(score_news(&Bad, &p, &[0], 5, &NewsParams::default()), vec![None]);
    }

    #[test]
    fn request_contract_round_trips_as_json() {
        let req = TextRequest {
            asset_id: "3f2a9c1b0d4e".into(),
            kind: TextKind::Report,
            from: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            to: NaiveDate::from_ymd_opt(2024, 3, 29).unwrap(),
            records: vec![TextPayload::Text("dividend raised".into())],
        };
        let json = serde_json::to_string(&req).unwrap();
        assert_eq!(serde_json::from_str::<TextRequest>(&json).unwrap(), req);
    }
}
