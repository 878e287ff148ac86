use std::io::Write;

use chrono::NaiveDate;

use super::metrics::{compute_metrics, MetricsReport};
use super::WeightVector;
use crate::data::DataPanel;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LedgerRow {
    pub date: NaiveDate,
    pub nav: f64,
    pub ret: f64,
    pub turnover: f64,
    pub beta: f64,
    pub cash: f64,
    /// Post-scaling asset weights.
    pub weights: WeightVector,
}

/// Daily account of one strategy. The NAV before the first row is one.
#[derive(Clone, Debug, PartialEq)]
pub struct Ledger {
    pub strategy: String,
    pub rows: Vec<LedgerRow>,
}

impl Ledger {
    pub fn new(strategy: impl Into<String>) -> Self {
        Ledger { strategy: strategy.into(), rows: Vec::new() }
    }

    pub fn returns(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ret).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.rows.iter().map(|r| r.date).collect()
    }

    /// NAV path including the starting one.
    pub fn nav_path(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.rows.iter().map(|r| r.nav)).collect()
    }

    /// Appends a day, compounding the NAV.
    pub fn push(&mut self, date: NaiveDate, ret: f64, turnover: f64, beta: f64, cash: f64, weights: WeightVector) {
        let prev = self.rows.last().map_or(1.0, |r| r.nav);
        self.rows.push(LedgerRow { date, nav: prev * (1.0 + ret), ret, turnover, beta, cash, weights });
    }

    pub fn metrics(&self) -> Result<MetricsReport> {
        compute_metrics(&self.returns())
    }

    /// `date,nav,return,turnover,beta,cash,weights` with weights as `id:w` pairs.
    pub fn write_csv<W: Write>(&self, panel: &DataPanel, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "nav", "return", "turnover", "beta", "cash", "weights"])?;
        for r in &self.rows {
            let holdings: Vec<String> = r
                .weights
                .iter()
                .map(|(i, x)| format!("{}:{}", panel.assets()[i].id, x))
                .collect();
            w.write_record([
                r.date.to_string(),
                r.nav.to_string(),
                r.ret.to_string(),
                r.turnover.to_string(),
                r.beta.to_string(),
                r.cash.to_string(),
                holdings.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Daily strategy-minus-benchmark returns compounded into an alpha NAV.
pub fn excess_series(strategy: &Ledger, benchmark: &Ledger) -> Result<Ledger> {
    if strategy.dates() != benchmark.dates() {
        return Err(Error::Alignment(format!(
            "ledgers `{}` and `{}` cover different dates",
            strategy.strategy, benchmark.strategy
        )));
    }
    let mut out = Ledger::new(format!("{}_excess", strategy.strategy));
    for (s, b) in strategy.rows.iter().zip(&benchmark.rows) {
        out.push(s.date, s.ret - b.ret, 0.0, 1.0, 0.0, WeightVector::default());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Days;

    fn ledger(name: &str, returns: &[f64]) -> Ledger {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let mut l = Ledger::new(name);
        for (k, r) in returns.iter().enumerate() {
            l.push(start + Days::new(k as u64), *r, 0.0, 1.0, 0.0, WeightVector::default());
        }
        l
    }

    #[test]
    fn compounding() {
        let l = ledger("x", &[0.01; 3]);
        assert_eq!(l.rows[2].nav, 1.01 * 1.01 * 1.01);
        let path = l.nav_path();
        for (k, r) in l.rows.iter().enumerate() {
            assert!((path[k] * (1.0 + r.ret) - path[k + 1]).abs() < 1e-10);
        }
    }

    #[test]
    fn excess_examples() {
        let a = ledger("a", &[0.01, -0.02, 0.03]);
        let same = excess_series(&a, &a).unwrap();
        assert!(same.returns().iter().all(|r| *r == 0.0));
        assert_eq!(same.metrics().unwrap().cr, 0.0);
        let up = excess_series(&ledger("s", &[0.01; 4]), &ledger("b", &[0.0; 4])).unwrap();
        assert_eq!(up.rows[3].nav, 1.01f64 * 1.01 * 1.01 * 1.01);
        assert!(matches!(excess_series(&a, &ledger("b", &[0.0; 2])), Err(Error::Alignment(_))));
    }
}
