//! Technical indicators over daily series.
//!
//! Every function returns a [`Series`] of the input's length. Leading values
//! that lack enough history are unavailable: [`Series::get`] returns `None`
//! for them and the raw slot holds NaN.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    values: Vec<f64>,
    first_valid: usize,
}

impl Series {
    fn new(mut values: Vec<f64>, first_valid: usize) -> Series {
        let first_valid = first_valid.min(values.len());
        values[..first_valid].iter_mut().for_each(|v| *v = f64::NAN);
        Series { values, first_valid }
    }

    fn unavailable(len: usize) -> Series {
        Series::new(vec![f64::NAN; len], len)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the first available value (`len()` when none is).
    pub fn first_valid(&self) -> usize {
        self.first_valid
    }

    pub fn get(&self, t: usize) -> Option<f64> {
        (t >= self.first_valid && t < self.values.len()).then(|| self.values[t])
    }

    /// Raw values, NaN in the warm-up prefix.
    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    /// The available suffix.
    pub fn valid(&self) -> &[f64] {
        &self.values[self.first_valid..]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaKind {
    Simple,
    Exponential,
}

fn check_window(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::config("indicator window must be >= 1"))
    } else {
        Ok(())
    }
}

fn check_aligned(high: &[f64], low: &[f64], close: &[f64]) -> Result<()> {
    if high.len() != low.len() || low.len() != close.len() {
        return Err(Error::Shape(format!(
            "high/low/close lengths differ ({}, {}, {})",
            high.len(),
            low.len(),
            close.len()
        )));
    }
    Ok(())
}

pub fn moving_average(x: &[f64], n: usize, kind: MaKind) -> Result<Series> {
    match kind {
        MaKind::Simple => sma(x, n),
        MaKind::Exponential => ema(x, n),
    }
}

pub fn sma(x: &[f64], n: usize) -> Result<Series> {
    check_window(n)?;
    if n > x.len() {
        return Ok(Series::unavailable(x.len()));
    }
    let mut out = vec![f64::NAN; x.len()];
    for t in n - 1..x.len() {
        out[t] = x[t + 1 - n..=t].iter().sum::<f64>() / n as f64;
    }
    Ok(Series::new(out, n - 1))
}

fn ema_raw(x: &[f64], n: usize) -> Vec<f64> {
    let a = 2.0 / (n as f64 + 1.0);
    let mut out = Vec::with_capacity(x.len());
    let mut e = match x.first() {
        Some(v) => *v,
        None => return out,
    };
    out.push(e);
    for v in &x[1..] {
        e = a * v + (1.0 - a) * e;
        out.push(e);
    }
    out
}

/// EMA with factor `2/(n+1)`, seeded with the first value; available from index `n-1`.
pub fn ema(x: &[f64], n: usize) -> Result<Series> {
    check_window(n)?;
    if n > x.len() {
        return Ok(Series::unavailable(x.len()));
    }
    Ok(Series::new(ema_raw(x, n), n - 1))
}

/// Wilder RSI; available from index `n`.
pub fn rsi(x: &[f64], n: usize) -> Result<Series> {
    check_window(n)?;
    if n >= x.len() {
        return Ok(Series::unavailable(x.len()));
    }
    let value = |gain: f64, loss: f64| {
        if loss == 0.0 {
            if gain == 0.0 {
                50.0
            } else {
                100.0
            }
        } else {
            100.0 - 100.0 / (1.0 + gain / loss)
        }
    };
    let mut out = vec![f64::NAN; x.len()];
    let (mut gain, mut loss) = (0.0, 0.0);
    for t in 1..=n {
        let d = x[t] - x[t - 1];
        gain += d.max(0.0);
        loss += (-d).max(0.0);
    }
    gain /= n as f64;
    loss /= n as f64;
    out[n] = value(gain, loss);
    let nf = n as f64;
    for t in n + 1..x.len() {
        let d = x[t] - x[t - 1];
        gain = (gain * (nf - 1.0) + d.max(0.0)) / nf;
        loss = (loss * (nf - 1.0) + (-d).max(0.0)) / nf;
        out[t] = value(gain, loss);
    }
    Ok(Series::new(out, n))
}

/// True range; the first bar uses `high - low`.
pub fn true_range(high: &[f64], low: &[f64], close: &[f64]) -> Result<Vec<f64>> {
    check_aligned(high, low, close)?;
    Ok((0..close.len())
        .map(|t| {
            let hl = high[t] - low[t];
            if t == 0 {
                hl
            } else {
                hl.max((high[t] - close[t - 1]).abs()).max((low[t] - close[t - 1]).abs())
            }
        })
        .collect())
}

/// Wilder average of `x` seeded with the simple mean of `x[start..start+n]`.
fn wilder(x: &[f64], start: usize, n: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; x.len()];
    let seed_end = start + n - 1;
    if seed_end >= x.len() {
        return out;
    }
    let nf = n as f64;
    let mut avg = x[start..=seed_end].iter().sum::<f64>() / nf;
    out[seed_end] = avg;
    for t in seed_end + 1..x.len() {
        avg = (avg * (nf - 1.0) + x[t]) / nf;
        out[t] = avg;
    }
    out
}

/// Wilder-smoothed true range; available from index `n-1`.
pub fn atr(high: &[f64], low: &[f64], close: &[f64], n: usize) -> Result<Series> {
    check_window(n)?;
    let tr = true_range(high, low, close)?;
    Ok(Series::new(wilder(&tr, 0, n), n - 1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Macd {
    pub macd: Series,
    pub signal: Series,
    pub histogram: Series,
}

/// `macd = EMA_fast - EMA_slow`, `signal = EMA_signal(macd)`.
pub fn macd(x: &[f64], fast: usize, slow: usize, signal: usize) -> Result<Macd> {
    check_window(fast)?;
    check_window(signal)?;
    if fast >= slow {
        return Err(Error::config(format!("MACD needs fast < slow (got {fast} >= {slow})")));
    }
    let f = ema_raw(x, fast);
    let s = ema_raw(x, slow);
    let line: Vec<f64> = f.iter().zip(&s).map(|(a, b)| a - b).collect();
    let sig = ema_raw(&line, signal);
    let hist: Vec<f64> = line.iter().zip(&sig).map(|(a, b)| a - b).collect();
    let line_start = slow - 1;
    let sig_start = slow + signal - 2;
    Ok(Macd {
        macd: Series::new(line, line_start),
        signal: Series::new(sig, sig_start),
        histogram: Series::new(hist, sig_start),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Kdj {
    pub k: Series,
    pub d: Series,
    pub j: Series,
}

/// Raw stochastic value over the trailing `n` bars; 50 for a flat window.
pub fn rsv(high: &[f64], low: &[f64], close: &[f64], n: usize) -> Result<Series> {
    check_window(n)?;
    check_aligned(high, low, close)?;
    let mut out = vec![f64::NAN; close.len()];
    for t in n.saturating_sub(1)..close.len() {
        let hh = high[t + 1 - n..=t].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ll = low[t + 1 - n..=t].iter().copied().fold(f64::INFINITY, f64::min);
        out[t] = if hh > ll { 100.0 * (close[t] - ll) / (hh - ll) } else { 50.0 };
    }
    Ok(Series::new(out, n - 1))
}

/// KDJ with 1/3 smoothing; K and D start from 50.
pub fn kdj(high: &[f64], low: &[f64], close: &[f64], n: usize) -> Result<Kdj> {
    let r = rsv(high, low, close, n)?;
    let len = close.len();
    let (mut k, mut d, mut j) = (vec![f64::NAN; len], vec![f64::NAN; len], vec![f64::NAN; len]);
    let (mut kp, mut dp) = (50.0, 50.0);
    for t in r.first_valid()..len {
        kp = 2.0 / 3.0 * kp + r.raw()[t] / 3.0;
        dp = 2.0 / 3.0 * dp + kp / 3.0;
        k[t] = kp;
        d[t] = dp;
        j[t] = 3.0 * kp - 2.0 * dp;
    }
    let start = r.first_valid();
    Ok(Kdj {
        k: Series::new(k, start),
        d: Series::new(d, start),
        j: Series::new(j, start),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bollinger {
    pub percent_b: Series,
    pub width: Series,
}

/// Bands at mean ± k·(population std) over `n` closes. A zero-variance window gives %b = 0.5.
pub fn bollinger(close: &[f64], n: usize, k: f64) -> Result<Bollinger> {
    check_window(n)?;
    let mut pb = vec![f64::NAN; close.len()];
    let mut width = vec![f64::NAN; close.len()];
    for t in n.saturating_sub(1)..close.len() {
        let w = &close[t + 1 - n..=t];
        let mean = w.iter().sum::<f64>() / n as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        let (upper, lower) = (mean + k * sd, mean - k * sd);
        pb[t] = if upper > lower { (close[t] - lower) / (upper - lower) } else { 0.5 };
        width[t] = (upper - lower) / mean;
    }
    Ok(Bollinger {
        percent_b: Series::new(pb, n - 1),
        width: Series::new(width, n - 1),
    })
}

/// Wilder ADX in [0, 100]; available from index `2n-1`.
pub fn adx(high: &[f64], low: &[f64], close: &[f64], n: usize) -> Result<Series> {
    check_window(n)?;
    let tr = true_range(high, low, close)?;
    let len = close.len();
    let start = 2 * n - 1;
    if start >= len {
        return Ok(Series::unavailable(len));
    }
    let mut plus_dm = vec![0.0; len];
    let mut minus_dm = vec![0.0; len];
    for t in 1..len {
        let up = high[t] - high[t - 1];
        let down = low[t - 1] - low[t];
        if up > down && up > 0.0 {
            plus_dm[t] = up;
        }
        if down > up && down > 0.0 {
            minus_dm[t] = down;
        }
    }
    // Wilder running sums over days 1..=n, then S_t = S_{t-1} - S_{t-1}/n + x_t.
    let nf = n as f64;
    let (mut s_tr, mut s_p, mut s_m) = (0.0, 0.0, 0.0);
    let mut dx = vec![f64::NAN; len];
    for t in 1..len {
        if t <= n {
            s_tr += tr[t];
            s_p += plus_dm[t];
            s_m += minus_dm[t];
        } else {
            s_tr = s_tr - s_tr / nf + tr[t];
            s_p = s_p - s_p / nf + plus_dm[t];
            s_m = s_m - s_m / nf + minus_dm[t];
        }
        if t >= n {
            let (pdi, mdi) = if s_tr > 0.0 {
                (100.0 * s_p / s_tr, 100.0 * s_m / s_tr)
            } else {
                (0.0, 0.0)
            };
            dx[t] = if pdi + mdi > 0.0 { 100.0 * (pdi - mdi).abs() / (pdi + mdi) } else { 0.0 };
        }
    }
    let out = wilder(&dx, n, n);
    Ok(Series::new(out, start))
}

/// Lags of the rescaled-range regression.
pub const HURST_LAGS: [usize; 4] = [2, 4, 8, 16];

/// Anis-Lloyd expected R/S of `n` i.i.d. normal increments.
fn expected_rs(n: usize) -> f64 {
    // Gamma((n-1)/2) / Gamma(n/2) via r(n+2) = r(n) * (n-1)/n.
    let mut ratio = if n % 2 == 0 {
        std::f64::consts::PI.sqrt()
    } else {
        2.0 / std::f64::consts::PI.sqrt()
    };
    let mut m = if n % 2 == 0 { 2 } else { 3 };
    while m < n {
        ratio *= (m as f64 - 1.0) / m as f64;
        m += 2;
    }
    let sum: f64 = (1..n).map(|i| ((n - i) as f64 / i as f64).sqrt()).sum();
    ratio / std::f64::consts::PI.sqrt() * sum
}

/// Hurst exponent of an increment series by rescaled range over [`HURST_LAGS`],
/// with the small-sample expectation removed before fitting the slope.
/// `None` when fewer than two lags produce a usable R/S.
pub fn hurst_exponent(increments: &[f64]) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &lag in &HURST_LAGS {
        let blocks = increments.len() / lag;
        let mut total = 0.0;
        let mut count = 0usize;
        for b in 0..blocks {
            let w = &increments[b * lag..(b + 1) * lag];
            let mean = w.iter().sum::<f64>() / lag as f64;
            let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / lag as f64).sqrt();
            if sd <= 0.0 {
                continue;
            }
            let (mut cum, mut hi, mut lo) = (0.0f64, f64::NEG_INFINITY, f64::INFINITY);
            for v in w {
                cum += v - mean;
                hi = hi.max(cum);
                lo = lo.min(cum);
            }
            total += (hi - lo) / sd;
            count += 1;
        }
        if count > 0 {
            xs.push((lag as f64).ln());
            ys.push((total / count as f64).ln() - expected_rs(lag).ln());
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(0.5 + sxy / sxx)
}

/// Rolling Hurst exponent of log-price increments over the trailing `window` closes.
pub fn hurst(close: &[f64], window: usize) -> Result<Series> {
    if window < 2 * HURST_LAGS[HURST_LAGS.len() - 1] + 1 {
        return Err(Error::config(format!("Hurst window {window} is too short for lag 16")));
    }
    let inc: Vec<f64> = close.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let mut out = vec![f64::NAN; close.len()];
    for t in window - 1..close.len() {
        // A window without variation carries no persistence information.
        out[t] = hurst_exponent(&inc[t + 1 - window..t]).unwrap_or(0.5);
    }
    Ok(Series::new(out, window - 1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatArb {
    pub percent_b: Series,
    pub width: Series,
    pub adx: Series,
    pub hurst: Series,
}

/// Bollinger %b and width, ADX and the rolling Hurst exponent.
pub fn stat_arb_features(
    high: &[f64],
    low: &[f64],
    close: &[f64],
    n_bb: usize,
    k_bb: f64,
    n_adx: usize,
    hurst_window: usize,
) -> Result<StatArb> {
    let bb = bollinger(close, n_bb, k_bb)?;
    Ok(StatArb {
        percent_b: bb.percent_b,
        width: bb.width,
        adx: adx(high, low, close, n_adx)?,
        hurst: hurst(close, hurst_window)?,
    })
}
