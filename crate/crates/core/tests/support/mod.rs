//! Independent reference implementations and random inputs shared by the
//! integration tests and the acceptance harness.
//!
//! Recursive smoothers are evaluated here through their closed-form weighted
//! sums, so an error in a recursion does not cancel against itself.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw by Box-Muller.
pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = r.random::<f64>().max(1e-300);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// High, low and close bars of a geometric random walk.
#[derive(Clone, Debug)]
pub struct Ohlc {
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub close: Vec<f64>,
}

pub fn random_ohlc(seed: u64, len: usize) -> Ohlc {
    let mut r = rng(seed);
    let vol = 0.005 + 0.03 * r.random::<f64>();
    let mut open = 20.0 + 80.0 * r.random::<f64>();
    let (mut high, mut low, mut close) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..len {
        let c = open * (vol * normal(&mut r)).exp();
        let hi = open.max(c) * (1.0 + vol * r.random::<f64>());
        let lo = open.min(c) * (1.0 - vol * r.random::<f64>());
        high.push(hi);
        low.push(lo);
        close.push(c);
        open = c * (0.2 * vol * normal(&mut r)).exp();
    }
    Ohlc { high, low, close }
}

/// Positive NAV path of `len` points starting at one.
pub fn random_nav(seed: u64, len: usize) -> Vec<f64> {
    let mut r = rng(seed);
    let drift = 0.002 * (r.random::<f64>() - 0.5);
    let vol = 0.002 + 0.03 * r.random::<f64>();
    let mut nav = vec![1.0];
    for _ in 1..len {
        let last = nav[nav.len() - 1];
        nav.push(last * (drift + vol * normal(&mut r)).exp());
    }
    nav
}

/// Relative closeness with an absolute floor of one.
pub fn close_to(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn sma(x: &[f64], n: usize) -> Vec<Option<f64>> {
    let mut prefix = vec![0.0];
    for v in x {
        prefix.push(prefix[prefix.len() - 1] + v);
    }
    (0..x.len()).map(|t| (t + 1 >= n).then(|| (prefix[t + 1] - prefix[t + 1 - n]) / n as f64)).collect()
}

/// Exponential smoothing with factor `a` seeded at `x[0]`, as the explicit
/// sum `(1-a)^t x_0 + sum_j a (1-a)^j x_{t-j}`.
fn exp_smooth_closed(x: &[f64], a: f64, t: usize) -> f64 {
    let mut total = (1.0 - a).powi(t as i32) * x[0];
    for j in 0..t {
        total += a * (1.0 - a).powi(j as i32) * x[t - j];
    }
    total
}

pub fn ema(x: &[f64], n: usize) -> Vec<Option<f64>> {
    let a = 2.0 / (n as f64 + 1.0);
    (0..x.len()).map(|t| (t + 1 >= n).then(|| exp_smooth_closed(x, a, t))).collect()
}

/// Wilder average seeded with the mean of `x[start..start+n]`, in closed form.
fn wilder_closed(x: &[f64], start: usize, n: usize, t: usize) -> Option<f64> {
    let seed_end = start + n - 1;
    if t < seed_end || seed_end >= x.len() {
        return None;
    }
    let keep = 1.0 - 1.0 / n as f64;
    let seed = x[start..=seed_end].iter().sum::<f64>() / n as f64;
    let mut total = keep.powi((t - seed_end) as i32) * seed;
    for u in seed_end + 1..=t {
        total += keep.powi((t - u) as i32) * x[u] / n as f64;
    }
    Some(total)
}

pub fn rsi(x: &[f64], n: usize) -> Vec<Option<f64>> {
    let mut gains = vec![0.0];
    let mut losses = vec![0.0];
    for w in x.windows(2) {
        let d = w[1] - w[0];
        gains.push(if d > 0.0 { d } else { 0.0 });
        losses.push(if d < 0.0 { -d } else { 0.0 });
    }
    (0..x.len())
        .map(|t| {
            let g = wilder_closed(&gains, 1, n, t)?;
            let l = wilder_closed(&losses, 1, n, t)?;
            Some(match (g == 0.0, l == 0.0) {
                (true, true) => 50.0,
                (_, true) => 100.0,
                _ => 100.0 * g / (g + l),
            })
        })
        .collect()
}

pub fn true_range(b: &Ohlc) -> Vec<f64> {
    (0..b.close.len())
        .map(|t| {
            let mut candidates = vec![b.high[t] - b.low[t]];
            if t > 0 {
                candidates.push((b.high[t] - b.close[t - 1]).abs());
                candidates.push((b.low[t] - b.close[t - 1]).abs());
            }
            candidates.into_iter().fold(f64::MIN, f64::max)
        })
        .collect()
}

pub fn atr(b: &Ohlc, n: usize) -> Vec<Option<f64>> {
    let tr = true_range(b);
    (0..tr.len()).map(|t| wilder_closed(&tr, 0, n, t)).collect()
}

pub struct MacdRef {
    pub line: Vec<Option<f64>>,
    pub signal: Vec<Option<f64>>,
    pub histogram: Vec<Option<f64>>,
}

pub fn macd(x: &[f64], fast: usize, slow: usize, signal: usize) -> MacdRef {
    let (af, as_) = (2.0 / (fast as f64 + 1.0), 2.0 / (slow as f64 + 1.0));
    let full: Vec<f64> = (0..x.len()).map(|t| exp_smooth_closed(x, af, t) - exp_smooth_closed(x, as_, t)).collect();
    let asig = 2.0 / (signal as f64 + 1.0);
    let sig: Vec<f64> = (0..x.len()).map(|t| exp_smooth_closed(&full, asig, t)).collect();
    let sig_start = slow + signal - 2;
    MacdRef {
        line: (0..x.len()).map(|t| (t + 1 >= slow).then_some(full[t])).collect(),
        signal: (0..x.len()).map(|t| (t >= sig_start).then_some(sig[t])).collect(),
        histogram: (0..x.len()).map(|t| (t >= sig_start).then(|| full[t] - sig[t])).collect(),
    }
}

/// Stochastic value from a sorted copy of each window.
pub fn rsv(b: &Ohlc, n: usize) -> Vec<Option<f64>> {
    (0..b.close.len())
        .map(|t| {
            if t + 1 < n {
                return None;
            }
            let mut highs = b.high[t + 1 - n..=t].to_vec();
            let mut lows = b.low[t + 1 - n..=t].to_vec();
            highs.sort_by(f64::total_cmp);
            lows.sort_by(f64::total_cmp);
            let (hh, ll) = (highs[n - 1], lows[0]);
            Some(if hh > ll { 100.0 * (b.close[t] - ll) / (hh - ll) } else { 50.0 })
        })
        .collect()
}

pub struct KdjRef {
    pub k: Vec<Option<f64>>,
    pub d: Vec<Option<f64>>,
    pub j: Vec<Option<f64>>,
}

/// K and D as explicit sums over the stochastic values, starting from 50.
pub fn kdj(b: &Ohlc, n: usize) -> KdjRef {
    let r = rsv(b, n);
    let first = n - 1;
    let len = b.close.len();
    let smooth = |input: &[f64], m: usize| -> f64 {
        // input[0] is the seed 50, input[1..] the smoothed values.
        let mut total = (2.0f64 / 3.0).powi(m as i32) * input[0];
        for u in 1..=m {
            total += (2.0f64 / 3.0).powi((m - u) as i32) * input[u] / 3.0;
        }
        total
    };
    let mut rs = vec![50.0];
    rs.extend((first..len).map(|t| r[t].expect("available")));
    let ks: Vec<f64> = std::iter::once(50.0).chain((1..rs.len()).map(|m| smooth(&rs, m))).collect();
    let ds: Vec<f64> = std::iter::once(50.0).chain((1..ks.len()).map(|m| smooth(&ks, m))).collect();
    let at = |v: &[f64], t: usize| (t >= first).then(|| v[t - first + 1]);
    KdjRef {
        k: (0..len).map(|t| at(&ks, t)).collect(),
        d: (0..len).map(|t| at(&ds, t)).collect(),
        j: (0..len).map(|t| at(&ks, t).zip(at(&ds, t)).map(|(k, d)| 3.0 * k - 2.0 * d)).collect(),
    }
}

pub struct BollingerRef {
    pub percent_b: Vec<Option<f64>>,
    pub width: Vec<Option<f64>>,
}

/// Population variance from the pairwise identity `sum_ij (x_i - x_j)^2 / (2 n^2)`.
pub fn bollinger(x: &[f64], n: usize, k: f64) -> BollingerRef {
    let mut percent_b = Vec::new();
    let mut width = Vec::new();
    for t in 0..x.len() {
        if t + 1 < n {
            percent_b.push(None);
            width.push(None);
            continue;
        }
        let w = &x[t + 1 - n..=t];
        let mean = w.iter().sum::<f64>() / n as f64;
        let mut pairs = 0.0;
        for a in w {
            for b in w {
                pairs += (a - b) * (a - b);
            }
        }
        let sd = (pairs / (2.0 * (n * n) as f64)).sqrt();
        let band = 2.0 * k * sd;
        percent_b.push(Some(if band > 0.0 { (x[t] - (mean - k * sd)) / band } else { 0.5 }));
        width.push(Some(band / mean));
    }
    BollingerRef { percent_b, width }
}

pub fn adx(b: &Ohlc, n: usize) -> Vec<Option<f64>> {
    let len = b.close.len();
    let tr = true_range(b);
    let mut plus = vec![0.0; len];
    let mut minus = vec![0.0; len];
    for t in 1..len {
        let up = b.high[t] - b.high[t - 1];
        let down = b.low[t - 1] - b.low[t];
        plus[t] = if up > down && up > 0.0 { up } else { 0.0 };
        minus[t] = if down > up && down > 0.0 { down } else { 0.0 };
    }
    // Running Wilder sum: plain sum over 1..=n, then S - S/n + x, as a closed form.
    let keep = 1.0 - 1.0 / n as f64;
    let wilder_sum = |x: &[f64], t: usize| -> f64 {
        let base: f64 = x[1..=n].iter().sum();
        let mut total = keep.powi((t - n) as i32) * base;
        for u in n + 1..=t {
            total += keep.powi((t - u) as i32) * x[u];
        }
        total
    };
    let mut dx = vec![0.0; len];
    for t in n..len {
        let s_tr = wilder_sum(&tr, t);
        let (p, m) = if s_tr > 0.0 {
            (100.0 * wilder_sum(&plus, t) / s_tr, 100.0 * wilder_sum(&minus, t) / s_tr)
        } else {
            (0.0, 0.0)
        };
        dx[t] = if p + m > 0.0 { 100.0 * (p - m).abs() / (p + m) } else { 0.0 };
    }
    (0..len).map(|t| if t < n { None } else { wilder_closed(&dx, n, n, t) }).collect()
}

/// The eight metrics of a NAV path, computed directly from their definitions.
/// Order: CR, AR, STD, DD, Sharpe, Sortino, MDD, Calmar.
pub fn metrics(nav: &[f64]) -> [Option<f64>; 8] {
    let r: Vec<f64> = (1..nav.len()).map(|t| nav[t] / nav[t - 1] - 1.0).collect();
    let days = r.len() as f64;
    let cr = nav[nav.len() - 1] / nav[0] - 1.0;
    let ar = (1.0 + cr).powf(252.0 / days) - 1.0;
    let sd = |v: &[f64]| -> f64 {
        if v.len() < 2 {
            return 0.0;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let std = sd(&r) * 252f64.sqrt();
    let neg: Vec<f64> = r.iter().copied().filter(|x| *x < 0.0).collect();
    let dd = sd(&neg) * 252f64.sqrt();
    // Worst peak-to-trough loss over all ordered pairs.
    let mut mdd = 0.0f64;
    for i in 0..nav.len() {
        for j in i..nav.len() {
            mdd = mdd.min(nav[j] / nav[i] - 1.0);
        }
    }
    let div = |a: f64, b: f64| (b != 0.0).then(|| a / b);
    [Some(cr), Some(ar), Some(std), Some(dd), div(ar, std), div(ar, dd), Some(mdd), div(ar, -mdd)]
}

/// Compares an engine series against a reference: availability must agree
/// and values must match within `tol`. Returns the first disagreement.
pub fn compare(name: &str, got: &[Option<f64>], want: &[Option<f64>], tol: f64) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{name}: length {} vs {}", got.len(), want.len()));
    }
    for (t, (g, w)) in got.iter().zip(want).enumerate() {
        match (g, w) {
            (None, None) => {}
            (Some(a), Some(b)) if close_to(*a, *b, tol) => {}
            _ => return Err(format!("{name}[{t}]: engine {g:?}, reference {w:?}")),
        }
    }
    Ok(())
}

/// Checks every technical indicator against its reference on `count` random
/// series with random windows.
pub fn check_indicators(count: u64, tol: f64) -> Result<usize, String> {
    use hiquant::indicators as ind;
    let avail = |s: &ind::Series| (0..s.len()).map(|t| s.get(t)).collect::<Vec<_>>();
    let mut compared = 0;
    for seed in 0..count {
        let mut r = rng(10_000 + seed);
        let len = r.random_range(60..300);
        let b = random_ohlc(seed, len);
        let n = r.random_range(2..30);
        let fail = |e: hiquant::Error| format!("seed {seed}: {e}");
        let ctx = |e: String| format!("seed {seed} len {len} n {n}: {e}");
        compare("sma", &avail(&ind::sma(&b.close, n).map_err(fail)?), &sma(&b.close, n), tol).map_err(ctx)?;
        compare("ema", &avail(&ind::ema(&b.close, n).map_err(fail)?), &ema(&b.close, n), tol).map_err(ctx)?;
        compare("rsi", &avail(&ind::rsi(&b.close, n).map_err(fail)?), &rsi(&b.close, n), tol).map_err(ctx)?;
        compare("atr", &avail(&ind::atr(&b.high, &b.low, &b.close, n).map_err(fail)?), &atr(&b, n), tol)
            .map_err(ctx)?;
        let fast = r.random_range(2..15);
        let slow = fast + r.random_range(1..20);
        let sig = r.random_range(2..12);
        let m = ind::macd(&b.close, fast, slow, sig).map_err(fail)?;
        let mr = macd(&b.close, fast, slow, sig);
        compare("macd", &avail(&m.macd), &mr.line, tol).map_err(ctx)?;
        compare("macd signal", &avail(&m.signal), &mr.signal, tol).map_err(ctx)?;
        compare("macd histogram", &avail(&m.histogram), &mr.histogram, tol).map_err(ctx)?;
        let k = ind::kdj(&b.high, &b.low, &b.close, n).map_err(fail)?;
        let kr = kdj(&b, n);
        compare("kdj k", &avail(&k.k), &kr.k, tol).map_err(ctx)?;
        compare("kdj d", &avail(&k.d), &kr.d, tol).map_err(ctx)?;
        compare("kdj j", &avail(&k.j), &kr.j, tol).map_err(ctx)?;
        let width = 0.5 + 2.5 * r.random::<f64>();
        let bb = ind::bollinger(&b.close, n, width).map_err(fail)?;
        let br = bollinger(&b.close, n, width);
        compare("bollinger %b", &avail(&bb.percent_b), &br.percent_b, tol).map_err(ctx)?;
        compare("bollinger width", &avail(&bb.width), &br.width, tol).map_err(ctx)?;
        compare("adx", &avail(&ind::adx(&b.high, &b.low, &b.close, n).map_err(fail)?), &adx(&b, n), tol)
            .map_err(ctx)?;
        compared += 14;
    }
    Ok(compared)
}

/// Checks the metrics report against the direct definitions on `count` random NAV paths.
pub fn check_metrics(count: u64, tol: f64) -> Result<usize, String> {
    for seed in 0..count {
        let len = 30 + (seed as usize * 37) % 500;
        let nav = random_nav(500 + seed, len);
        let got = hiquant::backtest::metrics_from_nav(&nav).map_err(|e| e.to_string())?.values();
        let want = metrics(&nav);
        for (k, (g, w)) in got.iter().zip(&want).enumerate() {
            let ok = match (g, w) {
                (Some(a), Some(b)) => close_to(*a, *b, tol),
                (None, None) => true,
                _ => false,
            };
            if !ok {
                let name = hiquant::backtest::MetricsReport::NAMES[k];
                return Err(format!("path {seed}: {name} engine {g:?}, reference {w:?}"));
            }
        }
    }
    Ok(count as usize)
}

/// Outcome of the finite-difference gradient comparison.
#[derive(Debug, Default)]
pub struct GradientReport {
    pub checked: usize,
    /// Coordinates whose perturbation crossed a clip or top-k boundary.
    pub skipped: usize,
    pub max_rel_error: f64,
}

fn random_simplex(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -r.random::<f64>().max(1e-12).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Piecewise branches the actor loss takes on each transition: the kept
/// agents and which side of the clip the surrogate is on.
fn actor_branches(
    actor: &hiquant::allocator::Mlp,
    batch: &[hiquant::allocator::Transition],
    hyper: &hiquant::allocator::HyperParams,
) -> Vec<(Vec<usize>, i8)> {
    use hiquant::allocator::{policy_forward, select_action, soft_log_prob, state_reference};
    let n = actor.n_out();
    batch
        .iter()
        .map(|t| {
            let p = policy_forward(&actor.forward(t.state()).output, hyper.temperature).expect("finite");
            let ratio = (soft_log_prob(t.action(), &p) - t.log_pi_old()).exp();
            let side = if ratio < 1.0 - hyper.clip_eps {
                -1
            } else if ratio > 1.0 + hyper.clip_eps {
                1
            } else {
                0
            };
            let masked = select_action(&p, state_reference(t.state(), n), hyper.beta_ref, hyper.top_k);
            (masked.selected, side)
        })
        .collect()
}

/// Compares the analytic critic and actor gradients with central differences
/// of step `h` over `draws` random networks and batches.
pub fn check_gradients(draws: u64, h: f64, floor: f64) -> Result<GradientReport, String> {
    use hiquant::allocator::{
        actor_loss, critic_loss, policy_forward, select_action, td_targets, HyperParams, LossInputs, Mlp, Source,
        Transition,
    };
    let n = 4;
    let mut report = GradientReport::default();
    for draw in 0..draws {
        let mut r = rng(70_000 + draw);
        let hyper = HyperParams {
            hidden: 8,
            history_days: 3,
            gamma: 0.9,
            beta_entropy: 0.05,
            beta_mse: 0.5,
            ..HyperParams::default()
        };
        let dim = hyper.state_dim(n);
        let mut actor = Mlp::new(dim, hyper.hidden, n, &mut r);
        let mut critic = Mlp::new(dim + n, hyper.hidden, 1, &mut r);
        let actor_target = Mlp::new(dim, hyper.hidden, n, &mut r);
        let critic_target = Mlp::new(dim + n, hyper.hidden, 1, &mut r);
        let random_state = |r: &mut ChaCha8Rng| -> Vec<f64> {
            let mut s: Vec<f64> = (0..dim - n).map(|_| r.random_range(-1.0..1.0)).collect();
            s.extend(random_simplex(r, n));
            s
        };
        let sources = [Source::Real, Source::Expert, Source::Specific, Source::Uniform, Source::Current];
        let mut batch = Vec::new();
        for k in 0..12 {
            let s = random_state(&mut r);
            let p = policy_forward(&actor.forward(&s).output, hyper.temperature).expect("finite");
            // Behavior policy near the current one so some ratios fall inside the clip.
            let behavior: Vec<f64> = {
                let raw: Vec<f64> = p.iter().map(|v| v * (0.15 * normal(&mut r)).exp()).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            };
            let action = if k % 3 == 0 {
                random_simplex(&mut r, n)
            } else {
                select_action(&behavior, &random_simplex(&mut r, n), r.random(), 1 + k % n).weights
            };
            let next = random_state(&mut r);
            let reward = 0.1 * normal(&mut r);
            batch.push(Transition::new(s, behavior, action, reward, next, sources[k % sources.len()]));
        }
        let refs: Vec<&Transition> = batch.iter().collect();
        let beta_bc = 0.5 + r.random::<f64>();
        let inputs = |a: &Mlp, c: &Mlp| -> (f64, f64) {
            let inp = LossInputs {
                actor: a,
                critic: c,
                actor_target: &actor_target,
                critic_target: &critic_target,
                hyper: &hyper,
                beta_bc,
            };
            let y = td_targets(&inp, &refs).expect("targets");
            (critic_loss(&inp, &refs, &y).expect("critic").0, actor_loss(&inp, &refs, &y).expect("actor").0.total)
        };
        let inp = LossInputs {
            actor: &actor,
            critic: &critic,
            actor_target: &actor_target,
            critic_target: &critic_target,
            hyper: &hyper,
            beta_bc,
        };
        let y = td_targets(&inp, &refs).map_err(|e| e.to_string())?;
        let critic_grad = critic_loss(&inp, &refs, &y).map_err(|e| e.to_string())?.1;
        let actor_grad = actor_loss(&inp, &refs, &y).map_err(|e| e.to_string())?.1;

        let mut record = |analytic: f64, numeric: f64, what: &str, i: usize| -> Result<(), String> {
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(rel);
            if rel.is_nan() {
                return Err(format!("draw {draw}: {what} parameter {i} gave NaN"));
            }
            Ok(())
        };
        for i in 0..critic.params().len() {
            let base = critic.params()[i];
            critic.params_mut()[i] = base + h;
            let up = inputs(&actor, &critic).0;
            critic.params_mut()[i] = base - h;
            let down = inputs(&actor, &critic).0;
            critic.params_mut()[i] = base;
            record(critic_grad[i], (up - down) / (2.0 * h), "critic", i)?;
        }
        let at_base = actor_branches(&actor, &batch, &hyper);
        for i in 0..actor.params().len() {
            let base = actor.params()[i];
            actor.params_mut()[i] = base + h;
            let up = inputs(&actor, &critic).1;
            let crossed_up = actor_branches(&actor, &batch, &hyper) != at_base;
            actor.params_mut()[i] = base - h;
            let down = inputs(&actor, &critic).1;
            let crossed_down = actor_branches(&actor, &batch, &hyper) != at_base;
            actor.params_mut()[i] = base;
            if crossed_up || crossed_down {
                report.skipped += 1;
                continue;
            }
            record(actor_grad[i], (up - down) / (2.0 * h), "actor", i)?;
        }
    }
    Ok(report)
}

/// Runs the masked action selection on `count` random policy outputs and
/// returns the first violation of non-negativity, unit mass, support size or
/// support membership.
pub fn check_action_simplex(count: u64) -> Result<usize, String> {
    use hiquant::allocator::{policy_forward, select_action, top_k_indices};
    let mut r = rng(90_210);
    for case in 0..count {
        let n = r.random_range(2..9);
        let scale = [0.1, 1.0, 10.0, 60.0][case as usize % 4];
        let logits: Vec<f64> = (0..n).map(|_| scale * normal(&mut r)).collect();
        let temperature = 0.2 + 2.0 * r.random::<f64>();
        let p = policy_forward(&logits, temperature).map_err(|e| e.to_string())?;
        let reference = random_simplex(&mut r, n);
        let beta_ref = if case % 5 == 0 { 0.0 } else { r.random::<f64>() };
        let k = r.random_range(1..=n);
        let a = select_action(&p, &reference, beta_ref, k);
        let total: f64 = a.weights.iter().sum();
        let support: Vec<usize> = (0..n).filter(|&j| a.weights[j] > 0.0).collect();
        let v: Vec<f64> = p.iter().zip(&reference).map(|(x, y)| x + beta_ref * y).collect();
        let expected = top_k_indices(&v, k);
        if a.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(format!("case {case}: negative or non-finite weight {:?}", a.weights));
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("case {case}: mass {total}"));
        }
        if support.len() > k || support.iter().any(|j| !expected.contains(j)) {
            return Err(format!("case {case}: support {support:?} outside top-{k} {expected:?}"));
        }
    }
    Ok(count as usize)
}

/// Small synthetic market for pipeline checks.
pub fn small_market(
    n_assets: usize,
    n_days: usize,
    seed: u64,
) -> (hiquant::data::DataPanel, hiquant::data::MacroSeries) {
    let cfg = hiquant::data::SynthConfig { n_assets, n_days, ..Default::default() };
    hiquant::data::generate_synthetic(&cfg, seed).expect("synthetic market")
}

/// Allocator settings small enough to rerun a backtest many times.
pub fn quick_allocator() -> hiquant::allocator::HyperParams {
    hiquant::allocator::HyperParams { hidden: 16, ppo_epochs: 1, max_minibatches: 2, ..Default::default() }
}

/// Reruns strategies on `truncations` random prefixes of a market and checks
/// that every ledger row and agent weight dated on or before the cut matches
/// the full-horizon run bit for bit. Returns the number of rows compared.
pub fn check_no_lookahead(n_assets: usize, n_days: usize, truncations: usize, seed: u64) -> Result<usize, String> {
    use hiquant::agents::{AgentId, DeterministicStub};
    use hiquant::backtest::{BacktestConfig, BaselineKind, Backtester, Strategy};
    use hiquant::data::Month;
    use std::sync::Arc;

    let (panel, series) = small_market(n_assets, n_days, seed);
    let warmup = 40;
    let record = 60;
    let config = BacktestConfig {
        allocator: quick_allocator(),
        seed,
        ..BacktestConfig::new(warmup, record, n_days)
    };
    let strategies = [
        Strategy::Hierarchical,
        Strategy::Standalone(AgentId::Technical),
        Strategy::Baseline(BaselineKind::Kdj),
        Strategy::EqualWeight,
    ];
    let e = |e: hiquant::Error| e.to_string();
    let full_bt = Backtester::new(&panel, &series, Arc::new(DeterministicStub), config.clone()).map_err(e)?;
    let full: Vec<_> = strategies.iter().map(|s| full_bt.run(*s)).collect::<Result<_, _>>().map_err(e)?;

    let mut r = rng(seed ^ 0x5eed);
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() < truncations {
        let t = r.random_range(record..n_days - 1);
        if !cuts.contains(&t) {
            cuts.push(t);
        }
    }
    let mut compared = 0;
    for &t in &cuts {
        let short_panel = panel.truncate(t);
        let short_series = series.truncate_days(t + 1, Month::of(panel.date(t)));
        let bt = Backtester::new(&short_panel, &short_series, Arc::new(DeterministicStub), config.clone()).map_err(e)?;
        for (s, whole) in strategies.iter().zip(&full) {
            let part = bt.run(*s).map_err(e)?;
            let cutoff = panel.date(t);
            let keep = whole.ledger.rows.iter().take_while(|row| row.date <= cutoff).count();
            if part.ledger.rows.len() != keep {
                return Err(format!("{} cut at {cutoff}: {} rows vs {keep}", s.name(), part.ledger.rows.len()));
            }
            for (k, (a, b)) in part.ledger.rows.iter().zip(&whole.ledger.rows).enumerate() {
                if a != b {
                    return Err(format!("{} cut at {cutoff}: row {k} ({}) differs", s.name(), a.date));
                }
            }
            let whole_weights = &whole.agent_weights[..keep.min(whole.agent_weights.len())];
            if part.agent_weights[..] != *whole_weights {
                return Err(format!("{} cut at {cutoff}: agent weights differ", s.name()));
            }
            compared += keep;
        }
    }
    Ok(compared)
}

/// Random industry weights on the simplex over `codes`.
pub fn random_industry_weights(
    r: &mut ChaCha8Rng,
    codes: &[String],
    kind: hiquant::macro_agent::WeightKind,
) -> hiquant::macro_agent::IndustryWeights {
    hiquant::macro_agent::IndustryWeights { industries: codes.to_vec(), weights: random_simplex(r, codes.len()), kind }
}

/// Blend boundaries: the pure momentum and pure macro settings reproduce
/// their inputs exactly, and interior settings are the convex combination.
pub fn check_blend(cases: u64) -> Result<usize, String> {
    use hiquant::macro_agent::{blend_and_filter, WeightKind};
    let (panel, series) = small_market(40, 30, 3);
    let codes = series.industries().to_vec();
    let pool: Vec<usize> = (0..panel.n_assets()).collect();
    let mut r = rng(4242);
    for case in 0..cases {
        let w_macro = random_industry_weights(&mut r, &codes, WeightKind::MacroPrior);
        let w_mom = random_industry_weights(&mut r, &codes, WeightKind::Momentum);
        let m = r.random_range(1..=codes.len());
        let at = |lambda: f64| {
            blend_and_filter(&w_macro, &w_mom, lambda, panel.assets(), &pool, m).map_err(|e| e.to_string())
        };
        if at(0.0)?.0.weights != w_mom.weights {
            return Err(format!("case {case}: momentum-only blend differs from momentum weights"));
        }
        if at(1.0)?.0.weights != w_macro.weights {
            return Err(format!("case {case}: macro-only blend differs from macro weights"));
        }
        let lambda = r.random::<f64>();
        for (j, got) in at(lambda)?.0.weights.iter().enumerate() {
            let want = lambda * w_macro.weights[j] + (1.0 - lambda) * w_mom.weights[j];
            if (got - want).abs() > 1e-15 {
                return Err(format!("case {case}: industry {j} blended {got}, expected {want}"));
            }
        }
    }
    Ok(cases as usize)
}

/// Mean distance between the 21-day rolling realized volatility and the
/// target over the turbulent half of a calm-then-turbulent stream, for the
/// scaled and the unscaled returns. Returns `(scaled, unscaled)`.
pub fn volatility_regime(seed: u64, calm_vol: f64, wild_vol: f64, days: usize) -> (f64, f64) {
    use hiquant::risk::{RiskController, RiskParams};
    const ROLL: usize = 21;
    let params = RiskParams::default();
    let target = params.sigma_target;
    let mut r = rng(seed);
    let mut rc = RiskController::new(params).expect("defaults are valid");
    let (mut scaled, mut unscaled) = (Vec::new(), Vec::new());
    for d in 0..2 * days {
        let vol = if d < days { calm_vol } else { wild_vol };
        let ret = vol / 252f64.sqrt() * normal(&mut r);
        scaled.push(rc.beta() * ret);
        unscaled.push(ret);
        rc.record(ret);
    }
    let gap = |v: &[f64]| {
        let windows: Vec<f64> = (days + ROLL..=2 * days)
            .map(|end| {
                let w = &v[end - ROLL..end];
                let m = w.iter().sum::<f64>() / ROLL as f64;
                (w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (ROLL - 1) as f64 * 252.0).sqrt()
            })
            .collect();
        windows.iter().map(|x| (x - target).abs()).sum::<f64>() / windows.len() as f64
    };
    (gap(&scaled), gap(&unscaled))
}
