use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ValueEnum;
use hiquant::agents::{
    tune_agent_params, AgentId, DeterministicStub, PrecomputedTable, RemoteClient, ScorerParams, ScoringContext,
    TextScoreProvider, TuneResult,
};
use hiquant::backtest::{
    ablation_run, excess_series, write_ablation_csv, BacktestConfig, Backtester, MetricsReport, RunOutput, Strategy,
};
use hiquant::data::{
    generate_synthetic, load_macro, load_panel, obfuscate, obfuscate_macro, write_fundamentals_csv,
    write_industry_map_csv, write_industry_returns_csv, write_macro_csv, write_prices_csv, write_text_csv, DataPanel,
    Day, MacroSeries, PanelPaths,
};
use rayon::prelude::*;

use crate::config::{resolve_windows, ProviderKind, RunConfig};
use crate::outputs::{
    sha256_hex, write_agent_weights, write_cumulative, write_telemetry, Manifest, Outputs, RunLock, RunLog,
};
use crate::CliError;

pub const TUNED_PARAMS: &str = "tuned_params.json";
pub const METRICS: &str = "metrics.json";
pub const ABLATION: &str = "ablation.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Generate a synthetic panel under `<out>/data`.
    Synth,
    /// Search each agent's parameters on the train window.
    Tune,
    /// Run the hierarchical strategy over the train window.
    Train,
    /// Run every strategy over the test window.
    Backtest,
    /// Run the full model and its five ablations.
    Ablate,
    /// Summarize earlier outputs as Markdown.
    Report,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

/// Runs `command` with outputs under `out`, then writes `manifest_<command>.json`.
pub fn execute(command: Command, config: &RunConfig, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    let _lock = RunLock::acquire(out)?;
    let mut log = RunLog::open(out)?;
    log.line(&format!("command={command} out={}", out.display()));
    log.line(&format!("resolved config:\n{}", config.to_toml()));
    let mut outputs = Outputs::new(out);
    let result = match command {
        Command::Synth => synth(config, &mut outputs, &mut log),
        Command::Tune => tune(config, &mut outputs, &mut log),
        Command::Train => train(config, &mut outputs, &mut log),
        Command::Backtest => backtest(config, &mut outputs, &mut log),
        Command::Ablate => ablate(config, &mut outputs, &mut log),
        Command::Report => report(&mut outputs, &mut log),
    };
    if let Err(e) = &result {
        log.line(&format!("command={command} failed: {e}"));
        return result;
    }
    let resolved = config.to_toml();
    let manifest = Manifest {
        command: command.to_string(),
        seed: config.seed,
        config_sha256: sha256_hex(resolved.as_bytes()),
        versions: BTreeMap::from([("hiquant", env!("CARGO_PKG_VERSION")), ("manifest", "1")]),
        config: resolved,
        outputs: outputs.checksums()?,
    };
    let path = out.join(format!("manifest_{command}.json"));
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(path, text)?;
    log.line(&format!("command={command} done"));
    Ok(())
}

fn synth(config: &RunConfig, outputs: &mut Outputs, log: &mut RunLog) -> Result<(), CliError> {
    let synth = config
        .synth
        .as_ref()
        .ok_or_else(|| CliError::Precondition("`synth` needs a [synth] section in the config".into()))?;
    let seed = config.require_seed()?;
    let (panel, series) = log.stage("generate", || Ok(generate_synthetic(synth, seed)?))?;
    log.stage("write_data", || {
        outputs.write("data/prices.csv", |w| Ok(write_prices_csv(&panel, w)?))?;
        outputs.write("data/fundamentals.csv", |w| Ok(write_fundamentals_csv(&panel, w)?))?;
        outputs.write("data/industry_map.csv", |w| Ok(write_industry_map_csv(&panel, w)?))?;
        outputs.write("data/text_signals.csv", |w| Ok(write_text_csv(&panel, w)?))?;
        outputs.write("data/macro.csv", |w| Ok(write_macro_csv(&series, w)?))?;
        outputs.write("data/industry_returns.csv", |w| {
            Ok(write_industry_returns_csv(&series, panel.calendar(), w)?)
        })
    })?;
    log.line(&format!("synthetic panel: {} assets x {} days", panel.n_assets(), panel.n_days()));
    Ok(())
}

fn synth_paths(dir: &Path) -> PanelPaths {
    PanelPaths {
        prices: vec![dir.join("prices.csv")],
        fundamentals: Some(dir.join("fundamentals.csv")),
        industry_map: dir.join("industry_map.csv"),
        text: Some(dir.join("text_signals.csv")),
        macro_csv: dir.join("macro.csv"),
        industry_returns: dir.join("industry_returns.csv"),
    }
}

/// Configured data paths, else the output of an earlier `synth`.
fn load_data(config: &RunConfig, out: &Path) -> Result<(DataPanel, MacroSeries), CliError> {
    let paths = match &config.data {
        Some(p) => p.clone(),
        None => {
            let dir = out.join("data");
            if !dir.join("prices.csv").is_file() {
                return Err(CliError::Precondition(format!(
                    "no input data: set [data] paths in the config or run `hiquant synth` with --out {}",
                    out.display()
                )));
            }
            synth_paths(&dir)
        }
    };
    let panel = load_panel(&paths)?;
    let series = load_macro(&paths.macro_csv, &paths.industry_returns, panel.calendar())?;
    Ok(match &config.obfuscation.salt {
        Some(salt) => (obfuscate(&panel, salt.as_bytes()), obfuscate_macro(&series, salt.as_bytes())),
        None => (panel, series),
    })
}

fn provider(config: &RunConfig) -> Result<Arc<dyn TextScoreProvider>, CliError> {
    Ok(match config.text.provider {
        ProviderKind::Stub => Arc::new(DeterministicStub),
        ProviderKind::Precomputed => {
            Arc::new(PrecomputedTable::load(config.text.table.as_deref().expect("validated"))?)
        }
        ProviderKind::Remote => {
            Arc::new(RemoteClient { endpoint: config.text.endpoint.clone().expect("validated") })
        }
    })
}

/// Explicit `[agents]`, else the output of an earlier `tune`.
fn scorer_params(config: &RunConfig, out: &Path) -> Result<ScorerParams, CliError> {
    if let Some(p) = &config.agents {
        return Ok(p.clone());
    }
    let path = out.join(TUNED_PARAMS);
    let text = fs::read_to_string(&path).map_err(|_| {
        CliError::Precondition(format!(
            "no agent parameters: run `hiquant tune` with --out {} or set [agents] in the config",
            out.display()
        ))
    })?;
    let params: ScorerParams = serde_json::from_str(&text)
        .map_err(|e| CliError::Precondition(format!("{} is unreadable ({e}); rerun `hiquant tune`", path.display())))?;
    params.validate()?;
    Ok(params)
}

struct Prepared {
    panel: DataPanel,
    series: MacroSeries,
    train: Range<Day>,
    test: Range<Day>,
}

fn prepare(config: &RunConfig, out: &Path, log: &mut RunLog) -> Result<Prepared, CliError> {
    let (panel, series) = log.stage("load", || load_data(config, out))?;
    let (train, test) = resolve_windows(&config.windows, &panel)?;
    log.line(&format!(
        "train {}..={} test {}..={}",
        panel.date(train.start),
        panel.date(train.end - 1),
        panel.date(test.start),
        panel.date(test.end - 1)
    ));
    Ok(Prepared { panel, series, train, test })
}

fn backtest_config(config: &RunConfig, scorer: ScorerParams, seed: u64, warmup: Day, record: Day, end: Day) -> BacktestConfig {
    BacktestConfig {
        macro_params: config.macro_params.clone(),
        scorer,
        allocator: config.allocator.clone(),
        risk: config.risk.clone(),
        flags: config.ablation,
        cost_bps: config.backtest.cost_bps,
        seed,
        warmup_start: warmup,
        record_start: record,
        end,
    }
}

fn tune(config: &RunConfig, outputs: &mut Outputs, log: &mut RunLog) -> Result<(), CliError> {
    let p = prepare(config, outputs.root(), log)?;
    let provider = provider(config)?;
    let ctx = ScoringContext::new(&p.panel, provider);
    let mut tuned = config.agents.clone().unwrap_or_default();
    let mut results: Vec<TuneResult> = Vec::new();
    for agent in AgentId::ALL {
        let result = log.stage(&format!("tune_{agent}"), || {
            let grid = config.grid.points(agent, &tuned)?;
            Ok(tune_agent_params(&ctx, agent, p.train.clone(), &grid)?)
        })?;
        match agent {
            AgentId::Fundamental => tuned.fundamental = result.params.fundamental.clone(),
            AgentId::Technical => tuned.technical = result.params.technical.clone(),
            AgentId::News => tuned.news = result.params.news.clone(),
            AgentId::Report => tuned.report = result.params.report.clone(),
        }
        log.line(&format!("{agent}: best train Sharpe {}", result.sharpe));
        results.push(result);
    }
    outputs.json(TUNED_PARAMS, &tuned)?;
    outputs.json("tuning.json", &results)?;
    Ok(())
}

fn write_hierarchical(outputs: &mut Outputs, run: &RunOutput, suffix: &str) -> Result<(), CliError> {
    outputs.write("telemetry.csv", |w| write_telemetry(&run.telemetry, w))?;
    if let Some(c) = &run.checkpoint {
        outputs.json("checkpoint.json", c)?;
    }
    outputs.write(&format!("agent_weights{suffix}.csv"), |w| {
        write_agent_weights(&run.ledger, &run.agents, &run.agent_weights, w)
    })
}

fn train(config: &RunConfig, outputs: &mut Outputs, log: &mut RunLog) -> Result<(), CliError> {
    let seed = config.require_seed()?;
    let scorer = scorer_params(config, outputs.root())?;
    let p = prepare(config, outputs.root(), log)?;
    let cfg = backtest_config(config, scorer, seed, p.train.start, p.train.start, p.train.end);
    let bt = Backtester::new(&p.panel, &p.series, provider(config)?, cfg)?;
    let run = log.stage("train", || Ok(bt.run(Strategy::Hierarchical)?))?;
    outputs.write("ledger_hierarchical_train.csv", |w| Ok(run.ledger.write_csv(&p.panel, w)?))?;
    outputs.write("industry_weights.csv", |w| Ok(bt.schedule().write_csv(&p.panel, w)?))?;
    write_hierarchical(outputs, &run, "_train")?;
    log.line(&format!("train window metrics: {}", serde_json::to_string(&run.ledger.metrics()?)?));
    Ok(())
}

fn backtest(config: &RunConfig, outputs: &mut Outputs, log: &mut RunLog) -> Result<(), CliError> {
    let seed = config.require_seed()?;
    let scorer = scorer_params(config, outputs.root())?;
    let p = prepare(config, outputs.root(), log)?;
    let cfg = backtest_config(config, scorer, seed, p.train.start, p.test.start, p.test.end);
    let bt = Backtester::new(&p.panel, &p.series, provider(config)?, cfg)?;
    let runs: Vec<(Strategy, RunOutput)> = log.stage("strategies", || {
        Strategy::all()
            .into_par_iter()
            .map(|s| Ok((s, bt.run(s)?)))
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let benchmark = &runs.iter().find(|(s, _)| *s == Strategy::EqualWeight).expect("always run").1.ledger;

    let mut metrics: BTreeMap<String, MetricsReport> = BTreeMap::new();
    let mut excess = Vec::new();
    for (strategy, run) in &runs {
        let name = strategy.name();
        outputs.write(&format!("ledger_{name}.csv"), |w| Ok(run.ledger.write_csv(&p.panel, w)?))?;
        metrics.insert(name.clone(), run.ledger.metrics()?);
        if *strategy != Strategy::EqualWeight {
            let e = excess_series(&run.ledger, benchmark)?;
            metrics.insert(e.strategy.clone(), e.metrics()?);
            excess.push(e);
        }
    }
    outputs.json(METRICS, &metrics)?;
    let ledgers: Vec<_> = runs.iter().map(|(_, r)| &r.ledger).collect();
    outputs.write("cumulative_returns.csv", |w| write_cumulative(&ledgers, w))?;
    outputs.write("excess_returns.csv", |w| write_cumulative(&excess.iter().collect::<Vec<_>>(), w))?;
    outputs.write("industry_weights.csv", |w| Ok(bt.schedule().write_csv(&p.panel, w)?))?;
    let hierarchical = &runs[0].1;
    write_hierarchical(outputs, hierarchical, "")?;
    if let Some(m) = metrics.get("hierarchical") {
        log.line(&format!("hierarchical test metrics: {}", serde_json::to_string(m)?));
    }
    Ok(())
}

fn ablate(config: &RunConfig, outputs: &mut Outputs, log: &mut RunLog) -> Result<(), CliError> {
    let seed = config.require_seed()?;
    let scorer = scorer_params(config, outputs.root())?;
    let p = prepare(config, outputs.root(), log)?;
    let cfg = backtest_config(config, scorer, seed, p.train.start, p.test.start, p.test.end);
    let bt = Backtester::new(&p.panel, &p.series, provider(config)?, cfg)?;
    let rows = log.stage("ablation", || Ok(ablation_run(&bt)?))?;
    outputs.write(ABLATION, |w| Ok(write_ablation_csv(&rows, w)?))?;
    for row in &rows {
        let name = &row.output.ledger.strategy;
        outputs.write(&format!("ledger_{name}.csv"), |w| Ok(row.output.ledger.write_csv(&p.panel, w)?))?;
    }
    Ok(())
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn report(outputs: &mut Outputs, log: &mut RunLog) -> Result<(), CliError> {
    let root: PathBuf = outputs.root().to_path_buf();
    let text = fs::read_to_string(root.join(METRICS)).map_err(|_| {
        CliError::Precondition(format!("no {METRICS} in {}: run `hiquant backtest` first", root.display()))
    })?;
    let metrics: BTreeMap<String, MetricsReport> = serde_json::from_str(&text)?;
    let mut md = String::from("# Backtest report\n\n| strategy |");
    for n in MetricsReport::NAMES {
        md.push_str(&format!(" {n} |"));
    }
    md.push_str(&format!("\n|---|{}\n", "---|".repeat(MetricsReport::NAMES.len())));
    for (name, m) in &metrics {
        md.push_str(&format!("| {name} |"));
        for v in m.values() {
            md.push_str(&format!(" {} |", fmt_metric(v)));
        }
        md.push('\n');
    }
    let ablation = root.join(ABLATION);
    if ablation.is_file() {
        md.push_str("\n# Ablation\n\n");
        let mut rdr = csv::Reader::from_path(&ablation)?;
        let headers = rdr.headers()?.clone();
        md.push_str(&format!("| {} |\n|{}\n", headers.iter().collect::<Vec<_>>().join(" | "), "---|".repeat(headers.len())));
        for rec in rdr.records() {
            let rec = rec?;
            let cells: Vec<String> = rec
                .iter()
                .enumerate()
                .map(|(k, c)| if k == 0 { c.to_string() } else { fmt_metric(c.parse().ok()) })
                .collect();
            md.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
    }
    outputs.write("report.md", |w| Ok(w.write_all(md.as_bytes())?))?;
    log.line(&format!("report over {} strategies", metrics.len()));
    print!("{md}");
    Ok(())
}
