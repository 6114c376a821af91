use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Backend, ExperimentConfig};
use super::manifest::{now, RunManifest};
use crate::agents::{buy_and_hold, dqn_baseline_train, rollout, DqnAgent};
use crate::dataio::{
    ingest, make_synthetic_panel, read_macro_csv, read_ohlcv_csv, write_macro_csv, write_ohlcv_csv, Dataset, IngestOptions, OhlcvFrame,
    Split, SyntheticParams, CC_RETURN, N_FEATURES,
};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate_generator, silhouette_1d, tsne_drift_diagnostic, wilcoxon_directional, BacktestReport, GenEvalReport};
use crate::genmodel::{load_checkpoint, save_checkpoint, synthesize_range, train_generator, GenDims, GenManifest, GenModel, Phase, PhaseSet};
use crate::market_env::{trade_log_csv, EnvConfig, MarketEnv};
use crate::nfsp::{evaluate_policy, total_variation, train, train_matrix_game, MatrixGame, NfspConfig, PolicyMode, TraderPolicy};
use crate::rng::stream;

pub const DATASET_FILE: &str = "dataset.json";
pub const GENERATOR_DIR: &str = "generator";
pub const NFSP_DIR: &str = "nfsp";

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(v)?).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, s: &str) -> Result<()> {
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Shared prologue and epilogue of every stage: output directory, manifest bookkeeping.
pub struct Stage<'a> {
    pub cfg: &'a ExperimentConfig,
    name: &'static str,
    started: String,
    manifest: RunManifest,
}

impl<'a> Stage<'a> {
    pub fn begin(cfg: &'a ExperimentConfig, name: &'static str) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
        let manifest = RunManifest::load_or_new(&cfg.out_dir, &cfg.hash())?;
        Ok(Self { cfg, name, started: now(), manifest })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.cfg.out_dir.join(rel)
    }

    pub fn finish(mut self, data_hash: Option<String>, paths: &[PathBuf], mut summary: Value) -> Result<Value> {
        if data_hash.is_some() {
            self.manifest.data_hash = data_hash;
        }
        let arts = self.manifest.record(&self.cfg.out_dir, self.name, self.started.clone(), paths)?;
        self.manifest.save(&self.cfg.out_dir)?;
        summary["command"] = json!(self.name);
        summary["artifacts"] = json!(arts);
        Ok(summary)
    }
}

fn list_tickers(dir: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "csv") {
            if let Some(s) = p.file_stem() {
                out.push(s.to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::NoData(format!("no CSV files in {}", dir.display())));
    }
    Ok(out)
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Arc<Dataset>> {
    let p = cfg.out_dir.join(DATASET_FILE);
    if !p.exists() {
        return Err(Error::NoData(format!("{} not found; run ingest first", p.display())));
    }
    Ok(Arc::new(Dataset::load(&p)?))
}

pub fn cmd_ingest(cfg: &ExperimentConfig) -> Result<Value> {
    let stage = Stage::begin(cfg, "ingest")?;
    let dir = cfg.ohlcv_dir();
    let tickers = if cfg.data.tickers.is_empty() { list_tickers(&dir)? } else { cfg.data.tickers.clone() };
    let frames: Vec<OhlcvFrame> = tickers.iter().map(|t| read_ohlcv_csv(&dir.join(format!("{t}.csv")), t)).collect::<Result<_>>()?;
    let macro_series = read_macro_csv(&cfg.macro_path())?;
    let opts = IngestOptions {
        split: cfg.split.clone(),
        window: cfg.window,
        tau_corr: cfg.selection.tau_corr,
        tau_red: cfg.selection.tau_red,
        target_horizon: cfg.selection.target_horizon,
    };
    let ds = ingest(&frames, &macro_series, &opts)?;
    let out = stage.path(DATASET_FILE);
    ds.save(&out)?;
    let hash = ds.hash();
    let summary = json!({
        "data_hash": hash,
        "shape": [ds.market.n_time(), ds.market.n_instruments(), ds.market.n_features()],
        "macro_selected": ds.macro_panel.names,
        "splits": ds.splits,
        "log": ds.log.entries,
    });
    stage.finish(Some(hash), &[out], summary)
}

pub fn cmd_train_generator(cfg: &ExperimentConfig, phases: Option<&str>, resume: Option<&Path>) -> Result<Value> {
    let stage = Stage::begin(cfg, "train-generator")?;
    let ds = load_dataset(cfg)?;
    let mut phases = PhaseSet::parse(phases.unwrap_or(&cfg.generator.phases))?;
    let g = &cfg.generator;
    let mut model = match resume {
        Some(dir) => {
            let (m, man) = load_checkpoint(dir)?;
            if man.data_hash != ds.hash() {
                return Err(Error::Config("resume checkpoint was trained on a different dataset".into()));
            }
            m
        }
        None => GenModel::new(GenDims::for_dataset(&ds, g.latent, g.noise, g.hidden), &mut stream(cfg.seed, "genmodel/init"))?,
    };
    let mut skipped = Vec::new();
    if model.phase >= Phase::Autoencoder && phases.autoencoder {
        phases.autoencoder = false;
        skipped.push("ae");
    }
    if model.phase >= Phase::Forecaster && phases.forecaster {
        phases.forecaster = false;
        skipped.push("forecast");
    }
    let log = train_generator(&mut model, &ds, &g.train, phases, cfg.seed)?;
    let dir = stage.path(GENERATOR_DIR);
    let man = save_checkpoint(&dir, &model, &GenManifest::describe(&model, &ds, &g.train, cfg.seed))?;
    let log_path = stage.path("generator_log.json");
    write_json(&log_path, &log)?;
    let last = |v: &Vec<f64>| v.last().copied();
    let summary = json!({
        "phase": model.phase,
        "skipped_phases": skipped,
        "params_sha256": man.params_sha256,
        "final_losses": {
            "reconstruction": last(&log.reconstruction),
            "forecast": last(&log.forecast),
            "discriminator": last(&log.discriminator),
            "generator": last(&log.generator),
        },
        "events": log.events,
    });
    stage.finish(Some(ds.hash()), &[dir, log_path], summary)
}

fn load_generator(cfg: &ExperimentConfig, ds: &Dataset, checkpoint: Option<&Path>) -> Result<GenModel> {
    let dir = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.join(GENERATOR_DIR));
    let (model, man) = load_checkpoint(&dir)?;
    if man.data_hash != ds.hash() {
        return Err(Error::Config("generator checkpoint was trained on a different dataset".into()));
    }
    Ok(model)
}

fn mean_opt(xs: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    (!v.is_empty()).then(|| crate::stats::mean(&v))
}

fn average_reports(reps: &[GenEvalReport]) -> GenEvalReport {
    let m = |f: fn(&GenEvalReport) -> f64| crate::stats::mean(&reps.iter().map(f).collect::<Vec<_>>());
    let o = |f: fn(&GenEvalReport) -> Option<f64>| mean_opt(&reps.iter().map(f).collect::<Vec<_>>());
    GenEvalReport {
        corr_diff_feature_macro: o(|r| r.corr_diff_feature_macro),
        corr_diff_inter_instrument: o(|r| r.corr_diff_inter_instrument),
        corr_diff_inter_feature: o(|r| r.corr_diff_inter_feature),
        acf_returns_diff: m(|r| r.acf_returns_diff),
        acf_absreturns_diff: m(|r| r.acf_absreturns_diff),
        leverage_diff: m(|r| r.leverage_diff),
    }
}

pub fn cmd_eval_generator(cfg: &ExperimentConfig, checkpoint: Option<&Path>, n_draws: Option<usize>, split: Split) -> Result<Value> {
    let stage = Stage::begin(cfg, "eval-generator")?;
    let ds = load_dataset(cfg)?;
    let model = load_generator(cfg, &ds, checkpoint)?;
    let n = n_draws.unwrap_or(cfg.eval.n_draws);
    if n == 0 {
        return Err(Error::Config("n-draws must be positive".into()));
    }
    let range = ds.splits.get(split);
    let real = ds.market.slice_time(range.clone());
    let mac = ds.macro_panel.slice_time(range.clone());
    let mut reps = Vec::with_capacity(n);
    for d in 0..n {
        let synth = synthesize_range(&model, &ds, range.clone(), &mut stream(cfg.seed, &format!("eval-generator/{d}")))?;
        reps.push(evaluate_generator(&real, &mac, &synth, CC_RETURN, cfg.eval.max_lag)?);
    }
    let report = average_reports(&reps);
    let out = stage.path("generator_eval.json");
    write_json(&out, &report)?;
    let summary = json!({ "split": split, "n_draws": n, "report": report });
    stage.finish(None, &[out], summary)
}

pub fn cmd_sample(cfg: &ExperimentConfig, checkpoint: Option<&Path>, split: Split) -> Result<Value> {
    let stage = Stage::begin(cfg, "sample")?;
    let ds = load_dataset(cfg)?;
    let model = load_generator(cfg, &ds, checkpoint)?;
    let range = ds.splits.get(split);
    let synth = synthesize_range(&model, &ds, range, &mut stream(cfg.seed, "sample"))?;
    let mut s = format!("date,ticker,{}\n", synth.features.join(","));
    let mut rows = 0;
    for t in 0..synth.n_time() {
        for i in 0..synth.n_instruments() {
            if !(0..synth.n_features()).any(|f| synth.is_valid(t, i, f)) {
                continue;
            }
            let vals: Vec<String> = (0..synth.n_features()).map(|f| synth.get(t, i, f).map(|v| v.to_string()).unwrap_or_default()).collect();
            s.push_str(&format!("{},{},{}\n", synth.dates[t], synth.tickers[i], vals.join(",")));
            rows += 1;
        }
    }
    let out = stage.path(&format!("synthetic_{}.csv", split_name(split)));
    write_text(&out, &s)?;
    stage.finish(None, &[out], json!({ "split": split, "rows": rows }))
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Valid => "valid",
        Split::Test => "test",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Game {
    Pennies,
    Biased,
}

fn build_env(cfg: &ExperimentConfig, ds: Arc<Dataset>, backend: Backend, env: EnvConfig, split: Split) -> Result<MarketEnv> {
    match backend {
        Backend::Historical => MarketEnv::historical(ds, env, split),
        Backend::Generative => {
            let model = load_generator(cfg, &ds, None)?;
            MarketEnv::generative(ds, Some(Arc::new(model)), env, split)
        }
        Backend::MatrixGame => Err(Error::Config("the matrix-game backend has no market environment".into())),
    }
}

pub fn cmd_train_nfsp(cfg: &ExperimentConfig, backend: Option<Backend>, steps: Option<u64>, game: Game) -> Result<Value> {
    let stage = Stage::begin(cfg, "train-nfsp")?;
    let backend = backend.unwrap_or(cfg.backend);
    if backend == Backend::MatrixGame {
        let mut nc = NfspConfig::matrix_game(cfg.seed);
        if let Some(s) = steps {
            nc.total_steps = s;
        }
        let g = match game {
            Game::Pennies => MatrixGame::matching_pennies(),
            Game::Biased => MatrixGame::biased(),
        };
        let (p, q) = g.mixed_nash_2x2()?;
        let r = train_matrix_game(&g, &nc)?;
        let tv_row = total_variation(&r.row_policy, &[p, 1.0 - p]);
        let tv_col = total_variation(&r.col_policy, &[q, 1.0 - q]);
        let summary = json!({ "backend": backend, "game": g, "nash": [p, q], "result": r, "tv_row": tv_row, "tv_col": tv_col });
        let out = stage.path("matrix_game.json");
        write_json(&out, &summary)?;
        return stage.finish(None, &[out], summary);
    }
    let ds = load_dataset(cfg)?;
    let mut env = build_env(cfg, ds.clone(), backend, cfg.env.clone(), Split::Train)?;
    let mut nc = NfspConfig { seed: cfg.seed, ..cfg.nfsp.clone() };
    if let Some(s) = steps {
        nc.total_steps = s;
    }
    let dir = stage.path(NFSP_DIR);
    let (state, arts) = train(nc, &mut env, Some(&dir))?;
    let last = state.log.last().cloned().unwrap_or_default();
    let summary = json!({
        "backend": backend,
        "steps": state.step,
        "episodes": state.episode,
        "counters": state.counters,
        "last_losses": last,
        "hashes": arts,
    });
    stage.finish(Some(ds.hash()), &[dir], summary)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Buyhold,
    Dqn,
}

#[derive(Clone, Debug, Serialize)]
struct BacktestRow {
    instrument: String,
    agent: String,
    arr: f64,
    sr: Option<f64>,
    mdd: f64,
    trade_count: usize,
    final_value: f64,
}

fn row(instrument: &str, agent: &str, r: &BacktestReport) -> BacktestRow {
    BacktestRow {
        instrument: instrument.to_string(),
        agent: agent.to_string(),
        arr: r.arr,
        sr: r.sr,
        mdd: r.mdd,
        trade_count: r.trade_count,
        final_value: *r.net_value_series.last().expect("non-empty series"),
    }
}

pub fn cmd_backtest(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    split: Split,
    compare: &[Baseline],
    all_instruments: bool,
    mode: PolicyMode,
) -> Result<Value> {
    let stage = Stage::begin(cfg, "backtest")?;
    let ds = load_dataset(cfg)?;
    let dir = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| stage.path(NFSP_DIR));
    let policy = TraderPolicy::load(&dir)?;
    let instruments: Vec<usize> = if all_instruments { (0..ds.market.n_instruments()).collect() } else { vec![cfg.env.instrument] };
    let mut rows = Vec::new();
    let mut paths = Vec::new();
    let mut ours_arr = Vec::new();
    let mut base_arr: Vec<(Baseline, Vec<f64>)> = compare.iter().map(|b| (*b, Vec::new())).collect();
    for &i in &instruments {
        let ecfg = EnvConfig { instrument: i, ..cfg.env.clone() };
        let ticker = ds.market.tickers[i].clone();
        let mut env = MarketEnv::historical(ds.clone(), ecfg.clone(), split)?;
        let rep = evaluate_policy(&policy, &mut env, 1, cfg.seed, mode)?;
        if i == instruments[0] {
            let p = stage.path("trade_log.csv");
            write_text(&p, &trade_log_csv(env.trade_log()))?;
            paths.push(p);
        }
        ours_arr.push(rep.arr);
        rows.push(row(&ticker, "nfsp", &rep));
        for (b, acc) in base_arr.iter_mut() {
            let r = match b {
                Baseline::Buyhold => buy_and_hold(&mut env)?,
                Baseline::Dqn => {
                    let mut tenv = MarketEnv::historical(ds.clone(), ecfg.clone(), Split::Train)?;
                    let agent = dqn_baseline_train(&mut tenv, &cfg.dqn, cfg.seed)?;
                    let p = stage.path(&format!("dqn/{ticker}"));
                    agent.save(&p)?;
                    paths.push(p);
                    let agent = DqnAgent::load(&stage.path(&format!("dqn/{ticker}")))?;
                    rollout(&mut env, cfg.seed, |o| agent.act(o))?
                }
            };
            acc.push(r.arr);
            rows.push(row(&ticker, &serde_json::to_value(b)?.as_str().unwrap_or("baseline"), &r));
        }
    }
    let mut tests = Vec::new();
    for (b, arrs) in &base_arr {
        let diffs: Vec<f64> = ours_arr.iter().zip(arrs).map(|(o, x)| o - x).collect();
        let (p, n) = match wilcoxon_directional(&diffs) {
            Ok(w) => (Some(w.p_value), w.n),
            Err(Error::DegenerateSeries(_)) => (None, 0),
            Err(e) => return Err(e),
        };
        tests.push(json!({ "baseline": b, "metric": "arr", "n": n, "p_value": p }));
    }
    let report = json!({ "split": split, "mode": mode, "rows": rows, "wilcoxon": tests });
    let out = stage.path("backtest.json");
    write_json(&out, &report)?;
    paths.push(out);
    stage.finish(None, &paths, report)
}

pub fn cmd_tsne(cfg: &ExperimentConfig) -> Result<Value> {
    let stage = Stage::begin(cfg, "tsne-diagnostic")?;
    let ds = load_dataset(cfg)?;
    let i = cfg.env.instrument;
    let n = ds.market.n_time();
    if n < 2 {
        return Err(Error::NoData("dataset too short".into()));
    }
    let lo = (n - 1).saturating_sub(cfg.eval.tsne_max_days);
    let nm = ds.macro_panel.n_indicators();
    let mut feats = Vec::new();
    let mut targets = Vec::new();
    let mut phases = Vec::new();
    for t in lo..n - 1 {
        let mut f: Vec<f64> = (0..N_FEATURES).map(|k| ds.scaler.forward(i, k, ds.market.get(t, i, k).unwrap_or(ds.scaler.mean[i * N_FEATURES + k]))).collect();
        f.extend((0..nm).map(|m| ds.macro_panel.standardized(t, m)));
        feats.push(f);
        targets.push(ds.market.get(t + 1, i, CC_RETURN).unwrap_or(0.0));
        let ph = if ds.splits.train.contains(&t) {
            "train"
        } else if ds.splits.valid.contains(&t) {
            "valid"
        } else {
            "test"
        };
        phases.push(ph.to_string());
    }
    let rows = tsne_drift_diagnostic(&feats, &targets, &phases, ds.window.length, &cfg.eval.tsne, &mut stream(cfg.seed, "tsne"))?;
    let mut csv = String::from("zx,zy,phase\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.zx, r.zy, r.phase));
    }
    let out = stage.path("tsne.csv");
    write_text(&out, &csv)?;
    let labels: Vec<String> = rows.iter().map(|r| r.phase.clone()).collect();
    let sx = silhouette_1d(&rows.iter().map(|r| r.zx).collect::<Vec<_>>(), &labels);
    let sy = silhouette_1d(&rows.iter().map(|r| r.zy).collect::<Vec<_>>(), &labels);
    stage.finish(None, &[out], json!({ "points": rows.len(), "silhouette_features": sx, "silhouette_targets": sy }))
}

/// Last row of the self-play training log, blank cells dropped.
fn nfsp_summary(dir: &Path) -> Result<Option<Value>> {
    let p = dir.join(NFSP_DIR).join("training_log.csv");
    if !p.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let Some(last) = lines.rfind(|l| !l.is_empty()) else { return Ok(None) };
    let mut m = serde_json::Map::new();
    for (k, v) in header.iter().zip(last.split(',')) {
        if let Ok(x) = v.parse::<f64>() {
            m.insert(format!("final_{k}"), json!(x));
        }
    }
    Ok(Some(Value::Object(m)))
}

pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Value> {
    let stage = Stage::begin(cfg, "report")?;
    let read = |name: &str| -> Result<Option<Value>> {
        let p = cfg.out_dir.join(name);
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_slice(&std::fs::read(&p).map_err(|e| Error::io(&p, e))?)?))
    };
    let mut report = serde_json::Map::new();
    report.insert("config_hash".into(), json!(cfg.hash()));
    if let Some(h) = read(super::manifest::RUN_MANIFEST)?.and_then(|m| m.get("data_hash").cloned()).filter(|h| !h.is_null()) {
        report.insert("data_hash".into(), h);
    }
    // only stages that have run appear
    for (key, file) in [("generator_eval", "generator_eval.json"), ("backtest", "backtest.json"), ("matrix_game", "matrix_game.json")] {
        if let Some(v) = read(file)? {
            report.insert(key.into(), v);
        }
    }
    if let Some(v) = nfsp_summary(&cfg.out_dir)? {
        report.insert("nfsp".into(), v);
    }
    let report = Value::Object(report);
    let mut md = String::from("# Run report\n\n");
    md.push_str(&format!("config `{}`\n\n", cfg.hash()));
    if let Some(Value::Array(rows)) = report.get("backtest").and_then(|b| b.get("rows")).cloned() {
        md.push_str("| instrument | agent | ARR | SR | MDD | trades |\n|---|---|---|---|---|---|\n");
        for r in rows {
            md.push_str(&format!(
                "| {} | {} | {:.4} | {} | {:.4} | {} |\n",
                r["instrument"].as_str().unwrap_or(""),
                r["agent"].as_str().unwrap_or(""),
                r["arr"].as_f64().unwrap_or(f64::NAN),
                r["sr"].as_f64().map_or("n/a".to_string(), |s| format!("{s:.4}")),
                r["mdd"].as_f64().unwrap_or(f64::NAN),
                r["trade_count"],
            ));
        }
        md.push('\n');
    }
    for (key, title) in [("generator_eval", "Generator fidelity"), ("nfsp", "Self-play training"), ("matrix_game", "Matrix game")] {
        if let Some(Value::Object(m)) = report.get(key) {
            md.push_str(&format!("## {title}\n\n"));
            for (k, v) in m {
                md.push_str(&format!("- {k}: {v}\n"));
            }
            md.push('\n');
        }
    }
    let jp = stage.path("report.json");
    write_json(&jp, &report)?;
    let mp = stage.path("report.md");
    write_text(&mp, &md)?;
    stage.finish(None, &[jp, mp], report)
}

pub struct FixtureArgs {
    pub out: PathBuf,
    pub days: usize,
    pub instruments: usize,
    pub n_macro: usize,
    pub seed: u64,
    pub missing: f64,
}

/// Write fixture CSVs and a starter configuration pointing at them.
pub fn cmd_make_fixture(a: &FixtureArgs) -> Result<Value> {
    let mut p = SyntheticParams::macro_driven(a.instruments);
    p.missing_prob = a.missing;
    let syn = make_synthetic_panel(&mut stream(a.seed, "fixture"), a.days, a.n_macro, &p)?;
    let od = a.out.join("ohlcv");
    std::fs::create_dir_all(&od).map_err(|e| Error::io(&od, e))?;
    for f in &syn.frames {
        write_ohlcv_csv(&od.join(format!("{}.csv", f.ticker)), f)?;
    }
    write_macro_csv(&a.out.join("macro.csv"), &syn.macro_series)?;
    let d = &syn.market.dates;
    let n = d.len();
    let cfg = format!(
        "seed = {}\nout_dir = \"run\"\nbackend = \"generative\"\n\n[data]\nroot = \".\"\n\n[split]\ntrain_end = \"{}\"\nvalid_end = \"{}\"\ntest_end = \"{}\"\n\n[window]\nlength = 10\n",
        a.seed,
        d[n * 6 / 10],
        d[n * 8 / 10],
        d[n - 1]
    );
    let cp = a.out.join("config.toml");
    write_text(&cp, &cfg)?;
    Ok(json!({ "command": "make-fixture", "config": cp, "tickers": syn.market.tickers, "days": n }))
}
