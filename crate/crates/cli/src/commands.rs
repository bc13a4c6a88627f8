use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};

use regime_hmm::backtest::{
    apply_costs, equity_curve, equity_svg, performance_metrics, pesr_series, split_train_val_test, write_daily_csv,
    BacktestResult,
    DataSplit, PerformanceMetrics, StrategyMode,
};
use regime_hmm::data_io::{
    generate_synthetic, load_csv, load_model, rolling_stats, save_csv, save_model, write_rolling_csv, InstrumentSeries, ModelBundle, RegimeSpec,
};
use regime_hmm::evaluation::best_matching;
use regime_hmm::model_selection::{select_states, write_criteria_csv, Criterion};
use regime_hmm::par;
use regime_hmm::pipeline::{backtest_bundle, decode_bundle, features_for_bundle, train_instrument};
use regime_hmm::regime_metrics::{esr_vector, label_regimes, ranked_labels, RegimeLabel};

use crate::manifest::{instrument_id, Settings};

/// Per-item failures; the command still writes everything that succeeded.
#[derive(Debug, Default)]
pub struct Failures(pub Vec<String>);

impl Failures {
    fn record(&mut self, what: &str, err: anyhow::Error) {
        let msg = format!("{what}: {err:#}");
        eprintln!("error: {msg}");
        self.0.push(msg);
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn writer(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

fn model_path(s: &Settings, id: &str, span: usize) -> PathBuf {
    s.out.join("models").join(format!("{id}_s{span}.json"))
}

struct Loaded {
    id: String,
    series: InstrumentSeries,
    split: DataSplit,
}

fn load_all(s: &Settings, failures: &mut Failures) -> Vec<Loaded> {
    let mut out = Vec::new();
    for path in &s.instruments {
        let id = instrument_id(path);
        let loaded = load_csv(path)
            .with_context(|| format!("loading {}", path.display()))
            .and_then(|series| {
                let split = split_train_val_test(&series.dates, s.val_start, s.test_start)?;
                Ok(Loaded { id: id.clone(), series, split })
            });
        match loaded {
            Ok(l) => out.push(l),
            Err(e) => failures.record(&id, e),
        }
    }
    out
}

/// Every (instrument, span) pair in output order.
fn jobs(data: &[Loaded], spans: &[usize]) -> Vec<(usize, usize)> {
    (0..data.len()).flat_map(|i| spans.iter().map(move |&sp| (i, sp))).collect()
}

pub fn ingest(s: &Settings, window: usize) -> Result<Failures> {
    let mut failures = Failures::default();
    let data_dir = s.out.join("data");
    let rolling_dir = s.out.join("rolling");
    create_dir(&data_dir)?;
    create_dir(&rolling_dir)?;
    let mut summary = writer(&s.out.join("ingest_summary.csv"))?;
    writeln!(
        summary,
        "instrument,observations,first_date,last_date,mean_min,mean_max,std_min,std_max,skew_min,skew_max,kurt_min,kurt_max"
    )?;
    for path in &s.instruments {
        let id = instrument_id(path);
        let result = (|| -> Result<()> {
            let series = load_csv(path).with_context(|| format!("loading {}", path.display()))?;
            save_csv(&series, data_dir.join(format!("{id}.csv")))?;
            let stats = rolling_stats(&series, window.min(series.len()))?;
            write_rolling_csv(&stats, writer(&rolling_dir.join(format!("{id}.csv")))?)?;
            let r = &stats.ranges;
            let pair = |p: Option<(f64, f64)>| match p {
                Some((a, b)) => format!("{a},{b}"),
                None => ",".to_string(),
            };
            writeln!(
                summary,
                "{id},{},{},{},{},{},{},{}",
                series.len(),
                series.dates[0],
                series.dates[series.len() - 1],
                pair(r.mean),
                pair(r.std),
                pair(r.skew),
                pair(r.kurt)
            )?;
            Ok(())
        })();
        if let Err(e) = result {
            failures.record(&id, e);
        }
    }
    summary.flush()?;
    Ok(failures)
}

pub fn synth(out: &Path, preset: &str, length: usize, seed: u64) -> Result<PathBuf> {
    let spec = RegimeSpec::preset(preset, length, seed)?;
    let (series, path) = generate_synthetic(&spec)?;
    create_dir(out)?;
    let stem = format!("{preset}-{seed}");
    let csv = out.join(format!("{stem}.csv"));
    save_csv(&series, &csv)?;
    let mut w = writer(&out.join(format!("{stem}.path.csv")))?;
    writeln!(w, "date,state")?;
    for (d, z) in series.dates.iter().zip(&path) {
        writeln!(w, "{d},{z}")?;
    }
    w.flush()?;
    let mut spec_text = serde_json::to_string_pretty(&spec)?;
    spec_text.push('\n');
    fs::write(out.join(format!("{stem}.spec.json")), spec_text)?;
    Ok(csv)
}

pub fn train(s: &Settings) -> Result<Failures> {
    let mut failures = Failures::default();
    let data = load_all(s, &mut failures);
    create_dir(&s.out.join("models"))?;
    let jobs = jobs(&data, &s.spans);
    let results = par::map_indexed(s.train.execution, &jobs, |_, &(i, span)| {
        let d = &data[i];
        train_instrument(&d.series, &d.split, span, s.num_states, &s.prior, &s.train)
    });
    let mut summary = writer(&s.out.join("train_summary.csv"))?;
    writeln!(
        summary,
        "instrument,span,states,restart,iterations,converged,log_likelihood,validation_log_likelihood,esr,labels,label_flagged"
    )?;
    for (&(i, span), result) in jobs.iter().zip(results) {
        let id = &data[i].id;
        match result {
            Ok(t) => {
                save_model(&t.bundle, model_path(s, id, span))?;
                let r = &t.report;
                writeln!(
                    summary,
                    "{id},{span},{},{},{},{},{},{},{},{},{}",
                    s.num_states,
                    r.restart_index,
                    r.iterations(),
                    r.converged,
                    r.log_likelihood,
                    opt(r.validation_log_likelihood),
                    join(&t.esr.values),
                    join(&t.esr.labels),
                    t.esr.label_flagged
                )?;
                for msg in &r.failed_restarts {
                    eprintln!("warning: {id} span {span}: {msg}");
                }
            }
            Err(e) => failures.record(&format!("{id} span {span}"), e.into()),
        }
    }
    summary.flush()?;
    Ok(failures)
}

pub fn select(s: &Settings, candidates: &[usize], criterion: Criterion) -> Result<Failures> {
    let mut failures = Failures::default();
    let data = load_all(s, &mut failures);
    let dir = s.out.join("criteria");
    create_dir(&dir)?;
    let jobs = jobs(&data, &s.spans);
    let results = par::map_indexed(s.train.execution, &jobs, |_, &(i, span)| -> Result<_> {
        let d = &data[i];
        let config = regime_hmm::features::FeatureConfig::new(span)?;
        let features = regime_hmm::features::FeatureMatrix::build(&d.series.returns, config, d.split.train.clone())?;
        let obs = features.training_observations(d.split.train.clone())?;
        Ok(select_states(&obs, candidates, criterion, &s.prior, &s.train)?)
    });
    let mut summary = writer(&s.out.join("selection.csv"))?;
    writeln!(summary, "instrument,span,criterion,chosen_states")?;
    for (&(i, span), result) in jobs.iter().zip(results) {
        let id = &data[i].id;
        match result {
            Ok(sel) => {
                write_criteria_csv(sel.reports(), writer(&dir.join(format!("{id}_s{span}.csv")))?)?;
                for c in &sel.candidates {
                    if let Err(msg) = &c.result {
                        eprintln!("warning: {id} span {span} S={}: {msg}", c.num_states);
                    }
                }
                let chosen = sel.chosen.map(|c| c.to_string()).unwrap_or_default();
                writeln!(summary, "{id},{span},{criterion},{chosen}")?;
                if sel.chosen.is_none() {
                    failures.record(&format!("{id} span {span}"), anyhow!("every candidate failed"));
                }
            }
            Err(e) => failures.record(&format!("{id} span {span}"), e),
        }
    }
    summary.flush()?;
    Ok(failures)
}

fn load_bundle(s: &Settings, id: &str, span: usize) -> Result<ModelBundle> {
    let p = model_path(s, id, span);
    if !p.exists() {
        return Err(anyhow!("no model at {} (run `train` first)", p.display()));
    }
    load_model(&p).with_context(|| format!("loading {}", p.display()))
}

pub fn predict(s: &Settings) -> Result<Failures> {
    let mut failures = Failures::default();
    let data = load_all(s, &mut failures);
    let dir = s.out.join("predictions");
    create_dir(&dir)?;
    for (i, span) in jobs(&data, &s.spans) {
        let d = &data[i];
        let result = (|| -> Result<()> {
            let bundle = load_bundle(s, &d.id, span)?;
            let features = features_for_bundle(&d.series, &bundle)?;
            let esr = esr_vector(&bundle.model, &bundle.normalization, span)?;
            let (probs, pesr) = pesr_series(
                &bundle.model,
                &features,
                d.split.test.clone(),
                s.strategy.horizon,
                s.strategy.source,
            )?;
            // most probable state's label; ties to the lowest index
            let regimes: Vec<RegimeLabel> = probs
                .iter_rows()
                .map(|p| {
                    let j = (1..p.len()).fold(0, |b, j| if p[j] > p[b] { j } else { b });
                    esr.labels[j]
                })
                .collect();
            let mut w = writer(&dir.join(format!("{}_s{span}.csv", d.id)))?;
            let states = bundle.model.num_states();
            let header: Vec<String> = (0..states).map(|j| format!("p_{j}")).collect();
            writeln!(w, "date,pesr,regime,{}", header.join(","))?;
            for (k, t) in d.split.test.clone().enumerate() {
                let p: Vec<String> = probs.row(k).iter().map(f64::to_string).collect();
                writeln!(w, "{},{},{},{}", d.series.dates[t], pesr[k], regimes[k], p.join(","))?;
            }
            w.flush()?;
            Ok(())
        })();
        if let Err(e) = result {
            failures.record(&format!("{} span {span}", d.id), e);
        }
    }
    Ok(failures)
}

/// Always long from the first test day at zero cost.
pub fn buy_and_hold(returns: &[f64]) -> Result<(Vec<f64>, PerformanceMetrics)> {
    let ones = vec![1.0; returns.len()];
    let streams = apply_costs(&ones, returns, 0.0)?;
    let metrics = performance_metrics(&streams.net, &ones)?;
    Ok((streams.net, metrics))
}

fn metrics_row(m: &PerformanceMetrics) -> String {
    format!(
        "{},{},{},{},{}",
        m.ann_return,
        m.ann_vol,
        opt(m.sharpe),
        m.max_drawdown,
        m.daily_turnover
    )
}

pub fn backtest(s: &Settings) -> Result<Failures> {
    let mut failures = Failures::default();
    let data = load_all(s, &mut failures);
    let dir = s.out.join("backtest");
    create_dir(&dir)?;
    let tuples: Vec<(usize, usize, StrategyMode)> = jobs(&data, &s.spans)
        .into_iter()
        .flat_map(|(i, span)| s.modes.iter().map(move |&m| (i, span, m)))
        .collect();
    let results = par::map_indexed(s.train.execution, &tuples, |_, &(i, span, mode)| -> Result<BacktestResult> {
        let d = &data[i];
        let bundle = load_bundle(s, &d.id, span)?;
        Ok(backtest_bundle(&d.series, &bundle, &s.strategy(mode), d.split.test.clone())?)
    });

    let mut summary = writer(&dir.join("summary.csv"))?;
    writeln!(
        summary,
        "instrument,strategy,span,ann_return,ann_vol,sharpe,max_drawdown,daily_turnover"
    )?;
    let mut curves: Vec<Vec<(String, Vec<f64>)>> = vec![Vec::new(); data.len() * s.modes.len()];
    let mut written_bh = vec![false; data.len()];
    for (&(i, span, mode), result) in tuples.iter().zip(results) {
        let d = &data[i];
        if !written_bh[i] {
            written_bh[i] = true;
            match buy_and_hold(&d.series.returns[d.split.test.clone()]) {
                Ok((_, m)) => writeln!(summary, "{},buy-and-hold,,{}", d.id, metrics_row(&m))?,
                Err(e) => failures.record(&format!("{} buy-and-hold", d.id), e.into()),
            }
        }
        match result {
            Ok(bt) => {
                writeln!(summary, "{},{mode},{span},{}", d.id, metrics_row(&bt.metrics))?;
                let mut w = writer(&dir.join(format!("{}_{mode}_s{span}.csv", d.id)))?;
                write_daily_csv(&bt, &mut w)?;
                w.flush()?;
                let m = s.modes.iter().position(|&x| x == mode).expect("mode listed");
                curves[i * s.modes.len() + m].push((format!("s={span}"), bt.equity()));
            }
            Err(e) => failures.record(&format!("{} {mode} span {span}", d.id), e),
        }
    }
    summary.flush()?;
    if s.svg {
        for (i, d) in data.iter().enumerate() {
            let bh = equity_curve(&buy_and_hold(&d.series.returns[d.split.test.clone()])?.0);
            for (m, mode) in s.modes.iter().enumerate() {
                let mut c = curves[i * s.modes.len() + m].clone();
                if c.is_empty() {
                    continue;
                }
                c.push(("buy-and-hold".into(), bh.clone()));
                fs::write(
                    dir.join(format!("{}_{mode}.svg", d.id)),
                    equity_svg(&format!("{} {mode}", d.id), &c),
                )?;
            }
        }
    }
    Ok(failures)
}

/// Ground truth written by `synth` next to the series, if present.
fn truth_for(path: &Path) -> Option<(RegimeSpec, Vec<usize>)> {
    let stem = path.file_stem()?.to_string_lossy().into_owned();
    let dir = path.parent()?;
    let spec: RegimeSpec = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.spec.json"))).ok()?).ok()?;
    let text = fs::read_to_string(dir.join(format!("{stem}.path.csv"))).ok()?;
    let states = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next()?.trim().parse().ok())
        .collect::<Option<Vec<usize>>>()?;
    Some((spec, states))
}

fn truth_labels(spec: &RegimeSpec) -> Vec<RegimeLabel> {
    let esr: Vec<f64> = spec.state_means.iter().zip(&spec.state_vols).map(|(m, v)| m / v).collect();
    if spec.num_states == 3 {
        if let Ok(l) = label_regimes(&esr, &spec.state_vols) {
            return l.labels;
        }
    }
    ranked_labels(&esr)
}

pub fn report(s: &Settings) -> Result<Failures> {
    let mut failures = Failures::default();
    let data = load_all(s, &mut failures);
    create_dir(&s.out)?;
    let mut md = String::new();
    let mut acc_csv = String::from("instrument,span,state_accuracy,label_accuracy,bull_recall\n");
    writeln!(md, "# Regime HMM report\n")?;
    writeln!(
        md,
        "States: {}. Spans: {:?}. Split: validation from {}, test from {}. Seed: {}.\n",
        s.num_states, s.spans, s.val_start, s.test_start, s.train.seed
    )?;
    for d in &data {
        let path = s.instruments.iter().find(|p| instrument_id(p) == d.id).expect("loaded from list");
        writeln!(md, "## {}\n", d.id)?;
        writeln!(
            md,
            "{} observations, {} to {}; test window {} days.\n",
            d.series.len(),
            d.series.dates[0],
            d.series.dates[d.series.len() - 1],
            d.split.test.len()
        )?;
        writeln!(md, "| span | ESR by state | labels | flagged |")?;
        writeln!(md, "|---|---|---|---|")?;
        for &span in &s.spans {
            match load_bundle(s, &d.id, span).and_then(|b| Ok(esr_vector(&b.model, &b.normalization, span)?)) {
                Ok(e) => {
                    let vals: Vec<String> = e.values.iter().map(|v| format!("{v:.4}")).collect();
                    writeln!(md, "| {span} | {} | {} | {} |", vals.join(", "), join(&e.labels), e.label_flagged)?;
                }
                Err(e) => failures.record(&format!("{} span {span}", d.id), e),
            }
        }
        writeln!(md)?;
        writeln!(md, "| strategy | span | return | vol | SR | DD | turnover |")?;
        writeln!(md, "|---|---|---|---|---|---|---|")?;
        let (_, bh) = buy_and_hold(&d.series.returns[d.split.test.clone()])?;
        writeln!(md, "| buy-and-hold | | {} |", metric_cells(&bh))?;
        for &mode in &s.modes {
            for &span in &s.spans {
                match load_bundle(s, &d.id, span)
                    .and_then(|b| Ok(backtest_bundle(&d.series, &b, &s.strategy(mode), d.split.test.clone())?))
                {
                    Ok(bt) => writeln!(md, "| {mode} | {span} | {} |", metric_cells(&bt.metrics))?,
                    Err(e) => failures.record(&format!("{} {mode} span {span}", d.id), e),
                }
            }
        }
        writeln!(md)?;

        if let Some((spec, truth)) = truth_for(path) {
            if truth.len() != d.series.len() {
                failures.record(&d.id, anyhow!("ground-truth path length does not match the series"));
                continue;
            }
            let true_labels = truth_labels(&spec);
            writeln!(md, "Detection against the generating path (test window):\n")?;
            writeln!(md, "| span | state accuracy | label accuracy | bull recall |")?;
            writeln!(md, "|---|---|---|---|")?;
            for &span in &s.spans {
                let res = (|| -> Result<(f64, f64, Option<f64>)> {
                    let b = load_bundle(s, &d.id, span)?;
                    let fitted = decode_bundle(&d.series, &b, d.split.test.clone())?;
                    let t = &truth[d.split.test.clone()];
                    let states = b.model.num_states().max(spec.num_states);
                    let m = best_matching(t, &fitted, states)?;
                    let labels = esr_vector(&b.model, &b.normalization, span)?.labels;
                    let hits = t.iter().zip(&fitted).filter(|(a, f)| true_labels[**a] == labels[**f]).count();
                    let bull: Vec<_> = t.iter().zip(&fitted).filter(|(a, _)| true_labels[**a] == RegimeLabel::Bull).collect();
                    let recall = (!bull.is_empty()).then(|| {
                        bull.iter().filter(|(_, f)| labels[**f] == RegimeLabel::Bull).count() as f64 / bull.len() as f64
                    });
                    Ok((m.accuracy, hits as f64 / t.len() as f64, recall))
                })();
                match res {
                    Ok((a, l, r)) => {
                        writeln!(md, "| {span} | {a:.4} | {l:.4} | {} |", r.map(|x| format!("{x:.4}")).unwrap_or_default())?;
                        writeln!(acc_csv, "{},{span},{a},{l},{}", d.id, opt(r))?;
                    }
                    Err(e) => failures.record(&format!("{} span {span} detection", d.id), e),
                }
            }
            writeln!(md)?;
        }
    }
    fs::write(s.out.join("report.md"), md)?;
    fs::write(s.out.join("report_accuracy.csv"), acc_csv)?;
    Ok(failures)
}

fn metric_cells(m: &PerformanceMetrics) -> String {
    format!(
        "{:.4} | {:.4} | {} | {:.4} | {:.4}",
        m.ann_return,
        m.ann_vol,
        m.sharpe.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into()),
        m.max_drawdown,
        m.daily_turnover
    )
}
