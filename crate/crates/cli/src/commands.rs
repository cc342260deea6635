use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use regbench::answer::ParsedAnswer;
use regbench::baselines::{predict_taskset, PredictOptions, Predictor};
use regbench::evaluation::{
    aggregate, best_basic, by_difficulty, classify_dfas, paired_significance, rank_rows, render_table,
    score_taskset, AggregateReport, DfaScore, DifficultyClass,
};
use regbench::model_client::{EndpointConfig, ModelClient};
use regbench::persistence::*;
use regbench::prompts::{self, parse_answer, parse_yes_no, render_regex_control, InstanceRef};
use regbench::taskgen::{generate_benchmark, sample_regex_control, PublicInstances, TaskConfig, TaskKind, TaskSet};
use regbench::SeedTree;
use serde_json::json;

use crate::{
    BaselineArgs, DifficultyArgs, GenArgs, RegexControlArgs, RenderArgs, ReportArgs, RunArg, RunModelArgs,
    SignificanceArgs, UsageError,
};

const AFTER_PREDICTIONS: [&str; 4] = [SCORES, RESULTS_TABLE, SIGNIFICANCE, DIFFICULTY];
const AFTER_SCORES: [&str; 3] = [RESULTS_TABLE, SIGNIFICANCE, DIFFICULTY];

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn open(path: &Path) -> Result<Run> {
    load_run(path).with_context(|| format!("cannot open run {}", path.display()))
}

fn require(run: &Run, name: &str, hint: &str) -> Result<()> {
    if !run.has(name) {
        bail!("missing artifact {} ({hint})", run.path().join(name).display());
    }
    Ok(())
}

/// Rewrites artifacts and the manifest. When any artifact actually changed,
/// the `stale` artifacts derived from it are dropped.
fn rewrite(
    run: Run,
    edits: Vec<(&str, Vec<u8>)>,
    stale: &[&str],
    edit_manifest: impl FnOnce(&mut RunManifest),
) -> Result<Run> {
    let mut changed = false;
    for (name, bytes) in &edits {
        if !run.has(name) || run.bytes(name)? != *bytes {
            changed = true;
        }
    }
    let (w, mut manifest) = run.update()?;
    for (name, bytes) in &edits {
        w.put_bytes(name, bytes)?;
    }
    if changed {
        for name in stale {
            w.discard(name)?;
        }
    }
    edit_manifest(&mut manifest);
    Ok(w.finish(manifest)?)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn insert_sorted<T: Ord>(v: &mut Vec<T>, item: T) {
    if let Err(pos) = v.binary_search(&item) {
        v.insert(pos, item);
    }
}

fn paired<'a>(tasks: &'a [TaskSet], dfas: &'a [DfaRecord]) -> Result<Vec<(&'a TaskSet, &'a DfaRecord)>> {
    if tasks.len() != dfas.len() {
        bail!("{} has {} DFAs but {} has {} task sets", DFAS, dfas.len(), TASKS, tasks.len());
    }
    tasks
        .iter()
        .zip(dfas)
        .map(|(t, d)| {
            if t.dfa_id != d.id {
                bail!("task set for DFA {} is paired with DFA record {}", t.dfa_id, d.id);
            }
            Ok((t, d))
        })
        .collect()
}

pub fn gen(a: GenArgs) -> Result<()> {
    let mut cfg = TaskConfig { num_instances: a.instances, ..TaskConfig::default() };
    match a.task {
        TaskKind::SequenceCompletion => {
            if a.seq_len.is_some() {
                return Err(usage("--seq-len applies only to transducer runs"));
            }
            cfg.num_examples = a.examples;
        }
        TaskKind::Transducer => cfg.seq_len = a.seq_len.unwrap_or(a.examples),
    }
    let master = SeedTree::from_master(a.seed);
    let generated = generate_benchmark(a.task, a.dfas, &master, &cfg)?;
    let dfas: Vec<DfaRecord> = generated.iter().map(DfaRecord::from).collect();
    let tasks: Vec<&TaskSet> = generated.iter().map(|g| &g.taskset).collect();
    let rejected: u64 = generated.iter().map(|g| g.rejected_dfas).sum();
    let w = RunWriter::create(&a.out)?;
    w.put_jsonl(DFAS, &dfas)?;
    w.put_jsonl(TASKS, &tasks)?;
    w.finish(RunManifest::new(a.seed, a.task, a.dfas, cfg))?;
    println!("wrote {} {} DFAs to {} ({rejected} rejected while sampling)", dfas.len(), a.task, a.out.display());
    Ok(())
}

pub fn baseline(a: BaselineArgs) -> Result<()> {
    let run = open(&a.run)?;
    let kind = run.manifest.task_kind;
    let predictors: Vec<Predictor> = if a.predictor.is_empty() {
        Predictor::suite(kind)
    } else {
        a.predictor
            .iter()
            .map(|n| Predictor::parse(n, Some(kind)).map_err(|e| usage(e.to_string())))
            .collect::<Result<_>>()?
    };
    let tasks = run.tasks()?;
    let dfas = run.dfas()?;
    let pairs = paired(&tasks, &dfas)?;
    let opts = PredictOptions { parallel: false, tie: a.tie_rule.into() };
    let mut fresh = Vec::new();
    for &p in &predictors {
        let predict = |(t, d): &(&TaskSet, &DfaRecord)| {
            let seeds = SeedTree::from_hex(&d.seed)
                .with_context(|| format!("DFA {} has a malformed seed {:?}", d.id, d.seed))?;
            predict_taskset(p, t, &seeds, opts).with_context(|| format!("{p} on DFA {}", d.id))
        };
        let answers: Vec<Vec<ParsedAnswer>> = if a.parallel {
            pairs.par_iter().map(predict).collect::<Result<_>>()?
        } else {
            pairs.iter().map(predict).collect::<Result<_>>()?
        };
        for ((t, _), per_dfa) in pairs.iter().zip(answers) {
            for (j, ans) in per_dfa.into_iter().enumerate() {
                fresh.push(PredictionRecord {
                    dfa_id: t.dfa_id,
                    instance_idx: j,
                    predictor: p.to_string(),
                    answer: ans.to_value(),
                    latency_ms: None,
                    unevaluated: false,
                });
            }
        }
        log::info!("{p}: done");
    }
    let merged = upsert_predictions(run.predictions()?, fresh);
    let tie = opts.tie;
    rewrite(run, vec![(PREDICTIONS, to_jsonl(&merged))], &AFTER_PREDICTIONS, |m| {
        m.tie_rule = tie;
        for p in &predictors {
            insert_sorted(&mut m.predictors, p.to_string());
        }
    })?;
    let names: Vec<String> = predictors.iter().map(Predictor::to_string).collect();
    println!("predicted {} over {} DFAs", names.join(", "), pairs.len());
    Ok(())
}

fn instance_ref(instances: &PublicInstances, j: usize) -> Option<InstanceRef<'_>> {
    match instances {
        PublicInstances::Sc(v) => v.get(j).map(InstanceRef::from),
        PublicInstances::Transducer(v) => v.get(j).map(InstanceRef::from),
    }
}

pub fn render(a: RenderArgs) -> Result<()> {
    let run = open(&a.run)?;
    let tasks = run.public_tasks()?;
    let t = tasks
        .iter()
        .find(|t| t.dfa_id == a.dfa)
        .ok_or_else(|| usage(format!("run has no DFA {}", a.dfa)))?;
    let inst = instance_ref(&t.instances, a.instance)
        .ok_or_else(|| usage(format!("DFA {} has no instance {}", a.dfa, a.instance)))?;
    let prompt = prompts::render(inst, a.format).map_err(|e| usage(e.to_string()))?;
    emit(&format!("{prompt}\n"))
}

fn read_endpoint(path: &Path) -> Result<EndpointConfig> {
    let bytes = fs::read(path).with_context(|| format!("cannot read endpoint config {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("bad endpoint config {}", path.display()))
}

fn client(cfg: &mut EndpointConfig, jobs: Option<usize>, cache: &Path) -> Result<ModelClient> {
    if let Some(j) = jobs {
        cfg.max_parallel_requests = cfg.max_parallel_requests.min(j);
    }
    fs::create_dir_all(cache).with_context(|| format!("cannot create cache {}", cache.display()))?;
    Ok(ModelClient::new(cfg.clone(), Some(cache.to_path_buf()))?)
}

pub fn run_model(a: RunModelArgs, jobs: Option<usize>) -> Result<()> {
    let run = open(&a.run)?;
    let kind = run.manifest.task_kind;
    if !a.format.supports(kind) {
        return Err(usage(format!("prompt format {} cannot render {kind} tasks", a.format)));
    }
    let mut cfg = read_endpoint(&a.endpoint)?;
    let cache = a.cache.clone().unwrap_or_else(|| run.path().join("cache"));
    let client = client(&mut cfg, jobs, &cache)?;
    let tasks = run.public_tasks()?;
    let mut slots = Vec::new();
    let mut prompts = Vec::new();
    for t in &tasks {
        for j in 0..t.instances.len() {
            let inst = instance_ref(&t.instances, j).expect("index in range");
            prompts.push(prompts::render(inst, a.format)?);
            slots.push((t.dfa_id, j));
        }
    }
    let predictor = format!("{}@{}", a.name.as_deref().unwrap_or(&cfg.model_name), a.format);
    log::info!("{predictor}: {} prompts", prompts.len());
    let results = client.transcribe_many(&prompts);
    let (mut hits, mut failed) = (0, 0);
    let mut transcripts = Vec::with_capacity(results.len());
    let mut fresh = Vec::with_capacity(results.len());
    for ((dfa_id, j), (mut tr, res)) in slots.into_iter().zip(results) {
        tr.dfa_id = Some(dfa_id);
        tr.instance_idx = Some(j);
        tr.format = Some(a.format.name().to_string());
        let rec = match res {
            Ok(c) => {
                hits += c.cache_hit as usize;
                PredictionRecord {
                    dfa_id,
                    instance_idx: j,
                    predictor: predictor.clone(),
                    answer: parse_answer(&c.text, a.format, kind).to_value(),
                    latency_ms: Some(c.latency_ms),
                    unevaluated: false,
                }
            }
            Err(e) => {
                failed += 1;
                log::warn!("DFA {dfa_id} instance {j}: {e}");
                PredictionRecord {
                    dfa_id,
                    instance_idx: j,
                    predictor: predictor.clone(),
                    answer: None,
                    latency_ms: None,
                    unevaluated: true,
                }
            }
        };
        transcripts.push(tr);
        fresh.push(rec);
    }
    let total = fresh.len();
    let merged = upsert_predictions(run.predictions()?, fresh);
    let model = cfg.model_name.clone();
    let format = a.format.name().to_string();
    let mut all_transcripts = upsert(run.transcripts()?, transcripts, |t| {
        (t.endpoint.model_name.clone(), t.format.clone().unwrap_or_default())
    });
    all_transcripts.sort_by(|x, y| {
        (&x.endpoint.model_name, &x.format, x.dfa_id, x.instance_idx).cmp(&(
            &y.endpoint.model_name,
            &y.format,
            y.dfa_id,
            y.instance_idx,
        ))
    });
    let snapshot = cfg.clone();
    rewrite(
        run,
        vec![(PREDICTIONS, to_jsonl(&merged)), (TRANSCRIPTS, to_jsonl(&all_transcripts))],
        &AFTER_PREDICTIONS,
        |m| {
            insert_sorted(&mut m.prompt_formats, a.format);
            insert_sorted(&mut m.predictors, predictor.clone());
            m.endpoints.retain(|e| !(e.model_name == model && e.base_url == snapshot.base_url));
            m.endpoints.push(snapshot);
        },
    )?;
    println!("{predictor}: {total} instances, {hits} from cache, {failed} failed ({format})");
    if total > 0 && failed == total {
        bail!("every request to {} failed", cfg.base_url);
    }
    Ok(())
}

pub fn score(a: RunArg) -> Result<()> {
    let run = open(&a.run)?;
    require(&run, PREDICTIONS, "run `regbench baseline` or `regbench run-model` first")?;
    let tasks = run.tasks()?;
    let dfas = run.dfas()?;
    let pairs = paired(&tasks, &dfas)?;
    let mut by_predictor: BTreeMap<String, BTreeMap<(u64, usize), PredictionRecord>> = BTreeMap::new();
    for r in run.predictions()? {
        by_predictor.entry(r.predictor.clone()).or_default().insert((r.dfa_id, r.instance_idx), r);
    }
    let mut scores = Vec::new();
    for (p, preds) in &by_predictor {
        for (t, d) in &pairs {
            let answers: Vec<Option<ParsedAnswer>> = (0..t.instances.len())
                .map(|j| match preds.get(&(t.dfa_id, j)) {
                    Some(r) if !r.unevaluated => Some(ParsedAnswer::from_value(r.answer.as_ref())),
                    _ => None,
                })
                .collect();
            scores.push(score_taskset(&d.dfa, t, p, &answers));
        }
    }
    rewrite(run, vec![(SCORES, to_jsonl(&scores))], &AFTER_SCORES, |_| {})?;
    println!("scored {} predictors over {} DFAs", by_predictor.len(), pairs.len());
    Ok(())
}

fn group_scores(scores: Vec<DfaScore>) -> BTreeMap<String, Vec<DfaScore>> {
    let mut out: BTreeMap<String, Vec<DfaScore>> = BTreeMap::new();
    for s in scores {
        out.entry(s.predictor.clone()).or_default().push(s);
    }
    out
}

/// A row for a predictor with no defined accuracy on any DFA.
fn na_row(predictor: &str, scores: &[DfaScore]) -> AggregateReport {
    let evaluated: usize = scores.iter().map(DfaScore::evaluated).sum();
    let na: usize = scores.iter().map(|s| s.non_answers).sum();
    let rate = if evaluated == 0 { 0.0 } else { 100.0 * na as f64 / evaluated as f64 };
    AggregateReport {
        predictor: predictor.to_string(),
        mean: 0.0,
        ci_low: 0.0,
        ci_high: 0.0,
        n_dfas: 0,
        non_answer_rate: regbench::evaluation::round_sig(rate),
        na_flag: true,
    }
}

pub fn report(a: ReportArgs) -> Result<()> {
    let run = open(&a.run)?;
    require(&run, SCORES, "run `regbench score` first")?;
    let root = SeedTree::from_master(run.manifest.master_seed).child("report", 0);
    let reports: Vec<AggregateReport> = group_scores(run.scores()?)
        .iter()
        .map(|(p, s)| aggregate(p, s, a.resamples, &root.child(p, 0)).unwrap_or_else(|_| na_row(p, s)))
        .collect();
    let reports = if a.all_formats { reports } else { best_basic(reports) };
    let rows = rank_rows(reports);
    print!("{}", render_table(&rows));
    let table = ResultsTable { task_kind: run.manifest.task_kind, resamples: a.resamples, rows };
    rewrite(run, vec![(RESULTS_TABLE, to_json(&table))], &[], |_| {})?;
    Ok(())
}

/// Resolves a user-given predictor name against the scored predictors.
fn resolve(name: &str, kind: TaskKind, known: &BTreeSet<String>) -> Result<String> {
    if known.contains(name) {
        return Ok(name.to_string());
    }
    if let Ok(p) = Predictor::parse(name, Some(kind)) {
        if known.contains(&p.to_string()) {
            return Ok(p.to_string());
        }
    }
    let list: Vec<&str> = known.iter().map(String::as_str).collect();
    Err(usage(format!("no scores for predictor {name:?}; scored: {}", list.join(", "))))
}

pub fn significance(a: SignificanceArgs) -> Result<()> {
    let run = open(&a.run)?;
    require(&run, SCORES, "run `regbench score` first")?;
    let kind = run.manifest.task_kind;
    let grouped = group_scores(run.scores()?);
    let known: BTreeSet<String> = grouped.keys().cloned().collect();
    let pa = resolve(&a.a, kind, &known)?;
    let pb = resolve(&a.b, kind, &known)?;
    let seeds = SeedTree::from_master(run.manifest.master_seed)
        .child("significance", 0)
        .child(&format!("{pa}|{pb}"), 0);
    let p = paired_significance(&grouped[&pa], &grouped[&pb], a.resamples, &seeds)?;
    println!("{pa} vs {pb}: p = {p}");
    let record = SignificanceRecord { a: pa, b: pb, p_value: p, resamples: a.resamples };
    let mut all = upsert(run.significance()?, vec![record], |r| (r.a.clone(), r.b.clone()));
    all.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
    rewrite(run, vec![(SIGNIFICANCE, to_json(&all))], &[], |_| {})?;
    Ok(())
}

pub fn difficulty(a: DifficultyArgs) -> Result<()> {
    let run = open(&a.run)?;
    if run.manifest.task_kind != TaskKind::Transducer {
        return Err(usage("difficulty classes are defined for transducer runs only"));
    }
    require(&run, SCORES, "run `regbench score` first")?;
    let scores = run.scores()?;
    let present: BTreeSet<&str> = scores.iter().map(|s| s.predictor.as_str()).collect();
    let missing: Vec<&str> =
        DifficultyClass::LADDER.iter().map(|(_, p)| *p).filter(|p| !present.contains(p)).collect();
    if !missing.is_empty() {
        bail!("scores.jsonl lacks {}; run `regbench baseline` with them and rescore", missing.join(", "));
    }
    let classes = classify_dfas(&scores);
    let records: Vec<DifficultyRecord> =
        classes.iter().map(|(&dfa_id, &class)| DifficultyRecord { dfa_id, class }).collect();
    let root = SeedTree::from_master(run.manifest.master_seed).child("difficulty", 0);
    print!("{:<28}", "class");
    for c in DifficultyClass::ALL {
        print!("{:>12}", c.name());
    }
    println!();
    print!("{:<28}", "DFAs");
    for c in DifficultyClass::ALL {
        print!("{:>12}", classes.values().filter(|&&x| x == c).count());
    }
    println!();
    for (p, s) in group_scores(scores) {
        let per_class: BTreeMap<DifficultyClass, f64> = by_difficulty(&p, &s, &classes, a.resamples, &root.child(&p, 0))
            .into_iter()
            .map(|(c, r)| (c, r.mean))
            .collect();
        print!("{p:<28}");
        for c in DifficultyClass::ALL {
            match per_class.get(&c) {
                Some(m) => print!("{m:>12.1}"),
                None => print!("{:>12}", "-"),
            }
        }
        println!();
    }
    rewrite(run, vec![(DIFFICULTY, to_json(&records))], &[], |_| {})?;
    Ok(())
}

pub fn regex_control(a: RegexControlArgs, jobs: Option<usize>) -> Result<()> {
    let items = sample_regex_control(&mut SeedTree::from_master(a.seed).child("regex-control", 0).rng(), a.count);
    let prompts: Vec<String> = items.iter().map(|i| render_regex_control(i, true)).collect();
    let mut lines: Vec<serde_json::Value> = items
        .iter()
        .zip(&prompts)
        .map(|(i, p)| json!({"text": i.text, "label": i.label, "prompt": p}))
        .collect();
    let mut summary = None;
    if let Some(path) = &a.endpoint {
        let mut cfg = read_endpoint(path)?;
        let cache = a.cache.clone().unwrap_or_else(|| std::env::temp_dir().join("regbench-cache"));
        let client = client(&mut cfg, jobs, &cache)?;
        let (mut correct, mut answered, mut failed) = (0, 0, 0);
        for ((line, item), (_, res)) in lines.iter_mut().zip(&items).zip(client.transcribe_many(&prompts)) {
            match res {
                Ok(c) => {
                    let ans = parse_yes_no(&c.text);
                    if let Some(yes) = ans {
                        answered += 1;
                        correct += (yes == item.label) as usize;
                    }
                    line["response"] = json!(c.text);
                    line["answer"] = json!(ans);
                }
                Err(e) => {
                    failed += 1;
                    line["error"] = json!(e.to_string());
                }
            }
        }
        let acc = if answered == 0 { 0.0 } else { 100.0 * correct as f64 / answered as f64 };
        summary = Some(format!(
            "accuracy {acc:.1}% ({correct}/{answered} answered; {} non-answers, {failed} failed)",
            items.len() - answered - failed
        ));
    }
    let body = to_jsonl(&lines);
    match &a.out {
        Some(p) => fs::write(p, &body).with_context(|| format!("cannot write {}", p.display()))?,
        None => emit(std::str::from_utf8(&body).expect("JSON is UTF-8"))?,
    }
    if let Some(s) = summary {
        println!("{s}");
    }
    Ok(())
}
