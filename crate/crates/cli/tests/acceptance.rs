//! Acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so each criterion reports
//! PASS/FAIL/SKIP with its own timing. Exits non-zero if any criterion fails.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use har_cli::commands::{cmd_run, with_cache, CONFIG_FILE, KNOWLEDGE_FILE, PREDICTIONS_FILE};
use har_cli::Options;
use har_core::dataset::{load_dataset, DatasetManifest};
use har_core::domain::{ActivityLabel, ActivityPair, Answer, Dataset, Episode, ObjectSequence};
use har_core::eval::{confusion, score, Outcome, ScoredEpisode, CONFUSION_FILE, METRICS_FILE};
use har_core::llm::{Backend, HttpBackend, HttpConfig, ResponseCache, ScriptedMock, API_KEY_ENV, DEFAULT_MODEL};
use har_core::pipeline::{
    build_knowledge, classify_episode, discover_confusable_pairs, generate_activity_knowledge, parse_answer, parse_pair_list,
    StrategyConfig,
};
use har_core::prompt::{
    render_classification, render_pair_description, render_pair_discovery, Exemplar, Knowledge, PromptContext, Strategy,
};
use num_rational::Ratio;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Criterion = fn() -> Result<Verdict, String>;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn within(limit: Duration, elapsed: Duration, detail: String) -> Verdict {
    if elapsed <= limit {
        Verdict::Pass(format!("{detail} ({:.3}s, limit {}s)", elapsed.as_secs_f64(), limit.as_secs()))
    } else {
        Verdict::Fail(format!("{detail} but took {:.3}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs()))
    }
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    manifest_dir().join("../../fixtures/opportunity").join(name)
}

fn opportunity() -> Dataset {
    load_dataset(&DatasetManifest::from_file(fixture("manifest.toml")).unwrap()).unwrap()
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap()
}

// ---------------------------------------------------------------------------
// 1. golden prompts

fn golden_prompts() -> Result<Verdict, String> {
    let start = Instant::now();
    let ds = opportunity();
    let ctx = PromptContext::from(&ds);
    let mock = ScriptedMock::from_replay_file(fixture("mock.toml")).map_err(|e| e.to_string())?;
    let kb = runtime()
        .block_on(build_knowledge(&mock, &ds, &StrategyConfig::new(Strategy::Proposed)))
        .map_err(|e| e.to_string())?
        .knowledge;
    let pair = ActivityPair::new(ds.activity("Cleanup").unwrap().clone(), ds.activity("Early Morning").unwrap().clone())
        .map_err(|e| e.to_string())?;
    let retrieval = read(&fixture("retrieval.txt"))?;
    let exemplars = Exemplar::load_file(&fixture("exemplars.jsonl"), &ds.activities).map_err(|e| e.to_string())?;
    let objects = &ds.episode("opp-s1-e1").unwrap().objects;

    let render = |s, k| render_classification(s, ctx, k, objects).map(|p| p.text().to_string());
    let shapes: Vec<(&str, Result<String, _>)> = vec![
        ("pair_discovery", render_pair_discovery(ctx, 3).map(|p| p.text().to_string())),
        ("pair_description", render_pair_description(ctx, &pair).map(|p| p.text().to_string())),
        ("proposed", render(Strategy::Proposed, Knowledge::Generated(&kb))),
        ("zero_shot", render(Strategy::ZeroShot, Knowledge::None)),
        ("retrieval", render(Strategy::RetrievalKnowledge, Knowledge::Retrieved(retrieval.trim_end()))),
        ("few_shot", render(Strategy::FewShot, Knowledge::Exemplars(&exemplars))),
    ];
    let golden_dir = manifest_dir().join("../core/tests/golden/opportunity");
    let mut mismatched = Vec::new();
    for (name, rendered) in &shapes {
        let rendered = rendered.as_ref().map_err(|e| format!("{name}: {e}"))?;
        let expected = read(&golden_dir.join(format!("{name}.txt")))?;
        if rendered.as_bytes() != expected.as_bytes() {
            mismatched.push(*name);
        }
    }
    check(mismatched.is_empty(), || format!("prompts differ from golden files: {}", mismatched.join(", ")))?;
    Ok(within(Duration::from_secs(1), start.elapsed(), format!("{} shapes byte-identical", shapes.len())))
}

// ---------------------------------------------------------------------------
// 2. scripted end-to-end run through the binary

struct BinaryRun {
    dir: PathBuf,
    elapsed: Duration,
}

fn har_run(out: &Path) -> Result<BinaryRun, String> {
    let start = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_har"))
        .arg("run")
        .arg("--dataset")
        .arg(fixture("manifest.toml"))
        .arg("--strategy")
        .arg("proposed")
        .arg("--backend")
        .arg(format!("mock:{}", fixture("mock.toml").display()))
        .arg("--out")
        .arg(out)
        .arg("--no-cache")
        .env_remove(API_KEY_ENV)
        .env_remove("HAR_CACHE_DIR")
        .output()
        .map_err(|e| format!("cannot launch har: {e}"))?;
    let elapsed = start.elapsed();
    let stdout = String::from_utf8_lossy(&output.stdout);
    check(output.status.success(), || {
        format!("har run exited {:?}: {}", output.status.code(), String::from_utf8_lossy(&output.stderr))
    })?;
    let dir = stdout
        .lines()
        .find_map(|l| l.strip_prefix("run directory: "))
        .ok_or_else(|| format!("no run directory in output: {stdout}"))?;
    Ok(BinaryRun {
        dir: PathBuf::from(dir),
        elapsed,
    })
}

fn scripted_end_to_end() -> Result<Verdict, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = har_run(&tmp.path().join("runs"))?;
    let second = har_run(&tmp.path().join("runs"))?;
    check(first.dir != second.dir, || "second run reused the first run directory".into())?;

    for file in [CONFIG_FILE, KNOWLEDGE_FILE, PREDICTIONS_FILE, METRICS_FILE, CONFUSION_FILE] {
        check(first.dir.join(file).is_file(), || format!("run directory lacks {file}"))?;
    }
    let predictions = read(&first.dir.join(PREDICTIONS_FILE))?;
    check(predictions == read(&fixture("expected_predictions.jsonl"))?, || {
        "predictions differ from expected_predictions.jsonl".into()
    })?;
    let failed = predictions.lines().filter(|l| l.contains("\"predicted\":\"FAILED\"")).count();
    check(failed == 0, || format!("{failed} failed episodes"))?;
    let metrics = read(&first.dir.join(METRICS_FILE))?;
    check(metrics.lines().any(|l| l == "micro_f1: 100.00"), || format!("micro_f1 line missing or wrong:\n{metrics}"))?;
    for file in [METRICS_FILE, CONFUSION_FILE] {
        check(read(&first.dir.join(file))? == read(&second.dir.join(file))?, || format!("{file} differs between runs"))?;
    }
    let slowest = first.elapsed.max(second.elapsed);
    Ok(within(
        Duration::from_secs(5),
        slowest,
        "0 failed, predictions exact, micro_f1 100.00, metrics+matrix identical across 2 runs".into(),
    ))
}

// ---------------------------------------------------------------------------
// 3 & 4. metric oracle and accuracy identity

const ABSTAIN: usize = usize::MAX;
const FAILED: usize = usize::MAX - 1;

struct Instance {
    n_classes: usize,
    /// (gold, predicted column) with ABSTAIN/FAILED sentinels.
    rows: Vec<(usize, usize)>,
}

fn random_instance(rng: &mut StdRng) -> Instance {
    let n_classes = rng.random_range(1..=10);
    let n_episodes = rng.random_range(1..=50);
    let abstain_rate = rng.random_range(0.0..0.4);
    let rows = (0..n_episodes)
        .map(|_| {
            let gold = rng.random_range(0..n_classes);
            let roll: f64 = rng.random();
            let pred = if roll < abstain_rate / 2.0 {
                ABSTAIN
            } else if roll < abstain_rate {
                FAILED
            } else if rng.random_bool(0.6) {
                gold
            } else {
                rng.random_range(0..n_classes)
            };
            (gold, pred)
        })
        .collect();
    Instance { n_classes, rows }
}

fn materialize(inst: &Instance) -> (Dataset, Vec<ScoredEpisode>) {
    let classes: Vec<ActivityLabel> = (0..inst.n_classes).map(|i| ActivityLabel::new(format!("activity {i}")).unwrap()).collect();
    let mut episodes = Vec::new();
    let mut outcomes = Vec::new();
    for (i, &(g, p)) in inst.rows.iter().enumerate() {
        let id = format!("e{i:02}");
        episodes.push(Episode {
            id: id.clone(),
            gold: classes[g].clone(),
            objects: ObjectSequence::new(["thing"]).unwrap(),
        });
        outcomes.push(ScoredEpisode {
            episode_id: id,
            outcome: match p {
                ABSTAIN => Outcome::Abstain,
                FAILED => Outcome::Failed,
                p => Outcome::Predicted(classes[p].clone()),
            },
        });
    }
    let ds = Dataset {
        name: "random".into(),
        activities: classes,
        vocabulary: vec!["thing".into()],
        episodes,
    };
    (ds, outcomes)
}

fn q(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn safe_ratio(n: u64, d: u64) -> Ratio<u64> {
    if d == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(n, d)
    }
}

/// Brute-force tally compared field by field with the scorer.
fn oracle_agrees(inst: &Instance) -> Result<(), String> {
    let (ds, outcomes) = materialize(inst);
    let m = score(&outcomes, &ds).map_err(|e| e.to_string())?;
    let cm = confusion(&outcomes, &ds).map_err(|e| e.to_string())?;
    let n = inst.n_classes;

    let mut tally = vec![vec![0u64; n + 2]; n];
    for &(g, p) in &inst.rows {
        let col = match p {
            ABSTAIN => n,
            FAILED => n + 1,
            p => p,
        };
        tally[g][col] += 1;
    }
    check(cm.counts == tally, || format!("matrix {:?} != tally {tally:?}", cm.counts))?;

    let mut sum_tp = 0;
    let mut sum_fp = 0;
    let mut sum_fn = 0;
    for c in 0..n {
        let tp = inst.rows.iter().filter(|&&(g, p)| g == c && p == c).count() as u64;
        let fp = inst.rows.iter().filter(|&&(g, p)| g != c && p == c).count() as u64;
        let fn_ = inst.rows.iter().filter(|&&(g, p)| g == c && p != c).count() as u64;
        let got = m.per_class[c].1;
        check((got.tp, got.fp, got.fn_) == (tp, fp, fn_), || format!("class {c}: {got:?} != ({tp}, {fp}, {fn_})"))?;
        sum_tp += tp;
        sum_fp += fp;
        sum_fn += fn_;
    }
    let precision = safe_ratio(sum_tp, sum_tp + sum_fp);
    let recall = safe_ratio(sum_tp, sum_tp + sum_fn);
    let f1 = if precision + recall == Ratio::from_integer(0) {
        Ratio::from_integer(0)
    } else {
        Ratio::from_integer(2) * precision * recall / (precision + recall)
    };
    let ratio = |(a, b): (u64, u64)| safe_ratio(a, b);
    check(ratio(m.precision_ratio()) == precision, || format!("precision {:?} != {precision}", m.precision_ratio()))?;
    check(ratio(m.recall_ratio()) == recall, || format!("recall {:?} != {recall}", m.recall_ratio()))?;
    check(ratio(m.f1_ratio()) == f1, || format!("f1 {:?} != {f1}", m.f1_ratio()))?;
    check(m.micro_precision == q(precision), || "float precision".into())?;
    check(m.micro_recall == q(recall), || "float recall".into())?;
    check(m.micro_f1 == q(f1), || format!("float f1 {} != {}", m.micro_f1, q(f1)))?;
    Ok(())
}

fn instances() -> Vec<Instance> {
    let mut rng = StdRng::seed_from_u64(0x005e_edf1);
    (0..2000).map(|_| random_instance(&mut rng)).collect()
}

fn metric_oracle() -> Result<Verdict, String> {
    let start = Instant::now();
    let all = instances();
    let mut with_gaps = 0;
    for (i, inst) in all.iter().enumerate() {
        oracle_agrees(inst).map_err(|e| format!("instance {i}: {e}"))?;
        if inst.rows.iter().any(|(_, p)| *p == ABSTAIN || *p == FAILED) {
            with_gaps += 1;
        }
    }
    Ok(within(
        Duration::from_secs(30),
        start.elapsed(),
        format!("{} instances agree exactly ({with_gaps} with Abstain/Failed)", all.len()),
    ))
}

fn accuracy_identity() -> Result<Verdict, String> {
    let mut rng = StdRng::seed_from_u64(0xacc);
    let all = instances();
    for (i, inst) in all.iter().enumerate() {
        // Same instance with every Abstain/Failed replaced by a real prediction.
        let filled = Instance {
            n_classes: inst.n_classes,
            rows: inst
                .rows
                .iter()
                .map(|&(g, p)| (g, if p == ABSTAIN || p == FAILED { rng.random_range(0..inst.n_classes) } else { p }))
                .collect(),
        };
        let (ds, outcomes) = materialize(&filled);
        let m = score(&outcomes, &ds).map_err(|e| e.to_string())?;
        let correct = filled.rows.iter().filter(|(g, p)| g == p).count();
        let accuracy = correct as f64 / filled.rows.len() as f64;
        check(m.micro_f1 == accuracy, || format!("instance {i}: micro_f1 {} != accuracy {accuracy}", m.micro_f1))?;
        check(m.f1_ratio().0 * filled.rows.len() as u64 == correct as u64 * m.f1_ratio().1, || {
            format!("instance {i}: exact ratio differs")
        })?;
    }
    Ok(Verdict::Pass(format!("micro_f1 == accuracy on all {} instances", all.len())))
}

// ---------------------------------------------------------------------------
// 5. parser fuzzing

const PAPER_ANSWER: &str = "Answer: Early morning.\n Explanation: The objects used in this list suggest that the person is most likely performing an early morning activity, such as turning on the lights, opening drawers, and getting out of bed.";

const ANSWER_SEEDS: &[&str] = &[
    PAPER_ANSWER,
    "Answer: Coffee time.\nExplanation: A cup is filled with milk and stirred with a spoon.",
    "Answer and Explanation: Cleanup. The plate and glass end up in the dishwasher.",
    "Answer: Sandwich time\nExplanation: bread, salami and a knife.",
    "Relaxing",
    "Answer:\nEarly Morning\nExplanation: lights and drawers.",
];

const PAIR_SEEDS: &[&str] = &[
    "1. Cleanup and Early Morning\n2. Coffee time and Sandwich time\n3. Relaxing and Early Morning",
    "- Coffee time and Sandwich time: both use the fridge\n- Cleanup and Relaxing",
    "Cleanup and Early Morning",
];

const NOISE: &[char] = &[
    '.', ',', ';', ':', '!', '?', '*', '-', '(', ')', '[', ']', '"', '\'', '\n', ' ', '\t', '#', '1', 'é', '—', '→', '\u{200b}',
];

fn noise(rng: &mut StdRng, len: usize) -> String {
    (0..len)
        .map(|_| match rng.random_range(0..3) {
            0 => NOISE[rng.random_range(0..NOISE.len())],
            1 => rng.random_range('a'..='z'),
            _ => char::from_u32(rng.random_range(0x20..0x2fff)).unwrap_or('?'),
        })
        .collect()
}

fn mutate(seed: &str, rng: &mut StdRng) -> String {
    let mut chars: Vec<char> = seed.chars().collect();
    for _ in 0..rng.random_range(1..=4) {
        match rng.random_range(0..6) {
            0 => {
                let n = rng.random_range(1..20);
                let prefix: Vec<char> = noise(rng, n).chars().collect();
                chars.splice(0..0, prefix);
            }
            1 => {
                let n = rng.random_range(1..20);
                chars.extend(noise(rng, n).chars());
            }
            2 => {
                for c in chars.iter_mut() {
                    if rng.random_bool(0.2) {
                        *c = if c.is_uppercase() {
                            c.to_lowercase().next().unwrap_or(*c)
                        } else {
                            c.to_uppercase().next().unwrap_or(*c)
                        };
                    }
                }
            }
            3 => {
                for _ in 0..rng.random_range(1..6) {
                    let at = rng.random_range(0..=chars.len());
                    chars.insert(at, NOISE[rng.random_range(0..NOISE.len())]);
                }
            }
            4 if !chars.is_empty() => {
                let at = rng.random_range(0..chars.len());
                let end = (at + rng.random_range(1..8)).min(chars.len());
                chars.drain(at..end);
            }
            _ => {
                let at = rng.random_range(0..=chars.len());
                let n = rng.random_range(1..10);
                chars.splice(at..at, noise(rng, n).chars());
            }
        }
    }
    chars.into_iter().collect()
}

fn parser_fuzz() -> Result<Verdict, String> {
    let ds = opportunity();
    let acts = &ds.activities;
    let domain: HashSet<&ActivityLabel> = acts.iter().collect();

    let paper = parse_answer(PAPER_ANSWER, acts);
    check(paper.answer == Answer::Activity(ds.activity("Early Morning").unwrap().clone()), || {
        format!("paper example parsed to {:?}", paper.answer)
    })?;
    check(!paper.explanation.trim().is_empty(), || "paper example has empty explanation".into())?;

    let mut rng = StdRng::seed_from_u64(0xf022);
    let (mut resolved, mut abstained, mut pairs_found) = (0, 0, 0);
    const N: usize = 10_000;
    for i in 0..N {
        let answer_text = mutate(ANSWER_SEEDS[i % ANSWER_SEEDS.len()], &mut rng);
        let parsed = catch_unwind(|| parse_answer(&answer_text, acts)).map_err(|_| format!("parse_answer panicked on {answer_text:?}"))?;
        match &parsed.answer {
            Answer::Activity(l) if domain.contains(l) => resolved += 1,
            Answer::Activity(l) => return Err(format!("out-of-domain label {l} from {answer_text:?}")),
            Answer::Abstain => abstained += 1,
        }

        let pair_text = mutate(PAIR_SEEDS[i % PAIR_SEEDS.len()], &mut rng);
        let list = catch_unwind(|| parse_pair_list(&pair_text, acts)).map_err(|_| format!("parse_pair_list panicked on {pair_text:?}"))?;
        for p in &list.pairs {
            check(domain.contains(&p.first) && domain.contains(&p.second) && p.first != p.second, || {
                format!("bad pair {p} from {pair_text:?}")
            })?;
        }
        pairs_found += list.pairs.len();
    }
    Ok(Verdict::Pass(format!(
        "{N} answer + {N} pair-list mutations: no panic, all labels in domain ({resolved} resolved, {abstained} abstained, {pairs_found} pairs); paper example -> Early Morning"
    )))
}

// ---------------------------------------------------------------------------
// 6. knowledge assembly from the paper's example

const CLEANUP_BLOCK: &str = "During the Cleanup activity, the objects used should be put back to their original place or to the dishwasher. This includes objects such as the Bread Cutter, Knifes, Plates, Glass, Cup, and Plate.";
const EARLY_MORNING_BLOCK: &str = "During the Early Morning activity, the objects used can include the Switch, Drawer3 (lower), Drawer2 (middle), Drawer1 (top), Fridge, and Lazychair. These objects are used to perform various activities such as turning on the lights, opening drawers, and getting out of bed.";

fn knowledge_assembly() -> Result<Verdict, String> {
    let ds = opportunity();
    let pair = ActivityPair::new(ds.activity("Cleanup").unwrap().clone(), ds.activity("Early Morning").unwrap().clone())
        .map_err(|e| e.to_string())?;
    let completions = [
        format!("Cleanup: {CLEANUP_BLOCK} \n     \nEarly Morning: {EARLY_MORNING_BLOCK}\n"),
        format!("Cleanup: {CLEANUP_BLOCK}\nEarly Morning: {EARLY_MORNING_BLOCK}"),
    ];
    let rt = runtime();
    for completion in &completions {
        let mock = ScriptedMock::with_default(completion.clone());
        let generated = rt
            .block_on(generate_activity_knowledge(&mock, std::slice::from_ref(&pair), &ds, &StrategyConfig::new(Strategy::Proposed).params))
            .map_err(|e| e.to_string())?;
        let kb = &generated.knowledge;
        let names: Vec<&str> = kb.entries.iter().map(|e| e.activity.as_str()).collect();
        check(names == ["Cleanup", "Early Morning"], || format!("entries for {names:?}"))?;
        check(generated.failures.is_empty(), || "description failures recorded".into())?;
        let desc = |n: &str| kb.get(ds.activity(n).unwrap()).map(|e| e.description.trim().to_string());
        check(desc("Cleanup").as_deref() == Some(CLEANUP_BLOCK), || format!("Cleanup block {:?}", desc("Cleanup")))?;
        check(desc("Early Morning").as_deref() == Some(EARLY_MORNING_BLOCK), || {
            format!("Early Morning block {:?}", desc("Early Morning"))
        })?;
    }
    Ok(Verdict::Pass("entries exactly {Cleanup, Early Morning}, block boundaries exact (2 layouts)".into()))
}

// ---------------------------------------------------------------------------
// 7. cache behaviour

struct LibRun {
    calls: usize,
    files: Vec<String>,
}

fn run_with_counted_mock(opts: &Options, rt: &tokio::runtime::Runtime) -> Result<LibRun, String> {
    let mock = Arc::new(ScriptedMock::from_replay_file(fixture("mock.toml")).map_err(|e| e.to_string())?);
    let backend: Arc<dyn Backend> = with_cache(mock.clone(), opts, Path::new("unused")).map_err(|e| e.to_string())?;
    let outcome = rt.block_on(cmd_run(opts, backend.as_ref())).map_err(|e| e.to_string())?;
    let files = [PREDICTIONS_FILE, KNOWLEDGE_FILE, METRICS_FILE, CONFUSION_FILE]
        .iter()
        .map(|f| read(&outcome.run_dir.join(f)))
        .collect::<Result<_, _>>()?;
    Ok(LibRun {
        calls: mock.calls(),
        files,
    })
}

fn cache_behaviour() -> Result<Verdict, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache_dir = tmp.path().join("cache");
    let opts = Options {
        dataset: Some(fixture("manifest.toml")),
        strategy: Some(Strategy::Proposed),
        backend: Some(format!("mock:{}", fixture("mock.toml").display())),
        out: Some(tmp.path().join("runs")),
        cache_dir: Some(cache_dir.clone()),
        no_cache: Some(false),
        ..Options::default()
    };
    let rt = runtime();

    let cold = run_with_counted_mock(&opts, &rt)?;
    check(cold.calls == 8, || format!("cold run made {} calls, expected 8", cold.calls))?;
    let warm = run_with_counted_mock(&opts, &rt)?;
    check(warm.calls == 0, || format!("warm run made {} backend calls", warm.calls))?;
    check(warm.files == cold.files, || "warm run outputs differ from cold run".into())?;

    // Corrupt one entry: it must be treated as a miss and re-fetched.
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&cache_dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "entry"))
        .collect();
    entries.sort();
    check(entries.len() == 8, || format!("{} cache entries, expected 8", entries.len()))?;
    std::fs::write(&entries[0], b"{ not json").map_err(|e| e.to_string())?;
    let repaired = run_with_counted_mock(&opts, &rt)?;
    check(repaired.calls == 1, || format!("run after corruption made {} calls, expected 1", repaired.calls))?;
    check(repaired.files == cold.files, || "outputs changed after cache repair".into())?;
    let healed = ResponseCache::open(&cache_dir).map_err(|e| e.to_string())?;
    check(std::fs::read(&entries[0]).map(|b| b.starts_with(b"{\n") || b.starts_with(b"{\"")).unwrap_or(false), || {
        format!("corrupted entry was not rewritten in {}", healed.dir().display())
    })?;

    Ok(Verdict::Pass("cold 8 calls, warm 0 calls with identical outputs; corrupted entry refetched (1 call)".into()))
}

// ---------------------------------------------------------------------------
// 8. live smoke test

fn live_smoke() -> Result<Verdict, String> {
    if std::env::var(API_KEY_ENV).map(|k| k.is_empty()).unwrap_or(true) {
        return Ok(Verdict::Skip(format!("{API_KEY_ENV} not set")));
    }
    let base = std::env::var("HAR_BASE_URL").unwrap_or_else(|_| "https://api.openai.com/v1".into());
    let backend = HttpBackend::new(HttpConfig::from_env(&base)).map_err(|e| e.to_string())?;
    let ds = opportunity();
    let mut config = StrategyConfig::new(Strategy::ZeroShot);
    config.params.model_id = std::env::var("HAR_MODEL").unwrap_or_else(|_| DEFAULT_MODEL.into());

    let rt = runtime();
    let discovery = rt
        .block_on(discover_confusable_pairs(&backend, &ds, 3, &config.params))
        .map_err(|e| format!("pair discovery against {base}: {e}"))?;
    check(!discovery.raw.trim().is_empty(), || "empty discovery completion".into())?;
    let episode = &ds.episodes[0];
    let (prediction, _) = rt
        .block_on(classify_episode(&backend, &ds, Knowledge::None, episode, &config))
        .map_err(|e| format!("classification against {base}: {e}"))?;
    check(!prediction.raw.trim().is_empty(), || "empty classification completion".into())?;
    if let Answer::Activity(l) = &prediction.label {
        check(ds.activities.contains(l), || format!("out-of-domain label {l}"))?;
    }
    Ok(Verdict::Pass(format!(
        "{} pairs parsed; {} -> {:?}",
        discovery.pairs.len(),
        episode.id,
        prediction.label
    )))
}

// ---------------------------------------------------------------------------

fn main() {
    // libtest-style flags (e.g. --nocapture, filters) are accepted and ignored.
    let criteria: [(&str, Criterion); 8] = [
        ("golden prompts", golden_prompts),
        ("scripted end-to-end run", scripted_end_to_end),
        ("metric oracle equivalence", metric_oracle),
        ("accuracy identity", accuracy_identity),
        ("parser robustness", parser_fuzz),
        ("knowledge assembly", knowledge_assembly),
        ("cache behaviour", cache_behaviour),
        ("live smoke test", live_smoke),
    ];

    let (mut passed, mut failed, mut skipped) = (0, 0, 0);
    for (i, (name, f)) in criteria.iter().enumerate() {
        let verdict = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(Ok(v)) => v,
            Ok(Err(msg)) => Verdict::Fail(msg),
            Err(panic) => Verdict::Fail(format!(
                "panicked: {}",
                panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default()
            )),
        };
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => {
                passed += 1;
                ("PASS", d)
            }
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => {
                skipped += 1;
                ("SKIP", d)
            }
        };
        println!("{tag} {} {name}: {detail}", i + 1);
    }
    println!("acceptance: {passed} passed, {failed} failed, {skipped} skipped");
    if failed > 0 {
        std::process::exit(1);
    }
}
