//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the output.
//! The process fails if any criterion fails, except those listed in
//! `KNOWN_UNATTAINABLE`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use fet_cli::config::{Loaded, PipelineConfig};
use fet_cli::report::Evaluation;
use fet_cli::stages::{run_pipeline, synth, StageContext};
use fet_core::entailment_model::{
    cross_entropy_loss, gce_loss, loss_and_gradients, EntailmentModel, LossMode, ModelConfig,
};
use fet_core::generation::{
    filter_samples, rescaled_distribution, sample_index, sample_sentence, GeneratedSample, GenerationConfig,
    TokenId, TokenLm,
};
use fet_core::metrics::{evaluate, macro_f1, EvalPair};
use fet_core::nli_data::{build_examples, NliExample, NliLabel, PerSample};
use fet_core::ontology::{Enrichment, SiblingContrast, TypeOntology};
use fet_core::synthetic::{synthetic_world, SyntheticConfig};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criterion 4 asks for |GCE(q = 1e-4) - CE| < 1e-3 down to p = 0.01. The
/// gap is q·ln²(p)/2 to leading order, about 1.06e-3 at p = 0.01, so the
/// bound cannot hold for any correct implementation.
const KNOWN_UNATTAINABLE: &[u32] = &[4];

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1: metrics

fn brute_force(pairs: &[(Vec<String>, Vec<String>)]) -> [f64; 7] {
    let n = pairs.len() as f64;
    let (mut exact, mut p_sum, mut r_sum) = (0.0, 0.0, 0.0);
    let (mut inter_total, mut pred_total, mut gold_total) = (0usize, 0usize, 0usize);
    for (gold, pred) in pairs {
        let g: Vec<&String> = dedup(gold);
        let p: Vec<&String> = dedup(pred);
        let inter = g.iter().filter(|x| p.contains(x)).count();
        if g.len() == p.len() && inter == g.len() {
            exact += 1.0;
        }
        if !p.is_empty() {
            p_sum += inter as f64 / p.len() as f64;
        }
        r_sum += inter as f64 / g.len() as f64;
        inter_total += inter;
        pred_total += p.len();
        gold_total += g.len();
    }
    let f = |p: f64, r: f64| if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    let (map, mar) = (p_sum / n, r_sum / n);
    let mip = if pred_total == 0 { 0.0 } else { inter_total as f64 / pred_total as f64 };
    let mir = inter_total as f64 / gold_total as f64;
    [exact / n, map, mar, f(map, mar), mip, mir, f(mip, mir)]
}

fn dedup(v: &[String]) -> Vec<&String> {
    let mut out: Vec<&String> = Vec::new();
    for x in v {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let types = ["/a", "/a/b", "/a/c", "/d", "/d/e", "/f", "/f/g"];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        let pairs: Vec<(Vec<String>, Vec<String>)> = (0..n)
            .map(|_| {
                let mut pick = |min: usize| {
                    let k = rng.random_range(min..=5);
                    (0..k).map(|_| types.choose(&mut rng).unwrap().to_string()).collect::<Vec<_>>()
                };
                (pick(1), pick(0))
            })
            .collect();
        let eval: Vec<EvalPair> = pairs.iter().map(|(g, p)| EvalPair::new(g, p).unwrap()).collect();
        let r = evaluate(&eval).unwrap();
        let got = [
            r.strict_accuracy,
            r.macro_precision,
            r.macro_recall,
            r.macro_f1,
            r.micro_precision,
            r.micro_recall,
            r.micro_f1,
        ];
        for (a, b) in got.iter().zip(brute_force(&pairs)) {
            worst = worst.max((a - b).abs());
        }
    }
    let hand = macro_f1(&[EvalPair::new(["/person", "/person/artist"], ["/person"]).unwrap()]).unwrap();
    let hand_ok = hand.precision == 1.0 && hand.recall == 0.5 && hand.f1 == 2.0 / 3.0;
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && hand_ok && elapsed < Duration::from_secs(5),
        format!("max deviation {worst:.2e} over 1000 lists, hand example {hand_ok}, {elapsed:.2?}"),
    )
}

// --------------------------------------------------------------- 2: decoding

fn random_sets(rng: &mut ChaCha8Rng, v: usize) -> (HashSet<TokenId>, HashSet<TokenId>) {
    let mut entity = HashSet::new();
    let mut prefix = HashSet::new();
    for i in 0..v as TokenId {
        match rng.random_range(0..4) {
            0 => {
                entity.insert(i);
            }
            1 => {
                prefix.insert(i);
            }
            _ => {}
        }
    }
    (entity, prefix)
}

/// Direct evaluation: normalize logits to log-probabilities, divide each by
/// its multiplier (prefix takes precedence), then softmax without shifting.
fn direct_distribution(
    logits: &[f64],
    entity: &HashSet<TokenId>,
    prefix: &HashSet<TokenId>,
    c: &GenerationConfig,
) -> Vec<f64> {
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let weights: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let id = i as TokenId;
            let omega = if prefix.contains(&id) {
                c.tau * c.beta
            } else if entity.contains(&id) {
                c.tau * c.alpha
            } else {
                c.tau
            };
            ((l.exp() / z).ln() / omega).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let logits: Vec<f64> = (0..10).map(|_| rng.random_range(-4.0..4.0)).collect();
        let (entity, prefix) = random_sets(&mut rng, 10);
        let config = GenerationConfig {
            tau: rng.random_range(0.5..2.0),
            alpha: rng.random_range(1.0..6.0),
            beta: rng.random_range(0.1..1.0),
            ..GenerationConfig::default()
        };
        let got = rescaled_distribution(&logits, &entity, &prefix, &config).unwrap();
        for (a, b) in got.iter().zip(direct_distribution(&logits, &entity, &prefix, &config)) {
            worst = worst.max((a - b).abs());
        }
    }

    let logits: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin() * 2.0).collect();
    let entity: HashSet<TokenId> = [2, 5].into();
    let prefix: HashSet<TokenId> = [7].into();
    let config = GenerationConfig {
        alpha: 3.0,
        ..GenerationConfig::default()
    };
    let analytic = rescaled_distribution(&logits, &entity, &prefix, &config).unwrap();
    let mut counts = [0usize; 10];
    let draws = 100_000;
    for _ in 0..draws {
        counts[sample_index(&analytic, &mut rng)] += 1;
    }
    let tv: f64 = counts
        .iter()
        .zip(&analytic)
        .map(|(&c, p)| (c as f64 / draws as f64 - p).abs())
        .sum::<f64>()
        / 2.0;
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && tv <= 0.01 && elapsed < Duration::from_secs(30),
        format!("max deviation {worst:.2e} over 100 vectors, TV {tv:.4} over {draws} draws, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------- 3: monotonicity

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for _ in 0..1000 {
        let raw: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
        let lse = raw.iter().map(|l| l.exp()).sum::<f64>().ln();
        let logits: Vec<f64> = raw.iter().map(|l| l - lse).collect();
        let target = rng.random_range(0..10) as TokenId;
        let one: HashSet<TokenId> = [target].into();
        let none = HashSet::new();

        let entity_p = |alpha: f64| {
            let c = GenerationConfig {
                alpha,
                ..GenerationConfig::default()
            };
            rescaled_distribution(&logits, &one, &none, &c).unwrap()[target as usize]
        };
        let prefix_p = |beta: f64| {
            let c = GenerationConfig {
                beta,
                ..GenerationConfig::default()
            };
            rescaled_distribution(&logits, &none, &one, &c).unwrap()[target as usize]
        };
        let (a1, a2, a5) = (entity_p(1.0), entity_p(2.0), entity_p(5.0));
        let (b1, b05, b01) = (prefix_p(1.0), prefix_p(0.5), prefix_p(0.1));
        if !(a1 < a2 && a2 < a5) {
            violations += 1;
        }
        if !(b1 > b05 && b05 > b01) {
            violations += 1;
        }
    }
    check(violations == 0, format!("{violations} violations over 1000 cases"))
}

// -------------------------------------------------------------------- 4: GCE

fn criterion_4() -> Outcome {
    let half = gce_loss(&[0.5], 0.7).unwrap();
    let half_ok = (half - 0.54918).abs() <= 1e-4;
    let mut worst = (0.0f64, 0.0f64);
    let mut q_one_ok = true;
    for i in 0..=990 {
        let p = 0.01 + i as f64 * 0.001;
        let gap = (gce_loss(&[p], 1e-4).unwrap() - cross_entropy_loss(&[p]).unwrap()).abs();
        if gap > worst.0 {
            worst = (gap, p);
        }
        q_one_ok &= gce_loss(&[p], 1.0).unwrap() == 1.0 - p;
    }
    check(
        half_ok && worst.0 < 1e-3 && q_one_ok,
        format!(
            "gce(0.5, 0.7) = {half:.6}; max |gce(q=1e-4) - ce| = {:.4e} at p = {:.3}; q = 1 equals 1 - p: {q_one_ok}",
            worst.0, worst.1
        ),
    )
}

// ---------------------------------------------------------- 5: gradients

fn random_examples(rng: &mut ChaCha8Rng, words: &[&str]) -> Vec<NliExample> {
    let sentence = |rng: &mut ChaCha8Rng, n: usize| -> String {
        (0..n).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    (0..5)
        .map(|_| NliExample {
            premise: format!("Zed {}", sentence(rng, 4)),
            hypothesis: format!("Zed is a {}", sentence(rng, 1)),
            topics: (0..rng.random_range(0..3)).map(|_| sentence(rng, 2)).collect(),
            label: NliLabel::ALL[rng.random_range(0..3)],
            source_type: String::new(),
            hypothesis_type: String::new(),
            instance: "Zed".into(),
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let words = ["painted", "canvas", "scored", "goal", "artist", "athlete", "river", "city"];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = (0.0f64, String::new());
    for draw in 0..20 {
        let config = ModelConfig {
            dim: 4,
            seed: draw,
            learn_projection: draw % 2 == 0,
            ..ModelConfig::default()
        };
        let mut model = EntailmentModel::new(words.iter().map(|w| w.to_string()).collect(), &config).unwrap();
        for (_, t) in model.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-0.8..0.8);
            }
        }
        let data = random_examples(&mut rng, &words);
        for mode in [LossMode::Gce, LossMode::Ce] {
            let (_, grads) = loss_and_gradients(&model, &data, mode).unwrap();
            let analytic: Vec<(&str, Vec<f64>)> = grads.tensors().into_iter().map(|(n, g)| (n, g.to_vec())).collect();
            let h = 1e-5;
            for (t, (name, a)) in analytic.iter().enumerate() {
                let mut numeric = vec![0.0; a.len()];
                for (i, slot) in numeric.iter_mut().enumerate() {
                    let original = model.tensors_mut()[t].1[i];
                    model.tensors_mut()[t].1[i] = original + h;
                    let plus = loss_and_gradients(&model, &data, mode).unwrap().0;
                    model.tensors_mut()[t].1[i] = original - h;
                    let minus = loss_and_gradients(&model, &data, mode).unwrap().0;
                    model.tensors_mut()[t].1[i] = original;
                    *slot = (plus - minus) / (2.0 * h);
                }
                let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
                let scale = norm(a) + norm(&numeric);
                let rel = if scale < 1e-12 { norm(&diff) } else { norm(&diff) / scale };
                if rel > worst.0 {
                    worst = (rel, format!("{name} ({mode:?}, draw {draw})"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        worst.0 < 1e-4 && elapsed < Duration::from_secs(10),
        format!("worst relative error {:.2e} in {}, 20 draws, {elapsed:.2?}", worst.0, worst.1),
    )
}

// ------------------------------------------------------- 6: NLI soundness

fn random_ontology(rng: &mut ChaCha8Rng) -> TypeOntology {
    loop {
        let mut paths = Vec::new();
        for r in 0..rng.random_range(3..=5) {
            let root = format!("/r{r}");
            paths.push(root.clone());
            for c in 0..rng.random_range(1..=4) {
                let child = format!("{root}/c{c}");
                paths.push(child.clone());
                for g in 0..rng.random_range(0..=3) {
                    paths.push(format!("{child}/g{g}"));
                }
            }
        }
        if paths.len() >= 30 {
            return TypeOntology::from_types(paths.iter().map(|p| (p.as_str(), None::<String>))).unwrap();
        }
    }
}

/// Contradiction pool computed from paths alone.
fn expected_contradictions(paths: &[String], source: &str, mode: SiblingContrast) -> BTreeSet<String> {
    let root = |p: &str| p.split('/').nth(1).unwrap_or("").to_string();
    let parent = |p: &str| p.rsplit_once('/').map(|(a, _)| a.to_string()).unwrap_or_default();
    let depth = |p: &str| p.matches('/').count();
    let mut out: BTreeSet<String> = paths
        .iter()
        .filter(|p| depth(p) >= 2 && root(p) != root(source))
        .cloned()
        .collect();
    let mut along = vec![source.to_string()];
    if mode == SiblingContrast::Path {
        let mut cur = source.to_string();
        while depth(&cur) > 1 {
            cur = parent(&cur);
            along.push(cur.clone());
        }
    }
    if mode != SiblingContrast::None {
        for a in along {
            out.extend(
                paths
                    .iter()
                    .filter(|p| **p != a && depth(p) == depth(&a) && parent(p) == parent(&a))
                    .cloned(),
            );
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = Vec::new();
    let mut samples_seen = 0;
    let mut nodes = 0;
    while samples_seen < 10_000 {
        let ontology = random_ontology(&mut rng);
        nodes = nodes.max(ontology.len());
        let paths: Vec<String> = ontology.paths().map(str::to_string).collect();
        let mut enrichment = Enrichment::new();
        for p in &paths {
            enrichment.insert(&ontology, p, vec![], vec![format!("topic of {p}")]).unwrap();
        }
        let samples: Vec<GeneratedSample> = (0..500)
            .map(|i| GeneratedSample {
                text: format!("Name{i} did something"),
                tokens: vec![],
                instance: format!("Name{i}"),
                type_path: paths.choose(&mut rng).unwrap().clone(),
                mean_log_prob: -1.0,
                seed: 0,
            })
            .collect();
        let per = PerSample {
            n_neutral: rng.random_range(0..=3),
            n_contradiction: rng.random_range(0..=4),
        };
        let mode = [SiblingContrast::None, SiblingContrast::Own, SiblingContrast::Path][rng.random_range(0..3)];
        let examples = build_examples(&samples, &ontology, &enrichment, per, mode, rng.random()).unwrap();

        let mut by_instance: BTreeMap<&str, Vec<&NliExample>> = BTreeMap::new();
        for e in &examples {
            by_instance.entry(e.instance.as_str()).or_default().push(e);
        }
        for s in &samples {
            let emitted = by_instance.get(s.instance.as_str()).cloned().unwrap_or_default();
            let sets = ontology.contrast_sets(&s.type_path, mode).unwrap();
            let oracle = expected_contradictions(&paths, &s.type_path, mode);
            let pool: BTreeSet<String> = sets.contradiction.iter().cloned().collect();
            if pool != oracle {
                violations.push(format!("contrast pool of {} differs from oracle", s.type_path));
            }
            let entail = emitted.iter().filter(|e| e.label == NliLabel::Entailment).count();
            if entail != 1 {
                violations.push(format!("{} entailments for {}", entail, s.instance));
            }
            let mut seen: HashSet<(NliLabel, &str)> = HashSet::new();
            for e in &emitted {
                let ok = match e.label {
                    NliLabel::Entailment => e.hypothesis_type == s.type_path,
                    NliLabel::Neutral => sets.neutral.contains(&e.hypothesis_type),
                    NliLabel::Contradiction => pool.contains(&e.hypothesis_type),
                };
                let topics_from = if e.label == NliLabel::Contradiction { &e.hypothesis_type } else { &s.type_path };
                if !ok || e.source_type != s.type_path || e.topics != enrichment.topics(topics_from) {
                    violations.push(format!("{:?} {} for source {}", e.label, e.hypothesis_type, s.type_path));
                }
                if !seen.insert((e.label, e.hypothesis_type.as_str())) {
                    violations.push(format!("repeated {:?} {}", e.label, e.hypothesis_type));
                }
            }
            let n = emitted.iter().filter(|e| e.label == NliLabel::Neutral).count();
            let c = emitted.iter().filter(|e| e.label == NliLabel::Contradiction).count();
            if n != per.n_neutral.min(sets.neutral.len()) || c != per.n_contradiction.min(pool.len()) {
                violations.push(format!("counts {n}/{c} for {}", s.type_path));
            }
        }
        samples_seen += samples.len();
    }
    check(
        violations.is_empty(),
        format!(
            "{} violations over {samples_seen} samples (ontologies up to {nodes} nodes){}",
            violations.len(),
            violations.first().map(|v| format!(", first: {v}")).unwrap_or_default()
        ),
    )
}

// ------------------------------------------------ 7 and 9: full pipeline

struct PipelineRun {
    dir: tempfile::TempDir,
    elapsed: Duration,
    summary: String,
}

fn run_fixture() -> Result<PipelineRun, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    synth(dir.path(), &PipelineConfig::synthetic_fixture()).map_err(|e| format!("{e:#}"))?;
    let loaded = Loaded::from_file(&dir.path().join("fet.toml")).map_err(|e| format!("{e:#}"))?;
    let summary = run_pipeline(&StageContext::new(loaded)).map_err(|e| format!("{e:#}"))?;
    Ok(PipelineRun {
        dir,
        elapsed: start.elapsed(),
        summary,
    })
}

fn read_eval(path: &Path) -> Result<Evaluation, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

/// Re-runs part of the pipeline in `dir` with ablation overrides, writing
/// into `out/<name>/`.
fn ablation(dir: &Path, name: &str, overrides: &[&str], stages: &str) -> Result<Evaluation, String> {
    let mut loaded = Loaded::from_file(&dir.join("fet.toml")).map_err(|e| format!("{e:#}"))?;
    let mut all: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    all.push(format!("stages={stages}"));
    for (key, file) in [
        ("predictions", "predictions.jsonl"),
        ("metrics", "metrics.json"),
        ("report", "report.json"),
        ("manifests", "manifests"),
    ] {
        all.push(format!("paths.{key}=\"out/{name}/{file}\""));
    }
    if stages.contains("train") {
        all.push(format!("paths.model=\"out/{name}/model.json\""));
        all.push(format!("paths.loss_trace=\"out/{name}/loss.tsv\""));
    }
    loaded.config = loaded.config.with_overrides(&all).map_err(|e| format!("{e:#}"))?;
    run_pipeline(&StageContext::new(loaded)).map_err(|e| format!("{e:#}"))?;
    read_eval(&dir.join(format!("out/{name}/metrics.json")))
}

fn criterion_7(run: &Result<PipelineRun, String>) -> Outcome {
    let run = run.as_ref().map_err(|e| format!("pipeline failed: {e}"))?;
    let eval = read_eval(&run.dir.path().join("out/metrics.json"))?;
    let m = eval.metrics;
    let stages = r#"["infer", "evaluate", "report"]"#;
    let flat = ablation(run.dir.path(), "flat", &["ablation.flat_inference=true"], stages)?;
    let no_topics = ablation(
        run.dir.path(),
        "no-topics",
        &["ablation.no_topics=true"],
        r#"["train", "infer", "evaluate", "report"]"#,
    )?;
    for (name, e) in [("coarse-to-fine", &eval), ("flat", &flat), ("no topics", &no_topics)] {
        println!(
            "    {name:15} acc {:.4}  macro-F1 {:.4}  micro-F1 {:.4}",
            e.metrics.strict_accuracy, e.metrics.macro_f1, e.metrics.micro_f1
        );
    }
    println!(
        "    coarse-to-fine >= flat: {}; topics >= no topics: {}",
        m.strict_accuracy >= flat.metrics.strict_accuracy,
        m.strict_accuracy >= no_topics.metrics.strict_accuracy
    );
    check(
        m.strict_accuracy >= 0.80 && m.macro_f1 >= 0.90 && run.elapsed < Duration::from_secs(300),
        format!(
            "{} mentions, strict accuracy {:.4} (>= 0.80), macro-F1 {:.4} (>= 0.90), pipeline {:.2?}",
            m.count, m.strict_accuracy, m.macro_f1, run.elapsed
        ),
    )
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_9(first: &Result<PipelineRun, String>) -> Outcome {
    // The first run also serves the ablations, which add files; compare only
    // what a plain pipeline run writes.
    let a = first.as_ref().map_err(|e| format!("pipeline failed: {e}"))?;
    let b = run_fixture()?;
    if a.summary != b.summary {
        return Err("stage summaries differ".into());
    }
    let files = files_under(b.dir.path());
    let mut differing = Vec::new();
    for f in &files {
        if fs::read(a.dir.path().join(f)).ok() != fs::read(b.dir.path().join(f)).ok() {
            differing.push(f.display().to_string());
        }
    }
    check(
        differing.is_empty() && files.len() >= 10,
        format!("{} artifact files compared, {} differ {:?}", files.len(), differing.len(), differing),
    )
}

// ------------------------------------------------------------ 8: filtering

/// Unigram LM over a tiny vocabulary with a fixed preference order.
struct TinyLm {
    vocab: Vec<String>,
}

impl TokenLm for TinyLm {
    fn vocabulary(&self) -> &[String] {
        &self.vocab
    }
    fn next_logits(&self, prefix: &[TokenId]) -> fet_core::generation::Result<Vec<f64>> {
        let bias = prefix.len() as f64 * 0.1;
        Ok((0..self.vocab.len()).map(|i| ((i * 7 % 5) as f64).ln_1p() - if i == 0 { 1.5 - bias } else { 0.0 }).collect())
    }
    fn stop_tokens(&self) -> Vec<TokenId> {
        vec![0]
    }
    fn tokenize(&self, text: &str) -> Option<Vec<TokenId>> {
        text.split_whitespace()
            .map(|w| self.vocab.iter().position(|v| v == w).map(|i| i as TokenId))
            .collect()
    }
    fn detokenize(&self, tokens: &[TokenId]) -> String {
        tokens.iter().map(|&t| self.vocab[t as usize].as_str()).collect::<Vec<_>>().join(" ")
    }
}

fn criterion_8() -> Outcome {
    let world = synthetic_world(&SyntheticConfig::default(), &GenerationConfig::default()).map_err(|e| e.to_string())?;
    let tiny = TinyLm {
        vocab: ["<eos>", "ada", "lovelace", "wrote", "the", "notes", "on", "engines"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let instances: Vec<(String, &dyn TokenLm)> = world
        .enrichment
        .iter()
        .flat_map(|(_, e)| e.instances.iter().take(3).cloned())
        .map(|i| (i, &world.lm as &dyn TokenLm))
        .chain([("ada lovelace".to_string(), &tiny as &dyn TokenLm), ("engines".to_string(), &tiny)])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut violations = 0;
    let (mut kept, mut total) = (0, 0);
    for _ in 0..1000 {
        let (instance, lm) = instances.choose(&mut rng).unwrap();
        let config = GenerationConfig {
            alpha: rng.random_range(1.0..8.0),
            beta: rng.random_range(0.2..1.0),
            max_tokens: rng.random_range(3..20),
            ..GenerationConfig::default()
        };
        let stops: HashSet<TokenId> = lm.stop_tokens().into_iter().collect();
        let batch: Vec<GeneratedSample> = (0..rng.random_range(1..=6))
            .map(|_| sample_sentence(*lm, instance, &config, &stops, rng.random()).unwrap())
            .collect();
        let mean = batch.iter().map(|s| s.mean_log_prob).sum::<f64>() / batch.len() as f64;
        let size = batch.len();
        total += size;
        let retained = filter_samples(batch).unwrap();
        kept += retained.len();
        for s in &retained {
            let words: Vec<&str> = s.text.split_whitespace().collect();
            let target: Vec<&str> = s.instance.split_whitespace().collect();
            let contains = words.windows(target.len()).any(|w| {
                w.iter().zip(&target).all(|(a, b)| a.eq_ignore_ascii_case(b))
            });
            if !contains || (size >= 2 && s.mean_log_prob <= mean) {
                violations += 1;
            }
        }
    }
    check(
        violations == 0,
        format!("{violations} violations over 1000 batches ({kept} of {total} samples retained)"),
    )
}

fn main() {
    // Respect libtest-style name filters so `cargo test <name>` on other
    // targets does not drag this suite along.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }

    let pipeline = run_fixture();
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "metrics oracle", criterion_1()),
        (2, "decoding distribution", criterion_2()),
        (3, "reward/penalty monotonicity", criterion_3()),
        (4, "GCE correctness", criterion_4()),
        (5, "gradient check", criterion_5()),
        (6, "NLI construction soundness", criterion_6()),
        (7, "end-to-end synthetic benchmark", criterion_7(&pipeline)),
        (8, "filter contract", criterion_8()),
        (9, "determinism", criterion_9(&pipeline)),
    ];

    let mut unexpected = Vec::new();
    for (n, name, outcome) in &results {
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        let note = if outcome.is_err() && KNOWN_UNATTAINABLE.contains(n) {
            " [known unattainable]"
        } else {
            ""
        };
        println!("criterion {n} {status}: {name}: {detail}{note}");
        if outcome.is_err() && !KNOWN_UNATTAINABLE.contains(n) {
            unexpected.push(*n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("failing criteria: {unexpected:?}");
        std::process::exit(1);
    }
}
