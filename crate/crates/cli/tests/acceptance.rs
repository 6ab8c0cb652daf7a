//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng as _;

use nftforest::cart::{best_split, build_tree, export_dot, gini, select_split, ClassCounts, DecisionTree, Node, NodeKind, TreeConfig};
use nftforest::corpus::{read_dataset, stratified_folds, write_feature_csv};
use nftforest::dataset::{BoolTable, TrainingData};
use nftforest::forest::{bootstrap_sample, predict_forest, train_forest, ForestConfig};
use nftforest::pruning::prune_sequence;
use nftforest::rng;
use nftforest::tuning::{builtin_presets, grid_search, GridSpec};
use nftforest::{build_dataset, builtin_rules, synth, ContractSource, FeatureVector, Family, LabeledDataset, Sample};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let took = started.elapsed();
    check(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nftforest"))
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = bin().args(args).output().map_err(|e| format!("spawn: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "`nftforest {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

// Pair-probability impurity: chance that two draws (with replacement)
// carry different labels, counted over all ordered pairs.
fn pair_gini(n0: usize, n1: usize) -> f64 {
    let labels: Vec<u8> = std::iter::repeat_n(0, n0).chain(std::iter::repeat_n(1, n1)).collect();
    let mut differ = 0usize;
    for a in &labels {
        for b in &labels {
            differ += usize::from(a != b);
        }
    }
    differ as f64 / (labels.len() * labels.len()) as f64
}

fn random_table(rng: &mut rng::Rng, max_features: usize, max_samples: usize) -> BoolTable {
    let f = rng.random_range(1..=max_features);
    let n = rng.random_range(1..=max_samples);
    let density = rng.random_range(0.1..0.9);
    let rows: Vec<Vec<bool>> = (0..n).map(|_| (0..f).map(|_| rng.random_bool(density)).collect()).collect();
    let labels = rows
        .iter()
        .map(|r| {
            // Labels loosely tied to the first bit so trees have structure.
            let p = if r[0] { 0.8 } else { 0.3 };
            u8::from(rng.random_bool(p))
        })
        .collect();
    BoolTable::new(f, rows, labels).unwrap()
}

/// Labels depend on several features with noise, so trees grow several levels.
fn layered_table(rng: &mut rng::Rng) -> BoolTable {
    let f = rng.random_range(3..=6);
    let n = rng.random_range(8..=30);
    let rows: Vec<Vec<bool>> = (0..n).map(|_| (0..f).map(|_| rng.random_bool(0.5)).collect()).collect();
    let labels = rows
        .iter()
        .map(|r| {
            let score = usize::from(r[0]) + usize::from(r[1] && r[2]);
            let p = [0.15, 0.6, 0.9][score];
            u8::from(rng.random_bool(p))
        })
        .collect();
    BoolTable::new(f, rows, labels).unwrap()
}

fn counts_of(data: &BoolTable, indices: &[usize]) -> (usize, usize) {
    let n1 = indices.iter().filter(|&&i| data.label(i) == 1).count();
    (indices.len() - n1, n1)
}

// Gini(D|A) by definition, with the impurity of each side from pair_gini.
fn conditional_gini(data: &BoolTable, indices: &[usize], feature: usize) -> f64 {
    let n = indices.len() as f64;
    let mut total = 0.0;
    for value in [false, true] {
        let side: Vec<usize> = indices.iter().copied().filter(|&i| data.bit(i, feature) == value).collect();
        if side.is_empty() {
            continue;
        }
        let (a, b) = counts_of(data, &side);
        total += side.len() as f64 / n * pair_gini(a, b);
    }
    total
}

/// Exhaustive choice: minimum conditional impurity, lowest index among ties,
/// strictly below the parent.
fn oracle_split(data: &BoolTable, indices: &[usize], allowed: &[usize]) -> Option<(usize, f64)> {
    let (a, b) = counts_of(data, indices);
    let parent = pair_gini(a, b);
    let mut best: Option<(usize, f64)> = None;
    for &f in allowed {
        let g = conditional_gini(data, indices, f);
        if g >= parent - 1e-12 {
            continue;
        }
        match best {
            Some((_, bg)) if g >= bg - 1e-12 => {}
            _ => best = Some((f, g)),
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut checked = 0;
    for n in 1..=12 {
        for n0 in 0..=n {
            let got = gini(ClassCounts::new(n0, n - n0)).map_err(|e| e.to_string())?;
            let want = pair_gini(n0, n - n0);
            check((got - want).abs() <= 1e-12, || format!("gini({n0},{}) = {got}, oracle {want}", n - n0))?;
            checked += 1;
        }
    }
    check(gini(ClassCounts::new(0, 0)).is_err(), || "empty node accepted".into())?;
    within(Duration::from_secs(1), started)?;
    Ok(format!("{checked} count pairs match the pair-probability oracle"))
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut rng = rng::seeded(2);
    let mut ties = 0;
    for case in 0..200 {
        let data = random_table(&mut rng, 8, 30);
        let all: Vec<usize> = (0..data.n_samples()).collect();
        let allowed: Vec<usize> = (0..data.n_features()).collect();
        let got = best_split(&data, &all, &allowed).map(|s| (s.feature, s.impurity));
        let want = oracle_split(&data, &all, &allowed);
        match (got, want) {
            (None, None) => {}
            (Some((gf, gi)), Some((wf, wi))) if gf == wf && (gi - wi).abs() <= 1e-12 => {
                let tied = allowed
                    .iter()
                    .filter(|&&f| f != wf && (conditional_gini(&data, &all, f) - wi).abs() <= 1e-12)
                    .count();
                ties += usize::from(tied > 0);
            }
            _ => return Err(format!("case {case}: best_split {got:?}, oracle {want:?}")),
        }
    }
    let published = [(0, 0.17), (1, 0.42), (2, 0.15), (3, 0.39), (4, 0.34), (5, 0.28)];
    let chosen = select_split(&published, 0.5);
    check(chosen == Some((2, 0.15)), || format!("published impurities select {chosen:?}, expected A3"))?;
    within(Duration::from_secs(5), started)?;
    Ok(format!("200 datasets agree ({ties} with tied impurities); published impurities select A3 at 0.15"))
}

fn criterion_3() -> Outcome {
    let mut rng = rng::seeded(3);
    let mut nodes_checked = 0;
    for case in 0..200 {
        let data = random_table(&mut rng, 8, 40);
        let config = TreeConfig {
            max_depth: if rng.random_bool(0.2) { usize::MAX } else { rng.random_range(1..=6) },
            min_samples_split: rng.random_range(2..=6),
            min_samples_leaf: rng.random_range(1..=4),
            allowed_features: None,
        };
        let tree = build_tree(&data, &config).map_err(|e| e.to_string())?;
        let fail = |msg: String| format!("case {case} ({config:?}): {msg}");
        let nodes = tree.nodes();
        let depths = tree.node_depths();

        // Samples reaching each node, routed independently of stored counts.
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        for i in 0..data.n_samples() {
            let mut id = 0;
            loop {
                members[id].push(i);
                match nodes[id].kind {
                    NodeKind::Internal { feature, left, right } => id = if data.bit(i, feature) { right } else { left },
                    NodeKind::Leaf { .. } => break,
                }
            }
        }

        for (id, node) in nodes.iter().enumerate() {
            nodes_checked += 1;
            let (a, b) = counts_of(&data, &members[id]);
            check(node.counts == ClassCounts::new(a, b), || fail(format!("node {id} counts {:?} but routes ({a},{b})", node.counts)))?;
            check(depths[id] <= config.max_depth, || fail(format!("node {id} at depth {}", depths[id])))?;
            match node.kind {
                NodeKind::Internal { feature, left, right } => {
                    let (l, r) = (nodes[left].counts, nodes[right].counts);
                    check(l + r == node.counts, || fail(format!("node {id}: children do not sum to parent")))?;
                    check(node.counts.total() >= config.min_samples_split, || fail(format!("node {id} split below min_split")))?;
                    check(
                        l.total() >= config.min_samples_leaf && r.total() >= config.min_samples_leaf,
                        || fail(format!("node {id} has a child below min_leaf")),
                    )?;
                    check(depths[id] < config.max_depth, || fail(format!("node {id} split at max depth")))?;
                    let child = conditional_gini(&data, &members[id], feature);
                    check(child < pair_gini(a, b) - 1e-12, || fail(format!("node {id}: no strict impurity decrease")))?;
                }
                NodeKind::Leaf { prediction } => {
                    check(prediction == u8::from(b > a), || fail(format!("leaf {id} predicts {prediction} on ({a},{b})")))?;
                    // A leaf that could still grow must have had no usable best split.
                    if a > 0 && b > 0 && depths[id] < config.max_depth && members[id].len() >= config.min_samples_split {
                        let allowed: Vec<usize> = (0..data.n_features()).collect();
                        if let Some((f, _)) = oracle_split(&data, &members[id], &allowed) {
                            let ones = members[id].iter().filter(|&&i| data.bit(i, f)).count();
                            let smaller = ones.min(members[id].len() - ones);
                            check(smaller < config.min_samples_leaf, || fail(format!("leaf {id} admits a legal split on {f}")))?;
                        }
                    }
                }
            }
        }
    }
    Ok(format!("200 trees, {nodes_checked} nodes legal"))
}

/// All pruned subtrees rooted at `node`, as sets of nodes to collapse.
fn pruned_subtrees(tree: &DecisionTree, node: usize) -> Vec<Vec<usize>> {
    match tree.nodes()[node].kind {
        NodeKind::Leaf { .. } => vec![vec![]],
        NodeKind::Internal { left, right, .. } => {
            let mut out = vec![vec![node]];
            let rights = pruned_subtrees(tree, right);
            for l in pruned_subtrees(tree, left) {
                for r in &rights {
                    out.push(l.iter().chain(r).copied().collect());
                }
            }
            out
        }
    }
}

fn leaf_errors(tree: &DecisionTree) -> usize {
    tree.nodes().iter().filter(|n| n.is_leaf()).map(|n| n.counts.n0.min(n.counts.n1)).sum()
}

/// Lower envelope of R(T) + alpha |T| over all pruned subtrees, smallest tree
/// on ties. Returns (numerator, denominator) breakpoints and trees.
fn oracle_path(tree: &DecisionTree, n: usize) -> Vec<((usize, usize), DecisionTree)> {
    let candidates: Vec<(usize, usize, DecisionTree)> = pruned_subtrees(tree, 0)
        .into_iter()
        .map(|set| {
            let t = tree.collapse(&set);
            (leaf_errors(&t), t.n_leaves(), t)
        })
        .collect();
    let start = candidates
        .iter()
        .min_by_key(|(e, l, _)| (*e, *l))
        .expect("at least the root");
    let mut path = vec![((0, 1), start.2.clone())];
    let (mut err, mut leaves) = (start.0, start.1);
    while leaves > 1 {
        // Next crossing: alpha = (e' - e) / (N (L - L')).
        let mut next: Option<(usize, usize, &(usize, usize, DecisionTree))> = None;
        for c in candidates.iter().filter(|c| c.1 < leaves) {
            let num = c.0 - err;
            let den = n * (leaves - c.1);
            let better = match next {
                None => true,
                Some((bn, bd, b)) => num * bd < bn * den || (num * bd == bn * den && c.1 < b.1),
            };
            if better {
                next = Some((num, den, c));
            }
        }
        let (num, den, c) = next.expect("root is always a candidate");
        path.push(((num, den), c.2.clone()));
        err = c.0;
        leaves = c.1;
    }
    path
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let mut rng = rng::seeded(4);
    let mut trees = 0;
    let mut steps = 0;
    let mut longest = 0;
    let mut attempts = 0;
    while trees < 100 {
        attempts += 1;
        check(attempts < 10_000, || "could not draw enough small trees".into())?;
        let data = layered_table(&mut rng);
        let config = TreeConfig {
            max_depth: rng.random_range(2..=4),
            ..TreeConfig::default()
        };
        let tree = build_tree(&data, &config).map_err(|e| e.to_string())?;
        if tree.n_leaves() > 6 || tree.n_leaves() < 3 {
            continue;
        }
        trees += 1;
        let sequence = prune_sequence(&tree, &data);
        let oracle = oracle_path(&tree, data.n_samples());
        check(sequence.len() == oracle.len(), || {
            format!("tree {trees}: {} entries, oracle {}", sequence.len(), oracle.len())
        })?;
        for (k, (entry, ((num, den), want))) in sequence.entries.iter().zip(&oracle).enumerate() {
            let alpha = *num as f64 / *den as f64;
            check((entry.alpha - alpha).abs() <= 1e-12, || {
                format!("tree {trees} entry {k}: alpha {} vs oracle {alpha}", entry.alpha)
            })?;
            check(&entry.tree == want, || format!("tree {trees} entry {k}: structure differs from oracle"))?;
            if k > 0 {
                let prev = &sequence.entries[k - 1];
                check(entry.alpha > prev.alpha, || format!("tree {trees}: alpha not strictly increasing at {k}"))?;
                check(entry.tree.is_pruned_subtree_of(&prev.tree), || format!("tree {trees}: entry {k} not nested"))?;
            }
        }
        steps += sequence.len();
        longest = longest.max(sequence.len());
    }
    within(Duration::from_secs(10), started)?;
    Ok(format!("100 trees, {steps} sequence entries (longest {longest}) match exhaustive enumeration"))
}

fn criterion_5() -> Outcome {
    let n = 100;
    let mut total = 0.0;
    for i in 0..1000 {
        let mut r = rng::stream(5, i);
        let bag = bootstrap_sample(n, &mut r);
        check(bag.len() == n, || format!("bag of {} for n = {n}", bag.len()))?;
        let mut unique = bag.clone();
        unique.dedup();
        total += unique.len() as f64 / n as f64;
    }
    let mean = total / 1000.0;
    let analytic = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
    check((mean - 0.634).abs() <= 0.02, || format!("mean unique fraction {mean:.4}"))?;
    Ok(format!("mean unique fraction {mean:.4} (analytic {analytic:.4})"))
}

fn random_dataset(rng: &mut rng::Rng, family: Family, n: usize) -> LabeledDataset {
    let samples = (0..n)
        .map(|i| {
            let bits: Vec<bool> = (0..family.arity()).map(|_| rng.random_bool(0.4)).collect();
            let p = if bits[0] || (bits[1] && bits[2]) { 0.85 } else { 0.2 };
            Sample {
                id: format!("s{i:03}"),
                features: FeatureVector::new(family, bits).unwrap(),
                label: u8::from(rng.random_bool(p)),
            }
        })
        .collect();
    LabeledDataset::new(family, samples).unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = rng::seeded(6);
    let mut compared = 0;
    for round in 0..20 {
        let family = Family::ALL[round % 5];
        let n = rng.random_range(10..80);
        let data = random_dataset(&mut rng, family, n);
        let mut config = ForestConfig::new(family.arity(), 1, rng.random_range(1..=6)).with_seed(round as u64);
        config.bootstrap = false;
        let model = train_forest(&data, &config).map_err(|e| e.to_string())?;
        let tree = build_tree(&data.sorted_by_id(), &config.tree_config()).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let bits: Vec<bool> = (0..family.arity()).map(|_| rng.random_bool(0.5)).collect();
            let fv = FeatureVector::new(family, bits).unwrap();
            let forest = predict_forest(&model, &fv).map_err(|e| e.to_string())?;
            let single = tree.predict(&fv).map_err(|e| e.to_string())?;
            check(forest == single, || format!("round {round}: forest {forest}, CART {single}"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} predictions identical to plain CART"))
}

fn synthetic_dataset(family: Family, n: usize, seed: u64) -> LabeledDataset {
    let contracts = synth::generate(family, n, 0.5, seed).unwrap();
    let sources: Vec<ContractSource> = contracts.iter().map(|c| ContractSource::new(c.id.clone(), c.text.clone())).collect();
    build_dataset(&sources, &synth::label_table(family, &contracts), family, &builtin_rules()).unwrap()
}

fn criterion_7() -> Outcome {
    let family = Family::Erc721Reentrancy;
    let data = synthetic_dataset(family, 120, 7);
    let spec = GridSpec::new(vec![2, 4], vec![1, 3], vec![1, 3]).with_seed(77).with_folds(4);
    let result = grid_search(&data, &spec).map_err(|e| e.to_string())?;

    let sorted = data.sorted_by_id();
    let folds = stratified_folds(&sorted, 4, 77).map_err(|e| e.to_string())?;
    let mut brute = Vec::new();
    for mf in [2, 4] {
        for nt in [1, 3] {
            for md in [1, 3] {
                let config = ForestConfig::new(mf, nt, md).with_seed(77);
                let mut accs = Vec::new();
                for fold in &folds {
                    let train: Vec<usize> = (0..sorted.len()).filter(|i| !fold.contains(i)).collect();
                    let model = train_forest(&sorted.subset(&train), &config).map_err(|e| e.to_string())?;
                    let correct = fold
                        .iter()
                        .filter(|&&i| predict_forest(&model, &sorted.samples()[i].features).unwrap() == sorted.samples()[i].label)
                        .count();
                    accs.push(correct as f64 / fold.len() as f64);
                }
                let mean = accs.iter().sum::<f64>() / accs.len() as f64;
                brute.push((mf, nt, md, mean, accs));
            }
        }
    }
    check(result.cells.len() == brute.len(), || format!("{} cells, expected {}", result.cells.len(), brute.len()))?;
    for (cell, (mf, nt, md, mean, accs)) in result.cells.iter().zip(&brute) {
        check((cell.max_features, cell.n_trees, cell.max_depth) == (*mf, *nt, *md), || {
            format!("cell order differs at ({mf},{nt},{md})")
        })?;
        check((cell.mean_accuracy - mean).abs() <= 1e-12, || {
            format!("({mf},{nt},{md}): mean {} vs brute force {mean}", cell.mean_accuracy)
        })?;
        check(cell.fold_accuracies == *accs, || format!("({mf},{nt},{md}): fold accuracies differ"))?;
    }
    // Highest mean, then fewer trees, shallower, fewer features.
    let best = brute
        .iter()
        .max_by(|a, b| {
            a.3.partial_cmp(&b.3)
                .unwrap()
                .then(b.1.cmp(&a.1))
                .then(b.2.cmp(&a.2))
                .then(b.0.cmp(&a.0))
        })
        .unwrap();
    let got = (result.best.max_features, result.best.n_trees, result.best.max_depth);
    check(got == (best.0, best.1, best.2), || format!("best {got:?}, brute force {:?}", (best.0, best.1, best.2)))?;
    let worst = brute.iter().map(|c| c.3).fold(f64::INFINITY, f64::min);
    Ok(format!("8 cells match brute force; means {worst:.4}..{:.4}, best {got:?}", best.3))
}

const TUNED_PRESETS: [(Family, usize, usize, usize); 5] = [
    (Family::RiskyMutableProxy, 3, 50, 4),
    (Family::Erc721Reentrancy, 4, 50, 5),
    (Family::UnlimitedMinting, 4, 75, 4),
    (Family::MissingRequirements, 4, 50, 4),
    (Family::PublicBurn, 5, 55, 3),
];

fn corpus_csv(dir: &Path, family: Family, n: usize, seed: u64) -> Result<std::path::PathBuf, String> {
    let corpus = dir.join(format!("corpus_{}", family.tag()));
    let csv = dir.join(format!("{}.csv", family.tag()));
    let seed = seed.to_string();
    let n = n.to_string();
    run_cli(&["--seed", &seed, "gen-corpus", "--family", family.tag(), "--n", &n, "--out", path(&corpus)])?;
    let labels = corpus.join("labels.csv");
    run_cli(&["extract", path(&corpus), "--family", family.tag(), "--labels", path(&labels), "--out", path(&csv)])?;
    Ok(csv)
}

fn criterion_8() -> Outcome {
    let presets = builtin_presets();
    let rows: Vec<_> = presets.iter().map(|p| (p.family, p.max_features, p.n_trees, p.max_depth)).collect();
    check(rows == TUNED_PRESETS, || format!("presets {rows:?}"))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (family, mf, nt, md) in TUNED_PRESETS {
        let csv = corpus_csv(dir.path(), family, 40, 8)?;
        let model = dir.path().join(format!("{}.json", family.tag()));
        run_cli(&["--seed", "8", "train", path(&csv), "--preset", family.tag(), "--out", path(&model)])?;
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).map_err(|e| e.to_string())?;
        let config = &json["config"];
        let embedded = (config["max_features"].as_u64(), config["n_trees"].as_u64(), config["max_depth"].as_u64());
        check(embedded == (Some(mf as u64), Some(nt as u64), Some(md as u64)), || {
            format!("{family}: model embeds {embedded:?}")
        })?;
        check(json["trees"].as_array().map(Vec::len) == Some(nt), || format!("{family}: tree count"))?;
    }
    Ok("five tuned presets; train --preset embeds them".into())
}

fn criterion_9() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for family in Family::ALL {
        let csv = corpus_csv(dir.path(), family, 200, 9)?;
        let corpus = dir.path().join(format!("corpus_{}", family.tag()));
        let sol = fs::read_dir(&corpus)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "sol"))
            .count();
        check(sol == 200, || format!("{family}: {sol} contracts generated"))?;
        let data = read_dataset(&csv).map_err(|e| e.to_string())?;
        check(data.class_sizes() == [100, 100], || format!("{family}: classes {:?}", data.class_sizes()))?;

        let model = dir.path().join(format!("{}.json", family.tag()));
        let out = run_cli(&[
            "--seed", "9", "--format", "json", "train", path(&csv), "--preset", family.tag(), "--holdout", "0.2", "--out",
            path(&model),
        ])?;
        let report: serde_json::Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
        let oob = report["oob_accuracy"].as_f64().ok_or("no oob accuracy")?;
        let held = report["holdout"]["metrics"]["accuracy"].as_f64().ok_or("no holdout accuracy")?;
        let test_n = report["holdout"]["samples"].as_u64();
        check(test_n == Some(40), || format!("{family}: holdout of {test_n:?}"))?;
        check(held >= 0.95, || format!("{family}: held-out accuracy {held:.4}"))?;
        check((oob - held).abs() <= 0.05, || format!("{family}: oob {oob:.4} vs held-out {held:.4}"))?;
        summary.push(format!("{} {held:.3}/{oob:.3}", family.tag()));
    }
    within(Duration::from_secs(60), started)?;
    Ok(format!(
        "held-out/oob {} in {:.1?}",
        summary.join(", "),
        started.elapsed()
    ))
}

fn pipeline_outputs(dir: &Path) -> Result<BTreeMap<&'static str, Vec<u8>>, String> {
    let family = Family::PublicBurn;
    let csv = corpus_csv(dir, family, 80, 10)?;
    let model = dir.join("model.json");
    let surface = dir.join("surface.csv");
    let best = dir.join("best.json");
    run_cli(&["--seed", "10", "train", path(&csv), "--preset", "PB", "--prune-trees", "--out", path(&model)])?;
    run_cli(&[
        "--seed", "10", "tune", path(&csv), "--grid", "max_features=2,5;n_trees=5,10;max_depth=2,3", "--out", path(&surface),
        "--best-config", path(&best),
    ])?;
    let corpus = dir.join("corpus_PB");
    let report = run_cli(&["--format", "json", "predict", path(&model), path(&corpus)])?;
    let text = run_cli(&["predict", path(&model), path(&corpus)])?;
    let mut files = BTreeMap::new();
    for (name, p) in [("features", &csv), ("model", &model), ("surface", &surface), ("best", &best)] {
        files.insert(name, fs::read(p).map_err(|e| e.to_string())?);
    }
    files.insert("report", report.into_bytes());
    files.insert("report text", text.into_bytes());
    Ok(files)
}

fn criterion_10() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline_outputs(a.path())?;
    let second = pipeline_outputs(b.path())?;
    for (name, bytes) in &first {
        check(second[name] == *bytes, || format!("{name} differs between runs"))?;
        check(!bytes.is_empty(), || format!("{name} is empty"))?;
    }
    Ok(format!("{} artifacts byte-identical across runs", first.len()))
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sample_rows = "File,A1,A2,A3,A4,A5,A6,Risk\n\
        addcfaaabdbcbfccf.sol,False,False,True,True,False,False,1\n\
        bdbdbbcabdc.sol,False,True,False,False,False,False,0\n\
        bccffcaccbcf.sol,False,False,False,False,False,False,0\n\
        acdbaafcbabcbs.sol,False,True,False,False,False,False,0\n\
        feaddbbbcdfacd.sol,False,False,False,False,True,True,1\n\
        dfefadedbae.sol,False,False,False,False,False,True,0\n";
    let original = dir.path().join("sample_rows.csv");
    fs::write(&original, sample_rows).unwrap();
    let data = read_dataset(&original).map_err(|e| e.to_string())?;
    check(data.family() == Family::RiskyMutableProxy, || "family not taken from header".into())?;
    let first = &data.samples()[0];
    check(first.id == "addcfaaabdbcbfccf", || format!("id {}", first.id))?;
    check(first.features.bits() == [false, false, true, true, false, false] && first.label == 1, || {
        "first row cells misread".into()
    })?;
    let rewritten = dir.path().join("rewritten.csv");
    write_feature_csv(&data, &rewritten).map_err(|e| e.to_string())?;
    check(fs::read_to_string(&rewritten).unwrap() == sample_rows, || "sample rows do not round-trip".into())?;

    // Synthetic data through extract, then read and write again.
    let csv = corpus_csv(dir.path(), Family::MissingRequirements, 30, 11)?;
    let again = dir.path().join("again.csv");
    write_feature_csv(&read_dataset(&csv).map_err(|e| e.to_string())?, &again).map_err(|e| e.to_string())?;
    check(fs::read(&csv).unwrap() == fs::read(&again).unwrap(), || "extracted CSV does not round-trip".into())?;
    let header = fs::read_to_string(&csv).unwrap().lines().next().unwrap_or_default().to_string();
    check(header == "File,D1,D2,D3,D4,D5,D6,D7,D8,Risk", || format!("header {header}"))?;

    let leaf = |n0, n1| Node {
        counts: ClassCounts::new(n0, n1),
        gini: gini(ClassCounts::new(n0, n1)).unwrap(),
        kind: NodeKind::Leaf { prediction: u8::from(n1 > n0) },
    };
    let tree = DecisionTree::from_nodes(
        6,
        vec![
            Node {
                counts: ClassCounts::new(4, 2),
                gini: gini(ClassCounts::new(4, 2)).unwrap(),
                kind: NodeKind::Internal { feature: 2, left: 1, right: 2 },
            },
            leaf(4, 0),
            leaf(0, 2),
        ],
    )
    .map_err(|e| e.to_string())?;
    let dot = export_dot(&tree, Family::RiskyMutableProxy);
    for field in [
        "A3 <= 0.5",
        "gini = 0.444",
        "samples = 6",
        "value = [4, 2]",
        "samples = 4",
        "value = [0, 2]",
        "class = 1",
        "label=\"False\"",
        "label=\"True\"",
    ] {
        check(dot.contains(field), || format!("DOT lacks `{field}`"))?;
    }
    check(dot.trim_start().starts_with("digraph"), || "DOT is not a digraph".into())?;
    Ok("sample rows and extracted CSV round-trip; DOT carries node fields".into())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("gini oracle", criterion_1),
        ("split selection", criterion_2),
        ("tree legality", criterion_3),
        ("pruning oracle", criterion_4),
        ("bootstrap statistics", criterion_5),
        ("forest degeneration", criterion_6),
        ("grid-search oracle", criterion_7),
        ("presets", criterion_8),
        ("end-to-end synthetic study", criterion_9),
        ("determinism", criterion_10),
        ("format fidelity", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let took = started.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{took:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{took:.2?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
