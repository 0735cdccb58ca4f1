//! Reference implementations used as test oracles.
//!
//! Everything here is written independently of the library code it checks:
//! brute-force ranking, grid-searched isotonic and Platt fits, naive loss
//! formulas and central finite differences.
#![allow(dead_code)]

use std::collections::HashSet;

use kgcal_core::models::{score_gradient, score_rows};
use kgcal_core::{
    calibration_weights, compute_loss, fit_isotonic, fit_platt, ranked_eval, train, EmbeddingModel, FilterIndex,
    KnowledgeGraph, Dictionary, LossKind, ModelKind, NormOrder, TiePolicy, TrainConfig, Triple,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALL_MODELS: [ModelKind; 5] = [
    ModelKind::TransE { norm: NormOrder::L1 },
    ModelKind::TransE { norm: NormOrder::L2 },
    ModelKind::DistMult,
    ModelKind::ComplEx,
    ModelKind::HolE,
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

// ---------------------------------------------------------------------------
// Sample weights

/// Largest `|ω₊P / (ω₋ηP + ω₊P) − α|` over random `(α, η, P)`.
pub fn weighting_identity_max_error(pairs: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let alpha = rng.gen_range(1e-3..1.0 - 1e-3);
        let eta = rng.gen_range(1..=200usize);
        let p = rng.gen_range(1..=10_000usize) as f64;
        let w = calibration_weights(alpha, eta).expect("valid alpha and eta");
        let rate = w.omega_pos * p / (w.omega_neg * eta as f64 * p + w.omega_pos * p);
        worst = worst.max((rate - alpha).abs());
    }
    worst
}

// ---------------------------------------------------------------------------
// Isotonic regression

#[derive(Debug, Clone)]
pub struct BinaryCase {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub weights: Vec<f64>,
}

/// Up to 12 samples on a coarse score lattice, so ties are common.
pub fn random_isotonic_case(rng: &mut ChaCha8Rng) -> BinaryCase {
    let n = rng.gen_range(1..=12);
    BinaryCase {
        scores: (0..n).map(|_| rng.gen_range(-4..=4) as f64 * 0.5).collect(),
        labels: (0..n).map(|_| rng.gen_bool(0.5)).collect(),
        weights: (0..n).map(|_| rng.gen_range(0.1..3.0)).collect(),
    }
}

/// Weighted least-squares fit of a non-decreasing step function whose values
/// lie on the grid `{0, 0.001, …, 1}`, by exhaustive dynamic programming over
/// the grid. Returns the fitted value of every sample.
pub fn grid_isotonic(case: &BinaryCase) -> Vec<f64> {
    const STEPS: usize = 1000;
    let grid: Vec<f64> = (0..=STEPS).map(|i| i as f64 / STEPS as f64).collect();
    let mut distinct: Vec<f64> = case.scores.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();

    // cost[g] = best cost of the groups so far with the last value at grid[g]
    let mut cost = vec![0.0; grid.len()];
    let mut choice: Vec<Vec<usize>> = Vec::with_capacity(distinct.len());
    for &s in &distinct {
        let members: Vec<usize> = (0..case.scores.len()).filter(|&i| case.scores[i] == s).collect();
        let mut best_prefix = f64::INFINITY;
        let mut best_arg = 0;
        let mut next = vec![0.0; grid.len()];
        let mut arg = vec![0; grid.len()];
        for (g, &v) in grid.iter().enumerate() {
            if cost[g] < best_prefix {
                best_prefix = cost[g];
                best_arg = g;
            }
            let own: f64 = members
                .iter()
                .map(|&i| {
                    let y = if case.labels[i] { 1.0 } else { 0.0 };
                    case.weights[i] * (v - y) * (v - y)
                })
                .sum();
            next[g] = best_prefix + own;
            arg[g] = best_arg;
        }
        cost = next;
        choice.push(arg);
    }

    let mut g = (0..grid.len()).min_by(|&a, &b| cost[a].total_cmp(&cost[b])).unwrap();
    let mut group_value = vec![0.0; distinct.len()];
    for idx in (0..distinct.len()).rev() {
        group_value[idx] = grid[g];
        g = choice[idx][g];
    }
    case.scores
        .iter()
        .map(|s| group_value[distinct.iter().position(|d| d == s).unwrap()])
        .collect()
}

/// Largest per-sample gap between the library fit and [`grid_isotonic`].
pub fn isotonic_oracle_max_gap(instances: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let case = random_isotonic_case(&mut rng);
        let fit = fit_isotonic(&case.scores, &case.labels, &case.weights).expect("isotonic fit");
        let oracle = grid_isotonic(&case);
        for (s, o) in case.scores.iter().zip(&oracle) {
            worst = worst.max((fit.calibrator.apply(*s) - o).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Platt scaling

/// Scores uniform on `[-3, 3]`, labels drawn from `σ(a·s + b)` for random
/// `(a, b)`, weights uniform on `[0.5, 2]`.
pub fn random_logistic_case(rng: &mut ChaCha8Rng, n: usize) -> BinaryCase {
    let a = rng.gen_range(0.5..3.0);
    let b = rng.gen_range(-1.5..1.5);
    let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let labels = scores.iter().map(|&s| rng.gen_bool(sigmoid(a * s + b))).collect();
    let weights = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    BinaryCase { scores, labels, weights }
}

fn platt_objective(case: &BinaryCase, targets: &[f64], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for ((&s, &t), &w) in case.scores.iter().zip(targets).zip(&case.weights) {
        let z = a * s + b;
        total -= w * (t * log_sigmoid(z) + (1.0 - t) * log_sigmoid(-z));
    }
    total
}

/// Minimises the smoothed-target weighted cross-entropy: grid search over
/// `[-10, 10]²` at spacing 0.25, then damped Newton from the best grid point.
pub fn platt_oracle(case: &BinaryCase) -> (f64, f64) {
    let w_pos: f64 = case.labels.iter().zip(&case.weights).filter(|(l, _)| **l).map(|(_, w)| w).sum();
    let w_neg: f64 = case.labels.iter().zip(&case.weights).filter(|(l, _)| !**l).map(|(_, w)| w).sum();
    let t_pos = (w_pos + 1.0) / (w_pos + 2.0);
    let t_neg = 1.0 / (w_neg + 2.0);
    let targets: Vec<f64> = case.labels.iter().map(|&l| if l { t_pos } else { t_neg }).collect();

    let mut best = (0.0, 0.0, f64::INFINITY);
    for i in 0..=80 {
        for j in 0..=80 {
            let (a, b) = (-10.0 + 0.25 * i as f64, -10.0 + 0.25 * j as f64);
            let f = platt_objective(case, &targets, a, b);
            if f < best.2 {
                best = (a, b, f);
            }
        }
    }
    let (mut a, mut b, mut f) = best;
    for _ in 0..200 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((&s, &t), &w) in case.scores.iter().zip(&targets).zip(&case.weights) {
            let q = sigmoid(a * s + b);
            ga += w * (q - t) * s;
            gb += w * (q - t);
            haa += w * q * (1.0 - q) * s * s;
            hab += w * q * (1.0 - q) * s;
            hbb += w * q * (1.0 - q);
        }
        if ga.hypot(gb) < 1e-11 {
            break;
        }
        let det = haa * hbb - hab * hab;
        let da = -(hbb * ga - hab * gb) / det;
        let db = -(haa * gb - hab * ga) / det;
        let mut step = 1.0;
        loop {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = platt_objective(case, &targets, na, nb);
            if nf <= f || step < 1e-10 {
                a = na;
                b = nb;
                f = nf;
                break;
            }
            step *= 0.5;
        }
    }
    (a, b)
}

/// Largest `max(|a − a*|, |b − b*|)` between the library fit and the oracle.
pub fn platt_oracle_max_gap(datasets: usize, n: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..datasets {
        let case = random_logistic_case(&mut rng, n);
        let fit = fit_platt(&case.scores, &case.labels, &case.weights).expect("platt fit");
        let (a, b) = platt_oracle(&case);
        worst = worst
            .max((fit.calibrator.a - a).abs())
            .max((fit.calibrator.b - b).abs());
    }
    worst
}

// ---------------------------------------------------------------------------
// Gradients

pub const FD_STEP: f64 = 1e-5;

/// Largest relative error between `score_gradient` and central differences
/// of `score_rows` over `points` random embeddings (`k = 5`).
pub fn scoring_gradient_max_error(kind: ModelKind, points: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let d = kind.row_width(5);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < points {
        let mut rows: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        if kind == (ModelKind::TransE { norm: NormOrder::L1 }) {
            // keep the residual away from the kinks of |·|
            let near_kink = (0..d).any(|i| (rows[0][i] + rows[1][i] - rows[2][i]).abs() < 1e-3);
            if near_kink {
                continue;
            }
        }
        checked += 1;
        let (mut gs, mut gp, mut go) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        score_gradient(kind, &rows[0], &rows[1], &rows[2], &mut gs, &mut gp, &mut go);
        let analytic: Vec<f64> = gs.into_iter().chain(gp).chain(go).collect();

        let mut numeric = Vec::with_capacity(3 * d);
        for r in 0..3 {
            for i in 0..d {
                let orig = rows[r][i];
                rows[r][i] = orig + FD_STEP;
                let up = score_rows(kind, &rows[0], &rows[1], &rows[2]);
                rows[r][i] = orig - FD_STEP;
                let down = score_rows(kind, &rows[0], &rows[1], &rows[2]);
                rows[r][i] = orig;
                numeric.push((up - down) / (2.0 * FD_STEP));
            }
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Batch loss written directly from the definitions. For the
/// self-adversarial loss the negative weights are passed in (`adv_p`), so
/// they stay fixed under perturbation.
pub fn reference_loss(
    kind: LossKind,
    pos: &[f64],
    neg: &[f64],
    margin: f64,
    adv_p: Option<&[f64]>,
) -> f64 {
    let eta = neg.len() / pos.len();
    let mut total = 0.0;
    for (i, &fp) in pos.iter().enumerate() {
        let negs = &neg[i * eta..(i + 1) * eta];
        total += match kind {
            LossKind::Pairwise => negs.iter().map(|fnn| (margin + fnn - fp).max(0.0)).sum::<f64>(),
            LossKind::Nll => -log_sigmoid(fp) - negs.iter().map(|&fnn| log_sigmoid(-fnn)).sum::<f64>(),
            LossKind::MulticlassNll => {
                let denom: f64 = fp.exp() + negs.iter().map(|f| f.exp()).sum::<f64>();
                -(fp.exp() / denom).ln()
            }
            LossKind::SelfAdversarial => {
                let p = &adv_p.expect("adversarial weights")[i * eta..(i + 1) * eta];
                -log_sigmoid(margin + fp) - negs.iter().zip(p).map(|(&fnn, &w)| w * log_sigmoid(-fnn - margin)).sum::<f64>()
            }
        };
    }
    total
}

/// `softmax(temperature · f⁻)` within each positive's group.
pub fn adversarial_weights(neg: &[f64], eta: usize, temperature: f64) -> Vec<f64> {
    neg.chunks(eta)
        .flat_map(|group| {
            let m = group.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = group.iter().map(|f| (temperature * (f - m)).exp()).collect();
            let z: f64 = e.iter().sum();
            e.into_iter().map(move |v| v / z)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LossCheck {
    /// Largest relative error of the gradient against central differences.
    pub gradient: f64,
    /// Largest `|value − reference|`.
    pub value: f64,
}

/// Checks `compute_loss` against [`reference_loss`] and central differences
/// at `points` random batches of 3 positives with 4 corruptions each.
pub fn loss_gradient_check(kind: LossKind, points: usize, seed: u64) -> LossCheck {
    const POS: usize = 3;
    const ETA: usize = 4;
    let mut rng = rng(seed);
    let mut check = LossCheck::default();
    let mut done = 0;
    while done < points {
        let mut pos: Vec<f64> = (0..POS).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut neg: Vec<f64> = (0..POS * ETA).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let margin = rng.gen_range(0.1..2.0);
        let temperature = rng.gen_range(0.1..2.0);
        if kind == LossKind::Pairwise {
            // keep every hinge away from its kink
            let near_kink = (0..POS * ETA).any(|j| (margin + neg[j] - pos[j / ETA]).abs() < 1e-3);
            if near_kink {
                continue;
            }
        }
        done += 1;
        let out = compute_loss(kind, &pos, &neg, margin, temperature).expect("loss");
        let p = adversarial_weights(&neg, ETA, temperature);
        let p = (kind == LossKind::SelfAdversarial).then_some(p.as_slice());
        check.value = check.value.max((out.value - reference_loss(kind, &pos, &neg, margin, p)).abs());

        let mut numeric = Vec::with_capacity(POS + POS * ETA);
        for i in 0..POS {
            let orig = pos[i];
            pos[i] = orig + FD_STEP;
            let up = reference_loss(kind, &pos, &neg, margin, p);
            pos[i] = orig - FD_STEP;
            let down = reference_loss(kind, &pos, &neg, margin, p);
            pos[i] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        for j in 0..POS * ETA {
            let orig = neg[j];
            neg[j] = orig + FD_STEP;
            let up = reference_loss(kind, &pos, &neg, margin, p);
            neg[j] = orig - FD_STEP;
            let down = reference_loss(kind, &pos, &neg, margin, p);
            neg[j] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        let analytic: Vec<f64> = out.grad_pos.iter().chain(&out.grad_neg).copied().collect();
        check.gradient = check.gradient.max(relative_error(&analytic, &numeric));
    }
    check
}

// ---------------------------------------------------------------------------
// Ranking

#[derive(Debug, Clone)]
pub struct RankingCase {
    pub model: EmbeddingModel,
    pub known: Vec<Triple>,
    pub test: Vec<Triple>,
}

/// Random model over 30 entities and 5 relations with 120 known triples, 25
/// of which are ranked. `quantized` draws embedding entries from
/// `{-1, 0, 1}` so that many scores tie exactly.
pub fn random_ranking_case(kind: ModelKind, quantized: bool, seed: u64) -> RankingCase {
    const E: usize = 30;
    const R: usize = 5;
    const K: usize = 4;
    let mut rng = rng(seed);
    let d = kind.row_width(K);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if quantized {
                    rng.gen_range(-1..=1) as f64
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect()
    };
    let entity = draw(E * d);
    let relation = draw(R * d);
    let model = EmbeddingModel::from_parts(kind, K, E, R, seed, entity, relation).unwrap();
    let mut known = HashSet::new();
    while known.len() < 120 {
        known.insert(Triple::new(rng.gen_range(0..E), rng.gen_range(0..R), rng.gen_range(0..E)));
    }
    let mut known: Vec<Triple> = known.into_iter().collect();
    known.sort_by_key(|t| (t.subject, t.predicate, t.object));
    let test = known.iter().step_by(5).copied().take(25).collect();
    RankingCase { model, known, test }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteReport {
    pub mr: f64,
    pub mrr: f64,
    pub hits: Vec<(usize, f64)>,
}

/// Ranks each side by sorting every candidate (the true triple included) by
/// descending score, placing the true triple after anything it ties with.
pub fn brute_force_ranks(case: &RankingCase, filtered: bool, hits_at: &[usize]) -> BruteReport {
    let known: HashSet<Triple> = case.known.iter().copied().collect();
    let mut ranks = Vec::new();
    for t in &case.test {
        for side in 0..2 {
            let mut candidates: Vec<(f64, bool)> = Vec::new();
            for e in 0..case.model.num_entities() {
                let c = if side == 0 {
                    Triple::new(e, t.predicate, t.object)
                } else {
                    Triple::new(t.subject, t.predicate, e)
                };
                let is_target = c == *t;
                if filtered && !is_target && known.contains(&c) {
                    continue;
                }
                candidates.push((case.model.score_unchecked(&c), is_target));
            }
            // IEEE comparison, so -0.0 and 0.0 tie
            candidates.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
            ranks.push(candidates.iter().position(|c| c.1).unwrap() + 1);
        }
    }
    let n = ranks.len() as f64;
    BruteReport {
        mr: ranks.iter().map(|&r| r as f64).sum::<f64>() / n,
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        hits: hits_at
            .iter()
            .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
            .collect(),
    }
}

/// Compares `ranked_eval` with [`brute_force_ranks`] on `cases` random
/// graphs per model kind, raw and filtered, continuous and tied embeddings.
/// Returns a description of every mismatch.
pub fn ranking_oracle_mismatches(cases: usize, seed: u64) -> Vec<String> {
    let hits_at = [1, 3, 10];
    let mut mismatches = Vec::new();
    for kind in ALL_MODELS {
        for c in 0..cases {
            for quantized in [false, true] {
                let case = random_ranking_case(kind, quantized, seed.wrapping_add(c as u64));
                let filter = FilterIndex::from_triples(case.known.iter().copied());
                for filtered in [false, true] {
                    let report = ranked_eval(
                        &case.model,
                        &case.test,
                        filtered.then_some(&filter),
                        &hits_at,
                        TiePolicy::Pessimistic,
                    )
                    .unwrap();
                    let got = BruteReport {
                        mr: report.mr,
                        mrr: report.mrr,
                        hits: report.hits.into_iter().collect(),
                    };
                    let want = brute_force_ranks(&case, filtered, &hits_at);
                    if got != want {
                        mismatches.push(format!(
                            "{kind} case {c} quantized={quantized} filtered={filtered}: {got:?} != {want:?}"
                        ));
                    }
                }
            }
        }
    }
    mismatches
}

// ---------------------------------------------------------------------------
// Planted cliques

/// Filtered Hits@1 of a DistMult model trained on four disjoint 8-entity
/// cliques (every ordered pair inside a clique is true, self-pairs
/// included), evaluated on 24 held-out clique triples.
pub fn planted_clique_hits_at_1(seed: u64) -> f64 {
    const CLIQUES: usize = 4;
    const SIZE: usize = 8;
    let mut all = Vec::new();
    for c in 0..CLIQUES {
        for i in 0..SIZE {
            for j in 0..SIZE {
                all.push(Triple::new(c * SIZE + i, 0, c * SIZE + j));
            }
        }
    }
    let mut rng = rng(seed);
    let mut held_out = HashSet::new();
    while held_out.len() < 24 {
        held_out.insert(rng.gen_range(0..all.len()));
    }
    let test: Vec<Triple> = all.iter().enumerate().filter(|(i, _)| held_out.contains(i)).map(|(_, t)| *t).collect();
    let train_triples: Vec<Triple> = all.iter().enumerate().filter(|(i, _)| !held_out.contains(i)).map(|(_, t)| *t).collect();

    let entities = Dictionary::from_labels((0..CLIQUES * SIZE).map(|i| format!("e{i}"))).unwrap();
    let relations = Dictionary::from_labels(["linked"]).unwrap();
    let graph = KnowledgeGraph::new(entities, relations, train_triples).unwrap();
    let config = TrainConfig {
        k: 16,
        eta: 8,
        epochs: 200,
        learning_rate: 0.05,
        batch_size: 64,
        seed,
        ..TrainConfig::default()
    };
    let outcome = train(&graph, ModelKind::DistMult, &config, |_| {}).unwrap();
    let filter = FilterIndex::from_triples(all.iter().copied());
    let report = ranked_eval(&outcome.model, &test, Some(&filter), &[1], TiePolicy::Pessimistic).unwrap();
    report.hits[&1]
}
