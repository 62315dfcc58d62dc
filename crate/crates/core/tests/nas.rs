use std::collections::BTreeSet;

use fringeforge::autodiff::grad_check_params;
use fringeforge::nas::{
    binary_loss, materialize, mixge, prune, search, sparsity_loss, synthesized_loss, viable_sigma, Architecture,
    LossConfig, SearchSchedule,
};
use fringeforge::harness::{make_dataset, DatasetSpec};
use fringeforge::supernet::{candidate_edges, super_net, BnMode, Edge, Network, Node, SuperNetConfig};
use fringeforge::{Error, ParamStore, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn([1, 1, h, w], |_, _, _, _| rng.random_range(0.0..1.0))
}

fn toy_cfg(levels: usize, size: usize) -> SuperNetConfig {
    let mut c = SuperNetConfig::desk(levels, size);
    c.encoder_depths = (1..=levels).map(|l| 2 * l).collect();
    c.depth_slope = 2;
    c
}

fn scalar(tape: &Tape, v: Var) -> f64 {
    tape.value(v).item().unwrap()
}

fn weight_vars(tape: &mut Tape, ws: &[f64]) -> Vec<Var> {
    ws.iter().map(|&w| tape.leaf(Tensor::scalar(w))).collect()
}

// ---- losses ----

fn mixge_oracle(p: &Tensor, g: &Tensor, lambda: f64) -> f64 {
    let [_, _, h, w] = p.shape();
    let at = |t: &Tensor, r: usize, c: usize| t.at(0, 0, r, c);
    let mut base = 0.0;
    for r in 0..h {
        for c in 0..w {
            base += (at(p, r, c) - at(g, r, c)).powi(2);
        }
    }
    let mut gx = 0.0;
    for r in 0..h {
        for c in 0..w - 1 {
            let d = (at(p, r, c + 1) - at(p, r, c)) - (at(g, r, c + 1) - at(g, r, c));
            gx += d * d;
        }
    }
    let mut gy = 0.0;
    for r in 0..h - 1 {
        for c in 0..w {
            let d = (at(p, r + 1, c) - at(p, r, c)) - (at(g, r + 1, c) - at(g, r, c));
            gy += d * d;
        }
    }
    base / (h * w) as f64 + lambda * (gx / (h * (w - 1)) as f64 + gy / ((h - 1) * w) as f64)
}

fn mixge_of(p: &Tensor, g: &Tensor, lambda: f64) -> f64 {
    let mut tape = Tape::new();
    let (a, b) = (tape.leaf(p.clone()), tape.leaf(g.clone()));
    let m = mixge(&mut tape, a, b, lambda).unwrap();
    scalar(&tape, m)
}

#[test]
fn mixge_zero_on_match_and_offset_only_hits_mse() {
    let g = random_image(8, 8, 1);
    assert_eq!(mixge_of(&g, &g, 1.0), 0.0);
    let shifted = g.map(|v| v + 0.25);
    for lambda in [0.0, 1.0, 3.7] {
        assert!((mixge_of(&shifted, &g, lambda) - 0.0625).abs() < 1e-12);
    }
}

#[test]
fn mixge_matches_elementwise_oracle() {
    for seed in 0..10 {
        let p = random_image(8, 8, 100 + seed);
        let g = random_image(8, 8, 200 + seed);
        let got = mixge_of(&p, &g, 1.0);
        let want = mixge_oracle(&p, &g, 1.0);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn mixge_shape_mismatch_errors() {
    let mut tape = Tape::new();
    let a = tape.leaf(random_image(8, 8, 1));
    let b = tape.leaf(random_image(8, 4, 2));
    assert!(mixge(&mut tape, a, b, 1.0).is_err());
}

fn binary_of(ws: &[f64], eps: f64) -> f64 {
    let mut tape = Tape::new();
    let vars = weight_vars(&mut tape, ws);
    let b = binary_loss(&mut tape, &vars, eps).unwrap();
    scalar(&tape, b)
}

fn sparsity_of(ws: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let vars = weight_vars(&mut tape, ws);
    let s = sparsity_loss(&mut tape, &vars).unwrap();
    scalar(&tape, s)
}

#[test]
fn binary_loss_examples() {
    assert!((binary_of(&[0.5; 7], 1e-7) - std::f64::consts::LN_2).abs() < 1e-12);
    assert!(binary_of(&[1e-7, 1.0 - 1e-7, 0.0, 1.0], 1e-7) < 2e-6);
}

/// One descent step on the binary loss alone, gradient by central differences.
fn descent_step(w: f64) -> f64 {
    let h = 1e-6;
    let g = (binary_of(&[w + h], 1e-7) - binary_of(&[w - h], 1e-7)) / (2.0 * h);
    w - 0.01 * g
}

#[test]
fn binary_descent_moves_away_from_half() {
    assert!(descent_step(0.7) > 0.7);
    assert!(descent_step(0.3) < 0.3);
}

#[test]
fn sparsity_loss_examples() {
    assert_eq!(sparsity_of(&[1.0; 5]), 1.0);
    assert_eq!(sparsity_of(&[0.0; 5]), 0.0);
    assert!((sparsity_of(&[0.2, 0.8]) - 0.5).abs() < 1e-15);
}

#[test]
fn synthesized_loss_reduces_to_mixge_without_regularizers() {
    let p = random_image(8, 8, 3);
    let g = random_image(8, 8, 4);
    let cfg = LossConfig {
        alpha: 0.0,
        beta: 0.0,
        ..LossConfig::default()
    };
    let mut tape = Tape::new();
    let (a, b) = (tape.leaf(p.clone()), tape.leaf(g.clone()));
    let ws = weight_vars(&mut tape, &[0.3, 0.9, 0.5]);
    let t = synthesized_loss(&mut tape, a, b, &ws, &cfg).unwrap();
    assert_eq!(scalar(&tape, t.total).to_bits(), mixge_of(&p, &g, 1.0).to_bits());
}

#[test]
fn synthesized_loss_with_perfect_prediction_is_sparsity_only() {
    let g = random_image(8, 8, 5);
    let cfg = LossConfig::default();
    let ws = [1e-7, 1.0 - 1e-7, 1.0 - 1e-7, 1e-7];
    let mut tape = Tape::new();
    let (a, b) = (tape.leaf(g.clone()), tape.leaf(g.clone()));
    let vars = weight_vars(&mut tape, &ws);
    let t = synthesized_loss(&mut tape, a, b, &vars, &cfg).unwrap();
    let want = cfg.beta * 0.5;
    assert!((scalar(&tape, t.total) - want).abs() < 1e-8);
}

#[test]
fn loss_config_validation() {
    assert!(LossConfig::default().validate().is_ok());
    for bad in [
        LossConfig { alpha: -1.0, ..LossConfig::default() },
        LossConfig { beta: -1e-9, ..LossConfig::default() },
        LossConfig { clamp_eps: 0.0, ..LossConfig::default() },
        LossConfig { clamp_eps: 0.5, ..LossConfig::default() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}

fn synthesized_on(net: &Network, store: &ParamStore, tape: &mut Tape, img: &Tensor, gt: &Tensor) -> fringeforge::Result<Var> {
    let mut probe = net.clone();
    *probe.params_mut() = store.clone();
    let x = tape.leaf(img.clone());
    let f = probe.forward(tape, x, BnMode::Batch)?;
    let g = tape.leaf(gt.clone());
    let cfg = LossConfig {
        alpha: 0.3,
        beta: 0.2,
        ..LossConfig::default()
    };
    Ok(synthesized_loss(tape, f.output, g, &f.weights, &cfg)?.total)
}

#[test]
fn synthesized_loss_theta_gradients_match_finite_differences() {
    let mut net = super_net(toy_cfg(3, 32), 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for e in net.edges().to_vec() {
        net.set_theta(e, rng.random_range(-1.5..1.5)).unwrap();
    }
    let img = random_image(32, 32, 23);
    let gt = random_image(32, 32, 24).map(|v| 0.2 + 0.5 * v);
    let thetas = net.theta_ids();
    let mut store = net.params().clone();
    let report = grad_check_params(&mut store, &thetas, 1e-5, 1e-4, 1, |s, t| synthesized_on(&net, s, t, &img, &gt))
        .unwrap();
    assert_eq!(report.checked, thetas.len());
    assert!(report.passed, "{report:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_loss_peaks_at_half(w in 0.0f64..1.0) {
        prop_assert!(binary_of(&[w], 1e-7) <= binary_of(&[0.5], 1e-7) + 1e-15);
    }

    #[test]
    fn binary_descent_polarizes(w in 0.01f64..0.99) {
        prop_assume!((w - 0.5).abs() > 1e-3);
        let next = descent_step(w);
        prop_assert!((next - 0.5).abs() > (w - 0.5).abs());
    }

    #[test]
    fn sparsity_is_monotone(ws in prop::collection::vec(0.0f64..1.0, 1..12), i in 0usize..12, cut in 1e-3f64..0.5) {
        let i = i % ws.len();
        let mut lower = ws.clone();
        lower[i] -= cut;
        prop_assert!(sparsity_of(&lower) < sparsity_of(&ws));
    }
}

// ---- pruning ----

/// Stages reachable from encoder or ground features that also reach D1;
/// edges survive when both endpoints do.
fn prune_oracle(weights: &[(Edge, f64)], levels: usize, sigma: f64) -> Option<BTreeSet<Edge>> {
    let kept: Vec<Edge> = weights.iter().filter(|(_, w)| *w >= sigma).map(|(e, _)| *e).collect();
    let mut fed = vec![false; levels + 1];
    for l in (1..=levels).rev() {
        fed[l] = kept.iter().any(|e| {
            e.dst == l
                && match e.src {
                    Node::D(j) => fed[j],
                    _ => true,
                }
        });
    }
    let mut reaches_head = vec![false; levels + 1];
    reaches_head[1] = fed[1];
    for l in 2..=levels {
        reaches_head[l] = kept.iter().any(|e| e.src == Node::D(l) && reaches_head[e.dst]);
    }
    let live = |l: usize| fed[l] && reaches_head[l];
    if !live(1) {
        return None;
    }
    Some(
        kept.into_iter()
            .filter(|e| {
                live(e.dst)
                    && match e.src {
                        Node::D(j) => live(j),
                        _ => true,
                    }
            })
            .collect(),
    )
}

fn random_weights(levels: usize, rng: &mut ChaCha8Rng) -> Vec<(Edge, f64)> {
    let bias: f64 = rng.random_range(0.2..0.8);
    candidate_edges(levels)
        .into_iter()
        .map(|e| (e, if rng.random_bool(bias) { rng.random_range(0.5..1.0) } else { rng.random_range(0.0..0.5) }))
        .collect()
}

#[test]
fn prune_matches_reachability_oracle_and_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut collapsed, mut partial) = (0, 0);
    for _ in 0..200 {
        let levels = rng.random_range(2..=6);
        let w = random_weights(levels, &mut rng);
        match (prune(&w, levels, 0.5), prune_oracle(&w, levels, 0.5)) {
            (Err(Error::ArchitectureCollapsed), None) => collapsed += 1,
            (Ok(arch), Some(want)) => {
                let got: BTreeSet<Edge> = arch.edges().iter().copied().collect();
                assert_eq!(got, want);
                let stages: BTreeSet<usize> = want.iter().map(|e| e.dst).collect();
                assert_eq!(arch.stages(), stages.into_iter().collect::<Vec<_>>().as_slice());
                if got.len() < w.len() {
                    partial += 1;
                }
                let again: Vec<(Edge, f64)> =
                    candidate_edges(levels).into_iter().map(|e| (e, if got.contains(&e) { 1.0 } else { 0.0 })).collect();
                assert_eq!(prune(&again, levels, 0.5).unwrap().edges(), arch.edges());
            }
            (got, want) => panic!("prune {got:?} vs oracle {want:?}"),
        }
    }
    assert!(collapsed > 0 && partial > 20, "weak coverage: {collapsed} collapsed, {partial} partial");
}

#[test]
fn prune_degenerate_cases() {
    let all_high: Vec<(Edge, f64)> = candidate_edges(8).into_iter().map(|e| (e, 0.9)).collect();
    let arch = prune(&all_high, 8, 0.5).unwrap();
    assert_eq!(arch.edges().len(), 100);
    assert_eq!(arch.stages(), (1..=8).collect::<Vec<_>>().as_slice());
    let all_low: Vec<(Edge, f64)> = candidate_edges(8).into_iter().map(|e| (e, 0.1)).collect();
    assert!(matches!(prune(&all_low, 8, 0.5), Err(Error::ArchitectureCollapsed)));
    assert!(prune(&all_high, 8, 1.0).is_err());
    assert!(prune(&all_high, 8, 0.0).is_err());
}

#[test]
fn prune_cascades_dead_stage() {
    // D2 loses its only input, so D2 -> D1 goes with it.
    let e = |s: &str, d: usize| Edge::new(s.parse().unwrap(), d);
    let strong = [e("E1", 1), e("D2", 1), e("E3", 3), e("D3", 1)];
    let w: Vec<(Edge, f64)> = candidate_edges(3)
        .into_iter()
        .map(|x| (x, if strong.contains(&x) { 0.9 } else { 0.1 }))
        .collect();
    let arch = prune(&w, 3, 0.5).unwrap();
    let want: BTreeSet<Edge> = [e("E1", 1), e("D3", 1), e("E3", 3)].into_iter().collect();
    assert_eq!(arch.edges().iter().copied().collect::<BTreeSet<_>>(), want);
    assert_eq!(arch.stages(), &[1, 3]);
    assert_eq!(prune_oracle(&w, 3, 0.5).unwrap(), want);
}

#[test]
fn viable_sigma_is_the_collapse_boundary() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let levels = rng.random_range(2..=5);
        let w = random_weights(levels, &mut rng);
        let s = viable_sigma(&w, levels).unwrap();
        if s > 0.0 && s < 1.0 {
            assert!(prune(&w, levels, s).is_ok());
        }
        if s + 1e-9 < 1.0 {
            assert!(matches!(prune(&w, levels, s + 1e-9), Err(Error::ArchitectureCollapsed)));
        }
    }
}

// ---- architecture text ----

#[test]
fn architecture_round_trip() {
    let mut full = Architecture::full(8);
    full.sigma = Some(0.5);
    full.source = Some("epoch 12".into());
    let back = Architecture::import(&full.export()).unwrap();
    assert_eq!(back, full);
    assert_eq!(back.edges().len(), 100);
}

#[test]
fn architecture_import_errors() {
    assert!(matches!(Architecture::import(""), Err(Error::ArchitectureCollapsed)));
    assert!(matches!(Architecture::import("edge D1 D2\n"), Err(Error::Acyclicity(_))));
    match Architecture::import("edge E1 D1\nedge E1\n") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    assert!(matches!(Architecture::import("edge E1 D1\nedge X9 D1\n"), Err(Error::Parse { line: 2, .. })));
    assert!(matches!(Architecture::import("bogus\n"), Err(Error::Parse { line: 1, .. })));
    // D2 has an input but nothing consumes it.
    assert!(Architecture::import("edge E1 D1\nedge E2 D2\n").is_err());
}

#[test]
fn levels_default_to_deepest_index() {
    let a = Architecture::import("edge E3 D1\n").unwrap();
    assert_eq!(a.levels(), 3);
    let b = Architecture::import("levels 5\nedge E3 D1\n").unwrap();
    assert_eq!(b.levels(), 5);
}

// ---- materialization ----

#[test]
fn materialize_full_architecture_runs() {
    let cfg = toy_cfg(3, 32);
    let net = materialize(&Architecture::full(3), &cfg, 3).unwrap();
    let out = net.predict(&random_image(32, 32, 4), BnMode::Batch).unwrap();
    assert_eq!(out.shape(), [1, 1, 32, 32]);
    assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn materialize_rejects_level_mismatch() {
    assert!(materialize(&Architecture::full(2), &toy_cfg(3, 32), 1).is_err());
}

#[test]
fn single_chain_gradients_match_finite_differences() {
    let cfg = toy_cfg(2, 16);
    let arch = Architecture::import("levels 2\nedge E1 D1\n").unwrap();
    let net = materialize(&arch, &cfg, 5).unwrap();
    let img = random_image(16, 16, 6);
    let gt = random_image(16, 16, 7).map(|v| 0.3 + 0.4 * v);
    let ids: Vec<_> = net.params().iter().map(|(id, _)| id).collect();
    let mut store = net.params().clone();
    let report = grad_check_params(&mut store, &ids, 1e-5, 1e-4, 3, |s, t| {
        let mut probe = net.clone();
        *probe.params_mut() = s.clone();
        let x = t.leaf(img.clone());
        let f = probe.forward(t, x, BnMode::Batch)?;
        let g = t.leaf(gt.clone());
        mixge(t, f.output, g, 1.0)
    })
    .unwrap();
    assert!(report.checked > 50);
    assert!(report.passed, "{report:?}");
}

#[test]
fn pruning_shrinks_parameter_count() {
    let cfg = toy_cfg(4, 64);
    let full = materialize(&Architecture::full(4), &cfg, 1).unwrap().parameter_count();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    while checked < 10 {
        let w = random_weights(4, &mut rng);
        let Ok(arch) = prune(&w, 4, 0.5) else { continue };
        if arch.edges().len() == candidate_edges(4).len() {
            continue;
        }
        assert!(materialize(&arch, &cfg, 1).unwrap().parameter_count() < full);
        checked += 1;
    }
}

// ---- search ----

fn tiny_data() -> fringeforge::harness::Dataset {
    let mut spec = DatasetSpec::desk(3);
    spec.n = 6;
    spec.split = [4.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
    make_dataset(&spec).unwrap()
}

#[test]
fn search_with_no_epochs_returns_initial_network() {
    let cfg = toy_cfg(2, 64);
    let out = search(&cfg, &tiny_data(), &SearchSchedule::new(0, 0, 0.008), &LossConfig::default(), 4).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.best_epoch, 0);
    assert_eq!(out.best.params(), super_net(cfg, 4).unwrap().params());
}

#[test]
fn search_is_deterministic_and_phase_one_keeps_weights_at_half() {
    let cfg = toy_cfg(2, 64);
    let data = tiny_data();
    let sched = SearchSchedule::new(2, 2, 0.008);
    let a = search(&cfg, &data, &sched, &LossConfig::default(), 4).unwrap();
    let b = search(&cfg, &data, &sched, &LossConfig::default(), 4).unwrap();
    let bits = |o: &fringeforge::nas::SearchOutcome| -> Vec<u64> {
        o.history.iter().flat_map(|r| [r.mixge.to_bits(), r.total.to_bits(), r.val_psnr.to_bits()]).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.best.params(), b.best.params());
    assert_eq!(a.history.iter().map(|r| r.phase).collect::<Vec<_>>(), [1, 1, 2, 2]);
    for ws in &a.weight_history[..2] {
        assert!(ws.iter().all(|(_, w)| *w == 0.5));
    }
    assert!(a.weight_history[3].iter().any(|(_, w)| *w != 0.5));
    assert!(a.best_epoch > 2);
}

#[test]
fn search_rejects_bad_schedule() {
    let cfg = toy_cfg(2, 64);
    assert!(search(&cfg, &tiny_data(), &SearchSchedule::new(1, 1, 0.0), &LossConfig::default(), 1).is_err());
}
