use std::collections::BTreeSet;

use fringeforge::autodiff::grad_check_params;
use fringeforge::supernet::{
    candidate_edges, count_candidate_connections, super_net, BnMode, Checkpoint, Edge, ForwardPass, Fusion, Network,
    Node, SuperNetConfig, CHECKPOINT_VERSION,
};
use fringeforge::{Error, ParamStore, Tape, Tensor, Var};
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

/// Every ordered (source, target) pair over all feature names, filtered by
/// the rules stated directly: encoder and ground feed any stage, decoder
/// stages feed strictly shallower ones.
fn brute_force_edges(levels: usize) -> BTreeSet<Edge> {
    let mut sources: Vec<Node> = (1..=levels).map(Node::E).collect();
    sources.push(Node::G);
    sources.extend((1..=levels).map(Node::D));
    let mut out = BTreeSet::new();
    for &s in &sources {
        for l in 1..=levels {
            let ok = match s {
                Node::E(_) | Node::G => true,
                Node::D(j) => j > l,
            };
            if ok {
                out.insert(Edge::new(s, l));
            }
        }
    }
    out
}

#[test]
fn candidate_count_closed_form() {
    assert_eq!(count_candidate_connections(8), 100);
    assert_eq!(count_candidate_connections(1), 2);
    assert_eq!(count_candidate_connections(3), 15);
    for l in 1..=8 {
        let edges: BTreeSet<Edge> = candidate_edges(l).into_iter().collect();
        assert_eq!(edges, brute_force_edges(l), "L={l}");
        assert_eq!(edges.len(), count_candidate_connections(l));
    }
}

#[test]
fn encoder_pyramid_shapes() {
    let net = super_net(toy_cfg(3, 64), 1).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(random_image(64, 64, 2));
    let mut pass = ForwardPass::new(&net, &mut tape, BnMode::Batch);
    let f = pass.encode(x).unwrap();
    let sizes: Vec<usize> = f.e.iter().map(|&v| pass.tape().shape(v)[2]).collect();
    assert_eq!(sizes, [32, 16, 8]);
    assert_eq!(pass.tape().shape(f.g), [1, 6, 3, 3]);
}

#[test]
fn encoder_rejects_indivisible_input() {
    let net = super_net(toy_cfg(3, 64), 1).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(random_image(60, 64, 2));
    assert!(net.forward(&mut tape, x, BnMode::Batch).is_err());
}

#[test]
fn zero_input_gives_zero_features() {
    let net = super_net(toy_cfg(3, 32), 1).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros([1, 1, 32, 32]));
    let mut pass = ForwardPass::new(&net, &mut tape, BnMode::Batch);
    let f = pass.encode(x).unwrap();
    for v in f.e.iter().chain([&f.g]) {
        assert_eq!(pass.tape().value(*v).max_abs(), 0.0);
    }
}

#[test]
fn forward_is_bit_deterministic() {
    let run = || {
        let net = super_net(toy_cfg(3, 32), 9).unwrap();
        net.predict(&random_image(32, 32, 4), BnMode::Running).unwrap()
    };
    let (a, b) = (run(), run());
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

fn decode_down_to(pass: &mut ForwardPass, net: &Network, image: Var, stop: usize) -> fringeforge::supernet::StageFeatures {
    let mut f = pass.encode(image).unwrap();
    for l in (stop..=net.config().levels).rev() {
        if !net.stages().contains(&l) {
            continue;
        }
        let t = pass.fuse(l, &f).unwrap();
        f.d[l - 1] = Some(pass.decode_stage(l, t).unwrap());
    }
    f
}

#[test]
fn zero_weights_kill_fusion() {
    let mut net = super_net(toy_cfg(3, 32), 3).unwrap();
    for e in net.edges().to_vec() {
        net.set_theta(e, -40.0).unwrap();
    }
    let mut tape = Tape::new();
    let x = tape.leaf(random_image(32, 32, 5));
    let mut pass = ForwardPass::new(&net, &mut tape, BnMode::Batch);
    let f = decode_down_to(&mut pass, &net, x, 2);
    let t = pass.fuse(1, &f).unwrap();
    assert!(pass.tape().value(t).max_abs() < 1e-12);
}

#[test]
fn single_open_edge_equals_its_branch() {
    let cfg = toy_cfg(3, 32);
    let mut full = super_net(cfg.clone(), 3).unwrap();
    let open = Edge::new(Node::E(2), 1);
    for e in full.edges().to_vec() {
        full.set_theta(e, if e == open { 40.0 } else { -40.0 }).unwrap();
    }
    let mut single = Network::new(cfg, Fusion::Weighted, &[open], 0).unwrap();
    copy_by_name(full.params(), single.params_mut());

    let img = random_image(32, 32, 6);
    let mut t1 = Tape::new();
    let x1 = t1.leaf(img.clone());
    let mut p1 = ForwardPass::new(&full, &mut t1, BnMode::Batch);
    let f1 = decode_down_to(&mut p1, &full, x1, 2);
    let a = p1.fuse(1, &f1).unwrap();
    let a = p1.tape().value(a).clone();

    let mut t2 = Tape::new();
    let x2 = t2.leaf(img);
    let mut p2 = ForwardPass::new(&single, &mut t2, BnMode::Batch);
    let f2 = p2.encode(x2).unwrap();
    let b = p2.fuse(1, &f2).unwrap();
    let b = p2.tape().value(b).clone();
    let diff = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");
}

fn copy_by_name(from: &ParamStore, to: &mut ParamStore) {
    let names: Vec<_> = to.iter().map(|(id, p)| (id, p.name.clone())).collect();
    for (id, name) in names {
        let src = from.find(&name).unwrap_or_else(|| panic!("{name}"));
        to.set_value(id, from.value(src).clone()).unwrap();
    }
}

fn loss_on(net: &Network, store: &ParamStore, tape: &mut Tape, img: &Tensor, target: &Tensor) -> fringeforge::Result<Var> {
    let mut probe = net.clone();
    *probe.params_mut() = store.clone();
    let x = tape.leaf(img.clone());
    let f = probe.forward(tape, x, BnMode::Batch)?;
    let t = tape.leaf(target.clone());
    tape.mse(f.output, t)
}

#[test]
fn theta_gradients_match_finite_differences() {
    let mut net = super_net(toy_cfg(3, 32), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for e in net.edges().to_vec() {
        net.set_theta(e, rng.random_range(-1.0..1.0)).unwrap();
    }
    let img = random_image(32, 32, 13);
    let target = random_image(32, 32, 14).map(|v| 0.3 + 0.4 * v);
    let thetas = net.theta_ids();
    let mut store = net.params().clone();
    let report = grad_check_params(&mut store, &thetas, 1e-5, 1e-4, 1, |s, t| loss_on(&net, s, t, &img, &target))
        .unwrap();
    assert_eq!(report.checked, 15);
    assert!(report.passed, "{report:?}");
}

#[test]
fn decode_stage_contract() {
    let net = super_net(toy_cfg(3, 32), 1).unwrap();
    let mut tape = Tape::new();
    let zero = tape.leaf(Tensor::zeros([1, 4, 8, 8]));
    let mut pass = ForwardPass::new(&net, &mut tape, BnMode::Batch);
    let d = pass.decode_stage(2, zero).unwrap();
    assert_eq!(pass.tape().shape(d), [1, 4, 8, 8]);
    assert_eq!(pass.tape().value(d).max_abs(), 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = pass.tape().leaf(Tensor::from_fn([1, 4, 8, 8], |_, _, _, _| rng.random_range(-20.0..20.0)));
    let d = pass.decode_stage(2, t).unwrap();
    assert!(pass.tape().value(d).data().iter().all(|v| (0.0..=6.0).contains(v)));
}

fn head_with_bias(bias: f64) -> Tensor {
    let mut net = super_net(toy_cfg(2, 16), 1).unwrap();
    let w = net.params().find("head.conv.weight").unwrap();
    let b = net.params().find("head.conv.bias").unwrap();
    let shape = net.params().value(w).shape();
    net.params_mut().set_value(w, Tensor::zeros(shape)).unwrap();
    net.params_mut().set_value(b, Tensor::full([1, 1, 1, 1], bias)).unwrap();
    let mut tape = Tape::new();
    let d1 = tape.leaf(random_image(8, 8, 1).map(|v| v * 6.0));
    let d1 = {
        let data: Vec<f64> = (0..2).flat_map(|_| tape.value(d1).data().to_vec()).collect();
        tape.leaf(Tensor::new([1, 2, 8, 8], data).unwrap())
    };
    let mut pass = ForwardPass::new(&net, &mut tape, BnMode::Batch);
    let y = pass.regression_head(d1, 16, 16).unwrap();
    pass.tape().value(y).clone()
}

#[test]
fn regression_head_scaling() {
    let half = head_with_bias(3.0);
    assert_eq!(half.shape(), [1, 1, 16, 16]);
    assert!(half.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    assert!(head_with_bias(9.0).data().iter().all(|&v| v == 1.0));
    assert!(head_with_bias(-2.0).data().iter().all(|&v| v == 0.0));
}

#[test]
fn forward_output_contract() {
    let net = super_net(toy_cfg(3, 32), 21).unwrap();
    for seed in 0..5 {
        let y = net.predict(&random_image(32, 32, seed), BnMode::Running).unwrap();
        assert_eq!(y.shape(), [1, 1, 32, 32]);
        assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn gradient_reaches_every_theta_and_kernel() {
    let net = super_net(toy_cfg(4, 64), 5).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(random_image(64, 64, 1));
    let f = net.forward(&mut tape, x, BnMode::Batch).unwrap();
    let t = tape.leaf(random_image(64, 64, 2).map(|v| 0.2 + 0.6 * v));
    let loss = tape.mse(f.output, t).unwrap();
    let grads = tape.backward(loss).unwrap();
    let g: std::collections::HashMap<_, _> = grads.params().into_iter().collect();
    let nonzero = |id| g.get(&id).is_some_and(|t: &&Tensor| t.max_abs() > 0.0);
    let live = net.theta_ids().into_iter().filter(|&id| nonzero(id)).count();
    assert!(live * 100 >= 95 * net.edges().len(), "{live} of {}", net.edges().len());
    for (id, p) in net.params().iter() {
        if p.name.ends_with(".weight") {
            assert!(nonzero(id), "{} has no gradient", p.name);
        }
    }
}

#[test]
fn weighted_sum_of_weights_is_recorded_per_edge() {
    let net = super_net(toy_cfg(3, 32), 1).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(random_image(32, 32, 1));
    let f = net.forward(&mut tape, x, BnMode::Batch).unwrap();
    assert_eq!(f.weights.len(), 15);
    assert!(f.weights.iter().all(|&w| tape.value(w).data()[0] == 0.5));
    assert_eq!(net.connection_weights().len(), 15);
}

#[test]
fn running_mode_uses_updated_statistics() {
    let mut net = super_net(toy_cfg(2, 16), 1).unwrap();
    let img = random_image(16, 16, 3);
    let before = net.predict(&img, BnMode::Running).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(img.clone());
    let f = net.forward(&mut tape, x, BnMode::Batch).unwrap();
    assert_eq!(f.stats.len(), net.running_stats().len());
    net.update_running_stats(&f.stats);
    let after = net.predict(&img, BnMode::Running).unwrap();
    assert_ne!(before, after);
}

#[test]
fn plain_fusion_drops_weights_and_norms() {
    let cfg = toy_cfg(3, 32);
    let full = super_net(cfg.clone(), 1).unwrap();
    let plain_all = Network::new(cfg.clone(), Fusion::Plain, &candidate_edges(3), 1).unwrap();
    assert!(plain_all.theta_ids().is_empty());
    assert!(plain_all.parameter_count() < full.parameter_count());
    let mut pruned = candidate_edges(3);
    pruned.retain(|e| e.src != Node::G);
    let plain_pruned = Network::new(cfg, Fusion::Plain, &pruned, 1).unwrap();
    assert!(plain_pruned.parameter_count() < plain_all.parameter_count());
    let y = plain_pruned.predict(&random_image(32, 32, 1), BnMode::Running).unwrap();
    assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn network_rejects_bad_edge_sets() {
    let cfg = toy_cfg(3, 32);
    assert!(matches!(
        Network::new(cfg.clone(), Fusion::Plain, &[Edge::new(Node::E(1), 2)], 0),
        Err(Error::ArchitectureCollapsed)
    ));
    assert!(matches!(
        Network::new(cfg.clone(), Fusion::Plain, &[Edge::new(Node::D(1), 2)], 0),
        Err(Error::Acyclicity(_))
    ));
    assert!(Network::new(cfg.clone(), Fusion::Plain, &[Edge::new(Node::D(3), 1)], 0).is_err());
    let e = Edge::new(Node::E(1), 1);
    assert!(Network::new(cfg, Fusion::Plain, &[e, e], 0).is_err());
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut net = super_net(toy_cfg(3, 32), 7).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(random_image(32, 32, 1));
    let f = net.forward(&mut tape, x, BnMode::Batch).unwrap();
    net.update_running_stats(&f.stats);
    net.set_theta(Edge::new(Node::G, 2), 1.25).unwrap();
    let ck = Checkpoint::new(net.clone()).with_meta("epoch", 3).with_meta("note", "two words");
    let bytes = ck.to_bytes().unwrap();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.meta.get("note").map(String::as_str), Some("two words"));
    assert_eq!(back.network.params(), net.params());
    assert_eq!(back.network.running_stats(), net.running_stats());
    assert_eq!(back.network.edges(), net.edges());
    assert_eq!(back.to_bytes().unwrap(), bytes);
    let img = random_image(32, 32, 2);
    assert_eq!(back.network.predict(&img, BnMode::Running).unwrap(), net.predict(&img, BnMode::Running).unwrap());
}

#[test]
fn checkpoint_version_mismatch_names_both_versions() {
    let net = Network::new(toy_cfg(2, 16), Fusion::Plain, &[Edge::new(Node::E(1), 1)], 0).unwrap();
    let bytes = Checkpoint::new(net).to_bytes().unwrap();
    let text = String::from_utf8_lossy(&bytes).replacen(
        &format!("checkpoint {CHECKPOINT_VERSION}\n"),
        "checkpoint 7\n",
        1,
    );
    let err = Checkpoint::from_bytes(text.as_bytes()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("expected 1") && msg.contains("found 7"), "{msg}");
}

#[test]
fn checkpoint_rejects_truncation() {
    let net = Network::new(toy_cfg(2, 16), Fusion::Plain, &[Edge::new(Node::E(1), 1)], 0).unwrap();
    let bytes = Checkpoint::new(net).to_bytes().unwrap();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 9]).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..40]).is_err());
}
