use std::path::Path;

use fringeforge::classical::{
    default_window_radius, locate_carrier, render_interferogram, retrieve_timed, synth_phase_with_peak,
    AberrationSpec, FringeSpec, Grid, Interferogram, PhaseMap,
};
use fringeforge::harness::{
    denormalize_phase, evaluate, history_csv, make_dataset, measure_latency, summary_text, train, Dataset,
    DatasetSpec, Inference, LabelSource, Split, TrainConfig, PHASE_MAX,
};
use fringeforge::nas::{
    materialize, prune, search, search_history_csv, viable_sigma, weight_history_csv, Architecture, LossConfig,
    SearchSchedule,
};
use fringeforge::supernet::{candidate_edges, BnMode, Checkpoint, Fusion, SuperNetConfig};
use fringeforge::{Error, Tensor};

use crate::args::*;
use crate::fail::{AtPath, Fail};
use crate::store::{self, DatasetInfo};

type Res = Result<(), Fail>;

impl From<Bn> for BnMode {
    fn from(b: Bn) -> Self {
        match b {
            Bn::Batch => BnMode::Batch,
            Bn::Running => BnMode::Running,
        }
    }
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

fn usage(msg: impl Into<String>) -> Fail {
    Fail::Usage(msg.into())
}

fn check_size(size: usize) -> Res {
    if size < 2 || !size.is_power_of_two() {
        return Err(usage(format!("--size {size}: image side must be a power of two")));
    }
    Ok(())
}

pub fn run(cmd: Command) -> Res {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Classical(a) => classical(a),
        Command::Search(a) => search_cmd(a),
        Command::Prune(a) => prune_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Infer(a) => infer(a),
        Command::Bench(a) => bench(a),
    }
}

// ---- synth ----

/// Fringe styles are defined for 64 px frames; the carrier scales with size.
fn style(s: Style, size: usize, noise: f64) -> FringeSpec {
    let mut f = match s {
        Style::Desk => FringeSpec::desk_default(),
        Style::Alternate => FringeSpec::alternate_style(),
    };
    let k = size as f64 / 64.0;
    f.carrier_fx *= k;
    f.carrier_fy *= k;
    f.noise_sigma = noise;
    f
}

fn synth(a: SynthArgs) -> Res {
    check_size(a.size)?;
    let mut spec = DatasetSpec::desk(a.seed);
    spec.n = a.n;
    spec.size = a.size;
    spec.fringe = style(a.fringe, a.size, a.noise);
    spec.labels = match a.labels {
        Labels::Analytic => LabelSource::Analytic,
        Labels::Classical => LabelSource::Classical,
    };
    let data = make_dataset(&spec)?;
    let info = DatasetInfo {
        seed: a.seed,
        labels: spec.labels.name().into(),
        phase_max: data.phase_max,
        fringe: spec.fringe,
    };
    store::save_dataset(&a.out, &data, &info)?;
    print!(
        "{}",
        summary_text(&[
            ("pairs", data.pairs.len().to_string()),
            ("size", format!("{0}x{0}", data.size)),
            ("split", format!("{}/{}/{}", data.train.len(), data.val.len(), data.test.len())),
            ("labels", info.labels.clone()),
            ("carrier", format!("{},{}", spec.fringe.carrier_fx, spec.fringe.carrier_fy)),
            ("out", a.out.display().to_string()),
        ])
    );
    Ok(())
}

// ---- classical ----

fn parse_carrier(s: &str) -> Result<(f64, f64), Fail> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| {
        usage(format!("--carrier {s:?}: expected FX,FY"))
    })?;
    match v[..] {
        [fx, fy] => Ok((fx, fy)),
        _ => Err(usage(format!("--carrier {s:?}: expected FX,FY"))),
    }
}

fn load_interferogram(path: &Path) -> Result<Interferogram, Fail> {
    Ok(Interferogram {
        grid: Grid::from_tensor(&store::load_tensor(path)?).at(path)?,
    })
}

/// Synthetic scene: three blobs peaking at 10 rad under tilt and curvature.
fn synthetic_scene(size: usize, seed: u64, fringe: &FringeSpec) -> Result<(Interferogram, Interferogram, Grid), Fail> {
    let ab = AberrationSpec {
        tilt_x: 0.03,
        tilt_y: -0.02,
        quadratic: 2e-4,
    };
    let phi = synth_phase_with_peak(size, size, 3, 10.0, seed)?;
    let sample = render_interferogram(&phi, &ab, fringe, 0)?;
    let calib = render_interferogram(&PhaseMap::unwrapped(Grid::zeros(size, size)), &ab, fringe, 0)?;
    Ok((sample, calib, phi.grid))
}

/// PSNR in radians with the normalization range as peak.
fn psnr_rad(est: &Grid, truth: &Grid) -> f64 {
    let n = est.data.len() as f64;
    let mse = est.data.iter().zip(&truth.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    10.0 * (PHASE_MAX * PHASE_MAX / mse).log10()
}

fn classical(a: ClassicalArgs) -> Res {
    let mut fringe = FringeSpec {
        carrier_fx: 0.0,
        carrier_fy: 0.0,
        ..FringeSpec::desk_default()
    };
    let carrier = a.carrier.as_deref().map(parse_carrier).transpose()?;
    let (sample, calibration, truth) = match &a.input {
        None => {
            check_size(a.size)?;
            let (fx, fy) = carrier.unwrap_or(((a.size as f64 / 16.0).max(8.0), 0.0));
            fringe.carrier_fx = fx;
            fringe.carrier_fy = fy;
            fringe.validate(a.size, a.size)?;
            let (s, c, t) = synthetic_scene(a.size, a.seed, &fringe)?;
            (s, Some(c), Some(t))
        }
        Some(input) => {
            let s = load_interferogram(input)?;
            let c = a.calibration.as_deref().map(load_interferogram).transpose()?;
            let t = match &a.truth {
                Some(p) => Some(Grid::from_tensor(&store::load_tensor(p)?).at(p)?),
                None => None,
            };
            let (fx, fy) = match carrier {
                Some(c) => c,
                None => locate_carrier(&s, s.grid.h.min(s.grid.w) as f64 / 16.0)?,
            };
            fringe.carrier_fx = fx;
            fringe.carrier_fy = fy;
            (s, c, t)
        }
    };
    if a.compensate && calibration.is_none() {
        return Err(usage("--compensate needs a calibration interferogram (--calibration FILE)"));
    }
    let (h, w) = (sample.grid.h, sample.grid.w);
    let radius = a.radius.unwrap_or_else(|| default_window_radius(h, w, &fringe));
    let cal = if a.compensate { calibration.as_ref() } else { None };
    let r = retrieve_timed(&sample, cal, &fringe, radius, !a.no_unwrap)?;

    store::create_dir(&a.out)?;
    if a.input.is_none() {
        store::save_map(&a.out, "interferogram", &sample.grid, (0.0, 1.0), "intensity")?;
        if let Some(c) = &calibration {
            store::save_map(&a.out, "calibration", &c.grid, (0.0, 1.0), "intensity")?;
        }
        if let Some(t) = &truth {
            store::save_map(&a.out, "truth", t, (0.0, PHASE_MAX), "rad")?;
        }
    }
    let pi = std::f64::consts::PI;
    store::save_map(&a.out, "wrapped", &r.wrapped.grid, (-pi, pi), "rad")?;
    if let Some(u) = &r.unwrapped {
        store::save_map(&a.out, "unwrapped", &u.grid, store::data_range(&u.grid), "rad")?;
    }
    let mut summary = vec![
        ("carrier", format!("{},{}", fringe.carrier_fx, fringe.carrier_fy)),
        ("window_radius", format!("{radius}")),
        ("outputs", {
            let mut o = vec!["wrapped"];
            if r.unwrapped.is_some() {
                o.push("unwrapped");
            }
            if r.compensated.is_some() {
                o.push("compensated");
            }
            o.join(",")
        }),
    ];
    if let Some(c) = &r.compensated {
        store::save_map(&a.out, "compensated", &c.grid, store::data_range(&c.grid), "rad")?;
        if let Some(t) = &truth {
            if !t.same_shape(&c.grid) {
                return Err(usage("--truth shape differs from the interferogram"));
            }
            summary.push(("psnr_db", format!("{:.3}", psnr_rad(&c.grid.interior(8), &t.interior(8)).min(99.0))));
        }
    }
    let t = r.timings;
    println!(
        "timing: demodulate {:.3} ms, unwrap {:.3} ms, compensate {:.3} ms",
        t.demodulate_ms, t.unwrap_ms, t.compensate_ms
    );
    let text = summary_text(&summary);
    print!("{text}");
    store::write(&a.out.join("summary.txt"), text)
}

// ---- search and prune ----

fn polarized_fraction(weights: &[(fringeforge::supernet::Edge, f64)]) -> f64 {
    let near = weights.iter().filter(|(_, w)| w.min(1.0 - w) <= 0.1).count();
    near as f64 / weights.len().max(1) as f64
}

/// Rounds down to four decimals so the printed value is itself viable.
fn printable_sigma(s: f64) -> f64 {
    (s * 1e4).floor() / 1e4
}

fn search_cmd(a: SearchArgs) -> Res {
    let data = store::load_dataset(&a.data)?;
    let cfg = SuperNetConfig::desk(a.l_stages, data.size);
    cfg.validate()?;
    cfg.check_input(data.size, data.size)?;
    let mut sched = SearchSchedule::new(a.pretrain_epochs, a.epochs, a.lr);
    sched.eval_bn = a.bn.into();
    let loss = LossConfig {
        alpha: a.alpha,
        beta: a.beta,
        ..LossConfig::default()
    };
    if !(a.sigma > 0.0 && a.sigma < 1.0) {
        return Err(usage(format!("--sigma {} must lie in (0, 1)", a.sigma)));
    }
    let out = search(&cfg, &data, &sched, &loss, a.seed)?;
    for r in &out.history {
        println!(
            "epoch {:>3} phase {} mixge {:.6} total {:.6} binary {:.4} sparsity {:.4} val_psnr {:.3}",
            r.epoch, r.phase, r.mixge, r.total, r.binary, r.sparsity, r.val_psnr
        );
    }
    store::create_dir(&a.out)?;
    let ckpt_path = a.out.join("supernet.ckpt");
    Checkpoint::new(out.best.clone())
        .with_meta("kind", "supernet")
        .with_meta("seed", a.seed)
        .with_meta("best_epoch", out.best_epoch)
        .save(&ckpt_path)
        .at(&ckpt_path)?;
    store::write(&a.out.join("weights.csv"), weight_history_csv(&out.weight_history))?;
    store::write(&a.out.join("search_history.csv"), search_history_csv(&out.history))?;

    let weights = out.best.connection_weights();
    let viable = viable_sigma(&weights, cfg.levels)?;
    let best_psnr = out.history.get(out.best_epoch.wrapping_sub(1)).map_or(f64::NAN, |r| r.val_psnr);
    let mut summary = vec![
        ("best_epoch", out.best_epoch.to_string()),
        ("best_val_psnr", format!("{best_psnr}")),
        ("polarized_fraction", format!("{}", polarized_fraction(&weights))),
        ("candidate_edges", candidate_edges(cfg.levels).len().to_string()),
        ("sigma", format!("{}", a.sigma)),
        ("viable_sigma", format!("{}", printable_sigma(viable))),
    ];
    let result = prune(&weights, cfg.levels, a.sigma);
    match &result {
        Ok(arch) => {
            let mut arch = arch.clone();
            arch.source = Some(format!("supernet.ckpt epoch {}", out.best_epoch));
            store::write(&a.out.join("architecture.txt"), arch.export())?;
            summary.push(("kept_edges", arch.edges().len().to_string()));
            summary.push(("kept_stages", format!("{:?}", arch.stages())));
            summary.push(("status", "ok".into()));
        }
        Err(Error::ArchitectureCollapsed) => summary.push(("status", "collapsed".into())),
        Err(_) => {}
    }
    let text = summary_text(&summary);
    print!("{text}");
    store::write(&a.out.join("summary.txt"), text)?;
    match result {
        Ok(_) => Ok(()),
        Err(Error::ArchitectureCollapsed) => Err(usage(format!(
            "architecture collapsed at sigma {}; the largest viable sigma is {} (try `fringeforge prune --checkpoint {} --sigma {}`)",
            a.sigma,
            printable_sigma(viable),
            ckpt_path.display(),
            printable_sigma(viable)
        ))),
        Err(e) => Err(e.into()),
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Fail> {
    Checkpoint::load(path).at(path)
}

fn prune_cmd(a: PruneArgs) -> Res {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    if ckpt.network.fusion() != Fusion::Weighted {
        return Err(usage(format!("{}: not a super-network checkpoint", a.checkpoint.display())));
    }
    let levels = ckpt.network.config().levels;
    let mut arch = prune(&ckpt.network.connection_weights(), levels, a.sigma)?;
    let name = a.checkpoint.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    arch.source = Some(match ckpt.meta.get("best_epoch") {
        Some(e) => format!("{name} epoch {e}"),
        None => name,
    });
    store::write(&a.out, arch.export())?;
    println!("kept_edges: {}", arch.edges().len());
    println!("kept_stages: {:?}", arch.stages());
    Ok(())
}

// ---- train, eval, infer, bench ----

fn train_cmd(a: TrainArgs) -> Res {
    let data = store::load_dataset(&a.data)?;
    let arch = match &a.arch {
        Some(p) => Architecture::import(&store::read_text(p)?).at(p)?,
        None => {
            if a.l_stages < 2 {
                return Err(usage("--l-stages must be at least 2"));
            }
            Architecture::full(a.l_stages)
        }
    };
    let cfg = SuperNetConfig::desk(arch.levels(), data.size);
    cfg.check_input(data.size, data.size)?;
    if let Some(c) = a.crop {
        cfg.check_input(c, c)?;
    }
    let net = materialize(&arch, &cfg, a.seed)?;
    let tc = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        mixge_lambda: 1.0,
        seed: a.seed,
        eval_bn: a.bn.into(),
        crop: a.crop,
    };
    let out = train(net, &data, &tc)?;
    for r in &out.history {
        println!("epoch {:>3} train_loss {:.6} val_psnr {:.3}", r.epoch, r.train_loss, r.val_psnr);
    }
    store::create_dir(&a.out)?;
    let path = a.out.join("model.ckpt");
    Checkpoint::new(out.best.clone())
        .with_meta("kind", "nasprnet")
        .with_meta("seed", a.seed)
        .with_meta("best_epoch", out.best_epoch)
        .save(&path)
        .at(&path)?;
    store::write(&a.out.join("train_history.csv"), history_csv(&out.history))?;
    let best_psnr = out.history.get(out.best_epoch.wrapping_sub(1)).map_or(f64::NAN, |r| r.val_psnr);
    let text = summary_text(&[
        ("best_epoch", out.best_epoch.to_string()),
        ("best_val_psnr", format!("{best_psnr}")),
        ("edges", arch.edges().len().to_string()),
        ("stages", format!("{:?}", arch.stages())),
        ("parameters", out.best.parameter_count().to_string()),
    ]);
    print!("{text}");
    store::write(&a.out.join("summary.txt"), text)
}

fn split_name(s: SplitArg) -> &'static str {
    match s {
        SplitArg::Train => "train",
        SplitArg::Val => "val",
        SplitArg::Test => "test",
    }
}

fn eval(a: EvalArgs) -> Res {
    let data = store::load_dataset(&a.data)?;
    let net = load_checkpoint(&a.checkpoint)?.network;
    let model = Inference {
        net: &net,
        mode: a.bn.into(),
    };
    let m = evaluate(&model, &data, a.split.into(), 1.0)?;
    let n = data.split(a.split.into()).len();
    store::create_dir(&a.out)?;
    let csv = format!("split,n,psnr_db,mixge\n{},{n},{},{}\n", split_name(a.split), m.psnr_db, m.mixge);
    store::write(&a.out.join("metrics.csv"), csv)?;
    print!(
        "{}",
        summary_text(&[
            ("split", split_name(a.split).into()),
            ("n", n.to_string()),
            ("psnr_db", format!("{:.3}", m.psnr_db)),
            ("mixge", format!("{:.6}", m.mixge)),
        ])
    );
    Ok(())
}

fn infer(a: InferArgs) -> Res {
    let net = load_checkpoint(&a.checkpoint)?.network;
    let mut jobs: Vec<(String, Tensor)> = Vec::new();
    let mut phase_max = PHASE_MAX;
    match &a.data {
        Some(dir) => {
            let data: Dataset = store::load_dataset(dir)?;
            phase_max = data.phase_max;
            for &i in data.split(a.split.into()) {
                jobs.push((format!("phase_{i:04}"), data.pairs[i].input.clone()));
            }
        }
        None => {
            for p in &a.input {
                let stem = p.file_stem().map_or_else(|| "phase".into(), |s| s.to_string_lossy().into_owned());
                jobs.push((format!("{stem}_phase"), store::load_tensor(p)?));
            }
        }
    }
    if jobs.is_empty() {
        return Err(usage("nothing to infer: pass --input FILE or --data DIR"));
    }
    store::create_dir(&a.out)?;
    for (stem, x) in &jobs {
        let y = net.predict(x, a.bn.into())?;
        let phase = denormalize_phase(&y, phase_max)?;
        store::save_map(&a.out, stem, &phase.grid, (0.0, phase_max), "rad")?;
        println!("{}", a.out.join(format!("{stem}.pgm")).display());
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Res {
    let net = load_checkpoint(&a.checkpoint)?.network;
    let model = Inference {
        net: &net,
        mode: a.bn.into(),
    };
    let mut report = String::from("size,latency_ms\n");
    for &s in &a.size {
        check_size(s)?;
        let ms = measure_latency(&model, s, a.repeats)?;
        println!("{s}x{s}: {ms:.3} ms (median of {})", a.repeats);
        report += &format!("{s},{ms}\n");
    }
    store::create_dir(&a.out)?;
    store::write(&a.out.join("latency.csv"), report)
}
