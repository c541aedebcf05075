use std::path::PathBuf;

use serde_json::json;

use rnnattack::attack::{
    alignment_diagnostic, fixed_point_attack, run_attack, theorem2_probe, AttackConfig, AttackMethod, AttackResult,
    FixedPointMethod, OptimalConfig, OptimalInit,
};
use rnnattack::bounds::{gronwall_envelope, vanilla_certificate, Interval};
use rnnattack::dynamics::state_matrix;
use rnnattack::eval::evaluate;
use rnnattack::measure::coppel_envelopes;
use rnnattack::par::Execution;
use rnnattack::report::{render_plot_data, CsvTable};
use rnnattack::sweep::{sweep_experiment, targeted_matrix, SweepConfig};
use rnnattack::task::{gen_frequency_dataset, FrequencyTaskConfig};
use rnnattack::train::{train, TrainConfig, TrainMode};
use rnnattack::{weights, CellKind, Error, LyapunovMode, Result, SampledSignal, Vector};

use crate::output::OutDir;
use crate::{
    AttackArgs, AttackCmd, BoundsArgs, CertifyArgs, Cli, Command, FpMethodArg, KindArg, MethodArg, OptInitArg,
    ProbeArgs, ReadoutArg, ReportArgs, SignalArgs, SweepArgs, TrainArgs, TrainModeArg,
};

pub fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a, argv),
        Command::Attack(a) => cmd_attack(a, argv),
        Command::Certify(a) => cmd_certify(a, argv),
        Command::Bounds(a) => cmd_bounds(a, argv),
        Command::Sweep(a) => cmd_sweep(a, argv),
        Command::Probe(a) => cmd_probe(a, argv),
        Command::Report(a) => cmd_report(a, argv),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("configuration serialises")
}

fn method(m: MethodArg) -> AttackMethod {
    match m {
        MethodArg::Grad => AttackMethod::Grad,
        MethodArg::Fixed => AttackMethod::Fixed,
        MethodArg::Dynamic => AttackMethod::Dynamic,
        MethodArg::Optimal => AttackMethod::Optimal,
    }
}

fn cmd_train(a: TrainArgs, argv: Vec<String>) -> Result<()> {
    let mut cfg = TrainConfig { seed: a.common.seed, ..TrainConfig::default() };
    if let Some(k) = a.kind {
        cfg.kind = match k {
            KindArg::Vanilla => CellKind::Vanilla,
            KindArg::Gru => CellKind::Gru,
            KindArg::Lstm => CellKind::Lstm,
        };
    }
    macro_rules! set {
        ($($field:ident <- $opt:expr),* $(,)?) => { $(if let Some(v) = $opt { cfg.$field = v; })* };
    }
    set!(hidden <- a.hidden, epochs <- a.epochs, batch_size <- a.batch_size, learning_rate <- a.lr,
         lr_decay <- a.lr_decay, init_scale <- a.init_scale, restarts <- a.restarts, restart_epochs <- a.restart_epochs);
    if let Some(d) = a.delta {
        cfg.lifting.delta = d;
    }
    if let Some(s) = a.substeps {
        cfg.lifting.substeps = s;
    }
    if let Some(m) = a.mode {
        cfg.mode = match m {
            TrainModeArg::Lifted => TrainMode::Lifted,
            TrainModeArg::Discrete => TrainMode::Discrete,
        };
    }
    let train_cfg = FrequencyTaskConfig { seed: a.train_seed, ..FrequencyTaskConfig::default() };
    let test_cfg = FrequencyTaskConfig { seed: a.test_seed, ..FrequencyTaskConfig::default() };
    let train_data = gen_frequency_dataset(&train_cfg, a.train_size)?;
    let test_data = gen_frequency_dataset(&test_cfg, a.test_size)?;

    let mut out = OutDir::create(&a.common.out_dir)?;
    let outcome = train(&cfg, &train_data)?;
    let report = evaluate(&outcome.model, &test_data, Execution::Parallel)?;

    let p = out.path().join("weights.json");
    out.record("weights.json");
    weights::save(&outcome.model, &p)?;
    let mut loss = CsvTable::new(["epoch", "loss"]);
    for (i, l) in outcome.loss_curve.iter().enumerate() {
        loss.push([i as f64, *l]);
    }
    out.csv("loss.csv", &loss)?;
    out.json(
        "eval.json",
        &json!({ "accuracy": report.accuracy, "correct": report.correct(), "total": test_data.len(), "confusion": report.confusion }),
    )?;
    println!("test accuracy {:.2}% ({}/{})", 100.0 * report.accuracy, report.correct(), test_data.len());
    let config = json!({ "train": to_value(&cfg), "train_data": to_value(&train_cfg), "test_data": to_value(&test_cfg),
                         "train_size": a.train_size, "test_size": a.test_size });
    out.finish("train", argv, config, a.common.seed, vec![])
}

/// Library defaults with every flag that was given laid over them.
fn attack_configs(a: &AttackArgs, seed: u64) -> (AttackConfig, OptimalConfig) {
    let mut c = AttackConfig { seed, ..AttackConfig::default() };
    let mut o = OptimalConfig { seed, ..OptimalConfig::default() };
    macro_rules! set {
        ($t:ident: $($field:ident <- $opt:expr),* $(,)?) => { $(if let Some(v) = $opt { $t.$field = v; })* };
    }
    set!(c: alpha <- a.alpha, threshold <- a.threshold, fp_tol <- a.fp_tol, fp_max_iters <- a.fp_max_iters,
         fp_relax <- a.fp_relax, eps_fast <- a.eps_fast, fast_steps_per_eps <- a.fast_steps_per_eps, nodes <- a.nodes);
    set!(o: r <- a.r, iters <- a.iters, learning_rate <- a.opt_lr, momentum <- a.momentum, init_scale <- a.init_scale,
         restarts <- a.opt_restarts, warm_fraction <- a.warm_fraction, eps_max <- a.eps_max);
    c.eps_max = a.eps_max.or(c.eps_max);
    c.target_class = a.target.or(c.target_class);
    c.source_class = a.source.or(c.source_class);
    c.kick = a.kick.or(c.kick);
    c.substeps = a.substeps.or(c.substeps);
    if let Some(r) = a.readout {
        c.mode = match r {
            ReadoutArg::Affine => LyapunovMode::Affine,
            ReadoutArg::Clipped => LyapunovMode::Clipped,
        };
    }
    if let Some(m) = a.fp_method {
        c.fp_method = match m {
            FpMethodArg::Picard => FixedPointMethod::Picard,
            FpMethodArg::Newton => FixedPointMethod::Newton,
        };
    }
    if let Some(i) = a.opt_init {
        o.init = match i {
            OptInitArg::Noise => OptimalInit::Noise,
            OptInitArg::GradientSign => OptimalInit::GradientSign,
        };
    }
    if a.no_normalize {
        o.normalize = false;
    }
    (c, o)
}

struct LoadedSignal {
    signal: SampledSignal,
    inputs: Vec<PathBuf>,
    describe: serde_json::Value,
}

fn load_signal(s: &SignalArgs) -> Result<LoadedSignal> {
    if let Some(p) = &s.input {
        return Ok(LoadedSignal {
            signal: SampledSignal::read_csv(p)?,
            inputs: vec![p.clone()],
            describe: json!({ "input": p }),
        });
    }
    let task = FrequencyTaskConfig { seed: s.data_seed, ..FrequencyTaskConfig::default() };
    if let Some(period) = s.period {
        return Ok(LoadedSignal {
            signal: task.signal(period, s.phase),
            inputs: vec![],
            describe: json!({ "period": period, "phase": s.phase, "label": task.label_for_period(period) }),
        });
    }
    let index = s.index.unwrap_or(0);
    let data = gen_frequency_dataset(&task, s.data_size)?;
    let ex = data
        .examples
        .get(index)
        .ok_or_else(|| Error::Config(format!("index {index} outside a set of {}", data.len())))?;
    Ok(LoadedSignal {
        signal: ex.signal.clone(),
        inputs: vec![],
        describe: json!({ "data": to_value(&task), "data_size": s.data_size, "index": index, "spec": to_value(&ex.spec) }),
    })
}

fn write_attack(out: &mut OutDir, res: &AttackResult) -> Result<()> {
    out.csv("perturbation.csv", &res.perturbation_table())?;
    out.csv("probs.csv", &res.probs_table())?;
    out.csv("trajectory.csv", &res.trajectory_table())?;
    if let Some(t) = res.energy_table() {
        out.csv("energy.csv", &t)?;
    }
    if let Some(t) = res.fine_table() {
        out.csv("fine.csv", &t)?;
    }
    out.json("summary.json", &res.summary())
}

fn cmd_attack(a: AttackCmd, argv: Vec<String>) -> Result<()> {
    let model = weights::load(&a.weights)?;
    let sig = load_signal(&a.signal)?;
    let (cfg, opt) = attack_configs(&a.attack, a.common.seed);
    let mut out = OutDir::create(&a.common.out_dir)?;
    let res = run_attack(method(a.method), &model, &sig.signal, &model.initial_state(), &cfg, &opt)?;
    out.csv("signal.csv", &sig.signal.to_table("x"))?;
    write_attack(&mut out, &res)?;
    println!(
        "{}: class {} -> {}, success {}, max |d| {:.4}",
        res.method.name(),
        res.nominal_class,
        res.perturbed_class,
        res.success,
        res.max_norm_inf()
    );
    let mut inputs = vec![a.weights.clone()];
    inputs.extend(sig.inputs);
    let config = json!({ "method": res.method.name(), "attack": to_value(&cfg), "optimal": to_value(&opt), "signal": sig.describe });
    out.finish("attack", argv, config, a.common.seed, inputs)
}

fn parse_box(specs: &[String], dim: usize, what: &str) -> Result<Vec<Interval>> {
    let parse = |s: &str| -> Result<Interval> {
        let bad = || Error::Config(format!("{what} box entry {s:?} is not lo:hi"));
        let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        if !(lo <= hi) {
            return Err(bad());
        }
        Ok((lo, hi))
    };
    match specs.len() {
        1 => Ok(vec![parse(&specs[0])?; dim]),
        n if n == dim => specs.iter().map(|s| parse(s)).collect(),
        n => Err(Error::Config(format!("{what} box has {n} entries, expected 1 or {dim}"))),
    }
}

fn cmd_certify(a: CertifyArgs, argv: Vec<String>) -> Result<()> {
    let model = weights::load(&a.weights)?;
    if model.cell.kind() != CellKind::Vanilla {
        return Err(Error::Config("the row certificate applies to vanilla cells only".into()));
    }
    let g = model.cell.gate("h").expect("vanilla cells have gate h");
    let h_box = parse_box(&a.h_box, model.cell.hidden_dim(), "state")?;
    let x_box = parse_box(&a.x_box, model.cell.input_dim(), "input")?;
    let rep = vanilla_certificate(&g.u, &g.w, &g.b, &x_box, &h_box)?;
    let mut out = OutDir::create(&a.common.out_dir)?;
    out.csv("certificate.csv", &rep.to_table())?;
    out.json("certificate.json", &json!({ "holds": rep.holds, "min_margin": rep.min_margin, "rows": rep.rows.len() }))?;
    println!("holds {} min margin {:.6}", rep.holds, rep.min_margin);
    let config = json!({ "h_box": h_box, "x_box": x_box });
    out.finish("certify", argv, config, a.common.seed, vec![a.weights])
}

fn cmd_bounds(a: BoundsArgs, argv: Vec<String>) -> Result<()> {
    let model = weights::load(&a.weights)?;
    let sig = load_signal(&a.signal)?;
    let (cfg, opt) = attack_configs(&a.attack, a.common.seed);
    let n = model.state_dim();
    let weight = if a.a.is_empty() { Vector::from_element(n, 1.0) } else { Vector::from_vec(a.a.clone()) };
    let mut out = OutDir::create(&a.common.out_dir)?;
    let res = run_attack(method(a.method), &model, &sig.signal, &model.initial_state(), &cfg, &opt)?;
    let field = model.field();
    let (nom, per) = (&res.nominal_trajectory, &res.perturbed_trajectory);
    let env = gronwall_envelope(
        &field,
        &weight,
        nom,
        per,
        &sig.signal,
        &res.perturbation,
        res.max_norm_inf(),
        cfg.nodes,
    )?;
    out.csv("gronwall.csv", &env.to_table())?;

    // the kick saturates sample 0, so the envelope starts from the gap after it
    let steps = sig.signal.len();
    let first = 1.min(steps - 1);
    let a_samples: Vec<_> = (first..steps)
        .map(|k| {
            let h1 = nom.at_sample(k);
            let e = per.at_sample(k) - h1;
            state_matrix(&field, h1, &e, &sig.signal.sample(k), cfg.nodes)
        })
        .collect();
    let observed: Vec<f64> = (first..steps).map(|k| (per.at_sample(k) - nom.at_sample(k)).amax()).collect();
    let mut coppel = coppel_envelopes(&a_samples, sig.signal.dt(), observed[0])?;
    let t0 = first as f64 * sig.signal.dt();
    coppel.times.iter_mut().for_each(|t| *t += t0);
    out.csv("coppel.csv", &coppel.to_table(Some(&observed)))?;
    println!("gronwall contains observed {}; final bound {:.4e}", env.contains_observed(1e-12), env.bound.last().unwrap_or(&0.0));

    let mut inputs = vec![a.weights.clone()];
    inputs.extend(sig.inputs);
    let config = json!({ "method": res.method.name(), "attack": to_value(&cfg), "optimal": to_value(&opt),
                         "a": weight.as_slice(), "signal": sig.describe });
    out.finish("bounds", argv, config, a.common.seed, inputs)
}

fn cmd_sweep(a: SweepArgs, argv: Vec<String>) -> Result<()> {
    let model = weights::load(&a.weights)?;
    let (attack, optimal) = attack_configs(&a.attack, a.common.seed);
    let task = FrequencyTaskConfig { seed: a.data_seed, ..FrequencyTaskConfig::default() };
    let data = gen_frequency_dataset(&task, a.data_size)?;
    let cfg = SweepConfig {
        method: method(a.method),
        gains: a.gains.clone(),
        attack,
        optimal,
        class_filter: a.class,
        exec: if a.sequential { Execution::Sequential } else { Execution::Parallel },
    };
    let mut out = OutDir::create(&a.common.out_dir)?;
    let rep = sweep_experiment(&model, &data, &cfg)?;
    out.csv("sweep.csv", &rep.table())?;
    out.json("sweep.json", &rep)?;
    for p in &rep.points {
        println!("gain {:<8} success {:.4} accuracy {:.4}", p.gain, p.success_rate, p.accuracy);
    }
    if let Some(g) = a.targeted_gain {
        let m = targeted_matrix(&model, &data, &cfg, g)?;
        let l = model.classes();
        let mut t = CsvTable::new(std::iter::once("source".to_string()).chain((0..l).map(|j| format!("target{j}"))));
        for (i, row) in m.iter().enumerate() {
            t.push(std::iter::once(i as f64).chain(row.iter().copied()));
        }
        out.csv("targeted.csv", &t)?;
    }
    let config = json!({ "method": cfg.method.name(), "gains": cfg.gains, "attack": to_value(&cfg.attack),
                         "optimal": to_value(&cfg.optimal), "class": a.class, "targeted_gain": a.targeted_gain,
                         "data": to_value(&task), "data_size": a.data_size, "sequential": a.sequential });
    out.finish("sweep", argv, config, a.common.seed, vec![a.weights])
}

fn cmd_probe(a: ProbeArgs, argv: Vec<String>) -> Result<()> {
    let model = weights::load(&a.weights)?;
    let sig = load_signal(&a.signal)?;
    let (cfg, _) = attack_configs(&a.attack, a.common.seed);
    let m = model.input_dim();
    let inits: Vec<Vector> = a.delta_inits.iter().map(|d| Vector::from_element(m, *d)).collect();
    let h0 = model.initial_state();
    let mut out = OutDir::create(&a.common.out_dir)?;
    let rep = theorem2_probe(&model, &sig.signal, &h0, &cfg, &a.eps, &inits)?;
    out.csv("probe_summary.csv", &rep.summary_table())?;
    out.csv("probe_curves.csv", &rep.curves_table())?;
    println!(
        "plateaus {:?} monotone {} rates monotone {}",
        rep.plateaus, rep.plateau_monotone, rep.rates_monotone
    );
    if let Some(k) = a.align_sample {
        if k >= sig.signal.len() {
            return Err(Error::Config(format!("align sample {k} outside a signal of {}", sig.signal.len())));
        }
        let res = fixed_point_attack(&model, &sig.signal, &h0, &cfg)?;
        let h1 = res.nominal_trajectory.at_sample(k);
        let h2 = res.perturbed_trajectory.at_sample(k);
        let entries = alignment_diagnostic(&model.field(), h2, &sig.signal.sample(k), &(h2 - h1), &a.align_alphas, &cfg)?;
        let mut t = CsvTable::new(["alpha", "cosine", "iterations"]);
        for e in &entries {
            t.push([e.alpha, e.cosine.unwrap_or(f64::NAN), e.iterations.map_or(f64::NAN, |i| i as f64)]);
        }
        out.csv("alignment.csv", &t)?;
    }
    let mut inputs = vec![a.weights.clone()];
    inputs.extend(sig.inputs);
    let config = json!({ "attack": to_value(&cfg), "eps": a.eps, "delta_inits": a.delta_inits,
                         "align_sample": a.align_sample, "align_alphas": a.align_alphas, "signal": sig.describe });
    out.finish("probe", argv, config, a.common.seed, inputs)
}

fn cmd_report(a: ReportArgs, argv: Vec<String>) -> Result<()> {
    let mut out = OutDir::create(&a.out_dir)?;
    let files = render_plot_data(&a.run_dir, out.path())?;
    for f in &files {
        if let Some(name) = f.file_name().and_then(|n| n.to_str()) {
            out.record(name);
        }
    }
    println!("wrote {} files to {}", files.len(), out.path().display());
    out.finish("report", argv, json!({ "run_dir": a.run_dir }), 0, vec![a.run_dir.clone()])
}
