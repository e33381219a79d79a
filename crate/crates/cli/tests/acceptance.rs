//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs sequentially so the wall-clock budgets and the timing comparison in
//! the fine-tune ablation are not distorted by other criteria. Set
//! `ACCEPTANCE_ONLY` to a comma-separated list of ids to run a subset.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{ece_bruteforce, grad_instance, max_rel_err, random_simplex, table, VARIANTS};
use floodlib::commands::{ablate, train, train_aux, Command};
use floodlib::config::ExperimentConfig;
use floodlib::output::sha256_hex;
use floodlib::pipeline::median;
use floodlib::proposition::{run_check, PropositionConfig};
use floodlib_core::auxiliary::{compute_flood_table, make_folds, train_aux_models};
use floodlib_core::data::{gen_toy_gaussian, ToyGaussianConfig};
use floodlib_core::flood::{
    adaflood_objective, correct_classification, flood_objective, iflood_objective, mean_objective,
    theta_regression,
};
use floodlib_core::metrics::ece;
use floodlib_core::nn::{self, Head};
use floodlib_core::{AuxConfig, Matrix, MlpModel, Objective, SampleFlag, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn config(name: &str, out: &Path) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    let mut cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn loss_formulas() -> Outcome {
    const TOL: f64 = 1e-12;
    let f = flood_objective(&[0.2, 0.4], 0.1).map_err(|e| e.to_string())?;
    ensure(close(f.value, 0.3, TOL) && f.upstream == [0.5, 0.5], || {
        format!("flood above b: {f:?}")
    })?;
    let f = flood_objective(&[0.05, 0.05], 0.1).map_err(|e| e.to_string())?;
    ensure(close(f.value, 0.15, TOL) && f.upstream == [-0.5, -0.5], || {
        format!("flood below b: {f:?}")
    })?;
    let f = iflood_objective(&[0.05, 0.3], 0.1).map_err(|e| e.to_string())?;
    ensure(close(f.value, 0.225, TOL), || format!("iflood: {f:?}"))?;
    let f = adaflood_objective(&[0.5, 0.02], &[0.4, 0.05]).map_err(|e| e.to_string())?;
    ensure(close(f.value, 0.29, TOL) && f.upstream == [0.5, -0.5], || {
        format!("adaflood: {f:?}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=64);
        let losses: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let ids: Vec<u64> = (0..n as u64).collect();
        let b = rng.random_range(0.0..2.0);
        let plain = mean_objective(&losses).unwrap();
        let ifl = iflood_objective(&losses, b).unwrap();
        let t = table(&ids, &vec![b; n]);
        let ada = Objective::AdaFlood(&t).evaluate(&losses, &ids).unwrap();
        let ifl0 = iflood_objective(&losses, 0.0).unwrap();
        let fl0 = flood_objective(&losses, 0.0).unwrap();
        worst = worst
            .max((ada.value - ifl.value).abs())
            .max((ifl0.value - plain.value).abs())
            .max((fl0.value - plain.value).abs());
        ensure(ada.upstream == ifl.upstream, || {
            "constant-theta AdaFlood gradient differs from iFlood".into()
        })?;
        ensure(worst <= TOL, || format!("reduction chain gap {worst:e}"))?;
    }
    Ok(format!(
        "hand values at 1e-12; reduction chain on 1000 batches, max gap {worst:e}"
    ))
}

fn gradients() -> Outcome {
    const TOL: f64 = 1e-4;
    let mut worst = 0.0f64;
    let mut count = 0;
    for (vi, &variant) in VARIANTS.iter().enumerate() {
        for i in 0..100 {
            let inst = grad_instance(10_000 * vi as u64 + i, variant);
            let err = max_rel_err(&inst.analytic(), &inst.numeric(1e-5), 1e-6);
            worst = worst.max(err);
            count += 1;
            ensure(err <= TOL, || {
                format!("{variant:?} instance {i}: relative error {err:e}")
            })?;
        }
    }
    Ok(format!("{count} instances, worst relative error {worst:e}"))
}

fn proposition() -> Outcome {
    let binary = PropositionConfig {
        num_inputs: 4,
        num_classes: 2,
        noise_rate: 0.25,
        ..Default::default()
    };
    let r = run_check(&binary, 0).map_err(|e| e.to_string())?;
    ensure(
        r.zero_one.bayes_risk.exact == "1/4" && r.zero_one.adaflood_erm.exact == "1/2",
        || format!("binary Bayes-error 1/4 instance: {:?}", r.zero_one),
    )?;
    let cases = [
        binary.clone(),
        PropositionConfig {
            num_inputs: 12,
            ..binary.clone()
        },
        PropositionConfig {
            num_inputs: 10,
            num_classes: 3,
            noise_rate: 0.3,
            ..binary.clone()
        },
        PropositionConfig {
            num_inputs: 9,
            num_classes: 4,
            noise_rate: 0.5,
            ..binary
        },
    ];
    let mut tables = 0;
    for cfg in &cases {
        for seed in 0..3 {
            let r = run_check(cfg, seed).map_err(|e| e.to_string())?;
            let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).collect();
            ensure(failed.is_empty(), || format!("{cfg:?} seed {seed}: {failed:?}"))?;
            ensure(r.zero_one.doubled_ratio.exact == "4/3", || "doubled ratio".into())?;
            ensure(
                r.zero_one.halved_adaflood_erm == r.zero_one.halved_adaflood_bayes,
                || "halved".into(),
            )?;
            tables += r.zero_one.tables_enumerated;
        }
    }
    Ok(format!(
        "{} instances, {tables} lookup tables enumerated, all exact",
        cases.len() * 3
    ))
}

fn correction_endpoints() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..10_000 {
        let k = rng.random_range(2..=10);
        let p = random_simplex(&mut rng, k);
        let y = rng.random_range(0..k);
        let own = -p[y].ln();
        let one = correct_classification(&p, y, 1.0).map_err(|e| e.to_string())?;
        ensure(one == 0.0, || format!("case {i}: gamma=1 gives {one}"))?;
        let zero = correct_classification(&p, y, 0.0).map_err(|e| e.to_string())?;
        ensure(zero == own, || {
            format!("case {i}: gamma=0 gives {zero}, aux loss {own}")
        })?;
        let (g1, g2) = {
            let a = rng.random::<f64>();
            let b = rng.random::<f64>();
            (a.min(b), a.max(b))
        };
        if g1 < g2 && p[y] < 1.0 {
            let t1 = correct_classification(&p, y, g1).unwrap();
            let t2 = correct_classification(&p, y, g2).unwrap();
            ensure(t1 > t2, || {
                format!("case {i}: theta({g1}) = {t1} <= theta({g2}) = {t2}")
            })?;
        }
        let (pred, label) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let r1 = theta_regression(pred, label, 1.0).unwrap();
        let r0 = theta_regression(pred, label, 0.0).unwrap();
        ensure(r1 == 0.0 && r0 == (pred - label) * (pred - label), || {
            format!("case {i}: regression {r0} {r1}")
        })?;
    }
    Ok("10000 random (p, gamma) cases".into())
}

fn motivation() -> Outcome {
    let mut notes = Vec::new();
    for seed in 0..5u64 {
        let toy = ToyGaussianConfig {
            frac_regular: 0.67,
            frac_irregular: 0.15,
            frac_mislabeled: 0.18,
            n: 600,
            seed: 500 + seed,
            ..Default::default()
        };
        let (a, _) = gen_toy_gaussian(&toy).map_err(|e| e.to_string())?;
        let mislabeled: Vec<usize> = (0..a.len())
            .filter(|&i| a.flags()[i] == SampleFlag::Mislabeled)
            .collect();
        let regular: Vec<usize> = (0..a.len())
            .filter(|&i| a.flags()[i] == SampleFlag::Clean)
            .collect();

        // memorization run on all of A: two wide layers, constant step size
        let tc = TrainConfig {
            epochs: 600,
            batch_size: 16,
            lr0: 0.1,
            lr_decay: 1.0,
            lr_step_epochs: 600,
            seed,
            ..Default::default()
        };
        let dims = [a.dim(), 128, 128, a.num_classes().unwrap()];
        let init = MlpModel::new(&dims, Head::Softmax, seed).unwrap();
        let out = nn::train(init, &a, &tc, &Objective::Unregularized, None).map_err(|e| e.to_string())?;
        let losses = out.model.losses(a.features(), a.labels()).unwrap();
        let mis_final = mislabeled.iter().map(|&i| losses[i]).fold(0.0, f64::max);
        ensure(mis_final < 0.1, || {
            format!("seed {seed}: largest mislabeled final loss {mis_final:.4}")
        })?;

        // held-out levels from fold models
        let folds = make_folds(&a, 5, seed).unwrap();
        let aux = AuxConfig {
            n_folds: 5,
            hidden: vec![64],
            gamma: 0.0,
            train: TrainConfig {
                epochs: 30,
                batch_size: 32,
                lr0: 0.1,
                ..Default::default()
            },
            seed,
            ..Default::default()
        };
        let models = train_aux_models(&a, &folds, &aux, None).map_err(|e| e.to_string())?;
        let theta = compute_flood_table(&a, &folds, &models, 0.0).map_err(|e| e.to_string())?;
        let mut t_mis: Vec<f64> = mislabeled
            .iter()
            .map(|&i| theta.get(a.ids()[i]).unwrap())
            .collect();
        let mut t_reg: Vec<f64> = regular.iter().map(|&i| theta.get(a.ids()[i]).unwrap()).collect();
        let margin = median(&mut t_mis) - median(&mut t_reg);
        ensure(margin > 0.5, || {
            format!("seed {seed}: median theta margin {margin:.4}")
        })?;
        notes.push(format!(
            "seed {seed}: max final loss {mis_final:.4}, theta margin {margin:.3}"
        ));
    }
    Ok(notes.join("; "))
}

fn noisy_labels(out: &Path) -> Outcome {
    let cfg = config("noisy_labels.json", out);
    train_aux::run(&cfg).map_err(|e| e.to_string())?;
    let result = train::run(&cfg).map_err(|e| e.to_string())?;
    let acc = |m: &str| result.methods[m].test["accuracy"].mean;
    let (ada, unreg, ifl) = (acc("adaflood"), acc("unregularized"), acc("iflood"));
    ensure(ada >= unreg && ada >= ifl, || {
        format!("mean clean-test accuracy adaflood {ada:.4}, unregularized {unreg:.4}, iflood {ifl:.4}")
    })?;
    Ok(format!(
        "{} seeds, mean clean-test accuracy adaflood {ada:.4}, iflood {ifl:.4}, unregularized {unreg:.4}",
        cfg.seeds.len()
    ))
}

fn ece_oracle() -> Outcome {
    let bins = floodlib::config::CalibrationSpec::default().bins;
    ensure(bins == 10, || format!("default bins {bins}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let n = rng.random_range(1..=200);
        let k = rng.random_range(2..=6);
        let probs: Vec<Vec<f64>> = (0..n).map(|_| random_simplex(&mut rng, k)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let m = Matrix::from_vec(n, k, probs.concat()).unwrap();
        let got = ece(&m, &labels, bins).map_err(|e| e.to_string())?.ece;
        let want = ece_bruteforce(&probs, &labels, bins);
        worst = worst.max((got - want).abs());
        ensure(worst <= 1e-12, || format!("instance {i}: {got} vs {want}"))?;
    }
    Ok(format!("100 instances, {bins} bins, max gap {worst:e}"))
}

fn finetune_ablation(out: &Path) -> Outcome {
    let cfg = config("finetune_ablation.json", out);
    let summary = ablate::run(&cfg).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for &seed in &cfg.seeds {
        let (report, secs) = {
            let dir = cfg.seed_dir(seed).join("ablation");
            let t: BTreeMap<String, f64> = read(&dir.join("timings.json"));
            let r: ablate::SeedAblation = read(&dir.join("ablation.json"));
            (r, t)
        };
        let (scratch, ft) = (secs["scratch"], secs["finetune_1"]);
        ensure(ft < scratch, || {
            format!("seed {seed}: fine-tune {ft:.3}s, scratch {scratch:.3}s")
        })?;
        let rho = report
            .modes
            .iter()
            .find(|m| m.label == "finetune_1")
            .unwrap()
            .spearman_vs_scratch
            .unwrap();
        ensure(rho > 0.3, || format!("seed {seed}: spearman {rho:.3}"))?;
        notes.push(format!("seed {seed}: {ft:.2}s vs {scratch:.2}s, rho {rho:.3}"));
    }
    for (label, m) in &summary.modes {
        ensure(m.downstream_test.contains_key("accuracy"), || {
            format!("{label}: no downstream metrics")
        })?;
    }
    Ok(notes.join("; "))
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.file_name().unwrap().to_string_lossy().contains("timings") {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    sha256_hex(&std::fs::read(&p).unwrap()),
                );
            }
        }
    }
    out
}

fn determinism(out: &Path) -> Outcome {
    let cfg = config("quickstart.json", out);
    let commands = [
        Command::GenData,
        Command::TrainAux,
        Command::Train,
        Command::Evaluate,
        Command::Calibrate,
        Command::PropositionCheck,
        Command::AblateFinetune,
    ];
    let run_all = || -> Result<BTreeMap<PathBuf, String>, String> {
        for c in commands {
            c.run(&cfg).map_err(|e| format!("{}: {e}", c.name()))?;
        }
        Ok(snapshot(&cfg.exp_dir()))
    };
    let first = run_all()?;
    let moved = out.join("first_run");
    std::fs::rename(cfg.exp_dir(), &moved).unwrap();
    let second = run_all()?;
    ensure(first.len() == second.len(), || {
        format!("{} files vs {}", first.len(), second.len())
    })?;
    let differing: Vec<_> = first
        .iter()
        .filter(|(p, h)| second.get(*p) != Some(*h))
        .map(|(p, _)| p.display().to_string())
        .collect();
    ensure(differing.is_empty(), || {
        format!("differing outputs: {differing:?}")
    })?;
    let tables = first
        .keys()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .count();
    let jsons = first
        .keys()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .count();
    Ok(format!(
        "{} commands rerun from scratch; {tables} CSVs and {jsons} JSONs byte-identical",
        commands.len()
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: Box<dyn Fn(&Path) -> Outcome>,
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let criteria = vec![
        Criterion {
            id: 1,
            name: "loss-formula exactness",
            budget: Duration::from_secs(1),
            run: Box::new(|_| loss_formulas()),
        },
        Criterion {
            id: 2,
            name: "gradient correctness",
            budget: Duration::from_secs(30),
            run: Box::new(|_| gradients()),
        },
        Criterion {
            id: 3,
            name: "proposition reproduction",
            budget: Duration::from_secs(5),
            run: Box::new(|_| proposition()),
        },
        Criterion {
            id: 4,
            name: "correction-function endpoints",
            budget: Duration::from_secs(60),
            run: Box::new(|_| correction_endpoints()),
        },
        Criterion {
            id: 5,
            name: "mislabeled-sample motivation",
            budget: Duration::from_secs(120),
            run: Box::new(|_| motivation()),
        },
        Criterion {
            id: 6,
            name: "noisy-label robustness",
            budget: Duration::from_secs(600),
            run: Box::new(noisy_labels),
        },
        Criterion {
            id: 7,
            name: "ECE oracle",
            budget: Duration::from_secs(5),
            run: Box::new(|_| ece_oracle()),
        },
        Criterion {
            id: 8,
            name: "fine-tune ablation",
            budget: Duration::from_secs(300),
            run: Box::new(finetune_ablation),
        },
        Criterion {
            id: 9,
            name: "determinism and idempotence",
            budget: Duration::from_secs(600),
            run: Box::new(determinism),
        },
    ];

    // e.g. ACCEPTANCE_ONLY=5,8 to rerun a subset
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for c in criteria
        .iter()
        .filter(|c| only.as_ref().is_none_or(|o| o.contains(&c.id)))
    {
        let dir = tmp.path().join(format!("criterion_{}", c.id));
        std::fs::create_dir_all(&dir).unwrap();
        let start = Instant::now();
        let result = (c.run)(&dir);
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; over the {:?} budget", c.budget)),
            other => other,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "[{tag}] {}. {} ({:.2}s): {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64()
        );
        if result.is_err() {
            failed.push(c.id);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
