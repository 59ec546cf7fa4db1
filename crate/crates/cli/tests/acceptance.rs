//! Exit criteria. Runs without the libtest harness so that each criterion
//! prints exactly one `criterion N: PASS|FAIL` line; the process fails if
//! any criterion fails. Pass criterion numbers as arguments to run a subset.

use std::panic;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;
use tcr_cli::config::ExperimentConfig;
use tcr_cli::sweep::{self, CellResult};
use tcr_core::data::{gaussian_blobs, split};
use tcr_core::losses::{
    bootstrap_hard_loss, bootstrap_soft_loss, ce_grad, cross_entropy_loss, forward_loss, gce_loss,
    reflect_target, reflection_grad,
};
use tcr_core::methods::MethodRegistry;
use tcr_core::model::{backward, forward, init_params};
use tcr_core::noise::{inject_noise, uniform_transition, NoiseSpec, TransitionMatrix};
use tcr_core::numerics::{softmax_slice, squeeze, ProbVector};
use tcr_core::rng::{seeded, Rng as ChaCha};
use tcr_core::trainer::{TrainConfig, Trainer};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct Criterion {
    id: u8,
    title: &'static str,
    budget: Duration,
    check: fn() -> Outcome,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

const CRITERIA: [Criterion; 9] = [
    Criterion {
        id: 1,
        title: "gradient oracles",
        budget: secs(10),
        check: gradient_oracles,
    },
    Criterion {
        id: 2,
        title: "equation identities",
        budget: secs(30),
        check: equation_identities,
    },
    Criterion {
        id: 3,
        title: "squeeze properties",
        budget: secs(5),
        check: squeeze_properties,
    },
    Criterion {
        id: 4,
        title: "noise statistics",
        budget: secs(10),
        check: noise_statistics,
    },
    Criterion {
        id: 5,
        title: "memorization",
        budget: secs(3 * 300),
        check: memorization,
    },
    Criterion {
        id: 6,
        title: "beta stability",
        budget: secs(45 * 60),
        check: beta_stability,
    },
    Criterion {
        id: 7,
        title: "delta ablation",
        budget: secs(15 * 60),
        check: delta_ablation,
    },
    Criterion {
        id: 8,
        title: "squeeze effect",
        budget: secs(10 * 60),
        check: squeeze_effect,
    },
    Criterion {
        id: 9,
        title: "determinism",
        budget: secs(120),
        check: determinism,
    },
];

fn main() -> ExitCode {
    let wanted: Vec<u8> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for c in CRITERIA
        .iter()
        .filter(|c| wanted.is_empty() || wanted.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = panic::catch_unwind(c.check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed <= c.budget;
        failures += usize::from(!pass);
        println!(
            "criterion {} ({}): {} [{}; {:.1}s of {}s]",
            c.id,
            c.title,
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

// Criterion 1

const FD_STEP: f64 = 1e-4;

fn fd_close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= f64::max(1e-5, 1e-3 * numeric.abs())
}

fn central(x: &[f64], f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += FD_STEP;
            down[i] -= FD_STEP;
            (f(&up) - f(&down)) / (2.0 * FD_STEP)
        })
        .collect()
}

fn sm(h: &[f64]) -> ProbVector {
    softmax_slice(h).expect("finite logits")
}

fn random_logits(rng: &mut ChaCha, c: usize) -> Vec<f64> {
    (0..c).map(|_| rng.random_range(-3.0..3.0)).collect()
}

#[derive(Clone, Copy)]
enum Loss {
    Ce,
    Reflection,
    BootstrapSoft,
    BootstrapHard,
    Gce,
    Forward,
}

const LOSSES: [Loss; 6] = [
    Loss::Ce,
    Loss::Reflection,
    Loss::BootstrapSoft,
    Loss::BootstrapHard,
    Loss::Gce,
    Loss::Forward,
];

/// Everything but the prediction: label, previous prediction, β, T.
struct LossPoint {
    label: usize,
    y: ProbVector,
    prev: ProbVector,
    beta: f64,
    t: TransitionMatrix,
}

impl LossPoint {
    fn random(rng: &mut ChaCha, c: usize) -> Self {
        let label = rng.random_range(0..c);
        Self {
            label,
            y: ProbVector::one_hot(c, label).unwrap(),
            prev: sm(&random_logits(rng, c)),
            beta: rng.random_range(0.05..0.95),
            t: uniform_transition(0.4, c).unwrap(),
        }
    }

    fn value(&self, loss: Loss, f: &ProbVector) -> f64 {
        match loss {
            Loss::Ce => cross_entropy_loss(&self.y, f).unwrap().loss,
            Loss::Reflection => {
                let target = reflect_target(&self.y, &self.prev, self.beta)
                    .unwrap()
                    .target;
                cross_entropy_loss(&target, f).unwrap().loss
            }
            Loss::BootstrapSoft => bootstrap_soft_loss(&self.y, f, self.beta).unwrap().loss,
            Loss::BootstrapHard => bootstrap_hard_loss(&self.y, f, self.beta).unwrap().loss,
            Loss::Gce => gce_loss(f, self.label, 0.7).unwrap().loss,
            Loss::Forward => forward_loss(f, &self.y, &self.t).unwrap().loss,
        }
    }

    fn grad(&self, loss: Loss, f: &ProbVector) -> Vec<f64> {
        match loss {
            Loss::Ce => ce_grad(&self.y, f).unwrap(),
            Loss::Reflection => reflection_grad(&self.y, &self.prev, f, self.beta).unwrap(),
            Loss::BootstrapSoft => bootstrap_soft_loss(&self.y, f, self.beta).unwrap().grad,
            Loss::BootstrapHard => bootstrap_hard_loss(&self.y, f, self.beta).unwrap().grad,
            Loss::Gce => gce_loss(f, self.label, 0.7).unwrap().grad,
            Loss::Forward => forward_loss(f, &self.y, &self.t).unwrap().grad,
        }
    }
}

fn loss_name(loss: Loss) -> &'static str {
    match loss {
        Loss::Ce => "ce",
        Loss::Reflection => "reflection",
        Loss::BootstrapSoft => "bootstrap-soft",
        Loss::BootstrapHard => "bootstrap-hard",
        Loss::Gce => "gce",
        Loss::Forward => "forward",
    }
}

fn gradient_oracles() -> Outcome {
    const POINTS: usize = 25;
    let mut rng = seeded(2024);
    let mut logit_checks = 0;
    let mut param_checks = 0;
    let mut worst = String::new();
    for _ in 0..POINTS {
        let c = rng.random_range(2..8);
        let h = random_logits(&mut rng, c);
        let point = LossPoint::random(&mut rng, c);
        for loss in LOSSES {
            let numeric = central(&h, &|h| point.value(loss, &sm(h)));
            let analytic = point.grad(loss, &sm(&h));
            logit_checks += 1;
            if let Some(i) = (0..c).find(|&i| !fd_close(analytic[i], numeric[i])) {
                worst = format!(
                    "{} logit {i}: {} vs {}",
                    loss_name(loss),
                    analytic[i],
                    numeric[i]
                );
            }
        }

        let params = init_params(&[2, 8, 3], rng.random()).unwrap();
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
        let point = LossPoint::random(&mut rng, 3);
        for loss in LOSSES {
            let loss_of = |flat: &[f64]| {
                let mut p = params.clone();
                p.set_flat(flat).unwrap();
                point.value(loss, &sm(forward(&p, &x).unwrap().0.as_slice()))
            };
            let (h, cache) = forward(&params, &x).unwrap();
            let g_h = point.grad(loss, &sm(h.as_slice()));
            let analytic = backward(&params, &cache, &g_h).unwrap().flatten();
            let numeric = central(&params.flatten(), &loss_of);
            param_checks += 1;
            if let Some(i) = (0..analytic.len()).find(|&i| !fd_close(analytic[i], numeric[i])) {
                worst = format!(
                    "{} param {i}: {} vs {}",
                    loss_name(loss),
                    analytic[i],
                    numeric[i]
                );
            }
        }
    }
    Outcome::new(
        worst.is_empty(),
        format!(
            "{logit_checks} logit and {param_checks} 2-8-3 parameter checks over 6 losses at {POINTS} points{}",
            if worst.is_empty() { String::new() } else { format!("; mismatch {worst}") }
        ),
    )
}

// Criterion 2

fn equation_identities() -> Outcome {
    let mut rng = seeded(7);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let c = rng.random_range(2..10);
        let y = ProbVector::one_hot(c, rng.random_range(0..c)).unwrap();
        let prev = sm(&random_logits(&mut rng, c));
        let f = sm(&random_logits(&mut rng, c));
        let beta: f64 = rng.random_range(0.0..=1.0);
        let got = reflection_grad(&y, &prev, &f, beta).unwrap();
        let ce = ce_grad(&y, &f).unwrap();
        for i in 0..c {
            let expect = beta * ce[i] + (1.0 - beta) * (f.as_slice()[i] - prev.as_slice()[i]);
            mismatches += usize::from(got[i].to_bits() != expect.to_bits());
        }
    }

    let all = gaussian_blobs(2, 125, 2, 0.3, 5).unwrap();
    let (clean, test) = split(&all, 0.2, 6).unwrap();
    let train = NoiseSpec::uniform(0.4).apply(&clean, None, 7).unwrap();
    let registry = MethodRegistry::builtin();
    let run = |method: &str, beta: f64| {
        let cfg = TrainConfig {
            method: method.into(),
            beta,
            epochs: 20,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::from_registry(cfg, &registry, None, &train).unwrap();
        let metrics = trainer.run(&train, &test, |_, _| Ok(())).unwrap();
        (metrics, trainer.params().flatten())
    };
    let (ce_m, ce_p) = run("ce", 0.1);
    let (tcr_m, tcr_p) = run("tcr", 1.0);
    let same_params = ce_p
        .iter()
        .zip(&tcr_p)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    let same_metrics = ce_m == tcr_m;
    Outcome::new(
        mismatches == 0 && same_params && same_metrics && train.len() == 200,
        format!(
            "{mismatches} bit mismatches in 1000 decompositions; beta=1 run over {} samples x 20 epochs: params identical {same_params}, metrics identical {same_metrics}",
            train.len()
        ),
    )
}

// Criterion 3

fn squeeze_properties() -> Outcome {
    const POINTS: usize = 1000;
    let mut rng = seeded(33);
    let mut failures: Vec<String> = Vec::new();
    let mut note = |ok: bool, what: &str| {
        if !ok && !failures.iter().any(|f| f == what) {
            failures.push(what.to_string());
        }
    };
    let mut converged = 0;
    while converged < POINTS {
        let c = rng.random_range(2..10);
        let p = sm(&(0..c)
            .map(|_| rng.random_range(-5.0..5.0))
            .collect::<Vec<_>>());
        let k = p.argmax();
        note(squeeze(&p, 1.0).unwrap() == p, "identity");
        let e = ProbVector::one_hot(c, k).unwrap();
        note(
            squeeze(&e, rng.random_range(1.0..64.0)).unwrap() == e,
            "one-hot fixed point",
        );
        note(
            squeeze(&p, rng.random_range(1.0..20.0)).unwrap().argmax() == k,
            "argmax",
        );
        let (g1, g2) = (rng.random_range(1.0..4.0), rng.random_range(1.0..4.0));
        let twice = squeeze(&squeeze(&p, g1).unwrap(), g2).unwrap();
        let once = squeeze(&p, g1 * g2).unwrap();
        let gap = twice
            .as_slice()
            .iter()
            .zip(once.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        note(gap <= 1e-9, "composition");
        // Convergence at a fixed exponent needs a gap between the top two
        // entries: (c - 1) (p2 / p1)^64 <= 1e-6.
        let mut sorted = p.as_slice().to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if (c as f64 - 1.0) * (sorted[1] / sorted[0]).powi(64) <= 1e-6 {
            let s = squeeze(&p, 64.0).unwrap();
            let dist = s
                .as_slice()
                .iter()
                .zip(e.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            note(dist <= 1e-6, "gamma=64 convergence");
            converged += 1;
        }
    }
    Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!("all five properties hold on >= {POINTS} random points each")
        } else {
            format!("violated: {}", failures.join(", "))
        },
    )
}

// Criterion 4

fn noise_statistics() -> Outcome {
    let mut exact = true;
    for eta in [0.0, 0.2, 0.4, 0.6] {
        for c in [2usize, 10, 100] {
            let t = uniform_transition(eta, c).unwrap();
            for i in 0..c {
                for j in 0..c {
                    let expect = if i == j {
                        1.0 - eta
                    } else {
                        eta / (c - 1) as f64
                    };
                    exact &= t.get(i, j) == expect;
                }
            }
        }
    }
    const N: usize = 50_000;
    let mut worst_z: f64 = 0.0;
    for (k, eta) in [0.2, 0.4, 0.6].into_iter().enumerate() {
        let c = 10;
        let labels: Vec<usize> = (0..N).map(|i| i % c).collect();
        let t = uniform_transition(eta, c).unwrap();
        let (_, mask) = inject_noise(&labels, &t, 100 + k as u64).unwrap();
        let rate = mask.iter().filter(|&&m| m).count() as f64 / N as f64;
        let sd = (eta * (1.0 - eta) / N as f64).sqrt();
        worst_z = worst_z.max((rate - eta).abs() / sd);
    }
    Outcome::new(
        exact && worst_z <= 3.0,
        format!("transition entries exact: {exact}; worst corruption-rate deviation {worst_z:.2} SD at n={N}"),
    )
}

// Criteria 5 to 8: desk-scale runs through the sweep harness.

const SEEDS: [u64; 3] = [1, 2, 3];

fn desk_config(noise: &str, methods: &[&str], grid: &[(&str, &[f64])]) -> ExperimentConfig {
    ExperimentConfig {
        noise: noise.into(),
        methods: methods.iter().map(|m| m.to_string()).collect(),
        seeds: SEEDS.to_vec(),
        grid: grid
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_vec()))
            .collect(),
        ..ExperimentConfig::default()
    }
}

fn run_sweep(cfg: &ExperimentConfig) -> Vec<CellResult> {
    assert_eq!(cfg.data.classes, 3);
    assert_eq!(cfg.data.per_class, 500);
    assert_eq!(cfg.data.dim, 2);
    assert_eq!(cfg.train.hidden, vec![64, 64]);
    assert_eq!(cfg.train.epochs, 60);
    assert_eq!(cfg.train.lr, 0.1);
    assert_eq!(cfg.train.milestones, vec![(30, 10.0), (45, 10.0)]);
    assert_eq!(cfg.train.resolved_squeeze_start(), 31);
    let results = sweep::run(cfg, &MethodRegistry::builtin());
    if let Some(bad) = results.iter().find(|r| r.error.is_some()) {
        panic!("cell {:?} failed: {}", bad.cell, bad.status());
    }
    results
}

fn mean_of(
    results: &[CellResult],
    keep: impl Fn(&CellResult) -> bool,
    pick: impl Fn(&CellResult) -> f64,
) -> f64 {
    let xs: Vec<f64> = results.iter().filter(|r| keep(r)).map(pick).collect();
    assert_eq!(xs.len(), SEEDS.len());
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn has(r: &CellResult, method: &str, param: Option<(&str, f64)>) -> bool {
    r.cell.method == method
        && param.is_none_or(|(k, v)| r.cell.params.iter().any(|(pk, pv)| pk == k && *pv == v))
}

fn test_acc(r: &CellResult) -> f64 {
    r.test_acc.expect("successful cell")
}

fn train_acc(r: &CellResult) -> f64 {
    r.train_acc.expect("successful cell")
}

fn memorization() -> Outcome {
    let cfg = desk_config("uniform:0.4", &["ce", "tcr"], &[]);
    assert_eq!((cfg.train.beta, cfg.train.gamma), (0.1, 1.1));
    let results = run_sweep(&cfg);
    let ce_train = mean_of(&results, |r| has(r, "ce", None), train_acc);
    let tcr_train = mean_of(&results, |r| has(r, "tcr", None), train_acc);
    let ce_test = mean_of(&results, |r| has(r, "ce", None), test_acc);
    let tcr_test = mean_of(&results, |r| has(r, "tcr", None), test_acc);
    Outcome::new(
        ce_train > 0.75 && tcr_train <= 0.75 && tcr_test - ce_test >= 0.05,
        format!(
            "noisy-label train acc CE {ce_train:.4} (need > 0.75), TCR {tcr_train:.4} (need <= 0.75); test acc TCR {tcr_test:.4} vs CE {ce_test:.4} (need +0.05)"
        ),
    )
}

const BETAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn range(xs: &[f64]) -> f64 {
    xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min)
}

fn beta_stability() -> Outcome {
    let cfg = desk_config(
        "uniform:0.4",
        &["tcr", "bootstrap-hard"],
        &[("beta", &BETAS)],
    );
    let results = run_sweep(&cfg);
    let per_beta = |method: &str| -> Vec<f64> {
        BETAS
            .iter()
            .map(|&b| mean_of(&results, |r| has(r, method, Some(("beta", b))), test_acc))
            .collect()
    };
    let tcr = per_beta("tcr");
    let hard = per_beta("bootstrap-hard");
    let (tcr_range, hard_range) = (range(&tcr), range(&hard));
    Outcome::new(
        tcr_range <= 0.10 && hard_range > tcr_range,
        format!("test-acc range over beta: TCR {tcr_range:.4} (need <= 0.10), bootstrap-hard {hard_range:.4} (need > TCR)"),
    )
}

fn delta_ablation() -> Outcome {
    let cfg = desk_config("uniform:0.4", &["tcr"], &[("delta", &[0.0, 1.0, 2.0, 3.0])]);
    let results = run_sweep(&cfg);
    let acc: Vec<f64> = (0..4)
        .map(|d| {
            mean_of(
                &results,
                |r| has(r, "tcr", Some(("delta", d as f64))),
                test_acc,
            )
        })
        .collect();
    let spread = range(&acc[1..]);
    let drop = acc[1] - acc[0];
    Outcome::new(
        spread <= 0.02 && drop >= 0.02,
        format!(
            "test acc delta 0..3 = {:.4}/{:.4}/{:.4}/{:.4}; delta 1-3 range {spread:.4} (need <= 0.02); delta 1 minus delta 0 {drop:.4} (need >= 0.02)",
            acc[0], acc[1], acc[2], acc[3]
        ),
    )
}

fn squeeze_effect() -> Outcome {
    let cfg = desk_config("uniform:0.6", &["tcr"], &[("gamma", &[1.0, 1.1])]);
    let results = run_sweep(&cfg);
    let plain = mean_of(&results, |r| has(r, "tcr", Some(("gamma", 1.0))), test_acc);
    let squeezed = mean_of(&results, |r| has(r, "tcr", Some(("gamma", 1.1))), test_acc);
    Outcome::new(
        squeezed - plain >= 0.03,
        format!("test acc at eta 0.6: gamma 1.1 {squeezed:.4} vs gamma 1 {plain:.4} (need +0.03)"),
    )
}

// Criterion 9

fn tcr(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tcr"))
        .args(args)
        .output()
        .expect("tcr binary runs")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let mut differing: Vec<String> = Vec::new();
    let mut compared = 0;
    let mut check = |name: String, a: Vec<u8>, b: Vec<u8>| {
        compared += 1;
        if a != b || a.is_empty() {
            differing.push(name);
        }
    };

    for run in ["a", "b"] {
        assert!(tcr(&[
            "gen-data",
            "--seed",
            "7",
            "--out",
            &p(&format!("data-{run}"))
        ])
        .status
        .success());
    }
    for f in ["train.csv", "test.csv"] {
        check(
            f.into(),
            read(&dir.path().join("data-a").join(f)),
            read(&dir.path().join("data-b").join(f)),
        );
    }

    let (train, test) = (p("data-a/train.csv"), p("data-a/test.csv"));
    let runs: [(&str, &[&str]); 5] = [
        ("ce", &["--method", "ce", "--noise", "uniform:0.4"]),
        (
            "tcr",
            &[
                "--method",
                "tcr",
                "--noise",
                "uniform:0.4",
                "--trace",
                "0,1,2",
            ],
        ),
        (
            "vanilla",
            &["--method", "tcr", "--delta", "0", "--noise", "uniform:0.4"],
        ),
        (
            "hard",
            &["--method", "bootstrap-hard", "--noise", "uniform:0.4"],
        ),
        (
            "nosqueeze",
            &[
                "--method",
                "tcr",
                "--gamma",
                "1.0",
                "--noise",
                "uniform:0.6",
            ],
        ),
    ];
    for (name, extra) in runs {
        for run in ["a", "b"] {
            let out = p(&format!("{name}-{run}"));
            let mut args = vec![
                "train", "--train", &train, "--test", &test, "--epochs", "2", "--out", &out,
            ];
            args.extend_from_slice(extra);
            let o = tcr(&args);
            assert!(
                o.status.success(),
                "{name}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
        for f in ["metrics.csv", "trace.csv", "model.ckpt"] {
            check(
                format!("{name}/{f}"),
                read(&dir.path().join(format!("{name}-a")).join(f)),
                read(&dir.path().join(format!("{name}-b")).join(f)),
            );
        }
        let eval = |run: &str| {
            tcr(&[
                "eval",
                "--checkpoint",
                &p(&format!("{name}-{run}/model.ckpt")),
                "--data",
                &test,
            ])
            .stdout
        };
        check(format!("{name}/eval"), eval("a"), eval("b"));
    }

    let config = serde_json::json!({
        "epochs": 2,
        "noise": "uniform:0.4",
        "methods": ["tcr", "bootstrap-hard"],
        "grid": {"beta": [0.1, 0.5]},
        "seeds": [1, 2],
    });
    let config_path = p("sweep.json");
    std::fs::write(&config_path, config.to_string()).unwrap();
    for (run, parallel) in [("a", false), ("b", false), ("c", true)] {
        let out = p(&format!("sweep-{run}"));
        let mut args = vec!["sweep", config_path.as_str(), "--out", out.as_str()];
        if parallel {
            args.push("--parallel");
        }
        assert!(tcr(&args).status.success());
    }
    let sweep_csv = |run: &str| read(&dir.path().join(format!("sweep-{run}")).join("sweep.csv"));
    check("sweep.csv".into(), sweep_csv("a"), sweep_csv("b"));
    check("sweep.csv parallel".into(), sweep_csv("a"), sweep_csv("c"));

    Outcome::new(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{compared} outputs byte-identical across reruns")
        } else {
            format!("differing outputs: {}", differing.join(", "))
        },
    )
}
