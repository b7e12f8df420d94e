//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sketchguard::aggregation::{balance_filter, gamma_eff, sketchguard_filter, AggregatorKind, ThresholdSchedule};
use sketchguard::config::SimConfig;
use sketchguard::engine::bench::{bench, BenchMode, BenchOptions};
use sketchguard::engine::{account_communication, metrics_csv, run_simulation, EngineOptions, Simulation, SimulationResult};
use sketchguard::hash::{stream_rng, Stream};
use sketchguard::learning::local_update;
use sketchguard::sketch::calibration::epsilon_hat;
use sketchguard::sketch::{sketch_distance, SketchParams, Sketcher};
use sketchguard::ParamVector;

use common::{quadratic_fixture, robustness_fixture, FIXTURE_SEEDS};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn gaussian(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn run(config: &SimConfig) -> SimulationResult {
    run_simulation(config).expect("fixture runs")
}

fn c1_linearity() -> Outcome {
    let (d, k) = (10_000, 512);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let sk = Sketcher::new(SketchParams::new(d, k, case).unwrap());
        let u = gaussian(&mut rng, d);
        let v = gaussian(&mut rng, d);
        let a: f64 = rng.random_range(-5.0..5.0);
        let b: f64 = rng.random_range(-5.0..5.0);
        let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = sk.sketch(&ParamVector::new(combo)).unwrap();
        let su = sk.sketch(&ParamVector::new(u)).unwrap();
        let sv = sk.sketch(&ParamVector::new(v)).unwrap();
        let rhs: Vec<f64> = su.values().iter().zip(sv.values()).map(|(x, y)| a * x + b * y).collect();
        let diff: Vec<f64> = lhs.values().iter().zip(&rhs).map(|(x, y)| x - y).collect();
        worst = worst.max(norm(&diff) / norm(&rhs));
    }
    outcome(worst <= 1e-6, format!("max relative error {worst:.2e} over 100 cases (bound 1e-6)"))
}

fn c2_distance_band() -> Outcome {
    let (d, k, pairs) = (10_000, 2000, 1000);
    let eps = epsilon_hat(k);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut inside = 0;
    for p in 0..pairs {
        let sk = Sketcher::new(SketchParams::new(d, k, 0xACCE_0000 + p).unwrap());
        let u = gaussian(&mut rng, d);
        let v = gaussian(&mut rng, d);
        let truth: f64 = u.iter().zip(&v).map(|(x, y)| (x - y) * (x - y)).sum();
        let est = sketch_distance(&sk.sketch(&ParamVector::new(u)).unwrap(), &sk.sketch(&ParamVector::new(v)).unwrap()).unwrap();
        if (est * est / truth - 1.0).abs() <= eps {
            inside += 1;
        }
    }
    let frac = inside as f64 / pairs as f64;
    outcome(frac >= 0.99, format!("{inside}/{pairs} pairs within 1 ± {eps:.4} (need ≥ 99%)"))
}

fn c3_gamma_eff() -> Outcome {
    let mut worst = 0.0f64;
    for gamma in [0.5, 1.0, 2.0, 7.0] {
        let ratio = gamma_eff(gamma, 0.1).unwrap() / gamma;
        worst = worst.max((ratio - 1.1055).abs());
    }
    let two = gamma_eff(2.0, 0.1).unwrap();
    outcome(worst <= 1e-3, format!("gamma_eff(2, 0.1) = {two:.5}; max |ratio - 1.1055| = {worst:.2e}"))
}

/// Random self model and six neighbors at controlled true distances, none
/// inside the distortion band around the threshold and at least one below
/// it so the nearest-neighbor fallback is not exercised.
fn c4_filter_equivalence() -> Outcome {
    let (d, k) = (1000, 256);
    let eps = epsilon_hat(k);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut agree = 0;
    let fixtures = 500;
    let mut accepted_total = 0;
    let mut rejected_total = 0;
    for f in 0..fixtures {
        let schedule = ThresholdSchedule {
            gamma: rng.random_range(0.2..2.5),
            kappa: 1.0,
            total_rounds: 10,
        };
        let t = rng.random_range(0..10);
        let own = ParamVector::new(gaussian(&mut rng, d));
        let tau = schedule.tau(t, own.norm());
        let lo = tau / (1.0 + eps);
        let hi = tau / (1.0 - eps);
        let mut neighbors = Vec::new();
        for j in 0..6 {
            let dist = if j == 0 || rng.random_bool(0.5) {
                rng.random_range(0.05 * lo..0.999 * lo)
            } else {
                rng.random_range(1.001 * hi..3.0 * hi)
            };
            let dir = gaussian(&mut rng, d);
            let scale = dist / norm(&dir);
            let w: Vec<f64> = own.as_slice().iter().zip(&dir).map(|(a, b)| a + scale * b).collect();
            neighbors.push((j, ParamVector::new(w)));
        }
        let sk = Sketcher::new(SketchParams::new(d, k, 0xF17E_0000 + f).unwrap());
        let full: Vec<(usize, &ParamVector)> = neighbors.iter().map(|(j, w)| (*j, w)).collect();
        let sketches: Vec<(usize, sketchguard::sketch::Sketch)> =
            neighbors.iter().map(|(j, w)| (*j, sk.sketch(w).unwrap())).collect();
        let claimed: Vec<(usize, &sketchguard::sketch::Sketch)> = sketches.iter().map(|(j, s)| (*j, s)).collect();
        let a = balance_filter(&own, &full, &schedule, t);
        let b = sketchguard_filter(&sk.sketch(&own).unwrap(), &claimed, &schedule, t).unwrap();
        accepted_total += a.accepted.len();
        rejected_total += 6 - a.accepted.len();
        if a.accepted == b.accepted {
            agree += 1;
        }
    }
    outcome(
        agree == fixtures,
        format!("{agree}/{fixtures} identical acceptance sets ({accepted_total} accepts, {rejected_total} rejects, eps = {eps:.3})"),
    )
}

fn c5_degeneracy() -> Outcome {
    let n = 10;
    let mut base = quadratic_fixture(n);
    base.topology.kind = sketchguard::config::TopologyName::Full;
    base.run.rounds = 5;
    base.aggregator.gamma = 1e9;
    let options = EngineOptions {
        record_trajectory: true,
        ..Default::default()
    };
    let mut sg = base.clone();
    sg.aggregator.kind = AggregatorKind::Sketchguard;
    let mut bal = base.clone();
    bal.aggregator.kind = AggregatorKind::Balance;
    let sim = Simulation::new(&sg).unwrap();
    let ts = sim.run(&options).unwrap().trajectory.unwrap();
    let tb = Simulation::new(&bal).unwrap().run(&options).unwrap().trajectory.unwrap();
    let identical = ts == tb;

    // Replay: local step, then α·own + (1 − α)·mean of all other nodes.
    let task = base.task.task();
    let sgd = base.sgd();
    let alpha = base.aggregator.alpha;
    let mut models = vec![sketchguard::learning::initial_model(&task, base.seeds.init); n];
    let mut worst = 0.0f64;
    for (t, observed) in ts.iter().enumerate() {
        let half: Vec<ParamVector> = (0..n)
            .map(|i| {
                let mut rng = stream_rng(base.seeds.training, Stream::Training, i as u64, t as u64);
                local_update(&task, &models[i], &sim.data().clients[i], &sgd, &mut rng).unwrap()
            })
            .collect();
        models = (0..n)
            .map(|i| {
                let dim = half[i].dim();
                let mut out = vec![0.0; dim];
                for c in 0..dim {
                    let others: f64 = (0..n).filter(|&j| j != i).map(|j| half[j][c]).sum();
                    out[c] = alpha * half[i][c] + (1.0 - alpha) * others / (n - 1) as f64;
                }
                ParamVector::new(out)
            })
            .collect();
        for (a, b) in models.iter().zip(observed) {
            worst = worst.max(a.distance(b));
        }
    }
    outcome(
        identical && worst <= 1e-12,
        format!("trajectories bit-identical: {identical}; max distance to mixing oracle {worst:.2e}"),
    )
}

fn c6_communication() -> Outcome {
    let (n, d, k) = (100usize, 6_600_000usize, 1000usize);
    let sg = account_communication(AggregatorKind::Sketchguard, n, 50, d, k);
    let base = account_communication(AggregatorKind::Balance, n, 50, d, k);
    let half = 1.0 - sg as f64 / base as f64;
    let ok_half = sg == 100_000 + 330_000_000 && base == 660_000_000 && (half - 0.5).abs() < 0.01;

    let benign = account_communication(AggregatorKind::Sketchguard, n, n, d, k);
    let full = account_communication(AggregatorKind::Balance, n, n, d, k);
    let penalty = benign as f64 / full as f64 - 1.0;
    let ok_benign = penalty < 2e-4 && benign - full == (k * n) as u64;

    let filtered = account_communication(AggregatorKind::Sketchguard, n, 30, d, k);
    let reduction = 1.0 - filtered as f64 / base as f64;
    let ok_seventy = filtered == (k * n + d * 30) as u64 && (reduction - 0.7).abs() < 0.01;
    outcome(
        ok_half && ok_benign && ok_seventy,
        format!(
            "{sg} vs {base} ({:.2}% reduction); benign penalty {:.4}%; 70% filtering gives {:.2}% reduction",
            100.0 * half,
            100.0 * penalty,
            100.0 * reduction
        ),
    )
}

fn c7_dim_independence() -> Outcome {
    let base = robustness_fixture(AggregatorKind::Sketchguard, 0.5, FIXTURE_SEEDS[0]);
    let options = BenchOptions {
        dims: vec![2048, 20_480],
        ..Default::default()
    };
    let report = bench(BenchMode::Dims, &base, &options).unwrap();
    let get = |agg: AggregatorKind, x: usize| {
        report
            .rows
            .iter()
            .find(|r| r.aggregator == agg && r.x_value == x)
            .expect("bench row")
            .screen_ops_total
    };
    let (s1, s2) = (get(AggregatorKind::Sketchguard, 2048), get(AggregatorKind::Sketchguard, 20_480));
    let (b1, b2) = (get(AggregatorKind::Balance, 2048), get(AggregatorKind::Balance, 20_480));
    outcome(
        report.aborted.is_none() && s1 == s2 && b2 == 10 * b1 && s1 > 0,
        format!("sketch screening {s1} -> {s2}; full-precision screening {b1} -> {b2}"),
    )
}

/// Largest and smallest eigenvalues of a symmetric matrix by power
/// iteration on `H` and on `λ_max·I − H`.
fn extreme_eigenvalues(h: &[Vec<f64>]) -> (f64, f64) {
    let p = h.len();
    let power = |shift: f64, sign: f64| {
        let mut v = vec![1.0 / (p as f64).sqrt(); p];
        v[0] += 0.1;
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let mut next = vec![0.0; p];
            for r in 0..p {
                next[r] = shift * v[r] + sign * (0..p).map(|c| h[r][c] * v[c]).sum::<f64>();
            }
            lambda = v.iter().zip(&next).map(|(a, b)| a * b).sum::<f64>() / v.iter().map(|a| a * a).sum::<f64>();
            let n = norm(&next);
            v = next.iter().map(|x| x / n).collect();
        }
        lambda
    };
    let l = power(0.0, 1.0);
    let mu = l - power(l, -1.0);
    (mu, l)
}

fn c8_convergence() -> Outcome {
    let mut base = quadratic_fixture(10);
    base.run.rounds = 60;
    let sim = Simulation::new(&base).unwrap();
    let p = base.task.features;
    let rows: Vec<&[f64]> = sim.data().clients.iter().flat_map(|c| (0..c.len()).map(move |r| c.row(r))).collect();
    let mut h = vec![vec![0.0; p]; p];
    for x in &rows {
        for a in 0..p {
            for b in 0..p {
                h[a][b] += x[a] * x[b] / rows.len() as f64;
            }
        }
    }
    let (mu, l) = extreme_eigenvalues(&h);
    let lr = 1.0 / (4.0 * l);
    let bound = 1.0 - mu * lr + 0.05;

    let mut full = base.clone();
    full.run.lr = lr;
    let mut mini = full.clone();
    mini.run.batch_size = 8;
    let sub = |c: &SimConfig| -> Vec<f64> { run(c).metrics.iter().map(|m| m.mean_ter).collect() };
    let (sf, sm) = (sub(&full), sub(&mini));

    let ratio_ok = |s: &[f64], floor: f64| {
        s.windows(2)
            .take_while(|w| w[1] > 3.0 * floor)
            .map(|w| w[1] / w[0])
            .fold(0.0f64, f64::max)
    };
    let tail_mean_log = |s: &[f64], from: usize, to: usize| s[from..to].iter().map(|x| x.ln()).sum::<f64>() / (to - from) as f64;
    let mut tail: Vec<f64> = sm[40..].to_vec();
    tail.sort_by(f64::total_cmp);
    let floor = tail[tail.len() / 2];
    let worst_full = ratio_ok(&sf, 0.0);
    let worst_mini = ratio_ok(&sm, floor);
    // Plateau: the minibatch run stops contracting while the full-batch run
    // with the same step size keeps going.
    let mini_drop = tail_mean_log(&sm, 40, 60) - tail_mean_log(&sm, 20, 40);
    let full_drop = tail_mean_log(&sf, 40, 60) - tail_mean_log(&sf, 20, 40);
    let passed = worst_full <= bound && worst_mini <= bound && floor > 0.0 && mini_drop > 0.5f64.ln() && full_drop < 0.5f64.ln();
    outcome(
        passed,
        format!(
            "mu = {mu:.4}, L = {l:.4}, bound {bound:.4}; worst ratio full-batch {worst_full:.4}, minibatch {worst_mini:.4}; \
             minibatch floor {floor:.2e} (tail log change {mini_drop:.3} vs full-batch {full_drop:.3})"
        ),
    )
}

#[derive(Default)]
struct Robustness {
    ter_gap: Vec<f64>,
    dfedavg_margin: Vec<f64>,
    byz_accept_after_2: f64,
}

fn c9_robustness() -> Outcome {
    let mut r = Robustness::default();
    for &frac in &[0.3, 0.5] {
        for &seed in &FIXTURE_SEEDS {
            let sg = run(&robustness_fixture(AggregatorKind::Sketchguard, frac, seed));
            let bal = run(&robustness_fixture(AggregatorKind::Balance, frac, seed));
            r.ter_gap.push((sg.final_ter() - bal.final_ter()).abs());
            for m in sg.metrics.iter().skip(2) {
                r.byz_accept_after_2 = r.byz_accept_after_2.max(m.byz_accept_frac);
            }
            if frac == 0.5 {
                let fa = run(&robustness_fixture(AggregatorKind::Dfedavg, frac, seed));
                r.dfedavg_margin.push(fa.final_ter() - sg.final_ter());
            }
        }
    }
    let gap = 100.0 * r.ter_gap.iter().sum::<f64>() / r.ter_gap.len() as f64;
    let margin = 100.0 * r.dfedavg_margin.iter().sum::<f64>() / r.dfedavg_margin.len() as f64;
    let min_margin = 100.0 * r.dfedavg_margin.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        gap <= 1.0 && min_margin >= 10.0 && r.byz_accept_after_2 < 0.05,
        format!(
            "(a) mean |TER gap| {gap:.3} pp; (b) D-FedAvg minus SketchGuard at 50%: mean {margin:.1} pp, min {min_margin:.1} pp; \
             (c) max Byzantine-accepted fraction from round 2 on {:.3}",
            r.byz_accept_after_2
        ),
    )
}

fn c10_verification() -> Outcome {
    let mut removed_all = true;
    let (mut slots, mut failures) = (0, 0);
    let mut degrade = Vec::new();
    for &seed in &FIXTURE_SEEDS {
        let mut on = robustness_fixture(AggregatorKind::Sketchguard, 0.5, seed);
        on.attack.consistent_sketch = false;
        let mut off = on.clone();
        off.aggregator.verify = false;
        let ron = run(&on);
        for m in &ron.metrics {
            for s in m.nodes.iter().filter(|s| !s.byzantine) {
                slots += s.byz_fetched;
                failures += s.verify_failures;
                removed_all &= s.verify_failures == s.byz_fetched && s.byz_aggregated == 0;
            }
        }
        degrade.push(run(&off).final_ter() - ron.final_ter());
    }
    let mean = 100.0 * degrade.iter().sum::<f64>() / degrade.len() as f64;
    outcome(
        removed_all && slots > 0 && mean > 2.0,
        format!("{failures}/{slots} fetched mismatched models rejected; disabling verification costs {mean:.1} pp TER"),
    )
}

fn c11_determinism() -> Outcome {
    let csv = |threads: usize| {
        let mut c = robustness_fixture(AggregatorKind::Sketchguard, 0.5, FIXTURE_SEEDS[0]);
        c.run.threads = threads;
        let r = run(&c);
        metrics_csv("c11", FIXTURE_SEEDS[0], 0.5, &r.metrics).unwrap()
    };
    let (a, b) = (csv(1), csv(8));
    outcome(a == b, format!("{} bytes at 1 thread, {} bytes at 8 threads, identical: {}", a.len(), b.len(), a == b))
}

fn c12_sketch_size() -> Outcome {
    let mut spreads = Vec::new();
    for &seed in &FIXTURE_SEEDS {
        let ters: Vec<f64> = [64, 256, 1024]
            .iter()
            .map(|&k| {
                let mut c = robustness_fixture(AggregatorKind::Sketchguard, 0.5, seed);
                c.aggregator.sketch_size = Some(k);
                run(&c).final_ter()
            })
            .collect();
        let hi = ters.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = ters.iter().copied().fold(f64::INFINITY, f64::min);
        spreads.push(100.0 * (hi - lo));
    }
    let worst = spreads.iter().copied().fold(0.0f64, f64::max);
    outcome(worst <= 1.0, format!("max TER spread across k in {{64, 256, 1024}}: {worst:.3} pp"))
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "sketch linearity", Duration::from_secs(5), c1_linearity),
        (2, "distance preservation", Duration::from_secs(30), c2_distance_band),
        (3, "gamma_eff formula", Duration::from_secs(1), c3_gamma_eff),
        (4, "filter equivalence", Duration::from_secs(10), c4_filter_equivalence),
        (5, "gamma to infinity degeneracy", Duration::from_secs(5), c5_degeneracy),
        (6, "communication arithmetic", Duration::from_secs(1), c6_communication),
        (7, "screening cost independent of d", Duration::from_secs(60), c7_dim_independence),
        (8, "strongly convex convergence", Duration::from_secs(30), c8_convergence),
        (9, "desk-scale robustness", Duration::from_secs(300), c9_robustness),
        (10, "verification efficacy", Duration::from_secs(120), c10_verification),
        (11, "determinism across threads", Duration::from_secs(300), c11_determinism),
        (12, "sketch-size insensitivity", Duration::from_secs(600), c12_sketch_size),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let started = Instant::now();
        let out = check();
        let elapsed = started.elapsed();
        let passed = out.passed && elapsed < budget;
        if !passed {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.2}s of {}s]",
            if passed { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {}/12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
