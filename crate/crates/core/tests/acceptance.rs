//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line to
//! stdout (uncaptured) and then asserts.
//!
//! The heavy experiments (Two-Room, the correlation sweep and the OA
//! mini-sweep) take tens of minutes on a single core.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use interfere_core::agent::{greedify, greedy_action, IterationContext, TdVariant, Transition, TransitionBatch};
use interfere_core::env::EnvId;
use interfere_core::harness::run::ITERATIONS_FILE;
use interfere_core::harness::stats::Correlation;
use interfere_core::harness::sweep::{run_sweep, GridSpec, Preset, SweepResult};
use interfere_core::harness::tworoom::{run_tworoom, TwoRoomAgent, TwoRoomConfig};
use interfere_core::harness::{run_experiment, verify_run, Algorithm, ExperimentConfig, SummaryRecord, Variant};
use interfere_core::metrics::{
    exact_update_interference_oracle, interference_across_iterations, iteration_degradation, iteration_interference,
    tail_expectation, taylor_alignment_check, update_interference, EnumerableMdp, Reservoir,
};
use interfere_core::nn::{grad_td_loss, NetworkParams, NetworkSpec};
use interfere_core::online_aware::OaConfig;

fn report(n: u32, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n:>2}: {} - {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(4)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn perturbed(p: &NetworkParams, rng: &mut ChaCha8Rng, scale: f64) -> NetworkParams {
    let v = p.as_flat().iter().map(|x| x + rng.random_range(-scale..scale)).collect();
    p.with_values(v).unwrap()
}

#[test]
fn criterion_01_gradient_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for draw in 0..20 {
        let hidden = if draw % 2 == 0 { 8 } else { 64 };
        let obs_dim = rng.random_range(2..7);
        let actions = rng.random_range(2..5);
        let batch = rng.random_range(1..17);
        let spec = NetworkSpec::mlp(obs_dim, &[hidden, hidden], actions).unwrap();
        let params = NetworkParams::init(&spec, rng.random());
        let states = Array2::from_shape_vec((batch, obs_dim), random_vec(&mut rng, batch * obs_dim, 1.0)).unwrap();
        let acts: Vec<usize> = (0..batch).map(|_| rng.random_range(0..actions)).collect();
        let targets = random_vec(&mut rng, batch, 2.0);
        // L(θ) = 1/(2B) Σ (y - Q(s, a))² with fixed targets y.
        let loss = |theta: &[f64]| {
            let q = params.with_values(theta.to_vec()).unwrap().forward_batch(states.view()).unwrap();
            (0..batch).map(|i| (targets[i] - q[[i, acts[i]]]).powi(2)).sum::<f64>() / (2.0 * batch as f64)
        };
        let q = params.forward_batch(states.view()).unwrap();
        let deltas: Vec<f64> = (0..batch).map(|i| targets[i] - q[[i, acts[i]]]).collect();
        let analytic: Vec<f64> = grad_td_loss(&params, states.view(), &acts, &deltas)
            .unwrap()
            .into_iter()
            .map(|d| -d)
            .collect();
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        // Along one coordinate the loss of a ReLU net is piecewise quadratic,
        // so central differences carry only round-off away from kinks.
        let h = 1e-4;
        let mut theta = params.as_flat().to_vec();
        for i in 0..theta.len() {
            let orig = theta[i];
            theta[i] = orig + h;
            let up = loss(&theta);
            theta[i] = orig - h;
            let down = loss(&theta);
            theta[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-6 * scale).max(1e-300);
            let rel = (fd - analytic[i]).abs() / denom;
            worst = worst.max(rel);
        }
    }
    let pass = worst < 1e-4;
    report(1, pass, &format!("max relative error {worst:.2e} over 20 draws (need < 1e-4)"));
    assert!(pass);
}

#[test]
fn criterion_02_squared_td_approximation_is_exact() {
    let mdp = EnumerableMdp::chain(5).unwrap();
    let spec = NetworkSpec::mlp(mdp.n_states(), &[16, 16], 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let d = vec![1.0 / mdp.n_pairs() as f64; mdp.n_pairs()];
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let before = NetworkParams::init(&spec, rng.random());
        let after = perturbed(&before, &mut rng, 0.05);
        let ctx = IterationContext::new(0, &perturbed(&before, &mut rng, 0.1), 0.9, 0.1);
        let support: Vec<Transition> = mdp.support(&d).unwrap().into_iter().map(|(t, _)| t).collect();
        let batch = TransitionBatch::from_transitions(&support).unwrap();
        let sampled = update_interference(&before, &after, &ctx, &batch, TdVariant::Target).unwrap();
        let exact = exact_update_interference_oracle(&mdp, &before, &after, &ctx, &d, TdVariant::Target).unwrap();
        worst = worst.max((sampled - exact).abs());
    }
    let pass = worst <= 1e-10;
    report(2, pass, &format!("max |approx - oracle| = {worst:.2e} over 50 parameter pairs (need <= 1e-10)"));
    assert!(pass);
}

#[test]
fn criterion_03_taylor_error_is_second_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut ratios = Vec::new();
    let mut degenerate = 0;
    let mut i = 0;
    while ratios.len() < 20 {
        i += 1;
        let spec = NetworkSpec::mlp(3, &[8, 8], 2).unwrap();
        let params = NetworkParams::init(&spec, rng.random());
        let ctx = IterationContext::new(0, &perturbed(&params, &mut rng, 0.1), 0.9, 0.1);
        let mut transition = || Transition {
            s: random_vec(&mut rng, 3, 1.0),
            a: rng.random_range(0..2),
            r: rng.random_range(-1.0..1.0),
            s_next: random_vec(&mut rng, 3, 1.0),
            terminal: false,
        };
        let (update, probe) = (transition(), transition());
        let variant = if i % 2 == 0 { TdVariant::Target } else { TdVariant::NoTarget };
        let err = |alpha: f64| {
            let c = taylor_alignment_check(&params, &ctx, &update, &probe, alpha, variant).unwrap();
            (c.exact_change - c.first_order).abs()
        };
        let (big, small) = (err(1e-3), err(5e-4));
        // No second-order term at all (e.g. the two transitions share no
        // active path): nothing to shrink, so draw again.
        if big == 0.0 {
            degenerate += 1;
            continue;
        }
        ratios.push(big / small);
    }
    let inside = ratios.iter().filter(|r| (3.0..=5.0).contains(*r)).count();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pass = inside == ratios.len();
    report(3, pass, &format!("{inside}/20 error ratios in [3, 5] (range {lo:.3}..{hi:.3}; {degenerate} draws with zero error skipped)"));
    assert!(pass);
}

#[test]
fn criterion_04_target_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut mismatches = 0;
    let mut checked = 0;
    for _ in 0..100 {
        let spec = NetworkSpec::mlp(4, &[16, 16], rng.random_range(2..6)).unwrap();
        let target = NetworkParams::init(&spec, rng.random());
        let ctx = IterationContext::new(0, &target, 0.99, 0.1);
        let states = Array2::from_shape_vec((100, 4), random_vec(&mut rng, 400, 3.0)).unwrap();
        let q = target.forward_batch(states.view()).unwrap();
        let (actions, values) = ctx.bootstrap(states.view()).unwrap();
        for (i, row) in q.rows().into_iter().enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pi = greedify(&target).action(&states.row(i).to_vec()).unwrap();
            checked += 1;
            if max != values[i] || max != row[pi] || pi != actions[i] || pi != greedy_action(row.as_slice().unwrap()) {
                mismatches += 1;
            }
        }
    }
    let pass = mismatches == 0 && checked == 10_000;
    report(4, pass, &format!("{mismatches} mismatches over {checked} states (need exact equality)"));
    assert!(pass);
}

#[test]
fn criterion_05_metric_unit_values() {
    let mut failures = Vec::new();
    let one_to_ten: Vec<f64> = (1..=10).map(f64::from).collect();
    let one_to_200: Vec<f64> = (1..=200).map(f64::from).collect();
    let checks: [(&str, f64, f64); 7] = [
        ("tail(1..10, 0.9)", tail_expectation(&one_to_ten, 0.9).unwrap(), 9.5),
        ("tail(constant 3.7)", tail_expectation(&[3.7; 9], 0.9).unwrap(), 3.7),
        ("across(1..200, window 200)", interference_across_iterations(&one_to_200, 200, 0.9).unwrap(), 190.0),
        ("degradation((10, 12), 11)", iteration_degradation(&[10.0, 12.0], 11.0).unwrap(), 1.0),
        ("degradation(constant)", iteration_degradation(&[5.0, 5.0], 5.0).unwrap(), 0.0),
        ("iteration interference (0, 2)", iteration_interference(&[0.0, 2.0]).unwrap(), 1.0),
        ("iteration interference zeros", iteration_interference(&[0.0; 4]).unwrap(), 0.0),
    ];
    for (name, got, want) in checks {
        if got != want {
            failures.push(format!("{name}: {got} != {want}"));
        }
    }
    if interference_across_iterations(&one_to_ten, 11, 0.9).is_ok() {
        failures.push("window longer than series accepted".into());
    }
    // Update Interference from per-transition errors (1, 1) -> (2, 0): a
    // one-output linear net with Q = w·s makes δ = r - w·s (terminal).
    // The hidden layer is the identity on nonnegative states.
    let spec = NetworkSpec::new(vec![2, 2, 1]).unwrap();
    let identity = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
    let with_head = |w: [f64; 2]| {
        let mut v = identity.to_vec();
        v.extend([w[0], w[1], 0.0]);
        NetworkParams::from_flat(&spec, v).unwrap()
    };
    let (before, after) = (with_head([0.0, 0.0]), with_head([-1.0, 1.0]));
    let ctx = IterationContext::new(0, &before, 0.99, 0.0);
    let t = |s: Vec<f64>| Transition { s: s.clone(), a: 0, r: 1.0, s_next: s, terminal: true };
    let batch = TransitionBatch::from_transitions(&[t(vec![1.0, 0.0]), t(vec![0.0, 1.0])]).unwrap();
    let ui = update_interference(&before, &after, &ctx, &batch, TdVariant::Target).unwrap();
    if ui != 1.0 {
        failures.push(format!("update interference (1,1)->(2,0): {ui} != 1"));
    }

    // Reservoir retention: capacity 10, N = 100 items, 2000 trials.
    let (capacity, n, trials) = (10usize, 100usize, 2000usize);
    let mut counts = vec![0usize; n];
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..trials {
        let mut r = Reservoir::new(capacity);
        for item in 0..n {
            r.insert(item, &mut rng);
        }
        for &item in r.items() {
            counts[item] += 1;
        }
    }
    let p = capacity as f64 / n as f64;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    let worst = counts
        .iter()
        .map(|&c| (c as f64 - trials as f64 * p).abs() / sigma)
        .fold(0.0, f64::max);
    if worst > 3.0 {
        failures.push(format!("reservoir retention deviates by {worst:.2} sigma"));
    }
    let pass = failures.is_empty();
    let detail = if pass {
        format!("all hand values exact; reservoir max deviation {worst:.2} sigma")
    } else {
        failures.join("; ")
    };
    report(5, pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_06_two_room_forgetting() {
    let (steps, post_window) = (60_000, 20_000);
    let mut neural_drops = Vec::new();
    let mut tile_devs = Vec::new();
    let mut tile_interference_zero = true;
    for seed in 0..5 {
        let neural = run_tworoom(&TwoRoomConfig::new(TwoRoomAgent::DqiTarget, steps, seed), None).unwrap();
        neural_drops.push(neural.max_relative_drop(post_window).unwrap_or(f64::NAN));
        let tile = run_tworoom(&TwoRoomConfig::new(TwoRoomAgent::TilecodeLinear, steps, seed), None).unwrap();
        tile_devs.push(tile.max_relative_deviation().unwrap_or(f64::NAN));
        let post = tile.post_switch_interference();
        tile_interference_zero &= !post.is_empty() && post.iter().all(|&v| v == 0.0);
    }
    let forgot = neural_drops.iter().filter(|&&d| d >= 0.5).count();
    let stable = tile_devs.iter().filter(|&&d| d <= 0.1).count();
    let pass = forgot >= 4 && stable == 5 && tile_interference_zero;
    report(
        6,
        pass,
        &format!(
            "DQI drop >= 50% in {forgot}/5 seeds (drops {}); tile within 10% in {stable}/5; \
             tile room-1 interference exactly 0 after switch: {tile_interference_zero}",
            neural_drops.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>().join(", ")
        ),
    );
    assert!(pass);
}

struct CorrelationSweep {
    dir: tempfile::TempDir,
    result: SweepResult,
}

fn correlation_sweep() -> &'static CorrelationSweep {
    static SWEEP: OnceLock<CorrelationSweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let configs = Preset::Correlation.grid(false).expand(5, 0).unwrap();
        assert_eq!(configs.len(), 20);
        let result = run_sweep(&configs, jobs(), dir.path()).unwrap();
        CorrelationSweep { dir, result }
    })
}

fn ok_rows(rows: &[SummaryRecord]) -> Vec<&SummaryRecord> {
    rows.iter()
        .filter(|r| r.status == "ok" && r.interference_across_iters.is_finite() && r.degradation.is_finite())
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn criterion_07_interference_correlates_with_degradation() {
    let sweep = correlation_sweep();
    let rows = ok_rows(&sweep.result.summaries);
    let x: Vec<f64> = rows.iter().map(|r| r.interference_across_iters).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.degradation).collect();
    let c = Correlation::from_pairs(&x, &y).unwrap();
    let rho = c.spearman.unwrap_or(f64::NAN);
    let pass = rho > 0.3;
    report(
        7,
        pass,
        &format!(
            "spearman {rho:.3}, pearson {:.3} over {} runs ({} failed) (need spearman > 0.3)",
            c.pearson.unwrap_or(f64::NAN),
            c.n,
            sweep.result.failures.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_larger_hidden_more_interference() {
    let sweep = correlation_sweep();
    let rows = ok_rows(&sweep.result.summaries);
    let at = |h: usize| median(rows.iter().filter(|r| r.hidden == h).map(|r| r.interference_across_iters).collect());
    let (m64, m256) = (at(64), at(256));
    let pass = m256 > m64;
    report(8, pass, &format!("median interference hidden 256 = {m256:.4e}, hidden 64 = {m64:.4e}"));
    assert!(pass);
}

fn oa_grid(iterations: usize) -> (GridSpec, GridSpec) {
    let base = serde_json::json!({
        "env": "acrobot", "hidden": 128, "buffer": 10000, "M": 100,
        "iterations": iterations, "window": 100, "measure_stride": 10
    });
    let mut dqi = base.clone();
    dqi["variant"] = "dqi-no-target".into();
    let mut oa = base;
    oa["variant"] = "oa-no-target".into();
    let points: Vec<OaConfig> = [(1e-2, 1.0), (1e-2, 0.3), (1e-3, 1.0), (1e-3, 0.3)]
        .into_iter()
        .map(|(alpha_inner, alpha_meta)| OaConfig {
            alpha_inner,
            alpha_meta,
            ..OaConfig::default()
        })
        .collect();
    let grid = |base: serde_json::Value, axes: serde_json::Value| {
        GridSpec::from_json(&serde_json::json!({"base": base, "axes": axes}).to_string()).unwrap()
    };
    (
        grid(dqi, serde_json::json!({"step_size": [1e-3, 3e-4]})),
        grid(oa, serde_json::json!({"oa": points})),
    )
}

/// Best configuration (by mean last-window return across seeds) of a sweep,
/// as per-seed rows.
fn best_by_return(rows: &[SummaryRecord], seeds: usize) -> Vec<&SummaryRecord> {
    let score = |r: &SummaryRecord| if r.mean_return_last.is_finite() { r.mean_return_last } else { f64::NEG_INFINITY };
    rows.chunks(seeds)
        .max_by(|a, b| {
            let mean = |c: &[SummaryRecord]| c.iter().map(score).sum::<f64>() / c.len() as f64;
            mean(a).total_cmp(&mean(b))
        })
        .unwrap()
        .iter()
        .collect()
}

fn list(rows: &[&SummaryRecord], f: impl Fn(&SummaryRecord) -> String) -> String {
    rows.iter().map(|r| f(r)).collect::<Vec<_>>().join(", ")
}

fn oa_comparison(iterations: usize, need: usize) -> (bool, String) {
    let seeds = 5;
    let (dqi_grid, oa_grid) = oa_grid(iterations);
    let dir = tempfile::tempdir().unwrap();
    let dqi = run_sweep(&dqi_grid.expand(seeds, 0).unwrap(), jobs(), &dir.path().join("dqi")).unwrap();
    let oa = run_sweep(&oa_grid.expand(seeds, 0).unwrap(), jobs(), &dir.path().join("oa")).unwrap();
    assert!(dqi.failures.is_empty() && oa.failures.is_empty());
    let base = best_by_return(&dqi.summaries, seeds);
    let best = best_by_return(&oa.summaries, seeds);
    let ret = |r: &SummaryRecord| if r.mean_return_last.is_finite() { r.mean_return_last } else { f64::NEG_INFINITY };
    let inter = |r: &SummaryRecord| {
        if r.interference_across_iters.is_finite() {
            r.interference_across_iters
        } else {
            f64::INFINITY
        }
    };
    let wins = base
        .iter()
        .zip(&best)
        .filter(|(b, o)| ret(o) > ret(b) && inter(o) < inter(b))
        .count();
    let detail = format!(
        "{iterations} iterations: OA (alpha_inner {}, alpha_meta {}) beats DQI (step {}) on both return and \
         interference in {wins}/5 seeds (need {need}); returns OA [{}] vs DQI [{}]; interference OA [{}] vs DQI [{}]",
        best[0].oa_alpha_inner,
        best[0].oa_alpha_meta,
        base[0].step_size,
        list(&best, |r| format!("{:.1}", r.mean_return_last)),
        list(&base, |r| format!("{:.1}", r.mean_return_last)),
        list(&best, |r| format!("{:.3e}", r.interference_across_iters)),
        list(&base, |r| format!("{:.3e}", r.interference_across_iters)),
    );
    (wins >= need, detail)
}

#[test]
fn criterion_09_online_aware_mitigates_interference() {
    let (pass, detail) = oa_comparison(200, 3);
    report(9, pass, &detail);
    assert!(pass);
}

#[test]
#[ignore = "several hours on one core"]
fn criterion_09_online_aware_full_length() {
    let (pass, detail) = oa_comparison(400, 4);
    report(9, pass, &detail);
    assert!(pass);
}

fn tiny_config(variant: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(EnvId::Cartpole, variant.parse().unwrap(), 16, 500, 50);
    cfg.iterations = 6;
    cfg.window = 3;
    cfg.eval_rollouts = 3;
    cfg.eval_buffer = 100;
    cfg.seed = 9;
    cfg
}

/// Iteration rows with the run-identifying columns dropped.
fn trajectory(cfg: &ExperimentConfig) -> Vec<(u64, u64, u64, u64, String)> {
    run_experiment(cfg, None)
        .unwrap()
        .records
        .into_iter()
        .map(|r| {
            (
                r.return_disc.to_bits(),
                r.return_undisc.to_bits(),
                r.iter_interference.to_bits(),
                r.iter_degradation.to_bits(),
                r.status,
            )
        })
        .collect()
}

#[test]
fn criterion_10_baseline_sanity() {
    let mut failures = Vec::new();
    let dqi = tiny_config("dqi-no-target");
    let mut ga = tiny_config("ga-no-target");
    ga.ga.lambda = 0.0;
    ga.ga.half_batch = dqi.batch_size / 2;
    let mut large = tiny_config("large-no-target");
    large.large_factor = 1;
    assert_eq!(ga.variant.algorithm, Algorithm::Ga);
    assert_eq!(large.variant, Variant { algorithm: Algorithm::Large, td: TdVariant::NoTarget });
    let reference = trajectory(&dqi);
    if trajectory(&ga) != reference {
        failures.push("GA with lambda 0 differs from DQI".to_string());
    }
    if trajectory(&large) != reference {
        failures.push("Large with factor 1 differs from DQI".to_string());
    }

    // Quadratic model: f_i(θ) = ½ θᵀA_iθ + b_iᵀθ, ∇(g₁ᵀg₂) = A₁g₂ + A₂g₁.
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let dim = 6;
    let sym = |rng: &mut ChaCha8Rng| {
        let m = random_vec(rng, dim * dim, 1.0);
        (0..dim * dim).map(|k| (m[k] + m[(k % dim) * dim + k / dim]) / 2.0).collect::<Vec<f64>>()
    };
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (a1, a2) = (sym(&mut rng), sym(&mut rng));
        let (b1, b2) = (random_vec(&mut rng, dim, 1.0), random_vec(&mut rng, dim, 1.0));
        let theta = random_vec(&mut rng, dim, 1.0);
        let grad = |a: &[f64], b: &[f64], x: &[f64]| -> Vec<f64> {
            (0..dim).map(|i| (0..dim).map(|j| a[i * dim + j] * x[j]).sum::<f64>() + b[i]).collect()
        };
        let (g1, g2) = (grad(&a1, &b1, &theta), grad(&a2, &b2, &theta));
        let mv = |a: &[f64], v: &[f64]| -> Vec<f64> { (0..dim).map(|i| (0..dim).map(|j| a[i * dim + j] * v[j]).sum()).collect() };
        let want: Vec<f64> = mv(&a1, &g2).iter().zip(mv(&a2, &g1)).map(|(x, y)| x + y).collect();
        let got = interfere_core::online_aware::alignment_gradient(
            &theta,
            |x: &[f64]| Ok(grad(&a1, &b1, x)),
            |x: &[f64]| Ok(grad(&a2, &b2, x)),
            1e-4,
        )
        .unwrap();
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    if worst > 1e-6 {
        failures.push(format!("HVP regularizer gradient error {worst:.2e} > 1e-6"));
    }
    let pass = failures.is_empty();
    let detail = if pass {
        format!("GA(lambda 0) and Large(factor 1) bit-identical to DQI; quadratic oracle max error {worst:.2e}")
    } else {
        failures.join("; ")
    };
    report(10, pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_11_determinism_and_verification() {
    let mut failures = Vec::new();
    let cfg = tiny_config("dqi-target");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&cfg, Some(a.path())).unwrap();
    let rb = run_experiment(&cfg, Some(b.path())).unwrap();
    let bytes = |dir: &Path| std::fs::read(dir.join(ITERATIONS_FILE)).unwrap();
    if bytes(ra.dir.as_deref().unwrap()) != bytes(rb.dir.as_deref().unwrap()) {
        failures.push("repeated run produced different iterations.csv".to_string());
    }
    let sweep = correlation_sweep();
    let mut verified = 0;
    for row in &sweep.result.summaries {
        match verify_run(&sweep.dir.path().join(&row.run_id)) {
            Ok(_) => verified += 1,
            Err(e) => failures.push(format!("verify {}: {e}", row.run_id)),
        }
    }
    if verified != 20 {
        failures.push(format!("only {verified}/20 sweep runs verified"));
    }
    let pass = failures.is_empty();
    let detail = if pass {
        format!("byte-identical iterations.csv across repeated runs; verify ok for {verified}/20 sweep runs")
    } else {
        failures.join("; ")
    };
    report(11, pass, &detail);
    assert!(pass);
}
