//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! verdicts are always printed; exits non-zero when a criterion fails that is
//! not listed in `KNOWN_FAILING`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rcrl_core::agents::nn::{max_gradient_error, DenseNet, Params};
use rcrl_core::agents::{AcConfig, ActorCritic, Batch, ConditioningMode, Support};
use rcrl_core::mdp::{self, Action, RewardComponents, StateVec};
use rcrl_core::oracle::{value_iteration, value_iteration_with, DEFAULT_TOL};
use rcrl_core::replay::Transition;
use rcrl_core::reward::{
    compose, make_prc_pool, pool_from_deltas, sample_mixture_ids, sample_perturbation, MixtureConfig, ParamPool,
    Parameterization, PerturbSpec, RewardNormalizer, RunningStat,
};
use rcrl_harness::agent::{Agent, Checkpoint, Learner};
use rcrl_harness::baseline::run_baseline;
use rcrl_harness::config::ExperimentConfig;
use rcrl_harness::protocols::{run_decomposition, run_transfer_experiment, run_zero_shot_sweep, REGIMES};
use rcrl_harness::runlog::RunLog;
use rcrl_harness::setup::Setup;
use rcrl_harness::stats::{bootstrap_ci, mean, normalize_score, ScoreNorm, SignCounts};
use rcrl_harness::train::run_training_with;

/// Criteria expected to fail; see the README for why.
const KNOWN_FAILING: &[u32] = &[3];

const Q_TOL: f64 = 0.05;
const SECONDS_PER_SEED: f64 = 60.0;
const P_MAX: f64 = 0.05;
const VELOCITY_TOL: f64 = 0.5;
const FINETUNE_BUDGET: u64 = 50_000;
const PROJECTION_TOL: f64 = 1e-12;
const GRADIENT_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const DRAWS: usize = 1_000_000;
const LOG_MEAN_TOL: f64 = 0.02;
const ALPHA_REL_TOL: f64 = 0.02;
const CI_WIDTH_REL_TOL: f64 = 0.2;
const DECOMPOSITION_STEPS: usize = 2000;

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"));
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn tabular(agent: &Agent) -> &rcrl_core::agents::TabularAgent {
    match &agent.learner {
        Learner::Tabular(t) => t,
        Learner::ActorCritic(_) => panic!("expected a tabular learner"),
    }
}

fn final_nominal(log: &RunLog) -> f64 {
    log.last().expect("run logged evaluations").normalized
}

/// Trained speed-chain agents reused by several criteria.
struct SpeedChainRuns {
    setup: Setup,
    conditioned: Vec<Agent>,
    conditioned_scores: Vec<f64>,
}

fn counterfactual_q(shared: &mut Option<SpeedChainRuns>) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    let mut failures = Vec::new();
    for env in [mdp::SPEED_CHAIN, mdp::GRID_ZONE] {
        let cfg = config(env);
        let mut setup = Setup::new(&cfg).unwrap();
        let model = mdp::discrete_model(env).unwrap();
        let mut agents = Vec::new();
        let mut scores = Vec::new();
        for &seed in &cfg.seeds {
            let t0 = Instant::now();
            let run = run_training_with(&cfg, &mut setup, "rcrl", seed).unwrap();
            slowest = slowest.max(t0.elapsed().as_secs_f64());
            let t = tabular(&run.agent);
            let mut seed_worst: f64 = 0.0;
            for p in setup.pool.iter() {
                let exact = value_iteration(model.as_ref(), p, t.q.gamma, DEFAULT_TOL).unwrap();
                seed_worst = seed_worst.max(t.max_error(p.id, exact.values()).unwrap());
            }
            if seed_worst >= Q_TOL {
                failures.push(format!("{env}/{seed}"));
            }
            worst = worst.max(seed_worst);
            scores.push(final_nominal(&run.log));
            agents.push(run.agent);
        }
        if env == mdp::SPEED_CHAIN {
            *shared = Some(SpeedChainRuns {
                setup,
                conditioned: agents,
                conditioned_scores: scores,
            });
        }
    }
    Verdict {
        id: 1,
        name: "off-policy counterfactual learning",
        pass: failures.is_empty() && slowest < SECONDS_PER_SEED,
        detail: format!(
            "max |Q - Q*| {worst:.2e} (tol {Q_TOL}), failing seeds {failures:?}, slowest seed {slowest:.1}s (limit {SECONDS_PER_SEED}s)"
        ),
    }
}

fn reduction() -> Verdict {
    let mut mismatches = Vec::new();
    let mut cases = 0;
    for (name, steps) in [("speed-chain", 20_000), ("grid-zone", 20_000), ("point-mass", 3_000)] {
        let mut cfg = config(name);
        cfg.steps = steps;
        cfg.eval_interval = steps / 4;
        cfg.mixture.alpha = 1.0;
        cfg.conditioning = ConditioningMode::None;
        let mut setup = Setup::new(&cfg).unwrap();
        for seed in [0, 1] {
            cases += 1;
            let looped = run_training_with(&cfg, &mut setup, "reduction", seed).unwrap();
            let plain = run_baseline(&cfg, &mut setup, "reduction", seed).unwrap();
            if looped.log.to_jsonl().unwrap() != plain.log.to_jsonl().unwrap() {
                mismatches.push(format!("{name}/{seed}"));
            }
        }
    }
    Verdict {
        id: 2,
        name: "reduction to the unconditioned baseline",
        pass: mismatches.is_empty(),
        detail: format!("{cases} (config, seed) pairs compared bitwise, mismatches {mismatches:?}"),
    }
}

fn conditioning_necessity(shared: &SpeedChainRuns, unconditioned: &mut Vec<Agent>) -> Verdict {
    let mut cfg = config("speed-chain");
    cfg.conditioning = ConditioningMode::None;
    let mut setup = Setup::new(&cfg).unwrap();
    let model = mdp::discrete_model(mdp::SPEED_CHAIN).unwrap();
    let pool = setup.pool.clone();
    let alpha = cfg.mixture.alpha;
    let others = (pool.len() - 1) as f64;
    let averaged = |c: &[f64]| -> rcrl_core::Result<f64> {
        let mut r = 0.0;
        for p in pool.iter() {
            let w = if p.id == pool.nominal_id() { alpha } else { (1.0 - alpha) / others };
            r += w * compose(p, c)?;
        }
        Ok(r)
    };
    let mut worst: f64 = 0.0;
    let mut scores = Vec::new();
    for &seed in &cfg.seeds {
        let run = run_training_with(&cfg, &mut setup, "unconditioned", seed).unwrap();
        let t = tabular(&run.agent);
        let exact = value_iteration_with(model.as_ref(), &averaged, t.q.gamma, DEFAULT_TOL).unwrap();
        worst = worst.max(t.max_error(pool.nominal_id(), exact.values()).unwrap());
        scores.push(final_nominal(&run.log));
        unconditioned.push(run.agent);
    }
    let signs = SignCounts::paired(&shared.conditioned_scores, &scores);
    let p = signs.p_value();
    let converges = worst < Q_TOL;
    let below = p < P_MAX;
    Verdict {
        id: 3,
        name: "conditioning necessity",
        pass: converges && below,
        detail: format!(
            "mixture-averaged Q* error {worst:.2e} ({}), nominal score conditioned {:.3} vs unconditioned {:.3}, \
             wins/losses/ties {}/{}/{}, sign test p={p:.3} ({})",
            if converges { "converges" } else { "does not converge" },
            mean(&shared.conditioned_scores),
            mean(&scores),
            signs.wins,
            signs.losses,
            signs.ties,
            if below { "strictly below" } else { "not strictly below" },
        ),
    }
}

fn steerability(shared: &mut SpeedChainRuns, unconditioned: &[Agent]) -> Verdict {
    let cfg = config("speed-chain");
    let setup = &mut shared.setup;
    let mut bad = Vec::new();
    let mut widest: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for (i, &seed) in cfg.seeds.iter().enumerate() {
        let ckpt = Checkpoint::new(&setup.env, shared.conditioned[i].clone(), setup.pool.clone());
        let rows = run_zero_shot_sweep(&ckpt, setup, cfg.eval_episodes, seed).unwrap();
        let mut by_target: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| {
                let target: f64 = r.task.trim_start_matches("speed-").parse().expect("speed-<target> task names");
                (target, r.behavior)
            })
            .collect();
        by_target.sort_by(|a, b| a.0.total_cmp(&b.0));
        let monotone = by_target.windows(2).all(|w| w[1].1 >= w[0].1);
        let gap = by_target.iter().map(|(t, v)| (t - v).abs()).fold(0.0, f64::max);
        worst_gap = worst_gap.max(gap);
        if !monotone || gap > VELOCITY_TOL {
            bad.push(seed);
        }
        let plain = Checkpoint::new(&setup.env, unconditioned[i].clone(), setup.pool.clone());
        let rows = run_zero_shot_sweep(&plain, setup, cfg.eval_episodes, seed).unwrap();
        let lo = rows.iter().map(|r| r.behavior).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.behavior).fold(f64::NEG_INFINITY, f64::max);
        widest = widest.max(hi - lo);
    }
    Verdict {
        id: 4,
        name: "zero-shot steerability",
        pass: bad.is_empty() && widest == 0.0,
        detail: format!(
            "worst |velocity - target| {worst_gap:.3} (tol {VELOCITY_TOL}), failing seeds {bad:?}, \
             unconditioned velocity range {widest:.3}"
        ),
    }
}

fn transfer() -> Verdict {
    let cfg = config("speed-chain");
    let setup = Setup::new(&cfg).unwrap();
    let source = setup.task_name(cfg.transfer.source.expect("config names a source")).to_string();
    let variant = format!("rcrl-from-{source}");
    let mut successes = 0;
    let mut steps_needed = Vec::new();
    for &seed in &cfg.seeds {
        let log = run_transfer_experiment(&cfg, seed).unwrap();
        let finals = log.finals();
        let scratch = finals.iter().find(|r| r.variant == "scratch").expect("scratch run").normalized;
        let reached = log
            .records()
            .iter()
            .filter(|r| r.variant == variant && r.step <= FINETUNE_BUDGET)
            .find(|r| r.normalized >= scratch)
            .map(|r| r.step);
        if let Some(step) = reached {
            successes += 1;
            steps_needed.push(step);
        }
    }
    let trials = cfg.seeds.len() as u64;
    let p = rcrl_harness::stats::sign_test(successes, trials);
    Verdict {
        id: 5,
        name: "transfer",
        pass: p < P_MAX,
        detail: format!(
            "{successes}/{trials} seeds reach the scratch score within {FINETUNE_BUDGET} finetune steps \
             (steps {steps_needed:?}), sign test p={p:.4}"
        ),
    }
}

fn decomposition() -> Verdict {
    let mut cfg = config("speed-chain");
    cfg.tabular.warmup = 0;
    cfg.decomposition.steps = Some(DECOMPOSITION_STEPS);
    cfg.eval_interval = DECOMPOSITION_STEPS / 4;
    let mut scores: Vec<Vec<f64>> = vec![Vec::new(); REGIMES.len()];
    for &seed in &cfg.seeds {
        for (i, (_, run)) in run_decomposition(&cfg, seed).unwrap().into_iter().enumerate() {
            scores[i].push(final_nominal(&run.log));
        }
    }
    let idx = |name: &str| REGIMES.iter().position(|r| *r == name).unwrap();
    let means: Vec<f64> = scores.iter().map(|s| mean(s)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ok = true;
    let mut parts = Vec::new();
    for (hi, lo) in [("mt", "st+rcrl"), ("st+rcrl", "st"), ("mt", "st+expanded"), ("st+expanded", "st")] {
        let (a, b) = (&scores[idx(hi)], &scores[idx(lo)]);
        let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let ci = bootstrap_ci(&diffs, 2000, 0.95, &mut rng).unwrap();
        let ordered = means[idx(hi)] >= means[idx(lo)];
        let status = if ci.high < 0.0 {
            ok = false;
            "reversed"
        } else if ci.low > 0.0 {
            "confirmed"
        } else {
            "inconclusive"
        };
        ok &= ordered;
        parts.push(format!("{hi}-{lo} {:+.3} [{:+.3}, {:+.3}] {status}", ci.mean, ci.low, ci.high));
    }
    let shown: Vec<String> = REGIMES.iter().zip(&means).map(|(r, m)| format!("{r} {m:.3}")).collect();
    Verdict {
        id: 6,
        name: "decomposition ordering",
        pass: ok,
        detail: format!("means at {DECOMPOSITION_STEPS} steps: {}; gaps: {}", shown.join(", "), parts.join("; ")),
    }
}

fn brute_force_projection(s: &Support, positions: &[f64], probs: &[f64], r: f64, done: bool, gamma: f64) -> Vec<f64> {
    let g = if done { 0.0 } else { gamma };
    (0..s.atoms)
        .map(|j| {
            positions
                .iter()
                .zip(probs)
                .map(|(x, p)| {
                    let b = (r + g * x).clamp(s.v_min, s.v_max);
                    p * (1.0 - (b - s.atom(j)).abs() / s.spacing()).max(0.0)
                })
                .sum()
        })
        .collect()
}

fn gradient_batch(rng: &mut ChaCha8Rng, pool: &ParamPool) -> Batch {
    let mut ts = Vec::new();
    let mut params = Vec::new();
    for i in 0..6 {
        let mut v = || StateVec {
            values: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            index: None,
        };
        let (state, next_state) = (v(), v());
        ts.push(Transition {
            state,
            action: Action::Continuous(vec![rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)]),
            components: RewardComponents(vec![0.0, 0.0]),
            next_state,
            done: rng.random::<f64>() < 0.2,
        });
        params.push(pool.get(i % pool.len()).unwrap().clone());
    }
    let rewards = (0..ts.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let refs: Vec<&Transition> = ts.iter().collect();
    Batch::new(&refs, params, rewards).unwrap()
}

fn gradient_error() -> f64 {
    let nominal = Parameterization::linear(vec![1.0, 0.25]).unwrap();
    let pool = pool_from_deltas(&nominal, vec![vec![2.0, 0.5], vec![0.5, 3.0], vec![1.5, 1.5]]).unwrap();
    let mut worst: f64 = 0.0;
    for mode in ConditioningMode::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let cfg = AcConfig {
            mode,
            pool_size: pool.len(),
            critic_hidden: vec![8, 8],
            actor_hidden: vec![6, 6],
            support: Support::new(-3.0, 3.0, 13).unwrap(),
            ..AcConfig::default()
        };
        let mut ac = ActorCritic::new(cfg, &mut rng).unwrap();
        ac.critic = DenseNet::new(&ac.critic.sizes.clone(), &mut rng).unwrap();
        ac.actor = DenseNet::new(&ac.actor.sizes.clone(), &mut rng).unwrap();
        for _ in 0..5 {
            let b = gradient_batch(&mut rng, &pool);
            let targets = ac.critic_targets(&b).unwrap();
            let g = ac.critic_gradients(&b, &targets).unwrap();
            let mut probe = ac.clone();
            worst = worst.max(
                max_gradient_error(&ac.critic.flat(), &g.critic.flat(), FD_STEP, &mut |p| {
                    probe.critic.set_flat(p)?;
                    Ok(probe.critic_gradients(&b, &targets)?.loss)
                })
                .unwrap(),
            );
            if let (Some(e), Some(ge)) = (&ac.embeddings, &g.embeddings) {
                let mut probe = ac.clone();
                worst = worst.max(
                    max_gradient_error(&e.flat(), &ge.flat(), FD_STEP, &mut |p| {
                        probe.embeddings.as_mut().unwrap().set_flat(p)?;
                        Ok(probe.critic_gradients(&b, &targets)?.loss)
                    })
                    .unwrap(),
                );
            }
            let (_, ga) = ac.actor_gradients(&b).unwrap();
            let mut probe = ac.clone();
            worst = worst.max(
                max_gradient_error(&ac.actor.flat(), &ga.flat(), FD_STEP, &mut |p| {
                    probe.actor.set_flat(p)?;
                    Ok(probe.actor_gradients(&b)?.0)
                })
                .unwrap(),
            );
        }
    }
    worst
}

fn numerics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut projection: f64 = 0.0;
    for _ in 0..1000 {
        let lo = rng.random_range(-10.0..0.0);
        let s = Support::new(lo, lo + rng.random_range(0.5..20.0), rng.random_range(2..60)).unwrap();
        let n = rng.random_range(1..40);
        let positions: Vec<f64> = (0..n).map(|_| rng.random_range(-15.0..15.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let (r, gamma, done) = (rng.random_range(-5.0..5.0), rng.random_range(0.0..1.0), rng.random::<f64>() < 0.1);
        let got = s.project(&positions, &probs, r, done, gamma);
        let want = brute_force_projection(&s, &positions, &probs, r, done, gamma);
        for (a, b) in got.iter().zip(&want) {
            projection = projection.max((a - b).abs());
        }
    }
    let gradients = gradient_error();
    let mut shared = RewardNormalizer::new(4);
    let mut alone = [RunningStat::default(); 4];
    let mut exact = true;
    for _ in 0..10_000 {
        let id = rng.random_range(0..4);
        let r = rng.random_range(-3.0..3.0) * (id + 1) as f64;
        let got = shared.normalize(id, r).unwrap();
        alone[id].push(r);
        exact &= got == r / alone[id].scale();
    }
    exact &= (0..4).all(|id| shared.stats(id).unwrap() == &alone[id]);
    Verdict {
        id: 7,
        name: "numerical correctness",
        pass: projection < PROJECTION_TOL && gradients < GRADIENT_TOL && exact,
        detail: format!(
            "projection max deviation {projection:.1e} over 1000 targets (tol {PROJECTION_TOL:.0e}), \
             gradient relative error {gradients:.1e} (tol {GRADIENT_TOL:.0e}), normalizer streams {}",
            if exact { "identical" } else { "differ" }
        ),
    }
}

fn sampler_laws() -> Verdict {
    let spec = PerturbSpec {
        stratified: false,
        ..PerturbSpec::log_uniform(16.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut lo, mut hi, mut log_sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for _ in 0..DRAWS {
        let d = sample_perturbation(&mut rng, &spec, 1).unwrap()[0];
        lo = lo.min(d);
        hi = hi.max(d);
        log_sum += d.ln();
    }
    let log_mean = log_sum / DRAWS as f64;
    let bounded = lo >= 0.25 && hi <= 4.0;
    let nominal = Parameterization::linear(vec![1.0, 0.25]).unwrap();
    let pool = make_prc_pool(&nominal, 16, &PerturbSpec::default(), 0).unwrap();
    let mut fractions = Vec::new();
    let mut fraction_ok = true;
    for alpha in [0.1, 0.5, 0.9] {
        let cfg = MixtureConfig::finite(alpha, pool.clone()).unwrap();
        let mut hits = 0usize;
        for _ in 0..DRAWS / 1000 {
            hits += sample_mixture_ids(&mut rng, &cfg, 1000)
                .unwrap()
                .iter()
                .filter(|id| **id == pool.nominal_id())
                .count();
        }
        let f = hits as f64 / DRAWS as f64;
        fraction_ok &= (f - alpha).abs() <= ALPHA_REL_TOL * alpha;
        fractions.push(format!("{alpha}: {f:.4}"));
    }
    Verdict {
        id: 8,
        name: "sampler laws",
        pass: bounded && log_mean.abs() < LOG_MEAN_TOL && fraction_ok,
        detail: format!(
            "delta range [{lo:.4}, {hi:.4}] over {DRAWS} draws, mean log delta {log_mean:+.4} (tol {LOG_MEAN_TOL}), \
             nominal fractions {{{}}} (tol {ALPHA_REL_TOL} relative)",
            fractions.join(", ")
        ),
    }
}

fn scoring() -> Verdict {
    // (task, random, optimal) rows of the benchmark normalization table.
    let rows = [
        ("dog-stand", 0.0, 1000.0),
        ("dog-run", 0.0, 1000.0),
        ("Hopper-v4", 18.791, 3226.0),
        ("HalfCheetah-v4", -289.415, 10574.0),
        ("reach-v0", -5024.0, 12000.0),
        ("maze-v0", 106.233, 1200.0),
    ];
    let mut ok = true;
    for (_, random, optimal) in rows {
        let norm = ScoreNorm::new(random, optimal).unwrap();
        ok &= normalize_score(optimal, norm).unwrap() == 1.0;
        ok &= normalize_score(random, norm).unwrap() == 0.0;
        let mid = 0.5 * (random + optimal);
        ok &= (normalize_score(mid, norm).unwrap() - 0.5).abs() < 1e-12;
    }
    let dog = ScoreNorm::new(0.0, 1000.0).unwrap();
    ok &= normalize_score(1000.0, dog).unwrap() == 1.0 && normalize_score(0.0, dog).unwrap() == 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let normal = rand_distr::Normal::new(3.0, 2.0).unwrap();
    let samples: Vec<f64> = (0..1000).map(|_| rng.sample(normal)).collect();
    let m = mean(&samples);
    let sd = (samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64).sqrt();
    let clt = 2.0 * 1.959_963_985 * sd / (samples.len() as f64).sqrt();
    let ci = bootstrap_ci(&samples, 2000, 0.95, &mut rng).unwrap();
    let rel = (ci.width() - clt).abs() / clt;
    Verdict {
        id: 9,
        name: "scoring and aggregation",
        pass: ok && rel < CI_WIDTH_REL_TOL,
        detail: format!(
            "table rows {}, bootstrap width {:.4} vs CLT {clt:.4} ({:.1}% off, tol {:.0}%)",
            if ok { "reproduced" } else { "mismatch" },
            ci.width(),
            100.0 * rel,
            100.0 * CI_WIDTH_REL_TOL
        ),
    }
}

fn determinism() -> Verdict {
    let mut differ = Vec::new();
    let mut cases = 0;
    for (name, steps, alpha) in [("speed-chain", 20_000, 0.5), ("grid-zone", 20_000, 0.5), ("point-mass", 3_000, 0.5)] {
        let mut cfg = config(name);
        cfg.steps = steps;
        cfg.eval_interval = steps / 4;
        cfg.mixture.alpha = alpha;
        for seed in [0, 7] {
            cases += 1;
            let a = run_training_with(&cfg, &mut Setup::new(&cfg).unwrap(), "rcrl", seed).unwrap();
            let b = run_training_with(&cfg, &mut Setup::new(&cfg).unwrap(), "rcrl", seed).unwrap();
            if a.log.to_jsonl().unwrap() != b.log.to_jsonl().unwrap() || a.agent != b.agent {
                differ.push(format!("{name}/{seed}"));
            }
        }
    }
    let mut cfg = config("speed-chain");
    cfg.tabular.warmup = 0;
    cfg.decomposition.steps = Some(500);
    cfg.eval_interval = 250;
    let runs = |seed| -> Vec<String> {
        run_decomposition(&cfg, seed).unwrap().into_iter().map(|(_, r)| r.log.to_jsonl().unwrap()).collect()
    };
    cases += 1;
    if runs(3) != runs(3) {
        differ.push("decomposition/3".into());
    }
    Verdict {
        id: 10,
        name: "determinism",
        pass: differ.is_empty(),
        detail: format!("{cases} (config, seed) pairs replayed, differing {differ:?}"),
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut verdicts = Vec::new();
    let mut report = |v: Verdict| {
        let tag = match (v.pass, KNOWN_FAILING.contains(&v.id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {:>2} {:<40} {tag}: {}", v.id, v.name, v.detail);
        verdicts.push(v);
    };
    let mut shared = None;
    report(counterfactual_q(&mut shared));
    report(reduction());
    let mut shared = shared.expect("speed-chain runs");
    let mut unconditioned = Vec::new();
    report(conditioning_necessity(&shared, &mut unconditioned));
    report(steerability(&mut shared, &unconditioned));
    report(transfer());
    report(decomposition());
    report(numerics());
    report(sampler_laws());
    report(scoring());
    report(determinism());
    let unexpected: Vec<u32> = verdicts
        .iter()
        .filter(|v| !v.pass && !KNOWN_FAILING.contains(&v.id))
        .map(|v| v.id)
        .collect();
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!(
        "acceptance: {passed}/{} criteria pass in {:.0}s; unexpected failures {unexpected:?}",
        verdicts.len(),
        started.elapsed().as_secs_f64()
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
