use rcrl_core::agents::ConditioningMode;
use rcrl_harness::agent::Checkpoint;
use rcrl_harness::baseline::run_baseline;
use rcrl_harness::config::{ExperimentConfig, PoolSpec};
use rcrl_harness::protocols::{
    ablation_variants, run_decomposition, run_finetune_transfer, run_zero_shot_sweep, Ablation, REGIMES,
};
use rcrl_harness::setup::Setup;
use rcrl_harness::stats::{mean, sign_test};
use rcrl_harness::train::{run_training_with, Plan, RunContext, Steering};

fn speed_chain(steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(
        r#"
        name = "speed-chain"
        env = "speed-chain"
        [mixture]
        alpha = 0.5
        pool = { kind = "arc" }
        "#,
    )
    .unwrap();
    cfg.steps = steps;
    cfg.eval_interval = steps;
    cfg
}

fn velocity_by_target(rows: &[rcrl_harness::protocols::SweepRow]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.task.trim_start_matches("speed-").parse().unwrap(), r.behavior))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

#[test]
fn grid_zone_reaches_the_optimum() {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
        env = "grid-zone"
        steps = 200000
        eval_interval = 50000
        [mixture]
        pool = { kind = "arc" }
        "#,
    )
    .unwrap();
    let mut setup = Setup::new(&cfg).unwrap();
    let run = run_training_with(&cfg, &mut setup, "rcrl", 0).unwrap();
    let last = run.log.last().unwrap();
    assert!(last.normalized >= 0.95, "final nominal score {}", last.normalized);
}

#[test]
fn zero_shot_sweep_steers_velocity() {
    let cfg = speed_chain(100_000);
    let mut setup = Setup::new(&cfg).unwrap();
    let run = run_training_with(&cfg, &mut setup, "rcrl", 1).unwrap();
    let nominal_eval = run.log.last().unwrap().clone();
    let ckpt = Checkpoint::new(&setup.env, run.agent, setup.pool.clone());
    let rows = run_zero_shot_sweep(&ckpt, &mut setup, cfg.eval_episodes, 1).unwrap();
    let v = velocity_by_target(&rows);
    assert!(v.windows(2).all(|w| w[1].1 >= w[0].1), "{v:?}");
    assert!(v[3].1 - v[0].1 >= 2.0, "{v:?}");
    let nominal = &rows[setup.nominal_id()];
    assert_eq!(nominal.raw, nominal_eval.raw);
    assert_eq!(nominal.normalized, nominal_eval.normalized);
    assert_eq!(nominal.behavior, nominal_eval.behavior);
}

#[test]
fn unconditioned_sweep_is_flat() {
    let mut cfg = speed_chain(20_000);
    cfg.conditioning = ConditioningMode::None;
    let mut setup = Setup::new(&cfg).unwrap();
    let run = run_training_with(&cfg, &mut setup, "plain", 0).unwrap();
    let ckpt = Checkpoint::new(&setup.env, run.agent, setup.pool.clone());
    let rows = run_zero_shot_sweep(&ckpt, &mut setup, cfg.eval_episodes, 0).unwrap();
    assert!(rows.iter().all(|r| r.behavior == rows[0].behavior), "{rows:?}");
}

#[test]
fn sweep_rejects_a_foreign_pool() {
    let cfg = speed_chain(1000);
    let mut setup = Setup::new(&cfg).unwrap();
    let run = run_training_with(&cfg, &mut setup, "rcrl", 0).unwrap();
    let grid = Setup::new(&ExperimentConfig::for_env("grid-zone")).unwrap();
    let ckpt = Checkpoint::new("grid-zone", run.agent, grid.pool.clone());
    let err = run_zero_shot_sweep(&ckpt, &mut setup, 1, 0).unwrap_err();
    assert!(err.to_string().contains("env"), "{err}");
}

#[test]
fn zero_step_transfer_equals_the_sweep_entry() {
    let cfg = speed_chain(30_000);
    let mut setup = Setup::new(&cfg).unwrap();
    let run = run_training_with(&cfg, &mut setup, "rcrl", 2).unwrap();
    let ckpt = Checkpoint::new(&setup.env, run.agent.clone(), setup.pool.clone());
    let rows = run_zero_shot_sweep(&ckpt, &mut setup, cfg.eval_episodes, 2).unwrap();
    for target in 0..setup.pool.len() {
        let ctx = RunContext::new(&cfg, "transfer", 2);
        let out = run_finetune_transfer(&cfg, &setup, run.agent.clone(), target, 0, &ctx).unwrap();
        assert_eq!(out.log.len(), 1);
        let r = &out.log.records()[0];
        assert_eq!((r.step, r.id as usize), (0, target));
        assert_eq!(r.raw, rows[target].raw);
        assert_eq!(r.normalized, rows[target].normalized);
    }
}

#[test]
fn same_task_finetuning_does_not_regress() {
    let cfg = speed_chain(20_000);
    let mut setup = Setup::new(&cfg).unwrap();
    let nominal = setup.nominal_id();
    let (mut before, mut after) = (Vec::new(), Vec::new());
    for seed in 0..10 {
        let run = run_training_with(&cfg, &mut setup, "rcrl", seed).unwrap();
        before.push(run.log.last().unwrap().normalized);
        let ctx = RunContext::new(&cfg, "same", seed);
        let out = run_finetune_transfer(&cfg, &setup, run.agent, nominal, 10_000, &ctx).unwrap();
        after.push(out.log.last().unwrap().normalized);
    }
    assert!(mean(&after) >= mean(&before) - 0.05, "{before:?} -> {after:?}");
}

#[test]
fn transfer_beats_scratch_at_a_quarter_budget() {
    let budget = 200_000;
    let quarter = budget / 4;
    let mut cfg = speed_chain(budget);
    cfg.eval_interval = quarter;
    let base = Setup::new(&cfg).unwrap();
    let (source, target) = (2, 3);
    let mut successes = 0;
    for seed in 0..10 {
        let mut src = base.retarget(source, cfg.mixture.alpha).unwrap();
        let pre = run_training_with(&cfg, &mut src, "source", seed).unwrap();
        let ctx = RunContext::new(&cfg, "transfer", seed);
        let tuned = run_finetune_transfer(&cfg, &src, pre.agent, target, quarter, &ctx).unwrap();
        let mut short = cfg.clone();
        short.steps = quarter;
        let mut scratch_setup = base.retarget(target, cfg.mixture.alpha).unwrap();
        let scratch = run_training_with(&short, &mut scratch_setup, "scratch", seed).unwrap();
        if tuned.log.last().unwrap().normalized >= scratch.log.last().unwrap().normalized {
            successes += 1;
        }
    }
    assert!(sign_test(successes, 10) < 0.05, "{successes}/10");
}

#[test]
fn decomposition_budgets_and_ordering() {
    let mut cfg = speed_chain(2000);
    cfg.tabular.warmup = 0;
    cfg.eval_interval = 500;
    let mut finals = vec![Vec::new(); REGIMES.len()];
    for seed in 0..4 {
        let runs = run_decomposition(&cfg, seed).unwrap();
        let names: Vec<&str> = runs.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, REGIMES);
        let n = Setup::new(&cfg).unwrap().pool.len() as u64;
        assert_eq!(runs[0].1.env_steps, runs[1].1.env_steps);
        assert_eq!(runs[2].1.env_steps, n * runs[0].1.env_steps);
        assert_eq!(runs[3].1.env_steps, runs[2].1.env_steps);
        for (i, (_, r)) in runs.iter().enumerate() {
            finals[i].push(r.log.last().unwrap().normalized);
        }
    }
    let m: Vec<f64> = finals.iter().map(|f| mean(f)).collect();
    assert!(m[3] >= m[1] && m[1] >= m[0], "{m:?}");
    assert!(m[3] >= m[2] && m[2] >= m[0], "{m:?}");
}

#[test]
fn decomposition_needs_several_tasks() {
    let mut cfg = speed_chain(100);
    cfg.mixture.pool = PoolSpec::Continuous {
        spread: 16.0,
        stratified: true,
        distribution: rcrl_core::reward::PerturbDistribution::LogUniform,
    };
    let err = run_decomposition(&cfg, 0).err().expect("continuous pool rejected");
    assert!(err.to_string().contains("mixture.pool"), "{err}");
}

#[test]
fn mode_none_at_alpha_one_is_the_baseline() {
    let mut cfg = speed_chain(10_000);
    cfg.eval_interval = 2500;
    cfg.mixture.alpha = 1.0;
    cfg.conditioning = ConditioningMode::None;
    let mut setup = Setup::new(&cfg).unwrap();
    for seed in [3, 4] {
        let a = run_training_with(&cfg, &mut setup, "x", seed).unwrap();
        let b = run_baseline(&cfg, &mut setup, "x", seed).unwrap();
        assert_eq!(a.log.to_jsonl().unwrap(), b.log.to_jsonl().unwrap());
        assert_eq!(a.env_steps, b.env_steps);
    }
}

#[test]
fn exploration_flag_resamples_per_episode() {
    let mut cfg = speed_chain(5_000);
    let setup = Setup::new(&cfg).unwrap();
    assert_eq!(Plan::standard(&cfg, &setup).collectors[0].steering, Steering::Fixed(setup.nominal_id()));
    cfg.explore_conditioned = true;
    assert_eq!(Plan::standard(&cfg, &setup).collectors[0].steering, Steering::PerEpisode);
    let mut s = setup.clone();
    let steered = run_training_with(&cfg, &mut s, "x", 0).unwrap();
    cfg.explore_conditioned = false;
    let fixed = run_training_with(&cfg, &mut s, "x", 0).unwrap();
    assert_ne!(steered.agent, fixed.agent);
}

#[test]
fn ablation_grids() {
    let cfg = speed_chain(1000);
    let alphas: Vec<f64> = ablation_variants(Ablation::Alpha, &cfg)
        .unwrap()
        .iter()
        .map(|(_, c)| c.mixture.alpha)
        .collect();
    assert_eq!(alphas, [0.1, 0.3, 0.5, 0.7, 0.9]);
    let mut pm = ExperimentConfig::from_toml_str(
        r#"
        env = "point-mass"
        agent = "actor_critic"
        [mixture]
        pool = { kind = "prc", n = 16 }
        "#,
    )
    .unwrap();
    pm.steps = 1000;
    let spreads: Vec<f64> = ablation_variants(Ablation::Spread, &pm)
        .unwrap()
        .iter()
        .map(|(_, c)| c.mixture.pool.perturb_spec().unwrap().spread)
        .collect();
    assert_eq!(spreads, [2.0, 4.0, 8.0, 16.0]);
    assert!(ablation_variants(Ablation::Spread, &cfg).is_err());
}
