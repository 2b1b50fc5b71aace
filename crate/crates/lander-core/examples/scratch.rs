use lander_core::config::RunConfig;
use lander_core::env::{run_evaluation, Scenario};
use lander_core::train::Trainer;
use std::time::Instant;

fn main() {
    let mut config = RunConfig::default();
    config.seed = 1;
    config.training.total_steps = 500_000;
    let mut trainer = Trainer::new(&config, None).unwrap();
    let t0 = Instant::now();
    let mut iter = 0;
    while trainer.env_steps < config.training.total_steps {
        let row = trainer.train_iteration().unwrap();
        iter += 1;
        if iter % 5 == 0 || row.mean_return.is_some() && iter % 2 == 0 {
            println!(
                "steps {:>7} stage {:?} mean_ret {:>8} ploss {:+.4} vloss {:>10.3} clip {:.3} ent {:+.3} [{:.0}s]",
                row.env_steps, trainer.stage,
                row.mean_return.map(|m| format!("{m:.1}")).unwrap_or("-".into()),
                row.policy_loss, row.value_loss, row.clip_fraction, row.entropy,
                t0.elapsed().as_secs_f64()
            );
        }
        if trainer.maybe_promote().unwrap() {
            println!("=== PROMOTED to PositionSet at {} steps ===", trainer.env_steps);
        }
    }
    println!("trained in {:.0}s", t0.elapsed().as_secs_f64());
    for scenario in [Scenario::EvenStatic, Scenario::UnevenStatic] {
        let (_, summary) = run_evaluation(&config, &trainer.params, scenario, 16).unwrap();
        println!(
            "{}: hit rate {:.2}, mean shift {:?} cm, touchdowns {}/{}, returns {:.1}",
            summary.scenario, summary.pad_hit_rate, summary.mean_landing_shift_cm,
            summary.touchdown_count, summary.records.len(), summary.mean_discounted_return
        );
    }
}
