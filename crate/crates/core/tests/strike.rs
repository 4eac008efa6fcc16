use wiggle_core::params::ParamBounds;
use wiggle_core::tasks::{execute, optimize_trajectory, OptimizeConfig, TaskKind, TaskSpec};

#[test]
fn mid_range_rope_strikes_the_example_target() {
    let rope = ParamBounds::default().midpoint();
    let task = TaskSpec::example(TaskKind::Strike);
    let cfg = OptimizeConfig::default();
    let run = optimize_trajectory(&rope, &task, &cfg, 1).unwrap();
    assert!(run.history.len() <= 25);
    assert!(run.cost <= 0.05, "best tip distance {}", run.cost);
    assert!(run.history.windows(2).all(|w| w[1].best <= w[0].best));
    let replay = execute(&rope, &run.plan, &task, &cfg).unwrap();
    assert_eq!(replay.cost, run.cost);
    assert!(replay.success);
}
