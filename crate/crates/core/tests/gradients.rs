mod common;

use common::{gradient_errors, GradInstance, Objective, FD_TOL};

fn check(inst: &GradInstance, objective: Objective) {
    let errors = gradient_errors(inst, objective);
    let expected = if objective == Objective::Hemi { 7 } else { 6 };
    assert!(errors.len() >= expected, "{errors:?}");
    for (group, err) in errors {
        assert!(err <= FD_TOL, "{} / {group}: relative error {err:e}", objective.name());
    }
}

#[test]
fn hemi_loss_gradients_match_finite_differences() {
    for seed in 0..3 {
        check(&GradInstance::new(seed, 1, 0.5), Objective::Hemi);
    }
}

#[test]
fn hemi_loss_gradients_with_two_layers_and_extreme_lambda() {
    check(&GradInstance::new(7, 2, 0.5), Objective::Hemi);
    check(&GradInstance::new(8, 1, 0.0), Objective::Hemi);
    check(&GradInstance::new(9, 1, 1.0), Objective::Hemi);
}

#[test]
fn node_classification_gradients_match_finite_differences() {
    for seed in 0..3 {
        check(&GradInstance::new(seed, 1, 0.5), Objective::NodeClassification);
    }
}

#[test]
fn link_prediction_gradients_match_finite_differences() {
    for seed in 0..3 {
        check(&GradInstance::new(seed, 1, 0.5), Objective::LinkPrediction);
    }
}
