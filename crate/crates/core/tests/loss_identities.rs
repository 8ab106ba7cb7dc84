mod common;

use common::{GradInstance, Objective};
use hemi::model::{HemiConfig, ModelInputs};
use hemi::tensor::Tensor;
use hemi::train::train_augmented_nc;

fn zero_discriminators(inst: &mut GradInstance) {
    for w in inst.params.disc_fine.iter_mut().chain(inst.params.disc_coarse.iter_mut()) {
        *w = Tensor::zeros(w.shape());
    }
}

#[test]
fn zero_logits_give_two_ln_two() {
    for lambda in [0.0, 0.3, 0.5, 1.0] {
        let mut inst = GradInstance::new(1, 1, lambda);
        zero_discriminators(&mut inst);
        let (loss, _) = inst.evaluate(Objective::Hemi, &inst.params, &inst.task).unwrap();
        assert!((loss - 2.0 * 2f64.ln()).abs() <= 1e-9, "{loss}");
    }
}

fn discriminator_grads(lambda: f64) -> (Vec<Tensor>, Vec<Tensor>) {
    let inst = GradInstance::new(4, 1, lambda);
    let (_, grads) = inst.evaluate(Objective::Hemi, &inst.params, &inst.task).unwrap();
    let names = inst.params.named();
    let pick = |prefix: &str| {
        names
            .iter()
            .zip(&grads)
            .filter(|((n, _), _)| n.starts_with(prefix))
            .map(|(_, g)| g.clone())
            .collect::<Vec<_>>()
    };
    (pick("disc_fine"), pick("disc_coarse"))
}

#[test]
fn lambda_one_zeroes_coarse_gradients() {
    let (fine, coarse) = discriminator_grads(1.0);
    assert_eq!(coarse.len(), 2);
    assert!(coarse.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    assert!(fine.iter().all(|g| g.squared_norm() > 0.0));
}

#[test]
fn lambda_zero_zeroes_fine_gradients() {
    let (fine, coarse) = discriminator_grads(0.0);
    assert_eq!(fine.len(), 2);
    assert!(fine.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    assert!(coarse.iter().all(|g| g.squared_norm() > 0.0));
}

#[test]
fn zero_hemi_weight_equals_supervised_only() {
    let inst = GradInstance::new(2, 1, 0.5);
    let inputs: &ModelInputs = &inst.inputs;
    let config = HemiConfig {
        dim: 8,
        epochs: 30,
        lr: 0.01,
        ..HemiConfig::default()
    };
    let plain = train_augmented_nc(inputs, &inst.labels, 3, &config, None).unwrap();
    let zero = train_augmented_nc(inputs, &inst.labels, 3, &config, Some(0.0)).unwrap();
    assert_eq!(plain.report.losses, zero.report.losses);
    assert_eq!(plain.params, zero.params);
    let one = train_augmented_nc(inputs, &inst.labels, 3, &config, Some(1.0)).unwrap();
    assert_ne!(plain.report.losses, one.report.losses);
}
