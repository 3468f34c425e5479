mod common;

use common::{cf_gradient_error, doc_gradient_error};
use hamspace::cfhash::Measure;
use hamspace::hashtrain::Objective;

const TOLERANCE: f64 = 1e-4;

fn check_doc(objective: Objective) {
    for seed in 0..3 {
        let (err, terms) = doc_gradient_error(objective, seed);
        assert!(err <= TOLERANCE, "{objective} seed {seed}: max relative error {err:e}");
        // the objective-specific hinges must be active for the check to mean anything
        match objective {
            Objective::Rbsh => assert!(terms.ranking > 0.0, "{terms:?}"),
            Objective::Mish => assert!(terms.fp > 0.0 && terms.knn > 0.0, "{terms:?}"),
            _ => assert!(terms.recon > 0.0 && terms.kl > 0.0, "{terms:?}"),
        }
    }
}

#[test]
fn vae_gradient() {
    check_doc(Objective::Vae);
}

#[test]
fn rbsh_gradient() {
    check_doc(Objective::Rbsh);
}

#[test]
fn pairrec_gradient() {
    check_doc(Objective::Pairrec);
}

#[test]
fn mish_gradient() {
    check_doc(Objective::Mish);
}

#[test]
fn cf_gradients() {
    for measure in [Measure::Hamming, Measure::Phd] {
        for seed in 0..3 {
            let err = cf_gradient_error(measure, seed);
            assert!(err <= TOLERANCE, "cf-{measure} seed {seed}: max relative error {err:e}");
        }
    }
}
