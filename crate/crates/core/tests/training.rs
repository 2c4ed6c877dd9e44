//! Training-loop behaviour on the bundled synthetic scenes at desk scale.

use ndf::lfdata::{synth_lightfield, LightField, SceneKind, SceneSpec};
use ndf::ndf::{load_checkpoint, save_checkpoint};
use ndf::optim::{reconstruct, ReconstructionConfig, Trainer};

const EMA_WINDOW: f64 = 100.0;

fn scene(kind: SceneKind) -> LightField {
    synth_lightfield(&SceneSpec::new(kind), 64, 64, 5, 5).unwrap().0
}

/// Exponential moving average with smoothing `2 / (window + 1)`.
fn ema(losses: &[f64]) -> Vec<f64> {
    let k = 2.0 / (EMA_WINDOW + 1.0);
    let mut out = Vec::with_capacity(losses.len());
    let mut acc = losses[0];
    for &l in losses {
        acc += k * (l - acc);
        out.push(acc);
    }
    out
}

fn trend_decreases(kind: SceneKind) -> Vec<f64> {
    let r = reconstruct(&scene(kind), &ReconstructionConfig::desk()).unwrap();
    let smooth = ema(&r.losses);
    assert!(
        smooth[smooth.len() - 1] < smooth[100],
        "{}: EMA {} at the end vs {} at step 100",
        kind.name(),
        smooth[smooth.len() - 1],
        smooth[100]
    );
    r.losses
}

#[test]
fn constant_plane_loss_collapses() {
    let losses = trend_decreases(SceneKind::ConstantPlane { d0: 1.5 });
    let (first, last) = (losses[0], losses[losses.len() - 1]);
    assert!(last < 0.05 * first, "final loss {last} vs initial {first}");
}

#[test]
fn slanted_plane_trend() {
    trend_decreases(SceneKind::SlantedPlane {
        d0: 0.5,
        gx: 0.02,
        gy: -0.01,
    });
}

#[test]
fn step_occluder_trend() {
    trend_decreases(SceneKind::StepOccluder {
        near: 1.5,
        far: -0.5,
        edge: 0.5,
    });
}

#[test]
fn two_layer_trend() {
    trend_decreases(SceneKind::TwoLayer {
        foreground: 1.5,
        background: -0.5,
        rect: [0.3, 0.3, 0.7, 0.7],
    });
}

#[test]
fn loss_trajectory_is_reproducible() {
    let lf = scene(SceneKind::SlantedPlane {
        d0: 0.5,
        gx: 0.02,
        gy: -0.01,
    });
    let cfg = ReconstructionConfig {
        iterations: 40,
        ..ReconstructionConfig::desk()
    };
    let a = reconstruct(&lf, &cfg).unwrap();
    let b = reconstruct(&lf, &cfg).unwrap();
    assert_eq!(a.losses, b.losses);
    let other = reconstruct(&lf, &ReconstructionConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.losses, other.losses);
}

#[test]
fn checkpoint_round_trip_renders_identically() {
    let lf = scene(SceneKind::ConstantPlane { d0: -0.7 });
    let cfg = ReconstructionConfig {
        iterations: 5,
        ..ReconstructionConfig::desk()
    };
    let mut trainer = Trainer::new(&lf, &cfg).unwrap();
    for _ in 0..cfg.iterations {
        trainer.step().unwrap();
    }
    let model = trainer.into_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ndf");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    for (h, w) in [(64, 64), (37, 91), (1, 1)] {
        assert_eq!(model.render_grid(h, w).unwrap(), loaded.render_grid(h, w).unwrap());
    }
}
