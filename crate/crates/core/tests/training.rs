use spikesr::events::downsample_2x;
use spikesr::events::synth::{synth_moving_bar, MovingBar};
use spikesr::model::{ExecMode, Variant};
use spikesr::training::{adam_step, train, AdamConfig, OptimState, SamplePair, TrainConfig};
use spikesr::EventStream;

fn corpus(n: u64) -> Vec<SamplePair> {
    (0..n)
        .map(|seed| {
            let hr = synth_moving_bar(&MovingBar {
                width: 16,
                height: 16,
                duration_ms: 24.0,
                velocity: 0.5,
                events_per_edge_px: 8,
                seed,
            })
            .unwrap();
            SamplePair { name: format!("bar{seed}"), lr: downsample_2x(&hr), hr }
        })
        .collect()
}

fn small_config(variant: Variant, mode: ExecMode) -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch: 4,
        steps: 24,
        seed: 3,
        variant,
        mode,
        val_fraction: 0.25,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic_and_moves_log_var() {
    let data = corpus(8);
    let cfg = small_config(Variant::Ultralight, ExecMode::DualSequential);
    let (a, ra) = train(&cfg, &data).unwrap();
    let (b, rb) = train(&cfg, &data).unwrap();
    assert_eq!(a.encode().unwrap(), b.encode().unwrap());
    assert_eq!(ra, rb);
    assert_eq!(ra.epochs.len(), 2);
    assert_eq!(ra.val_samples.len(), 2);
    assert!(a.log_var.iter().all(|v| *v != 0.0));
    assert!(ra.epochs.iter().all(|e| e.w.iter().all(|w| *w > 0.0)));
    assert_eq!(a.weights.param_count(), 232);
    assert_eq!(a.steps, Some(24));

    let csv = ra.to_csv();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "epoch,train_loss,w1,w2,w3,val_rmse_st");
    assert_eq!(rows.len(), 3);
}

#[test]
fn concurrent_training_matches_sequential() {
    let data = corpus(6);
    let (a, _) = train(&small_config(Variant::Ultralight, ExecMode::DualSequential), &data).unwrap();
    let (b, _) = train(&small_config(Variant::Ultralight, ExecMode::DualConcurrent), &data).unwrap();
    assert_eq!(a.weights, b.weights);
    let (c, _) = train(&small_config(Variant::DualLayer, ExecMode::Joint), &data).unwrap();
    assert_eq!(c.weights.param_count(), 464);
}

#[test]
fn mismatched_pair_geometry_is_an_error() {
    let mut data = corpus(3);
    data[1].lr = EventStream::empty(7, 8);
    assert!(train(&small_config(Variant::Ultralight, ExecMode::DualSequential), &data).is_err());
}

#[test]
fn adam_trajectories_repeat() {
    let run = || {
        let mut p = vec![0.5, -1.0, 2.0];
        let mut opt = OptimState::new(3, AdamConfig::default());
        let mut trace = Vec::new();
        for k in 0..20 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x + k as f64 * 0.01).collect();
            adam_step(&mut p, &g, &mut opt).unwrap();
            trace.push(p.clone());
        }
        trace
    };
    assert_eq!(run(), run());
}
