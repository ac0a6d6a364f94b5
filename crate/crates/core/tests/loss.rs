use std::f64::consts::LN_2;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikesr::training::{loss_polarity, loss_spatial, loss_temporal, loss_total, LossState};
use spikesr::{Shape4, SpikeTensor, Tensor4};

fn random_pair(seed: u64, shape: Shape4) -> (SpikeTensor, SpikeTensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = || SpikeTensor::new(Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(0..3) as f64 * 0.5), 1.0).unwrap();
    (f(), f())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0)
}

fn temporal_oracle(a: &Tensor4, b: &Tensor4) -> f64 {
    let s = a.shape();
    let mut total = 0.0;
    for t in 0..s.t {
        let mut frame = 0.0;
        for c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    let d = a.get(c, y, x, t) - b.get(c, y, x, t);
                    frame += d * d;
                }
            }
        }
        total += frame;
    }
    total / s.t as f64
}

fn spatial_oracle(a: &Tensor4, b: &Tensor4, bin: usize) -> f64 {
    let s = a.shape();
    let mut total = 0.0;
    for lo in (0..s.t).step_by(bin) {
        for c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    let d: f64 = (lo..(lo + bin).min(s.t)).map(|t| a.get(c, y, x, t) - b.get(c, y, x, t)).sum();
                    total += d * d;
                }
            }
        }
    }
    total
}

fn polarity_oracle(a: &Tensor4, b: &Tensor4) -> f64 {
    (0..2)
        .map(|c| {
            let (pa, pb) = (a.channel(c), b.channel(c));
            pa.data().iter().zip(pb.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
        })
        .sum()
}

#[test]
fn loops_agree_on_random_pair() {
    let (a, b) = random_pair(8, Shape4::new(2, 4, 5, 100));
    assert!(close(loss_temporal(&a, &b).unwrap(), temporal_oracle(&a, &b)));
    assert!(close(loss_spatial(&a, &b, &LossState::default()).unwrap(), spatial_oracle(&a, &b, 50)));
    assert!(close(loss_polarity(&a, &b).unwrap(), polarity_oracle(&a, &b)));
}

#[test]
fn weighted_total_by_hand() {
    let (a, b) = random_pair(9, Shape4::new(2, 3, 3, 64));
    let (lt, ls, lp) = (
        loss_temporal(&a, &b).unwrap(),
        loss_spatial(&a, &b, &LossState::default()).unwrap(),
        loss_polarity(&a, &b).unwrap(),
    );
    let unit = loss_total(&a, &b, &LossState::default()).unwrap();
    assert!(close(unit.total, lt + ls + lp));

    let state = LossState {
        log_var: [LN_2, 0.0, -LN_2],
        ..LossState::default()
    };
    let l = loss_total(&a, &b, &state).unwrap();
    assert!(close(l.total, 0.5 * lt + ls + 2.0 * lp + LN_2 + 0.0 - LN_2));
}

#[test]
fn identical_tensors_cost_nothing() {
    let (a, _) = random_pair(10, Shape4::new(2, 2, 2, 30));
    let l = loss_total(&a, &a, &LossState::default()).unwrap();
    assert_eq!(l.terms(), [0.0; 3]);
    assert_eq!(l.total, 0.0);
}

proptest! {
    #[test]
    fn terms_nonnegative_and_regulariser_sign(seed in any::<u64>(), lv in prop::array::uniform3(-5.0f64..5.0)) {
        let (a, b) = random_pair(seed, Shape4::new(2, 2, 3, 20));
        let state = LossState { log_var: lv, ..LossState::default() };
        let l = loss_total(&a, &b, &state).unwrap();
        prop_assert!(l.terms().iter().all(|t| *t >= 0.0));
        prop_assert!(state.weights().iter().all(|w| *w > 0.0));
        let reg = l.total - state.weights().iter().zip(l.terms()).map(|(w, t)| w * t).sum::<f64>();
        prop_assert!((reg - lv.iter().sum::<f64>()).abs() < 1e-9 * (1.0 + l.total.abs()));
        if lv.iter().all(|v| *v >= 0.0) {
            prop_assert!(reg >= 0.0);
        }
    }

    #[test]
    fn spatial_term_ignores_order_within_a_bin(seed in any::<u64>()) {
        let (a, _) = random_pair(seed, Shape4::new(2, 2, 2, 100));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut shuffled = a.grid().clone();
        for series in shuffled.neurons_mut() {
            for bin in series.chunks_mut(50) {
                use rand::seq::SliceRandom;
                bin.shuffle(&mut rng);
            }
        }
        let b = SpikeTensor::new(shuffled, 1.0).unwrap();
        prop_assert_eq!(loss_spatial(&a, &b, &LossState::default()).unwrap(), 0.0);
    }
}
