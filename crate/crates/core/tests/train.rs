use ssvq_core::freeze::FreezeConfig;
use ssvq_core::ssvq::{sign, ssvq_decode};
use ssvq_core::train::compare::{mean, run_experiment, ExperimentConfig};
use ssvq_core::train::{
    qat_train_ssvq, qat_train_vq, train_dense, QuantSpec, SyntheticTask, TaskData, ToyNet, TrainConfig, Trainer,
};
use ssvq_core::vq::vq_decode;
use ssvq_core::RngSeed;

fn small_task() -> TaskData {
    SyntheticTask {
        train_size: 512,
        val_size: 256,
        ..SyntheticTask::default()
    }
    .generate()
    .unwrap()
}

fn cfg(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 32,
        eval_every: 5,
        weight_decay: 0.01,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn lossless_vq_tracks_dense_training() {
    let data = small_task();
    let net = ToyNet::new(&[16, 8, 8], RngSeed(1));
    let c = cfg(10);
    let dense = train_dense(&net, &data, &c).unwrap();
    // 8x16 weights in subvectors of 4 gives 32 distinct points.
    let vq = qat_train_vq(&net, &data, &QuantSpec::new(32, 4), &c).unwrap();
    for (a, b) in dense.trace.iter().zip(&vq.trace) {
        assert!(
            (a.loss - b.loss).abs() < 1e-9,
            "step {}: {} vs {}",
            a.step,
            a.loss,
            b.loss
        );
    }
    for (a, b) in dense.net.layers.iter().zip(&vq.net.layers) {
        for (x, y) in a.weight.as_slice().iter().zip(b.weight.as_slice()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn zero_lr_keeps_post_quantization_accuracy() {
    let data = small_task();
    let net = ToyNet::new(&[16, 32, 8], RngSeed(2));
    let c = TrainConfig {
        lr: 0.0,
        lr_signs: 0.0,
        ..cfg(20)
    };
    let vq = qat_train_vq(&net, &data, &QuantSpec::new(8, 4), &c).unwrap();
    assert_eq!(vq.initial_val_acc, vq.final_val_acc);
    let ss = qat_train_ssvq(&net, &data, &QuantSpec::new(8, 4), &c, &FreezeConfig::default()).unwrap();
    assert_eq!(ss.initial_val_acc, ss.final_val_acc);
}

#[test]
fn fixed_seed_runs_are_identical() {
    let data = small_task();
    let net = ToyNet::new(&[16, 32, 8], RngSeed(3));
    let freeze = FreezeConfig {
        interval: 5,
        ..FreezeConfig::default()
    };
    let a = qat_train_ssvq(&net, &data, &QuantSpec::new(8, 8), &cfg(30), &freeze).unwrap();
    let b = qat_train_ssvq(&net, &data, &QuantSpec::new(8, 8), &cfg(30), &freeze).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.freeze_log, b.freeze_log);
    assert_eq!(a.net, b.net);
    let v1 = qat_train_vq(&net, &data, &QuantSpec::new(8, 4), &cfg(30)).unwrap();
    let v2 = qat_train_vq(&net, &data, &QuantSpec::new(8, 4), &cfg(30)).unwrap();
    assert_eq!(v1.trace, v2.trace);
}

#[test]
fn weights_always_equal_decoded_model() {
    let data = small_task();
    let net = ToyNet::new(&[16, 32, 16, 8], RngSeed(4));
    let freeze = FreezeConfig {
        interval: 4,
        ..FreezeConfig::default()
    };
    let mut ss = Trainer::ssvq(&net, &QuantSpec::new(8, 8), &cfg(25), &freeze, data.train.len()).unwrap();
    let mut vq = Trainer::vq(&net, &QuantSpec::new(8, 4), &cfg(25), data.train.len()).unwrap();
    for _ in 0..25 {
        ss.step(&data.train, None).unwrap();
        vq.step(&data.train, None).unwrap();
        for (layer, m) in ss.net().layers.iter().zip(ss.ssvq_models()) {
            assert_eq!(layer.weight, ssvq_decode(m).unwrap());
            assert!(m.codebook.is_nonnegative());
        }
        for (layer, m) in vq.net().layers.iter().zip(vq.vq_models()) {
            assert_eq!(layer.weight, vq_decode(m).unwrap());
        }
    }
    assert!(ss.step(&data.train, None).is_err());
}

#[test]
fn vq_members_move_together() {
    let data = small_task();
    let net = ToyNet::new(&[16, 32, 8], RngSeed(5));
    let mut t = Trainer::vq(&net, &QuantSpec::new(8, 4), &cfg(5), data.train.len()).unwrap();
    let before = t.net().layers[0].weight.clone();
    t.step(&data.train, None).unwrap();
    let after = &t.net().layers[0].weight;
    let m = &t.vq_models()[0];
    for members in m.assignments.members(m.k()).iter().filter(|g| !g.is_empty()) {
        for &n in members {
            for j in 0..4 {
                let d0 = after.as_slice()[members[0] * 4 + j] - before.as_slice()[members[0] * 4 + j];
                let d = after.as_slice()[n * 4 + j] - before.as_slice()[n * 4 + j];
                assert!((d - d0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn ssvq_shared_codeword_moves_with_sign() {
    let data = small_task();
    let net = ToyNet::new(&[16, 32, 8], RngSeed(6));
    let mut t = Trainer::ssvq(
        &net,
        &QuantSpec::new(4, 8),
        &TrainConfig {
            lr_signs: 0.0,
            ..cfg(5)
        },
        &FreezeConfig::default(),
        data.train.len(),
    )
    .unwrap();
    let before = t.net().layers[0].weight.clone();
    t.step(&data.train, None).unwrap();
    let after = &t.net().layers[0].weight;
    let m = &t.ssvq_models()[0];
    let mut opposite = 0;
    for members in m.assignments.members(m.k()).iter().filter(|g| !g.is_empty()) {
        let a = members[0];
        for &b in &members[1..] {
            for j in 0..8 {
                let (pa, pb) = (a * 8 + j, b * 8 + j);
                let da = after.as_slice()[pa] - before.as_slice()[pa];
                let db = after.as_slice()[pb] - before.as_slice()[pb];
                let same = sign(m.latent[pa]) == sign(m.latent[pb]);
                if same {
                    assert!((da - db).abs() < 1e-12);
                } else {
                    assert!((da + db).abs() < 1e-12);
                    if da.abs() > 1e-9 {
                        opposite += 1;
                    }
                }
            }
        }
    }
    assert!(opposite > 0, "no opposite-direction updates observed");
}

#[test]
fn zero_threshold_freezes_oscillators_at_first_check() {
    let data = small_task();
    let net = ToyNet::new(&[16, 32, 8], RngSeed(7));
    let freeze = FreezeConfig {
        interval: 10,
        threshold_start: 0.0,
        threshold_end: 0.0,
        ..FreezeConfig::default()
    };
    let c = TrainConfig {
        lr_signs: 0.2,
        ..cfg(20)
    };
    let mut t = Trainer::ssvq(&net, &QuantSpec::new(8, 8), &c, &freeze, data.train.len()).unwrap();
    let mut flipped = vec![false; 32 * 16];
    let mut prev: Vec<f64> = t.ssvq_models()[0].latent.iter().map(|&x| sign(x)).collect();
    for step in 1..=10 {
        let rec = t.step(&data.train, None).unwrap();
        let m = &t.ssvq_models()[0];
        if step < 10 {
            assert_eq!(rec.frozen_count, 0);
            for (i, &x) in m.latent.iter().enumerate() {
                if sign(x) != prev[i] {
                    flipped[i] = true;
                }
                prev[i] = sign(x);
            }
        } else {
            // Frozen at the check: exactly the positions whose sign ever flipped
            // (including this step's flips, which fed the frequency EMA).
            let st = &t.freeze_states()[0];
            for (i, &f) in st.frozen().iter().enumerate() {
                let moved = flipped[i] || sign(m.latent[i]) != prev[i];
                assert_eq!(f, moved, "position {i}");
            }
            assert!(rec.frozen_count > 0);
        }
    }
}

#[test]
fn zero_sign_lr_keeps_signs() {
    let data = small_task();
    let net = ToyNet::new(&[16, 32, 8], RngSeed(8));
    let c = TrainConfig {
        lr_signs: 0.0,
        ..cfg(15)
    };
    let mut t = Trainer::ssvq(
        &net,
        &QuantSpec::new(8, 8),
        &c,
        &FreezeConfig::default(),
        data.train.len(),
    )
    .unwrap();
    let start = t.ssvq_models()[0].latent.clone();
    for _ in 0..15 {
        let r = t.step(&data.train, None).unwrap();
        assert_eq!(r.sign_flip_count, 0);
    }
    assert_eq!(t.ssvq_models()[0].latent, start);
}

#[test]
fn checkpoint_roundtrips_through_json() {
    let data = small_task();
    let net = ToyNet::new(&[16, 32, 8], RngSeed(9));
    let mut t = Trainer::ssvq(
        &net,
        &QuantSpec::new(8, 8),
        &cfg(3),
        &FreezeConfig::default(),
        data.train.len(),
    )
    .unwrap();
    t.step(&data.train, None).unwrap();
    let ck = t.checkpoint();
    let text = serde_json::to_string(&ck).unwrap();
    let back: ssvq_core::train::Checkpoint = serde_json::from_str(&text).unwrap();
    assert_eq!(back.net, ck.net);
    assert_eq!(back.ssvq_models, ck.ssvq_models);
}

#[test]
fn dense_pretraining_is_accurate() {
    let cfg = ExperimentConfig::default();
    let data = cfg.task.generate().unwrap();
    let net = ToyNet::new(&cfg.dims(), RngSeed(0));
    let run = train_dense(&net, &data, &cfg.pretrain).unwrap();
    assert!(run.final_val_acc > 0.95, "{}", run.final_val_acc);
}

#[test]
fn ssvq_matches_or_beats_vq_over_five_seeds() {
    let cfg = ExperimentConfig::default();
    let r = run_experiment(&cfg, &[0, 1, 2, 3, 4]).unwrap();
    let vq: Vec<f64> = r.iter().map(|o| o.vq).collect();
    let ss: Vec<f64> = r.iter().map(|o| o.ssvq).collect();
    assert!(mean(&ss) >= mean(&vq), "ssvq {} vq {}", mean(&ss), mean(&vq));
}
