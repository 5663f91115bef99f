use gisr_core::degradation::synth_scene_dataset;
use gisr_core::io::TensorContainer;
use gisr_core::madunet::{MadUNet, ModelConfig};
use gisr_core::training::{
    adam_step, clip_global_norm, global_norm, load_model_params, mae_loss, model_from_container,
    model_to_container, split_dataset, AdamConfig, AdamState, LogRow, TrainConfig, Trainer,
};
use gisr_core::CoreError;
use gisr_tensor::{ParamStore, Tensor};

fn tiny(seed: u64) -> ModelConfig {
    ModelConfig {
        stages: 1,
        channels: 8,
        ratio: 2,
        target_bands: 3,
        guide_bands: 1,
        seed,
        ..ModelConfig::default()
    }
}

fn tiny_train() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 3,
        seed: 9,
        ..TrainConfig::default()
    }
}

fn snapshot<T: gisr_tensor::Element>(m: &MadUNet<T>) -> Vec<Vec<T>> {
    m.params.iter().map(|p| p.tensor.to_vec()).collect()
}

#[test]
fn mae_values_and_subgradient() {
    let gt = Tensor::<f64>::zeros(&[2, 3]);
    let one = Tensor::<f64>::ones(&[2, 3]);
    assert_eq!(mae_loss(&one, &gt).unwrap().item(), 1.0);
    assert_eq!(mae_loss(&gt, &gt).unwrap().item(), 0.0);

    let x = Tensor::<f64>::parameter(&[4], vec![0.5, -0.25, 0.0, 2.0]).unwrap();
    let y = Tensor::<f64>::from_vec(&[4], vec![0.0, 0.0, 0.0, 1.0]).unwrap();
    let loss = mae_loss(&x, &y).unwrap();
    assert!((loss.item() - (0.5 + 0.25 + 0.0 + 1.0) / 4.0).abs() < 1e-15);
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![0.25, -0.25, 0.0, 0.25]);

    assert!(mae_loss(&x, &gt).is_err());
}

fn scalar_store(v: f64) -> (ParamStore<f64>, Tensor<f64>) {
    let mut s = ParamStore::new();
    let t = s
        .register("w", Tensor::from_vec(&[1], vec![v]).unwrap())
        .unwrap();
    (s, t)
}

#[test]
fn first_adam_step_moves_by_lr_against_gradient_sign() {
    for (g, lr) in [(0.7, 1.0), (-3.0, 0.5), (1e-3, 1e-2)] {
        let (store, w) = scalar_store(0.3);
        let mut st = AdamState::new(&store);
        adam_step(&store, &[vec![g]], &mut st, lr, &AdamConfig::default()).unwrap();
        let delta = w.item() - 0.3;
        assert!((delta + lr * f64::signum(g)).abs() < 1e-6, "g={g}: {delta}");
    }
}

#[test]
fn zero_gradient_is_a_no_op() {
    let (store, w) = scalar_store(0.3);
    let mut st = AdamState::new(&store);
    for _ in 0..5 {
        adam_step(&store, &[vec![0.0]], &mut st, 1e-2, &AdamConfig::default()).unwrap();
    }
    assert_eq!(w.item(), 0.3);
}

#[test]
fn adam_is_deterministic() {
    let run = || {
        let (store, w) = scalar_store(0.3);
        let mut st = AdamState::new(&store);
        let mut traj = Vec::new();
        for i in 0..10 {
            let g = ((i * 7) % 5) as f64 - 2.0;
            adam_step(&store, &[vec![g]], &mut st, 1e-2, &AdamConfig::default()).unwrap();
            traj.push(w.item());
        }
        traj
    };
    assert_eq!(run(), run());
}

#[test]
fn clipping_bounds_global_norm() {
    let mut g = vec![vec![3.0f64, 0.0], vec![4.0]];
    assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
    assert!((global_norm(&g) - 1.0).abs() < 1e-12);
    let mut small = vec![vec![0.3f64]];
    clip_global_norm(&mut small, 1.0);
    assert_eq!(small[0][0], 0.3);
}

#[test]
fn split_is_seven_two_one() {
    let s = split_dataset(64);
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (45, 13, 6));
    let s = split_dataset(10);
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 2, 1));
}

#[test]
fn learning_rate_schedule() {
    let c = TrainConfig::default();
    assert_eq!(c.lr_at(1), 8e-4);
    assert_eq!(c.lr_at(200), 8e-4);
    assert_eq!(c.lr_at(201), 4e-4);
}

#[test]
fn one_epoch_takes_ceil_steps() {
    let data = synth_scene_dataset(4, 3, 1, 8, 2, 1).unwrap();
    let mut t = Trainer::new(MadUNet::<f32>::new(tiny(0)).unwrap(), tiny_train()).unwrap();
    let (loss, steps) = t.train_epoch(&data).unwrap();
    assert_eq!(steps, 2);
    assert_eq!(t.adam.t, 2);
    assert!(loss.is_finite());
}

#[test]
fn vanishing_learning_rate_keeps_parameters() {
    let data = synth_scene_dataset(4, 3, 1, 8, 2, 2).unwrap();
    let lr = 1e-12;
    let cfg = TrainConfig { lr, ..tiny_train() };
    let mut t = Trainer::new(MadUNet::<f64>::new(tiny(0)).unwrap(), cfg).unwrap();
    let before = snapshot(&t.model);
    for _ in 0..3 {
        t.train_epoch(&data).unwrap();
    }
    let steps = t.adam.t as f64;
    let after = snapshot(&t.model);
    let worst = before
        .iter()
        .flatten()
        .zip(after.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 10.0 * lr * steps, "{worst}");
}

#[test]
fn fit_logs_every_epoch_and_tracks_best() {
    let data = synth_scene_dataset(10, 3, 1, 8, 2, 3).unwrap();
    let s = split_dataset(data.len());
    let mut t = Trainer::new(MadUNet::<f32>::new(tiny(0)).unwrap(), tiny_train()).unwrap();
    let mut seen = Vec::new();
    t.fit(&data[s.train.clone()], &data[s.val.clone()], 3, |_, r| {
        seen.push(r.epoch);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![0, 1, 2, 3]);
    let csv = t.log_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(LogRow::CSV_HEADER));
    assert_eq!(lines.count(), 4);
    let best = t.best.as_ref().unwrap();
    let max = t.log[1..]
        .iter()
        .map(|r| r.val_psnr)
        .fold(f64::MIN, f64::max);
    assert_eq!(best.val_psnr, max);
}

#[test]
fn model_checkpoint_round_trip_is_bitwise() {
    let model = MadUNet::<f32>::new(tiny(4)).unwrap();
    let bytes = model_to_container(&model).unwrap().to_bytes();
    let loaded: MadUNet<f32> =
        model_from_container(&TensorContainer::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(loaded.config, model.config);
    for (a, b) in model.params.iter().zip(loaded.params.iter()) {
        assert_eq!(a.name, b.name);
        let (x, y) = (a.tensor.to_vec(), b.tensor.to_vec());
        assert!(x.iter().zip(&y).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    assert_eq!(model_to_container(&loaded).unwrap().to_bytes(), bytes);
}

#[test]
fn truncated_checkpoint_is_a_format_error() {
    let model = MadUNet::<f32>::new(tiny(4)).unwrap();
    let bytes = model_to_container(&model).unwrap().to_bytes();
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        let e = TensorContainer::from_bytes(&bytes[..cut]).unwrap_err();
        assert!(matches!(e, CoreError::Format(_)), "{e}");
    }
}

#[test]
fn failed_load_leaves_model_untouched() {
    let src = MadUNet::<f32>::new(tiny(5)).unwrap();
    let mut c = TensorContainer::new();
    let names: Vec<String> = src.params.iter().map(|p| p.name.clone()).collect();
    for p in src.params.iter().take(names.len() - 1) {
        c.insert(format!("param.{}", p.name), &p.tensor).unwrap();
    }
    let dst = MadUNet::<f32>::new(tiny(6)).unwrap();
    let before = snapshot(&dst);
    let e = load_model_params(&dst, &c).unwrap_err();
    assert!(e.to_string().contains(names.last().unwrap()), "{e}");
    assert_eq!(snapshot(&dst), before);
}

#[test]
fn channel_mismatch_names_first_key() {
    let c16 = MadUNet::<f32>::new(ModelConfig {
        channels: 16,
        ..tiny(0)
    })
    .unwrap();
    let c32 = MadUNet::<f32>::new(ModelConfig {
        channels: 32,
        ..tiny(0)
    })
    .unwrap();
    let first = c32
        .params
        .iter()
        .zip(c16.params.iter())
        .find(|(a, b)| a.tensor.shape() != b.tensor.shape())
        .map(|(a, _)| a.name.clone())
        .unwrap();
    let e = load_model_params(&c32, &model_to_container(&c16).unwrap()).unwrap_err();
    assert!(matches!(e, CoreError::Shape(_)));
    assert!(e.to_string().contains(&format!("param.{first}:")), "{e}");
}

#[test]
fn resume_matches_uninterrupted_run() {
    let data = synth_scene_dataset(10, 3, 1, 8, 2, 7).unwrap();
    let s = split_dataset(data.len());
    let (train, val) = (&data[s.train.clone()], &data[s.val.clone()]);

    let mut full = Trainer::new(MadUNet::<f32>::new(tiny(1)).unwrap(), tiny_train()).unwrap();
    full.fit(train, val, 3, |_, _| Ok(())).unwrap();

    let mut first = Trainer::new(MadUNet::<f32>::new(tiny(1)).unwrap(), tiny_train()).unwrap();
    first.fit(train, val, 1, |_, _| Ok(())).unwrap();
    let bytes = first.checkpoint().unwrap().to_bytes();
    drop(first);
    let mut resumed =
        Trainer::<f32>::restore(&TensorContainer::from_bytes(&bytes).unwrap(), tiny_train())
            .unwrap();
    resumed.fit(train, val, 3, |_, _| Ok(())).unwrap();

    assert_eq!(snapshot(&full.model), snapshot(&resumed.model));
    assert_eq!(full.adam, resumed.adam);
    assert_eq!(full.log, resumed.log);
    assert_eq!(
        full.checkpoint().unwrap().to_bytes(),
        resumed.checkpoint().unwrap().to_bytes()
    );
}
