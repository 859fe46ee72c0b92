use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use woundnet::biomodel::VariableParams;
use woundnet::datapipe::DataRecord;
use woundnet::deeponet::{train, warm_start, Ablation, Architecture, DeepONet, Normalization, TrainConfig};

fn records(n: usize, seed: u64) -> Vec<DataRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (x_l, y_l) = (rng.random_range(2.0..8.0), rng.random_range(2.0..8.0));
            let (xc, yc) = (x_l / 2.5, y_l / 2.5);
            DataRecord {
                branch: VariableParams::sample(&mut rng).to_array(),
                trunk: [
                    rng.random_range(0.0..100.0),
                    rng.random_range(0.0..x_l),
                    rng.random_range(0.0..y_l),
                    yc,
                    rng.random_range(0.0..xc),
                    rng.random_range(0.0..yc),
                    xc,
                ],
                target: [0.0; 2],
                extent: [x_l, y_l],
            }
        })
        .collect()
}

fn label_with(model: &DeepONet, recs: &mut [DataRecord]) {
    let u = model.predict(recs).unwrap();
    for (r, u) in recs.iter_mut().zip(u) {
        r.target = u;
    }
}

#[test]
fn realizable_targets_are_learned() {
    let arch = Architecture { p: 4, hidden_layers: 1, hidden_width: 8 };
    let ab = Ablation::CASE1;
    let mut train_set = records(400, 1);
    let mut val_set = records(100, 2);
    let norm = Normalization::fit(&train_set, ab).unwrap();
    let teacher = DeepONet::new(ab, &arch, norm, 10).unwrap();
    label_with(&teacher, &mut train_set);
    label_with(&teacher, &mut val_set);
    // the student starts in the teacher's basin: every parameter is moved by
    // up to 0.05
    let mut student = teacher.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for block in student.params_mut() {
        for w in block.iter_mut() {
            *w += rng.random_range(-0.05..0.05);
        }
    }
    let cfg = TrainConfig { epochs: 2000, batch_size: 400, lr: 1e-3, ..TrainConfig::default() };
    let hist = train(&mut student, &train_set, &val_set, &cfg).unwrap();
    let last = *hist.val.last().unwrap();
    assert!(last < 1e-6, "val MSE {:.3e} -> {last:.3e}", hist.val[0]);
}

#[test]
fn fixed_seed_gives_identical_history_and_weights() {
    let ab = Ablation::FINAL;
    let arch = Architecture { p: 6, hidden_layers: 2, hidden_width: 10 };
    let mut data = records(300, 3);
    let truth = DeepONet::new(ab, &arch, Normalization::fit(&data, ab).unwrap(), 99).unwrap();
    label_with(&truth, &mut data);
    let (tr, va) = data.split_at(240);
    let cfg = TrainConfig { epochs: 5, batch_size: 32, seed: 4, ..TrainConfig::default() };
    let fit = || {
        let mut m = DeepONet::new(ab, &arch, Normalization::fit(tr, ab).unwrap(), 4).unwrap();
        let h = train(&mut m, tr, va, &cfg).unwrap();
        (m, h)
    };
    let (m1, h1) = fit();
    let (m2, h2) = fit();
    assert_eq!(h1, h2);
    assert_eq!(m1.to_json().unwrap(), m2.to_json().unwrap());
    assert_eq!(h1.train.len(), 6);
}

#[test]
fn one_warm_epoch_beats_the_frozen_model() {
    let ab = Ablation::FINAL;
    let arch = Architecture { p: 8, hidden_layers: 2, hidden_width: 16 };
    let mut base = records(400, 5);
    let mut extra = records(400, 6);
    for r in extra.iter_mut() {
        r.trunk[0] += 100.0;
    }
    let truth = DeepONet::new(ab, &arch, Normalization::fit(&base, ab).unwrap(), 7).unwrap();
    label_with(&truth, &mut base);
    label_with(&truth, &mut extra);
    for r in extra.iter_mut() {
        r.target = [r.target[0] * 1.5, r.target[1] * 1.5];
    }
    let mut prior = DeepONet::new(ab, &arch, Normalization::fit(&base, ab).unwrap(), 8).unwrap();
    let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
    train(&mut prior, &base[..320], &base[320..], &cfg).unwrap();

    let mut extended = base.clone();
    extended.extend_from_slice(&extra);
    let (tr, va): (Vec<_>, Vec<_>) = extended.iter().enumerate().partition(|(i, _)| i % 5 != 0);
    let tr: Vec<DataRecord> = tr.into_iter().map(|p| *p.1).collect();
    let va: Vec<DataRecord> = va.into_iter().map(|p| *p.1).collect();

    let mut warm = warm_start(&prior, ab, &arch).unwrap();
    assert_eq!(warm.predict(&va).unwrap(), prior.predict(&va).unwrap());
    let hist = train(&mut warm, &tr, &va, &TrainConfig { epochs: 1, ..TrainConfig::default() }).unwrap();
    let frozen = prior.loss(&prior.prepare(&va).unwrap()).unwrap();
    assert_eq!(hist.val[0], frozen);
    assert!(hist.val[1] < frozen, "{} vs {frozen}", hist.val[1]);
}

#[test]
fn saved_models_predict_identically() {
    let ab = Ablation::CASE2;
    let recs = records(1000, 9);
    let m = DeepONet::new(ab, &Architecture::default(), Normalization::fit(&recs, ab).unwrap(), 12).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    m.save(&path).unwrap();
    let back = DeepONet::load(&path).unwrap();
    assert_eq!(back, m);
    let (a, b) = (m.predict(&recs).unwrap(), back.predict(&recs).unwrap());
    assert!(a.iter().zip(&b).all(|(x, y)| x[0].to_bits() == y[0].to_bits() && x[1].to_bits() == y[1].to_bits()));
    assert!(warm_start(&m, Ablation::FINAL, &Architecture::default()).is_err());
}
