use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use respsound::dataset::FeatureDataset;
use respsound::eval::{
    cross_validate, cross_validate_with, leave_one_out, metrics_from_matrix, stratified_kfold, Classifier, ConfusionMatrix,
};
use respsound::models::persist::{decode, encode};
use respsound::models::svm::smo;
use respsound::models::{
    argmax_first, load_model, save_model, train_knn, train_rf, train_svm, ClassifierConfig, NamedRow, Payload,
    FORMAT_VERSION, KKT_TOLERANCE,
};
use respsound::Error;

fn names(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("f{j}")).collect()
}

fn catalog(n: usize) -> Vec<String> {
    (0..n).map(|c| format!("c{c}")).collect()
}

fn ds(matrix: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> FeatureDataset {
    let m = matrix[0].len();
    FeatureDataset::new(matrix, labels, names(m), catalog(n_classes)).unwrap()
}

/// Gaussian blobs with unit spread around centres `spacing` apart on a diagonal.
fn blobs(per_class: usize, n_classes: usize, dims: usize, spacing: f64, seed: u64) -> FeatureDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut matrix = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_class * n_classes {
        let c = i % n_classes;
        matrix.push((0..dims).map(|d| spacing * c as f64 * if d % 2 == 0 { 1.0 } else { -1.0 } + noise.sample(&mut rng)).collect());
        labels.push(c);
    }
    ds(matrix, labels, n_classes)
}

fn accuracy(model: &impl Classifier, data: &FeatureDataset) -> f64 {
    let hits = (0..data.len()).filter(|&i| model.classify(&data.matrix[i]) == data.labels[i]).count();
    hits as f64 / data.len() as f64
}

#[test]
fn smo_solution_satisfies_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
    // overlapping classes so some multipliers sit at the bound
    let y: Vec<f64> = x.iter().map(|p| if p[0] + 0.5 * p[1] + rng.gen_range(-0.8..0.8) > 0.0 { 1.0 } else { -1.0 }).collect();
    let c = 1.0;
    let sol = smo(&x, &y, c, KKT_TOLERANCE);
    assert!(sol.kkt_gap < KKT_TOLERANCE);

    let w: Vec<f64> = (0..2).map(|d| (0..x.len()).map(|i| sol.alpha[i] * y[i] * x[i][d]).sum()).collect();
    let eq: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
    assert!(eq.abs() < 1e-9);
    let mut at_bound = 0;
    for i in 0..x.len() {
        let a = sol.alpha[i];
        assert!((0.0..=c).contains(&a));
        let margin = y[i] * (w[0] * x[i][0] + w[1] * x[i][1] - sol.rho);
        if a == 0.0 {
            assert!(margin >= 1.0 - KKT_TOLERANCE, "i={i} margin {margin}");
        } else if a == c {
            at_bound += 1;
            assert!(margin <= 1.0 + KKT_TOLERANCE, "i={i} margin {margin}");
        } else {
            assert!((margin - 1.0).abs() <= KKT_TOLERANCE, "i={i} margin {margin}");
        }
    }
    assert!(at_bound > 0);
}

#[test]
fn svm_separates_separable_data() {
    let data = blobs(40, 2, 3, 8.0, 22);
    let model = train_svm(&data, 10.0).unwrap();
    assert_eq!(accuracy(&model, &data), 1.0);
}

#[test]
fn svm_one_vs_one_shape_and_errors() {
    let data = blobs(15, 3, 2, 6.0, 23);
    let model = train_svm(&data, 1.0).unwrap();
    match &model.payload {
        Payload::Svm(s) => {
            let pairs: Vec<(usize, usize)> = s.machines.iter().map(|m| (m.positive, m.negative)).collect();
            assert_eq!(pairs, [(0, 1), (0, 2), (1, 2)]);
        }
        other => panic!("{other:?}"),
    }
    let one = ds(vec![vec![1.0], vec![2.0]], vec![0, 0], 1);
    assert!(train_svm(&one, 1.0).is_err());
    for c in [0.0, -1.0, f64::NAN] {
        assert!(matches!(train_svm(&data, c), Err(Error::InvalidArgument(_))));
    }
}

#[test]
fn forest_is_deterministic_per_seed() {
    let data = blobs(30, 3, 4, 2.0, 24);
    let a = encode(&train_rf(&data, 25, 7).unwrap());
    let b = encode(&train_rf(&data, 25, 7).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, encode(&train_rf(&data, 25, 8).unwrap()));
}

#[test]
fn forest_and_knn_agree_on_blobs() {
    let train = blobs(100, 3, 4, 5.0, 25);
    let test = blobs(50, 3, 4, 5.0, 26);
    let rf = train_rf(&train, 50, 1).unwrap();
    let knn = train_knn(&train, 5).unwrap();
    let (ra, ka) = (accuracy(&rf, &test), accuracy(&knn, &test));
    assert!(ra >= 0.99, "rf {ra}");
    assert!(ka >= 0.99, "knn {ka}");
}

#[test]
fn pure_class_leaf_scores_one() {
    let data = ds(vec![vec![0.0], vec![0.1], vec![5.0], vec![5.1]], vec![0, 0, 1, 1], 2);
    let model = train_rf(&data, 10, 3).unwrap();
    let p = model.predict_row(&[5.05]);
    assert_eq!(p.label, "c1");
    assert_eq!(p.scores, [0.0, 1.0]);
}

#[test]
fn knn_examples() {
    let data = ds(vec![vec![0.0, 0.0], vec![10.0, 10.0]], vec![0, 1], 2);
    let m = train_knn(&data, 1).unwrap();
    assert_eq!(m.predict_row(&[1.0, 1.0]).label, "c0");
    assert_eq!(m.predict_row(&[9.0, 9.0]).label, "c1");

    let data = ds(vec![vec![0.0], vec![1.0], vec![2.0], vec![2.5], vec![9.0]], vec![0, 1, 1, 0, 0], 2);
    let m = train_knn(&data, 3).unwrap();
    let p = m.predict_row(&[1.4]);
    assert_eq!(p.label, "c1");
    assert!((p.scores[1] - 2.0 / 3.0).abs() < 1e-15);
    assert!(train_knn(&data, 0).is_err());
    assert!(train_knn(&data, 6).is_err());
}

#[test]
fn predictions_ignore_feature_scale() {
    let data = blobs(20, 3, 3, 2.0, 27);
    let scaled = ds(
        data.matrix.iter().map(|r| r.iter().enumerate().map(|(j, v)| v * [4.0, 0.25, 1024.0][j]).collect()).collect(),
        data.labels.clone(),
        3,
    );
    let probe = blobs(10, 3, 3, 2.0, 28);
    for cfg in [ClassifierConfig::Knn { k: 3 }, ClassifierConfig::Svm { c: 1.0 }, ClassifierConfig::Rf { n_trees: 20, seed: 2 }] {
        let a = cfg.train(&data).unwrap();
        let b = cfg.train(&scaled).unwrap();
        for row in &probe.matrix {
            let s: Vec<f64> = row.iter().enumerate().map(|(j, v)| v * [4.0, 0.25, 1024.0][j]).collect();
            let (pa, pb) = (a.predict_row(row), b.predict_row(&s));
            assert_eq!(pa, pb, "{cfg}");
            assert_eq!(pa.label_index, argmax_first(&pa.scores));
        }
    }
}

#[test]
fn predict_by_name_reports_missing_features() {
    let data = blobs(10, 2, 2, 3.0, 29);
    let model = train_knn(&data, 1).unwrap();
    let names = vec!["f1".to_string(), "f0".to_string()];
    let p = model.predict(&NamedRow { names: &names, values: &[data.matrix[0][1], data.matrix[0][0]] }).unwrap();
    assert_eq!(p, model.predict_row(&data.matrix[0]));
    let partial = vec!["f0".to_string()];
    match model.predict(&NamedRow { names: &partial, values: &[0.0] }) {
        Err(Error::MissingFeatures(m)) => assert_eq!(m, ["f1"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn model_files_round_trip_and_reject_damage() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(12, 3, 2, 3.0, 30);
    for cfg in [ClassifierConfig::Knn { k: 2 }, ClassifierConfig::Svm { c: 0.5 }, ClassifierConfig::Rf { n_trees: 5, seed: 9 }] {
        let model = cfg.train(&data).unwrap();
        let path = dir.path().join("m.bin");
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);

        let bytes = encode(&model);
        let mut flipped = bytes.clone();
        flipped[30] ^= 0x40;
        assert!(matches!(decode(&flipped), Err(Error::Checksum { .. })));

        let mut versioned = bytes.clone();
        versioned[8..10].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(decode(&versioned), Err(Error::VersionMismatch { .. })));

        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Truncated)));
        assert!(matches!(decode(&bytes[..12]), Err(Error::Truncated)));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode(&magic), Err(Error::BadMagic)));
    }
    assert!(matches!(load_model(dir.path().join("absent.bin")), Err(Error::MissingFile(_))));
}

#[test]
fn kfold_sizes_and_determinism() {
    let labels: Vec<usize> = (0..99).map(|i| if i < 49 { 0 } else { 1 }).collect();
    let data = ds(labels.iter().map(|&l| vec![l as f64]).collect(), labels, 2);
    let a = stratified_kfold(&data, 10, 4).unwrap();
    assert_eq!(a, stratified_kfold(&data, 10, 4).unwrap());
    let mut sizes = [0usize; 10];
    let mut class0 = [0usize; 10];
    for (i, &f) in a.iter().enumerate() {
        sizes[f] += 1;
        if data.labels[i] == 0 {
            class0[f] += 1;
        }
    }
    assert_eq!(sizes.iter().sum::<usize>(), 99);
    assert!(sizes.iter().all(|&s| s == 9 || s == 10), "{sizes:?}");
    assert!(class0.iter().all(|&s| s == 4 || s == 5), "{class0:?}");
    assert!(stratified_kfold(&data, 1, 0).is_err());
    assert!(stratified_kfold(&data, 100, 0).is_err());
}

struct Always(usize);

impl Classifier for Always {
    fn classify(&self, _: &[f64]) -> usize {
        self.0
    }
}

#[test]
fn constant_baseline_scores_its_prior() {
    let labels: Vec<usize> = (0..50).map(|i| i % 5).collect();
    let data = ds(labels.iter().map(|&l| vec![l as f64]).collect(), labels, 5);
    let r = cross_validate_with(&data, 5, 0, "always", |_| Ok(Always(0))).unwrap();
    assert!((r.accuracy() - 0.2).abs() < 1e-15);
    assert_eq!(r.matrix.total(), 50);
    assert_eq!(r.metrics.per_class[0].recall, 1.0);
    assert_eq!(r.metrics.per_class[1].precision, 0.0);
}

#[test]
fn duplicated_points_are_recalled_by_nearest_neighbour() {
    let base = blobs(5, 3, 2, 1.0, 31);
    let mut matrix = Vec::new();
    let mut labels = Vec::new();
    for (r, &l) in base.matrix.iter().zip(&base.labels) {
        for _ in 0..10 {
            matrix.push(r.clone());
            labels.push(l);
        }
    }
    let data = ds(matrix, labels, 3);
    let r = cross_validate(&data, &ClassifierConfig::Knn { k: 1 }, 10, 3).unwrap();
    assert_eq!(r.accuracy(), 1.0);
}

#[test]
fn fold_without_a_class_is_an_error() {
    let labels = vec![0, 0, 0, 0, 1];
    let data = ds(labels.iter().map(|&l| vec![l as f64]).collect(), labels, 2);
    let e = cross_validate(&data, &ClassifierConfig::Knn { k: 1 }, 5, 0).unwrap_err();
    assert!(matches!(e, Error::FoldMissingClass { ref class, .. } if class == "c1"), "{e}");
    assert!(leave_one_out(&data, &ClassifierConfig::Knn { k: 1 }, 0).is_err());
}

#[test]
fn pooled_matrix_covers_every_instance() {
    let data = blobs(12, 3, 2, 1.5, 32);
    let r = cross_validate(&data, &ClassifierConfig::Rf { n_trees: 10, seed: 1 }, 4, 5).unwrap();
    assert_eq!(r.matrix.total(), data.len() as u64);
    for (c, row) in r.matrix.counts.iter().enumerate() {
        assert_eq!(row.iter().sum::<u64>(), r.metrics.per_class[c].support);
    }
    let loo = leave_one_out(&data, &ClassifierConfig::Knn { k: 1 }, 0).unwrap();
    assert_eq!(loo.n_folds, data.len());
    assert_eq!(loo.matrix.total(), data.len() as u64);
}

#[test]
fn metrics_follow_catalog_permutation() {
    let mut cm = ConfusionMatrix::new(catalog(3));
    for (a, p, n) in [(0, 0, 5), (0, 1, 2), (1, 1, 4), (1, 2, 1), (2, 0, 3), (2, 2, 6)] {
        for _ in 0..n {
            cm.record(a, p);
        }
    }
    let perm = [2, 0, 1];
    let mut pm = ConfusionMatrix::new(perm.iter().map(|&i| format!("c{i}")).collect());
    for a in 0..3 {
        for p in 0..3 {
            pm.counts[a][p] = cm.counts[perm[a]][perm[p]];
        }
    }
    let (m, q) = (metrics_from_matrix(&cm).unwrap(), metrics_from_matrix(&pm).unwrap());
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(q.per_class[k], m.per_class[i]);
    }
    assert!((q.weighted.f1 - m.weighted.f1).abs() < 1e-15);
    assert_eq!(q.accuracy, m.accuracy);
    assert!(metrics_from_matrix(&ConfusionMatrix::new(catalog(2))).is_err());
}
