use std::path::Path;

use respsound::cli::{features_from_manifest, run_with, EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE};
use respsound::dataset::FeatureDataset;
use respsound::dsp::{FramingConfig, SpectrumAnalyzer};
use respsound::eval::cross_validate;
use respsound::features::{extract, Feature};
use respsound::models::{load_model, ClassifierConfig};
use respsound::synth::{generate, generate_record, write_corpus, ClassCounts, CorpusSpec, ProxyClass};

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("respsound").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn wheeze_energy_sits_near_its_carrier() {
    let an = SpectrumAnalyzer::new(FramingConfig::default()).unwrap();
    for seed in 0..3 {
        let r = generate_record(ProxyClass::Wheeze, 5.0, 20.0, seed, 0, 0).unwrap();
        let mut total = vec![0.0; 513];
        for start in (0..r.len() - 1024).step_by(512) {
            let s = an.power_spectrum(&r.samples()[start..start + 1024], 0).unwrap();
            total.iter_mut().zip(&s.power).for_each(|(t, v)| *t += v);
        }
        let peak = total.iter().enumerate().fold(0, |b, (i, v)| if *v > total[b] { i } else { b });
        let hz = peak as f64 * 8000.0 / 1024.0;
        assert!((540.0..=660.0).contains(&hz), "seed {seed}: {hz} Hz");
    }
}

#[test]
fn coughs_vary_in_loudness_more_than_wheezes() {
    let scale = |x: &[f64]| {
        let r = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        x.iter().map(|v| v * 0.1 / r).map(|v: f64| v.clamp(-1.0, 1.0)).collect::<Vec<_>>()
    };
    let cfg = FramingConfig::default();
    for seed in 0..3 {
        let c = generate_record(ProxyClass::Cough, 5.0, 20.0, seed, 0, 0).unwrap();
        let w = generate_record(ProxyClass::Wheeze, 5.0, 20.0, seed, 0, 0).unwrap();
        let c = respsound::audio::AudioRecord::new(scale(c.samples()), 8000, None, "c").unwrap();
        let w = respsound::audio::AudioRecord::new(scale(w.samples()), 8000, None, "w").unwrap();
        let vc = extract(&c, cfg, 5.0).unwrap()[0].get(Feature::VarRms);
        let vw = extract(&w, cfg, 5.0).unwrap()[0].get(Feature::VarRms);
        assert!(vc > vw, "seed {seed}: {vc} vs {vw}");
    }
}

#[test]
fn corpus_is_deterministic_and_bounded() {
    let spec = CorpusSpec { counts: ClassCounts::uniform(2), segment_seconds: 3.0, snr_db: 5.0, seed: 17 };
    let a = generate(&spec).unwrap();
    assert_eq!(a, generate(&spec).unwrap());
    assert_ne!(a, generate(&CorpusSpec { seed: 18, ..spec.clone() }).unwrap());
    assert_eq!(a.len(), 10);
    for r in &a {
        assert_eq!(r.len(), 24_000);
        assert!(r.samples().iter().all(|s| s.abs() <= 1.0));
    }
    let labels: Vec<&str> = a.iter().map(|r| r.label.as_deref().unwrap()).collect();
    assert_eq!(labels[..4], ["wheeze", "wheeze", "stridor", "stridor"]);
    // a record depends only on its own index, not on the counts of other classes
    let solo = CorpusSpec { counts: ClassCounts { wheeze: 2, ..Default::default() }, ..spec };
    assert_eq!(generate(&solo).unwrap()[1], a[1]);
}

#[test]
fn usage_and_help_exit_codes() {
    let (code, _, err) = cli(&["frobnicate"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(!err.is_empty());
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("classify"));
    assert_eq!(cli(&["eval", "x.csv", "--folds", "3", "--loo"]).0, EXIT_USAGE);
    assert_eq!(cli(&[]).0, EXIT_USAGE);
}

#[test]
fn missing_inputs_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let absent = dir.path().join("absent.wav");
    let (code, _, err) = cli(&["classify", p(&absent), "--model", p(&dir.path().join("m.bin"))]);
    assert_eq!(code, EXIT_IO, "{err}");
    assert_eq!(cli(&["report", p(&dir.path().join("none")), "--date", "2017-04-08"]).0, EXIT_IO);
    assert_eq!(cli(&["select", p(&dir.path().join("none.csv"))]).0, EXIT_IO);
}

#[test]
fn classify_lists_features_the_model_cannot_get() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("f.csv");
    std::fs::write(&csv, "meanRMS,breathRate,label\n0.1,12,a\n0.2,14,b\n0.15,13,a\n0.25,15,b\n").unwrap();
    let model = dir.path().join("m.bin");
    assert_eq!(cli(&["train", p(&csv), "--model", "knn", "--out", p(&model)]).0, EXIT_OK);

    let spec = CorpusSpec { counts: ClassCounts { other: 1, ..Default::default() }, segment_seconds: 5.0, snr_db: 20.0, seed: 1 };
    let manifest = write_corpus(&spec, dir.path().join("c")).unwrap();
    let wav = manifest.parent().unwrap().join("other_000.wav");
    let (code, _, err) = cli(&["classify", p(&wav), "--model", p(&model)]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("breathRate") && !err.contains("meanRMS"), "{err}");
}

#[test]
fn cli_pipeline_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, r#"{"counts":{"wheeze":3,"stridor":3,"cough":3,"throat_clear":3,"other":3},"segment_seconds":2.5,"snr_db":15,"seed":5}"#)
        .unwrap();
    let corpus = dir.path().join("corpus");
    let (code, out, err) = cli(&["synth", "--spec", p(&spec_path), "--out", p(&corpus)]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.starts_with("15 records"));
    let manifest = corpus.join("manifest.csv");

    let features = dir.path().join("features.csv");
    assert_eq!(cli(&["features", p(&manifest), "--out", p(&features)]).0, EXIT_OK);
    let from_cli = FeatureDataset::read_csv(&features).unwrap();
    let direct = features_from_manifest(&manifest).unwrap();
    assert_eq!(from_cli, direct);

    let model = dir.path().join("rf.bin");
    let (code, _, err) = cli(&["train", p(&features), "--model", "rf", "--trees", "20", "--seed", "3", "--out", p(&model)]);
    assert_eq!(code, EXIT_OK, "{err}");
    let config = ClassifierConfig::Rf { n_trees: 20, seed: 3 };
    assert_eq!(load_model(&model).unwrap(), config.train(&direct).unwrap());

    let report = dir.path().join("eval.csv");
    let (code, out, _) = cli(&["eval", p(&features), "--model", "rf", "--trees", "20", "--seed", "3", "--folds", "3", "--csv", p(&report)]);
    assert_eq!(code, EXIT_OK);
    let expected = cross_validate(&direct, &config, 3, 3).unwrap();
    assert_eq!(std::fs::read_to_string(&report).unwrap(), expected.to_csv());
    assert_eq!(out, expected.to_string());

    let reduced = dir.path().join("reduced.csv");
    let args = ["eval", p(&features), "--model", "knn", "--folds", "3", "--classes", "wheeze,cough", "--features", "meanSC,varRMS"];
    let (code, out, err) = cli(&[&args[..], &["--csv", p(&reduced)]].concat());
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("features (m=2): meanSC,varRMS"), "{out}");
    let lib = cross_validate(
        &direct
            .filter_classes(&["wheeze".into(), "cough".into()])
            .unwrap()
            .select_features(&["meanSC".into(), "varRMS".into()])
            .unwrap(),
        &ClassifierConfig::Knn { k: 1 },
        3,
        1,
    )
    .unwrap();
    assert_eq!(std::fs::read_to_string(&reduced).unwrap(), lib.to_csv());

    let (code, out, _) = cli(&["select", p(&features), "--method", "pca"]);
    assert_eq!(code, EXIT_OK);
    assert!(!out.is_empty());

    let store = dir.path().join("events.txt");
    let wav = corpus.join("cough_000.wav");
    let (code, out, err) =
        cli(&["stream", p(&wav), "--model", p(&model), "--store", p(&store), "--start", "2017-04-08T05:59:58", "--window", "2.5"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("1 windows"), "{out}");
    let (code, out, _) = cli(&["report", p(&store), "--date", "2017-04-08"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("Apr 08 2017"), "{out}");
    assert_eq!(cli(&["report", p(&store), "--date", "08/04/2017"]).0, EXIT_DATA);

    let (code, out, _) = cli(&["bench", p(&wav), "--model", p(&model), "--reps", "2", "--window", "2.5"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("Classification"));
}
