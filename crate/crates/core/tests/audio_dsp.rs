use std::f64::consts::PI;
use std::path::Path;

use respsound::audio::{load_manifest, load_wav, resample, segment, write_wav, AudioRecord};
use respsound::dsp::{frame_signal, hamming_window, power_spectrum, FramingConfig, SpectrumAnalyzer};
use respsound::Error;

fn write_i16(path: &Path, rate: u32, channels: u16, frames: &[Vec<i16>]) {
    let spec = hound::WavSpec { channels, sample_rate: rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for f in frames {
        for &s in f {
            w.write_sample(s).unwrap();
        }
    }
    w.finalize().unwrap();
}

fn tone(freq: f64, rate: u32, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
}

fn peak_bin(p: &[f64]) -> usize {
    p.iter().enumerate().fold(0, |b, (i, v)| if *v > p[b] { i } else { b })
}

#[test]
fn constant_16bit_normalizes_to_half() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.wav");
    write_i16(&p, 8000, 1, &vec![vec![16384]; 8000]);
    let r = load_wav(&p).unwrap();
    assert_eq!(r.len(), 8000);
    assert_eq!(r.sample_rate(), 8000);
    assert!(r.samples().iter().all(|s| (s - 0.5).abs() <= 1.0 / 32768.0));
}

#[test]
fn stereo_opposite_channels_downmix_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.wav");
    let v = (0.4 * 32768.0) as i16;
    write_i16(&p, 8000, 2, &vec![vec![v, -v]; 1000]);
    let r = load_wav(&p).unwrap();
    assert_eq!(r.len(), 1000);
    assert!(r.samples().iter().all(|&s| s == 0.0));
}

#[test]
fn eight_bit_pcm_loads() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("b.wav");
    let spec = hound::WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 8, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(&p, spec).unwrap();
    for _ in 0..100 {
        w.write_sample(64i8).unwrap();
    }
    w.finalize().unwrap();
    let r = load_wav(&p).unwrap();
    assert!(r.samples().iter().all(|&s| s == 0.5));
}

#[test]
fn sine_rms_after_load() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.wav");
    let samples: Vec<i16> = tone(440.0, 8000, 8000, 1.0).iter().map(|s| (s * 32767.0).round() as i16).collect();
    write_i16(&p, 8000, 1, &samples.into_iter().map(|s| vec![s]).collect::<Vec<_>>());
    let r = load_wav(&p).unwrap();
    let rms = (r.samples().iter().map(|s| s * s).sum::<f64>() / r.len() as f64).sqrt();
    assert!((rms - 0.5f64.sqrt()).abs() < 1e-3, "rms {rms}");
}

#[test]
fn load_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_wav(dir.path().join("nope.wav")), Err(Error::MissingFile(_))));

    let junk = dir.path().join("junk.wav");
    std::fs::write(&junk, b"RIFF\x10\x00\x00\x00WAVEjunkjunk").unwrap();
    let e = load_wav(&junk);
    assert!(matches!(e, Err(Error::MalformedWav { .. })), "{e:?}");

    let float = dir.path().join("f.wav");
    let spec = hound::WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
    let mut w = hound::WavWriter::create(&float, spec).unwrap();
    w.write_sample(0.25f32).unwrap();
    w.finalize().unwrap();
    assert!(matches!(load_wav(&float), Err(Error::UnsupportedEncoding { .. })));
}

#[test]
fn wav_round_trip_within_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rt.wav");
    let samples: Vec<f64> = (0..5000).map(|i| ((i * 7919) % 2001) as f64 / 1000.0 - 1.0).collect();
    let rec = AudioRecord::new(samples.clone(), 8000, None, "rt").unwrap();
    write_wav(&rec, &p).unwrap();
    let back = load_wav(&p).unwrap();
    assert_eq!(back.len(), samples.len());
    for (a, b) in samples.iter().zip(back.samples()) {
        assert!((a - b).abs() <= 1.0 / 32768.0);
    }
}

#[test]
fn resample_lengths_and_identity() {
    let r = AudioRecord::new(vec![0.1; 16000], 16000, None, "x").unwrap();
    let d = resample(&r, 8000).unwrap();
    assert_eq!((d.len(), d.sample_rate()), (8000, 8000));
    let same = resample(&d, 8000).unwrap();
    assert_eq!(same.samples(), d.samples());
    assert_eq!(resample(&same, 8000).unwrap(), same);
}

#[test]
fn resampled_tone_keeps_its_frequency() {
    let r = AudioRecord::new(tone(1000.0, 44100, 44100, 0.8), 44100, None, "t").unwrap();
    let d = resample(&r, 8000).unwrap();
    assert_eq!(d.len(), 8000);
    let cfg = FramingConfig::default();
    let p = power_spectrum(&d.samples()[2000..3024], &cfg).unwrap().power;
    // 1 kHz sits at bin 128 of a 1024-point spectrum at 8 kHz
    assert!((peak_bin(&p) as i64 - 128).abs() <= 1, "peak at {}", peak_bin(&p));
    assert!(d.samples().iter().all(|s| s.abs() <= 1.0));
}

#[test]
fn segment_arithmetic() {
    let rec = |n| AudioRecord::new(vec![0.2; n], 8000, Some("cough".into()), "s").unwrap();
    let s = segment(&rec(100_000), 2.5).unwrap();
    assert_eq!(s.len(), 5);
    assert!(s.iter().all(|x| x.len() == 20_000 && x.label.as_deref() == Some("cough")));
    assert!(segment(&rec(19_200), 2.5).unwrap().is_empty());
    assert_eq!(segment(&rec(40_800), 2.5).unwrap().len(), 2);
    assert!(segment(&rec(100), 0.0).is_err());
}

#[test]
fn segments_concatenate_losslessly() {
    let samples: Vec<f64> = (0..60_000).map(|i| ((i % 113) as f64 - 56.0) / 100.0).collect();
    let r = AudioRecord::new(samples.clone(), 8000, None, "c").unwrap();
    let joined: Vec<f64> = segment(&r, 2.5).unwrap().iter().flat_map(|s| s.samples().to_vec()).collect();
    assert_eq!(joined, samples);
}

#[test]
fn manifest_catalog_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let labels = ["wheeze", "stridor", "cough", "throat_clear", "other"];
    let mut body = String::from("# corpus\npath,label\n");
    for l in labels {
        write_i16(&dir.path().join(format!("{l}.wav")), 8000, 1, &vec![vec![0i16]; 10]);
        body.push_str(&format!("{l}.wav,{l}\n"));
    }
    let m = dir.path().join("m.csv");
    std::fs::write(&m, &body).unwrap();
    let man = load_manifest(&m).unwrap();
    assert_eq!(man.label_catalog, labels);
    assert_eq!(man.segment_seconds, 5.0);

    std::fs::write(&m, format!("# segment_seconds=2.5\n{body}")).unwrap();
    assert_eq!(load_manifest(&m).unwrap().segment_seconds, 2.5);

    std::fs::write(&m, format!("# segment_seconds=soon\n{body}")).unwrap();
    let e = load_manifest(&m).unwrap_err();
    assert!(e.to_string().contains("unknown segment length field"), "{e}");

    std::fs::write(&m, "path,label\n").unwrap();
    assert!(load_manifest(&m).unwrap_err().to_string().contains("no entries"));

    std::fs::write(&m, "path,label\ncough.wav,cough\ncough.wav,cough\n").unwrap();
    match load_manifest(&m) {
        Err(Error::DuplicatePath(p)) => assert_eq!(p, "cough.wav"),
        other => panic!("{other:?}"),
    }

    std::fs::write(&m, "path,label\nmissing.wav,cough\n").unwrap();
    assert!(matches!(load_manifest(&m), Err(Error::MissingFile(_))));
}

#[test]
fn framing_counts_and_coverage() {
    let cfg = FramingConfig::default();
    assert_eq!(cfg.frame_count(20_000), 149);
    assert_eq!(cfg.frame_count(40_000), 305);
    assert_eq!(cfg.frame_count(1000), 0);
    let samples: Vec<f64> = (0..5000).map(|i| i as f64 / 5000.0).collect();
    let r = AudioRecord::new(samples.clone(), 8000, None, "f").unwrap();
    let frames = frame_signal(&r, &cfg).unwrap();
    for (i, f) in frames.iter().enumerate() {
        assert_eq!(*f, &samples[i * 128..i * 128 + 1024]);
    }
    let wrong = AudioRecord::new(vec![0.0; 5000], 16000, None, "w").unwrap();
    assert!(matches!(frame_signal(&wrong, &cfg), Err(Error::RateMismatch { .. })));
}

#[test]
fn hop_shift_moves_frames_by_one() {
    let cfg = FramingConfig::default();
    let samples: Vec<f64> = (0..6000).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
    let a = AudioRecord::new(samples.clone(), 8000, None, "a").unwrap();
    let b = AudioRecord::new(samples[128..].to_vec(), 8000, None, "b").unwrap();
    let fa = frame_signal(&a, &cfg).unwrap();
    let fb = frame_signal(&b, &cfg).unwrap();
    assert_eq!(&fa[1..], &fb[..]);
}

#[test]
fn hamming_values() {
    let w = hamming_window(1024).unwrap();
    assert!((w[0] - 0.08).abs() < 1e-15);
    assert!((w[1023] - 0.08).abs() < 1e-15);
    assert_eq!(w[511], w[512]);
    assert!((w[511] - 0.99999).abs() < 1e-4);
    for i in 0..1024 {
        assert!((w[i] - w[1023 - i]).abs() < 1e-15);
    }
    let odd = hamming_window(9).unwrap();
    assert!((odd[4] - 1.0).abs() < 1e-15);
    assert!(hamming_window(1).is_err());
}

#[test]
fn spectrum_shape_and_bin_64() {
    let an = SpectrumAnalyzer::new(FramingConfig::default()).unwrap();
    let zero = an.power_spectrum(&[0.0; 1024], 0).unwrap();
    assert_eq!(zero.power.len(), 513);
    assert!(zero.power.iter().all(|&p| p == 0.0));
    let p = an.power_spectrum(&tone(500.0, 8000, 1024, 0.5), 0).unwrap().power;
    assert_eq!(peak_bin(&p), 64);
    assert!(an.power_spectrum(&[0.0; 1000], 0).is_err());
}

#[test]
fn config_validation() {
    let bad = [
        FramingConfig { hop: 0, ..Default::default() },
        FramingConfig { hop: 2048, ..Default::default() },
        FramingConfig { fft_size: 1000, frame_len: 512, ..Default::default() },
        FramingConfig { fft_size: 512, ..Default::default() },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
    // zero padding: a 512-sample frame into a 1024-point transform
    let cfg = FramingConfig { frame_len: 512, ..Default::default() };
    let p = power_spectrum(&tone(500.0, 8000, 512, 0.5), &cfg).unwrap().power;
    assert_eq!(p.len(), 513);
    assert_eq!(peak_bin(&p), 64);
}
