use std::collections::BTreeMap;
use std::path::Path;

use tppgaze::data::{parse_manifest, parse_scanpaths, preprocess, Dataset, PreprocessOptions, ScanpathFormat, Stimulus};
use tppgaze::model::TppModel;
use tppgaze::params::{ModelConfig, ReadoutShape, TppConfig};
use tppgaze::toy::{toy_dataset, write_toy_dataset, ToySpec};
use tppgaze::volume::{load_feature_volume, FeatureVolume};
use tppgaze::Error;

#[test]
fn csv_with_durations_in_milliseconds() {
    let text = "stimulus_id,observer_id,x,y,duration,unit\n\
                a,o1,10,20,200,ms\n\
                a,o1,30,40,300,ms\n\
                a,o2,5,5,100,ms\n";
    let sps = parse_scanpaths(text.as_bytes(), ScanpathFormat::Csv).unwrap();
    assert_eq!(sps.len(), 2);
    let t: Vec<f64> = sps[0].fixations.iter().map(|f| f.t).collect();
    assert_eq!(t, vec![0.2, 0.5]);
    assert!((sps[0].fixations[1].tau - 0.3).abs() < 1e-15);
    assert_eq!(sps[1].observer_id, "o2");
}

#[test]
fn csv_with_arrival_times() {
    let text = "stimulus_id,observer_id,x,y,t\na,o,1,1,0.25\na,o,2,2,0.75\n";
    let sps = parse_scanpaths(text.as_bytes(), ScanpathFormat::Csv).unwrap();
    assert_eq!(sps[0].fixations[1].tau, 0.5);
}

#[test]
fn malformed_json_reports_line() {
    let text = "{\"stimulus_id\":\"a\",\"observer_id\":\"o\",\"fixations\":[{\"x\":1,\"y\":1,\"t\":0.1}]}\n\nnot json\n";
    match parse_scanpaths(text.as_bytes(), ScanpathFormat::Jsonl) {
        Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn non_monotone_times_rejected() {
    let text = "{\"stimulus_id\":\"a\",\"observer_id\":\"o\",\"fixations\":[{\"x\":1,\"y\":1,\"t\":0.4},{\"x\":1,\"y\":1,\"t\":0.4}]}\n";
    match parse_scanpaths(text.as_bytes(), ScanpathFormat::Jsonl) {
        Err(Error::NonMonotoneTimestamps { line, index }) => assert_eq!((line, index), (1, 1)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_time_fields_rejected() {
    let text = "{\"stimulus_id\":\"a\",\"observer_id\":\"o\",\"fixations\":[{\"x\":1,\"y\":1}]}\n";
    assert!(matches!(
        parse_scanpaths(text.as_bytes(), ScanpathFormat::Jsonl),
        Err(Error::MalformedRecord { line: 1, .. })
    ));
}

fn stimuli() -> BTreeMap<String, Stimulus> {
    let m = r#"[{"id": "a", "width": 100, "height": 50, "viewing_duration": 2.0, "feature_path": "a.fvol"}]"#;
    parse_manifest(m.as_bytes()).unwrap()
}

#[test]
fn unresolved_stimulus_and_clamping() {
    let text = "{\"stimulus_id\":\"b\",\"observer_id\":\"o\",\"fixations\":[{\"x\":1,\"y\":1,\"t\":0.1}]}\n";
    let sps = parse_scanpaths(text.as_bytes(), ScanpathFormat::Jsonl).unwrap();
    assert!(matches!(Dataset::new(stimuli(), sps), Err(Error::UnresolvedStimulus(id)) if id == "b"));

    let text = "{\"stimulus_id\":\"a\",\"observer_id\":\"o\",\"fixations\":[{\"x\":-4,\"y\":80,\"t\":0.1}]}\n";
    let d = Dataset::new(stimuli(), parse_scanpaths(text.as_bytes(), ScanpathFormat::Jsonl).unwrap()).unwrap();
    let f = d.scanpaths[0].fixations[0];
    assert_eq!((f.x, f.y), (0.0, 50.0));
}

#[test]
fn manifest_validation() {
    let dup = r#"[{"id": "a", "width": 1, "height": 1, "viewing_duration": 1.0, "feature_path": "a"},
                  {"id": "a", "width": 1, "height": 1, "viewing_duration": 1.0, "feature_path": "a"}]"#;
    assert!(matches!(parse_manifest(dup.as_bytes()), Err(Error::InvalidStimulus { .. })));
    let zero = r#"[{"id": "a", "width": 0, "height": 1, "viewing_duration": 1.0, "feature_path": "a"}]"#;
    assert!(parse_manifest(zero.as_bytes()).is_err());
}

#[test]
fn preprocessing_filters_and_drops_first() {
    let text = "{\"stimulus_id\":\"a\",\"observer_id\":\"short\",\"fixations\":[{\"x\":1,\"y\":1,\"duration\":0.1},{\"x\":1,\"y\":1,\"duration\":0.1}]}\n\
                {\"stimulus_id\":\"a\",\"observer_id\":\"long\",\"fixations\":[{\"x\":1,\"y\":1,\"duration\":0.1},{\"x\":2,\"y\":1,\"duration\":0.2},{\"x\":3,\"y\":1,\"duration\":0.3},{\"x\":4,\"y\":1,\"duration\":0.4}]}\n";
    let d = Dataset::new(stimuli(), parse_scanpaths(text.as_bytes(), ScanpathFormat::Jsonl).unwrap()).unwrap();
    let p = preprocess(&d, PreprocessOptions::default());
    assert_eq!(p.scanpaths.len(), 1);
    let kept = &p.scanpaths[0];
    assert_eq!(kept.observer_id, "long");
    assert_eq!(kept.len(), 3);
    assert_eq!(kept.fixations[0].x, 2.0);
    assert!((kept.fixations[0].tau - 0.2).abs() < 1e-15);
    // idempotent for the same options
    assert_eq!(preprocess(&p, PreprocessOptions::default()).scanpaths, p.scanpaths);
}

#[test]
fn feature_volume_errors() {
    let v = FeatureVolume::new(2, 3, 1, vec![0.5; 6]).unwrap();
    let bytes = v.to_bytes();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(FeatureVolume::from_bytes(&bad), Err(Error::BadMagic)));
    let mut ver = bytes.clone();
    ver[4] = 9;
    assert!(matches!(FeatureVolume::from_bytes(&ver), Err(Error::UnsupportedVersion(9))));
    assert!(matches!(
        FeatureVolume::from_bytes(&bytes[..bytes.len() - 4]),
        Err(Error::SizeMismatch { expected: 6, actual: 5 })
    ));
    let mut nan = bytes;
    nan[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(FeatureVolume::from_bytes(&nan).is_err());
}

#[test]
fn checkpoint_file_round_trip() {
    let cfg = ModelConfig {
        tpp: TppConfig {
            d_img: 3,
            d_hist: 5,
            k: 2,
            g: 2,
            d_in: 4,
        },
        readout: ReadoutShape {
            height: 2,
            width: 3,
            channels: 2,
        },
    };
    let model = TppModel::init(cfg, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.tppg");
    model.save(&path).unwrap();
    let back = TppModel::load(&path).unwrap();
    assert_eq!(back.config(), model.config());
    assert!(back.flat().iter().zip(model.flat()).all(|(a, b)| a.to_bits() == b.to_bits()));
    std::fs::write(&path, b"TPPX").unwrap();
    assert!(TppModel::load(&path).is_err());
}

#[test]
fn bundled_toy_data_is_current() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy");
    let data = toy_dataset(&ToySpec::default()).unwrap();
    let d = Dataset::load(&dir.join("manifest.json"), &dir.join("scanpaths.jsonl"), ScanpathFormat::Jsonl).unwrap();
    assert_eq!(d.stimuli, data.stimuli);
    assert_eq!(d.scanpaths.len(), data.scanpaths.len());
    for (a, b) in d.scanpaths.iter().zip(&data.scanpaths) {
        assert_eq!(a.fixations.len(), b.fixations.len());
        for (f, g) in a.fixations.iter().zip(&b.fixations) {
            assert_eq!((f.x, f.y, f.t), (g.x, g.y, g.t));
        }
    }
    for (id, v) in &data.volumes {
        assert_eq!(&load_feature_volume(&dir.join("features").join(format!("{id}.fvol"))).unwrap(), v);
    }

    let out = tempfile::tempdir().unwrap();
    write_toy_dataset(out.path(), &data).unwrap();
    for name in ["manifest.json", "scanpaths.jsonl"] {
        assert_eq!(std::fs::read(out.path().join(name)).unwrap(), std::fs::read(dir.join(name)).unwrap());
    }
}
