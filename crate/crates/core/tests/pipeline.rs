mod support;

use std::fs;
use std::path::{Path, PathBuf};

use lumiprep::convert::{convert_batch, ConversionSpec, OutputFormat};
use lumiprep::dataset::{
    emit_filelists, format_annotations, process_dataset, split_dataset, AppliedWeights, Manifest, MetaSource,
    ProcessOptions, Split, SplitSpec, Status, CLASSES_FILE, MANIFEST_FILE,
};
use lumiprep::select::{AcquisitionMeta, FilterMode};
use lumiprep::synth::{gen_scene, SceneSpec};
use lumiprep::{load_gray, save_rgb};
use support::random_image;

fn write_scenes(dir: &Path, n: u64, elevation: Option<f64>) -> Vec<PathBuf> {
    fs::write(dir.join(CLASSES_FILE), "aircraft\nhelicopter\ntruck\nship\ntent\n").unwrap();
    (0..n)
        .map(|seed| {
            let scene = gen_scene(&SceneSpec::new(48, 32, seed, 2)).unwrap();
            let p = dir.join(format!("scene_{seed:03}.png"));
            save_rgb(&scene.image, &p).unwrap();
            fs::write(p.with_extension("txt"), format_annotations(&scene.annotations)).unwrap();
            if let Some(e) = elevation {
                fs::write(p.with_extension("json"), format!("{{\"sun_elevation_deg\": {e}}}")).unwrap();
            }
            p
        })
        .collect()
}

#[test]
fn batch_counts_and_error_isolation() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut paths: Vec<PathBuf> = (0..10)
        .map(|i| {
            let p = src.path().join(format!("img{i}.png"));
            save_rgb(&random_image(i, 16, 16), &p).unwrap();
            p
        })
        .collect();
    let spec_for = |_: &Path, _: &lumiprep::RgbImage| Ok(ConversionSpec::DEFAULT);
    let res = convert_batch(&paths, spec_for, out.path(), OutputFormat::Pgm, 2);
    assert_eq!(res.iter().filter(|r| r.is_ok()).count(), 10);
    assert_eq!(fs::read_dir(out.path()).unwrap().count(), 10);

    fs::write(&paths[3], b"\x89PNG\r\n\x1a\ngarbage").unwrap();
    let out2 = tempfile::tempdir().unwrap();
    let res = convert_batch(&paths, spec_for, out2.path(), OutputFormat::Png, 3);
    let errors: Vec<_> = res.iter().filter(|r| !r.is_ok()).collect();
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0].source, paths[3]);
    assert!(errors[0].to_json_line().contains("img3.png"));
    assert_eq!(fs::read_dir(out2.path()).unwrap().count(), 9);

    // Re-running is byte-identical.
    paths.remove(3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    convert_batch(&paths, spec_for, a.path(), OutputFormat::Pgm, 1);
    convert_batch(&paths, spec_for, b.path(), OutputFormat::Pgm, 4);
    for p in &paths {
        let name = OutputFormat::Pgm.output_path(Path::new(""), p);
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn dataset_with_daytime_sidecars() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let inputs = write_scenes(src.path(), 10, Some(45.0));
    let m = process_dataset(src.path(), &MetaSource::sidecars(), out.path(), &ProcessOptions::default()).unwrap();
    assert_eq!(m.records.len(), 10);
    for (rec, input) in m.records.iter().zip(&inputs) {
        assert_eq!(rec.status, Status::Ok);
        assert_eq!(rec.mode, Some(FilterMode::Red));
        assert!(matches!(rec.weights, Some(AppliedWeights::Weighted(w)) if w.is_valid()));
        let out_img = load_gray(rec.output_path.as_ref().unwrap()).unwrap();
        assert_eq!((out_img.width(), out_img.height()), (48, 32));
        let ann_in = fs::read(input.with_extension("txt")).unwrap();
        let ann_out = fs::read(rec.annotation_path.as_ref().unwrap()).unwrap();
        assert_eq!(ann_in, ann_out);
        assert!(rec.class_id.is_some());
    }
    assert_eq!(fs::read(out.path().join(CLASSES_FILE)).unwrap(), fs::read(src.path().join(CLASSES_FILE)).unwrap());
    let on_disk = Manifest::read(&out.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(on_disk, m);
}

#[test]
fn global_metadata_and_night() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_scenes(src.path(), 3, None);
    let m = process_dataset(
        src.path(),
        &MetaSource::global(AcquisitionMeta::from_elevation(-12.0)),
        out.path(),
        &ProcessOptions::default(),
    )
    .unwrap();
    for rec in &m.records {
        assert_eq!(rec.mode, Some(FilterMode::Night));
        assert!(matches!(rec.weights, Some(AppliedWeights::Default(_))));
    }
    assert!(m.to_jsonl().contains(r#""weights":"default""#));
}

#[test]
fn missing_metadata_and_annotations() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let paths = write_scenes(src.path(), 3, Some(20.0));
    fs::remove_file(paths[0].with_extension("json")).unwrap();
    fs::remove_file(paths[1].with_extension("txt")).unwrap();
    let m = process_dataset(src.path(), &MetaSource::sidecars(), out.path(), &ProcessOptions::default()).unwrap();
    assert_eq!(m.records[0].status, Status::Error);
    assert!(m.records[0].error.as_ref().unwrap().contains("sun_elevation_deg"));
    assert_eq!(m.records[1].status, Status::Ok);
    assert!(m.records[1].annotation_path.is_none());
    assert!(m.records[1].warnings.iter().any(|w| w.contains("annotation")));
    assert_eq!(m.records[2].mode, Some(FilterMode::Blend { t: 0.5 }));
}

#[test]
fn empty_directory() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let m = process_dataset(src.path(), &MetaSource::sidecars(), out.path(), &ProcessOptions::default()).unwrap();
    assert!(m.records.is_empty());
    assert_eq!(fs::read_to_string(out.path().join(MANIFEST_FILE)).unwrap(), "");
}

#[test]
fn corrupt_image_is_recorded() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let paths = write_scenes(src.path(), 4, Some(45.0));
    fs::write(&paths[2], b"P6\n10 10\n255\n\x00").unwrap();
    let m = process_dataset(src.path(), &MetaSource::sidecars(), out.path(), &ProcessOptions::default()).unwrap();
    assert_eq!(m.records.len(), 4);
    assert_eq!(m.successes().count(), 3);
    let split = split_dataset(&m, &SplitSpec::new(0.67, 1).unwrap()).unwrap();
    let (train, test) = emit_filelists(&split, out.path()).unwrap();
    let n = fs::read_to_string(train).unwrap().lines().count() + fs::read_to_string(test).unwrap().lines().count();
    assert_eq!(n, 3);
    assert!(split.records.iter().filter(|r| r.split.is_some()).all(|r| r.status == Status::Ok));
    assert_eq!(split.records.iter().filter(|r| r.split == Some(Split::Train)).count(), 2);
}

#[test]
fn rerun_and_worker_count_are_invisible() {
    let src = tempfile::tempdir().unwrap();
    write_scenes(src.path(), 12, Some(5.0));
    let mut outputs = Vec::new();
    for workers in [1, 3, 1] {
        let out = tempfile::tempdir().unwrap();
        let opts = ProcessOptions { workers, ..Default::default() };
        let m = process_dataset(src.path(), &MetaSource::sidecars(), out.path(), &opts).unwrap();
        let jsonl = m.to_jsonl().replace(&out.path().display().to_string(), "OUT");
        let images: Vec<Vec<u8>> =
            m.records.iter().map(|r| fs::read(r.output_path.as_ref().unwrap()).unwrap()).collect();
        outputs.push((jsonl, images));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}
