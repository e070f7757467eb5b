//! Dataset preparation: convert every image of a labeled detection set,
//! carry YOLO annotations through untouched, split train/test, and keep a
//! JSON-lines manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convert::{convert, duplicate_outputs, run_ordered, OutputFormat};
use crate::histogram::{pooled_histogram, stats_of, ChannelStats};
use crate::raster;
use crate::rng::SplitMix64;
use crate::select::{selection_for_mode, AcquisitionMeta, FilterMode};
use crate::weights::WeightTriple;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CLASSES_FILE: &str = "classes.txt";
pub const TRAIN_LIST: &str = "train.txt";
pub const TEST_LIST: &str = "test.txt";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest has no successfully processed records")]
    EmptyManifest,
    #[error("record {0} has no class id; cannot stratify")]
    ClassUnknown(String),
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("record {0} has no split label")]
    UnsplitManifest(String),
    #[error("split leaves the {0} list empty")]
    EmptySplit(&'static str),
    #[error("annotation line {line}: {reason}")]
    BadAnnotation { line: usize, reason: String },
    #[error("manifest line {line}: {source}")]
    BadManifest { line: usize, source: serde_json::Error },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

/// One YOLO box: class id and normalized centre / size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl AnnotationRecord {
    pub fn parse_line(line: &str, lineno: usize) -> Result<Self, DatasetError> {
        let bad = |reason: String| DatasetError::BadAnnotation { line: lineno, reason };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let class_id = fields[0].parse().map_err(|_| bad(format!("bad class id {:?}", fields[0])))?;
        let mut geom = [0.0; 4];
        for (slot, f) in geom.iter_mut().zip(&fields[1..]) {
            let v: f64 = f.parse().map_err(|_| bad(format!("bad number {f:?}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(format!("{v} outside [0, 1]")));
            }
            *slot = v;
        }
        let [cx, cy, w, h] = geom;
        Ok(Self { class_id, cx, cy, w, h })
    }
}

impl fmt::Display for AnnotationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:.6} {:.6} {:.6} {:.6}", self.class_id, self.cx, self.cy, self.w, self.h)
    }
}

/// Parses a YOLO annotation file body; blank lines are skipped. With
/// `num_classes`, class ids at or above it are rejected.
pub fn parse_annotations(text: &str, num_classes: Option<usize>) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = AnnotationRecord::parse_line(line, i + 1)?;
        if let Some(n) = num_classes {
            if rec.class_id as usize >= n {
                return Err(DatasetError::BadAnnotation {
                    line: i + 1,
                    reason: format!("class id {} but only {n} classes", rec.class_id),
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn format_annotations(records: &[AnnotationRecord]) -> String {
    records.iter().map(|r| format!("{r}\n")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefaultMarker {
    Default,
}

/// Weights applied to an image: a normalized triple, or the literal
/// `"default"` for the fixed conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AppliedWeights {
    Weighted(WeightTriple<f64>),
    Default(DefaultMarker),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub source_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_path: Option<String>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevation_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<FilterMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<AppliedWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<ChannelStats<f64>>,
    #[serde(default)]
    pub clamped: bool,
    #[serde(default)]
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl ManifestRecord {
    fn failed(source: &Path, error: String) -> Self {
        Self {
            source_path: source.display().to_string(),
            output_path: None,
            annotation_path: None,
            status: Status::Error,
            error: Some(error),
            warnings: Vec::new(),
            elevation_deg: None,
            mode: None,
            weights: None,
            stats: None,
            clamped: false,
            fallback: false,
            class_id: None,
            split: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn successes(&self) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(|r| r.is_ok())
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializable record") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, DatasetError> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|source| DatasetError::BadManifest { line: i + 1, source }))
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }

    pub fn read(path: &Path) -> Result<Self, DatasetError> {
        Self::from_jsonl(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_jsonl()).map_err(io_err(path))
    }
}

/// Where per-image acquisition metadata comes from.
#[derive(Debug, Clone, Default)]
pub struct MetaSource {
    /// Read `<stem>.json` next to each image when present.
    pub sidecars: bool,
    /// Applies to every image; sidecar fields take precedence.
    pub global: AcquisitionMeta,
}

impl MetaSource {
    pub fn sidecars() -> Self {
        Self { sidecars: true, global: AcquisitionMeta::default() }
    }

    pub fn global(meta: AcquisitionMeta) -> Self {
        Self { sidecars: false, global: meta }
    }

    fn resolve(&self, image: &Path) -> Result<AcquisitionMeta, String> {
        if self.sidecars {
            let sidecar = image.with_extension("json");
            if sidecar.is_file() {
                let text = fs::read_to_string(&sidecar).map_err(|e| format!("{}: {e}", sidecar.display()))?;
                let meta: AcquisitionMeta =
                    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", sidecar.display()))?;
                return Ok(meta.or(&self.global));
            }
        }
        Ok(self.global)
    }
}

#[derive(Debug, Clone)]
pub struct ProcessOptions {
    pub format: OutputFormat,
    pub workers: usize,
    /// Forces a filter instead of deriving it from metadata.
    pub forced_mode: Option<FilterMode>,
}

impl Default for ProcessOptions {
    fn default() -> Self {
        Self { format: OutputFormat::Pgm, workers: 1, forced_mode: None }
    }
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "ppm")
    )
}

/// Image files in `dir`, sorted by path.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && is_image(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn read_classes(path: &Path) -> Result<Vec<String>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn process_one(
    src: &Path,
    duplicate: bool,
    meta_source: &MetaSource,
    out_dir: &Path,
    opts: &ProcessOptions,
    num_classes: Option<usize>,
) -> ManifestRecord {
    if duplicate {
        return ManifestRecord::failed(src, "output name collides with an earlier input".into());
    }
    let (mode, elevation_deg) = match opts.forced_mode {
        Some(m) => (m, None),
        None => match meta_source.resolve(src).and_then(|m| m.elevation().map_err(|e| e.to_string())) {
            Ok(e) => (crate::select::mode_for_elevation(e), Some(e)),
            Err(e) => return ManifestRecord::failed(src, e),
        },
    };
    let img = match raster::load_rgb(src) {
        Ok(img) => img,
        Err(e) => return ManifestRecord::failed(src, e.to_string()),
    };
    let stats: ChannelStats<f64> = stats_of(&pooled_histogram(&img)).expect("non-empty image");
    let selection = selection_for_mode(mode, &stats);
    let out_path = opts.format.output_path(out_dir, src);
    if let Err(e) = raster::save_gray(&convert(&img, &selection.spec), &out_path) {
        return ManifestRecord::failed(src, e.to_string());
    }

    let mut warnings = Vec::new();
    if selection.fallback {
        warnings.push("weight rule degenerated; default conversion used".to_string());
    }
    let mut annotation_path = None;
    let mut class_id = None;
    let ann_src = src.with_extension("txt");
    if ann_src.is_file() {
        let ann_dst = out_path.with_extension("txt");
        match fs::read(&ann_src).and_then(|bytes| fs::write(&ann_dst, &bytes).map(|()| bytes)) {
            Ok(bytes) => {
                annotation_path = Some(ann_dst.display().to_string());
                match parse_annotations(&String::from_utf8_lossy(&bytes), num_classes) {
                    Ok(recs) => class_id = recs.first().map(|r| r.class_id),
                    Err(e) => warnings.push(format!("annotation: {e}")),
                }
            }
            Err(e) => return ManifestRecord::failed(src, format!("annotation copy: {e}")),
        }
    } else {
        warnings.push("no annotation file".to_string());
    }

    ManifestRecord {
        source_path: src.display().to_string(),
        output_path: Some(out_path.display().to_string()),
        annotation_path,
        status: Status::Ok,
        error: None,
        warnings,
        elevation_deg,
        mode: Some(mode),
        weights: Some(match selection.weights() {
            Some(w) => AppliedWeights::Weighted(w),
            None => AppliedWeights::Default(DefaultMarker::Default),
        }),
        stats: Some(stats),
        clamped: selection.clamped(),
        fallback: selection.fallback,
        class_id,
        split: None,
    }
}

/// Converts every image in `image_dir` into `out_dir`, copies annotations
/// and `classes.txt`, and writes `manifest.jsonl`.
pub fn process_dataset(
    image_dir: &Path,
    meta_source: &MetaSource,
    out_dir: &Path,
    opts: &ProcessOptions,
) -> Result<Manifest, DatasetError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let paths = list_images(image_dir)?;
    let classes_src = image_dir.join(CLASSES_FILE);
    let num_classes = if classes_src.is_file() {
        let dst = out_dir.join(CLASSES_FILE);
        fs::copy(&classes_src, &dst).map_err(io_err(&dst))?;
        Some(read_classes(&classes_src)?.len())
    } else {
        None
    };
    let dup = duplicate_outputs(&paths, opts.format, out_dir);
    let jobs: Vec<(&PathBuf, bool)> = paths.iter().zip(dup).collect();
    let records = run_ordered(&jobs, opts.workers, |&(src, d)| {
        process_one(src, d, meta_source, out_dir, opts, num_classes)
    });
    let manifest = Manifest { records };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify_by_class: bool,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self, DatasetError> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(DatasetError::InvalidFraction(train_fraction));
        }
        Ok(Self { train_fraction, seed, stratify_by_class: false })
    }

    pub fn stratified(mut self) -> Self {
        self.stratify_by_class = true;
        self
    }
}

/// Number of training items out of `n`, rounded half away from zero.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n)
}

/// Labels every successful record train or test. Records are visited in
/// source-path order and shuffled with SplitMix64 seeded by `spec.seed`, so
/// the partition depends only on the record set and the seed.
pub fn split_dataset(manifest: &Manifest, spec: &SplitSpec) -> Result<Manifest, DatasetError> {
    SplitSpec::new(spec.train_fraction, spec.seed)?;
    let mut ok: Vec<usize> = (0..manifest.records.len()).filter(|&i| manifest.records[i].is_ok()).collect();
    if ok.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    ok.sort_by(|&a, &b| manifest.records[a].source_path.cmp(&manifest.records[b].source_path));

    let groups: Vec<Vec<usize>> = if spec.stratify_by_class {
        let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for &i in &ok {
            let rec = &manifest.records[i];
            let c = rec.class_id.ok_or_else(|| DatasetError::ClassUnknown(rec.source_path.clone()))?;
            by_class.entry(c).or_default().push(i);
        }
        by_class.into_values().collect()
    } else {
        vec![ok]
    };

    let mut out = manifest.clone();
    for r in &mut out.records {
        r.split = None;
    }
    let mut rng = SplitMix64::new(spec.seed);
    for mut group in groups {
        rng.shuffle(&mut group);
        let n_train = train_count(group.len(), spec.train_fraction);
        for (k, i) in group.into_iter().enumerate() {
            out.records[i].split = Some(if k < n_train { Split::Train } else { Split::Test });
        }
    }
    Ok(out)
}

/// Writes darknet-style `train.txt` and `test.txt` listing output paths as
/// stored in the manifest.
pub fn emit_filelists(manifest: &Manifest, out_dir: &Path) -> Result<(PathBuf, PathBuf), DatasetError> {
    let mut train = String::new();
    let mut test = String::new();
    for r in manifest.successes() {
        let path = r.output_path.as_deref().ok_or_else(|| DatasetError::UnsplitManifest(r.source_path.clone()))?;
        let list = match r.split {
            Some(Split::Train) => &mut train,
            Some(Split::Test) => &mut test,
            None => return Err(DatasetError::UnsplitManifest(r.source_path.clone())),
        };
        list.push_str(path);
        list.push('\n');
    }
    if train.is_empty() {
        return Err(DatasetError::EmptySplit("train"));
    }
    if test.is_empty() {
        return Err(DatasetError::EmptySplit("test"));
    }
    let train_path = out_dir.join(TRAIN_LIST);
    let test_path = out_dir.join(TEST_LIST);
    write_all(&train_path, train.as_bytes())?;
    write_all(&test_path, test.as_bytes())?;
    Ok((train_path, test_path))
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(name: &str, class_id: Option<u32>) -> ManifestRecord {
        let mut r = ManifestRecord::failed(Path::new(name), String::new());
        r.status = Status::Ok;
        r.error = None;
        r.output_path = Some(format!("out/{name}.pgm"));
        r.class_id = class_id;
        r
    }

    fn manifest(n: usize) -> Manifest {
        Manifest { records: (0..n).map(|i| rec(&format!("img_{i:04}"), Some((i % 5) as u32))).collect() }
    }

    fn count(m: &Manifest, s: Split) -> usize {
        m.records.iter().filter(|r| r.split == Some(s)).count()
    }

    #[test]
    fn annotation_parsing() {
        let recs = parse_annotations("0 0.5 0.5 0.1 0.2\n\n3 0.1 0.9 0.05 0.05\n", Some(5)).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].class_id, 3);
        assert!(parse_annotations("5 0.5 0.5 0.1 0.1", Some(5)).is_err());
        assert!(parse_annotations("0 1.5 0.5 0.1 0.1", None).is_err());
        assert!(parse_annotations("0 0.5 0.5 0.1", None).is_err());
        assert_eq!(format_annotations(&recs[..1]), "0 0.500000 0.500000 0.100000 0.200000\n");
    }

    #[test]
    fn plain_split_counts_and_reproducibility() {
        let m = manifest(100);
        let spec = SplitSpec::new(0.8, 42).unwrap();
        let a = split_dataset(&m, &spec).unwrap();
        assert_eq!((count(&a, Split::Train), count(&a, Split::Test)), (80, 20));
        assert_eq!(a, split_dataset(&m, &spec).unwrap());
        let b = split_dataset(&m, &SplitSpec::new(0.8, 43).unwrap()).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn split_ignores_record_order() {
        let m = manifest(30);
        let mut rev = m.clone();
        rev.records.reverse();
        let spec = SplitSpec::new(0.7, 9).unwrap();
        let a = split_dataset(&m, &spec).unwrap();
        let mut b = split_dataset(&rev, &spec).unwrap();
        b.records.reverse();
        assert_eq!(a, b);
    }

    #[test]
    fn smallest_split() {
        let a = split_dataset(&manifest(2), &SplitSpec::new(0.5, 1).unwrap()).unwrap();
        assert_eq!((count(&a, Split::Train), count(&a, Split::Test)), (1, 1));
    }

    #[test]
    fn stratified_table_counts() {
        let m = manifest(5 * 245);
        let spec = SplitSpec::new(220.0 / 245.0, 3).unwrap().stratified();
        let a = split_dataset(&m, &spec).unwrap();
        for c in 0..5 {
            let train = a.records.iter().filter(|r| r.class_id == Some(c) && r.split == Some(Split::Train)).count();
            let test = a.records.iter().filter(|r| r.class_id == Some(c) && r.split == Some(Split::Test)).count();
            assert_eq!((train, test), (220, 25));
        }
    }

    #[test]
    fn split_errors() {
        assert!(matches!(SplitSpec::new(1.0, 0), Err(DatasetError::InvalidFraction(_))));
        assert!(matches!(SplitSpec::new(0.0, 0), Err(DatasetError::InvalidFraction(_))));
        assert!(matches!(
            split_dataset(&Manifest::default(), &SplitSpec::new(0.8, 0).unwrap()),
            Err(DatasetError::EmptyManifest)
        ));
        let m = Manifest { records: vec![rec("a", None), rec("b", Some(1))] };
        assert!(matches!(
            split_dataset(&m, &SplitSpec::new(0.5, 0).unwrap().stratified()),
            Err(DatasetError::ClassUnknown(_))
        ));
    }

    #[test]
    fn error_records_are_not_split() {
        let mut m = manifest(10);
        m.records.push(ManifestRecord::failed(Path::new("broken.png"), "corrupt".into()));
        let a = split_dataset(&m, &SplitSpec::new(0.8, 5).unwrap()).unwrap();
        assert_eq!(count(&a, Split::Train) + count(&a, Split::Test), 10);
        assert_eq!(a.records.last().unwrap().split, None);
    }

    #[test]
    fn filelists() {
        let dir = tempfile::tempdir().unwrap();
        let m = split_dataset(&manifest(100), &SplitSpec::new(0.8, 7).unwrap()).unwrap();
        let (train, test) = emit_filelists(&m, dir.path()).unwrap();
        let train = fs::read_to_string(train).unwrap();
        let test = fs::read_to_string(test).unwrap();
        assert_eq!(train.lines().count(), 80);
        assert_eq!(test.lines().count(), 20);
        assert!(train.lines().chain(test.lines()).all(|l| l.starts_with("out/img_")));

        assert!(matches!(emit_filelists(&manifest(3), dir.path()), Err(DatasetError::UnsplitManifest(_))));
        let one = split_dataset(&manifest(1), &SplitSpec::new(0.8, 7).unwrap()).unwrap();
        assert!(matches!(emit_filelists(&one, dir.path()), Err(DatasetError::EmptySplit("test"))));
    }

    #[test]
    fn manifest_jsonl_round_trip() {
        let m = split_dataset(&manifest(4), &SplitSpec::new(0.5, 1).unwrap()).unwrap();
        let text = m.to_jsonl();
        assert_eq!(Manifest::from_jsonl(&text).unwrap(), m);
        let mut r = rec("x", None);
        r.weights = Some(AppliedWeights::Default(DefaultMarker::Default));
        assert!(serde_json::to_string(&r).unwrap().contains(r#""weights":"default""#));
    }
}
