//! Dataset manifests: per-image case records and their CSV serialization.
//!
//! The manifest is a UTF-8 CSV with the fixed header
//! `case_id,image_id,view,label,image_path,mask_path,split,bit_depth`.
//! Paths are stored as written and resolved relative to the manifest file's
//! directory, so fixture trees stay relocatable.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 8] = [
    "case_id",
    "image_id",
    "view",
    "label",
    "image_path",
    "mask_path",
    "split",
    "bit_depth",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum View {
    Mlo,
    Cc,
}

impl View {
    pub fn as_str(&self) -> &'static str {
        match self {
            View::Mlo => "MLO",
            View::Cc => "CC",
        }
    }

    pub fn parse(s: &str) -> Option<View> {
        match s {
            "MLO" => Some(View::Mlo),
            "CC" => Some(View::Cc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Label {
    Benign,
    Malignant,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malignant => "malignant",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "benign" => Some(Label::Benign),
            "malignant" => Some(Label::Malignant),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One image of one case. `mask_path` is optional for records that are never
/// used in detector training or evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRecord {
    pub case_id: String,
    pub image_id: String,
    pub view: View,
    pub label: Label,
    pub image_path: String,
    pub mask_path: Option<String>,
    pub split: Split,
    pub bit_depth: u8,
}

/// A validated collection of case records plus the directory paths resolve
/// against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<CaseRecord>,
    pub source_tag: String,
    root: PathBuf,
}

impl DatasetManifest {
    /// Builds a manifest from in-memory records, running the same validation
    /// as [`load_manifest`] minus file-existence checks.
    pub fn from_records(
        records: Vec<CaseRecord>,
        source_tag: impl Into<String>,
        root: impl Into<PathBuf>,
    ) -> Result<Self> {
        let manifest = DatasetManifest {
            records,
            source_tag: source_tag.into(),
            root: root.into(),
        };
        manifest.validate_records()?;
        Ok(manifest)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve_image_path(&self, record: &CaseRecord) -> PathBuf {
        self.root.join(&record.image_path)
    }

    pub fn resolve_mask_path(&self, record: &CaseRecord) -> Option<PathBuf> {
        record.mask_path.as_ref().map(|p| self.root.join(p))
    }

    /// Records restricted to one split, preserving order.
    pub fn split(&self, split: Split) -> Vec<&CaseRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    fn validate_records(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Validation("manifest has no records".into()));
        }
        let mut seen = HashSet::new();
        for rec in &self.records {
            let key = (rec.case_id.clone(), rec.image_id.clone());
            if !seen.insert(key) {
                return Err(Error::Validation(format!(
                    "duplicate (case_id, image_id) = ({}, {})",
                    rec.case_id, rec.image_id
                )));
            }
        }
        Ok(())
    }
}

/// Loads and validates a manifest CSV. Every invariant is checked: exact
/// header, enum fields, unique (case_id, image_id), referenced files present.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != MANIFEST_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!(
                "bad header: expected `{}`, got `{}`",
                MANIFEST_HEADER.join(","),
                got.join(",")
            ),
        ));
    }

    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let row = row.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if row.len() != MANIFEST_HEADER.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, got {}", MANIFEST_HEADER.len(), row.len()),
            ));
        }
        let field = |i: usize| row.get(i).unwrap().to_string();
        let view = View::parse(&field(2)).ok_or_else(|| {
            Error::parse(path, line, format!("field `view`: invalid value `{}`", field(2)))
        })?;
        let label = Label::parse(&field(3)).ok_or_else(|| {
            Error::parse(path, line, format!("field `label`: invalid value `{}`", field(3)))
        })?;
        let split = Split::parse(&field(6)).ok_or_else(|| {
            Error::parse(path, line, format!("field `split`: invalid value `{}`", field(6)))
        })?;
        let bit_depth: u8 = field(7).parse().map_err(|_| {
            Error::parse(path, line, format!("field `bit_depth`: invalid value `{}`", field(7)))
        })?;
        if !crate::raster::GrayImage::SUPPORTED_DEPTHS.contains(&bit_depth) {
            return Err(Error::parse(
                path,
                line,
                format!("field `bit_depth`: unsupported depth {bit_depth}"),
            ));
        }
        let mask = field(5);
        records.push(CaseRecord {
            case_id: field(0),
            image_id: field(1),
            view,
            label,
            image_path: field(4),
            mask_path: (!mask.is_empty()).then_some(mask),
            split,
            bit_depth,
        });
    }

    let manifest = DatasetManifest {
        records,
        source_tag: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "manifest".into()),
        root,
    };
    manifest.validate_records()?;

    for rec in &manifest.records {
        let img = manifest.resolve_image_path(rec);
        if !img.is_file() {
            return Err(Error::Validation(format!(
                "record ({}, {}): image file `{}` not found",
                rec.case_id, rec.image_id, rec.image_path
            )));
        }
        if let Some(mask) = manifest.resolve_mask_path(rec) {
            if !mask.is_file() {
                return Err(Error::Validation(format!(
                    "record ({}, {}): mask file `{}` not found",
                    rec.case_id,
                    rec.image_id,
                    rec.mask_path.as_deref().unwrap_or("")
                )));
            }
        }
    }
    Ok(manifest)
}

/// Writes the manifest in the exact CSV grammar [`load_manifest`] accepts.
pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    writer
        .write_record(MANIFEST_HEADER)
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    for rec in &manifest.records {
        writer
            .write_record([
                rec.case_id.as_str(),
                rec.image_id.as_str(),
                rec.view.as_str(),
                rec.label.as_str(),
                rec.image_path.as_str(),
                rec.mask_path.as_deref().unwrap_or(""),
                rec.split.as_str(),
                &rec.bit_depth.to_string(),
            ])
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Partitions records by case id. Within each group the manifest order is
/// preserved; groups iterate in sorted case-id order.
pub fn group_by_case(manifest: &DatasetManifest) -> BTreeMap<String, Vec<CaseRecord>> {
    let mut groups: BTreeMap<String, Vec<CaseRecord>> = BTreeMap::new();
    for rec in &manifest.records {
        groups.entry(rec.case_id.clone()).or_default().push(rec.clone());
    }
    groups
}
