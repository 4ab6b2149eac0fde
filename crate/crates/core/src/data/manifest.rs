//! Patient manifest CSV: `patient_id,path,patient_label,split`. The split
//! column is empty until the split stage has run; paths are relative to the
//! manifest's directory unless absolute.

use std::fmt::Write as _;

use super::split::SplitName;
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "patient_id,path,patient_label,split";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub patient_id: String,
    pub path: String,
    pub patient_label: u8,
    pub split: Option<SplitName>,
}

pub fn manifest_to_csv(rows: &[ManifestRow]) -> String {
    let mut s = format!("{MANIFEST_HEADER}\n");
    for r in rows {
        let split = r.split.map_or("", SplitName::as_str);
        writeln!(s, "{},{},{},{}", r.patient_id, r.path, r.patient_label, split).expect("string write");
    }
    s
}

pub fn manifest_from_csv(text: &str) -> Result<Vec<ManifestRow>> {
    let mut lines = crate::io::data_lines(text);
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::invalid(format!("manifest must start with {MANIFEST_HEADER:?}")));
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 || f[0].is_empty() {
                return Err(Error::invalid(format!("bad manifest row {l:?}")));
            }
            let patient_label = match f[2] {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::InvalidLabels(format!("patient label {other:?}"))),
            };
            let split = if f[3].is_empty() { None } else { Some(SplitName::parse(f[3])?) };
            Ok(ManifestRow {
                patient_id: f[0].to_string(),
                path: f[1].to_string(),
                patient_label,
                split,
            })
        })
        .collect()
}
