//! `scan_id,vertebra_label,genant_grade,flags` with `|`-separated flags.

use std::path::Path;

use vcfscan_core::volume::{ExclusionFlags, GenantGrade, VertebraRecord};

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 4] = ["scan_id", "vertebra_label", "genant_grade", "flags"];

fn parse_flags(s: &str, path: &Path, line: u64) -> Result<ExclusionFlags> {
    let mut flags = ExclusionFlags::default();
    for f in s.split('|').map(str::trim).filter(|f| !f.is_empty()) {
        match f {
            "foreign_material" => flags.foreign_material = true,
            "single_vertebra" | "single_vertebra_scan" => flags.single_vertebra_scan = true,
            other => return Err(Error::format(path, format!("line {line}: unknown flag {other:?}"))),
        }
    }
    Ok(flags)
}

pub fn flags_text(flags: &ExclusionFlags) -> String {
    let mut out = Vec::new();
    if flags.foreign_material {
        out.push("foreign_material");
    }
    if flags.single_vertebra_scan {
        out.push("single_vertebra");
    }
    out.join("|")
}

pub fn parse(text: &str, path: &Path) -> Result<Vec<VertebraRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(path, format!("missing column {name}")))?;
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let label: u32 = field(1)
            .parse()
            .ok()
            .filter(|&l| l > 0)
            .ok_or_else(|| Error::format(path, format!("line {line}: bad vertebra_label {:?}", field(1))))?;
        let grade: u8 = field(2)
            .parse()
            .map_err(|_| Error::format(path, format!("line {line}: bad genant_grade {:?}", field(2))))?;
        let genant_grade = GenantGrade::new(grade).map_err(|_| {
            Error::Validation(format!("{}: line {line}: genant grade {grade} outside 0-3", path.display()))
        })?;
        out.push(VertebraRecord {
            scan_id: field(0).to_string(),
            vertebra_label: label,
            genant_grade,
            exclusion_flags: parse_flags(field(3), path, line)?,
        });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<VertebraRecord>> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    parse(&text, path)
}

pub fn write(records: &[VertebraRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(COLUMNS).map_err(err)?;
    for r in records {
        let label = r.vertebra_label.to_string();
        let grade = r.genant_grade.value().to_string();
        w.write_record([r.scan_id.as_str(), &label, &grade, &flags_text(&r.exclusion_flags)]).map_err(err)?;
    }
    w.flush().map_err(Error::io(path))
}
