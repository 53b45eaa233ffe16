//! Detections CSV as written by `detect`.

use std::collections::BTreeSet;
use std::path::Path;

use detpipe::classes::FastenerClass;
use detpipe::eval::Detection;
use detpipe::geometry::BBox;
use detpipe::pipeline::DETECTIONS_HEADER;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRow {
    pub image: String,
    pub detection: Detection,
}

pub fn parse_detections(text: &str, origin: &Path) -> Result<Vec<DetectionRow>, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CliError::input(format!("{}: {e}", origin.display())))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != DETECTIONS_HEADER {
        return Err(CliError::input(format!(
            "{}: expected header {DETECTIONS_HEADER:?}, got {header:?}",
            origin.display()
        )));
    }
    let mut rows = Vec::new();
    let mut unknown = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| CliError::input(format!("{}: {e}", origin.display())))?;
        let class = match record[1].parse::<FastenerClass>() {
            Ok(c) => c,
            Err(_) => {
                unknown.insert(record[1].to_string());
                continue;
            }
        };
        let num = |k: usize| {
            record[k].parse::<f64>().map_err(|_| {
                CliError::input(format!("{}:{line}: bad number {:?}", origin.display(), &record[k]))
            })
        };
        let score = num(2)?;
        let bbox = BBox::new(num(3)?, num(4)?, num(5)?, num(6)?)
            .map_err(|e| CliError::input(format!("{}:{line}: {e}", origin.display())))?;
        rows.push(DetectionRow {
            image: record[0].to_string(),
            detection: Detection { class, bbox, score },
        });
    }
    if !unknown.is_empty() {
        let names: Vec<String> = unknown.into_iter().collect();
        return Err(CliError::input(format!(
            "{}: unknown class names: {}",
            origin.display(),
            names.join(", ")
        )));
    }
    Ok(rows)
}
