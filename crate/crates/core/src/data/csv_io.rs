use std::path::Path;

use super::{DomainDataset, DomainTag, Example};
use crate::error::{OsdaError, Result};

/// Write a vector-valued dataset as CSV with header `dim0..dimN,label,domain`.
/// Missing labels are written as empty fields. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_csv(ds: &DomainDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let dim = ds.sample_len();
    let mut header: Vec<String> = (0..dim).map(|d| format!("dim{d}")).collect();
    header.push("label".into());
    header.push("domain".into());
    w.write_record(&header)?;
    for ex in ds.examples() {
        let mut row: Vec<String> = ex.data.iter().map(|v| format!("{v:?}")).collect();
        row.push(ex.label.map(|l| l.to_string()).unwrap_or_default());
        row.push(ex.domain.as_str().into());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| OsdaError::io(path, e))?;
    Ok(())
}

/// Read a CSV written by [`write_csv`]. Every row must carry the same domain.
pub fn read_csv(
    path: impl AsRef<Path>,
    name: &str,
    class_names: Vec<String>,
) -> Result<DomainDataset> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let n = header.len();
    if n < 3 || &header[n - 2] != "label" || &header[n - 1] != "domain" {
        return Err(OsdaError::invalid(format!(
            "{}: expected header dim0..dimN,label,domain",
            path.display()
        )));
    }
    let dim = n - 2;
    for (d, h) in header.iter().take(dim).enumerate() {
        if h != format!("dim{d}") {
            return Err(OsdaError::invalid(format!("{}: unexpected column `{h}`", path.display())));
        }
    }
    let mut examples = Vec::new();
    let mut tag = None;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| OsdaError::invalid(format!("{} row {}: bad {what}", path.display(), line + 1));
        let data = (0..dim)
            .map(|d| rec[d].parse::<f64>().map_err(|_| bad("value")))
            .collect::<Result<Vec<_>>>()?;
        let label = match &rec[dim] {
            "" => None,
            s => Some(s.parse::<usize>().map_err(|_| bad("label"))?),
        };
        let domain: DomainTag = rec[dim + 1].parse()?;
        if *tag.get_or_insert(domain) != domain {
            return Err(bad("domain (mixed domains in one file)"));
        }
        examples.push(Example { data, label, domain });
    }
    DomainDataset::new(name, tag.unwrap_or(DomainTag::Target), vec![dim], class_names, examples)
}
