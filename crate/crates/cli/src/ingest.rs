//! CSV ingestion: comma-separated numeric columns, UTF-8, optional single
//! header row (detected when any cell of the first row fails to parse as a
//! number). Rows are observations in time order.

use std::path::Path;

use snstat::hash::fnv1a64;
use snstat::TimeSeries;

use crate::CliError;

#[derive(Debug)]
pub struct IngestResult {
    pub ts: TimeSeries,
    pub rows: usize,
    pub cols: usize,
    /// FNV-1a over the raw file bytes, echoed in reports.
    pub checksum: u64,
    pub header: Option<Vec<String>>,
}

pub fn ingest_csv(path: &Path) -> Result<IngestResult, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Ingest(format!("cannot read '{}': {e}", path.display())))?;
    let checksum = fnv1a64(&bytes);
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Ingest(format!("'{}' is not valid UTF-8", path.display())))?;

    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    if lines.is_empty() {
        return Err(CliError::Ingest(format!(
            "'{}' contains no data",
            path.display()
        )));
    }

    let first_cells: Vec<&str> = lines[0].1.split(',').map(str::trim).collect();
    let first_is_header = first_cells.iter().any(|c| c.parse::<f64>().is_err());
    let header = first_is_header.then(|| first_cells.iter().map(|s| s.to_string()).collect());
    let data_lines = if first_is_header {
        &lines[1..]
    } else {
        &lines[..]
    };
    if data_lines.is_empty() {
        return Err(CliError::Ingest(format!(
            "'{}' has a header but no data rows",
            path.display()
        )));
    }

    let cols = data_lines[0].1.split(',').count();
    let mut values = Vec::with_capacity(data_lines.len() * cols);
    for &(lineno, line) in data_lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != cols {
            return Err(CliError::Ingest(format!(
                "ragged row at line {lineno}: expected {cols} columns, found {}",
                cells.len()
            )));
        }
        for (ci, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Ingest(format!(
                    "non-numeric cell '{cell}' at line {lineno}, column {}",
                    ci + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Ingest(format!(
                    "non-finite value at line {lineno}, column {}",
                    ci + 1
                )));
            }
            values.push(v);
        }
    }
    let rows = data_lines.len();
    let ts = TimeSeries::new(values, rows, cols).map_err(|e| CliError::Ingest(e.to_string()))?;
    Ok(IngestResult {
        ts,
        rows,
        cols,
        checksum,
        header,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(name: &str, content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("snstat_ingest_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn plain_column() {
        let path = write_temp("a.csv", "1\n2\n3\n");
        let out = ingest_csv(&path).unwrap();
        assert_eq!((out.rows, out.cols), (3, 1));
        assert!(out.header.is_none());
    }

    #[test]
    fn header_detected() {
        let path = write_temp("b.csv", "a,b\n1,2\n3,4\n");
        let out = ingest_csv(&path).unwrap();
        assert_eq!((out.rows, out.cols), (2, 2));
        assert_eq!(out.header.unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn ragged_row_reports_line() {
        let path = write_temp("c.csv", "1,2\n3\n");
        let err = ingest_csv(&path).unwrap_err();
        assert!(err.message().contains("line 2"), "{}", err.message());
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn rejects_nan_and_inf() {
        let path = write_temp("d.csv", "1\nNaN\n");
        let err = ingest_csv(&path).unwrap_err();
        assert!(err.message().contains("line 2"), "{}", err.message());
        let path = write_temp("e.csv", "1\ninf\n");
        assert!(ingest_csv(&path).is_err());
    }

    #[test]
    fn empty_file_rejected() {
        let path = write_temp("f.csv", "");
        assert!(ingest_csv(&path).is_err());
        let path = write_temp("g.csv", "name\n");
        assert!(ingest_csv(&path).is_err());
    }

    #[test]
    fn checksum_tracks_bytes() {
        let p1 = write_temp("h1.csv", "1\n2\n");
        let p2 = write_temp("h2.csv", "1\n2\n");
        let p3 = write_temp("h3.csv", "1\n3\n");
        assert_eq!(
            ingest_csv(&p1).unwrap().checksum,
            ingest_csv(&p2).unwrap().checksum
        );
        assert_ne!(
            ingest_csv(&p1).unwrap().checksum,
            ingest_csv(&p3).unwrap().checksum
        );
    }
}
