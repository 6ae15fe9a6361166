use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{DatasetMeta, MaterialDataset, PhaseState, PHASE_DIM};
use crate::error::{Error, Result};

pub const DATASET_HEADER: [&str; PHASE_DIM] = ["E11", "E22", "G12", "S11", "S22", "S12"];

pub fn write_dataset<W: Write>(dataset: &MaterialDataset, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{}", DATASET_HEADER.join(","))?;
    for p in dataset.points() {
        let z = p.to_array();
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            z[0], z[1], z[2], z[3], z[4], z[5]
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a dataset CSV. `source_name` labels errors and the dataset metadata.
pub fn read_dataset<R: Read>(input: R, source_name: &str) -> Result<MaterialDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        row,
        column,
        message,
    };
    let mut records = reader.records();
    let header = match records.next() {
        None => {
            return Err(Error::EmptyDataset {
                source_name: source_name.to_string(),
            })
        }
        Some(r) => r.map_err(|e| parse_err(1, 0, e.to_string()))?,
    };
    if header.len() != PHASE_DIM {
        return Err(parse_err(
            1,
            header.len().min(PHASE_DIM) + 1,
            format!(
                "expected header {}, found {} columns",
                DATASET_HEADER.join(","),
                header.len()
            ),
        ));
    }
    for (c, (got, want)) in header.iter().zip(DATASET_HEADER).enumerate() {
        if got != want {
            return Err(parse_err(
                1,
                c + 1,
                format!("expected column `{want}`, found `{got}`"),
            ));
        }
    }
    let mut points = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(row, 0, e.to_string()))?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != PHASE_DIM {
            return Err(parse_err(
                row,
                rec.len().min(PHASE_DIM) + 1,
                format!("expected {PHASE_DIM} fields, found {}", rec.len()),
            ));
        }
        let mut z = [0.0; PHASE_DIM];
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, c + 1, format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(row, c + 1, format!("`{cell}` is not finite")));
            }
            z[c] = v;
        }
        points.push(PhaseState::from_array(z));
    }
    if points.is_empty() {
        return Err(Error::EmptyDataset {
            source_name: source_name.to_string(),
        });
    }
    MaterialDataset::new(
        points,
        DatasetMeta {
            source: source_name.to_string(),
            ..DatasetMeta::default()
        },
    )
}

pub fn save_dataset(dataset: &MaterialDataset, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::file(path, e))?;
    write_dataset(dataset, f)
}

pub fn load_dataset(path: &Path) -> Result<MaterialDataset> {
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    read_dataset(f, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<MaterialDataset> {
        read_dataset(s.as_bytes(), "mem")
    }

    #[test]
    fn round_trip_is_exact() {
        let pts = vec![
            PhaseState::new(
                [0.1, -1.0 / 3.0, 2e-17],
                [96.0, -std::f64::consts::PI, 1e300],
            ),
            PhaseState::new([-0.0, 5e-324, 0.02], [1.0 / 7.0, 0.0, -48.5]),
        ];
        let ds = MaterialDataset::from_points(pts, "x").unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), "mem").unwrap();
        assert_eq!(back.points(), ds.points());
    }

    #[test]
    fn header_only_is_empty() {
        let err = parse("E11,E22,G12,S11,S22,S12\n").unwrap_err();
        assert!(err.to_string().contains("empty dataset"));
        assert!(parse("").unwrap_err().to_string().contains("empty dataset"));
    }

    #[test]
    fn short_row_names_row() {
        let err = parse("E11,E22,G12,S11,S22,S12\n1,2,3,4,5,6\n1,2,3,4,5\n").unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_cells_and_headers() {
        let err = parse("E11,E22,G12,S11,S22,S12\n1,2,x,4,5,6\n").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (2, 3)),
            e => panic!("unexpected {e}"),
        }
        assert!(parse("E11,E22,E12,S11,S22,S12\n1,2,3,4,5,6\n").is_err());
        assert!(parse("E11,E22,G12,S11,S22,S12,X\n1,2,3,4,5,6,7\n").is_err());
        assert!(parse("E11,E22,G12,S11,S22,S12\n1,2,3,4,5,6,7\n").is_err());
        assert!(parse("E11,E22,G12,S11,S22,S12\n1,2,3,4,5,NaN\n").is_err());
    }
}
