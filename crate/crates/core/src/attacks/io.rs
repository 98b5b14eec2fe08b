use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a score cache: the hinge score of a query under one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub query_id: usize,
    pub model_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub query_id: usize,
    pub attack: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub is_member: bool,
}

fn to_csv_bytes<T: Serialize>(rows: &[T], header: &[&str], path: &Path) -> Result<Vec<u8>> {
    let fmt = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).map_err(fmt)?;
    for r in rows {
        w.serialize(r).map_err(fmt)?;
    }
    w.into_inner().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn write_score_cache(path: impl AsRef<Path>, rows: &[ScoreRow]) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_csv_bytes(rows, &["query_id", "model_id", "score"], path)?;
    crate::pipeline::write_atomic(path, &bytes)
}

pub fn read_score_cache(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>> {
    read_rows(path.as_ref())
}

pub fn read_decisions(path: impl AsRef<Path>) -> Result<Vec<DecisionRow>> {
    read_rows(path.as_ref())
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Format {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn write_decisions(path: impl AsRef<Path>, rows: &[DecisionRow]) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_csv_bytes(
        rows,
        &["query_id", "attack", "statistic", "p_value", "is_member"],
        path,
    )?;
    crate::pipeline::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_cache_round_trips() {
        let rows = vec![
            ScoreRow {
                query_id: 0,
                model_id: "target".into(),
                score: 0.1 + 0.2,
            },
            ScoreRow {
                query_id: 1,
                model_id: "reference_3".into(),
                score: -1e-300,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.csv");
        write_score_cache(&p, &rows).unwrap();
        assert_eq!(read_score_cache(&p).unwrap(), rows);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("query_id,model_id,score\n"));
    }

    #[test]
    fn decisions_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let rows = vec![DecisionRow {
            query_id: 4,
            attack: "bmia".into(),
            statistic: 2.5,
            p_value: None,
            is_member: true,
        }];
        write_decisions(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "query_id,attack,statistic,p_value,is_member\n4,bmia,2.5,,true\n");
    }
}
