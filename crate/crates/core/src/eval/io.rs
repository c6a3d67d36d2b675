use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One line of a generations JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub episode_id: String,
    pub system_id: String,
    pub text: String,
}

/// One row of the human-scores CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanScore {
    pub episode_id: String,
    pub system_id: String,
    pub evaluator_id: String,
    pub score: f64,
}

/// One row of a per-example score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub episode_id: String,
    pub system_id: String,
    pub split: String,
    pub score: f64,
}

pub fn read_generations(reader: impl BufRead, origin: &str) -> Result<Vec<Generation>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let g = serde_json::from_str(&line)
            .map_err(|e| EvalError::Parse(format!("{origin}:{}: {e}", i + 1)))?;
        out.push(g);
    }
    Ok(out)
}

pub fn load_generations(path: impl AsRef<Path>) -> Result<Vec<Generation>, EvalError> {
    let path = path.as_ref();
    read_generations(BufReader::new(fs::File::open(path)?), &path.display().to_string())
}

pub fn write_generations(mut writer: impl Write, rows: &[Generation]) -> Result<(), EvalError> {
    for g in rows {
        writeln!(writer, "{}", serde_json::to_string(g).expect("generation serializes"))?;
    }
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(reader: impl Read, origin: &str) -> Result<Vec<T>, EvalError> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| EvalError::Parse(format!("{origin} row {}: {e}", i + 1))))
        .collect()
}

fn write_csv<T: Serialize>(writer: impl Write, header: &[&str], rows: &[T]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(header).map_err(|e| EvalError::Parse(e.to_string()))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| EvalError::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_human_scores(reader: impl Read, origin: &str) -> Result<Vec<HumanScore>, EvalError> {
    let rows: Vec<HumanScore> = read_csv(reader, origin)?;
    if let Some(bad) = rows.iter().find(|r| !(0.0..=10.0).contains(&r.score)) {
        return Err(EvalError::Parse(format!(
            "{origin}: score {} for {}/{} outside 0..=10",
            bad.score, bad.system_id, bad.episode_id
        )));
    }
    Ok(rows)
}

pub fn load_human_scores(path: impl AsRef<Path>) -> Result<Vec<HumanScore>, EvalError> {
    let path = path.as_ref();
    read_human_scores(fs::File::open(path)?, &path.display().to_string())
}

pub fn write_human_scores(writer: impl Write, rows: &[HumanScore]) -> Result<(), EvalError> {
    write_csv(writer, &["episode_id", "system_id", "evaluator_id", "score"], rows)
}

pub fn read_example_scores(reader: impl Read, origin: &str) -> Result<Vec<ExampleScore>, EvalError> {
    read_csv(reader, origin)
}

pub fn load_example_scores(path: impl AsRef<Path>) -> Result<Vec<ExampleScore>, EvalError> {
    let path = path.as_ref();
    read_example_scores(fs::File::open(path)?, &path.display().to_string())
}

pub fn write_example_scores(writer: impl Write, rows: &[ExampleScore]) -> Result<(), EvalError> {
    write_csv(writer, &["episode_id", "system_id", "split", "score"], rows)
}
