//! Append-only ndjson trial log: one JSON object per line, written after
//! each trial completes, so an interrupted search resumes from where it
//! stopped.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{ParamDomain, ParamValue, SearchSpace, TpeError, Trial, TrialStatus};

pub fn append_trial(path: &Path, trial: &Trial) -> Result<(), TpeError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_string(trial)?;
    line.push('\n');
    f.write_all(line.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Reads a log back, validating every line against the search space.
/// Values whose JSON form lost the int/float distinction (an integer-
/// valued float serializes without a fraction) are coerced using the
/// domain.
pub fn read_trial_log(path: &Path, space: &SearchSpace) -> Result<Vec<Trial>, TpeError> {
    let f = std::fs::File::open(path)?;
    let mut trials = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut trial: Trial = serde_json::from_str(&line)
            .map_err(|e| TpeError::Log(format!("line {}: {e}", lineno + 1)))?;
        for (name, value) in trial.params.iter_mut() {
            let domain = space.get(name).ok_or_else(|| {
                TpeError::Log(format!("line {}: unknown parameter {name}", lineno + 1))
            })?;
            coerce(value, domain);
            if !domain.contains(value) {
                return Err(TpeError::Log(format!(
                    "line {}: parameter {name} value {value:?} violates its domain",
                    lineno + 1
                )));
            }
        }
        match trial.status {
            TrialStatus::Ok if !trial.objective.is_some_and(f64::is_finite) => {
                return Err(TpeError::Log(format!(
                    "line {}: ok trial without finite objective",
                    lineno + 1
                )));
            }
            TrialStatus::Failed if trial.objective.is_some() => {
                return Err(TpeError::Log(format!(
                    "line {}: failed trial carries an objective",
                    lineno + 1
                )));
            }
            _ => {}
        }
        trials.push(trial);
    }
    Ok(trials)
}

fn coerce(value: &mut ParamValue, domain: &ParamDomain) {
    match (domain, &*value) {
        (ParamDomain::Uniform { .. } | ParamDomain::LogUniform { .. }, ParamValue::Int(i)) => {
            *value = ParamValue::Float(*i as f64);
        }
        (ParamDomain::Int { .. }, ParamValue::Float(x)) if x.fract() == 0.0 => {
            *value = ParamValue::Int(*x as i64);
        }
        _ => {}
    }
}
