//! Episode trace rows and their CSV serialization.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "t,v_o,i_l,duty,p_cpl,e,reward,action_index";

/// One sampled control step (or one simulator step for the PI baseline).
/// `reward` and `action_index` are empty for baseline runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub v_o: f64,
    pub i_l: f64,
    pub duty: f64,
    pub p_cpl: f64,
    pub e: f64,
    pub reward: Option<f64>,
    pub action_index: Option<usize>,
}

pub fn write_trace<W: Write>(mut w: W, rows: &[TraceRow]) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in rows {
        let reward = r.reward.map(|v| v.to_string()).unwrap_or_default();
        let action = r.action_index.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.t, r.v_o, r.i_l, r.duty, r.p_cpl, r.e, reward, action
        )?;
    }
    Ok(())
}

pub fn save_trace<P: AsRef<Path>>(path: P, rows: &[TraceRow]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(std::io::BufWriter::new(file), rows)
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::new();
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or(Error::EmptyTrace)?
        .map_err(Error::from)?;
    if header.trim() != TRACE_HEADER {
        return Err(Error::Config(format!("unexpected trace header {header:?}")));
    }
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Config(format!(
                "trace line {}: expected 8 fields, got {}",
                idx + 2,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("trace line {}: bad number {:?}", idx + 2, fields[i])))
        };
        let reward = if fields[6].trim().is_empty() { None } else { Some(num(6)?) };
        let action_index = if fields[7].trim().is_empty() {
            None
        } else {
            Some(fields[7].trim().parse().map_err(|_| {
                Error::Config(format!("trace line {}: bad action index {:?}", idx + 2, fields[7]))
            })?)
        };
        rows.push(TraceRow {
            t: num(0)?,
            v_o: num(1)?,
            i_l: num(2)?,
            duty: num(3)?,
            p_cpl: num(4)?,
            e: num(5)?,
            reward,
            action_index,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(rows)
}

pub fn load_trace<P: AsRef<Path>>(path: P) -> Result<Vec<TraceRow>> {
    let file = std::fs::File::open(path)?;
    read_trace(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, v: f64) -> TraceRow {
        TraceRow {
            t,
            v_o: v,
            i_l: 1.5,
            duty: 0.5,
            p_cpl: 300.0,
            e: v - 100.0,
            reward: Some(0.25),
            action_index: Some(3),
        }
    }

    #[test]
    fn round_trip_preserves_rows_exactly() {
        let rows = vec![
            row(0.0, 80.0),
            row(1e-5, 80.123456789012345),
            TraceRow { reward: None, action_index: None, ..row(2e-5, 99.5) },
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &rows).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn empty_trace_is_an_error() {
        let buf = format!("{TRACE_HEADER}\n");
        assert!(matches!(read_trace(buf.as_bytes()), Err(Error::EmptyTrace)));
    }

    #[test]
    fn malformed_lines_are_reported_with_line_numbers() {
        let buf = format!("{TRACE_HEADER}\n1,2,3\n");
        match read_trace(buf.as_bytes()) {
            Err(Error::Config(msg)) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
