//! Line-oriented pulse tables.
//!
//! ```text
//! # label = hahn
//! # total_us = 10
//! # ratio = inf
//! # time_us angle_deg phase_deg
//! 0 90 0
//! 5 180 0
//! ```
//!
//! Blank lines and other `#` comments are ignored. `total_us` is required;
//! `label` and `ratio` (a number or `inf`) are optional.

use std::io::{BufRead, Write};

use super::{Pulse, PulseSequence};
use crate::{Error, Result};

pub fn write_table<W: Write>(seq: &PulseSequence, mut out: W) -> Result<()> {
    writeln!(out, "# label = {}", seq.label())?;
    writeln!(out, "# total_us = {}", seq.total_time() * 1e6)?;
    if let Some(r) = seq.target_ratio() {
        if r.is_infinite() {
            writeln!(out, "# ratio = inf")?;
        } else {
            writeln!(out, "# ratio = {r}")?;
        }
    }
    writeln!(out, "# time_us angle_deg phase_deg")?;
    for p in seq.pulses() {
        writeln!(
            out,
            "{} {} {}",
            p.time * 1e6,
            p.angle.to_degrees(),
            p.phase.to_degrees()
        )?;
    }
    Ok(())
}

pub fn read_table<R: BufRead>(input: R) -> Result<PulseSequence> {
    let mut pulses = Vec::new();
    let mut total = None;
    let mut label = String::from("custom");
    let mut ratio = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(c) = text.strip_prefix('#') {
            if let Some((key, value)) = c.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "total_us" => total = Some(number(value, lineno)? * 1e-6),
                    "label" => label = value.to_string(),
                    "ratio" => {
                        ratio = Some(if value.eq_ignore_ascii_case("inf") {
                            f64::INFINITY
                        } else {
                            number(value, lineno)?
                        })
                    }
                    _ => {}
                }
            }
            continue;
        }
        let cols: Vec<&str> = text.split_whitespace().collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected 3 columns, found {}", cols.len()),
            });
        }
        pulses.push(Pulse::new(
            number(cols[0], lineno)? * 1e-6,
            number(cols[1], lineno)?.to_radians(),
            number(cols[2], lineno)?.to_radians(),
        ));
    }
    let total = total.ok_or(Error::Parse {
        line: 0,
        reason: "missing `# total_us = ...` directive".into(),
    })?;
    PulseSequence::new(pulses, total, label, ratio)
}

fn number(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse {
        line,
        reason: format!("`{s}` is not a number"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let s = PulseSequence::xy8(1, 20e-6).unwrap();
        let mut buf = Vec::new();
        write_table(&s, &mut buf).unwrap();
        let back = read_table(buf.as_slice()).unwrap();
        assert_eq!(back.pulses().len(), s.pulses().len());
        assert_eq!(back.label(), "xy8-1");
        assert_eq!(back.target_ratio(), Some(f64::INFINITY));
        for (a, b) in back.pulses().iter().zip(s.pulses()) {
            assert!((a.time - b.time).abs() < 1e-18);
            assert!((a.angle - b.angle).abs() < 1e-12);
            assert!((a.phase - b.phase).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_line_numbers() {
        let text = "# total_us = 10\n0 90 0\n5 x 0\n";
        match read_table(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_table("0 90 0\n".as_bytes()).is_err());
    }
}
