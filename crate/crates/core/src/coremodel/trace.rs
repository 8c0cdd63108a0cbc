//! Packet trace files: one hex word per line, 16 digits for input packets
//! and 8 digits for output packets. Blank lines and `#` comments are skipped.

use std::io::{BufRead, Write};
use std::path::Path;

use super::core::CoreState;
use super::packet::{OutPacket, Packet};
use crate::error::{Error, Result};

pub fn read_input_trace<R: BufRead>(input: R, origin: &Path) -> Result<Vec<Packet>> {
    read_words(input, origin, 16, |w| Packet(w))
}

pub fn read_output_trace<R: BufRead>(input: R, origin: &Path) -> Result<Vec<OutPacket>> {
    read_words(input, origin, 8, |w| OutPacket(w as u32))
}

fn read_words<R: BufRead, T>(input: R, origin: &Path, digits: usize, wrap: impl Fn(u64) -> T) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let word = line.split('#').next().unwrap_or("").trim();
        if word.is_empty() {
            continue;
        }
        let word = word.strip_prefix("0x").unwrap_or(word);
        let parsed = (word.len() == digits && word.bytes().all(|b| b.is_ascii_hexdigit()))
            .then(|| u64::from_str_radix(word, 16).ok())
            .flatten();
        match parsed {
            Some(w) => out.push(wrap(w)),
            None => {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: format!("expected {digits} hex digits, found `{word}`"),
                })
            }
        }
    }
    Ok(out)
}

pub fn write_input_trace<W: Write>(packets: &[Packet], mut out: W) -> Result<()> {
    for p in packets {
        writeln!(out, "{:016x}", p.word())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_output_trace<W: Write>(packets: &[OutPacket], mut out: W) -> Result<()> {
    for p in packets {
        writeln!(out, "{:08x}", p.word())?;
    }
    out.flush()?;
    Ok(())
}

/// Feeds every packet through the core and collects the responses.
pub fn replay(core: &mut CoreState, packets: &[Packet]) -> Result<Vec<OutPacket>> {
    let mut out = Vec::new();
    for p in packets {
        if let Some(o) = core.step(*p)? {
            out.push(o);
        }
    }
    Ok(out)
}
