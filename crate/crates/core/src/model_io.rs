//! Plain-text model dump.
//!
//! ```text
//! onlad-model v1
//! n <n>
//! hidden <Ñ>
//! m <m>
//! activation <identity|sigmoid>
//! initialized <0|1>
//! alpha <n·Ñ values, row-major>
//! b <Ñ values>
//! beta <Ñ·m values, row-major>
//! p <Ñ·Ñ values, row-major>
//! gram <Ñ·Ñ values, row-major>        (optional, FP-ELM models only)
//! ```
//!
//! Values are space separated and printed in shortest round-trip form, so a
//! save/load cycle reproduces every `f64` bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{Activation, Matrix};
use crate::oselm::OselmModel;

const MAGIC: &str = "onlad-model v1";

pub fn write_model<W: Write>(model: &OselmModel, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "n {}", model.n())?;
    writeln!(out, "hidden {}", model.n_hidden())?;
    writeln!(out, "m {}", model.m())?;
    writeln!(out, "activation {}", model.activation())?;
    writeln!(out, "initialized {}", u8::from(model.is_initialized()))?;
    write_values(&mut out, "alpha", model.alpha())?;
    write_values(&mut out, "b", model.bias())?;
    write_values(&mut out, "beta", model.beta())?;
    write_values(&mut out, "p", model.p())?;
    if let Some(gram) = model.gram() {
        write_values(&mut out, "gram", gram)?;
    }
    out.flush()?;
    Ok(())
}

fn write_values<W: Write>(out: &mut W, key: &str, m: &Matrix) -> Result<()> {
    write!(out, "{key}")?;
    for v in m.as_slice() {
        write!(out, " {v:?}")?;
    }
    writeln!(out)?;
    Ok(())
}

pub fn read_model<R: BufRead>(input: R, origin: &Path) -> Result<OselmModel> {
    let mut lines = input.lines().enumerate();
    let mut next = |expected: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, line)) => Ok((i + 1, line?)),
            None => Err(Error::Parse {
                path: origin.to_path_buf(),
                line: 0,
                message: format!("unexpected end of file, expected `{expected}`"),
            }),
        }
    };
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let (ln, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(err(ln, format!("expected `{MAGIC}` header")));
    }

    let mut field = |key: &str| -> Result<(usize, String)> {
        let (ln, line) = next(key)?;
        let rest = line
            .strip_prefix(key)
            .filter(|r| r.is_empty() || r.starts_with(' '))
            .ok_or_else(|| err(ln, format!("expected field `{key}`")))?;
        Ok((ln, rest.trim().to_string()))
    };
    let parse_usize = |(ln, s): (usize, String)| -> Result<usize> {
        s.parse().map_err(|_| err(ln, format!("invalid integer `{s}`")))
    };

    let n = parse_usize(field("n")?)?;
    let hidden = parse_usize(field("hidden")?)?;
    let m = parse_usize(field("m")?)?;
    let (ln, act) = field("activation")?;
    let activation: Activation = act.parse().map_err(|_| err(ln, format!("unknown activation `{act}`")))?;
    let initialized = parse_usize(field("initialized")?)? != 0;

    let mut matrix = |key: &str, rows: usize, cols: usize| -> Result<Matrix> {
        let (ln, rest) = field(key)?;
        let values = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(ln, format!("invalid number `{t}` in `{key}`"))))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_vec(rows, cols, values).map_err(|_| err(ln, format!("`{key}` must hold {} values", rows * cols)))
    };
    let alpha = matrix("alpha", n, hidden)?;
    let b = matrix("b", 1, hidden)?;
    let beta = matrix("beta", hidden, m)?;
    let p = matrix("p", hidden, hidden)?;
    let mut model = OselmModel::from_parts(activation, alpha, b, beta, p, initialized)?;

    // Optional trailing FP-ELM state.
    match matrix("gram", hidden, hidden) {
        Ok(gram) => model.set_gram(Some(gram)),
        Err(Error::Parse { line: 0, .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(model)
}

pub fn save_model(model: &OselmModel, path: &Path) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: &Path) -> Result<OselmModel> {
    read_model(BufReader::new(File::open(path)?), path)
}
