//! Versioned text serialization of a [`ToyNet`].
//!
//! ```text
//! TOYNET 1
//! bins <min_angle> <bin_width> <num_bins>
//! layers <input_dim> <hidden> <activation>
//! params <count>
//! <one parameter per line, row-major, in the order W1 b1 (W b)×3>
//! ```
//!
//! Numbers use the shortest decimal form that parses back to the same
//! `f64`, so save/load is bit-exact.

use super::{Activation, BinSpec, LossError, ToyNet};
use std::fmt::Write as _;
use std::path::Path;

pub const TOYNET_MAGIC: &str = "TOYNET";
pub const TOYNET_VERSION: u32 = 1;

pub fn format_toynet(net: &ToyNet) -> String {
    let spec = net.spec();
    let mut s = String::with_capacity(net.num_params() * 24 + 128);
    let _ = writeln!(s, "{TOYNET_MAGIC} {TOYNET_VERSION}");
    let _ = writeln!(s, "bins {} {} {}", spec.min_angle(), spec.bin_width(), spec.num_bins());
    let _ = writeln!(
        s,
        "layers {} {} {}",
        net.input_dim(),
        net.hidden(),
        net.activation().name()
    );
    let _ = writeln!(s, "params {}", net.num_params());
    for p in net.params() {
        let _ = writeln!(s, "{p}");
    }
    s
}

fn bad(msg: impl Into<String>) -> LossError {
    LossError::InvalidConfig(format!("toynet file: {}", msg.into()))
}

fn header<'a>(line: Option<&'a str>, key: &str, fields: usize) -> Result<Vec<&'a str>, LossError> {
    let line = line.ok_or_else(|| bad(format!("missing {key} line")))?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != fields + 1 || parts[0] != key {
        return Err(bad(format!("expected `{key}` with {fields} fields, got {line:?}")));
    }
    Ok(parts[1..].to_vec())
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T, LossError> {
    s.parse().map_err(|_| bad(format!("invalid number {s:?}")))
}

pub fn parse_toynet(text: &str) -> Result<ToyNet, LossError> {
    let mut lines = text.lines();
    let magic = header(lines.next(), TOYNET_MAGIC, 1)?;
    let version: u32 = num(magic[0])?;
    if version != TOYNET_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let b = header(lines.next(), "bins", 3)?;
    let spec = BinSpec::new(num(b[0])?, num(b[1])?, num(b[2])?)?;
    let l = header(lines.next(), "layers", 3)?;
    let input_dim: usize = num(l[0])?;
    let hidden: usize = num(l[1])?;
    let activation: Activation = l[2].parse().map_err(bad)?;
    let count: usize = num(header(lines.next(), "params", 1)?[0])?;

    let params: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| num::<f64>(l.trim()))
        .collect::<Result<_, _>>()?;
    if params.len() != count {
        return Err(LossError::ShapeMismatch {
            expected: count,
            found: params.len(),
        });
    }
    if !params.iter().all(|p| p.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    ToyNet::from_parts(input_dim, hidden, spec, activation, params)
}

pub fn save_toynet(net: &ToyNet, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, format_toynet(net))
}

pub fn load_toynet(path: &Path) -> Result<ToyNet, LossError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("{}: {e}", path.display())))?;
    parse_toynet(&text)
}
