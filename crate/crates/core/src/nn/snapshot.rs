//! Plain-text model snapshots.
//!
//! ```text
//! fluc-mlp v1
//! sizes 8 14 28 3
//! layer 1
//! w <N_1 values>        (one line per input row, N_0 lines)
//! b <N_1 values>
//! layer 2
//! ...
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a write/read cycle
//! reproduces the parameters bit for bit.

use std::fmt::Write as _;

use super::Mlp;
use crate::error::{Error, Result};

pub const SNAPSHOT_TAG: &str = "fluc-mlp v1";

pub fn write_snapshot(model: &Mlp) -> String {
    let mut out = String::new();
    let sizes = model.layer_sizes();
    writeln!(out, "{SNAPSHOT_TAG}").unwrap();
    write!(out, "sizes").unwrap();
    for s in &sizes {
        write!(out, " {s}").unwrap();
    }
    out.push('\n');
    for (i, layer) in model.layers.iter().enumerate() {
        writeln!(out, "layer {}", i + 1).unwrap();
        for row in layer.weights.chunks(layer.outputs) {
            out.push('w');
            for w in row {
                write!(out, " {w:?}").unwrap();
            }
            out.push('\n');
        }
        out.push('b');
        for b in &layer.biases {
            write!(out, " {b:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn parse_floats(line: &str, prefix: char, expected: usize) -> Result<Vec<f64>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(prefix.to_string().as_str()) {
        return Err(Error::Snapshot(format!(
            "expected a '{prefix}' line, got {line:?}"
        )));
    }
    let values = parts
        .map(|p| {
            p.parse::<f64>()
                .map_err(|e| Error::Snapshot(format!("bad float {p:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::Snapshot(format!(
            "expected {expected} values on '{prefix}' line, got {}",
            values.len()
        )));
    }
    Ok(values)
}

pub fn read_snapshot(text: &str) -> Result<Mlp> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let tag = lines
        .next()
        .ok_or_else(|| Error::Snapshot("empty snapshot".into()))?;
    if tag != SNAPSHOT_TAG {
        return Err(Error::Snapshot(format!("unsupported format tag {tag:?}")));
    }
    let sizes_line = lines
        .next()
        .ok_or_else(|| Error::Snapshot("missing sizes line".into()))?;
    let mut parts = sizes_line.split_whitespace();
    if parts.next() != Some("sizes") {
        return Err(Error::Snapshot(format!(
            "expected sizes line, got {sizes_line:?}"
        )));
    }
    let sizes = parts
        .map(|p| {
            p.parse::<usize>()
                .map_err(|e| Error::Snapshot(format!("bad size {p:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = Mlp::zeros(&sizes).map_err(|e| Error::Snapshot(e.to_string()))?;
    for (i, layer) in model.layers.iter_mut().enumerate() {
        let header = lines
            .next()
            .ok_or_else(|| Error::Snapshot(format!("missing layer {}", i + 1)))?;
        if header != format!("layer {}", i + 1) {
            return Err(Error::Snapshot(format!(
                "expected 'layer {}', got {header:?}",
                i + 1
            )));
        }
        for l in 0..layer.inputs {
            let line = lines
                .next()
                .ok_or_else(|| Error::Snapshot("truncated weights".into()))?;
            let row = parse_floats(line, 'w', layer.outputs)?;
            layer.weights[l * layer.outputs..(l + 1) * layer.outputs].copy_from_slice(&row);
        }
        let line = lines
            .next()
            .ok_or_else(|| Error::Snapshot("missing biases".into()))?;
        layer.biases = parse_floats(line, 'b', layer.outputs)?;
    }
    if let Some(extra) = lines.next() {
        return Err(Error::Snapshot(format!("trailing content {extra:?}")));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), h1 in 1usize..6, h2 in 1usize..6) {
            let model = Mlp::random(&[3, h1, h2, 2], &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let back = read_snapshot(&write_snapshot(&model)).unwrap();
            prop_assert_eq!(back.flat_params(), model.flat_params());
            prop_assert_eq!(back.layer_sizes(), model.layer_sizes());
        }
    }

    #[test]
    fn rejects_unknown_tag_and_truncation() {
        assert!(read_snapshot("fluc-mlp v0\nsizes 1 1 1\n").is_err());
        let text = write_snapshot(&Mlp::zeros(&[2, 2, 1]).unwrap());
        let cut: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(matches!(read_snapshot(&cut), Err(Error::Snapshot(_))));
    }
}
