//! File writers. Floats are printed with Rust's shortest round-trip
//! formatting, in CSV through `Display` and in JSON through `serde_json`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::error::CliError;

/// Empty for a missing value, the shortest round-trip form otherwise.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<(), CliError> {
    let mut text = String::with_capacity(4096);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    file.write_all(&bytes).map_err(|e| CliError::io(path, e))
}

/// 64-bit FNV-1a, used for stable cache keys and seed derivation.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 2.5e10, -0.0] {
            let s = fmt_opt(Some(x));
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_opt(None), "");
        assert_eq!(fmt_opt(Some(f64::INFINITY)), "inf");
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
