//! Binary parameter checkpoints.
//!
//! Layout (little-endian):
//! - magic `MLPST1` (6 bytes)
//! - manifest length in bytes: u64
//! - manifest: UTF-8 text with `[config]`, `[meta]` and `[tensors]` sections;
//!   config and meta lines are `key=value`, tensor lines are
//!   `name rows cols offset` with `offset` counted in f64 elements
//! - payload: raw f64 values of every tensor, row-major, in manifest order

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Mat;

pub const MAGIC: &[u8; 6] = b"MLPST1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub config: Vec<(String, String)>,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Mat)>,
}

fn check_token(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\n', '\r']) || (kind == "tensor name" && s.contains(' ')) {
        return Err(Error::config(format!("{kind} {s:?} cannot be stored in a checkpoint")));
    }
    Ok(())
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Mat> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut manifest = String::from("[config]\n");
        for (k, v) in &self.config {
            check_token("config key", k)?;
            check_token("config value", v)?;
            manifest.push_str(&format!("{k}={v}\n"));
        }
        manifest.push_str("[meta]\n");
        for (k, v) in &self.meta {
            check_token("meta key", k)?;
            check_token("meta value", v)?;
            manifest.push_str(&format!("{k}={v}\n"));
        }
        manifest.push_str("[tensors]\n");
        let mut offset = 0usize;
        for (name, m) in &self.tensors {
            check_token("tensor name", name)?;
            manifest.push_str(&format!("{name} {} {} {offset}\n", m.rows(), m.cols()));
            offset += m.len();
        }
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + manifest.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        for (_, m) in &self.tensors {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::format(0, "missing MLPST1 magic"));
        }
        let len_at = MAGIC.len();
        let len_bytes: [u8; 8] = bytes
            .get(len_at..len_at + 8)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| Error::format(len_at as u64, "truncated manifest length"))?;
        let manifest_len = u64::from_le_bytes(len_bytes) as usize;
        let text_at = len_at + 8;
        let text = bytes
            .get(text_at..text_at.saturating_add(manifest_len))
            .ok_or_else(|| {
                Error::format(
                    text_at as u64,
                    format!(
                        "manifest of {manifest_len} bytes runs past end of {}-byte file",
                        bytes.len()
                    ),
                )
            })?;
        let text = std::str::from_utf8(text)
            .map_err(|e| Error::format(text_at as u64 + e.valid_up_to() as u64, "manifest is not UTF-8"))?;
        let payload_at = text_at + manifest_len;
        let payload = &bytes[payload_at..];

        let mut ckpt = Checkpoint::default();
        let mut section = "";
        let mut expected = 0usize;
        for line in text.lines() {
            if line.starts_with('[') {
                section = line;
                continue;
            }
            let bad = |what: &str| Error::format(text_at as u64, format!("{what}: {line:?}"));
            match section {
                "[config]" | "[meta]" => {
                    let (k, v) = line.split_once('=').ok_or_else(|| bad("malformed entry"))?;
                    let dst = if section == "[config]" {
                        &mut ckpt.config
                    } else {
                        &mut ckpt.meta
                    };
                    dst.push((k.to_string(), v.to_string()));
                }
                "[tensors]" => {
                    let fields: Vec<&str> = line.split(' ').collect();
                    if fields.len() != 4 {
                        return Err(bad("malformed tensor entry"));
                    }
                    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad tensor number"));
                    let (rows, cols, offset) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
                    if offset != expected {
                        return Err(bad("tensor offsets are not contiguous"));
                    }
                    let n = rows * cols;
                    let start = offset * 8;
                    let raw = payload.get(start..start + n * 8).ok_or_else(|| {
                        Error::format(
                            (payload_at + payload.len()) as u64,
                            format!(
                                "payload truncated: tensor {} needs bytes up to {}, file has {}",
                                fields[0],
                                payload_at + start + n * 8,
                                bytes.len()
                            ),
                        )
                    })?;
                    let data = raw
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    ckpt.tensors.push((fields[0].to_string(), Mat::from_vec(rows, cols, data)));
                    expected += n;
                }
                _ => return Err(bad("entry outside a section")),
            }
        }
        if payload.len() != expected * 8 {
            return Err(Error::format(
                (payload_at + expected * 8) as u64,
                format!(
                    "payload holds {} bytes, manifest describes {}",
                    payload.len(),
                    expected * 8
                ),
            ));
        }
        Ok(ckpt)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}
