//! One collection on disk: newline-delimited `{"crc32":"…","record":…}`.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::marker::PhantomData;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::StoreError;

#[derive(Deserialize)]
struct Line<'a> {
    crc32: &'a str,
    #[serde(borrow)]
    record: &'a RawValue,
}

#[derive(Serialize)]
struct LineOut<'a> {
    crc32: String,
    record: &'a RawValue,
}

fn checksum(bytes: &[u8]) -> String {
    format!("{:08x}", crc32fast::hash(bytes))
}

fn decode<R: DeserializeOwned>(line: &str) -> Result<R, String> {
    let l: Line = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let raw = l.record.get();
    if checksum(raw.as_bytes()) != l.crc32 {
        return Err(format!("checksum mismatch (stored {})", l.crc32));
    }
    serde_json::from_str(raw).map_err(|e| e.to_string())
}

pub(crate) fn encode<R: Serialize>(record: &R) -> Result<String, StoreError> {
    let raw = serde_json::to_string(record)?;
    let raw = RawValue::from_string(raw)?;
    let mut line = serde_json::to_string(&LineOut {
        crc32: checksum(raw.get().as_bytes()),
        record: &raw,
    })?;
    line.push('\n');
    Ok(line)
}

/// Append-only record log. Loading verifies every line; a damaged final
/// line (an interrupted append) is cut off, anything earlier is an error.
#[derive(Debug)]
pub(crate) struct RecordLog<R> {
    file: File,
    _record: PhantomData<R>,
}

impl<R: Serialize + DeserializeOwned> RecordLog<R> {
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<R>), StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        let mut records = Vec::new();
        let mut pos = 0;
        let mut lineno = 0;
        while pos < bytes.len() {
            lineno += 1;
            let newline = bytes[pos..].iter().position(|&b| b == b'\n').map(|i| pos + i);
            let (body, next) = match newline {
                Some(e) => (&bytes[pos..e], e + 1),
                None => (&bytes[pos..], bytes.len()),
            };
            let parsed = std::str::from_utf8(body).map_err(|e| e.to_string()).and_then(|s| {
                if s.trim().is_empty() {
                    Ok(None)
                } else {
                    decode::<R>(s).map(Some)
                }
            });
            match parsed {
                Ok(Some(r)) if newline.is_some() => records.push(r),
                Ok(None) if newline.is_some() => {}
                Err(msg) if next < bytes.len() => {
                    return Err(StoreError::Corrupt {
                        path,
                        line: lineno,
                        msg,
                    })
                }
                _ => {
                    tracing::warn!(path = %path.display(), line = lineno, "dropping incomplete final record");
                    file.set_len(pos as u64)?;
                    break;
                }
            }
            pos = next;
        }
        Ok((
            Self {
                file,
                _record: PhantomData,
            },
            records,
        ))
    }

    pub fn append(&mut self, record: &R) -> Result<(), StoreError> {
        let line = encode(record)?;
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }

    pub fn sync(&self) -> Result<(), StoreError> {
        self.file.sync_data()?;
        Ok(())
    }
}
