//! Append-only JSON-lines transcript of provider calls, one file per run.
//! Reading it back lets an interrupted evaluation skip finished items.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::provider::Prediction;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub item_id: String,
    pub flags: String,
    pub prompt_hash: String,
    pub raw_text: String,
    pub parsed: Prediction,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `(flags tag, item id, prompt hash)`.
pub type RecordKey = (String, String, String);

impl TranscriptRecord {
    pub fn key(&self) -> RecordKey {
        (
            self.flags.clone(),
            self.item_id.clone(),
            self.prompt_hash.clone(),
        )
    }
}

pub fn transcript_path(outdir: &Path, run_index: usize) -> PathBuf {
    outdir.join(format!("run{run_index}.log"))
}

/// Completed (error-free) records of an existing transcript. Unparsable
/// lines, such as a write cut short by an interruption, are ignored.
pub fn load_completed(path: &Path) -> std::io::Result<HashMap<RecordKey, TranscriptRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(e),
    };
    let mut done = HashMap::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if let Ok(rec) = serde_json::from_str::<TranscriptRecord>(&line) {
            if rec.error.is_none() {
                done.insert(rec.key(), rec);
            }
        }
    }
    Ok(done)
}

/// Serialized append sink shared by concurrent workers.
pub struct TranscriptWriter {
    file: Mutex<File>,
}

impl TranscriptWriter {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        // a previous run may have died mid-line
        let len = file.metadata()?.len();
        if len > 0 && !ends_with_newline(path)? {
            file.write_all(b"\n")?;
        }
        Ok(Self {
            file: Mutex::new(file),
        })
    }

    pub fn append(&self, record: &TranscriptRecord) -> std::io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())?;
        file.flush()
    }
}

fn ends_with_newline(path: &Path) -> std::io::Result<bool> {
    use std::io::{Read, Seek, SeekFrom};
    let mut f = File::open(path)?;
    f.seek(SeekFrom::End(-1))?;
    let mut last = [0u8; 1];
    f.read_exact(&mut last)?;
    Ok(last[0] == b'\n')
}
