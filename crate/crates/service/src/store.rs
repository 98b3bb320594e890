//! On-disk layout, one directory per session:
//!
//! ```text
//! sessions/<id>/meta.json           id, creation time, attachment kinds
//! sessions/<id>/attachments/<name>  uploaded bytes (+ <name>.param.json)
//! sessions/<id>/state.json          latest SessionState snapshot
//! sessions/<id>/document.sketch.json
//! sessions/<id>/transcript.jsonl    one StepRecord per line, appended
//! sessions/<id>/events.jsonl        stream events, appended
//! sessions/<id>/artifacts/<name>    images produced by tools
//! ```

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use cadkit_agent::state::AttachmentKind;
use cadkit_agent::{Attachment, SessionState, StepRecord};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredAttachment {
    pub name: String,
    pub kind: AttachmentKind,
    #[serde(default)]
    pub has_parameterization: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub session_id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub attachments: Vec<StoredAttachment>,
}

/// One entry of a session's event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub event: String,
    pub data: Value,
}

/// Raw upload kept alongside its decoded form.
#[derive(Debug, Clone)]
pub struct Upload {
    pub name: String,
    pub kind: AttachmentKind,
    pub bytes: Vec<u8>,
    pub parameterization: Option<Vec<u8>>,
}

pub struct Loaded {
    pub meta: Meta,
    pub attachments: Vec<Attachment>,
    pub state: SessionState,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn append_line(path: &Path, line: &str) -> io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    f.write_all(b"\n")
}

fn invalid(e: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e.to_string())
}

impl Store {
    pub fn open(data_dir: &Path) -> io::Result<Self> {
        let root = data_dir.join("sessions");
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn create(&self, meta: &Meta, uploads: &[Upload], state: &SessionState) -> io::Result<()> {
        let dir = self.dir(&meta.session_id);
        fs::create_dir_all(dir.join("attachments"))?;
        fs::create_dir_all(dir.join("artifacts"))?;
        for u in uploads {
            fs::write(dir.join("attachments").join(&u.name), &u.bytes)?;
            if let Some(p) = &u.parameterization {
                fs::write(dir.join("attachments").join(format!("{}.param.json", u.name)), p)?;
            }
        }
        fs::File::create(dir.join("transcript.jsonl"))?;
        fs::File::create(dir.join("events.jsonl"))?;
        self.save_state(&meta.session_id, state)?;
        write_atomic(&dir.join("meta.json"), serde_json::to_string_pretty(meta).map_err(invalid)?.as_bytes())
    }

    /// Writes the state snapshot, the document and any new artifacts.
    pub fn save_state(&self, id: &str, state: &SessionState) -> io::Result<()> {
        let dir = self.dir(id);
        for (name, bytes) in &state.artifacts {
            let path = dir.join("artifacts").join(name);
            if !path.exists() {
                fs::write(path, bytes)?;
            }
        }
        write_atomic(&dir.join("document.sketch.json"), state.document.sketch_json().as_bytes())?;
        write_atomic(&dir.join("state.json"), serde_json::to_string(state).map_err(invalid)?.as_bytes())
    }

    pub fn append_step(&self, id: &str, record: &StepRecord) -> io::Result<()> {
        append_line(&self.dir(id).join("transcript.jsonl"), &serde_json::to_string(record).map_err(invalid)?)
    }

    pub fn append_event(&self, id: &str, event: &Event) -> io::Result<()> {
        append_line(&self.dir(id).join("events.jsonl"), &serde_json::to_string(event).map_err(invalid)?)
    }

    /// Loads every session directory. Unreadable ones are skipped with a
    /// warning.
    pub fn load_all(&self) -> io::Result<Vec<Loaded>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let dir = entry?.path();
            match self.load(&dir) {
                Ok(l) => out.push(l),
                Err(e) => log::warn!("skipping session {}: {e}", dir.display()),
            }
        }
        out.sort_by(|a, b| a.meta.session_id.cmp(&b.meta.session_id));
        Ok(out)
    }

    fn load(&self, dir: &Path) -> io::Result<Loaded> {
        let meta: Meta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?).map_err(invalid)?;
        let mut attachments = Vec::new();
        for a in &meta.attachments {
            let bytes = fs::read(dir.join("attachments").join(&a.name))?;
            let side = if a.has_parameterization {
                Some(fs::read(dir.join("attachments").join(format!("{}.param.json", a.name)))?)
            } else {
                None
            };
            attachments.push(Attachment::decode(&a.name, Some(a.kind), &bytes, side.as_deref()).map_err(invalid)?);
        }
        let mut state: SessionState = serde_json::from_slice(&fs::read(dir.join("state.json"))?).map_err(invalid)?;
        for entry in fs::read_dir(dir.join("artifacts"))? {
            let path = entry?.path();
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                state.artifacts.insert(name.to_string(), fs::read(&path)?);
            }
        }
        let events = fs::read_to_string(dir.join("events.jsonl"))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(invalid))
            .collect::<io::Result<Vec<Event>>>()?;
        Ok(Loaded { meta, attachments, state, events })
    }
}
