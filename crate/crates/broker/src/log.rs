//! One partition: a directory of segment files named by their base offset.
//!
//! Record framing (little-endian):
//!
//! ```text
//! u32 body_len | u32 crc32(body) | body
//! body = u64 offset | i64 timestamp | i32 key_len (-1 = none) | key | u32 payload_len | payload
//! ```

use std::collections::VecDeque;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use crate::error::{io_err, BrokerError, Result};
use crate::types::Durability;

const FRAME_HEADER: usize = 8;
const BODY_FIXED: usize = 8 + 8 + 4 + 4;
const START_FILE: &str = "start";

pub(crate) struct RawRecord {
    pub offset: u64,
    pub timestamp: i64,
    pub key: Option<Vec<u8>>,
    pub payload: Vec<u8>,
}

pub(crate) fn encode_record(out: &mut Vec<u8>, offset: u64, timestamp: i64, key: Option<&[u8]>, payload: &[u8]) {
    let body_len = BODY_FIXED + key.map_or(0, <[u8]>::len) + payload.len();
    let start = out.len();
    out.extend_from_slice(&(body_len as u32).to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&offset.to_le_bytes());
    out.extend_from_slice(&timestamp.to_le_bytes());
    match key {
        Some(k) => {
            out.extend_from_slice(&(k.len() as i32).to_le_bytes());
            out.extend_from_slice(k);
        }
        None => out.extend_from_slice(&(-1i32).to_le_bytes()),
    }
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out[start + FRAME_HEADER..]);
    out[start + 4..start + 8].copy_from_slice(&crc.to_le_bytes());
}

/// Decodes the frame at the start of `buf`, returning the record and its framed length.
pub(crate) fn decode_record(buf: &[u8]) -> std::result::Result<(RawRecord, usize), String> {
    if buf.len() < FRAME_HEADER {
        return Err("truncated frame header".into());
    }
    let body_len = u32::from_le_bytes(buf[0..4].try_into().unwrap()) as usize;
    let crc = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if body_len < BODY_FIXED {
        return Err(format!("body length {body_len} too small"));
    }
    let total = FRAME_HEADER + body_len;
    if buf.len() < total {
        return Err("truncated record body".into());
    }
    let body = &buf[FRAME_HEADER..total];
    if crc32fast::hash(body) != crc {
        return Err("record checksum mismatch".into());
    }
    let offset = u64::from_le_bytes(body[0..8].try_into().unwrap());
    let timestamp = i64::from_le_bytes(body[8..16].try_into().unwrap());
    let key_len = i32::from_le_bytes(body[16..20].try_into().unwrap());
    let mut at = 20;
    let key = if key_len < 0 {
        None
    } else {
        let k = key_len as usize;
        if at + k + 4 > body.len() {
            return Err("key overruns record".into());
        }
        at += k;
        Some(body[at - k..at].to_vec())
    };
    let payload_len = u32::from_le_bytes(body[at..at + 4].try_into().unwrap()) as usize;
    at += 4;
    if at + payload_len != body.len() {
        return Err("payload length disagrees with frame".into());
    }
    Ok((
        RawRecord {
            offset,
            timestamp,
            key,
            payload: body[at..].to_vec(),
        },
        total,
    ))
}

#[cfg(unix)]
fn read_at(file: &File, buf: &mut [u8], pos: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, pos)
}

#[cfg(windows)]
fn read_at(file: &File, mut buf: &mut [u8], mut pos: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        let n = file.seek_read(buf, pos)?;
        if n == 0 {
            return Err(std::io::ErrorKind::UnexpectedEof.into());
        }
        buf = &mut buf[n..];
        pos += n as u64;
    }
    Ok(())
}

fn segment_name(base: u64) -> String {
    format!("{base:020}.log")
}

#[derive(Clone, Copy)]
struct Pos {
    segment: u64,
    at: u64,
    len: u32,
}

#[derive(Clone)]
struct Segment {
    base: u64,
    path: PathBuf,
    file: Arc<File>,
}

struct Index {
    start: u64,
    end: u64,
    /// Entry `i` locates offset `start + i`.
    positions: VecDeque<Pos>,
    segments: Vec<Segment>,
}

struct Run {
    base: u64,
    file: Arc<File>,
    path: PathBuf,
    lo: u64,
    hi: u64,
    count: usize,
}

struct Appender {
    active: Segment,
    len: u64,
    scratch: Vec<u8>,
}

pub(crate) struct Partition {
    dir: PathBuf,
    segment_bytes: u64,
    durability: Durability,
    append: Mutex<Appender>,
    index: RwLock<Index>,
}

fn open_append(path: &Path) -> Result<File> {
    OpenOptions::new()
        .create(true)
        .read(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))
}

impl Partition {
    pub fn create(dir: &Path, segment_bytes: u64, durability: Durability) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Self::open(dir, segment_bytes, durability)
    }

    /// Opens `dir`, truncating the log at the first record that fails to decode.
    pub fn open(dir: &Path, segment_bytes: u64, durability: Durability) -> Result<Self> {
        let start = read_start(dir)?;
        let mut bases: Vec<u64> = Vec::new();
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let entry = entry.map_err(io_err(dir))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(base) = name.strip_suffix(".log").and_then(|b| b.parse::<u64>().ok()) {
                bases.push(base);
            }
        }
        bases.sort_unstable();

        let mut segments: Vec<Segment> = Vec::new();
        let mut positions = VecDeque::new();
        let mut expected: Option<u64> = None;
        let mut active_len = 0;
        let mut broken = false;
        for base in bases {
            let path = dir.join(segment_name(base));
            if broken || expected.is_some_and(|e| e != base) {
                if !broken {
                    log::warn!("segment {} does not continue the log; discarding", path.display());
                }
                broken = true;
                fs::remove_file(&path).map_err(io_err(&path))?;
                continue;
            }
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let mut at = 0usize;
            let mut next = base;
            while at < bytes.len() {
                match decode_record(&bytes[at..]) {
                    Ok((rec, len)) if rec.offset == next => {
                        if next >= start {
                            positions.push_back(Pos {
                                segment: base,
                                at: at as u64,
                                len: len as u32,
                            });
                        }
                        next += 1;
                        at += len;
                    }
                    other => {
                        let reason = match other {
                            Err(e) => e,
                            Ok((rec, _)) => format!("offset {} where {next} expected", rec.offset),
                        };
                        log::warn!(
                            "truncating {} at byte {at} of {}: {reason}",
                            path.display(),
                            bytes.len()
                        );
                        let f = OpenOptions::new().write(true).open(&path).map_err(io_err(&path))?;
                        f.set_len(at as u64).map_err(io_err(&path))?;
                        f.sync_all().map_err(io_err(&path))?;
                        broken = true;
                        break;
                    }
                }
            }
            active_len = at as u64;
            expected = Some(next);
            segments.push(Segment {
                base,
                file: Arc::new(open_append(&path)?),
                path,
            });
        }
        let end = expected.unwrap_or(start);
        // a start marker past the surviving log only happens if the log itself was damaged
        let start = start.min(end);
        if positions.len() as u64 != end - start {
            return Err(BrokerError::Corrupt {
                path: dir.to_path_buf(),
                reason: format!("log start {start} is not covered by the segments"),
            });
        }
        if segments.is_empty() {
            let path = dir.join(segment_name(end));
            segments.push(Segment {
                base: end,
                file: Arc::new(open_append(&path)?),
                path,
            });
            active_len = 0;
        }
        let active = segments.last().unwrap().clone();
        Ok(Self {
            dir: dir.to_path_buf(),
            segment_bytes,
            durability,
            append: Mutex::new(Appender {
                active,
                len: active_len,
                scratch: Vec::new(),
            }),
            index: RwLock::new(Index {
                start,
                end,
                positions,
                segments,
            }),
        })
    }

    pub fn start_offset(&self) -> u64 {
        self.index.read().unwrap().start
    }

    pub fn end_offset(&self) -> u64 {
        self.index.read().unwrap().end
    }

    pub fn bounds(&self) -> (u64, u64) {
        let ix = self.index.read().unwrap();
        (ix.start, ix.end)
    }

    pub fn segment_count(&self) -> usize {
        self.index.read().unwrap().segments.len()
    }

    /// Appends `records` contiguously and returns the first assigned offset.
    pub fn append(&self, timestamp: i64, records: &[(Option<&[u8]>, &[u8])]) -> Result<u64> {
        let mut ap = self.append.lock().unwrap();
        let first = self.index.read().unwrap().end;
        let mut new_positions = Vec::with_capacity(records.len());
        let mut new_segments = Vec::new();
        let ap = &mut *ap;
        ap.scratch.clear();
        let mut offset = first;
        for (key, payload) in records {
            let before = ap.scratch.len();
            encode_record(&mut ap.scratch, offset, timestamp, *key, payload);
            let len = (ap.scratch.len() - before) as u64;
            if ap.len > 0 && ap.len + len > self.segment_bytes {
                // flush what belongs to the old segment, then rotate
                let tail = ap.scratch.split_off(before);
                self.write_active(ap)?;
                let path = self.dir.join(segment_name(offset));
                let seg = Segment {
                    base: offset,
                    file: Arc::new(open_append(&path)?),
                    path,
                };
                ap.active = seg.clone();
                ap.len = 0;
                new_segments.push(seg);
                ap.scratch = tail;
            }
            new_positions.push(Pos {
                segment: ap.active.base,
                at: ap.len + (ap.scratch.len() as u64 - len),
                len: len as u32,
            });
            offset += 1;
        }
        self.write_active(ap)?;
        let mut ix = self.index.write().unwrap();
        ix.segments.extend(new_segments);
        ix.positions.extend(new_positions);
        ix.end = offset;
        Ok(first)
    }

    fn write_active(&self, ap: &mut Appender) -> Result<()> {
        if ap.scratch.is_empty() {
            return Ok(());
        }
        let path = &ap.active.path;
        let mut file: &File = &ap.active.file;
        if let Err(e) = file.write_all(&ap.scratch) {
            // drop any partial frame so the next append starts on a boundary
            let _ = ap.active.file.set_len(ap.len);
            return Err(io_err(path)(e));
        }
        if self.durability == Durability::Fsync {
            ap.active.file.sync_data().map_err(io_err(path))?;
        }
        ap.len += ap.scratch.len() as u64;
        ap.scratch.clear();
        Ok(())
    }

    /// Reads up to `max` records starting at `from` (clamped to the log start).
    pub fn read(&self, from: u64, max: usize) -> Result<Vec<RawRecord>> {
        let (from, runs) = {
            let ix = self.index.read().unwrap();
            let from = from.max(ix.start);
            if from >= ix.end || max == 0 {
                return Ok(Vec::new());
            }
            let count = ((ix.end - from) as usize).min(max);
            let skip = (from - ix.start) as usize;
            // contiguous byte runs, one per segment touched
            let mut runs: Vec<Run> = Vec::new();
            for p in ix.positions.range(skip..skip + count) {
                match runs.last_mut() {
                    Some(run) if run.base == p.segment => {
                        run.hi = p.at + u64::from(p.len);
                        run.count += 1;
                    }
                    _ => {
                        let seg = ix.segment(p.segment);
                        runs.push(Run {
                            base: p.segment,
                            file: seg.file.clone(),
                            path: seg.path.clone(),
                            lo: p.at,
                            hi: p.at + u64::from(p.len),
                            count: 1,
                        });
                    }
                }
            }
            (from, runs)
        };
        let mut out = Vec::new();
        let mut expected = from;
        for Run {
            file, path, lo, hi, count, ..
        } in runs
        {
            let mut buf = vec![0u8; (hi - lo) as usize];
            read_at(&file, &mut buf, lo).map_err(io_err(&path))?;
            let mut at = 0;
            for _ in 0..count {
                let (rec, len) = decode_record(&buf[at..]).map_err(|reason| BrokerError::Corrupt {
                    path: path.clone(),
                    reason,
                })?;
                if rec.offset != expected {
                    return Err(BrokerError::Corrupt {
                        path: path.clone(),
                        reason: format!("offset {} where {expected} expected", rec.offset),
                    });
                }
                expected += 1;
                at += len;
                out.push(rec);
            }
        }
        Ok(out)
    }

    /// Moves the log start forward, deleting segments that fall wholly before it.
    pub fn advance_start(&self, new_start: u64) -> Result<()> {
        let removed = {
            let _ap = self.append.lock().unwrap();
            let mut ix = self.index.write().unwrap();
            let new_start = new_start.min(ix.end);
            if new_start <= ix.start {
                return Ok(());
            }
            let drop = (new_start - ix.start) as usize;
            ix.positions.drain(..drop);
            ix.start = new_start;
            write_start(&self.dir, new_start)?;
            let mut removed = Vec::new();
            // segment i is dead when the next one begins at or before the new start
            while ix.segments.len() > 1 && ix.segments[1].base <= new_start {
                removed.push(ix.segments.remove(0));
            }
            removed
        };
        for seg in removed {
            fs::remove_file(&seg.path).map_err(io_err(&seg.path))?;
        }
        Ok(())
    }

    pub fn sync(&self) -> Result<()> {
        let ap = self.append.lock().unwrap();
        ap.active.file.sync_data().map_err(io_err(&ap.active.path))
    }
}

impl Index {
    fn segment(&self, base: u64) -> &Segment {
        let i = self.segments.partition_point(|s| s.base <= base) - 1;
        &self.segments[i]
    }
}

fn read_start(dir: &Path) -> Result<u64> {
    let path = dir.join(START_FILE);
    match fs::read_to_string(&path) {
        Ok(s) => s.trim().parse().map_err(|_| BrokerError::Corrupt {
            path,
            reason: format!("bad log start marker `{}`", s.trim()),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(0),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn write_start(dir: &Path, start: u64) -> Result<()> {
    crate::fsutil::write_atomic(&dir.join(START_FILE), start.to_string().as_bytes(), true)
}
