//! Append-only storage for the annotation log.
//!
//! A record is committed once its terminating newline is on stable storage.
//! Bytes after the last newline belong to an interrupted append and are
//! discarded when a store is opened.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

pub trait LogStore: Send {
    /// Appends one record and returns only after it is durable.
    fn append(&mut self, record: &str) -> io::Result<()>;

    /// Every committed record, newline-terminated.
    fn read_all(&self) -> io::Result<Vec<u8>>;
}

/// Length of the committed prefix: everything up to and including the last newline.
pub fn committed_len(bytes: &[u8]) -> usize {
    bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1)
}

fn check_record(record: &str) -> io::Result<()> {
    if record.contains('\n') {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "record contains a newline"));
    }
    Ok(())
}

#[derive(Debug)]
pub struct FileLogStore {
    path: PathBuf,
    file: File,
    len: u64,
    poisoned: bool,
}

impl FileLogStore {
    /// Opens or creates the log, truncating any torn tail.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let len = committed_len(&bytes) as u64;
        if len != bytes.len() as u64 {
            file.set_len(len)?;
            file.sync_all()?;
        }
        Ok(Self {
            path,
            file,
            len,
            poisoned: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn rollback(&mut self) {
        if self.file.set_len(self.len).and_then(|_| self.file.sync_all()).is_err() {
            self.poisoned = true;
        }
    }
}

impl LogStore for FileLogStore {
    fn append(&mut self, record: &str) -> io::Result<()> {
        check_record(record)?;
        if self.poisoned {
            return Err(io::Error::other("log is in an unknown state after a failed append"));
        }
        let mut line = Vec::with_capacity(record.len() + 1);
        line.extend_from_slice(record.as_bytes());
        line.push(b'\n');
        let result = self.file.write_all(&line).and_then(|_| self.file.sync_data());
        match result {
            Ok(()) => {
                self.len += line.len() as u64;
                Ok(())
            }
            Err(e) => {
                self.rollback();
                Err(e)
            }
        }
    }

    fn read_all(&self) -> io::Result<Vec<u8>> {
        let mut file = File::open(&self.path)?;
        file.seek(SeekFrom::Start(0))?;
        let mut bytes = Vec::with_capacity(self.len as usize);
        file.take(self.len).read_to_end(&mut bytes)?;
        Ok(bytes)
    }
}

/// Byte buffer standing in for a disk, shareable across store instances so
/// a "restarted" store sees what a "crashed" one left behind.
pub type SharedDisk = Arc<Mutex<Vec<u8>>>;

/// In-memory store over a [`SharedDisk`].
#[derive(Debug, Clone, Default)]
pub struct MemoryLogStore {
    disk: SharedDisk,
}

impl MemoryLogStore {
    /// Opens over `disk`, truncating any torn tail.
    pub fn open(disk: SharedDisk) -> Self {
        {
            let mut bytes = disk.lock().expect("disk lock");
            let len = committed_len(&bytes);
            bytes.truncate(len);
        }
        Self { disk }
    }

    pub fn disk(&self) -> SharedDisk {
        Arc::clone(&self.disk)
    }
}

impl LogStore for MemoryLogStore {
    fn append(&mut self, record: &str) -> io::Result<()> {
        check_record(record)?;
        let mut bytes = self.disk.lock().expect("disk lock");
        bytes.extend_from_slice(record.as_bytes());
        bytes.push(b'\n');
        Ok(())
    }

    fn read_all(&self) -> io::Result<Vec<u8>> {
        let bytes = self.disk.lock().expect("disk lock");
        Ok(bytes[..committed_len(&bytes)].to_vec())
    }
}
