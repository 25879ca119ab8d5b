//! Device abstraction for sorted files and the manifest log.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

pub type FileId = u64;

/// Byte-addressable storage for immutable files plus an append-only manifest.
pub trait Storage: Send + Sync {
    fn write_file(&self, id: FileId, data: &[u8]) -> io::Result<()>;

    fn read_file(&self, id: FileId) -> io::Result<Arc<Vec<u8>>>;

    fn read_at(&self, id: FileId, offset: u64, len: usize) -> io::Result<Vec<u8>>;

    fn remove_file(&self, id: FileId) -> io::Result<()>;

    fn append_manifest(&self, record: &[u8]) -> io::Result<()>;

    fn read_manifest(&self) -> io::Result<Vec<u8>>;
}

fn not_found(id: FileId) -> io::Error {
    io::Error::new(io::ErrorKind::NotFound, format!("file {id} does not exist"))
}

/// Keeps every file in memory. Used by tests and desk-scale experiments.
#[derive(Default)]
pub struct MemStorage {
    files: Mutex<HashMap<FileId, Arc<Vec<u8>>>>,
    manifest: Mutex<Vec<u8>>,
}

impl MemStorage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn file_count(&self) -> usize {
        self.files.lock().unwrap().len()
    }
}

impl Storage for MemStorage {
    fn write_file(&self, id: FileId, data: &[u8]) -> io::Result<()> {
        self.files
            .lock()
            .unwrap()
            .insert(id, Arc::new(data.to_vec()));
        Ok(())
    }

    fn read_file(&self, id: FileId) -> io::Result<Arc<Vec<u8>>> {
        self.files
            .lock()
            .unwrap()
            .get(&id)
            .cloned()
            .ok_or_else(|| not_found(id))
    }

    fn read_at(&self, id: FileId, offset: u64, len: usize) -> io::Result<Vec<u8>> {
        let file = self.read_file(id)?;
        let start = offset as usize;
        file.get(start..start + len)
            .map(<[u8]>::to_vec)
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "read past end of file"))
    }

    fn remove_file(&self, id: FileId) -> io::Result<()> {
        self.files.lock().unwrap().remove(&id);
        Ok(())
    }

    fn append_manifest(&self, record: &[u8]) -> io::Result<()> {
        self.manifest.lock().unwrap().extend_from_slice(record);
        Ok(())
    }

    fn read_manifest(&self) -> io::Result<Vec<u8>> {
        Ok(self.manifest.lock().unwrap().clone())
    }
}

/// One file per sorted file (`<id>.sst`) plus a `MANIFEST` log in a directory.
pub struct DirStorage {
    root: PathBuf,
    manifest: Mutex<()>,
}

impl DirStorage {
    pub fn open(root: impl AsRef<Path>) -> io::Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            manifest: Mutex::new(()),
        })
    }

    fn path(&self, id: FileId) -> PathBuf {
        self.root.join(format!("{id:08}.sst"))
    }

    fn manifest_path(&self) -> PathBuf {
        self.root.join("MANIFEST")
    }
}

impl Storage for DirStorage {
    fn write_file(&self, id: FileId, data: &[u8]) -> io::Result<()> {
        let tmp = self.root.join(format!("{id:08}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(data)?;
            f.sync_all()?;
        }
        fs::rename(tmp, self.path(id))
    }

    fn read_file(&self, id: FileId) -> io::Result<Arc<Vec<u8>>> {
        Ok(Arc::new(fs::read(self.path(id))?))
    }

    fn read_at(&self, id: FileId, offset: u64, len: usize) -> io::Result<Vec<u8>> {
        let mut f = File::open(self.path(id))?;
        f.seek(SeekFrom::Start(offset))?;
        let mut buf = vec![0; len];
        f.read_exact(&mut buf)?;
        Ok(buf)
    }

    fn remove_file(&self, id: FileId) -> io::Result<()> {
        match fs::remove_file(self.path(id)) {
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            r => r,
        }
    }

    fn append_manifest(&self, record: &[u8]) -> io::Result<()> {
        let _guard = self.manifest.lock().unwrap();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.manifest_path())?;
        f.write_all(record)?;
        f.sync_data()
    }

    fn read_manifest(&self) -> io::Result<Vec<u8>> {
        match fs::read(self.manifest_path()) {
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            r => r,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exercise(s: &dyn Storage) {
        s.write_file(7, b"hello world").unwrap();
        assert_eq!(s.read_at(7, 6, 5).unwrap(), b"world");
        assert_eq!(s.read_file(7).unwrap().as_slice(), b"hello world");
        assert!(s.read_at(7, 8, 10).is_err());
        s.remove_file(7).unwrap();
        assert!(s.read_file(7).is_err());
        s.append_manifest(b"a\n").unwrap();
        s.append_manifest(b"b\n").unwrap();
        assert_eq!(s.read_manifest().unwrap(), b"a\nb\n");
    }

    #[test]
    fn mem_storage_contract() {
        exercise(&MemStorage::new());
    }

    #[test]
    fn dir_storage_contract() {
        let dir = tempfile::tempdir().unwrap();
        exercise(&DirStorage::open(dir.path()).unwrap());
    }
}
