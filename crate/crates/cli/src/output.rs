//! Artifact writing confined to a single output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use stolab::Result;

pub struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// `name` must be a plain file name; artifacts never leave the directory.
    fn path(&self, name: &str) -> PathBuf {
        assert!(
            !name.is_empty() && Path::new(name).file_name() == Some(name.as_ref()),
            "artifact name must be a plain file name: {name}"
        );
        self.dir.join(name)
    }

    pub fn csv(&self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}
