//! Output directories are written atomically: a marker file announces an
//! unfinished run, every artifact goes to `<name>.partial` and is renamed
//! into place once complete, and the marker is removed last.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

pub const MARKER: &str = "RUN_INCOMPLETE";

pub struct Staging {
    dir: PathBuf,
    written: Vec<String>,
}

impl Staging {
    /// Creates the directory and the marker. Refuses to write over any of
    /// `inputs`.
    pub fn begin(dir: &Path, command: &str, outputs: &[&str], inputs: &[&Path]) -> anyhow::Result<Self> {
        for name in outputs {
            let target = dir.join(name);
            for input in inputs {
                if same_file(&target, input) {
                    bail!(
                        "output {} would overwrite input {}",
                        target.display(),
                        input.display()
                    );
                }
            }
        }
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        fs::write(dir.join(MARKER), format!("{command}\n"))
            .with_context(|| format!("cannot write marker in {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes through `f` to a temporary path and renames it into place.
    pub fn write<F>(&mut self, name: &str, f: F) -> anyhow::Result<PathBuf>
    where
        F: FnOnce(&Path) -> anyhow::Result<()>,
    {
        let tmp = self.dir.join(format!("{name}.partial"));
        let target = self.dir.join(name);
        f(&tmp).with_context(|| format!("writing {}", target.display()))?;
        fs::rename(&tmp, &target)
            .with_context(|| format!("cannot move {} into place", target.display()))?;
        self.written.push(name.to_string());
        Ok(target)
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        self.write(name, |p| {
            let mut text = serde_json::to_string_pretty(value)?;
            text.push('\n');
            fs::write(p, text)?;
            Ok(())
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn finish(self) -> anyhow::Result<()> {
        fs::remove_file(self.dir.join(MARKER))
            .with_context(|| format!("cannot remove marker in {}", self.dir.display()))
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marker_lifecycle() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("out");
        let mut s = Staging::begin(&dir, "fit", &["a.txt"], &[]).unwrap();
        assert!(dir.join(MARKER).exists());
        s.write("a.txt", |p| Ok(fs::write(p, "x")?)).unwrap();
        assert!(!dir.join("a.txt.partial").exists());
        let failed = s.write("b.txt", |_| bail!("boom"));
        assert!(failed.is_err());
        assert!(!dir.join("b.txt").exists());
        s.finish().unwrap();
        assert!(!dir.join(MARKER).exists());
        assert_eq!(fs::read_to_string(dir.join("a.txt")).unwrap(), "x");
    }

    #[test]
    fn refuses_to_overwrite_inputs() {
        let tmp = tempfile::tempdir().unwrap();
        let input = tmp.path().join("binary.csv");
        fs::write(&input, "unit_id,a\nx,1\n").unwrap();
        assert!(Staging::begin(tmp.path(), "binarize", &["binary.csv"], &[&input]).is_err());
        assert!(!tmp.path().join(MARKER).exists());
    }
}
