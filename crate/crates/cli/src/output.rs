use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).with_context(|| format!("cannot write {}", tmp.display()))?;
    f.write_all(&buf)?;
    f.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    write_atomic(path, |b| {
        serde_json::to_writer_pretty(&mut *b, value)?;
        b.push(b'\n');
        Ok(())
    })
}

pub fn write_lines(path: &Path, lines: &[String]) -> anyhow::Result<()> {
    write_atomic(path, |b| {
        for l in lines {
            b.extend_from_slice(l.as_bytes());
            b.push(b'\n');
        }
        Ok(())
    })
}
