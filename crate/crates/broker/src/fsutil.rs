use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use crate::error::{io_err, Result};

/// Replaces `path` with `bytes` via a sibling temp file and rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8], sync: bool) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = File::create(tmp).map_err(io_err(tmp))?;
        f.write_all(bytes).map_err(io_err(tmp))?;
        if sync {
            f.sync_all().map_err(io_err(tmp))?;
        }
    }
    fs::rename(tmp, path).map_err(io_err(path))?;
    if sync {
        sync_dir(path.parent().unwrap_or(Path::new(".")));
    }
    Ok(())
}

/// Best effort: some platforms cannot open directories for syncing.
pub(crate) fn sync_dir(dir: &Path) {
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}
