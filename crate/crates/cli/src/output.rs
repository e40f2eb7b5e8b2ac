use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::{Context, Result};

use crate::GlobalArgs;

/// Stdout, mirrored into `<out>/<name>` when `--out` is given.
pub struct Sink {
    file: Option<BufWriter<File>>,
}

impl Sink {
    pub fn open(args: &GlobalArgs, name: &str) -> Result<Self> {
        let file = match &args.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(name);
                Some(BufWriter::new(
                    File::create(&path).with_context(|| format!("creating {}", path.display()))?,
                ))
            }
            None => None,
        };
        Ok(Self { file })
    }

    pub fn line(&mut self, text: &str) -> Result<()> {
        let mut stdout = std::io::stdout().lock();
        writeln!(stdout, "{text}")?;
        if let Some(f) = &mut self.file {
            writeln!(f, "{text}")?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(f) = &mut self.file {
            f.flush()?;
        }
        Ok(())
    }
}
