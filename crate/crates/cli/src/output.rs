use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use meandim_core::rng::digest_hex;
use serde::Serialize;

/// Everything that determines a run's outputs. Input files enter through
/// their content digests, so the output directory and input paths do not
/// change the digest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        RunConfig { subcommand: subcommand.into(), seed, params: BTreeMap::new(), inputs: BTreeMap::new() }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn input(&mut self, key: &str, bytes: &[u8]) -> &mut Self {
        self.inputs.insert(key.into(), digest_hex(bytes));
        self
    }

    pub fn digest(&self) -> String {
        digest_hex(&serde_json::to_vec(self).expect("config serialises"))
    }
}

/// Output JSON envelope.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema: &'a str,
    pub config_digest: String,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub result: T,
}

/// Files collected during a run and written only once the run succeeded.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Outputs { dir: dir.to_path_buf(), files: Vec::new() }
    }

    pub fn json<T: Serialize>(&mut self, name: &str, schema: &str, cfg: &RunConfig, result: T) {
        let env = Envelope { schema, config_digest: cfg.digest(), seed: cfg.seed, config: cfg, result };
        let mut bytes = serde_json::to_vec_pretty(&env).expect("result serialises");
        bytes.push(b'\n');
        self.files.push((name.into(), bytes));
    }

    pub fn raw(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) {
        let mut text = header.join(",");
        text.push('\n');
        for r in rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        self.files.push((name.into(), text.into_bytes()));
    }

    /// Writes every file through a temporary name and a rename.
    pub fn commit(self) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = self.dir.join(&name);
            let tmp = self.dir.join(format!(".{name}.tmp{}", std::process::id()));
            {
                let mut f = fs::File::create(&tmp)?;
                f.write_all(&bytes)?;
                f.sync_all()?;
            }
            fs::rename(&tmp, &path)?;
            written.push(path);
        }
        Ok(written)
    }
}
