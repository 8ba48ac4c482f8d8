//! Output files. CSV files start with `#` header lines and JSON files carry
//! a `header` object; both record the tool version, PRNG and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ssnkit::rng::PRNG_ID;
use ssnkit::TOOL_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub tool: String,
    pub tool_version: String,
    pub prng: String,
    pub seed: u64,
}

impl Header {
    pub fn new(seed: u64) -> Self {
        Header {
            tool: "ssnkit".into(),
            tool_version: TOOL_VERSION.into(),
            prng: PRNG_ID.into(),
            seed,
        }
    }

    fn csv_lines(&self) -> String {
        format!(
            "# tool={} version={}\n# prng={}\n# seed={}\n",
            self.tool, self.tool_version, self.prng, self.seed
        )
    }
}

#[derive(Serialize)]
struct WithHeader<'a, T: Serialize> {
    header: &'a Header,
    #[serde(flatten)]
    body: &'a T,
}

pub struct OutDir {
    dir: PathBuf,
    header: Header,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(dir: &Path, header: Header) -> Result<Self, String> {
        std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        Ok(OutDir { dir: dir.to_path_buf(), header, written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), String> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    /// JSON object `{"header": …, <fields of body>}`; `body` must serialize
    /// as a map.
    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), String> {
        let text = serde_json::to_string_pretty(&WithHeader { header: &self.header, body })
            .map_err(|e| format!("cannot serialize {name}: {e}"))?;
        self.write(name, &(text + "\n"))
    }

    /// Plain JSON without a header, for documents that must parse back
    /// under `deny_unknown_fields`.
    pub fn raw_json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), String> {
        let text = serde_json::to_string_pretty(body).map_err(|e| format!("cannot serialize {name}: {e}"))?;
        self.write(name, &(text + "\n"))
    }

    pub fn csv(&mut self, name: &str, body: &str) -> Result<(), String> {
        let text = self.header.csv_lines() + body;
        self.write(name, &text)
    }
}

/// CSV with a header row from `columns` and one row per entry.
pub fn table<const N: usize>(columns: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> String {
    let mut out = columns.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn num(v: f64) -> String {
    format!("{v:e}")
}
