//! Tab-separated corpus manifests: one record per line with the fields
//! `path`, `class_index`, `class_name`, `ops` and `split`. Lines starting
//! with `#` are comments; relative paths resolve against the manifest's
//! directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{io_err, ForgeError, Result};
use crate::opspec::{format_chain, parse_chain, OpSpec};

pub const MANIFEST_HEADER: &str = "# path\tclass_index\tclass_name\tops\tsplit";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| ForgeError::Domain(format!("unknown split {s:?}, expected train, val or test")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub path: PathBuf,
    pub class_index: usize,
    pub class_name: String,
    /// Operations applied to the source, in order.
    pub ops: Vec<OpSpec>,
    pub split: Option<Split>,
}

impl SampleRecord {
    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.path.display(),
            self.class_index,
            self.class_name,
            format_chain(&self.ops),
            self.split.map_or("-", Split::name)
        )
    }

    fn parse(line: &str, lineno: usize) -> Result<Self> {
        let bad = |reason: String| ForgeError::Manifest { line: lineno, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        let class_index = fields[1]
            .parse()
            .map_err(|_| bad(format!("class index {:?} is not a non-negative integer", fields[1])))?;
        let ops = parse_chain(fields[3]).map_err(|e| bad(e.to_string()))?;
        let split = match fields[4] {
            "-" | "" => None,
            s => Some(s.parse().map_err(|e: ForgeError| bad(e.to_string()))?),
        };
        if fields[0].is_empty() {
            return Err(bad("empty path".into()));
        }
        Ok(Self {
            path: PathBuf::from(fields[0]),
            class_index,
            class_name: fields[2].to_string(),
            ops,
            split,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    /// Directory that relative record paths are resolved against.
    pub root: PathBuf,
    pub records: Vec<SampleRecord>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, records: Vec<SampleRecord>) -> Self {
        Self {
            root: root.into(),
            records,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            records.push(SampleRecord::parse(line, i + 1)?);
        }
        let m = Self {
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            records,
        };
        m.class_names()?;
        Ok(m)
    }

    /// Writes the manifest; paths are stored relative to the file's
    /// directory when the records live below it.
    pub fn write(&self, path: &Path) -> Result<()> {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.records {
            let abs = self.resolve(r);
            let stored = match abs.strip_prefix(&dir) {
                Ok(rel) if !dir.as_os_str().is_empty() => rel.to_path_buf(),
                _ => abs.clone(),
            };
            out.push_str(
                &SampleRecord {
                    path: stored,
                    ..r.clone()
                }
                .to_line(),
            );
            out.push('\n');
        }
        fs::write(path, out).map_err(io_err(path))
    }

    pub fn resolve(&self, record: &SampleRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.root.join(&record.path)
        }
    }

    /// Class names by index; every index below the maximum must be named
    /// consistently.
    pub fn class_names(&self) -> Result<Vec<String>> {
        let k = self.records.iter().map(|r| r.class_index + 1).max().unwrap_or(0);
        let mut names: Vec<Option<&str>> = vec![None; k];
        for r in &self.records {
            match names[r.class_index] {
                Some(n) if n != r.class_name => {
                    return Err(ForgeError::Data(format!(
                        "class {} is named both {n:?} and {:?}",
                        r.class_index, r.class_name
                    )))
                }
                _ => names[r.class_index] = Some(&r.class_name),
            }
        }
        names
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                n.map(str::to_string)
                    .ok_or_else(|| ForgeError::Data(format!("class index {i} has no records")))
            })
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.records.iter().map(|r| r.class_index + 1).max().unwrap_or(0)
    }

    pub fn in_split(&self, split: Split) -> Vec<&SampleRecord> {
        self.records.iter().filter(|r| r.split == Some(split)).collect()
    }

    pub fn split_counts(&self) -> [usize; 3] {
        Split::ALL.map(|s| self.in_split(s).len())
    }
}
