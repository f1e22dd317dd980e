//! Optional on-disk memo for leg-word moments, pointed at by the NCLAB_CACHE
//! environment variable.
//!
//! Format (line-oriented, tab-separated):
//!   line 1:  `nclab-moment-cache v1`
//!   rest:    `<word>\t<re>\t<im>` with `re`/`im` printed via `{:.17e}`
//! where `<word>` is `e` for the empty word, or `.`-joined tokens
//! `u<index>^<exponent>` describing a reduced single-leg unitary word, e.g.
//! `u1^3.u2^-1`. Stored values depend only on the word (the marginal law per
//! index is fixed), so one cache file serves every model and run.
//!
//! A missing file is an empty cache. An unreadable or wrong-version file is
//! ignored with a warning and rewritten on save: the cache is an accelerator,
//! never an input that can fail a run.

use crate::CliResult;
use nclab::cauchy::{LegWord, MomentStore};
use num_complex::Complex64;
use std::io::Write;
use std::path::Path;

pub const CACHE_ENV: &str = "NCLAB_CACHE";
const HEADER: &str = "nclab-moment-cache v1";

fn format_word(w: &LegWord) -> String {
    if w.is_empty() {
        return "e".to_string();
    }
    w.iter()
        .map(|(idx, e)| format!("u{idx}^{e}"))
        .collect::<Vec<_>>()
        .join(".")
}

fn parse_word(s: &str) -> Option<LegWord> {
    if s == "e" {
        return Some(Vec::new());
    }
    let mut out: LegWord = Vec::new();
    for tok in s.split('.') {
        let rest = tok.strip_prefix('u')?;
        let (idx, exp) = rest.split_once('^')?;
        let idx: u32 = idx.parse().ok()?;
        let exp: i64 = exp.parse().ok()?;
        if exp == 0 {
            return None;
        }
        if let Some(last) = out.last() {
            if last.0 == idx {
                return None;
            }
        }
        out.push((idx, exp));
    }
    Some(out)
}

/// Load a store from `path`. Missing file: empty store. Malformed content or
/// version mismatch: empty store plus a warning on stderr.
pub fn load(path: &Path) -> MomentStore {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(_) => return MomentStore::new(),
    };
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        eprintln!(
            "warning: {} is not a {HEADER} file; ignoring it",
            path.display()
        );
        return MomentStore::new();
    }
    let mut store = MomentStore::new();
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let parsed = (|| {
            let word = parse_word(parts.next()?)?;
            let re: f64 = parts.next()?.parse().ok()?;
            let im: f64 = parts.next()?.parse().ok()?;
            Some((word, Complex64::new(re, im)))
        })();
        match parsed {
            Some((word, v)) => {
                store.insert(word, v);
            }
            None => {
                eprintln!(
                    "warning: {} line {}: unparseable entry; ignoring the file",
                    path.display(),
                    k + 2
                );
                return MomentStore::new();
            }
        }
    }
    store
}

/// Write the store atomically (temp file + rename).
pub fn save(path: &Path, store: &MomentStore) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        writeln!(f, "{HEADER}")?;
        for (word, v) in store {
            writeln!(f, "{}\t{:.17e}\t{:.17e}", format_word(word), v.re, v.im)?;
        }
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// The cache path configured in the environment, if any.
pub fn env_path() -> Option<std::path::PathBuf> {
    std::env::var_os(CACHE_ENV).map(std::path::PathBuf::from)
}
