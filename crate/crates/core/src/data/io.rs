use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use super::Dialog;
use crate::error::{Error, Result};

fn valid_label(l: &str) -> bool {
    l == "O"
        || l
            .split_once('-')
            .is_some_and(|(p, s)| (p == "B" || p == "I") && !s.is_empty())
}

/// Parse JSONL dialogs, one object per line. Blank lines are skipped.
pub fn read_dialogs<R: BufRead>(r: R, path: &Path) -> Result<Vec<Dialog>> {
    read_dialogs_with(r, path, true)
}

/// As [`read_dialogs`]; without `require_labels` a turn may omit its labels.
pub fn read_dialogs_with<R: BufRead>(r: R, path: &Path, require_labels: bool) -> Result<Vec<Dialog>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let dialog: Dialog = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if dialog.turns.is_empty() {
            return Err(err(format!("dialog `{}` has no turns", dialog.id)));
        }
        for (t, turn) in dialog.turns.iter().enumerate() {
            let unlabelled = !require_labels && turn.labels.is_empty();
            if !unlabelled && turn.labels.len() != turn.user_tokens.len() {
                return Err(err(format!(
                    "dialog `{}` turn {}: {} labels for {} tokens",
                    dialog.id,
                    t + 1,
                    turn.labels.len(),
                    turn.user_tokens.len()
                )));
            }
            if let Some(bad) = turn.labels.iter().find(|l| !valid_label(l)) {
                return Err(err(format!(
                    "dialog `{}` turn {}: invalid label `{bad}`",
                    dialog.id,
                    t + 1
                )));
            }
        }
        if !seen.insert(dialog.id.clone()) {
            return Err(err(format!("duplicate dialog id `{}`", dialog.id)));
        }
        out.push(dialog);
    }
    Ok(out)
}

pub fn write_dialogs<W: Write>(dialogs: &[Dialog], mut w: W) -> Result<()> {
    for d in dialogs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<Dialog>> {
    let f = std::fs::File::open(path)?;
    read_dialogs(std::io::BufReader::new(f), path)
}

pub fn save(dialogs: &[Dialog], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_dialogs(dialogs, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(read_dialogs(&b""[..], Path::new("e.jsonl")).unwrap().is_empty());
    }

    #[test]
    fn length_mismatch_names_turn_and_line() {
        let text = concat!(
            r#"{"id":"a","domain":"x","turns":[{"sys_slots":[],"sys_text":[],"user":["hi"],"labels":["O"]}]}"#,
            "\n",
            r#"{"id":"b","domain":"x","turns":[{"sys_slots":[],"sys_text":[],"user":["hi"],"labels":["O"]},{"sys_slots":["time"],"sys_text":["when","?"],"user":["at","three"],"labels":["O"]}]}"#,
            "\n"
        );
        let err = read_dialogs(text.as_bytes(), Path::new("c.jsonl")).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("turn 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_label_and_duplicate_ids() {
        let bad = r#"{"id":"a","domain":"x","turns":[{"user":["hi"],"labels":["Z-x"]}]}"#;
        assert!(read_dialogs(bad.as_bytes(), Path::new("b")).is_err());
        let one = r#"{"id":"a","domain":"x","turns":[{"user":["hi"],"labels":["O"]}]}"#;
        let dup = format!("{one}\n{one}\n");
        assert!(read_dialogs(dup.as_bytes(), Path::new("b")).is_err());
        let ok = read_dialogs(one.as_bytes(), Path::new("b")).unwrap();
        assert!(ok[0].turns[0].system_text.is_empty());

        let bare = r#"{"id":"a","domain":"x","turns":[{"user":["hi","there"]}]}"#;
        assert!(read_dialogs(bare.as_bytes(), Path::new("b")).is_err());
        let ok = read_dialogs_with(bare.as_bytes(), Path::new("b"), false).unwrap();
        assert!(ok[0].turns[0].labels.is_empty());
    }
}
