//! Parameter checkpoints: a sequence of `[param <name>]` headers, each
//! followed by one text-format tensor.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn to_text(params: &[(String, Tensor)]) -> String {
    let mut out = String::new();
    for (name, t) in params {
        let _ = writeln!(out, "[param {name}]");
        out.push_str(&t.to_text());
    }
    out
}

pub fn from_text(text: &str) -> Result<Vec<(String, Tensor)>> {
    let mut params = Vec::new();
    let mut current: Option<(String, usize, String)> = None;
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("[param ") {
            let name = rest.strip_suffix(']').ok_or(Error::Parse {
                line: idx + 1,
                msg: "unterminated section header".into(),
            })?;
            if let Some(section) = current.take() {
                params.push(finish(section)?);
            }
            current = Some((name.trim().to_string(), idx + 1, String::new()));
        } else if let Some((_, _, body)) = current.as_mut() {
            body.push_str(line);
            body.push('\n');
        } else if !trimmed.is_empty() {
            return Err(Error::Parse {
                line: idx + 1,
                msg: "content before first [param] section".into(),
            });
        }
    }
    if let Some(section) = current.take() {
        params.push(finish(section)?);
    }
    Ok(params)
}

fn finish((name, line, body): (String, usize, String)) -> Result<(String, Tensor)> {
    let t = Tensor::from_text(&body).map_err(|e| match e {
        Error::Parse { line: l, msg } => Error::Parse {
            line: line + l,
            msg: format!("param {name}: {msg}"),
        },
        other => other,
    })?;
    if !t.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("param {name} has non-finite entries"),
        });
    }
    Ok((name, t))
}

pub fn save(path: &Path, params: &[(String, Tensor)]) -> Result<()> {
    std::fs::write(path, to_text(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    from_text(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let params = vec![
            ("w".to_string(), Tensor::matrix(2, 2, vec![0.1, -2.0, 3.5, 1e-17]).unwrap()),
            ("b".to_string(), Tensor::vector(vec![1.0, 2.0])),
        ];
        let back = from_text(&to_text(&params)).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn rejects_orphan_content() {
        assert!(from_text("tensor 1 1\n1\n").is_err());
    }
}
