//! Amino-acid FASTA reader.

use crate::error::{Error, Result};
use crate::seqcore::alphabet::Alphabet;

/// Parses amino-acid FASTA records into `(id, sequence)` pairs.
///
/// The id is the first whitespace-delimited word of the header. Sequence
/// lines are uppercased and stripped of whitespace. Line numbers in errors
/// are 1-based.
pub fn parse_fasta(bytes: &[u8]) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    // (id, header line number, sequence)
    let mut current: Option<(String, usize, String)> = None;

    let finish = |cur: Option<(String, usize, String)>, out: &mut Vec<(String, String)>| match cur {
        Some((id, line, seq)) if seq.is_empty() => Err(Error::Fasta {
            line,
            message: format!("record '{id}' has an empty sequence"),
        }),
        Some((id, _, seq)) => {
            out.push((id, seq));
            Ok(())
        }
        None => Ok(()),
    };

    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = idx + 1;
        if !raw.is_ascii() {
            return Err(Error::Fasta { line: line_no, message: "non-ASCII input".into() });
        }
        let line = std::str::from_utf8(raw).expect("ascii is utf8");
        let line = line.trim_end_matches('\r');
        if let Some(header) = line.strip_prefix('>') {
            finish(current.take(), &mut out)?;
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(Error::Fasta { line: line_no, message: "header without an id".into() });
            }
            current = Some((id.to_string(), line_no, String::new()));
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let Some((_, _, seq)) = current.as_mut() else {
            return Err(Error::Fasta {
                line: line_no,
                message: "sequence data before the first '>' header".into(),
            });
        };
        for c in line.chars().filter(|c| !c.is_whitespace()) {
            let up = c.to_ascii_uppercase();
            if !Alphabet.is_residue(up as u8) {
                return Err(Error::Fasta {
                    line: line_no,
                    message: format!("invalid symbol '{c}'"),
                });
            }
            seq.push(up);
        }
    }
    finish(current.take(), &mut out)?;
    Ok(out)
}

/// Writes records as FASTA with 60-column sequence lines.
pub fn write_fasta<'a, I>(records: I) -> String
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut s = String::new();
    for (id, seq) in records {
        s.push('>');
        s.push_str(id);
        s.push('\n');
        for chunk in seq.as_bytes().chunks(60) {
            s.push_str(std::str::from_utf8(chunk).unwrap());
            s.push('\n');
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[(&str, &str)]) -> Vec<(String, String)> {
        v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn single_record() {
        assert_eq!(parse_fasta(b">a\nCARD").unwrap(), pairs(&[("a", "CARD")]));
    }

    #[test]
    fn multi_line_body() {
        assert_eq!(
            parse_fasta(b">a\nCA\nRD\n>b\nWY").unwrap(),
            pairs(&[("a", "CARD"), ("b", "WY")])
        );
    }

    #[test]
    fn invalid_symbol_reports_line() {
        match parse_fasta(b">a\nCA1D") {
            Err(Error::Fasta { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains('1'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lowercase_and_whitespace() {
        assert_eq!(
            parse_fasta(b">x desc here\r\nc a r\n\nd\n").unwrap(),
            pairs(&[("x", "CARD")])
        );
    }

    #[test]
    fn empty_sequence_and_bad_headers() {
        assert!(matches!(parse_fasta(b">a\n>b\nCA"), Err(Error::Fasta { line: 1, .. })));
        assert!(matches!(parse_fasta(b">\nCA"), Err(Error::Fasta { line: 1, .. })));
        assert!(matches!(parse_fasta(b"CA\n>a\nC"), Err(Error::Fasta { line: 1, .. })));
    }

    #[test]
    fn write_then_parse() {
        let long = "ACDEFGHIKLMNPQRSTVWY".repeat(4);
        let text = write_fasta([("s1", long.as_str()), ("s2", "CARD")]);
        assert_eq!(parse_fasta(text.as_bytes()).unwrap(), pairs(&[("s1", &long), ("s2", "CARD")]));
    }
}
