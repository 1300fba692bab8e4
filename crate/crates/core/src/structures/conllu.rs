//! CoNLL-U reading and writing.
//!
//! Only ID, FORM, UPOS, HEAD and DEPREL are retained; the writer emits `_`
//! for the remaining columns. Multi-word token ranges (`3-4`) and empty
//! nodes (`5.1`) are skipped on input.

use std::io::{BufRead, Write};

use crate::error::Error;

use super::{Dataset, DepTree, Example, Head, Sentence, Split, Task, EMPTY_FIELD};

const COLUMNS: usize = 10;

struct Row {
    form: String,
    upos: String,
    head: usize,
    deprel: String,
}

struct Block {
    id: Option<String>,
    rows: Vec<Row>,
    first_line: usize,
}

impl Block {
    fn new() -> Self {
        Block {
            id: None,
            rows: Vec::new(),
            first_line: 0,
        }
    }

    fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn finish(self, ordinal: usize) -> Result<Example, Error> {
        let sentence_id = self.id.unwrap_or_else(|| format!("s{}", ordinal));
        let n = self.rows.len();
        let mut tokens = Vec::with_capacity(n);
        let mut tags = Vec::with_capacity(n);
        let mut heads = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for row in self.rows {
            if row.head > n {
                return Err(Error::Structure {
                    sentence_id,
                    message: format!("head {} exceeds sentence length {}", row.head, n),
                });
            }
            tokens.push(row.form);
            tags.push(row.upos);
            heads.push(if row.head == 0 {
                Head::Root
            } else {
                Head::Word(row.head - 1)
            });
            labels.push(row.deprel);
        }
        let sentence = Sentence::new(sentence_id.clone(), tokens, tags)?;
        let tree = DepTree::new(heads, labels).map_err(|e| Error::Structure {
            sentence_id: sentence_id.clone(),
            message: match e {
                Error::InvalidTree(msg) => msg,
                other => other.to_string(),
            },
        })?;
        Ok(Example {
            sentence,
            gold: tree.into(),
        })
    }
}

fn parse_row(line: &str, lineno: usize, expected_id: usize) -> Result<Option<Row>, Error> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != COLUMNS {
        return Err(Error::Parse {
            line: lineno,
            message: format!("expected {} columns, found {}", COLUMNS, fields.len()),
        });
    }
    let id = fields[0];
    if id.contains('-') || id.contains('.') {
        return Ok(None);
    }
    let id: usize = id.parse().map_err(|_| Error::Parse {
        line: lineno,
        message: format!("invalid token id {:?}", fields[0]),
    })?;
    if id != expected_id {
        return Err(Error::Parse {
            line: lineno,
            message: format!("expected token id {}, found {}", expected_id, id),
        });
    }
    let head = fields[6].parse().map_err(|_| Error::Parse {
        line: lineno,
        message: format!("invalid head {:?}", fields[6]),
    })?;
    Ok(Some(Row {
        form: fields[1].to_string(),
        upos: fields[3].to_string(),
        head,
        deprel: fields[7].to_string(),
    }))
}

/// Reads a CoNLL-U stream into a dependency dataset.
pub fn read_conllu<R: BufRead>(reader: R, split: Split) -> Result<Dataset, Error> {
    let mut examples = Vec::new();
    let mut block = Block::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            if !block.is_empty() {
                let done = std::mem::replace(&mut block, Block::new());
                examples.push(done.finish(examples.len() + 1)?);
            } else {
                block = Block::new();
            }
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("sent_id") {
                let id = id.trim_start().trim_start_matches('=').trim();
                block.id = Some(id.to_string());
            }
            continue;
        }
        if block.rows.is_empty() {
            block.first_line = lineno;
        }
        if let Some(row) = parse_row(trimmed, lineno, block.rows.len() + 1)? {
            block.rows.push(row);
        }
    }
    if !block.is_empty() {
        examples.push(block.finish(examples.len() + 1)?);
    }
    Dataset::new(Task::Dependency, split, examples)
}

/// Convenience wrapper over [`read_conllu`] for in-memory text.
pub fn parse_conllu(text: &str, split: Split) -> Result<Dataset, Error> {
    read_conllu(text.as_bytes(), split)
}

/// Writes sentences with their trees as CoNLL-U, one `# sent_id` comment
/// per block.
pub fn write_conllu<'a, W, I>(mut writer: W, items: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a Sentence, &'a DepTree)>,
{
    for (sentence, tree) in items {
        writeln!(writer, "# sent_id = {}", sentence.id())?;
        for i in 0..sentence.len() {
            writeln!(
                writer,
                "{}\t{}\t{e}\t{}\t{e}\t{e}\t{}\t{}\t{e}\t{e}",
                i + 1,
                sentence.tokens()[i],
                sentence.pos_tags()[i],
                tree.head(i).node(),
                tree.label(i),
                e = EMPTY_FIELD,
            )?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HE_LEFT: &str = "# sent_id = t1\n\
1\tHe\the\tPRON\t_\t_\t2\tnsubj\t_\t_\n\
2\tleft\tleave\tVERB\t_\t_\t0\troot\t_\t_\n\n";

    #[test]
    fn two_token_tree() {
        let data = parse_conllu(HE_LEFT, Split::Test).unwrap();
        assert_eq!(data.len(), 1);
        let tree = data.examples()[0].gold.as_dep().unwrap();
        assert_eq!(tree.heads(), &[Head::Word(1), Head::Root]);
        assert_eq!(tree.labels(), &["nsubj".to_string(), "root".to_string()]);
        assert_eq!(data.examples()[0].sentence.id(), "t1");
    }

    #[test]
    fn cycle_is_structure_error() {
        let text = "# sent_id = bad\n\
1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n\
2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n\
3\tc\t_\tX\t_\t_\t0\troot\t_\t_\n";
        match parse_conllu(text, Split::Test) {
            Err(Error::Structure { sentence_id, .. }) => assert_eq!(sentence_id, "bad"),
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn multi_root_is_structure_error() {
        let text = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\t0\troot\t_\t_\n";
        assert!(matches!(parse_conllu(text, Split::Test), Err(Error::Structure { .. })));
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let text = "# c\n1\ta\t_\tX\t_\t_\t0\troot\t_\n";
        match parse_conllu(text, Split::Test) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn skips_multiword_and_empty_nodes() {
        let text = "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tdo\t_\tAUX\t_\t_\t3\taux\t_\t_\n\
2\tn't\t_\tPART\t_\t_\t3\tadvmod\t_\t_\n\
2.1\tx\t_\tX\t_\t_\t_\t_\t_\t_\n\
3\tgo\t_\tVERB\t_\t_\t0\troot\t_\t_\n";
        let data = parse_conllu(text, Split::Test).unwrap();
        assert_eq!(data.examples()[0].sentence.tokens().len(), 3);
    }

    #[test]
    fn round_trip_without_comments() {
        let data = parse_conllu(HE_LEFT, Split::Test).unwrap();
        let mut out = Vec::new();
        let items = data.iter().map(|e| (&e.sentence, e.gold.as_dep().unwrap()));
        write_conllu(&mut out, items).unwrap();
        let reread = parse_conllu(std::str::from_utf8(&out).unwrap(), Split::Test).unwrap();
        assert_eq!(reread, data);
    }
}
