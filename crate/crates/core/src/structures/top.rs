//! Bracketed intent/slot trees: `[IN:X word [SL:Y word ] ]`.

use std::io::{BufRead, Write};

use crate::error::Error;

use super::{is_intent, is_slot, Dataset, Example, Sentence, SpanNode, SpanTree, Split, Task};

/// Parses one bracketed tree. Returns the terminal words and the root node;
/// line numbers in errors are reported as 1.
pub fn parse_top_tree(text: &str) -> Result<(Vec<String>, SpanNode), Error> {
    parse_at_line(text, 1)
}

fn parse_at_line(text: &str, line: usize) -> Result<(Vec<String>, SpanNode), Error> {
    let err = |message: String| Error::Parse { line, message };
    let mut words = Vec::new();
    let mut stack: Vec<(String, Vec<SpanNode>)> = Vec::new();
    let mut root = None;
    for piece in text.split_whitespace() {
        if root.is_some() {
            return Err(err(format!("trailing input {:?} after the root closed", piece)));
        }
        if let Some(label) = piece.strip_prefix('[') {
            if !is_intent(label) && !is_slot(label) {
                return Err(err(format!("bad node label {:?}", label)));
            }
            stack.push((label.to_string(), Vec::new()));
        } else if piece == "]" {
            let (label, children) = stack.pop().ok_or_else(|| err("unbalanced closing bracket".into()))?;
            if children.is_empty() {
                return Err(err(format!("node {} has no children", label)));
            }
            let node = SpanNode::Node { label, children };
            match stack.last_mut() {
                Some((_, siblings)) => siblings.push(node),
                None => root = Some(node),
            }
        } else {
            let (_, children) = stack
                .last_mut()
                .ok_or_else(|| err(format!("word {:?} outside any bracket", piece)))?;
            children.push(SpanNode::Leaf(words.len()));
            words.push(piece.to_string());
        }
    }
    if !stack.is_empty() {
        return Err(err(format!("{} unclosed bracket(s)", stack.len())));
    }
    let root = root.ok_or_else(|| err("empty tree".into()))?;
    Ok((words, root))
}

/// Parses a single TOP line (`utterance<TAB>tree`, or a bare tree).
///
/// When more than one tab-separated field is present the last one is the
/// tree and the one before it the tokenized utterance.
pub fn parse_top(line: &str, lineno: usize, id: impl Into<String>) -> Result<Example, Error> {
    let id = id.into();
    let fields: Vec<&str> = line.split('\t').collect();
    let tree_text = fields[fields.len() - 1];
    let (leaves, root) = parse_at_line(tree_text, lineno)?;
    if fields.len() >= 2 {
        let utterance: Vec<String> = fields[fields.len() - 2].split_whitespace().map(String::from).collect();
        if utterance != leaves {
            return Err(Error::Alignment {
                sentence_id: id,
                leaves,
                utterance,
            });
        }
    }
    let tree = SpanTree::new(root).map_err(|e| Error::Structure {
        sentence_id: id.clone(),
        message: e.to_string(),
    })?;
    let sentence = Sentence::untagged(id, leaves)?;
    Ok(Example {
        sentence,
        gold: tree.into(),
    })
}

/// Reads one example per non-empty line.
pub fn read_top<R: BufRead>(reader: R, split: Split) -> Result<Dataset, Error> {
    let mut examples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let id = format!("t{}", examples.len() + 1);
        examples.push(parse_top(line, idx + 1, id)?);
    }
    Dataset::new(Task::Semantic, split, examples)
}

/// Linearizes a tree over the given words.
pub fn serialize_top(tree: &SpanTree, words: &[String]) -> String {
    let mut out = String::new();
    write_node(tree.root(), words, &mut out);
    out
}

fn write_node(node: &SpanNode, words: &[String], out: &mut String) {
    match node {
        SpanNode::Leaf(i) => out.push_str(&words[*i]),
        SpanNode::Node { label, children } => {
            out.push('[');
            out.push_str(label);
            for child in children {
                out.push(' ');
                write_node(child, words, out);
            }
            out.push_str(" ]");
        }
    }
}

/// Writes `utterance<TAB>tree` lines.
pub fn write_top<'a, W, I>(mut writer: W, items: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a Sentence, &'a SpanTree)>,
{
    for (sentence, tree) in items {
        writeln!(
            writer,
            "{}\t{}",
            sentence.tokens().join(" "),
            serialize_top(tree, sentence.tokens())
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_intent() {
        let ex = parse_top("tonight\t[IN:GET_EVENT tonight ]", 1, "a").unwrap();
        let tree = ex.gold.as_span().unwrap();
        assert_eq!(tree.root().range(), (0, 0));
        assert_eq!(serialize_top(tree, ex.sentence.tokens()), "[IN:GET_EVENT tonight ]");
    }

    #[test]
    fn missing_bracket_is_parse_error() {
        assert!(matches!(parse_top_tree("[IN:A [SL:B x ] y"), Err(Error::Parse { .. })));
        assert!(matches!(parse_top_tree("[IN:A x ] ]"), Err(Error::Parse { .. })));
    }

    #[test]
    fn leaf_mismatch_is_alignment_error() {
        assert!(matches!(
            parse_top("a b\t[IN:X a c ]", 1, "x"),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn read_multiple_lines() {
        let text = "a b\t[IN:X a [SL:Y b ] ]\n\n[IN:Z c ]\n";
        let data = read_top(text.as_bytes(), Split::Train).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.task(), Task::Semantic);
    }

    #[test]
    fn figure_one_round_trip() {
        let line = "[IN:GET_DIRECTION Directions to [SL:DESTINATION [IN:FIND_EVENT \
                    [SL:ORGANIZER the ] Eagles [SL:CATEGORY game ] ] ] ]";
        let ex = parse_top(line, 1, "fig").unwrap();
        let tree = ex.gold.as_span().unwrap();
        let text = serialize_top(tree, ex.sentence.tokens());
        let again = parse_top(&text, 1, "fig").unwrap();
        assert_eq!(
            again.gold.as_span().unwrap().decompose_to_spans(),
            tree.decompose_to_spans()
        );
        assert_eq!(
            text.split_whitespace().collect::<Vec<_>>(),
            line.split_whitespace().collect::<Vec<_>>()
        );
    }
}
