//! Synthetic corpora and random structures.
//!
//! The dependency grammar produces English-like sentences with determiners,
//! adjectives, auxiliaries, adverbs, coordination, trailing punctuation
//! and prepositional phrases. PP attachment is the main ambiguity: a PP
//! attaches to the verb or to the preceding object noun with a probability
//! that depends on the PP noun and the verb, so it is partly predictable
//! from lexical head/dependent pairs and partly noise.
//!
//! The intent/slot grammar produces navigation, event and weather requests
//! with optional nested intents inside slots. Intent choice, slot labels
//! and slot boundaries are each partly lexically conditioned and partly
//! noise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::structures::{
    Dataset, DepTree, Example, Head, Sentence, SpanNode, SpanTree, Split, Structure, Task, PUNCT_TAG,
};

const DETS: &[&str] = &["the", "a", "this", "every", "that", "some"];
const ADJS: &[&str] = &[
    "old", "new", "red", "small", "large", "quiet", "busy", "bright", "cold", "local", "famous", "empty", "green",
    "strange", "heavy",
];
/// Nouns that usually head adverbial PPs (attach to the verb).
const PLACE_NOUNS: &[&str] = &[
    "park", "station", "kitchen", "garden", "office", "market", "river", "school", "harbor", "library", "street",
    "forest", "hall", "bridge", "yard", "morning", "evening", "weekend", "hurry", "silence",
];
/// Nouns that usually head PP modifiers of nouns.
const THING_NOUNS: &[&str] = &[
    "handle", "lid", "stripes", "wheels", "pages", "roof", "window", "label", "buttons", "cover", "sugar", "cheese",
    "ribbon", "frame", "spots", "pockets", "strings", "glass", "paint", "keys",
];
const OBJECT_NOUNS: &[&str] = &[
    "box", "car", "book", "cake", "letter", "bag", "chair", "lamp", "guitar", "picture", "bottle", "coat", "ball",
    "phone", "map", "basket", "clock", "bike", "kite", "jar",
];
const SUBJECT_NOUNS: &[&str] = &[
    "man", "woman", "child", "teacher", "dog", "farmer", "doctor", "student", "driver", "artist", "cook", "pilot",
];
const PROPNS: &[&str] = &[
    "Anna", "Boris", "Chen", "Dana", "Emil", "Fatima", "Gus", "Hiro", "Ines", "Jonas",
];
const PRONS: &[&str] = &["he", "she", "they", "we", "it"];
/// Verbs whose PPs lean towards the verb.
const MOTION_VERBS: &[&str] = &[
    "carried", "moved", "left", "dropped", "found", "hid", "placed", "kept", "lost", "put",
];
/// Verbs whose PPs lean towards the object.
const CHOICE_VERBS: &[&str] = &[
    "bought", "liked", "chose", "wanted", "sold", "painted", "opened", "fixed", "saw", "took",
];
const INTRANS_VERBS: &[&str] = &[
    "slept", "waited", "arrived", "laughed", "worked", "sang", "ran", "stayed",
];
const ADPS: &[&str] = &["in", "with", "on", "near", "from", "under", "for", "at"];
const ADVS: &[&str] = &[
    "quickly",
    "often",
    "slowly",
    "today",
    "again",
    "carefully",
    "later",
    "quietly",
];
const AUXS: &[&str] = &["will", "can", "must", "did"];

struct Builder {
    forms: Vec<String>,
    tags: Vec<String>,
    heads: Vec<Option<usize>>,
    labels: Vec<String>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            forms: Vec::new(),
            tags: Vec::new(),
            heads: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn push(&mut self, form: &str, tag: &str) -> usize {
        self.forms.push(form.to_string());
        self.tags.push(tag.to_string());
        self.heads.push(None);
        self.labels.push(String::new());
        self.forms.len() - 1
    }

    fn attach(&mut self, dep: usize, head: usize, label: &str) {
        self.heads[dep] = Some(head);
        self.labels[dep] = label.to_string();
    }

    fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
        words.choose(rng).expect("non-empty word list")
    }

    /// Noun phrase over `nouns`; returns the head index.
    fn noun_phrase(&mut self, rng: &mut ChaCha8Rng, nouns: &[&str], allow_pp: bool) -> usize {
        let mut pre = Vec::new();
        if rng.gen_bool(0.85) {
            pre.push((self.push(Self::pick(rng, DETS), "DET"), "det"));
        }
        for _ in 0..rng.gen_range(0..=2) {
            pre.push((self.push(Self::pick(rng, ADJS), "ADJ"), "amod"));
        }
        if rng.gen_bool(0.1) {
            pre.push((self.push(Self::pick(rng, THING_NOUNS), "NOUN"), "compound"));
        }
        let head = self.push(Self::pick(rng, nouns), "NOUN");
        for (dep, label) in pre {
            self.attach(dep, head, label);
        }
        if allow_pp && rng.gen_bool(0.12) {
            let pp = self.prep_phrase(rng, THING_NOUNS, false);
            self.attach(pp, head, "nmod");
        }
        head
    }

    fn subject(&mut self, rng: &mut ChaCha8Rng) -> usize {
        match rng.gen_range(0..10) {
            0..=1 => self.push(Self::pick(rng, PRONS), "PRON"),
            2..=3 => self.push(Self::pick(rng, PROPNS), "PROPN"),
            _ => self.noun_phrase(rng, SUBJECT_NOUNS, true),
        }
    }

    fn prep_phrase(&mut self, rng: &mut ChaCha8Rng, nouns: &[&str], allow_pp: bool) -> usize {
        let adp = self.push(Self::pick(rng, ADPS), "ADP");
        let head = self.noun_phrase(rng, nouns, allow_pp);
        self.attach(adp, head, "case");
        head
    }

    /// Clause headed by a verb; returns the verb index.
    fn clause(&mut self, rng: &mut ChaCha8Rng) -> usize {
        let front_adv = rng.gen_bool(0.1).then(|| self.push(Self::pick(rng, ADVS), "ADV"));
        let subj = self.subject(rng);
        let aux = rng.gen_bool(0.25).then(|| self.push(Self::pick(rng, AUXS), "AUX"));
        let transitive = rng.gen_bool(0.8);
        let motion = rng.gen_bool(0.5);
        let verb_form = if !transitive {
            Self::pick(rng, INTRANS_VERBS)
        } else if motion {
            Self::pick(rng, MOTION_VERBS)
        } else {
            Self::pick(rng, CHOICE_VERBS)
        };
        let verb = self.push(verb_form, "VERB");
        self.attach(subj, verb, "nsubj");
        if let Some(a) = aux {
            self.attach(a, verb, "aux");
        }
        if let Some(a) = front_adv {
            self.attach(a, verb, "advmod");
        }
        let obj = transitive.then(|| {
            let o = self.noun_phrase(rng, OBJECT_NOUNS, false);
            self.attach(o, verb, "obj");
            o
        });
        let pps = match rng.gen_range(0..10) {
            0..=2 => 0,
            3..=7 => 1,
            _ => 2,
        };
        // Noun a following PP may modify without crossing arcs: the object
        // until some PP attaches to the verb, then the latest PP noun.
        let mut site = obj;
        for _ in 0..pps {
            let place = rng.gen_bool(0.5);
            let nouns = if place { PLACE_NOUNS } else { THING_NOUNS };
            let pp = self.prep_phrase(rng, nouns, true);
            match site {
                Some(noun) => {
                    let mut to_verb = if place { 0.85 } else { 0.2 };
                    to_verb += if motion { 0.1 } else { -0.1 };
                    if rng.gen_bool(f64::clamp(to_verb, 0.0, 1.0)) {
                        self.attach(pp, verb, "obl");
                        site = Some(pp);
                    } else {
                        self.attach(pp, noun, "nmod");
                    }
                }
                None => self.attach(pp, verb, "obl"),
            }
        }
        if rng.gen_bool(0.25) {
            let adv = self.push(Self::pick(rng, ADVS), "ADV");
            self.attach(adv, verb, "advmod");
        }
        verb
    }

    fn finish(self, id: String) -> Example {
        let heads = self.heads.iter().map(|h| h.map_or(Head::Root, Head::Word)).collect();
        let sentence = Sentence::new(id, self.forms, self.tags).expect("generated sentence is valid");
        let tree = DepTree::new(heads, self.labels).expect("generated tree is valid");
        Example {
            sentence,
            gold: Structure::Dep(tree),
        }
    }
}

fn dependency_example(rng: &mut ChaCha8Rng, id: String) -> Example {
    let mut b = Builder::new();
    let root = b.clause(rng);
    if rng.gen_bool(0.15) {
        let comma = rng.gen_bool(0.5).then(|| b.push(",", PUNCT_TAG));
        let cc = b.push("and", "CCONJ");
        let second = b.clause(rng);
        b.attach(cc, second, "cc");
        if let Some(c) = comma {
            b.attach(c, second, "punct");
        }
        b.attach(second, root, "conj");
    }
    if rng.gen_bool(0.9) {
        let dot = b.push(".", PUNCT_TAG);
        b.attach(dot, root, "punct");
    }
    let mut ex = b.finish(id);
    if let Structure::Dep(tree) = &ex.gold {
        let root_token = tree.root();
        let mut labels = tree.labels().to_vec();
        labels[root_token] = "root".into();
        ex.gold = Structure::Dep(tree.with_labels(labels).expect("same length"));
    }
    ex
}

/// `count` synthetic dependency examples; ids are `{prefix}-{index}`.
pub fn dependency_dataset(count: usize, seed: u64, split: Split, prefix: &str) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..count)
        .map(|i| dependency_example(&mut rng, format!("{}-{}", prefix, i)))
        .collect();
    Dataset::new(Task::Dependency, split, examples).expect("generated dataset is valid")
}

const PLACES: &[&[&str]] = &[
    &["the", "airport"],
    &["the", "stadium"],
    &["downtown"],
    &["the", "museum"],
    &["central", "station"],
    &["my", "office"],
    &["the", "beach"],
];
/// Places that lean towards `SL:LOCATION` after "near".
const AREA_PLACES: usize = 3;
const EVENT_NAMES: &[&str] = &["Eagles", "Lakers", "Giants", "Symphony", "Marathon", "Jazz"];
const CATEGORIES: &[&str] = &["game", "concert", "festival", "show", "match", "parade"];
const TIMES: &[&[&str]] = &[
    &["tonight"],
    &["tomorrow"],
    &["this", "weekend"],
    &["on", "friday"],
    &["at", "noon"],
    &["next", "week"],
];
const CITIES: &[&str] = &["Boston", "Denver", "Austin", "Seattle", "Chicago", "Miami"];
const FILLERS: &[&str] = &["please", "now", "quickly"];

struct SpanBuilder {
    words: Vec<String>,
}

impl SpanBuilder {
    fn words(&mut self, words: &[&str]) -> Vec<SpanNode> {
        words
            .iter()
            .map(|w| {
                self.words.push(w.to_string());
                SpanNode::Leaf(self.words.len() - 1)
            })
            .collect()
    }

    fn slot(&mut self, label: &str, words: &[&str]) -> SpanNode {
        SpanNode::node(label, self.words(words))
    }

    fn event(&mut self, rng: &mut ChaCha8Rng) -> SpanNode {
        let mut children = self.words(&["the"]);
        if rng.gen_bool(0.5) {
            let name = *EVENT_NAMES.choose(rng).expect("non-empty");
            children.push(self.slot("SL:ORGANIZER", &[name]));
        }
        let category = *CATEGORIES.choose(rng).expect("non-empty");
        children.push(self.slot("SL:CATEGORY_EVENT", &[category]));
        SpanNode::node("IN:GET_EVENT", children)
    }

    /// A destination-like slot. After "near" the label depends on the
    /// place with some noise.
    fn destination(&mut self, rng: &mut ChaCha8Rng, near: bool) -> (SpanNode, bool) {
        if rng.gen_bool(0.4) {
            let event = self.event(rng);
            (SpanNode::node("SL:DESTINATION", vec![event]), true)
        } else {
            let i = rng.gen_range(0..PLACES.len());
            let label = if near && rng.gen_bool(if i < AREA_PLACES { 0.8 } else { 0.25 }) {
                "SL:LOCATION"
            } else {
                "SL:DESTINATION"
            };
            (self.slot(label, PLACES[i]), false)
        }
    }

    /// A time slot. Whether a leading preposition is inside the slot
    /// depends on the intent with some noise.
    fn time(&mut self, rng: &mut ChaCha8Rng, weather: bool) -> Vec<SpanNode> {
        let time = *TIMES.choose(rng).expect("non-empty");
        if matches!(time[0], "on" | "at") && !rng.gen_bool(if weather { 0.8 } else { 0.3 }) {
            let mut out = self.words(&time[..1]);
            out.push(self.slot("SL:DATE_TIME", &time[1..]));
            out
        } else {
            vec![self.slot("SL:DATE_TIME", time)]
        }
    }

    fn utterance(&mut self, rng: &mut ChaCha8Rng) -> SpanNode {
        let mut c = Vec::new();
        if rng.gen_bool(0.15) {
            c.extend(self.words(&["please"]));
        }
        let intent = match rng.gen_range(0..5) {
            0 => {
                c.extend(self.words(if rng.gen_bool(0.5) {
                    &["directions", "to"]
                } else {
                    &["how", "do", "i", "get", "to"]
                }));
                c.push(self.destination(rng, false).0);
                if rng.gen_bool(0.3) {
                    c.extend(self.time(rng, false));
                }
                "IN:GET_DIRECTIONS"
            }
            1 => {
                c.extend(self.words(&["how", "long", "to", "drive", "to"]));
                c.push(self.destination(rng, false).0);
                "IN:GET_ESTIMATED_DURATION"
            }
            2 => {
                c.extend(self.words(&["weather"]));
                if rng.gen_bool(0.6) {
                    c.extend(self.words(&["in"]));
                    let city = *CITIES.choose(rng).expect("non-empty");
                    c.push(self.slot("SL:LOCATION", &[city]));
                }
                c.extend(self.time(rng, true));
                "IN:GET_WEATHER"
            }
            3 => {
                c.extend(self.words(&["is", "there", "traffic", "near"]));
                c.push(self.destination(rng, true).0);
                if rng.gen_bool(0.5) {
                    c.extend(self.time(rng, false));
                }
                "IN:GET_INFO_TRAFFIC"
            }
            _ => {
                // "traffic to X": the intent hinges on what X turns out to be
                c.extend(self.words(&["traffic", "to"]));
                let (dest, event) = self.destination(rng, false);
                c.push(dest);
                if rng.gen_bool(if event { 0.75 } else { 0.3 }) {
                    "IN:GET_INFO_TRAFFIC"
                } else {
                    "IN:GET_ESTIMATED_DURATION"
                }
            }
        };
        if rng.gen_bool(0.2) {
            let filler = *FILLERS.choose(rng).expect("non-empty");
            c.extend(self.words(&[filler]));
        }
        SpanNode::node(intent, c)
    }
}

fn semantic_example(rng: &mut ChaCha8Rng, id: String) -> Example {
    let mut b = SpanBuilder { words: Vec::new() };
    let root = b.utterance(rng);
    let tree = SpanTree::new(root).expect("generated tree is valid");
    let sentence = Sentence::untagged(id, b.words).expect("generated sentence is valid");
    Example {
        sentence,
        gold: Structure::Span(tree),
    }
}

/// `count` synthetic intent/slot examples; ids are `{prefix}-{index}`.
pub fn semantic_dataset(count: usize, seed: u64, split: Split, prefix: &str) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..count)
        .map(|i| semantic_example(&mut rng, format!("{}-{}", prefix, i)))
        .collect();
    Dataset::new(Task::Semantic, split, examples).expect("generated dataset is valid")
}

/// Uniformly random head assignment that forms a single-root arborescence
/// (possibly non-projective).
pub fn random_heads(rng: &mut impl Rng, n: usize) -> Vec<Head> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut heads = vec![Head::Root; n];
    for i in 1..n {
        heads[order[i]] = Head::Word(order[rng.gen_range(0..i)]);
    }
    heads
}

/// Random well-formed intent/slot tree over `n >= 1` tokens.
pub fn random_span_tree(rng: &mut impl Rng, n: usize) -> SpanTree {
    fn build(rng: &mut impl Rng, start: usize, end: usize, intent: bool, depth: usize) -> SpanNode {
        let label = if intent {
            format!("IN:I{}", rng.gen_range(0..3))
        } else {
            format!("SL:S{}", rng.gen_range(0..3))
        };
        let mut children = Vec::new();
        let mut i = start;
        while i < end {
            let remaining = end - i;
            if depth < 4 && rng.gen_bool(0.35) {
                let len = rng.gen_range(1..=remaining);
                children.push(build(rng, i, i + len, !intent, depth + 1));
                i += len;
            } else {
                children.push(SpanNode::Leaf(i));
                i += 1;
            }
        }
        SpanNode::node(label, children)
    }
    SpanTree::new(build(rng, 0, n, true, 0)).expect("generated tree is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dependency_data_is_deterministic() {
        let a = dependency_dataset(50, 7, Split::Train, "t");
        let b = dependency_dataset(50, 7, Split::Train, "t");
        assert_eq!(a, b);
        assert_ne!(a, dependency_dataset(50, 8, Split::Train, "t"));
        let punct = a
            .sentences()
            .flat_map(|s| s.pos_tags())
            .filter(|t| *t == PUNCT_TAG)
            .count();
        assert!(punct > 0);
    }

    #[test]
    fn semantic_data_is_well_formed() {
        let data = semantic_dataset(50, 3, Split::Test, "q");
        assert_eq!(data.len(), 50);
        assert!(data.golds().all(|g| g.as_span().is_some()));
    }

    #[test]
    fn random_structures_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in 1..8 {
            assert!(DepTree::unlabeled(random_heads(&mut rng, n)).is_ok());
            assert_eq!(random_span_tree(&mut rng, n).len(), n);
        }
    }
}
