use std::collections::BTreeMap;
use std::sync::OnceLock;

use backcompat::decoding::{beam_decode, CandidateGenerator, Method, SamplingConfig};
use backcompat::scoring::{train, ActionScorer, Capacity, DropoutConfig, Model, ModelKind, ParseState, TrainConfig};
use backcompat::structures::{Dataset, Sentence, Split, Structure};
use backcompat::synth;

fn trained() -> &'static (Model, Dataset) {
    static MODEL: OnceLock<(Model, Dataset)> = OnceLock::new();
    MODEL.get_or_init(|| {
        let train_set = synth::dependency_dataset(150, 11, Split::Train, "train");
        let test = synth::dependency_dataset(120, 12, Split::Test, "test");
        let config = TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        };
        let model = train(ModelKind::ActionFactored, Capacity::Large, &train_set, &config).unwrap();
        (model, test)
    })
}

/// Variants of the trained scorer; dropout makes them differ arbitrarily.
fn scorers(count: u64) -> Vec<ActionScorer> {
    let (model, _) = trained();
    (0..count)
        .map(
            |seed| match model.with_dropout(&DropoutConfig::new(0.5, seed).unwrap()) {
                Model::Action(s) => s,
                Model::Arc(_) => unreachable!(),
            },
        )
        .collect()
}

/// Every complete derivation by depth-first search, with its summed step
/// log-probability; per structure the best derivation is kept.
fn all_derivations(scorer: &ActionScorer, sentence: &Sentence) -> BTreeMap<Structure, f64> {
    fn walk(
        scorer: &ActionScorer,
        sentence: &Sentence,
        state: ParseState,
        log_prob: f64,
        out: &mut BTreeMap<Structure, f64>,
    ) {
        let actions = scorer.actions();
        if state.is_terminal() {
            let best = out.entry(state.finish(actions).unwrap()).or_insert(f64::NEG_INFINITY);
            *best = best.max(log_prob);
            return;
        }
        let probs = scorer.action_distribution(sentence, &state).unwrap();
        for a in state.legal(actions) {
            if probs[a] > 0.0 {
                let mut next = state.clone();
                next.apply(actions.action(a), actions);
                walk(scorer, sentence, next, log_prob + probs[a].ln(), out);
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(scorer, sentence, scorer.initial_state(sentence), 0.0, &mut out);
    out
}

#[test]
fn wide_beam_enumerates_two_token_derivations() {
    let pairs = [
        ("the", "DET", "dog", "NOUN"),
        ("dogs", "NOUN", "bark", "VERB"),
        ("run", "VERB", "!", "PUNCT"),
    ];
    for scorer in scorers(4) {
        for (w1, t1, w2, t2) in pairs {
            let sentence = Sentence::new("two", vec![w1.into(), w2.into()], vec![t1.into(), t2.into()]).unwrap();
            let exhaustive = all_derivations(&scorer, &sentence);
            let beam = beam_decode(&scorer, &sentence, 10_000).unwrap();
            assert_eq!(beam.len(), exhaustive.len());
            for c in &beam {
                let expected = exhaustive[&c.structure];
                assert!(
                    (c.generator_score - expected).abs() < 1e-9,
                    "{} vs {}",
                    c.generator_score,
                    expected
                );
            }
            let best = exhaustive.values().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((beam[0].generator_score - best).abs() < 1e-9);
        }
    }
}

#[test]
fn width_one_is_greedy_decoding() {
    let (model, test) = trained();
    let Model::Action(scorer) = model else { unreachable!() };
    for sentence in test.sentences().take(40) {
        let beam = beam_decode(scorer, sentence, 1).unwrap();
        assert_eq!(beam.len(), 1);
        assert_eq!(beam[0].structure, model.predict(sentence).unwrap());
    }
}

// Beam search is not monotone in its width per sentence: a wider beam can
// keep hypotheses that later crowd out the one a narrow beam finishes. What
// does hold is dominance of the exhaustive beam and the trend on average.
#[test]
fn exhaustive_beam_dominates_narrow_beams() {
    let words = [("dogs", "NOUN"), ("chase", "VERB"), ("the", "DET"), ("cat", "NOUN")];
    for scorer in scorers(3) {
        for n in 2..=3 {
            let sentence = Sentence::new(
                "short",
                words[..n].iter().map(|w| w.0.to_string()).collect(),
                words[..n].iter().map(|w| w.1.to_string()).collect(),
            )
            .unwrap();
            let exhaustive = all_derivations(&scorer, &sentence);
            let best = exhaustive.values().copied().fold(f64::NEG_INFINITY, f64::max);
            for b in [1, 2, 4, 8] {
                let top = beam_decode(&scorer, &sentence, b).unwrap()[0].generator_score;
                assert!(top <= best + 1e-9);
            }
            let full = beam_decode(&scorer, &sentence, 100_000).unwrap()[0].generator_score;
            assert!((full - best).abs() < 1e-9);
        }
    }
}

#[test]
fn wider_beams_score_higher_on_average() {
    let (_, test) = trained();
    let widths = [1, 2, 4, 8];
    let mut means = vec![0.0; widths.len()];
    let mut count = 0.0;
    for scorer in scorers(3) {
        for sentence in test.sentences().take(40) {
            for (i, &b) in widths.iter().enumerate() {
                means[i] += beam_decode(&scorer, sentence, b).unwrap()[0].generator_score;
            }
            count += 1.0;
        }
    }
    let means: Vec<f64> = means.iter().map(|m| m / count).collect();
    assert!(means.windows(2).all(|p| p[1] >= p[0]), "{:?}", means);
}

#[test]
fn beam_outputs_are_ordered_and_distinct() {
    let (model, test) = trained();
    let Model::Action(scorer) = model else { unreachable!() };
    for sentence in test.sentences().take(20) {
        let beam = beam_decode(scorer, sentence, 6).unwrap();
        assert!(beam.windows(2).all(|p| p[0].generator_score >= p[1].generator_score));
        for (i, a) in beam.iter().enumerate() {
            assert_eq!(a.rank, i);
            assert!(beam[i + 1..].iter().all(|b| b.structure != a.structure));
        }
    }
}

fn hamming(a: &Structure, b: &Structure) -> usize {
    let (a, b) = (a.as_dep().unwrap(), b.as_dep().unwrap());
    (0..a.len())
        .filter(|&t| a.head(t) != b.head(t) || a.label(t) != b.label(t))
        .count()
}

/// Mean over sentences of the mean pairwise token distance within a
/// candidate set; a single candidate contributes zero.
fn diversity(model: &Model, test: &Dataset, method: Method) -> f64 {
    let generator = CandidateGenerator::new(model, SamplingConfig::new(method, 10, 7).unwrap()).unwrap();
    let sentences: Vec<&Sentence> = test.sentences().collect();
    let total: f64 = sentences
        .iter()
        .map(|s| {
            let set = generator.generate(s).unwrap();
            let c = &set.candidates;
            let mut sum = 0;
            let mut pairs = 0;
            for i in 0..c.len() {
                for j in i + 1..c.len() {
                    sum += hamming(&c[i].structure, &c[j].structure);
                    pairs += 1;
                }
            }
            if pairs == 0 {
                0.0
            } else {
                sum as f64 / pairs as f64
            }
        })
        .sum();
    total / sentences.len() as f64
}

#[test]
fn dropout_candidates_are_more_diverse_than_nucleus_samples() {
    let (model, test) = trained();
    assert!(test.len() >= 100);
    let dropout = diversity(model, test, Method::DropoutP { rate: 0.3 });
    let nucleus = diversity(model, test, Method::TopP { p: 0.95 });
    assert!(dropout > nucleus, "dropout {:.3} vs top_p {:.3}", dropout, nucleus);
}
