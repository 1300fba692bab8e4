use backcompat::scoring::{
    load_model, read_model, save_model, train, train_with_stats, Capacity, ModelKind, TrainConfig,
};
use backcompat::structures::{parse_conllu, Dataset, Split};
use backcompat::synth;

const TOY: &str = "\
1\tdogs\t_\tNOUN\t_\t_\t2\tnsubj\t_\t_
2\tbark\t_\tVERB\t_\t_\t0\troot\t_\t_

1\tthe\t_\tDET\t_\t_\t2\tdet\t_\t_
2\tcat\t_\tNOUN\t_\t_\t3\tnsubj\t_\t_
3\tsleeps\t_\tVERB\t_\t_\t0\troot\t_\t_

1\tbirds\t_\tNOUN\t_\t_\t2\tnsubj\t_\t_
2\teat\t_\tVERB\t_\t_\t0\troot\t_\t_
3\tthe\t_\tDET\t_\t_\t4\tdet\t_\t_
4\tseeds\t_\tNOUN\t_\t_\t2\tobj\t_\t_
5\t.\t_\tPUNCT\t_\t_\t2\tpunct\t_\t_

1\tthe\t_\tDET\t_\t_\t2\tdet\t_\t_
2\tdog\t_\tNOUN\t_\t_\t3\tnsubj\t_\t_
3\tsees\t_\tVERB\t_\t_\t0\troot\t_\t_
4\tbirds\t_\tNOUN\t_\t_\t3\tobj\t_\t_
";

fn toy() -> Dataset {
    parse_conllu(TOY, Split::Train).unwrap()
}

#[test]
fn both_factorizations_fit_a_separable_toy_set() {
    let data = toy();
    let config = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    for kind in [ModelKind::ArcFactored, ModelKind::ActionFactored] {
        let model = train(kind, Capacity::Large, &data, &config).unwrap();
        for ex in data.iter() {
            assert_eq!(
                model.predict(&ex.sentence).unwrap(),
                ex.gold,
                "{} on {}",
                kind.name(),
                ex.sentence.id()
            );
        }
    }
    let (_, stats) = train_with_stats(ModelKind::ArcFactored, Capacity::Large, &data, &config).unwrap();
    assert_eq!(stats.last_epoch_errors, 0);
}

#[test]
fn data_fraction_selects_the_rounded_share() {
    let data = synth::dependency_dataset(50, 4, Split::Train, "d");
    for (fraction, expected) in [(1.0, 50), (0.5, 25), (0.31, 16), (0.001, 1)] {
        let config = TrainConfig {
            epochs: 1,
            data_fraction: fraction,
            ..TrainConfig::default()
        };
        let (_, stats) = train_with_stats(ModelKind::ArcFactored, Capacity::Small, &data, &config).unwrap();
        assert_eq!(stats.examples_used, expected, "fraction {}", fraction);
    }
    for fraction in [0.0, 1.5, f64::NAN] {
        let config = TrainConfig {
            data_fraction: fraction,
            ..TrainConfig::default()
        };
        assert!(train(ModelKind::ArcFactored, Capacity::Small, &data, &config).is_err());
    }
}

#[test]
fn training_is_a_function_of_the_seed() {
    let data = synth::dependency_dataset(60, 5, Split::Train, "d");
    for kind in [ModelKind::ArcFactored, ModelKind::ActionFactored] {
        let config = |seed| TrainConfig {
            epochs: 2,
            seed,
            data_fraction: 0.8,
            ..TrainConfig::default()
        };
        let a = train(kind, Capacity::Small, &data, &config(3)).unwrap();
        let b = train(kind, Capacity::Small, &data, &config(3)).unwrap();
        let c = train(kind, Capacity::Small, &data, &config(4)).unwrap();
        assert_eq!(a.weights().sorted(), b.weights().sorted());
        assert_ne!(a.weights().sorted(), c.weights().sorted());
    }
}

#[test]
fn saved_models_predict_and_score_identically() {
    let dir = tempfile::tempdir().unwrap();
    let dep_train = synth::dependency_dataset(80, 6, Split::Train, "d");
    let dep_test = synth::dependency_dataset(30, 7, Split::Test, "t");
    let sem_train = synth::semantic_dataset(80, 6, Split::Train, "s");
    let sem_test = synth::semantic_dataset(30, 7, Split::Test, "u");
    let config = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let cases = [
        (ModelKind::ArcFactored, &dep_train, &dep_test),
        (ModelKind::ActionFactored, &dep_train, &dep_test),
        (ModelKind::ActionFactored, &sem_train, &sem_test),
    ];
    for (i, (kind, train_set, test)) in cases.into_iter().enumerate() {
        let model = train(kind, Capacity::Large, train_set, &config).unwrap();
        let path = dir.path().join(format!("m{}.bin", i));
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);
        for ex in test.iter() {
            let pred = model.predict(&ex.sentence).unwrap();
            assert_eq!(loaded.predict(&ex.sentence).unwrap(), pred);
            assert_eq!(
                loaded.structure_score(&ex.sentence, &pred).unwrap().to_bits(),
                model.structure_score(&ex.sentence, &pred).unwrap().to_bits()
            );
        }
    }
}

#[test]
fn corrupt_model_files_are_rejected() {
    let model = train(ModelKind::ArcFactored, Capacity::Small, &toy(), &TrainConfig::default()).unwrap();
    let mut bytes = Vec::new();
    backcompat::scoring::write_model(&mut bytes, &model).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] ^= 0xff;
    assert!(read_model(&bad_magic[..]).is_err());
    assert!(read_model(&bytes[..bytes.len() - 3]).is_err());
    assert_eq!(read_model(&bytes[..]).unwrap(), model);
}
