mod common;

use proptest::prelude::*;

use common::random_dag;
use taxoorder::eval::{gen_synthetic, SyntheticConfig};
use taxoorder::graph::Taxonomy;
use taxoorder::scorer::{sample_instance, train, ScorerError, TrainConfig};
use taxoorder::seed;

#[test]
fn default_config_lowers_the_loss() {
    let corpus = gen_synthetic(&SyntheticConfig::new(200, 3, 0.3, 32, 1)).unwrap();
    let out = train(&corpus.taxonomy, &corpus.id_store(), &TrainConfig::default()).unwrap();
    let (first, last) = (out.epoch_losses[0], *out.epoch_losses.last().unwrap());
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn training_is_bitwise_reproducible() {
    let corpus = gen_synthetic(&SyntheticConfig::new(80, 3, 0.3, 16, 2)).unwrap();
    let store = corpus.id_store();
    let cfg = TrainConfig {
        hidden: 16,
        max_epochs: 8,
        learning_rate: 0.1,
        seed: 42,
        ..TrainConfig::default()
    };
    let a = train(&corpus.taxonomy, &store, &cfg).unwrap();
    let b = train(&corpus.taxonomy, &store, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.epoch_losses, b.epoch_losses);
    let other = train(&corpus.taxonomy, &store, &TrainConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a.params, other.params);
}

#[test]
fn huge_learning_rate_reports_non_finite_loss() {
    let corpus = gen_synthetic(&SyntheticConfig::new(40, 3, 0.3, 8, 3)).unwrap();
    let cfg = TrainConfig {
        hidden: 8,
        learning_rate: 1e300,
        max_epochs: 50,
        ..TrainConfig::default()
    };
    let err = train(&corpus.taxonomy, &corpus.id_store(), &cfg).unwrap_err();
    assert!(matches!(err, ScorerError::NonFiniteLoss { .. }), "{err}");
}

proptest! {
    #[test]
    fn negatives_avoid_the_child_and_its_ancestors(s in 0u64..10_000, n in 1usize..5) {
        let mut rng = seed::rng(s);
        let t = Taxonomy::new(random_dag(&mut rng, 12, 0.25)).unwrap();
        for child in t.nodes() {
            if t.in_degree(child) == 0 {
                continue;
            }
            let Ok(inst) = sample_instance(&t, child, n, &mut rng) else { continue };
            let anc = t.ancestors(child).unwrap();
            prop_assert!(t.has_edge(&inst.parent, child));
            prop_assert_eq!(inst.negatives.len(), n);
            for neg in &inst.negatives {
                prop_assert!(neg != child && !anc.contains(neg));
            }
        }
    }
}
