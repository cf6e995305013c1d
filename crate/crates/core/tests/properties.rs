use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use passorder_core::autotune::{broadcast, minimize_pass_list, random_search};
use passorder_core::mini::interp::run;
use passorder_core::mini::{generate_corpus, parse_function};
use passorder_core::{Backend, CompileOutcome, MiniBackend, PassList, SearchBudget, SearchConfig, OZ};

fn arg_vectors(n: usize, seed: u64) -> Vec<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..16).map(|_| (0..n).map(|_| rng.gen::<u64>() >> rng.gen_range(0..64)).collect()).collect()
}

fn list_strategy() -> impl Strategy<Value = PassList> {
    let names: Vec<String> = MiniBackend::vocabulary().passes().to_vec();
    (prop::collection::vec(prop::sample::select(names), 0..8), any::<bool>(), any::<prop::sample::Index>()).prop_map(
        |(mut items, with_oz, at)| {
            if with_oz {
                let i = at.index(items.len() + 1);
                items.insert(i, OZ.to_string());
            }
            PassList::new(items)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_lists_preserve_semantics_and_validity(seed in 0u64..1_000, list in list_strategy()) {
        let b = MiniBackend::new();
        let f = &generate_corpus(1, seed)[0];
        let before = parse_function(f.normalized_text.as_str()).unwrap();
        let CompileOutcome::Success { optimized_ir, instruction_count } =
            b.apply_pass_list(&f.normalized_text, &list).unwrap() else { panic!("generated IR compiles") };
        prop_assert!(b.verify_ir(optimized_ir.as_str()).unwrap().is_valid());
        prop_assert!(instruction_count <= f.instruction_count);
        let after = parse_function(optimized_ir.as_str()).unwrap();
        for args in arg_vectors(before.params.len(), seed) {
            prop_assert_eq!(run(&before, &args).unwrap(), run(&after, &args).unwrap());
        }
    }

    #[test]
    fn stages_never_regress(seed in 0u64..10_000, evals in 0u64..40) {
        let b = MiniBackend::new();
        let corpus = generate_corpus(3, seed);
        let cfg = SearchConfig { max_len: 6 };
        let mut results = BTreeMap::new();
        for f in &corpus {
            let r = random_search(f, &b, SearchBudget::Evaluations(evals), seed, cfg, None).unwrap();
            prop_assert!(r.best_count <= r.baseline_count);
            let m = minimize_pass_list(f, &b, &r.best_pass_list, seed).unwrap();
            prop_assert!(m.count <= r.best_count);
            let mut r = r;
            r.best_pass_list = m.pass_list;
            r.best_count = m.count;
            results.insert(f.id.clone(), r);
        }
        let before = results.clone();
        broadcast(&mut results, &corpus, &b).unwrap();
        for (id, r) in &results {
            prop_assert!(r.best_count <= before[id].best_count);
            prop_assert!(r.best_count <= r.baseline_count);
            let f = corpus.iter().find(|f| &f.id == id).unwrap();
            let actual = b.apply_pass_list(&f.normalized_text, &r.best_pass_list).unwrap().count();
            prop_assert_eq!(actual, Some(r.best_count));
        }
    }

    #[test]
    fn minimized_lists_are_one_minimal(seed in 0u64..10_000, list in list_strategy()) {
        prop_assume!(!list.is_empty());
        let b = MiniBackend::new();
        let f = &generate_corpus(1, seed)[0];
        let m = minimize_pass_list(f, &b, &list, seed).unwrap();
        let start = b.apply_pass_list(&f.normalized_text, &list).unwrap().count().unwrap();
        prop_assert!(m.count <= start);
        if m.pass_list.len() > 1 {
            for i in 0..m.pass_list.len() {
                let c = b.apply_pass_list(&f.normalized_text, &m.pass_list.without(i)).unwrap().count().unwrap();
                prop_assert!(c > m.count, "removing {} keeps {}", i, c);
            }
        }
    }
}
