//! Pool growth from the seed fixture with the scripted rewriter.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenegen_core::evolve::{
    evolve, evolve_with, read_pool, validate_description, DescriptionRecord, EvolveOptions, MinHashParams,
};
use scenegen_core::llm::{Gateway, ScriptedBackend};
use scenegen_core::scene::ObjectLibrary;

fn seeds() -> Vec<DescriptionRecord> {
    let f = std::fs::File::open(concat!(env!("CARGO_MANIFEST_DIR"), "/data/seeds.jsonl")).unwrap();
    read_pool(BufReader::new(f), MinHashParams::default()).unwrap()
}

fn gateway(seed: u64) -> Gateway {
    Gateway::new(Arc::new(ScriptedBackend::new(seed, ObjectLibrary::default())))
}

#[test]
fn seeds_are_valid() {
    let lib = ObjectLibrary::default();
    let pool = seeds();
    assert_eq!(pool.len(), 20);
    for d in &pool {
        let r = validate_description(&d.text, &lib);
        assert!(r.ok, "{}: {}", d.text, r.render());
    }
}

#[test]
fn twenty_seeds_grow_to_a_hundred() {
    let lib = ObjectLibrary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let out = evolve(seeds(), 100, &lib, &gateway(11), &EvolveOptions::default(), &mut rng).unwrap();
    assert!(!out.budget_exhausted, "stopped at {}", out.pool.len());
    assert_eq!(out.pool.len(), 100);

    let ids: BTreeMap<&str, &DescriptionRecord> = out.pool.iter().map(|r| (r.id.as_str(), r)).collect();
    assert_eq!(ids.len(), 100, "ids are unique");
    for r in &out.pool {
        // lineage reaches a seed
        let mut cur = r;
        let mut steps = 0;
        while let Some(p) = &cur.parent_id {
            cur = ids.get(p.as_str()).expect("parent in pool");
            steps += 1;
            assert!(steps <= 100, "cycle");
        }
        assert_eq!(cur.generation, 0);
        assert_eq!(r.generation as usize, steps);
        if r.parent_id.is_some() {
            assert!(validate_description(&r.text, &lib).ok, "{}", r.text);
            assert!(r.method.is_some());
        }
    }
}

#[test]
fn same_seed_same_pool() {
    let lib = ObjectLibrary::default();
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        evolve(seeds(), 40, &lib, &gateway(3), &EvolveOptions::default(), &mut rng).unwrap().pool
    };
    assert_eq!(run(), run());
}

#[test]
fn target_at_or_below_seed_count_is_a_no_op() {
    let lib = ObjectLibrary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = evolve(seeds(), 5, &lib, &gateway(0), &EvolveOptions::default(), &mut rng).unwrap();
    assert_eq!(out.pool, seeds());
    assert_eq!(out.attempts, 0);
}

#[test]
fn rejecting_everything_exhausts_the_budget() {
    let lib = ObjectLibrary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let opts = EvolveOptions {
        max_iterations: 30,
        ..EvolveOptions::default()
    };
    let out = evolve_with(seeds(), 25, &lib, &gateway(0), &opts, &mut rng, &|_| false).unwrap();
    assert!(out.budget_exhausted);
    assert_eq!(out.pool.len(), 20);
    assert_eq!(out.attempts, 30);
}
