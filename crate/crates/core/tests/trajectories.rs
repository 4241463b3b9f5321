//! Trajectory collection over an evolved pool.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::sync::Arc;

use scenegen_core::evolve::{
    collect_trajectories, read_pool, MinHashParams, Split, TrajectoryOptions, TrajectoryRecord, TrajectoryTask,
};
use scenegen_core::llm::{Gateway, Role, ScriptedBackend};
use scenegen_core::scene::ObjectLibrary;

fn collect(rate: f64) -> Vec<TrajectoryRecord> {
    let f = std::fs::File::open(concat!(env!("CARGO_MANIFEST_DIR"), "/data/seeds.jsonl")).unwrap();
    let pool = read_pool(BufReader::new(f), MinHashParams::default()).unwrap();
    let lib = ObjectLibrary::default();
    let strong = Gateway::new(Arc::new(ScriptedBackend::new(5, lib.clone())));
    let weak = Gateway::new(Arc::new(ScriptedBackend::weak(5, lib.clone(), rate)));
    collect_trajectories(&pool, &strong, &weak, &lib, &TrajectoryOptions::default())
}

fn count(recs: &[TrajectoryRecord], t: TrajectoryTask) -> usize {
    recs.iter().filter(|r| r.task == t).count()
}

#[test]
fn verify_count_is_assign_plus_reassign() {
    let recs = collect(0.5);
    let assign = count(&recs, TrajectoryTask::Assign);
    let pos = count(&recs, TrajectoryTask::VerifyPos);
    let neg = count(&recs, TrajectoryTask::VerifyNeg);
    let reassign = count(&recs, TrajectoryTask::Reassign);
    assert_eq!(assign, 20);
    assert_eq!(pos + neg, assign + reassign);
    assert!(neg > 0 && reassign > 0, "neg {neg}, reassign {reassign}");
    assert_eq!(neg, reassign);
}

#[test]
fn records_are_well_formed() {
    let recs = collect(0.5);
    for r in &recs {
        assert_eq!(r.messages.len(), r.loss_mask.len());
        assert_eq!(r.messages.last().unwrap().role, Role::Assistant);
        assert!(*r.loss_mask.last().unwrap());
        for (m, trained) in r.messages.iter().zip(&r.loss_mask) {
            assert!(!trained || m.role == Role::Assistant);
        }
        let label = r.messages.last().unwrap().content.trim_end().to_string();
        match r.task {
            TrajectoryTask::VerifyPos => assert!(label.ends_with("Error: No"), "{label}"),
            TrajectoryTask::VerifyNeg => assert!(label.ends_with("Error: Yes"), "{label}"),
            _ => {}
        }
    }
    let val = recs.iter().filter(|r| r.split == Split::Validation).count();
    assert_eq!(val, (recs.len() as f64 * 0.05).round() as usize);
    let ids: BTreeMap<&str, ()> = recs.iter().map(|r| (r.id.as_str(), ())).collect();
    assert_eq!(ids.len(), recs.len());
}

#[test]
fn collection_is_deterministic() {
    assert_eq!(collect(0.35), collect(0.35));
}
