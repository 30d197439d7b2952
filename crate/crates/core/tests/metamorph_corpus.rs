mod common;

use std::collections::BTreeSet;

use sentinel_core::corpus::{self, Language};
use sentinel_core::lexer;
use sentinel_core::metamorph::{self, RenameScope};
use sentinel_core::oracle::CheckerConfig;

fn all_scopes() -> BTreeSet<RenameScope> {
    RenameScope::ALL.into_iter().collect()
}

#[test]
fn every_corpus_variant_round_trips_with_fresh_names() {
    for parent in common::load_cases() {
        for seed in 1..=5 {
            let v = metamorph::generate_variant(&parent, seed, &all_scopes()).unwrap();
            assert_ne!(v.case.before, parent.before, "{}: seed {seed} changed nothing", parent.id);
            assert!(corpus::validate_case(&v.case).is_empty(), "{}", v.variant_id);
            let mut back = metamorph::apply_plan(&v.case, &v.plan.inverse()).unwrap();
            back.id = parent.id.clone();
            back.provenance = parent.provenance.clone();
            assert_eq!(back, parent, "{} does not invert", v.variant_id);
            for fresh in v.plan.identifier_map.values() {
                assert!(!lexer::is_reserved(parent.language, fresh), "{}: {fresh}", v.variant_id);
            }
            for pinned in &parent.pinned_identifiers {
                assert!(!v.plan.identifier_map.contains_key(pinned), "{}: pinned {pinned} renamed", v.variant_id);
            }
        }
    }
}

#[test]
fn python_and_c_variants_keep_oracle_statuses() {
    let checkers = CheckerConfig::default();
    for parent in common::load_cases().into_iter().filter(|c| c.language != Language::Java) {
        let tmp = tempfile::tempdir().unwrap();
        let ps = metamorph::static_status(&parent, &tmp.path().join("parent"), &checkers).unwrap();
        for seed in 1..=5 {
            let v = metamorph::generate_variant(&parent, seed, &all_scopes()).unwrap();
            let ws = tmp.path().join(format!("s{seed}"));
            let v = metamorph::verify_variant(v, ps, &ws, &checkers).unwrap();
            assert!(v.verified, "{}: {:?} vs {:?}", v.variant_id, v.variant_status, v.parent_status);
        }
    }
}

#[test]
fn persisted_variants_join_the_corpus_as_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let parent = common::case("rope_rename_to_keyword");
    let v = metamorph::generate_variant(&parent, 3, &metamorph::parse_scope("variables,numbers").unwrap()).unwrap();
    assert!(metamorph::is_variant_id(&v.variant_id));
    assert!(!metamorph::is_variant_id(&parent.id));
    metamorph::persist_variant(tmp.path(), &v).unwrap();
    assert_eq!(metamorph::load_variants(tmp.path()).unwrap(), vec![v]);
}
