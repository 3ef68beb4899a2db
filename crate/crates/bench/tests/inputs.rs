use stancebench::promptlab::build_prompt_set;
use stancebench_bench::{synthetic_corpus, synthetic_split};

#[test]
fn bench_split_supports_the_full_grid() {
    let split = synthetic_split(300, 11);
    let prompts = build_prompt_set(&split, 11).unwrap();
    assert_eq!(prompts.len(), split.test.len() * 42);
}

#[test]
fn corpus_ids_are_unique() {
    let posts = synthetic_corpus(500);
    let ids: std::collections::HashSet<_> = posts.iter().map(|p| &p.post_id).collect();
    assert_eq!(ids.len(), 500);
}
