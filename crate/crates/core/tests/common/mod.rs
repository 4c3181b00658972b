#![allow(dead_code)]

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const WORDS: &[&str] = &[
    "ang", "ng", "sa", "na", "ay", "mga", "ko", "mo", "ka", "ako", "siya", "kami", "po", "oo", "hindi",
    "talaga", "masarap", "maganda", "bahay", "pagkain", "kumain", "luto", "salamat", "kaibigan", "lugar",
    "bakasyon", "sobrang", "gusto", "pwede", "subukan", "ganda", "tingnan",
];

pub fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|t| t.to_string()).collect()
}

fn body(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(3..10);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(WORDS[rng.gen_range(0..WORDS.len())]);
    }
    match rng.gen_range(0..8) {
        0 => out.push_str("!!!"),
        1 => out.push('?'),
        2 => out.push_str(" https://example.com/x"),
        3 => out.push_str(" 😀"),
        _ => out.push('.'),
    }
    out
}

fn post(rng: &mut ChaCha8Rng, depth: usize) -> Value {
    let kids = if depth == 0 { 0 } else { rng.gen_range(1..=2) };
    let children: Vec<Value> = (0..kids).map(|_| post(rng, depth - 1)).collect();
    json!({"author": format!("u{}", rng.gen_range(0..50)), "body": body(rng), "children": children})
}

/// A JSONL thread dump with nested records, reproducible from `seed`.
pub fn thread_dump(seed: u64, threads: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for t in 0..threads {
        let depth = rng.gen_range(3..6);
        let record = json!({"thread_id": format!("t{t}"), "topic": post(&mut rng, depth)});
        let _ = writeln!(out, "{record}");
    }
    out
}
