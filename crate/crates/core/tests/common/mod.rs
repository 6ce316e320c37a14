//! Helpers shared by the integration test targets: a deliberately naive FCM
//! oracle, frozen reference tables and scripted-session plumbing.
#![allow(dead_code)]

use pta_core::fcm::{FcmModel, SquashSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FOUR_CONCEPT_CONCEPTS: [&str; 4] = ["C1", "C2", "C3", "C4"];

pub const FOUR_CONCEPT_E: [[f64; 4]; 4] = [
    [0.0, 1.0, 1.0, 0.0],
    [0.0, 0.0, 1.0, -1.0],
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
];

/// One bivalent update (threshold 0.5) from each of the 16 binary start
/// states, worked out by hand as column sums of the active rows plus the
/// state itself.
pub const FOUR_CONCEPT_NEXT: [([u8; 4], [u8; 4]); 16] = [
    ([0, 0, 0, 0], [0, 0, 0, 0]),
    ([0, 0, 0, 1], [0, 0, 1, 1]),
    ([0, 0, 1, 0], [0, 0, 1, 0]),
    ([0, 0, 1, 1], [0, 0, 1, 1]),
    ([0, 1, 0, 0], [0, 1, 1, 0]),
    ([0, 1, 0, 1], [0, 1, 1, 0]),
    ([0, 1, 1, 0], [0, 1, 1, 0]),
    ([0, 1, 1, 1], [0, 1, 1, 0]),
    ([1, 0, 0, 0], [1, 1, 1, 0]),
    ([1, 0, 0, 1], [1, 1, 1, 1]),
    ([1, 0, 1, 0], [0, 1, 1, 0]),
    ([1, 0, 1, 1], [0, 1, 1, 1]),
    ([1, 1, 0, 0], [1, 1, 1, 0]),
    ([1, 1, 0, 1], [1, 1, 1, 0]),
    ([1, 1, 1, 0], [0, 1, 1, 0]),
    ([1, 1, 1, 1], [0, 1, 1, 0]),
];

pub fn four_concept_model() -> FcmModel {
    FcmModel::new(
        FOUR_CONCEPT_CONCEPTS.iter().map(|s| s.to_string()).collect(),
        FOUR_CONCEPT_E.iter().map(|r| r.to_vec()).collect(),
        SquashSpec::bivalent(),
    )
    .unwrap()
}

/// Two pairs that switch each other off and the other pair on.
pub const TWO_CYCLE_W: [[f64; 4]; 4] = [
    [0.0, -1.0, 1.0, 0.0],
    [-1.0, 0.0, 0.0, 1.0],
    [1.0, 0.0, 0.0, -1.0],
    [0.0, 1.0, -1.0, 0.0],
];

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i}")).collect()
}

fn sig(lambda: f64, x: f64) -> f64 {
    1.0 / (1.0 + (-lambda * x).exp())
}

/// Straight-line sigmoid update, column by column.
pub fn oracle_step(w: &[Vec<f64>], lambda: f64, a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0; n];
    for j in 0..n {
        let mut s = a[j];
        for i in 0..n {
            s += a[i] * w[i][j];
        }
        out[j] = sig(lambda, s);
    }
    out
}

/// Iterates [`oracle_step`] with the same stopping rule as the engine.
pub fn oracle_fixed_point(
    w: &[Vec<f64>],
    lambda: f64,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, usize, bool) {
    let mut a = start.to_vec();
    for k in 1..=max_iter {
        let b = oracle_step(w, lambda, &a);
        let mut d: f64 = 0.0;
        for i in 0..a.len() {
            d = d.max((b[i] - a[i]).abs());
        }
        a = b;
        if d < tol {
            return (a, k, true);
        }
    }
    (a, max_iter, false)
}

/// Random sigmoid model with at most `max_n` concepts and a start state in
/// [0, 1].
pub fn random_model(rng: &mut ChaCha8Rng, max_n: usize) -> (Vec<Vec<f64>>, f64, Vec<f64>) {
    let n = rng.random_range(1..=max_n);
    let mut w = vec![vec![0.0; n]; n];
    for (i, row) in w.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if i != j && rng.random_bool(0.6) {
                *cell = rng.random_range(-1.0..=1.0);
            }
        }
    }
    let lambda = rng.random_range(0.2..3.0);
    let start = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
    (w, lambda, start)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

use pta_core::play::JournalEntry;

/// One line per journal entry: `seq type at label`, with the goal-net path
/// appended for cycles. Assessment floats are left out so the golden files
/// stay readable.
pub fn journal_shape(journal: &[JournalEntry]) -> String {
    let mut out = String::new();
    for (seq, e) in journal.iter().enumerate() {
        out.push_str(&format!("{seq} {} {} {}", e.type_name(), e.at(), e.label()));
        if let JournalEntry::Cycle { path, .. } = e {
            out.push_str(" | ");
            out.push_str(&path.join(" > "));
        }
        out.push('\n');
    }
    out
}

/// Compares `actual` with the file under `tests/golden/`, or rewrites the file
/// when `PTA_BLESS` is set.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("PTA_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        let first = expected
            .lines()
            .zip(actual.lines())
            .position(|(a, b)| a != b)
            .unwrap_or(expected.lines().count().min(actual.lines().count()));
        Err(format!(
            "{name} differs from golden at line {first}: expected {:?}, got {:?}",
            expected.lines().nth(first),
            actual.lines().nth(first)
        ))
    }
}

/// Index of the first cycle entry whose path contains `step`.
pub fn cycle_with(journal: &[JournalEntry], step: &str) -> Option<usize> {
    journal
        .iter()
        .position(|e| matches!(e, JournalEntry::Cycle { path, .. } if path.iter().any(|p| p == step)))
}

pub fn reasoning_of(e: &JournalEntry) -> Option<String> {
    match e {
        JournalEntry::Cycle { .. } => Some(e.label()),
        _ => None,
    }
}
