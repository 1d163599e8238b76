//! Shared helpers for the integration suites.

/// Seeds used for the multi-seed statistical criteria.
pub const ACCEPTANCE_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Print one PASS/FAIL line per criterion and assert it.
pub fn criterion(number: u32, description: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[{verdict}] criterion {number}: {description} — {detail}");
    assert!(pass, "criterion {number} failed: {detail}");
}

pub fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    values[values.len() / 2]
}
