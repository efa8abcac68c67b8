//! One line per acceptance criterion, `PASS name` or `FAIL name: reason`.
//! The lines go straight to the process's stdout, so they show even when the
//! test harness captures output. The test fails if any criterion fails.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

use common::checks;

fn count(n: usize, what: &str) -> Result<(), String> {
    match n {
        0 => Ok(()),
        n => Err(format!("{n} {what}")),
    }
}

type Check = Box<dyn Fn() -> Result<(), String>>;

#[test]
fn acceptance() {
    let criteria: Vec<(&str, Check)> = vec![
        ("string-completion-golden", Box::new(checks::successor_golden)),
        ("two-string-abstraction", Box::new(checks::two_string_abstraction)),
        ("reverse-string-slip", Box::new(checks::reversal_golden)),
        ("gemm-transform", Box::new(checks::gemm_golden)),
        ("api-migration", Box::new(checks::api_golden)),
        (
            "matching-oracle-equivalence",
            Box::new(|| {
                count(checks::full_search_mismatches(200), "full-search mismatches")?;
                count(checks::differential_mismatches(50), "differential mismatches")
            }),
        ),
        (
            "index-and-rollback",
            Box::new(|| count(checks::index_rollback_violations(1000), "violations")),
        ),
        (
            "naming-commutativity",
            Box::new(|| count(checks::naming_mismatches(50), "mismatches")),
        ),
        (
            "serialization-fixpoint",
            Box::new(|| {
                let bad = checks::fixpoint_failures();
                if bad.is_empty() {
                    Ok(())
                } else {
                    Err(format!("not a fixpoint: {bad:?}"))
                }
            }),
        ),
    ];
    let mut out = std::io::stdout();
    let mut failed = Vec::new();
    for (name, check) in &criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match result {
            Ok(()) => writeln!(out, "PASS {name}").unwrap(),
            Err(e) => {
                writeln!(out, "FAIL {name}: {e}").unwrap();
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
