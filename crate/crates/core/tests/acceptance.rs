//! One PASS/FAIL line per acceptance criterion, followed by the
//! reproducibility run of the binary.

use std::process::Command;
use std::time::{Duration, Instant};

use spinkac::verify::{run_criterion, VerifyOptions, CRITERIA};

fn verify_quick() -> (Option<i32>, Vec<u8>, Duration) {
    let t0 = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_spinkac"))
        .args(["verify-all", "--quick"])
        .output()
        .expect("binary runs");
    (out.status.code(), out.stdout, t0.elapsed())
}

fn main() {
    let opts = VerifyOptions::default();
    let mut failed = 0;
    for (id, _, _) in CRITERIA.iter().take(12) {
        let o = run_criterion(*id, &opts).expect("criterion id in range");
        println!("{}", o.line());
        failed += !o.passed as usize;
    }
    // criterion 13 adds the end-to-end runs to the in-process pool check
    let pools = run_criterion(13, &opts).expect("criterion id in range");
    let (code_a, out_a, wall_a) = verify_quick();
    let (code_b, out_b, wall_b) = verify_quick();
    let limit = Duration::from_secs(600);
    let ok = pools.passed && code_a == Some(0) && code_b == Some(0) && out_a == out_b && wall_a.max(wall_b) < limit;
    println!(
        "[{}] 13 reproducibility      pools {}/{}; verify-all --quick exit {:?}/{:?}, identical stdout {}, wall {:.1}s/{:.1}s (< 600s)",
        if ok { "PASS" } else { "FAIL" },
        pools.checks - pools.failed,
        pools.checks,
        code_a,
        code_b,
        out_a == out_b,
        wall_a.as_secs_f64(),
        wall_b.as_secs_f64()
    );
    failed += !ok as usize;
    println!("{}/13 criteria passed", 13 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
