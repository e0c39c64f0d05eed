//! One PASS/FAIL line per criterion. Pass criterion ids as arguments to run
//! a subset, e.g. `cargo test --test acceptance -- 4 7`.

use std::process::ExitCode;

use mmab_core::acceptance;

fn main() -> ExitCode {
    let ids: Vec<u8> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let ids = if ids.is_empty() {
        (1..=13).collect()
    } else {
        ids
    };
    let mut failed = 0;
    for id in ids {
        let start = std::time::Instant::now();
        let o = acceptance::criterion(id);
        println!("{o} ({:.1}s)", start.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
