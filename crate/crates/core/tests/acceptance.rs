//! One PASS/FAIL line per acceptance check, at the tolerances of the suite.

use collapselab::{par, verify};

fn main() {
    par::set_threads(1);
    let cfg = verify::acceptance_config();
    let report = match verify::run_suite(&cfg) {
        Ok(r) => r,
        Err(e) => {
            println!("FAIL suite aborted: {e}");
            std::process::exit(1);
        }
    };
    for c in &report.checks {
        println!("{}", c.line());
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    println!("acceptance: {} checks, {} failed, {:.1} s", report.checks.len(), failed, report.seconds);
    if failed > 0 {
        std::process::exit(1);
    }
}
