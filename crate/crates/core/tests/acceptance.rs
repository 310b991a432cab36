//! One line per acceptance criterion; exits non-zero if any fails.

use icurisk_core::acceptance::{run_criterion, CRITERIA};

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, _) in CRITERIA {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || f == &id.to_string()) {
            continue;
        }
        let result = run_criterion(id);
        println!("{result}");
        failed += usize::from(!result.passed);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
