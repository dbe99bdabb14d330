use std::process::exit;
use std::time::Instant;

use amo_cli::{emit, parse_plan, run_plan, CliError, Status};

fn fail(e: CliError) -> ! {
    if let CliError::Usage(_) = e {
        eprintln!("{e}\n\n{}", amo_cli::plan::usage());
    } else {
        eprintln!("{e}");
    }
    exit(e.exit_code())
}

fn main() {
    let plan = match parse_plan(std::env::args_os()) {
        Ok(p) => p,
        Err(CliError::Help(text)) => {
            print!("{text}");
            exit(0)
        }
        Err(e) => fail(e),
    };
    let start = Instant::now();
    let out = run_plan(&plan).unwrap_or_else(|e| fail(e));
    let wall = start.elapsed().as_secs_f64();
    if let Err(e) = emit(&plan, &out, wall) {
        fail(e)
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&out.summary).expect("summary serializes")
    );
    eprintln!("artifacts in {}", plan.out.display());
    if let Status::Fail(why) = &out.status {
        eprintln!("check failed: {why}");
    }
    exit(out.status.exit_code())
}
