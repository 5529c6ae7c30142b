use std::process::ExitCode;

fn main() -> ExitCode {
    let outcome = hingefit::cli::run_from_args(std::env::args_os());
    match outcome.exit_code {
        0 if outcome.artifacts_written.is_empty() => print!("{}", outcome.summary),
        0 => {
            eprintln!("{}", outcome.summary);
            for p in &outcome.artifacts_written {
                eprintln!("wrote {}", p.display());
            }
        }
        _ => eprintln!("{}", outcome.summary.trim_end()),
    }
    ExitCode::from(outcome.exit_code as u8)
}
