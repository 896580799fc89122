use std::process::ExitCode;

fn main() -> ExitCode {
    let report = twoport_cli::run(std::env::args());
    ExitCode::from(report.exit_code.clamp(0, 255) as u8)
}
