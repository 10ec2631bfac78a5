use std::process::ExitCode;

fn main() -> ExitCode {
    clusterfactor::cli::run()
}
