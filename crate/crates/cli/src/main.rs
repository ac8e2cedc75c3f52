use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(wrangle_cli::run(std::env::args_os()))
}
