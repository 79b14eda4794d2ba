use std::process::ExitCode;

fn main() -> ExitCode {
    relief_cli::run(std::env::args_os())
}
