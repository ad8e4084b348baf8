use std::process::ExitCode;

fn main() -> ExitCode {
    cosify::cli::main_with_args(std::env::args_os())
}
