use std::process::ExitCode;

fn main() -> ExitCode {
    distexp::cli::main_with_args(std::env::args_os())
}
