use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(gowers_lcc::cli::main_with_args(std::env::args_os()))
}
