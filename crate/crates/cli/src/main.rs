use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(stockcast_cli::run(std::env::args_os()))
}
