use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(critsys::cli::run(std::env::args_os()) as u8)
}
