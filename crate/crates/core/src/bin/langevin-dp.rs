use std::process::ExitCode;

fn main() -> ExitCode {
    langevin_dp::cli::main_with(std::env::args_os())
}
