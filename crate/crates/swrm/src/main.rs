use std::process::ExitCode;

fn main() -> ExitCode {
    swrm::cli::main_entry()
}
