use std::process::ExitCode;

fn main() -> ExitCode {
    dagpo::cli::main()
}
