use std::process::ExitCode;

fn main() -> ExitCode {
    vlc_chanest::cli::run()
}
