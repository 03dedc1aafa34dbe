fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(relloc::cli::main_with_args(std::env::args_os()))
}
