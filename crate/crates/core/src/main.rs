fn main() -> std::process::ExitCode {
    woundnet::cli::main_with_args(std::env::args_os())
}
