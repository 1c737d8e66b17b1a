fn main() -> std::process::ExitCode {
    arnet::cli::main_from_args(std::env::args_os())
}
