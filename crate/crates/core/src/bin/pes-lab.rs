fn main() -> std::process::ExitCode {
    pes_lab::cli::main_with_args(std::env::args_os())
}
