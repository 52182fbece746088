fn main() -> std::process::ExitCode {
    slp_core::cli::main()
}
