fn main() -> std::process::ExitCode {
    fpm_core::cli::main()
}
