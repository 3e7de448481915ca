fn main() -> std::process::ExitCode {
    exoar_service::cli::main()
}
