fn main() -> std::process::ExitCode {
    osda::cli::main()
}
