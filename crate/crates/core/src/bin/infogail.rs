fn main() -> std::process::ExitCode {
    infogail::cli::main()
}
