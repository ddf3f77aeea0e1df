fn main() -> std::process::ExitCode {
    ftgcs::cli::main()
}
