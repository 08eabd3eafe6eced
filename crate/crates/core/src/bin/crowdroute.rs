fn main() -> std::process::ExitCode {
    crowdroute::cli::main()
}
