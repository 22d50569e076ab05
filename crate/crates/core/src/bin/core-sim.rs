fn main() -> std::process::ExitCode {
    core_sim::cli::main()
}
