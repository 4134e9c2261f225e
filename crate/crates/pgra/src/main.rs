fn main() -> std::process::ExitCode {
    pgra::cli::main()
}
