fn main() {
    std::process::exit(trustfed::cli::cli_run(std::env::args_os()));
}
