fn main() {
    std::process::exit(ymr_cli::run(std::env::args_os()));
}
