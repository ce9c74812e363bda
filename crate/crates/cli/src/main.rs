fn main() {
    std::process::exit(driftlens_cli::run(std::env::args_os()));
}
