fn main() {
    std::process::exit(rodeo_core::cli::run_cli(std::env::args()));
}
