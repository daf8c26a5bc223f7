fn main() {
    std::process::exit(agc_core::cli::run(std::env::args_os()));
}
