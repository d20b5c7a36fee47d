fn main() {
    std::process::exit(cevsim::cli::run(std::env::args_os()));
}
