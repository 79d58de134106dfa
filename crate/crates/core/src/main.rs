fn main() {
    std::process::exit(sslab::cli::run_from_args(std::env::args_os()));
}
