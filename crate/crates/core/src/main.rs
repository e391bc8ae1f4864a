fn main() {
    std::process::exit(orthokit::cli::run_from_args(std::env::args_os()));
}
