fn main() {
    std::process::exit(otxai::cli::run_from(std::env::args_os()));
}
