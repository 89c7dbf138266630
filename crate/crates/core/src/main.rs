fn main() {
    std::process::exit(porestack::cli::run_from(std::env::args_os()));
}
