fn main() {
    std::process::exit(rfm_nonlin::cli::run(std::env::args_os()));
}
