fn main() {
    std::process::exit(cstirap::cli::run(std::env::args_os()));
}
