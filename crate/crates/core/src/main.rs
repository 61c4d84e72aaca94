fn main() {
    std::process::exit(spinkac::cli::run(std::env::args_os()));
}
