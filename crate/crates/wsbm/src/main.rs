fn main() {
    std::process::exit(wsbm::cli::run(std::env::args_os()));
}
