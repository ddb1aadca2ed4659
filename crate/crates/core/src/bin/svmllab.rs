fn main() {
    std::process::exit(svmllab::cli::run(std::env::args_os()));
}
