fn main() {
    std::process::exit(subtrack::cli::run(std::env::args_os()));
}
