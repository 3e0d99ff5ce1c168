fn main() {
    std::process::exit(logmarkov::cli::run(std::env::args_os()));
}
