fn main() {
    std::process::exit(mixed_dynkin::cli::run(std::env::args_os()));
}
