fn main() {
    std::process::exit(vecsel::cli::run(std::env::args_os()));
}
