fn main() {
    std::process::exit(invpulse::cli::run(std::env::args_os()));
}
