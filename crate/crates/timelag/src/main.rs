fn main() {
    std::process::exit(timelag::cli::run(std::env::args_os()));
}
