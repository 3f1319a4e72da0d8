fn main() {
    std::process::exit(mednli::cli::run(std::env::args_os()));
}
