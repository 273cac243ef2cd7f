fn main() {
    std::process::exit(mfit::cli::run(std::env::args_os()));
}
