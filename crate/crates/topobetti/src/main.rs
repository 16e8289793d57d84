fn main() {
    std::process::exit(topobetti::cli::run(std::env::args_os()));
}
