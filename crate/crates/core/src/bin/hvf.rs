fn main() {
    std::process::exit(hormander::cli::run(std::env::args_os()));
}
