fn main() {
    std::process::exit(greenlearn::cli::run(std::env::args_os()));
}
