fn main() {
    std::process::exit(cartimark::cli::run(std::env::args_os()));
}
