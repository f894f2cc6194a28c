fn main() {
    std::process::exit(spatialog::harness::cli::run(std::env::args_os()));
}
