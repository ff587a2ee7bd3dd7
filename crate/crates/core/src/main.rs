fn main() {
    std::process::exit(ompt::cli::run(std::env::args_os()));
}
