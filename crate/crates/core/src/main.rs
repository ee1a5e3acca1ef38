fn main() {
    std::process::exit(prp::cli::run(std::env::args_os()));
}
