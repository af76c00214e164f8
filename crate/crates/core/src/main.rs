fn main() {
    std::process::exit(submax::cli::run(std::env::args_os()));
}
