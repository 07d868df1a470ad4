fn main() {
    std::process::exit(tilefuse::cli::main_with_args(std::env::args_os()));
}
