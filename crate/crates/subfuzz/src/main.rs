fn main() {
    std::process::exit(subfuzz::cli::main_with_args(std::env::args_os()));
}
