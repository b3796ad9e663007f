fn main() {
    std::process::exit(hamtopo::cli::main_with_args(std::env::args_os()));
}
