fn main() {
    std::process::exit(moire::cli::main_with_args(std::env::args_os()));
}
