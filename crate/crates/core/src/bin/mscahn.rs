fn main() {
    std::process::exit(mscahn::cli::main_with_args(std::env::args_os()));
}
