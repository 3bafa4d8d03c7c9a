fn main() {
    std::process::exit(mgnets::cli::main_with_args(std::env::args_os()));
}
