fn main() {
    std::process::exit(coref_adapt::cli::main_with_args(std::env::args_os()));
}
