fn main() {
    std::process::exit(conic_flow::cli::main_with_args(std::env::args_os()));
}
