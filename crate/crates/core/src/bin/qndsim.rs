fn main() {
    std::process::exit(qndsim::cli::main_with_args(std::env::args_os()));
}
