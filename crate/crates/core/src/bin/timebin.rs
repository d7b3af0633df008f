fn main() {
    std::process::exit(timebin::cli::main_with_args(std::env::args_os()));
}
