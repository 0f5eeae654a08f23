fn main() {
    std::process::exit(sirdlab::cli::main_with_args(std::env::args_os()));
}
