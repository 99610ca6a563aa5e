fn main() {
    std::process::exit(c3rf::cli::main_with_args(std::env::args_os()));
}
