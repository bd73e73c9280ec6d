fn main() {
    std::process::exit(framr_cli::main_with_args(std::env::args_os()));
}
