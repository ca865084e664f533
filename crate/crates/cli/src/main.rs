fn main() {
    std::process::exit(hvgan_cli::main_with_args(std::env::args_os()));
}
