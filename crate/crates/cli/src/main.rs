fn main() {
    std::process::exit(hsumm_cli::main_with_args(std::env::args_os()));
}
