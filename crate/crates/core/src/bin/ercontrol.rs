fn main() {
    std::process::exit(ercontrol::cli::main_with_args(std::env::args_os()));
}
