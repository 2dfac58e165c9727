fn main() {
    std::process::exit(dissipacert::cli::main_with_args(std::env::args_os()));
}
