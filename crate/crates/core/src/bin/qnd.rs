fn main() {
    std::process::exit(qnd_core::cli::main_with_args(std::env::args_os()));
}
