fn main() {
    std::process::exit(sturm_core::cli::main_with_args(std::env::args_os()));
}
