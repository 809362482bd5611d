fn main() {
    std::process::exit(hqsvt::cli::main_with_args(std::env::args_os()));
}
