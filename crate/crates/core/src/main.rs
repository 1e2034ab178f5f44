fn main() {
    std::process::exit(mcrkit::cli::main_with_args(std::env::args_os()));
}
