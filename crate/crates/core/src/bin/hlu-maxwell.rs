fn main() {
    std::process::exit(hlu_maxwell::cli::main_with_args(std::env::args_os()));
}
