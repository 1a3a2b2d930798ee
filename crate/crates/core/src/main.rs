fn main() {
    std::process::exit(fslhate::cli::main_with_args(std::env::args_os()));
}
