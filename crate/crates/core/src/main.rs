fn main() {
    std::process::exit(gravlab::cli::main_with_env());
}
