fn main() {
    std::process::exit(forge_core::cli::run(std::env::args_os()));
}
