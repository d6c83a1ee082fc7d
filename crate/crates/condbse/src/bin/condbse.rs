fn main() {
    std::process::exit(condbse::cli::run(std::env::args_os()));
}
