fn main() {
    std::process::exit(r1glm::cli::run(std::env::args_os()));
}
