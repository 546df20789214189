fn main() {
    std::process::exit(bdry::cli::run());
}
