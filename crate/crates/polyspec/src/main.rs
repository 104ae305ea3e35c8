fn main() {
    std::process::exit(polyspec::cli::run());
}
