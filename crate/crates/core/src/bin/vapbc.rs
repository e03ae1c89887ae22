fn main() {
    std::process::exit(vapbc::cli::run());
}
