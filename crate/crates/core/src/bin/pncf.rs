fn main() {
    std::process::exit(pncf::cli::run());
}
