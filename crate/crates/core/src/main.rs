fn main() {
    std::process::exit(uaav::cli::run());
}
