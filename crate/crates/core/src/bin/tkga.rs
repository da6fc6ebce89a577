fn main() {
    std::process::exit(tkga_core::cli::run());
}
