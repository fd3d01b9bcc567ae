fn main() {
    std::process::exit(asip::cli::main());
}
