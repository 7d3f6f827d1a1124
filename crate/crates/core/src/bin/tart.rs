fn main() {
    std::process::exit(tart::cli::main());
}
