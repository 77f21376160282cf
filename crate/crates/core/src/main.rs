fn main() {
    std::process::exit(cirsim::cli::main());
}
