fn main() {
    std::process::exit(rbmdyn::cli::main());
}
