fn main() {
    std::process::exit(ndf::cli::main());
}
