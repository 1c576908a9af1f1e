fn main() {
    std::process::exit(lcirl::cli::main());
}
