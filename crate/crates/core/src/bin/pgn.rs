fn main() {
    std::process::exit(pgn::cli::main());
}
