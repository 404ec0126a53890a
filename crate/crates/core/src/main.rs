fn main() {
    std::process::exit(lean_collab::cli::main());
}
