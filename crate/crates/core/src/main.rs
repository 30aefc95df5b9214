fn main() {
    std::process::exit(ctxagg::cli::main());
}
