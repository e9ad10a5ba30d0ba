fn main() {
    std::process::exit(abaopt::harness::cli::dispatch(std::env::args()));
}
