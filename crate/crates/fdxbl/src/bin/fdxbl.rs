fn main() {
    std::process::exit(fdxbl::harness::cli::run(std::env::args()));
}
