fn main() {
    std::process::exit(auction_valuation::cli::main());
}
